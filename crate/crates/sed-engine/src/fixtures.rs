//! Deterministic test substrate: scripted evaluators, random table models,
//! and procedurally generated trap models.
//!
//! A trap model is a scripted model whose greedy branch renders a wrong
//! answer while a slightly less probable branch renders the right one, with
//! the fork detectable by the ratio criterion. They are the smallest fixture
//! on which uncertainty-aware token selection visibly beats greedy search.

use std::collections::HashMap;
use std::sync::Arc;

use crate::core::{derive_seed, Context, DetRng, TokenId, Vocabulary};
use crate::harness::{extract_answer, BenchmarkItem, TaskFormat};
use crate::models::{Evaluator, LanguageModel, OracleEvaluator, TableEntry, TableModel};
use crate::Result;

type EvalFn = Box<dyn Fn(&str, &str) -> f64 + Send + Sync>;

/// Evaluator wrapping a plain closure.
pub struct FnEvaluator {
    f: EvalFn,
}

impl FnEvaluator {
    pub fn new(f: impl Fn(&str, &str) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl Evaluator for FnEvaluator {
    fn self_eval_probability(&self, question: &str, response: &str) -> Result<f64> {
        Ok((self.f)(question, response))
    }
}

fn hash_unit(seed: u64, domain: &str, question: &str, response: &str) -> f64 {
    let mut payload = Vec::with_capacity(question.len() + response.len() + 1);
    payload.extend_from_slice(question.as_bytes());
    payload.push(0x1f);
    payload.extend_from_slice(response.as_bytes());
    let h = derive_seed(seed, domain, &payload);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A pure pseudo-random evaluator: every (question, response) pair gets a
/// fixed probability in [0, 1) derived by hashing. Useful as an arbitrary
/// but reproducible judge.
pub struct HashEvaluator {
    seed: u64,
}

impl HashEvaluator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Evaluator for HashEvaluator {
    fn self_eval_probability(&self, question: &str, response: &str) -> Result<f64> {
        Ok(hash_unit(self.seed, "hash-eval", question, response))
    }
}

/// An oracle evaluator that answers truthfully with probability `q` per
/// question and inverts both judgments otherwise. The coin is keyed on the
/// question alone, so all candidates of one decode see a consistently
/// truthful or consistently inverted judge.
pub struct NoisyOracleEvaluator {
    inner: OracleEvaluator,
    q: f64,
    seed: u64,
}

impl NoisyOracleEvaluator {
    pub fn new(inner: OracleEvaluator, q: f64, seed: u64) -> Self {
        Self { inner, q, seed }
    }
}

impl Evaluator for NoisyOracleEvaluator {
    fn self_eval_probability(&self, question: &str, response: &str) -> Result<f64> {
        let truth = self.inner.self_eval_probability(question, response)?;
        let coin = hash_unit(self.seed, "noise", question, "");
        Ok(if coin < self.q { truth } else { 1.0 - truth })
    }
}

/// Dense weight vector from sparse (token, weight) pairs.
fn sparse(vocab: &Vocabulary, weights: &[(&str, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; vocab.len()];
    for (token, w) in weights {
        out[vocab.get(token).unwrap_or_else(|| panic!("fixture token {token}")).index()] = *w;
    }
    out
}

/// A random scripted model: vocabulary of 3 to 8 tokens (the last one eos),
/// a handful of random context rules, and a random default. Weight vectors
/// are near-uniform with occasional zeros, so chaotic points are frequent.
pub fn random_table_model(seed: u64) -> TableModel {
    let mut rng = DetRng::new(seed);
    let vocab_size = 3 + rng.next_below(6) as usize;
    let mut tokens: Vec<String> = (0..vocab_size - 1).map(|i| format!("t{i}")).collect();
    tokens.push("</s>".to_string());
    let vocab = Vocabulary::new(tokens, "</s>").expect("generated vocab is valid");

    let random_weights = |rng: &mut DetRng| loop {
        let w: Vec<f64> = (0..vocab_size)
            .map(|_| if rng.next_f64() < 0.25 { 0.0 } else { rng.next_f64() })
            .collect();
        if w.iter().any(|&x| x > 0.0) {
            return w;
        }
    };

    let default = random_weights(&mut rng);
    let entry_count = 2 + rng.next_below(5) as usize;
    let mut entries = Vec::with_capacity(entry_count);
    for _ in 0..entry_count {
        let len = 1 + rng.next_below(2) as usize;
        let context: Vec<TokenId> = (0..len)
            // Context keys over non-eos tokens; generation never continues
            // past eos anyway.
            .map(|_| TokenId(rng.next_below(vocab_size as u64 - 1) as u32))
            .collect();
        let weights = random_weights(&mut rng);
        entries.push(TableEntry { context, query: None, weights });
    }
    TableModel::new(vocab, entries, default).expect("generated model is valid")
}

/// A trap benchmark: one query-keyed model serving `n` trap questions, plus
/// the matching benchmark items whose keyed answer is `right`.
pub struct TrapFixture {
    pub model: TableModel,
    pub items: Vec<BenchmarkItem>,
    pub answer_key: HashMap<String, String>,
}

impl TrapFixture {
    /// Evaluator that scores a response 1.0 exactly when its bracketed
    /// answer matches the keyed one.
    pub fn oracle_evaluator(&self) -> OracleEvaluator {
        OracleEvaluator::new(
            self.answer_key.clone(),
            Arc::new(|response: &str| extract_answer(response, TaskFormat::FreeAnswer)),
        )
    }

    pub fn query_for(&self, item: &BenchmarkItem) -> Result<Context> {
        Ok(Context::new(self.model.vocabulary().tokenize(&item.question)?))
    }
}

/// Generates `n` plain traps: the greedy branch `A` runs through 0 to 2
/// filler tokens into `[[wrong]]`, the alternative branch `B` into
/// `[[right]]`, with the start split `A: p, B: 1-p` drawn so the ratio
/// criterion fires at threshold 0.8.
pub fn trap_family(n: usize, seed: u64) -> TrapFixture {
    let mut rng = DetRng::new(seed);
    let mut tokens: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    for t in ["A", "B", "f1", "f2", "g1", "g2", "[[wrong]]", "[[right]]", "</s>"] {
        tokens.push(t.to_string());
    }
    let vocab = Vocabulary::new(tokens, "</s>").expect("trap vocab");

    let mut entries = Vec::new();
    let mut items = Vec::new();
    let mut answer_key = HashMap::new();
    for i in 0..n {
        let question = format!("q{i}");
        let query = vec![vocab.get(&question).unwrap()];
        // p in (0.5, 0.5555]: greedy prefers A while R = (1-p)/p >= 0.8.
        let p = 0.5005 + 0.055 * rng.next_f64();
        entries.push(TableEntry {
            context: vec![],
            query: Some(query.clone()),
            weights: sparse(&vocab, &[("A", p), ("B", 1.0 - p)]),
        });

        let chain = |entries: &mut Vec<TableEntry>, branch: &str, fillers: &[&str], marker: &str| {
            let mut prev = branch.to_string();
            for f in fillers {
                entries.push(TableEntry {
                    context: vec![vocab.get(&prev).unwrap()],
                    query: Some(query.clone()),
                    weights: sparse(&vocab, &[(f, 1.0)]),
                });
                prev = f.to_string();
            }
            entries.push(TableEntry {
                context: vec![vocab.get(&prev).unwrap()],
                query: Some(query.clone()),
                weights: sparse(&vocab, &[(marker, 1.0)]),
            });
        };
        let wrong_fillers: &[&str] = match rng.next_below(3) {
            0 => &[],
            1 => &["f1"],
            _ => &["f1", "f2"],
        };
        let right_fillers: &[&str] = match rng.next_below(3) {
            0 => &[],
            1 => &["g1"],
            _ => &["g1", "g2"],
        };
        chain(&mut entries, "A", wrong_fillers, "[[wrong]]");
        chain(&mut entries, "B", right_fillers, "[[right]]");

        items.push(BenchmarkItem {
            id: format!("trap-{i}"),
            question: question.clone(),
            answer: "right".to_string(),
            format: TaskFormat::FreeAnswer,
        });
        answer_key.insert(question, "right".to_string());
    }
    for marker in ["[[wrong]]", "[[right]]"] {
        entries.push(TableEntry {
            context: vec![vocab.get(marker).unwrap()],
            query: None,
            weights: sparse(&vocab, &[("</s>", 1.0)]),
        });
    }
    let default = sparse(&vocab, &[("</s>", 1.0)]);
    let model = TableModel::new(vocab, entries, default).expect("trap model");
    TrapFixture { model, items, answer_key }
}

/// Traps where greedy and beam speculation diverge by construction: from the
/// greedy branch `A`, the actual greedy continuation renders `[[wrong]]`,
/// but a lower-probability side path `x -> [[right]]` has the best mean
/// log-probability, so beam speculation predicts a right answer that greedy
/// generation will never produce.
pub fn misalignment_trap_family(n: usize, seed: u64) -> TrapFixture {
    let mut rng = DetRng::new(seed);
    let mut tokens: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    for t in ["A", "B", "m", "x", "z", "w", "v", "[[wrong]]", "[[right]]", "</s>"] {
        tokens.push(t.to_string());
    }
    let vocab = Vocabulary::new(tokens, "</s>").expect("trap vocab");

    let mut entries = Vec::new();
    let mut items = Vec::new();
    let mut answer_key = HashMap::new();
    for i in 0..n {
        let question = format!("q{i}");
        let query = vec![vocab.get(&question).unwrap()];
        let p = 0.5005 + 0.055 * rng.next_f64();
        let rule = |context: &str, weights: &[(&str, f64)]| TableEntry {
            context: vec![vocab.get(context).unwrap()],
            query: Some(query.clone()),
            weights: sparse(&vocab, weights),
        };
        entries.push(TableEntry {
            context: vec![],
            query: Some(query.clone()),
            weights: sparse(&vocab, &[("A", p), ("B", 1.0 - p)]),
        });
        // Greedy after A: m (0.6) then z (0.34) then [[wrong]]. Beam instead
        // surfaces x -> [[right]] with mean ln(0.4)/3.
        entries.push(rule("A", &[("m", 0.6), ("x", 0.4)]));
        entries.push(rule("m", &[("z", 0.34), ("w", 0.33), ("v", 0.33)]));
        entries.push(rule("z", &[("[[wrong]]", 1.0)]));
        entries.push(rule("x", &[("[[right]]", 1.0)]));
        entries.push(rule("B", &[("[[right]]", 1.0)]));

        items.push(BenchmarkItem {
            id: format!("mistrap-{i}"),
            question: question.clone(),
            answer: "right".to_string(),
            format: TaskFormat::FreeAnswer,
        });
        answer_key.insert(question, "right".to_string());
    }
    for marker in ["[[wrong]]", "[[right]]"] {
        entries.push(TableEntry {
            context: vec![vocab.get(marker).unwrap()],
            query: None,
            weights: sparse(&vocab, &[("</s>", 1.0)]),
        });
    }
    let default = sparse(&vocab, &[("</s>", 1.0)]);
    let model = TableModel::new(vocab, entries, default).expect("misalignment trap model");
    TrapFixture { model, items, answer_key }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoders::greedy_decode;
    use crate::models::LanguageModel;

    #[test]
    fn random_models_are_valid_and_reproducible() {
        for seed in 0..20 {
            let a = random_table_model(seed);
            let b = random_table_model(seed);
            let ctx = Context::new(vec![]);
            let da = a.next_distribution(&ctx).unwrap();
            let db = b.next_distribution(&ctx).unwrap();
            assert_eq!(da.probs(), db.probs());
            assert!(a.vocabulary().len() >= 3 && a.vocabulary().len() <= 8);
        }
    }

    #[test]
    fn trap_family_greedy_always_wrong() {
        let fixture = trap_family(10, 99);
        for item in &fixture.items {
            let ctx = fixture.query_for(item).unwrap();
            let out = greedy_decode(&fixture.model, &ctx, 16).unwrap();
            let text = fixture.model.vocabulary().render(&out.tokens, " ");
            assert!(text.ends_with("[[wrong]]"), "greedy produced {text:?}");
        }
    }

    #[test]
    fn hash_evaluator_is_pure_and_bounded() {
        let eval = HashEvaluator::new(3);
        let a = eval.self_eval_probability("q", "r").unwrap();
        let b = eval.self_eval_probability("q", "r").unwrap();
        assert_eq!(a, b);
        assert!((0.0..1.0).contains(&a));
        let c = eval.self_eval_probability("q", "other").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noisy_evaluator_is_consistent_within_a_question() {
        let fixture = trap_family(5, 1);
        let noisy = NoisyOracleEvaluator::new(fixture.oracle_evaluator(), 0.5, 7);
        for item in &fixture.items {
            let right = noisy.self_eval_probability(&item.question, "B [[right]]").unwrap();
            let wrong = noisy.self_eval_probability(&item.question, "A [[wrong]]").unwrap();
            // Either truthful on both or inverted on both.
            assert_eq!(right + wrong, 1.0);
        }
    }
}
