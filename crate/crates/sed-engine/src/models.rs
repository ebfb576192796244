//! Language-model and evaluator interfaces plus deterministic reference
//! implementations.
//!
//! The reference models make every decoding behavior exactly testable: a
//! [`TableModel`] maps scripted context suffixes to next-token weights, an
//! [`NGramModel`] is trained by counting with additive smoothing. Both are
//! pure functions of the context. Evaluators score (question, response)
//! pairs; [`ModelEvaluator`] extracts the judgment probability from a judge
//! model the way a trained judge is read out: the probability of the `Y`
//! token at the position immediately after `[[`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::core::{normalize, Context, TokenDistribution, TokenId, Vocabulary};
use crate::{Error, Result};

/// Judgment rendering for a correct response. Bit-exact contract.
pub const POSITIVE_JUDGMENT: &str = "[[Y]], the answer is correct.";
/// Judgment rendering for an incorrect response. Bit-exact contract.
pub const NEGATIVE_JUDGMENT: &str = "[[N]], the answer is incorrect.";

/// The self-evaluation prompt. `{model_response}` is replaced with the Q&A
/// text under judgment. Bit-exact contract.
pub const EVAL_PROMPT_TEMPLATE: &str = "Judge the correctness of the answer in the following Q&A scenario:\n###\n{model_response}\n###\n\nJudge:";

pub fn judgment_text(correct: bool) -> &'static str {
    if correct {
        POSITIVE_JUDGMENT
    } else {
        NEGATIVE_JUDGMENT
    }
}

/// Provider of next-token distributions.
///
/// Implementations must be pure: identical contexts yield identical
/// distributions, and sharing across threads must not change behavior.
pub trait LanguageModel: Send + Sync {
    fn next_distribution(&self, context: &Context) -> Result<TokenDistribution>;
    fn vocabulary(&self) -> &Vocabulary;
}

/// Judge of (question, response) pairs, returning the probability that the
/// response is a correct answer to the question.
pub trait Evaluator: Send + Sync {
    fn self_eval_probability(&self, question: &str, response: &str) -> Result<f64>;
}

// ---------------------------------------------------------------------------
// Table model
// ---------------------------------------------------------------------------

/// One scripted rule: when the generated tokens end with `context` (and the
/// query matches, if constrained), the next-token distribution is `weights`
/// normalized.
#[derive(Debug, Clone)]
pub struct TableEntry {
    pub context: Vec<TokenId>,
    pub query: Option<Vec<TokenId>>,
    pub weights: Vec<f64>,
}

/// A scripted language model: longest-exact-suffix matching on generated
/// tokens, optionally further keyed by the query, falling back to a default
/// weight vector.
pub struct TableModel {
    vocabulary: Vocabulary,
    entries: Vec<(TableEntry, TokenDistribution)>,
    /// Entry indices grouped by query key, so a lookup only scans rules for
    /// its own query plus the query-free ones.
    keyed: HashMap<Vec<TokenId>, Vec<usize>>,
    query_free: Vec<usize>,
    default: TokenDistribution,
}

impl TableModel {
    pub fn new(vocabulary: Vocabulary, entries: Vec<TableEntry>, default: Vec<f64>) -> Result<Self> {
        let check_len = |weights: &[f64]| -> Result<()> {
            if weights.len() != vocabulary.len() {
                return Err(Error::Format {
                    kind: "table model",
                    detail: format!(
                        "weight vector has {} entries for a vocabulary of {}",
                        weights.len(),
                        vocabulary.len()
                    ),
                });
            }
            Ok(())
        };
        check_len(&default)?;
        let default = normalize(&default)?;
        let entries = entries
            .into_iter()
            .map(|e| {
                check_len(&e.weights)?;
                let dist = normalize(&e.weights)?;
                Ok((e, dist))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut keyed: HashMap<Vec<TokenId>, Vec<usize>> = HashMap::new();
        let mut query_free = Vec::new();
        for (idx, (entry, _)) in entries.iter().enumerate() {
            match &entry.query {
                Some(q) => keyed.entry(q.clone()).or_default().push(idx),
                None => query_free.push(idx),
            }
        }
        Ok(Self { vocabulary, entries, keyed, query_free, default })
    }

    /// Match precedence: longest context suffix first, then query-keyed over
    /// query-free, then earliest definition.
    fn lookup(&self, context: &Context) -> &TokenDistribution {
        let gen = &context.generated_tokens;
        let mut best: Option<(&TokenDistribution, usize, bool)> = None;
        let groups = [
            self.keyed.get(&context.query_tokens).map(Vec::as_slice).unwrap_or(&[]),
            self.query_free.as_slice(),
        ];
        for &idx in groups.iter().copied().flatten() {
            let (entry, dist) = &self.entries[idx];
            if entry.context.len() > gen.len() || !gen.ends_with(&entry.context) {
                continue;
            }
            let key = (entry.context.len(), entry.query.is_some());
            let better = match best {
                None => true,
                Some((_, len, keyed)) => key.0 > len || (key.0 == len && key.1 && !keyed),
            };
            if better {
                best = Some((dist, key.0, key.1));
            }
        }
        best.map(|(d, _, _)| d).unwrap_or(&self.default)
    }
}

impl LanguageModel for TableModel {
    fn next_distribution(&self, context: &Context) -> Result<TokenDistribution> {
        Ok(self.lookup(context).clone())
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }
}

/// On-disk form of a table model.
#[derive(Debug, Serialize, Deserialize)]
pub struct TableModelFile {
    pub vocab: Vec<String>,
    pub eos: String,
    #[serde(default)]
    pub entries: Vec<TableEntryFile>,
    pub default: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableEntryFile {
    pub context: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<Vec<String>>,
}

impl TableModel {
    pub fn from_file_spec(file: TableModelFile) -> Result<Self> {
        let vocabulary = Vocabulary::new(file.vocab, &file.eos)?;
        let entries = file
            .entries
            .into_iter()
            .map(|e| {
                let context = e
                    .context
                    .iter()
                    .map(|t| vocabulary.get(t).ok_or_else(|| Error::UnknownToken(t.clone())))
                    .collect::<Result<Vec<_>>>()?;
                let query = e
                    .query
                    .map(|q| {
                        q.iter()
                            .map(|t| {
                                vocabulary.get(t).ok_or_else(|| Error::UnknownToken(t.clone()))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .transpose()?;
                Ok(TableEntry { context, query, weights: e.weights })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vocabulary, entries, file.default)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: TableModelFile = serde_json::from_str(json).map_err(|e| Error::Format {
            kind: "table model",
            detail: e.to_string(),
        })?;
        Self::from_file_spec(file)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// N-gram model
// ---------------------------------------------------------------------------

/// History element: a real token, or the begin-of-sequence padding marker.
type HistoryToken = Option<TokenId>;

/// An order-n count model with additive smoothing, so every token always has
/// strictly positive probability.
pub struct NGramModel {
    vocabulary: Vocabulary,
    order: usize,
    smoothing_alpha: f64,
    counts: HashMap<Vec<HistoryToken>, Vec<u64>>,
}

impl NGramModel {
    /// Counts every (history, next-token) pair in the corpus. Histories
    /// shorter than `order - 1` are left-padded with a begin marker.
    pub fn train(
        vocabulary: Vocabulary,
        corpus: &[Vec<TokenId>],
        order: usize,
        smoothing_alpha: f64,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if order < 1 {
            return Err(Error::InvalidConfig("n-gram order must be >= 1".into()));
        }
        if smoothing_alpha.is_nan() || smoothing_alpha <= 0.0 {
            return Err(Error::InvalidConfig("smoothing_alpha must be > 0".into()));
        }
        let mut counts: HashMap<Vec<HistoryToken>, Vec<u64>> = HashMap::new();
        let vocab_size = vocabulary.len();
        for sequence in corpus {
            for (i, &next) in sequence.iter().enumerate() {
                let history = padded_history(&sequence[..i], order);
                let row = counts.entry(history).or_insert_with(|| vec![0; vocab_size]);
                row[next.index()] += 1;
            }
        }
        Ok(Self { vocabulary, order, smoothing_alpha, counts })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn counts_for(&self, history: &[HistoryToken]) -> Option<&Vec<u64>> {
        self.counts.get(history)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let file: NGramModelFile = serde_json::from_str(&json).map_err(|e| Error::Format {
            kind: "n-gram model",
            detail: e.to_string(),
        })?;
        file.build(path.parent())
    }
}

fn padded_history(prefix: &[TokenId], order: usize) -> Vec<HistoryToken> {
    let need = order - 1;
    let take = prefix.len().min(need);
    let mut history: Vec<HistoryToken> = Vec::with_capacity(need);
    for _ in 0..need - take {
        history.push(None);
    }
    history.extend(prefix[prefix.len() - take..].iter().map(|&t| Some(t)));
    history
}

impl LanguageModel for NGramModel {
    fn next_distribution(&self, context: &Context) -> Result<TokenDistribution> {
        let mut sequence = context.query_tokens.clone();
        sequence.extend_from_slice(&context.generated_tokens);
        let history = padded_history(&sequence, self.order);
        let zeros;
        let row = match self.counts.get(&history) {
            Some(row) => row,
            None => {
                zeros = vec![0u64; self.vocabulary.len()];
                &zeros
            }
        };
        let total: u64 = row.iter().sum();
        let denom = total as f64 + self.smoothing_alpha * self.vocabulary.len() as f64;
        TokenDistribution::new(
            row.iter().map(|&c| (c as f64 + self.smoothing_alpha) / denom).collect(),
        )
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }
}

/// On-disk form of an n-gram model: either a pointer to a raw corpus file
/// (one whitespace-tokenized sequence per line, vocabulary inferred in order
/// of first appearance) or serialized counts with an explicit vocabulary.
#[derive(Debug, Serialize, Deserialize)]
pub struct NGramModelFile {
    pub order: usize,
    pub smoothing_alpha: f64,
    pub eos: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<NGramCountRow>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NGramCountRow {
    /// History tokens; `null` entries are begin-of-sequence padding.
    pub history: Vec<Option<String>>,
    pub counts: Vec<u64>,
}

impl NGramModelFile {
    pub fn build(self, base_dir: Option<&Path>) -> Result<NGramModel> {
        match (self.corpus, self.counts) {
            (Some(corpus_path), None) => {
                let path = match base_dir {
                    Some(dir) => dir.join(&corpus_path),
                    None => corpus_path.clone().into(),
                };
                let text = std::fs::read_to_string(&path)?;
                let mut tokens: Vec<String> = Vec::new();
                let mut seen: HashMap<String, ()> = HashMap::new();
                for word in text.split_whitespace() {
                    if seen.insert(word.to_string(), ()).is_none() {
                        tokens.push(word.to_string());
                    }
                }
                if !seen.contains_key(self.eos.as_str()) {
                    tokens.push(self.eos.clone());
                }
                let vocabulary = Vocabulary::new(tokens, &self.eos)?;
                let corpus: Vec<Vec<TokenId>> = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| vocabulary.tokenize(l))
                    .collect::<Result<Vec<_>>>()?;
                if corpus.is_empty() {
                    return Err(Error::EmptyCorpus);
                }
                NGramModel::train(vocabulary, &corpus, self.order, self.smoothing_alpha)
            }
            (None, Some(rows)) => {
                let vocab = self.vocab.ok_or(Error::Format {
                    kind: "n-gram model",
                    detail: "serialized counts require an explicit vocab".into(),
                })?;
                let vocabulary = Vocabulary::new(vocab, &self.eos)?;
                if self.order < 1 {
                    return Err(Error::InvalidConfig("n-gram order must be >= 1".into()));
                }
                if self.smoothing_alpha.is_nan() || self.smoothing_alpha <= 0.0 {
                    return Err(Error::InvalidConfig("smoothing_alpha must be > 0".into()));
                }
                let mut counts = HashMap::new();
                for row in rows {
                    let history = row
                        .history
                        .iter()
                        .map(|h| match h {
                            None => Ok(None),
                            Some(t) => vocabulary
                                .get(t)
                                .map(Some)
                                .ok_or_else(|| Error::UnknownToken(t.clone())),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if row.counts.len() != vocabulary.len() {
                        return Err(Error::Format {
                            kind: "n-gram model",
                            detail: "count row length does not match vocab".into(),
                        });
                    }
                    counts.insert(history, row.counts);
                }
                Ok(NGramModel {
                    vocabulary,
                    order: self.order,
                    smoothing_alpha: self.smoothing_alpha,
                    counts,
                })
            }
            _ => Err(Error::Format {
                kind: "n-gram model",
                detail: "exactly one of `corpus` or `counts` must be present".into(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluators
// ---------------------------------------------------------------------------

/// Answer-extraction rule applied to a rendered response.
pub type AnswerExtractor = Arc<dyn Fn(&str) -> Option<String> + Send + Sync>;

/// Idealized evaluator backed by an answer key: returns 1.0 when the
/// extracted answer matches the keyed one (case- and whitespace-insensitive),
/// else 0.0.
pub struct OracleEvaluator {
    answer_key: HashMap<String, String>,
    extractor: AnswerExtractor,
}

impl OracleEvaluator {
    pub fn new(answer_key: HashMap<String, String>, extractor: AnswerExtractor) -> Self {
        Self { answer_key, extractor }
    }
}

fn text_matches(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

impl Evaluator for OracleEvaluator {
    fn self_eval_probability(&self, question: &str, response: &str) -> Result<f64> {
        let answer = self
            .answer_key
            .get(question)
            .ok_or_else(|| Error::UnknownQuestion(question.to_string()))?;
        match (self.extractor)(response) {
            Some(extracted) if text_matches(&extracted, answer) => Ok(1.0),
            _ => Ok(0.0),
        }
    }
}

/// Evaluator that reads the judgment probability out of a judge language
/// model.
///
/// The filled prompt is whitespace-tokenized and presented as already
/// generated context, the `[[` judgment prefix is forced, and the raw
/// probability of `Y` at the following position is returned without
/// renormalizing over {Y, N}. The judge sees the prompt as a fresh context;
/// nothing carries over from generation.
pub struct ModelEvaluator {
    judge: Arc<dyn LanguageModel>,
    template: String,
    bracket: TokenId,
    y_token: TokenId,
}

impl ModelEvaluator {
    pub fn new(judge: Arc<dyn LanguageModel>, template: &str) -> Result<Self> {
        let vocab = judge.vocabulary();
        let require = |tok: &str| {
            vocab.get(tok).ok_or_else(|| Error::TemplateTokenMissing(tok.to_string()))
        };
        let bracket = require("[[")?;
        let y_token = require("Y")?;
        require("N")?;
        // Every fixed word of the template must be in the judge vocabulary.
        for word in template.replace("{model_response}", "").split_whitespace() {
            require(word)?;
        }
        Ok(Self { judge, template: template.to_string(), bracket, y_token })
    }

    pub fn with_default_template(judge: Arc<dyn LanguageModel>) -> Result<Self> {
        Self::new(judge, EVAL_PROMPT_TEMPLATE)
    }
}

impl Evaluator for ModelEvaluator {
    fn self_eval_probability(&self, question: &str, response: &str) -> Result<f64> {
        let qa_text = if question.is_empty() {
            response.to_string()
        } else {
            format!("{question}\n{response}")
        };
        let filled = self.template.replace("{model_response}", &qa_text);
        let vocab = self.judge.vocabulary();
        let mut generated = vocab
            .tokenize(&filled)
            .map_err(|e| match e {
                Error::UnknownToken(t) => Error::TemplateTokenMissing(t),
                other => other,
            })?;
        generated.push(self.bracket);
        let context = Context::with_generated(Vec::new(), generated);
        let dist = self.judge.next_distribution(&context)?;
        Ok(dist.prob(self.y_token))
    }
}
