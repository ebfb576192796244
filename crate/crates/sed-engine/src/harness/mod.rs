//! Benchmark running, answer extraction, dataset synthesis, trace emission,
//! and the file formats behind the CLI.
//!
//! All randomness is keyed by item id through [`derive_seed`], so reports and
//! synthesized datasets are pure functions of their inputs and identical runs
//! produce byte-identical files.

pub mod prompts;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::core::{derive_seed, Context, Criterion, DecodeConfig, DecodingMethod, DetRng, TokenId};
use crate::decoders::{beam_decode, greedy_decode, nucleus_decode, DecodeOutcome};
use crate::models::{
    judgment_text, Evaluator, LanguageModel, NGramModel, TableModel,
};
use crate::oracle::oracle_best_token;
use crate::sed::{render_response, sed_decode, SedOutcome};
use crate::{Error, Result, ENGINE_VERSION};

/// Task formats with distinct answer-extraction rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFormat {
    MultipleChoice,
    FreeAnswer,
    Numeric,
}

/// One benchmark question with its canonical answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub format: TaskFormat,
}

/// A (question, response, judgment) triple for evaluation training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub question: String,
    pub response: String,
    pub judgment: u8,
    pub judgment_text: String,
}

/// A correct (question, response) pair for generation training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenExample {
    pub question: String,
    pub response: String,
}

/// Decoding method selector for benchmark runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    Greedy,
    Beam,
    Nucleus,
    SedRatio,
    SedEntropy,
}

impl BenchMethod {
    pub fn is_sed(self) -> bool {
        matches!(self, BenchMethod::SedRatio | BenchMethod::SedEntropy)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerItemResult {
    pub id: String,
    pub extracted: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeStats {
    /// Mean number of treated chaotic points per response.
    pub mean_chaotic_points: f64,
    /// Total evaluator queries across the run.
    pub evaluator_calls: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_item: Vec<PerItemResult>,
    pub decode_stats: DecodeStats,
}

// ---------------------------------------------------------------------------
// Answer extraction
// ---------------------------------------------------------------------------

fn bracket_letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\[\s*([A-Za-z])\s*\]\]").unwrap())
}

fn answer_should_be_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"The answer should be (?:option\s+)?\(?([A-Za-z])\b").unwrap())
}

fn bracket_span_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)\[\[(.*?)\]\]").unwrap())
}

fn final_answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)the final answer is\s*\$?\s*(-?[0-9][0-9,]*(?:\.[0-9]+)?)").unwrap())
}

/// Extracts the answer span from a response, or `None` when no pattern
/// matches. Total: never fails.
///
/// Multiple choice: the letter inside the last `[[X]]`, else the letter after
/// the last `The answer should be`. Free answer: the content of the last
/// `[[...]]` span. Numeric: the number after the last `the final answer is`,
/// with an optional dollar sign and thousands commas stripped.
pub fn extract_answer(response: &str, format: TaskFormat) -> Option<String> {
    match format {
        TaskFormat::MultipleChoice => {
            if let Some(cap) = bracket_letter_re().captures_iter(response).last() {
                return Some(cap[1].to_string());
            }
            answer_should_be_re()
                .captures_iter(response)
                .last()
                .map(|cap| cap[1].to_string())
        }
        TaskFormat::FreeAnswer => bracket_span_re()
            .captures_iter(response)
            .last()
            .map(|cap| cap[1].trim().to_string()),
        TaskFormat::Numeric => final_answer_re()
            .captures_iter(response)
            .last()
            .map(|cap| cap[1].replace(',', "")),
    }
}

/// Whether an extracted answer matches the keyed one: parsed-value equality
/// for numeric answers, trimmed case-insensitive equality otherwise.
pub fn answers_match(extracted: &str, answer: &str, format: TaskFormat) -> bool {
    match format {
        TaskFormat::Numeric => {
            let parse = |s: &str| s.trim().trim_start_matches('$').replace(',', "").parse::<f64>();
            match (parse(extracted), parse(answer)) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            }
        }
        _ => extracted.trim().eq_ignore_ascii_case(answer.trim()),
    }
}

// ---------------------------------------------------------------------------
// Benchmark running
// ---------------------------------------------------------------------------

fn decode_item(
    item: &BenchmarkItem,
    model: &dyn LanguageModel,
    evaluator: &dyn Evaluator,
    method: BenchMethod,
    config: &DecodeConfig,
) -> Result<(DecodeOutcome, usize, usize)> {
    let query = Context::new(model.vocabulary().tokenize(&item.question)?);
    let item_seed = derive_seed(config.seed, "item", item.id.as_bytes());
    match method {
        BenchMethod::Greedy => {
            Ok((greedy_decode(model, &query, config.max_new_tokens)?, 0, 0))
        }
        BenchMethod::Beam => Ok((
            beam_decode(model, &query, config.beam_width, config.max_new_tokens)?,
            0,
            0,
        )),
        BenchMethod::Nucleus => Ok((
            nucleus_decode(
                model,
                &query,
                config.temperature,
                config.top_p,
                config.max_new_tokens,
                item_seed,
            )?,
            0,
            0,
        )),
        BenchMethod::SedRatio | BenchMethod::SedEntropy => {
            let mut sed_config = config.clone();
            sed_config.criterion = if method == BenchMethod::SedRatio {
                Criterion::Ratio
            } else {
                Criterion::Entropy
            };
            sed_config.seed = item_seed;
            let out = sed_decode(model, evaluator, &query, &sed_config)?;
            Ok((out.outcome, out.chaotic_points.len(), out.evaluator_calls))
        }
    }
}

/// Decodes every item, extracts and compares answers, and aggregates the
/// report. Items whose decode fails are marked errored and count against
/// accuracy.
pub fn run_benchmark(
    dataset: &[BenchmarkItem],
    model: &dyn LanguageModel,
    evaluator: &dyn Evaluator,
    method: BenchMethod,
    config: &DecodeConfig,
) -> Result<AccuracyReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    config.validate()?;
    let mut per_item = Vec::with_capacity(dataset.len());
    let mut correct = 0usize;
    let mut chaotic_total = 0usize;
    let mut evaluator_calls = 0usize;
    for item in dataset {
        match decode_item(item, model, evaluator, method, config) {
            Ok((outcome, chaotic, calls)) => {
                chaotic_total += chaotic;
                evaluator_calls += calls;
                let response = render_response(model.vocabulary(), &outcome.tokens);
                let extracted = extract_answer(&response, item.format);
                let ok = extracted
                    .as_deref()
                    .map(|e| answers_match(e, &item.answer, item.format))
                    .unwrap_or(false);
                if ok {
                    correct += 1;
                }
                per_item.push(PerItemResult {
                    id: item.id.clone(),
                    extracted,
                    correct: ok,
                    error: None,
                });
            }
            Err(e) => per_item.push(PerItemResult {
                id: item.id.clone(),
                extracted: None,
                correct: false,
                error: Some(e.to_string()),
            }),
        }
    }
    let total = dataset.len();
    Ok(AccuracyReport {
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        per_item,
        decode_stats: DecodeStats {
            mean_chaotic_points: chaotic_total as f64 / total as f64,
            evaluator_calls,
        },
    })
}

// ---------------------------------------------------------------------------
// Dataset synthesis
// ---------------------------------------------------------------------------

/// Answers every question with every generator (seeded nucleus sampling),
/// filters duplicates and unextractable responses, judges the rest against
/// the answer key, and emits a class-balanced evaluation set plus the correct
/// subset as the generation set.
///
/// Balancing drops surplus examples of the majority judgment uniformly at
/// random (seeded); the generation set is taken from the balanced view so
/// every emitted pair also appears there with judgment 1.
pub fn synthesize_datasets(
    dataset: &[BenchmarkItem],
    generators: &[&dyn LanguageModel],
    samples_per_model: usize,
    seed: u64,
) -> Result<(Vec<EvalExample>, Vec<GenExample>)> {
    if generators.is_empty() {
        return Err(Error::NoGenerators);
    }
    let config = DecodeConfig::default();
    let mut eval_examples: Vec<EvalExample> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for item in dataset {
        for (g_idx, generator) in generators.iter().enumerate() {
            let query = Context::new(generator.vocabulary().tokenize(&item.question)?);
            for sample in 0..samples_per_model {
                let mut payload = item.id.as_bytes().to_vec();
                payload.push(0x1f);
                payload.extend_from_slice(&(g_idx as u64).to_le_bytes());
                payload.extend_from_slice(&(sample as u64).to_le_bytes());
                let sample_seed = derive_seed(seed, "synth", &payload);
                let outcome = nucleus_decode(
                    *generator,
                    &query,
                    config.temperature,
                    config.top_p,
                    config.max_new_tokens,
                    sample_seed,
                )?;
                let response = render_response(generator.vocabulary(), &outcome.tokens);
                let Some(extracted) = extract_answer(&response, item.format) else {
                    continue;
                };
                if !seen.insert((item.question.clone(), response.clone())) {
                    continue;
                }
                let judgment = answers_match(&extracted, &item.answer, item.format);
                eval_examples.push(EvalExample {
                    question: item.question.clone(),
                    response,
                    judgment: judgment as u8,
                    judgment_text: judgment_text(judgment).to_string(),
                });
            }
        }
    }

    let balanced = balance_classes(eval_examples, seed);
    let gen_examples = balanced
        .iter()
        .filter(|e| e.judgment == 1)
        .map(|e| GenExample { question: e.question.clone(), response: e.response.clone() })
        .collect();
    Ok((balanced, gen_examples))
}

fn balance_classes(examples: Vec<EvalExample>, seed: u64) -> Vec<EvalExample> {
    let positives = examples.iter().filter(|e| e.judgment == 1).count();
    let negatives = examples.len() - positives;
    let (majority, surplus) = if positives > negatives {
        (1u8, positives - negatives)
    } else {
        (0u8, negatives - positives)
    };
    if surplus == 0 {
        return examples;
    }
    let majority_indices: Vec<usize> = examples
        .iter()
        .enumerate()
        .filter(|(_, e)| e.judgment == majority)
        .map(|(i, _)| i)
        .collect();
    // Seeded partial Fisher-Yates: the first `surplus` entries are dropped.
    let mut rng = DetRng::new(derive_seed(seed, "balance", &[]));
    let mut pool = majority_indices;
    for i in 0..surplus.min(pool.len()) {
        let j = i + rng.next_below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    let dropped: HashSet<usize> = pool[..surplus].iter().copied().collect();
    examples
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, e)| e)
        .collect()
}

/// Oracle-style evaluator built from a benchmark dataset: extracts per the
/// item's task format and scores 1.0 on a match with the keyed answer.
pub struct DatasetEvaluator {
    key: std::collections::HashMap<String, (String, TaskFormat)>,
}

impl DatasetEvaluator {
    pub fn new(dataset: &[BenchmarkItem]) -> Self {
        let key = dataset
            .iter()
            .map(|item| (item.question.clone(), (item.answer.clone(), item.format)))
            .collect();
        Self { key }
    }
}

impl Evaluator for DatasetEvaluator {
    fn self_eval_probability(&self, question: &str, response: &str) -> Result<f64> {
        let (answer, format) = self
            .key
            .get(question)
            .ok_or_else(|| Error::UnknownQuestion(question.to_string()))?;
        let correct = extract_answer(response, *format)
            .map(|e| answers_match(&e, answer, *format))
            .unwrap_or(false);
        Ok(if correct { 1.0 } else { 0.0 })
    }
}

// ---------------------------------------------------------------------------
// Trace emission
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TraceHeader<'a> {
    config: &'a DecodeConfig,
    seed: u64,
    engine_version: &'a str,
}

#[derive(Serialize)]
struct TracePoint<'a> {
    position: usize,
    criterion_value: f64,
    candidates: &'a [crate::core::CandidateScore],
    chosen: TokenId,
}

/// Writes one JSON record per line: a header (config, seed, engine version),
/// then one record per chaotic point. Byte-identical for identical outcomes.
pub fn emit_trace(
    outcome: &SedOutcome,
    config: &DecodeConfig,
    destination: &mut dyn Write,
) -> Result<()> {
    let header = TraceHeader { config, seed: config.seed, engine_version: ENGINE_VERSION };
    serde_json::to_writer(&mut *destination, &header)
        .map_err(|e| Error::Format { kind: "trace", detail: e.to_string() })?;
    destination.write_all(b"\n")?;
    for record in &outcome.chaotic_points {
        let point = TracePoint {
            position: record.position,
            criterion_value: record.criterion_value,
            candidates: &record.candidates,
            chosen: record.chosen,
        };
        serde_json::to_writer(&mut *destination, &point)
            .map_err(|e| Error::Format { kind: "trace", detail: e.to_string() })?;
        destination.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Oracle equivalence checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheckReport {
    pub models: usize,
    pub chaotic_points: usize,
    pub mismatches: Vec<String>,
}

/// Runs self-evaluation decoding on `models` random table models with
/// hash-scripted evaluators and recomputes every chaotic-point choice with
/// the independent oracle, cycling through aligned greedy, beam, and nucleus
/// configurations. Any disagreement is reported.
pub fn oracle_check(models: usize, seed: u64) -> Result<OracleCheckReport> {
    let mut chaotic_points = 0usize;
    let mut mismatches = Vec::new();
    for i in 0..models {
        let model =
            crate::fixtures::random_table_model(derive_seed(seed, "oracle-model", &(i as u64).to_le_bytes()));
        let evaluator = crate::fixtures::HashEvaluator::new(derive_seed(
            seed,
            "oracle-eval",
            &(i as u64).to_le_bytes(),
        ));
        let method = match i % 3 {
            0 => DecodingMethod::Greedy,
            1 => DecodingMethod::Beam,
            _ => DecodingMethod::Nucleus,
        };
        let criterion = if i % 2 == 0 { Criterion::Ratio } else { Criterion::Entropy };
        let config = DecodeConfig {
            criterion,
            delta_r: 0.8,
            delta_e: 1.0,
            k: 3,
            b: 3,
            // Offset from the method cycle so every method meets every alpha.
            alpha: [0.8, 1.0, 0.5][(i / 3) % 3],
            max_new_tokens: 8,
            beam_width: 2,
            speculation_max_tokens: 8,
            base_method: method,
            speculation_method: method,
            seed: derive_seed(seed, "oracle-seed", &(i as u64).to_le_bytes()),
            ..DecodeConfig::default()
        };
        let query = Context::new(vec![]);
        let out = sed_decode(&model, &evaluator, &query, &config)?;
        for record in &out.chaotic_points {
            chaotic_points += 1;
            let ctx = Context::with_generated(
                query.query_tokens.clone(),
                out.outcome.tokens[..record.position].to_vec(),
            );
            let (oracle_token, oracle_table) = oracle_best_token(
                &model,
                &evaluator,
                &ctx,
                config.k,
                config.alpha,
                config.speculation_method,
                &config,
            )?;
            if oracle_token != record.chosen {
                mismatches.push(format!(
                    "model {i}: position {} engine chose {} oracle chose {}",
                    record.position, record.chosen, oracle_token
                ));
                continue;
            }
            for (engine_c, oracle_c) in record.candidates.iter().zip(&oracle_table) {
                if engine_c.token != oracle_c.token
                    || (engine_c.score - oracle_c.score).abs() > 1e-12
                    || (engine_c.p_se - oracle_c.p_se).abs() > 1e-12
                {
                    mismatches.push(format!(
                        "model {i}: position {} candidate table diverges on token {}",
                        record.position, engine_c.token
                    ));
                }
            }
        }
    }
    Ok(OracleCheckReport { models, chaotic_points, mismatches })
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// Loads a JSONL benchmark dataset and validates id uniqueness.
pub fn load_dataset(path: &Path) -> Result<Vec<BenchmarkItem>> {
    let text = std::fs::read_to_string(path)?;
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: BenchmarkItem = serde_json::from_str(line).map_err(|e| Error::Format {
            kind: "dataset",
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        if !ids.insert(item.id.clone()) {
            return Err(Error::Format {
                kind: "dataset",
                detail: format!("duplicate id {:?}", item.id),
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// Loads a model file, sniffing the format: objects with an `order` field are
/// n-gram models, everything else is a table model.
pub fn load_model(path: &Path) -> Result<Box<dyn LanguageModel>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
        kind: "model",
        detail: e.to_string(),
    })?;
    if value.get("order").is_some() {
        Ok(Box::new(NGramModel::from_path(path)?))
    } else {
        Ok(Box::new(TableModel::from_json(&text)?))
    }
}

/// Writes one serialized record per line.
pub fn write_jsonl<T: Serialize>(records: &[T], destination: &mut dyn Write) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut *destination, record)
            .map_err(|e| Error::Format { kind: "jsonl", detail: e.to_string() })?;
        destination.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{trap_family, FnEvaluator};

    #[test]
    fn extract_multiple_choice() {
        assert_eq!(
            extract_answer("The answer should be [[B]], which is correct.", TaskFormat::MultipleChoice),
            Some("B".to_string())
        );
        assert_eq!(
            extract_answer("The answer should be option [[B]], then [[D]].", TaskFormat::MultipleChoice),
            Some("D".to_string())
        );
        assert_eq!(
            extract_answer("The answer should be D, which is wrong.", TaskFormat::MultipleChoice),
            Some("D".to_string())
        );
        assert_eq!(extract_answer("no pattern here", TaskFormat::MultipleChoice), None);
    }

    #[test]
    fn extract_free_answer() {
        assert_eq!(
            extract_answer("Reasoning. [[Muggsy Bogues]] is it.", TaskFormat::FreeAnswer),
            Some("Muggsy Bogues".to_string())
        );
        assert_eq!(
            extract_answer("First [[a]], finally [[the real one]].", TaskFormat::FreeAnswer),
            Some("the real one".to_string())
        );
        assert_eq!(extract_answer("nothing bracketed", TaskFormat::FreeAnswer), None);
    }

    #[test]
    fn extract_numeric() {
        assert_eq!(
            extract_answer("So, the final answer is $16.", TaskFormat::Numeric),
            Some("16".to_string())
        );
        assert_eq!(
            extract_answer("So, the final answer is 3.5 hours", TaskFormat::Numeric),
            Some("3.5".to_string())
        );
        assert_eq!(
            extract_answer("the final answer is $1,200.", TaskFormat::Numeric),
            Some("1200".to_string())
        );
        assert_eq!(extract_answer("no pattern here", TaskFormat::Numeric), None);
    }

    #[test]
    fn numeric_comparison_parses_values() {
        assert!(answers_match("16", "16", TaskFormat::Numeric));
        assert!(answers_match("16.0", "16", TaskFormat::Numeric));
        assert!(!answers_match("16.5", "16", TaskFormat::Numeric));
        assert!(!answers_match("abc", "16", TaskFormat::Numeric));
        assert!(answers_match(" b ", "B", TaskFormat::MultipleChoice));
    }

    #[test]
    fn benchmark_on_trap_family() {
        let fixture = trap_family(20, 5);
        let evaluator = fixture.oracle_evaluator();
        let config = DecodeConfig { max_new_tokens: 16, ..DecodeConfig::default() };

        let greedy =
            run_benchmark(&fixture.items, &fixture.model, &evaluator, BenchMethod::Greedy, &config)
                .unwrap();
        assert_eq!(greedy.accuracy, 0.0);
        assert_eq!(greedy.per_item.len(), 20);

        let sed =
            run_benchmark(&fixture.items, &fixture.model, &evaluator, BenchMethod::SedRatio, &config)
                .unwrap();
        assert_eq!(sed.accuracy, 1.0);
        assert!(sed.decode_stats.mean_chaotic_points >= 1.0);
        assert!(sed.decode_stats.evaluator_calls >= 40);
    }

    #[test]
    fn benchmark_marks_errored_items() {
        let fixture = trap_family(2, 5);
        let evaluator = fixture.oracle_evaluator();
        let mut items = fixture.items.clone();
        items.push(BenchmarkItem {
            id: "broken".into(),
            question: "not-in-vocab".into(),
            answer: "right".into(),
            format: TaskFormat::FreeAnswer,
        });
        let config = DecodeConfig { max_new_tokens: 16, ..DecodeConfig::default() };
        let report =
            run_benchmark(&items, &fixture.model, &evaluator, BenchMethod::SedRatio, &config)
                .unwrap();
        assert_eq!(report.total, 3);
        assert_eq!(report.correct, 2);
        assert!(report.per_item[2].error.is_some());
        let recomputed = report.per_item.iter().filter(|p| p.correct).count();
        assert_eq!(recomputed, report.correct);
    }

    #[test]
    fn accuracy_identity() {
        let fixture = trap_family(7, 11);
        let evaluator = FnEvaluator::new(|_, _| 0.5);
        let config = DecodeConfig { max_new_tokens: 16, ..DecodeConfig::default() };
        let report =
            run_benchmark(&fixture.items, &fixture.model, &evaluator, BenchMethod::Beam, &config)
                .unwrap();
        assert!((report.accuracy - report.correct as f64 / report.total as f64).abs() < 1e-12);
    }

    #[test]
    fn absent_extraction_scores_zero() {
        // Trap responses have no numeric pattern, so a numeric dataset over
        // the same questions extracts nothing and earns nothing.
        let fixture = trap_family(5, 3);
        let items: Vec<BenchmarkItem> = fixture
            .items
            .iter()
            .map(|i| BenchmarkItem { format: TaskFormat::Numeric, ..i.clone() })
            .collect();
        let evaluator = FnEvaluator::new(|_, _| 0.0);
        let config = DecodeConfig { max_new_tokens: 16, ..DecodeConfig::default() };
        let report =
            run_benchmark(&items, &fixture.model, &evaluator, BenchMethod::Greedy, &config)
                .unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert!(report.per_item.iter().all(|p| p.extracted.is_none()));
    }

    #[test]
    fn trace_for_zero_chaotic_points_is_header_only() {
        let outcome = SedOutcome {
            outcome: DecodeOutcome {
                tokens: vec![],
                finished_by: crate::decoders::FinishReason::Eos,
                sequence_log_prob: 0.0,
            },
            chaotic_points: vec![],
            budget_used: 0,
            detection_calls: 0,
            evaluator_calls: 0,
        };
        let config = DecodeConfig::default();
        let mut buf: Vec<u8> = Vec::new();
        emit_trace(&outcome, &config, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert!(header.get("config").is_some());
        assert_eq!(header["seed"], 0);
        assert_eq!(header["engine_version"], ENGINE_VERSION);
    }

    #[test]
    fn extraction_is_total() {
        for junk in ["", "[[", "]]", "[[]]", "the final answer is", "\u{0}weird"] {
            for fmt in [TaskFormat::MultipleChoice, TaskFormat::FreeAnswer, TaskFormat::Numeric] {
                let _ = extract_answer(junk, fmt);
            }
        }
        assert_eq!(extract_answer("[[]]", TaskFormat::FreeAnswer), Some(String::new()));
    }
}
