//! Command-line front end: single-query decoding, benchmark running, dataset
//! synthesis, and the oracle-equivalence self-check.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use sed_engine::core::{Context, Criterion, DecodeConfig, DecodingMethod};
use sed_engine::decoders::{beam_decode, greedy_decode, nucleus_decode};
use sed_engine::fixtures::FnEvaluator;
use sed_engine::harness::{
    self, load_dataset, load_model, run_benchmark, synthesize_datasets, BenchMethod,
    DatasetEvaluator,
};
use sed_engine::models::{Evaluator, LanguageModel, ModelEvaluator};
use sed_engine::sed::{render_response, sed_decode, SedOutcome};
use sed_engine::Result;

#[derive(Parser)]
#[command(name = "sed-engine", version, about = "Self-evaluation decoding engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Greedy,
    Beam,
    Nucleus,
    SedRatio,
    SedEntropy,
}

impl MethodArg {
    fn bench_method(self) -> BenchMethod {
        match self {
            MethodArg::Greedy => BenchMethod::Greedy,
            MethodArg::Beam => BenchMethod::Beam,
            MethodArg::Nucleus => BenchMethod::Nucleus,
            MethodArg::SedRatio => BenchMethod::SedRatio,
            MethodArg::SedEntropy => BenchMethod::SedEntropy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluatorArg {
    /// The model judges its own speculations through the evaluation prompt.
    Self_,
    /// Judgments come from the dataset answer key.
    Oracle,
}

#[derive(Args)]
struct DecodeFlags {
    /// Model file: a table model or an n-gram model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Candidate tokens speculated per chaotic point.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Branching budget: maximum treated chaotic points per decode.
    #[arg(long, default_value_t = 5)]
    b: usize,
    /// Fusion coefficient between self-evaluation and generation probability.
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Ratio-criterion threshold.
    #[arg(long, default_value_t = 0.8)]
    delta_r: f64,
    /// Entropy-criterion threshold in nats.
    #[arg(long, default_value_t = 2.25)]
    delta_e: f64,
    #[arg(long, default_value_t = 64)]
    max_new_tokens: usize,
    #[arg(long, default_value_t = 3)]
    beam_width: usize,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, default_value_t = 0.9)]
    top_p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a JSONL decode trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl DecodeFlags {
    fn config(&self) -> DecodeConfig {
        DecodeConfig {
            criterion: match self.method {
                MethodArg::SedEntropy => Criterion::Entropy,
                _ => Criterion::Ratio,
            },
            delta_e: self.delta_e,
            delta_r: self.delta_r,
            k: self.k,
            b: self.b,
            alpha: self.alpha,
            max_new_tokens: self.max_new_tokens,
            beam_width: self.beam_width,
            temperature: self.temperature,
            top_p: self.top_p,
            base_method: DecodingMethod::Greedy,
            speculation_method: DecodingMethod::Greedy,
            speculation_max_tokens: self.max_new_tokens,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decode a single whitespace-tokenized query and print the response.
    Decode {
        /// Query text; every word must be in the model vocabulary.
        query: String,
        #[command(flatten)]
        flags: DecodeFlags,
    },
    /// Run a benchmark dataset and emit an accuracy report.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        flags: DecodeFlags,
        /// Evaluation feedback source for the sed methods.
        #[arg(long, value_enum, default_value = "self")]
        evaluator: EvaluatorArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Synthesize evaluation and generation datasets from generator models.
    Synth {
        #[arg(long)]
        dataset: PathBuf,
        /// Generator model files; repeat the flag for several models.
        #[arg(long, required = true, num_args = 1..)]
        generators: Vec<PathBuf>,
        /// Responses sampled per generator per question.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_eval: PathBuf,
        #[arg(long)]
        out_gen: PathBuf,
    },
    /// Verify engine decisions against the brute-force oracle on random
    /// models.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        models: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Command::Bench { flags, .. } = &cli.command {
        if flags.trace.is_some() {
            eprintln!("error: --trace is only supported by the decode subcommand");
            std::process::exit(1);
        }
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decode { query, flags } => decode_command(&query, &flags),
        Command::Bench { dataset, flags, evaluator, report } => {
            bench_command(&dataset, &flags, evaluator, report.as_deref())
        }
        Command::Synth { dataset, generators, samples, seed, out_eval, out_gen } => {
            synth_command(&dataset, &generators, samples, seed, &out_eval, &out_gen)
        }
        Command::OracleCheck { models, seed } => oracle_check_command(models, seed),
    }
}

fn decode_command(query: &str, flags: &DecodeFlags) -> Result<()> {
    let model: Arc<dyn LanguageModel> = Arc::from(load_model(&flags.model)?);
    let config = flags.config();
    let context = Context::new(model.vocabulary().tokenize(query)?);

    let outcome = match flags.method {
        MethodArg::Greedy => wrap_plain(greedy_decode(&*model, &context, config.max_new_tokens)?),
        MethodArg::Beam => wrap_plain(beam_decode(
            &*model,
            &context,
            config.beam_width,
            config.max_new_tokens,
        )?),
        MethodArg::Nucleus => wrap_plain(nucleus_decode(
            &*model,
            &context,
            config.temperature,
            config.top_p,
            config.max_new_tokens,
            config.seed,
        )?),
        MethodArg::SedRatio | MethodArg::SedEntropy => {
            let evaluator = ModelEvaluator::with_default_template(Arc::clone(&model))?;
            sed_decode(&*model, &evaluator, &context, &config)?
        }
    };

    if let Some(path) = &flags.trace {
        let mut writer = BufWriter::new(File::create(path)?);
        harness::emit_trace(&outcome, &config, &mut writer)?;
        writer.flush()?;
    }
    println!("{}", render_response(model.vocabulary(), &outcome.outcome.tokens));
    Ok(())
}

fn wrap_plain(outcome: sed_engine::decoders::DecodeOutcome) -> SedOutcome {
    SedOutcome {
        outcome,
        chaotic_points: Vec::new(),
        budget_used: 0,
        detection_calls: 0,
        evaluator_calls: 0,
    }
}

fn bench_command(
    dataset_path: &std::path::Path,
    flags: &DecodeFlags,
    evaluator: EvaluatorArg,
    report_path: Option<&std::path::Path>,
) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let model: Arc<dyn LanguageModel> = Arc::from(load_model(&flags.model)?);
    let config = flags.config();
    let method = flags.method.bench_method();

    let evaluator: Box<dyn Evaluator> = if method.is_sed() {
        match evaluator {
            EvaluatorArg::Self_ => {
                Box::new(ModelEvaluator::with_default_template(Arc::clone(&model))?)
            }
            EvaluatorArg::Oracle => Box::new(DatasetEvaluator::new(&dataset)),
        }
    } else {
        Box::new(FnEvaluator::new(|_, _| 0.0))
    };

    let report = run_benchmark(&dataset, &*model, &*evaluator, method, &config)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match report_path {
        Some(path) => {
            let mut writer = BufWriter::new(File::create(path)?);
            writer.write_all(json.as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn synth_command(
    dataset_path: &std::path::Path,
    generator_paths: &[PathBuf],
    samples: usize,
    seed: u64,
    out_eval: &std::path::Path,
    out_gen: &std::path::Path,
) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let generators: Vec<Box<dyn LanguageModel>> = generator_paths
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn LanguageModel> = generators.iter().map(|g| g.as_ref()).collect();
    let (eval_examples, gen_examples) = synthesize_datasets(&dataset, &refs, samples, seed)?;

    let mut eval_writer = BufWriter::new(File::create(out_eval)?);
    harness::write_jsonl(&eval_examples, &mut eval_writer)?;
    eval_writer.flush()?;
    let mut gen_writer = BufWriter::new(File::create(out_gen)?);
    harness::write_jsonl(&gen_examples, &mut gen_writer)?;
    gen_writer.flush()?;

    println!(
        "synthesized {} evaluation examples and {} generation examples",
        eval_examples.len(),
        gen_examples.len()
    );
    Ok(())
}

fn oracle_check_command(models: usize, seed: u64) -> Result<()> {
    let report = harness::oracle_check(models, seed)?;
    println!(
        "oracle-check: {} models, {} chaotic points, {} mismatches",
        report.models,
        report.chaotic_points,
        report.mismatches.len()
    );
    for mismatch in &report.mismatches {
        println!("MISMATCH {mismatch}");
    }
    if !report.mismatches.is_empty() {
        std::process::exit(2);
    }
    Ok(())
}
