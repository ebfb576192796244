//! The self-evaluation decoding engine: detection, speculation, evaluation,
//! feedback fusion, and token commitment.
//!
//! Per position the engine computes the next-token distribution the base
//! decoder would consume (post-temperature when the base method is nucleus
//! sampling). If the position is chaotic and budget remains, the top-k
//! candidate tokens are each speculated to a full continuation with a
//! standard decoder, the evaluator scores every continuation against the
//! original question, and the token with the highest propensity score
//! `alpha * p_se + (1 - alpha) * p_gen` is committed. Only that single token
//! is kept; generation resumes from it. Non-chaotic positions commit through
//! the base method unchanged.
//!
//! Speculation never recurses into detection, and candidates with zero
//! generation probability are recorded but neither speculated nor eligible
//! for selection. A position where fewer than two candidates have positive
//! probability offers no choice and falls through to the base step, which
//! keeps the `k = 1` configuration exactly equal to the base decoder.

use std::collections::VecDeque;

use crate::core::{
    apply_temperature, derive_seed, token_payload, top_k_tokens, CandidateScore,
    ChaoticPointRecord, Context, DecodeConfig, DecodingMethod, DetRng, TokenId, Vocabulary,
};
use crate::decoders::{
    beam_decode, greedy_decode, greedy_step, nucleus_decode, nucleus_step, DecodeOutcome,
    FinishReason,
};
use crate::detection::{indicator, measure, BranchingBudget};
use crate::models::{Evaluator, LanguageModel};
use crate::Result;

/// One speculated candidate at a chaotic point.
#[derive(Debug, Clone)]
pub struct SpeculationResult {
    pub candidate: TokenId,
    /// Continuation decoded from the context extended with `candidate`.
    pub completion: DecodeOutcome,
    pub p_se: f64,
    pub p_gen: f64,
}

/// A full self-evaluation decode: the committed output plus the audit trail
/// of every treated chaotic point.
#[derive(Debug, Clone)]
pub struct SedOutcome {
    pub outcome: DecodeOutcome,
    pub chaotic_points: Vec<ChaoticPointRecord>,
    pub budget_used: usize,
    /// Number of detection checks performed; exactly one per committed token,
    /// never any during speculation.
    pub detection_calls: usize,
    /// Number of evaluator queries issued.
    pub evaluator_calls: usize,
}

/// Renders a token sequence as response text: single-space joining with the
/// eos token omitted.
pub fn render_response(vocabulary: &Vocabulary, tokens: &[TokenId]) -> String {
    vocabulary.render(tokens, " ")
}

/// Completes the context extended with `candidate` using a standard decoder,
/// capped at `config.speculation_max_tokens`.
///
/// Nucleus speculation draws from a stream seeded by the extended context
/// content, so the same (seed, context, candidate) always speculates the same
/// continuation regardless of scheduling.
pub fn speculate(
    model: &dyn LanguageModel,
    context: &Context,
    candidate: TokenId,
    method: DecodingMethod,
    config: &DecodeConfig,
) -> Result<DecodeOutcome> {
    let branched = context.extended(candidate);
    match method {
        DecodingMethod::Greedy => greedy_decode(model, &branched, config.speculation_max_tokens),
        DecodingMethod::Beam => {
            beam_decode(model, &branched, config.beam_width, config.speculation_max_tokens)
        }
        DecodingMethod::Nucleus => {
            let seed = derive_seed(
                config.seed,
                "speculation",
                &token_payload(&branched.generated_tokens),
            );
            nucleus_decode(
                model,
                &branched,
                config.temperature,
                config.top_p,
                config.speculation_max_tokens,
                seed,
            )
        }
    }
}

/// Fuses self-evaluation and generation probabilities into propensity scores,
/// preserving input order.
pub fn propensity_scores(speculations: &[SpeculationResult], alpha: f64) -> Vec<(TokenId, f64)> {
    speculations
        .iter()
        .map(|s| (s.candidate, alpha * s.p_se + (1.0 - alpha) * s.p_gen))
        .collect()
}

/// Runs self-evaluation decoding for one query.
pub fn sed_decode(
    model: &dyn LanguageModel,
    evaluator: &dyn Evaluator,
    query: &Context,
    config: &DecodeConfig,
) -> Result<SedOutcome> {
    config.validate()?;
    let vocabulary = model.vocabulary();
    let eos = vocabulary.eos();

    let mut ctx = query.clone();
    let mut tokens: Vec<TokenId> = Vec::new();
    let mut log_prob = 0.0;
    let mut finished = FinishReason::MaxTokens;
    let mut budget = BranchingBudget::new(config.b);
    let mut records: Vec<ChaoticPointRecord> = Vec::new();
    let mut detection_calls = 0usize;
    let mut evaluator_calls = 0usize;
    // Main sampling stream: advances once per nucleus base step, exactly as
    // in a plain nucleus decode.
    let mut main_rng = DetRng::new(config.seed);
    // Cached beam continuation; invalidated whenever a chaotic point commits.
    let mut pending_beam: VecDeque<TokenId> = VecDeque::new();

    if ctx.ended(eos) {
        return Ok(SedOutcome {
            outcome: DecodeOutcome {
                tokens,
                finished_by: FinishReason::Eos,
                sequence_log_prob: 0.0,
            },
            chaotic_points: records,
            budget_used: 0,
            detection_calls,
            evaluator_calls,
        });
    }

    for position in 0..config.max_new_tokens {
        let raw = model.next_distribution(&ctx)?;
        let consumed = match config.base_method {
            DecodingMethod::Nucleus => apply_temperature(&raw, config.temperature),
            _ => raw.clone(),
        };

        detection_calls += 1;
        let measurement = if budget.exhausted() { None } else { Some(measure(&consumed)) };
        let chaotic = measurement
            .as_ref()
            .map(|m| indicator(m, config) && consumed.support_size().min(config.k) >= 2)
            .unwrap_or(false);

        let token = if chaotic {
            let measurement = measurement.unwrap();
            let candidates = top_k_tokens(&consumed, config.k);
            let question = render_response(vocabulary, &ctx.query_tokens);

            let mut speculations: Vec<SpeculationResult> = Vec::new();
            for &(candidate, p_gen) in &candidates {
                if p_gen <= 0.0 {
                    continue;
                }
                let completion =
                    speculate(model, &ctx, candidate, config.speculation_method, config)?;
                let mut response_tokens = ctx.generated_tokens.clone();
                response_tokens.push(candidate);
                response_tokens.extend_from_slice(&completion.tokens);
                let response = render_response(vocabulary, &response_tokens);
                let p_se = evaluator.self_eval_probability(&question, &response)?;
                evaluator_calls += 1;
                speculations.push(SpeculationResult { candidate, completion, p_se, p_gen });
            }

            let scored = propensity_scores(&speculations, config.alpha);
            let mut record_candidates = Vec::with_capacity(candidates.len());
            let mut spec_idx = 0usize;
            for &(candidate, p_gen) in &candidates {
                if p_gen > 0.0 {
                    let p_se = speculations[spec_idx].p_se;
                    let score = scored[spec_idx].1;
                    spec_idx += 1;
                    record_candidates.push(CandidateScore { token: candidate, p_gen, p_se, score });
                } else {
                    record_candidates.push(CandidateScore {
                        token: candidate,
                        p_gen,
                        p_se: 0.0,
                        score: 0.0,
                    });
                }
            }

            // Argmax over positive-probability candidates, ties to the lowest
            // token id.
            let chosen = record_candidates
                .iter()
                .filter(|c| c.p_gen > 0.0)
                .fold(None::<&CandidateScore>, |best, c| match best {
                    None => Some(c),
                    Some(b) if c.score > b.score || (c.score == b.score && c.token < b.token) => {
                        Some(c)
                    }
                    Some(b) => Some(b),
                })
                .expect("at least two positive candidates at a chaotic point")
                .token;

            budget.consume();
            records.push(ChaoticPointRecord {
                position,
                candidates: record_candidates,
                chosen,
                criterion_value: match config.criterion {
                    crate::core::Criterion::Entropy => measurement.entropy,
                    crate::core::Criterion::Ratio => measurement.ratio,
                },
            });
            pending_beam.clear();
            chosen
        } else {
            match config.base_method {
                DecodingMethod::Greedy => greedy_step(&raw),
                DecodingMethod::Nucleus => {
                    nucleus_step(&raw, config.temperature, config.top_p, &mut main_rng)
                }
                DecodingMethod::Beam => {
                    if pending_beam.is_empty() {
                        let remaining = config.max_new_tokens - position;
                        let continuation =
                            beam_decode(model, &ctx, config.beam_width, remaining)?;
                        pending_beam.extend(continuation.tokens);
                    }
                    pending_beam.pop_front().expect("beam continuation is non-empty")
                }
            }
        };

        log_prob += raw.prob(token).ln();
        ctx.push(token);
        tokens.push(token);
        if token == eos {
            finished = FinishReason::Eos;
            break;
        }
    }

    let budget_used = records.len();
    Ok(SedOutcome {
        outcome: DecodeOutcome { tokens, finished_by: finished, sequence_log_prob: log_prob },
        chaotic_points: records,
        budget_used,
        detection_calls,
        evaluator_calls,
    })
}
