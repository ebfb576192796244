//! Brute-force references used by tests: exhaustive path enumeration and an
//! independent recomputation of the chaotic-point choice.
//!
//! Nothing in this module calls into the `sed` or `decoders` modules; the
//! speculation decoders are re-implemented here from the same written
//! contract on purpose, so agreement between the two is evidence rather than
//! tautology. Shared helpers are limited to `core` types and the model
//! traits.

use crate::core::{
    apply_temperature, derive_seed, token_payload, CandidateScore, Context, DecodeConfig,
    DecodingMethod, DetRng, TokenId,
};
use crate::models::{Evaluator, LanguageModel};
use crate::{Error, Result};

/// Default path-count cap for [`enumerate_paths`].
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

/// Exhaustive enumeration of generation paths with exact probabilities.
#[derive(Debug, Clone)]
pub struct PathEnumeration {
    /// (token sequence, path probability), in lexicographic token order.
    /// Sequences that hit `max_depth` without eos are included truncated.
    pub paths: Vec<(Vec<TokenId>, f64)>,
    pub total_mass: f64,
}

impl PathEnumeration {
    /// The enumerated path with the highest mean log-probability; ties go to
    /// the earlier (lexicographically smaller) path.
    pub fn best_by_mean_log_prob(&self) -> Option<&(Vec<TokenId>, f64)> {
        let mut best: Option<(&(Vec<TokenId>, f64), f64)> = None;
        for path in &self.paths {
            if path.0.is_empty() {
                continue;
            }
            let mean = path.1.ln() / path.0.len() as f64;
            if best.is_none_or(|(_, b)| mean > b) {
                best = Some((path, mean));
            }
        }
        best.map(|(p, _)| p)
    }
}

/// Depth-first enumeration of every token sequence with path probability at
/// least `min_prob`, up to `max_depth` tokens, using the default cap.
pub fn enumerate_paths(
    model: &dyn LanguageModel,
    context: &Context,
    max_depth: usize,
    min_prob: f64,
) -> Result<PathEnumeration> {
    enumerate_paths_with_cap(model, context, max_depth, min_prob, DEFAULT_PATH_CAP)
}

/// As [`enumerate_paths`] with an explicit cap on the number of paths.
pub fn enumerate_paths_with_cap(
    model: &dyn LanguageModel,
    context: &Context,
    max_depth: usize,
    min_prob: f64,
    cap: usize,
) -> Result<PathEnumeration> {
    let eos = model.vocabulary().eos();
    let mut paths: Vec<(Vec<TokenId>, f64)> = Vec::new();
    let mut total_mass = 0.0;

    if context.ended(eos) {
        return Ok(PathEnumeration { paths: vec![(Vec::new(), 1.0)], total_mass: 1.0 });
    }

    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 1.0)];
    while let Some((sequence, prob)) = stack.pop() {
        let terminal = sequence.last() == Some(&eos) || sequence.len() >= max_depth;
        if terminal {
            if paths.len() >= cap {
                return Err(Error::StateSpaceTooLarge { cap });
            }
            total_mass += prob;
            paths.push((sequence, prob));
            continue;
        }
        let mut ctx = context.clone();
        ctx.generated_tokens.extend_from_slice(&sequence);
        let dist = model.next_distribution(&ctx)?;
        // Children pushed in reverse id order pop in ascending order, which
        // makes the emitted path list lexicographic.
        for i in (0..dist.len()).rev() {
            let p = dist.probs()[i];
            if p > 0.0 {
                let child_prob = prob * p;
                if child_prob >= min_prob {
                    let mut child = sequence.clone();
                    child.push(TokenId(i as u32));
                    stack.push((child, child_prob));
                }
            }
        }
    }
    Ok(PathEnumeration { paths, total_mass })
}

// ---------------------------------------------------------------------------
// Independent re-implementation of the chaotic-point choice
// ---------------------------------------------------------------------------

/// Top-k by repeated maximum scan (ties to the lowest id), written without
/// reference to the engine's sorting-based version.
fn select_top_candidates(probs: &[f64], k: usize) -> Vec<(TokenId, f64)> {
    let mut remaining: Vec<bool> = vec![true; probs.len()];
    let mut picked = Vec::with_capacity(k.min(probs.len()));
    for _ in 0..k.min(probs.len()) {
        let mut best: Option<usize> = None;
        for (i, &p) in probs.iter().enumerate() {
            if !remaining[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(j) if p > probs[j] => best = Some(i),
                _ => {}
            }
        }
        let idx = best.expect("k-th maximum exists");
        remaining[idx] = false;
        picked.push((TokenId(idx as u32), probs[idx]));
    }
    picked
}

fn argmax_token(probs: &[f64]) -> TokenId {
    let mut best = 0usize;
    for i in 1..probs.len() {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    TokenId(best as u32)
}

/// Greedy rollout, re-implemented.
fn rollout_greedy(
    model: &dyn LanguageModel,
    start: &Context,
    cap: usize,
) -> Result<Vec<TokenId>> {
    let eos = model.vocabulary().eos();
    let mut ctx = start.clone();
    let mut out = Vec::new();
    if ctx.ended(eos) {
        return Ok(out);
    }
    while out.len() < cap {
        let dist = model.next_distribution(&ctx)?;
        let token = argmax_token(dist.probs());
        out.push(token);
        ctx.push(token);
        if token == eos {
            break;
        }
    }
    Ok(out)
}

/// Nucleus rollout, re-implemented against the same written sampling
/// contract: temperature first, tokens ordered by probability descending with
/// id ascending, smallest prefix reaching `top_p`, renormalized in that
/// order, one uniform draw per step.
fn rollout_nucleus(
    model: &dyn LanguageModel,
    start: &Context,
    temperature: f64,
    top_p: f64,
    cap: usize,
    seed: u64,
) -> Result<Vec<TokenId>> {
    let eos = model.vocabulary().eos();
    let mut ctx = start.clone();
    let mut out = Vec::new();
    let mut rng = DetRng::new(seed);
    if ctx.ended(eos) {
        return Ok(out);
    }
    while out.len() < cap {
        let dist = apply_temperature(&model.next_distribution(&ctx)?, temperature);
        let mut order: Vec<usize> = (0..dist.len()).collect();
        order.sort_by(|&a, &b| {
            dist.probs()[b].partial_cmp(&dist.probs()[a]).unwrap().then(a.cmp(&b))
        });
        let mut cut = order.len();
        let mut running = 0.0;
        for (rank, &idx) in order.iter().enumerate() {
            running += dist.probs()[idx];
            if running >= top_p {
                cut = rank + 1;
                break;
            }
        }
        let total: f64 = order[..cut].iter().map(|&i| dist.probs()[i]).sum();
        let draw = rng.next_f64();
        // Same fallback rule as the engine sampler: the last positive token
        // of the slice absorbs any residual rounding mass.
        let mut fallback = TokenId(order[0] as u32);
        let mut chosen = None;
        let mut acc = 0.0;
        for &idx in &order[..cut] {
            if dist.probs()[idx] > 0.0 {
                fallback = TokenId(idx as u32);
            }
            acc += dist.probs()[idx] / total;
            if draw < acc {
                chosen = Some(TokenId(idx as u32));
                break;
            }
        }
        let token = chosen.unwrap_or(fallback);
        out.push(token);
        ctx.push(token);
        if token == eos {
            break;
        }
    }
    Ok(out)
}

/// Length-normalized beam rollout, re-implemented: top `width` children of
/// the whole frontier by cumulative log-probability each step (stable on
/// ties), eos children retired, final pick by mean log-probability with
/// retired hypotheses winning ties.
fn rollout_beam(
    model: &dyn LanguageModel,
    start: &Context,
    width: usize,
    cap: usize,
) -> Result<Vec<TokenId>> {
    let eos = model.vocabulary().eos();
    if start.ended(eos) {
        return Ok(Vec::new());
    }
    let mut frontier: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut retired: Vec<(Vec<TokenId>, f64)> = Vec::new();
    for _ in 0..cap {
        let mut expansions: Vec<(Vec<TokenId>, f64)> = Vec::new();
        for (seq, lp) in &frontier {
            let mut ctx = start.clone();
            ctx.generated_tokens.extend_from_slice(seq);
            let dist = model.next_distribution(&ctx)?;
            for (i, &p) in dist.probs().iter().enumerate() {
                if p > 0.0 {
                    let mut child = seq.clone();
                    child.push(TokenId(i as u32));
                    expansions.push((child, lp + p.ln()));
                }
            }
        }
        expansions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        expansions.truncate(width);
        frontier.clear();
        for exp in expansions {
            if exp.0.last() == Some(&eos) {
                retired.push(exp);
            } else {
                frontier.push(exp);
            }
        }
        if frontier.is_empty() {
            break;
        }
    }
    let mut best: Option<(&(Vec<TokenId>, f64), f64)> = None;
    for candidate in retired.iter().chain(frontier.iter()) {
        let mean = candidate.1 / candidate.0.len() as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((candidate, mean));
        }
    }
    Ok(best.expect("beam rollout yields a hypothesis").0 .0.clone())
}

/// Independently recomputes the argmax-propensity token for one chaotic
/// point: own top-k, own speculation rollouts, evaluator queries, and the
/// fused score with the lowest-id tie-break over positive-probability
/// candidates. `caps` supplies thresholds, caps, and the seed; `k` and
/// `alpha` are explicit.
pub fn oracle_best_token(
    model: &dyn LanguageModel,
    evaluator: &dyn Evaluator,
    context: &Context,
    k: usize,
    alpha: f64,
    speculation_method: DecodingMethod,
    caps: &DecodeConfig,
) -> Result<(TokenId, Vec<CandidateScore>)> {
    let vocabulary = model.vocabulary();
    let raw = model.next_distribution(context)?;
    let consumed = match caps.base_method {
        DecodingMethod::Nucleus => apply_temperature(&raw, caps.temperature),
        _ => raw,
    };
    let candidates = select_top_candidates(consumed.probs(), k);

    let question = vocabulary.render(&context.query_tokens, " ");
    let mut table: Vec<CandidateScore> = Vec::with_capacity(candidates.len());
    for &(candidate, p_gen) in &candidates {
        if p_gen <= 0.0 {
            table.push(CandidateScore { token: candidate, p_gen, p_se: 0.0, score: 0.0 });
            continue;
        }
        let branched = context.extended(candidate);
        let continuation = match speculation_method {
            DecodingMethod::Greedy => {
                rollout_greedy(model, &branched, caps.speculation_max_tokens)?
            }
            DecodingMethod::Beam => {
                rollout_beam(model, &branched, caps.beam_width, caps.speculation_max_tokens)?
            }
            DecodingMethod::Nucleus => {
                let seed = derive_seed(
                    caps.seed,
                    "speculation",
                    &token_payload(&branched.generated_tokens),
                );
                rollout_nucleus(
                    model,
                    &branched,
                    caps.temperature,
                    caps.top_p,
                    caps.speculation_max_tokens,
                    seed,
                )?
            }
        };
        let mut response_tokens = context.generated_tokens.clone();
        response_tokens.push(candidate);
        response_tokens.extend_from_slice(&continuation);
        let response = vocabulary.render(&response_tokens, " ");
        let p_se = evaluator.self_eval_probability(&question, &response)?;
        let score = alpha * p_se + (1.0 - alpha) * p_gen;
        table.push(CandidateScore { token: candidate, p_gen, p_se, score });
    }

    let mut chosen: Option<&CandidateScore> = None;
    for entry in table.iter().filter(|c| c.p_gen > 0.0) {
        let replace = match chosen {
            None => true,
            Some(best) => {
                entry.score > best.score || (entry.score == best.score && entry.token < best.token)
            }
        };
        if replace {
            chosen = Some(entry);
        }
    }
    let chosen = chosen.expect("at least one positive-probability candidate").token;
    Ok((chosen, table))
}
