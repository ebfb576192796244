//! Foundational domain types: vocabularies, token distributions, decoding
//! contexts, configuration, and chaotic-point trace records.
//!
//! Everything here is an immutable value after construction and safe to share
//! across threads. Determinism contracts that the rest of the crate relies on
//! are pinned in this module: the tie-break rule (lowest token id wins), the
//! seeded random stream ([`DetRng`]), and the seed-derivation scheme
//! ([`derive_seed`]).

use std::collections::HashMap;
use std::fmt;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Tolerance for user-supplied probability vectors summing to one.
pub const INPUT_SUM_TOLERANCE: f64 = 1e-6;
/// Tolerance for internal arithmetic identities (score recomputation etc.).
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Index of a token within a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An ordered list of distinct token strings plus a designated end-of-sequence
/// token.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    eos: TokenId,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from distinct token strings. `eos` must be one of
    /// them.
    pub fn new(tokens: Vec<String>, eos: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {tok:?}")));
            }
        }
        let eos = *index
            .get(eos)
            .ok_or_else(|| Error::InvalidVocabulary(format!("eos token {eos:?} not in list")))?;
        Ok(Self { tokens, eos, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token_str(&self, id: TokenId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace-tokenizes `text`, requiring every piece to be in the
    /// vocabulary.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|w| self.get(w).ok_or_else(|| Error::UnknownToken(w.to_string())))
            .collect()
    }

    /// Joins token strings with `joiner`, skipping the eos token. This is the
    /// single rendering rule used everywhere a token sequence becomes text,
    /// so rendered output is bit-exact across runs.
    pub fn render(&self, tokens: &[TokenId], joiner: &str) -> String {
        let mut out = String::new();
        let mut first = true;
        for &t in tokens {
            if t == self.eos {
                continue;
            }
            if !first {
                out.push_str(joiner);
            }
            out.push_str(self.token_str(t));
            first = false;
        }
        out
    }
}

/// A normalized next-token probability vector over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    /// Validates that every entry is a non-negative finite number and the
    /// vector sums to one within [`INPUT_SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > INPUT_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token.index()]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of tokens with strictly positive probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }
}

/// Normalizes non-negative weights into a [`TokenDistribution`].
pub fn normalize(weights: &[f64]) -> Result<TokenDistribution> {
    if let Some((index, &weight)) = weights
        .iter()
        .enumerate()
        .find(|(_, &w)| w < 0.0 || !w.is_finite())
    {
        return Err(Error::NegativeWeight { index, weight });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    TokenDistribution::new(weights.iter().map(|w| w / total).collect())
}

/// Returns the `min(k, |V|)` most probable tokens, sorted by probability
/// descending with ties broken by lower token id.
pub fn top_k_tokens(dist: &TokenDistribution, k: usize) -> Vec<(TokenId, f64)> {
    let mut pairs: Vec<(TokenId, f64)> = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| (TokenId(i as u32), p))
        .collect();
    pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    pairs.truncate(k.min(dist.len()));
    pairs
}

/// Rescales probabilities as `p^(1/tau)` renormalized. `tau = 1` is an exact
/// no-op; zero entries stay zero. The renormalizing sum runs in index order,
/// which is part of the determinism contract.
pub fn apply_temperature(dist: &TokenDistribution, tau: f64) -> TokenDistribution {
    if tau == 1.0 {
        return dist.clone();
    }
    let scaled: Vec<f64> =
        dist.probs().iter().map(|&p| if p > 0.0 { p.powf(1.0 / tau) } else { 0.0 }).collect();
    let total: f64 = scaled.iter().sum();
    TokenDistribution::new(scaled.iter().map(|&q| q / total).collect())
        .expect("temperature rescaling preserves validity")
}

/// The decoding state: the user query and the tokens generated so far.
///
/// Invariant: `generated_tokens` contains the eos token at most once, and
/// only as its last element. The decoders maintain this by stopping at eos.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub query_tokens: Vec<TokenId>,
    pub generated_tokens: Vec<TokenId>,
}

impl Context {
    pub fn new(query_tokens: Vec<TokenId>) -> Self {
        Self { query_tokens, generated_tokens: Vec::new() }
    }

    pub fn with_generated(query_tokens: Vec<TokenId>, generated_tokens: Vec<TokenId>) -> Self {
        Self { query_tokens, generated_tokens }
    }

    /// Whether generation has already emitted eos.
    pub fn ended(&self, eos: TokenId) -> bool {
        self.generated_tokens.last() == Some(&eos)
    }

    pub fn push(&mut self, token: TokenId) {
        self.generated_tokens.push(token);
    }

    /// A copy of this context with one more generated token.
    pub fn extended(&self, token: TokenId) -> Self {
        let mut next = self.clone();
        next.push(token);
        next
    }
}

/// Which uncertainty measurement drives chaotic-point detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Entropy,
    Ratio,
}

/// A standard decoding method, usable for generation and for speculation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMethod {
    Greedy,
    Beam,
    Nucleus,
}

/// All decoding hyperparameters.
///
/// Defaults: ratio criterion with `delta_r = 0.8`, `delta_e = 2.25` nats,
/// `k = 5` candidates, branching budget `b = 5`, fusion `alpha = 0.8`, beam
/// width 3, temperature 0.7, top-p 0.9, greedy generation with aligned
/// speculation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub criterion: Criterion,
    /// Entropy threshold in nats. Entropy here is always natural-log based.
    pub delta_e: f64,
    /// Ratio threshold in [0, 1].
    pub delta_r: f64,
    /// Number of candidate tokens speculated at a chaotic point.
    pub k: usize,
    /// Branching budget: upper limit on treated chaotic points per decode.
    pub b: usize,
    /// Fusion coefficient between self-evaluation and generation probability.
    pub alpha: f64,
    pub max_new_tokens: usize,
    pub beam_width: usize,
    pub temperature: f64,
    pub top_p: f64,
    /// Base method used to commit tokens at non-chaotic positions.
    pub base_method: DecodingMethod,
    /// Method used to complete speculations; aligned with `base_method` by
    /// default, misalign deliberately to study the effect.
    pub speculation_method: DecodingMethod,
    pub speculation_max_tokens: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Ratio,
            delta_e: 2.25,
            delta_r: 0.8,
            k: 5,
            b: 5,
            alpha: 0.8,
            max_new_tokens: 64,
            beam_width: 3,
            temperature: 0.7,
            top_p: 0.9,
            base_method: DecodingMethod::Greedy,
            speculation_method: DecodingMethod::Greedy,
            speculation_max_tokens: 64,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.delta_r) {
            return fail(format!("delta_r must be in [0,1], got {}", self.delta_r));
        }
        if self.delta_e < 0.0 || !self.delta_e.is_finite() {
            return fail(format!("delta_e must be >= 0, got {}", self.delta_e));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must be in [0,1], got {}", self.alpha));
        }
        if self.k < 1 {
            return fail("k must be >= 1".into());
        }
        if self.max_new_tokens < 1 {
            return fail("max_new_tokens must be >= 1".into());
        }
        if self.speculation_max_tokens < 1 {
            return fail("speculation_max_tokens must be >= 1".into());
        }
        if self.beam_width < 1 {
            return fail("beam_width must be >= 1".into());
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return fail(format!("top_p must be in (0,1], got {}", self.top_p));
        }
        Ok(())
    }

    /// Same config with the speculation method deliberately misaligned.
    pub fn with_speculation_method(mut self, method: DecodingMethod) -> Self {
        self.speculation_method = method;
        self
    }
}

/// One scored candidate at a chaotic point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScore {
    pub token: TokenId,
    pub p_gen: f64,
    pub p_se: f64,
    pub score: f64,
}

/// Full audit record of one treated chaotic point.
///
/// `candidates` holds exactly `min(k, |V|)` entries in generation-probability
/// order. Candidates with zero generation probability are never speculated;
/// they appear with `p_se = 0` and `score = 0` and are excluded from the
/// argmax. Ties are broken by lowest token id among positive-probability
/// candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaoticPointRecord {
    /// 0-based index into the generated token sequence.
    pub position: usize,
    pub candidates: Vec<CandidateScore>,
    pub chosen: TokenId,
    /// The entropy or ratio value that triggered detection.
    pub criterion_value: f64,
}

/// Deterministic random stream, pinned as part of the trace contract.
///
/// Stream `v1`: ChaCha8 keyed via `seed_from_u64`, with `f64` draws taken as
/// the top 53 bits of each `u64` output. Do not change without bumping
/// [`crate::ENGINE_VERSION`].
#[derive(Debug, Clone)]
pub struct DetRng {
    inner: rand_chacha::ChaCha8Rng,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: rand_chacha::ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: u64) -> u64 {
        // Rejection-free modulo is fine here: n is tiny relative to 2^64 in
        // every call site, so the bias is far below observable levels.
        self.next_u64() % n
    }
}

/// Derives an independent stream seed from a base seed, a domain label, and
/// an arbitrary payload. SHA-256 based so derived seeds are stable across
/// platforms and releases.
pub fn derive_seed(base: u64, domain: &str, payload: &[u8]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update([domain.len() as u8]);
    hasher.update(domain.as_bytes());
    hasher.update(payload);
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Payload encoding for token sequences fed to [`derive_seed`].
pub fn token_payload(tokens: &[TokenId]) -> Vec<u8> {
    let mut out = Vec::with_capacity(tokens.len() * 4);
    for t in tokens {
        out.extend_from_slice(&t.0.to_le_bytes());
    }
    out
}
