//! Chaotic-point detection: entropy and ratio uncertainty measures, the
//! indicator function, and the branching budget.
//!
//! `entropy`, `measure`, and `indicator` are pure. [`is_chaotic`] consumes
//! budget and therefore belongs to exactly one decode session.

use crate::core::{Criterion, DecodeConfig, TokenDistribution};

/// Uncertainty measurements for one next-token distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyMeasurement {
    /// Shannon entropy in nats.
    pub entropy: f64,
    /// Second-largest over largest probability; 0 for singleton vocabularies.
    pub ratio: f64,
    pub p_max: f64,
    pub p_sec: f64,
}

/// Cap on the number of chaotic points treated within one decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchingBudget {
    pub limit: usize,
    pub used: usize,
}

impl BranchingBudget {
    pub fn new(limit: usize) -> Self {
        Self { limit, used: 0 }
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.limit
    }

    /// Marks one chaotic point as treated.
    pub fn consume(&mut self) {
        debug_assert!(!self.exhausted());
        self.used += 1;
    }
}

/// Shannon entropy in nats, with `0 ln 0` taken as 0.
pub fn entropy(dist: &TokenDistribution) -> f64 {
    dist.probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Computes entropy plus the two-largest-probability ratio in one pass.
pub fn measure(dist: &TokenDistribution) -> UncertaintyMeasurement {
    let mut p_max = 0.0f64;
    let mut p_sec = 0.0f64;
    for &p in dist.probs() {
        if p > p_max {
            p_sec = p_max;
            p_max = p;
        } else if p > p_sec {
            p_sec = p;
        }
    }
    let ratio = if dist.len() < 2 || p_max <= 0.0 { 0.0 } else { p_sec / p_max };
    UncertaintyMeasurement { entropy: entropy(dist), ratio, p_max, p_sec }
}

/// The chaotic-point indicator for a measured distribution.
///
/// Entropy criterion: fires iff `entropy >= delta_e`. Ratio criterion: fires
/// iff `ratio >= delta_r` or `p_max <= 1 - delta_r`. Both are monotone in
/// their threshold.
pub fn indicator(m: &UncertaintyMeasurement, config: &DecodeConfig) -> bool {
    match config.criterion {
        Criterion::Entropy => m.entropy >= config.delta_e,
        Criterion::Ratio => m.ratio >= config.delta_r || m.p_max <= 1.0 - config.delta_r,
    }
}

/// Budget-gated indicator. With the budget exhausted this returns false
/// without measuring anything; when it fires it consumes one unit of budget.
pub fn is_chaotic(
    dist: &TokenDistribution,
    config: &DecodeConfig,
    budget: &mut BranchingBudget,
) -> bool {
    if budget.exhausted() {
        return false;
    }
    let fired = indicator(&measure(dist), config);
    if fired {
        budget.consume();
    }
    fired
}
