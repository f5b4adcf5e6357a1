//! Entropic pruning of paged KV blocks.
//!
//! A block's information is the attention-weighted surprisal of its tokens,
//! `I_b = sum_i a_i * (-ln p(v_i))`. Blocks with `I_b >= theta_t` take part in
//! attention. The threshold shrinks as the (conservative) entropy floor grows:
//! `theta_t = theta_max * exp(-lambda * H_floor)` with
//! `H_floor = H_est - eps_H`. Two guards apply on top:
//!
//! * when `H_floor < h_min` every block is kept,
//! * at least `min(b_min, n_blocks)` blocks are kept, highest `I_b` first.

use serde::{Deserialize, Serialize};

use crate::entropy::EntropyEstimate;
use crate::error::{invalid, Error, Result};

pub type BlockId = u32;

/// A cache block's per-token attention weights and stored surprisals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvBlockView {
    pub block_id: BlockId,
    pub attention_weights: Vec<f64>,
    pub surprisals: Vec<f64>,
}

impl KvBlockView {
    pub fn new(block_id: BlockId, attention_weights: Vec<f64>, surprisals: Vec<f64>) -> Result<Self> {
        let block = Self {
            block_id,
            attention_weights,
            surprisals,
        };
        block.validate()?;
        Ok(block)
    }

    pub fn token_count(&self) -> usize {
        self.surprisals.len()
    }

    pub fn attention_mass(&self) -> f64 {
        self.attention_weights.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.attention_weights.len() != self.surprisals.len() {
            return Err(invalid(format!(
                "block {}: {} attention weights for {} tokens",
                self.block_id,
                self.attention_weights.len(),
                self.surprisals.len()
            )));
        }
        if self.surprisals.is_empty() {
            return Err(invalid(format!("block {} has no tokens", self.block_id)));
        }
        let ok = |x: &f64| x.is_finite() && *x >= 0.0;
        if !self.attention_weights.iter().all(ok) || !self.surprisals.iter().all(ok) {
            return Err(invalid(format!(
                "block {}: weights and surprisals must be finite and >= 0",
                self.block_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    pub theta_max: f64,
    pub lambda: f64,
    pub b_min: usize,
    pub h_min: f64,
    pub eps_h: f64,
    /// Largest factor by which the threshold may move between steps.
    pub max_theta_step: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            theta_max: 0.5,
            lambda: 0.5,
            b_min: 2,
            h_min: 0.25,
            eps_h: 0.0,
            max_theta_step: 2.0,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_max.is_finite() && self.theta_max > 0.0) {
            return Err(invalid(format!("theta_max must be > 0, got {}", self.theta_max)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.b_min == 0 {
            return Err(invalid("b_min must be at least 1"));
        }
        if !(self.h_min >= 0.0 && self.eps_h >= 0.0) {
            return Err(invalid("h_min and eps_h must be >= 0"));
        }
        if !(self.max_theta_step >= 1.0) {
            return Err(invalid("max_theta_step must be >= 1"));
        }
        Ok(())
    }
}

/// `I_b = sum_i a_i * surprisal_i`, in nats.
pub fn block_information(block: &KvBlockView) -> Result<f64> {
    block.validate()?;
    Ok(block
        .attention_weights
        .iter()
        .zip(&block.surprisals)
        .map(|(a, s)| a * s)
        .sum())
}

/// `theta_max * exp(-lambda * max(h_floor, 0))`.
pub fn dynamic_threshold(h_floor: f64, cfg: &PruneConfig) -> f64 {
    cfg.theta_max * (-cfg.lambda * h_floor.max(0.0)).exp()
}

/// Entropy floor used for pruning. The margin is the larger of the
/// configured `eps_h` and the estimate's own bracket width, so a
/// tail-corrected estimate is floored at its top-k lower bound.
pub fn entropy_floor(est: &EntropyEstimate, cfg: &PruneConfig) -> f64 {
    est.value - cfg.eps_h.max(est.error_bound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    /// Kept block ids in input order.
    pub active: Vec<BlockId>,
    pub theta: f64,
    pub h_floor: f64,
    /// The entropy floor fell below `h_min` and pruning was skipped.
    pub keep_all: bool,
    /// Blocks added by the `b_min` budget after thresholding.
    pub budget_fill: usize,
}

impl PruneDecision {
    pub fn is_active(&self, id: BlockId) -> bool {
        self.active.contains(&id)
    }
}

/// Threshold filter with the entropy-floor and minimum-budget guards.
pub fn select_active_blocks(
    blocks: &[KvBlockView],
    est: &EntropyEstimate,
    cfg: &PruneConfig,
) -> Result<PruneDecision> {
    let h_floor = entropy_floor(est, cfg);
    select_with_threshold(blocks, h_floor, dynamic_threshold(h_floor, cfg), cfg)
}

fn select_with_threshold(
    blocks: &[KvBlockView],
    h_floor: f64,
    theta: f64,
    cfg: &PruneConfig,
) -> Result<PruneDecision> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput("no KV blocks to select from".into()));
    }
    let info = blocks
        .iter()
        .map(block_information)
        .collect::<Result<Vec<_>>>()?;
    if h_floor < cfg.h_min {
        return Ok(PruneDecision {
            active: blocks.iter().map(|b| b.block_id).collect(),
            theta,
            h_floor,
            keep_all: true,
            budget_fill: 0,
        });
    }
    let mut keep: Vec<bool> = info.iter().map(|i| *i >= theta).collect();
    let kept = keep.iter().filter(|k| **k).count();
    let budget = cfg.b_min.min(blocks.len());
    let mut budget_fill = 0;
    if kept < budget {
        // highest information first; later (newer) blocks win ties
        let mut order: Vec<usize> = (0..blocks.len()).filter(|i| !keep[*i]).collect();
        order.sort_by(|a, b| info[*b].total_cmp(&info[*a]).then(b.cmp(a)));
        for i in order.into_iter().take(budget - kept) {
            keep[i] = true;
            budget_fill += 1;
        }
    }
    Ok(PruneDecision {
        active: blocks
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(b, _)| b.block_id)
            .collect(),
        theta,
        h_floor,
        keep_all: false,
        budget_fill,
    })
}

/// Per-sequence pruner that limits how fast the threshold moves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateLimitedPruner {
    last_theta: Option<f64>,
}

impl RateLimitedPruner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_theta(&self) -> Option<f64> {
        self.last_theta
    }

    pub fn select(
        &mut self,
        blocks: &[KvBlockView],
        est: &EntropyEstimate,
        cfg: &PruneConfig,
    ) -> Result<PruneDecision> {
        let h_floor = entropy_floor(est, cfg);
        let mut theta = dynamic_threshold(h_floor, cfg);
        if let Some(prev) = self.last_theta {
            theta = theta.clamp(prev / cfg.max_theta_step, prev * cfg.max_theta_step);
        }
        let decision = select_with_threshold(blocks, h_floor, theta, cfg)?;
        self.last_theta = Some(theta);
        Ok(decision)
    }
}
