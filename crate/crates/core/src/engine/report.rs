use serde::{Deserialize, Serialize};

use super::{Engine, EngineConfig};
use crate::calibration::CalibrationFit;
use crate::scheduler::SeqId;
use crate::workload::RNG_ALGORITHM;

/// Attached to every report so the cost figures are never read as timings.
pub const PROXY_NOTE: &str =
    "cost_per_token and tokens_per_cost are simulated-cost proxies for latency and throughput, not wall-clock measurements";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub seq_id: SeqId,
    pub tokens: usize,
    pub resolved: bool,
    pub tau_total: f64,
    pub cost_total: f64,
    pub efficiency: Option<f64>,
    /// Mean positive entropy drop per generated token.
    pub collapse_rate: Option<f64>,
    pub entropy_variance: Option<f64>,
    pub mean_active_block_fraction: Option<f64>,
    pub cost_per_token: Option<f64>,
    pub tokens_per_cost: Option<f64>,
    pub max_wait: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub tokens: usize,
    pub ticks: u64,
    pub resolved_sequences: usize,
    pub tau_total: f64,
    pub cost_total: f64,
    pub efficiency: Option<f64>,
    /// False when the total cost is zero.
    pub efficiency_defined: bool,
    pub collapse_rate: Option<f64>,
    /// Mean of the per-sequence entropy variances.
    pub entropy_variance: Option<f64>,
    /// Active fraction averaged over every executed step.
    pub mean_active_block_fraction: f64,
    pub cost_per_token: Option<f64>,
    pub tokens_per_cost: Option<f64>,
    pub max_wait: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub rng_algorithm: String,
    pub note: String,
    pub aggregate: AggregateMetrics,
    pub sequences: Vec<SequenceSummary>,
    pub calibration: Option<CalibrationFit>,
    pub config: EngineConfig,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn variance(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

impl RunReport {
    pub(super) fn from_engine(engine: &Engine) -> Self {
        let sequences: Vec<SequenceSummary> = engine
            .sequences
            .iter()
            .map(|s| {
                let tau = s.trace.tau();
                let cost = s.ledger.total();
                let tokens = s.steps;
                SequenceSummary {
                    seq_id: s.synth.seq_id,
                    tokens,
                    resolved: s.resolved,
                    tau_total: tau,
                    cost_total: cost,
                    efficiency: ratio(tau, cost),
                    collapse_rate: ratio(tau, tokens as f64),
                    entropy_variance: variance(s.trace.entropies()),
                    mean_active_block_fraction: ratio(s.active_fraction_sum, tokens as f64),
                    cost_per_token: ratio(cost, tokens as f64),
                    tokens_per_cost: ratio(tokens as f64, cost),
                    max_wait: s.max_wait,
                }
            })
            .collect();

        let tokens: usize = sequences.iter().map(|s| s.tokens).sum();
        let tau: f64 = sequences.iter().map(|s| s.tau_total).sum();
        let cost: f64 = sequences.iter().map(|s| s.cost_total).sum();
        let fraction_sum: f64 = engine.sequences.iter().map(|s| s.active_fraction_sum).sum();
        let variances: Vec<f64> = sequences.iter().filter_map(|s| s.entropy_variance).collect();
        let efficiency = ratio(tau, cost);
        let aggregate = AggregateMetrics {
            tokens,
            ticks: engine.tick,
            resolved_sequences: sequences.iter().filter(|s| s.resolved).count(),
            tau_total: tau,
            cost_total: cost,
            efficiency,
            efficiency_defined: efficiency.is_some(),
            collapse_rate: ratio(tau, tokens as f64),
            entropy_variance: (!variances.is_empty())
                .then(|| variances.iter().sum::<f64>() / variances.len() as f64),
            mean_active_block_fraction: if tokens == 0 {
                1.0
            } else {
                fraction_sum / tokens as f64
            },
            cost_per_token: ratio(cost, tokens as f64),
            tokens_per_cost: ratio(tokens as f64, cost),
            max_wait: sequences.iter().map(|s| s.max_wait).max().unwrap_or(0),
        };
        Self {
            seed: engine.cfg.workload.seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            note: PROXY_NOTE.to_string(),
            aggregate,
            sequences,
            calibration: engine.calibration,
            config: engine.cfg.clone(),
        }
    }
}
