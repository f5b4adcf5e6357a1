//! Entropy flow, entropic time and resource-cost accounting.
//!
//! Entropic time `tau` advances only when entropy drops: each step adds
//! `max(0, H_{t-1} - H_t)`. Rises in entropy never move the clock backwards.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default window length for [`windowed_efficiency`].
pub const DEFAULT_EFFICIENCY_WINDOW: usize = 32;

const ENTROPY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrace {
    max_entropy: f64,
    entropies: Vec<f64>,
    /// `flows[i] = entropies[i] - entropies[i + 1]`.
    flows: Vec<f64>,
    positive_flows: Vec<f64>,
    tau: f64,
}

impl EntropyTrace {
    /// An empty trace for a vocabulary of `vocab_size` tokens.
    pub fn new(vocab_size: usize) -> Self {
        Self::with_max_entropy((vocab_size.max(1) as f64).ln())
    }

    pub fn with_max_entropy(max_entropy: f64) -> Self {
        Self {
            max_entropy,
            entropies: Vec::new(),
            flows: Vec::new(),
            positive_flows: Vec::new(),
            tau: 0.0,
        }
    }

    pub fn entropies(&self) -> &[f64] {
        &self.entropies
    }

    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    pub fn positive_flows(&self) -> &[f64] {
        &self.positive_flows
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.entropies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entropies.is_empty()
    }

    /// Positive flow that was recorded together with entropy `step`
    /// (zero for the first step).
    pub fn positive_flow_at(&self, step: usize) -> f64 {
        if step == 0 {
            0.0
        } else {
            self.positive_flows[step - 1]
        }
    }

    fn push(&mut self, h: f64) -> Result<f64> {
        if !h.is_finite() || h < -ENTROPY_SLACK || h > self.max_entropy + ENTROPY_SLACK {
            return Err(invalid(format!(
                "entropy {h} outside [0, {}]",
                self.max_entropy
            )));
        }
        let h = h.clamp(0.0, self.max_entropy);
        let mut dh_plus = 0.0;
        if let Some(&prev) = self.entropies.last() {
            let flow = prev - h;
            dh_plus = flow.max(0.0);
            self.flows.push(flow);
            self.positive_flows.push(dh_plus);
            self.tau += dh_plus;
        }
        self.entropies.push(h);
        Ok(dh_plus)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    step_costs: Vec<f64>,
    total: f64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_costs(&self) -> &[f64] {
        &self.step_costs
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    fn push(&mut self, c: f64) -> Result<()> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(invalid(format!("step cost must be finite and >= 0, got {c}")));
        }
        self.step_costs.push(c);
        self.total += c;
        Ok(())
    }
}

/// Appends one decoding step. Returns the positive entropy flow of the step.
///
/// Inputs are validated before either structure is touched, so a failed call
/// leaves both unchanged.
pub fn record_step(
    trace: &mut EntropyTrace,
    ledger: &mut CostLedger,
    entropy: f64,
    cost: f64,
) -> Result<f64> {
    if !(cost.is_finite() && cost >= 0.0) {
        return Err(invalid(format!("step cost must be finite and >= 0, got {cost}")));
    }
    let dh_plus = trace.push(entropy)?;
    ledger.push(cost)?;
    Ok(dh_plus)
}

/// Records a batch of `(entropy, cost)` steps in one pass.
pub fn record_steps(
    trace: &mut EntropyTrace,
    ledger: &mut CostLedger,
    steps: &[(f64, f64)],
) -> Result<()> {
    let max = trace.max_entropy;
    if let Some((h, c)) = steps.iter().find(|(h, c)| {
        !h.is_finite()
            || *h < -ENTROPY_SLACK
            || *h > max + ENTROPY_SLACK
            || !(c.is_finite() && *c >= 0.0)
    }) {
        return Err(invalid(format!("invalid step (H = {h}, C = {c})")));
    }
    for &(h, c) in steps {
        record_step(trace, ledger, h, c)?;
    }
    Ok(())
}

/// Cumulative `tau / C`, the discrete form of `d tau / dC`.
pub fn efficiency(trace: &EntropyTrace, ledger: &CostLedger) -> Result<f64> {
    if ledger.total() <= 0.0 {
        return Err(Error::UndefinedRatio(
            "total cost is zero; efficiency is undefined".into(),
        ));
    }
    Ok(trace.tau() / ledger.total())
}

/// `tau / C` over a sliding window of `window` steps ending at each step.
/// Entries are `None` where the window cost is zero.
pub fn windowed_efficiency(
    trace: &EntropyTrace,
    ledger: &CostLedger,
    window: usize,
) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(invalid("efficiency window must be positive"));
    }
    let n = trace.len().min(ledger.step_costs().len());
    let mut out = Vec::with_capacity(n);
    let (mut tau_w, mut cost_w) = (0.0, 0.0);
    for i in 0..n {
        tau_w += trace.positive_flow_at(i);
        cost_w += ledger.step_costs()[i];
        if i >= window {
            tau_w -= trace.positive_flow_at(i - window);
            cost_w -= ledger.step_costs()[i - window];
        }
        out.push((cost_w > 0.0).then(|| tau_w.max(0.0) / cost_w));
    }
    Ok(out)
}

/// Mean positive entropy flow per step.
pub fn collapse_rate(trace: &EntropyTrace) -> Result<f64> {
    let flows = trace.positive_flows();
    if flows.is_empty() {
        return Err(Error::EmptyInput(
            "collapse rate needs at least two recorded entropies".into(),
        ));
    }
    Ok(flows.iter().sum::<f64>() / flows.len() as f64)
}

/// Writes `step,H,dH_plus,tau,cost_step,cost_total` rows.
pub fn write_csv<W: Write>(trace: &EntropyTrace, ledger: &CostLedger, mut out: W) -> Result<()> {
    writeln!(out, "step,H,dH_plus,tau,cost_step,cost_total")?;
    let (mut tau, mut total) = (0.0, 0.0);
    for (i, (h, c)) in trace.entropies().iter().zip(ledger.step_costs()).enumerate() {
        let dh = trace.positive_flow_at(i);
        tau += dh;
        total += c;
        writeln!(out, "{i},{h},{dh},{tau},{c},{total}")?;
    }
    Ok(())
}
