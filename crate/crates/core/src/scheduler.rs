//! Entropy-aware sequence scheduling.
//!
//! Each active sequence gets the priority
//!
//! ```text
//! pi(s) = E[dH+_s] / max(alpha C_s + beta M_s + gamma L_s, floor) + aging * wait_s
//! ```
//!
//! where `E[dH+_s]` is an exponentially weighted average of the positive
//! entropy flow the sequence produced when it last ran. The aging term bounds
//! how long any unresolved sequence can be passed over.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type SeqId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceProfile {
    pub seq_id: SeqId,
    pub ewma_dh: f64,
    pub compute_cost: f64,
    pub memory_pressure: f64,
    pub latency_risk: f64,
    pub wait_steps: u64,
    pub resolved: bool,
}

impl SequenceProfile {
    pub fn new(seq_id: SeqId) -> Self {
        Self {
            seq_id,
            ewma_dh: 0.0,
            compute_cost: 0.0,
            memory_pressure: 0.0,
            latency_risk: 0.0,
            wait_steps: 0,
            resolved: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub ewma_decay: f64,
    pub aging_bonus: f64,
    pub denominator_floor: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            batch_size: 8,
            ewma_decay: 0.25,
            aging_bonus: 1e-4,
            denominator_floor: 1e-9,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(self.ewma_decay > 0.0 && self.ewma_decay <= 1.0) {
            return Err(invalid(format!(
                "ewma_decay must be in (0, 1], got {}",
                self.ewma_decay
            )));
        }
        if !(self.aging_bonus.is_finite() && self.aging_bonus >= 0.0) {
            return Err(invalid("aging_bonus must be >= 0"));
        }
        if !(self.denominator_floor.is_finite() && self.denominator_floor >= 0.0) {
            return Err(invalid("denominator_floor must be >= 0"));
        }
        Ok(())
    }
}

/// Folds one positive-flow observation into the profile's running estimate.
pub fn update_profile(
    profile: &mut SequenceProfile,
    dh_plus: f64,
    cfg: &SchedulerConfig,
) -> Result<()> {
    if !(dh_plus.is_finite() && dh_plus >= 0.0) {
        return Err(invalid(format!("observed dH+ must be >= 0, got {dh_plus}")));
    }
    let rho = cfg.ewma_decay;
    profile.ewma_dh = (1.0 - rho) * profile.ewma_dh + rho * dh_plus;
    Ok(())
}

/// Priority without the aging term.
pub fn base_priority(profile: &SequenceProfile, cfg: &SchedulerConfig) -> Result<f64> {
    let denom = cfg.alpha * profile.compute_cost
        + cfg.beta * profile.memory_pressure
        + cfg.gamma * profile.latency_risk;
    let denom = if denom >= cfg.denominator_floor {
        denom
    } else {
        cfg.denominator_floor
    };
    if denom <= 0.0 {
        return Err(Error::UndefinedPriority(profile.seq_id));
    }
    Ok(profile.ewma_dh / denom)
}

pub fn priority_score(profile: &SequenceProfile, cfg: &SchedulerConfig) -> Result<f64> {
    Ok(base_priority(profile, cfg)? + cfg.aging_bonus * profile.wait_steps as f64)
}

/// A scored candidate from one scheduling tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub seq_id: SeqId,
    pub score: f64,
    pub wait_steps: u64,
}

fn rank(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.wait_steps.cmp(&a.wait_steps))
        .then(a.seq_id.cmp(&b.seq_id))
}

/// Scores every unresolved profile, returned in rank order.
pub fn rank_candidates(
    profiles: &[SequenceProfile],
    cfg: &SchedulerConfig,
) -> Result<Vec<Scored>> {
    let mut scored = profiles
        .iter()
        .filter(|p| !p.resolved)
        .map(|p| {
            Ok(Scored {
                seq_id: p.seq_id,
                score: priority_score(p, cfg)?,
                wait_steps: p.wait_steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(rank);
    Ok(scored)
}

/// Picks the `batch_size` highest-priority unresolved sequences.
///
/// Selected profiles have their wait reset; the other unresolved ones wait
/// one more tick. Ties go to the longer wait, then to the lower id.
pub fn select_batch(profiles: &mut [SequenceProfile], cfg: &SchedulerConfig) -> Result<Vec<SeqId>> {
    Ok(select_batch_scored(profiles, cfg)?
        .into_iter()
        .filter(|(_, selected)| *selected)
        .map(|(s, _)| s.seq_id)
        .collect())
}

/// As [`select_batch`], also returning every candidate's score and whether
/// it was picked. Scores and waits are taken before the wait update.
pub fn select_batch_scored(
    profiles: &mut [SequenceProfile],
    cfg: &SchedulerConfig,
) -> Result<Vec<(Scored, bool)>> {
    let ranked = rank_candidates(profiles, cfg)?;
    if ranked.is_empty() {
        return Err(Error::EmptyInput("no unresolved sequences to schedule".into()));
    }
    let chosen: Vec<SeqId> = ranked.iter().take(cfg.batch_size).map(|s| s.seq_id).collect();
    for p in profiles.iter_mut().filter(|p| !p.resolved) {
        if chosen.contains(&p.seq_id) {
            p.wait_steps = 0;
        } else {
            p.wait_steps += 1;
        }
    }
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i < cfg.batch_size))
        .collect())
}

/// Upper bound on consecutive waits for an unresolved sequence when every
/// base priority lies in `[0, max_base_priority]`.
///
/// After `ceil(max_base / aging)` ticks a waiting sequence outranks any
/// freshly served one; at most `ceil(n / batch)` further ticks are spent on
/// others that waited as long.
pub fn derived_starvation_bound(
    max_base_priority: f64,
    aging_bonus: f64,
    n_sequences: usize,
    batch_size: usize,
) -> Option<u64> {
    if aging_bonus <= 0.0 || batch_size == 0 {
        return None;
    }
    let aging_ticks = (max_base_priority / aging_bonus).ceil() as u64;
    Some(aging_ticks + n_sequences.div_ceil(batch_size) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub step: u64,
    pub seq_id: SeqId,
    pub score: f64,
    pub selected: bool,
    pub wait_steps: u64,
    /// Candidates are unresolved by construction; resolved sequences may be
    /// logged by callers that track them, and are excluded from the audit.
    #[serde(default)]
    pub resolved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedulingLog {
    pub rows: Vec<ScheduleRow>,
}

impl SchedulingLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: u64, decisions: &[(Scored, bool)]) {
        self.rows.extend(decisions.iter().map(|(s, selected)| ScheduleRow {
            step,
            seq_id: s.seq_id,
            score: s.score,
            selected: *selected,
            wait_steps: s.wait_steps,
            resolved: false,
        }));
    }

    pub fn ticks(&self) -> u64 {
        let mut steps: Vec<u64> = self.rows.iter().map(|r| r.step).collect();
        steps.dedup();
        steps.len() as u64
    }

    /// Writes `step,seq_id,score,selected,wait_steps` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,seq_id,score,selected,wait_steps")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.step,
                r.seq_id,
                r.score,
                u8::from(r.selected),
                r.wait_steps
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarvationReport {
    pub bound: u64,
    pub ticks_covered: u64,
    pub coverage_sufficient: bool,
    /// Longest run of consecutive unselected ticks per sequence.
    pub max_wait: BTreeMap<SeqId, u64>,
    /// Unresolved sequences whose longest wait exceeded the bound.
    pub flagged: Vec<SeqId>,
}

impl StarvationReport {
    pub fn overall_max_wait(&self) -> u64 {
        self.max_wait.values().copied().max().unwrap_or(0)
    }
}

/// Longest consecutive waits from a scheduling log, flagging unresolved
/// sequences that waited more than `bound` ticks in a row.
pub fn starvation_audit(history: &SchedulingLog, bound: u64) -> StarvationReport {
    let mut current: BTreeMap<SeqId, u64> = BTreeMap::new();
    let mut max_wait: BTreeMap<SeqId, u64> = BTreeMap::new();
    let mut flagged = Vec::new();
    for r in &history.rows {
        let run = current.entry(r.seq_id).or_insert(0);
        if r.selected || r.resolved {
            *run = 0;
        } else {
            *run += 1;
        }
        let m = max_wait.entry(r.seq_id).or_insert(0);
        if r.resolved {
            continue;
        }
        *m = (*m).max(*run);
        if *run > bound && !flagged.contains(&r.seq_id) {
            flagged.push(r.seq_id);
        }
    }
    flagged.sort_unstable();
    let ticks = history.ticks();
    StarvationReport {
        bound,
        ticks_covered: ticks,
        coverage_sufficient: ticks >= bound,
        max_wait,
        flagged,
    }
}
