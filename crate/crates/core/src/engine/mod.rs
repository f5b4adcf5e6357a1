//! The closed loop: entropy drives scheduling, scheduling and entropy drive
//! block selection, the active blocks shape the logits, and the logits give
//! the next entropy.
//!
//! A synthetic workload has no real attention, so pruning reaches the logits
//! through a sharpness penalty: the generated logits are scaled by
//! `1 - discarded_attention_mass`, which moves the distribution toward
//! uniform when informative context is dropped.

mod ablation;
mod config;
pub mod io;
mod report;

pub use ablation::{
    run_ablation_suite, summarize, AblationArm, AblationMetrics, AblationRow, AblationSuite,
    AblationTable, ARMS, COLUMNS,
};
pub use config::{CalibrationSettings, CostModel, EngineConfig, ResolutionRule};
pub use report::{AggregateMetrics, RunReport, SequenceSummary, PROXY_NOTE};

use serde::{Deserialize, Serialize};

use crate::calibration::{fit_calibration_temperature, miscalibrate, CalibrationFit};
use crate::controller::{update_temperature, ControllerState};
use crate::entropic_time::{record_step, CostLedger, EntropyTrace};
use crate::entropy::{estimate, tempered_softmax, EntropyEstimate, LogitVector};
use crate::error::{Error, Result};
use crate::pruner::RateLimitedPruner;
use crate::scheduler::{select_batch_scored, update_profile, SchedulingLog, SeqId, SequenceProfile};
use crate::workload::{calibration_set, make_workload, SyntheticSequence};

/// One row of the per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub seq_id: SeqId,
    pub scheduled: bool,
    pub h_value: f64,
    pub h_lower: f64,
    pub h_upper: f64,
    pub dh_plus: f64,
    pub tau_cumulative: f64,
    /// Temperature the step's distribution was sampled at.
    pub temperature: f64,
    /// Pruning threshold; 0 when every block took part without thresholding.
    pub theta: f64,
    pub n_blocks_active: usize,
    pub n_blocks_total: usize,
    pub active_tokens: usize,
    pub cost_step: f64,
    /// Entropy floor that gated the pruning decision, if one was made.
    pub h_floor: Option<f64>,
    /// The floor was below `h_min` and pruning was skipped.
    pub keep_all: bool,
    pub discarded_attention: f64,
}

/// Mutable per-sequence state of a run.
#[derive(Debug, Clone)]
pub struct SequenceState {
    pub synth: SyntheticSequence,
    pub controller: ControllerState,
    pub pruner: RateLimitedPruner,
    pub trace: EntropyTrace,
    pub ledger: CostLedger,
    pub profile: SequenceProfile,
    pub last_estimate: Option<EntropyEstimate>,
    pub resolved: bool,
    pub steps: usize,
    pub low_streak: usize,
    pub active_fraction_sum: f64,
    pub max_wait: u64,
    last_record: Option<StepRecord>,
}

impl SequenceState {
    fn carry_over(&self, step: u64) -> StepRecord {
        let n_blocks = self.synth.blocks.len();
        match self.last_record {
            Some(r) => StepRecord {
                step,
                scheduled: false,
                dh_plus: 0.0,
                cost_step: 0.0,
                discarded_attention: 0.0,
                ..r
            },
            None => StepRecord {
                step,
                seq_id: self.synth.seq_id,
                scheduled: false,
                h_value: 0.0,
                h_lower: 0.0,
                h_upper: 0.0,
                dh_plus: 0.0,
                tau_cumulative: 0.0,
                temperature: self.controller.temperature,
                theta: 0.0,
                n_blocks_active: n_blocks,
                n_blocks_total: n_blocks,
                active_tokens: self.synth.total_tokens(),
                cost_step: 0.0,
                h_floor: None,
                keep_all: false,
                discarded_attention: 0.0,
            },
        }
    }
}

/// A running simulation.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    sequences: Vec<SequenceState>,
    tick: u64,
    log: SchedulingLog,
    calibration: Option<CalibrationFit>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let calibration = if cfg.calibration.calibration_enabled {
            let w = &cfg.workload;
            let samples = calibration_set(
                w.seed,
                cfg.calibration.samples.max(1),
                w.vocab_size,
                w.concentration_range,
                cfg.logit_scale,
            )?;
            Some(fit_calibration_temperature(&samples, cfg.calibration.calibration_bounds)?)
        } else {
            None
        };
        let sequences = make_workload(&cfg.workload)?
            .into_iter()
            .map(|synth| {
                let mut profile = SequenceProfile::new(synth.seq_id);
                profile.compute_cost = cfg.cost_model.step_cost(synth.total_tokens());
                profile.memory_pressure = synth.total_tokens() as f64 / synth.capacity() as f64;
                SequenceState {
                    controller: ControllerState::new(cfg.initial_temperature, &cfg.controller),
                    pruner: RateLimitedPruner::new(),
                    trace: EntropyTrace::new(synth.vocab_size()),
                    ledger: CostLedger::new(),
                    profile,
                    last_estimate: None,
                    resolved: cfg.workload.max_steps == 0,
                    steps: 0,
                    low_streak: 0,
                    active_fraction_sum: 0.0,
                    max_wait: 0,
                    last_record: None,
                    synth,
                }
            })
            .collect();
        Ok(Self {
            cfg,
            sequences,
            tick: 0,
            log: SchedulingLog::new(),
            calibration,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn sequences(&self) -> &[SequenceState] {
        &self.sequences
    }

    pub fn scheduling_log(&self) -> &SchedulingLog {
        &self.log
    }

    pub fn calibration(&self) -> Option<&CalibrationFit> {
        self.calibration.as_ref()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Every sequence resolved or the tick budget is spent.
    pub fn is_finished(&self) -> bool {
        self.tick as usize >= self.cfg.max_ticks || self.sequences.iter().all(|s| s.resolved)
    }

    /// Advances one scheduling tick and returns a record for every sequence
    /// that was unresolved at the start of the tick.
    pub fn step(&mut self) -> Result<Vec<StepRecord>> {
        let unresolved: Vec<usize> = (0..self.sequences.len())
            .filter(|i| !self.sequences[*i].resolved)
            .collect();
        if unresolved.is_empty() {
            return Err(Error::EmptyInput("every sequence is resolved".into()));
        }
        let tick = self.tick;
        let selected: Vec<bool> = if self.cfg.enable_scheduling {
            let mut profiles: Vec<SequenceProfile> =
                self.sequences.iter().map(|s| s.profile.clone()).collect();
            let decisions = select_batch_scored(&mut profiles, &self.cfg.scheduler)?;
            self.log.record(tick, &decisions);
            for (s, p) in self.sequences.iter_mut().zip(profiles) {
                s.max_wait = s.max_wait.max(p.wait_steps);
                s.profile = p;
            }
            let mut chosen = vec![false; self.sequences.len()];
            for (d, picked) in decisions {
                if picked {
                    chosen[d.seq_id as usize] = true;
                }
            }
            chosen
        } else {
            self.sequences.iter().map(|s| !s.resolved).collect()
        };

        let mut records = Vec::with_capacity(unresolved.len());
        for i in unresolved {
            let record = if selected[i] {
                advance_sequence(&self.cfg, self.calibration.as_ref(), &mut self.sequences[i], tick)?
            } else {
                self.sequences[i].carry_over(tick)
            };
            records.push(record);
        }
        self.tick += 1;
        Ok(records)
    }

    /// Steps until finished, collecting every record.
    pub fn run_to_end(&mut self) -> Result<Vec<StepRecord>> {
        let mut records = Vec::new();
        while !self.is_finished() {
            records.extend(self.step()?);
        }
        Ok(records)
    }

    pub fn report(&self) -> RunReport {
        RunReport::from_engine(self)
    }
}

/// Runs one decoding step of a single sequence through the whole loop.
fn advance_sequence(
    cfg: &EngineConfig,
    calibration: Option<&CalibrationFit>,
    seq: &mut SequenceState,
    tick: u64,
) -> Result<StepRecord> {
    // attention and block selection
    seq.synth.refresh_attention();
    let blocks = &seq.synth.blocks;
    let n_blocks_total = blocks.len();
    let (active, theta, h_floor, keep_all) = match (&seq.last_estimate, cfg.enable_pruning) {
        (Some(est), true) => {
            let d = seq.pruner.select(blocks, est, &cfg.pruner)?;
            let mask: Vec<bool> = blocks.iter().map(|b| d.is_active(b.block_id)).collect();
            (mask, d.theta, Some(d.h_floor), d.keep_all)
        }
        _ => (vec![true; n_blocks_total], 0.0, None, false),
    };
    let (mut active_tokens, mut discarded) = (0usize, 0.0f64);
    for (b, keep) in blocks.iter().zip(&active) {
        if *keep {
            active_tokens += b.token_count();
        } else {
            discarded += b.attention_mass();
        }
    }
    let n_blocks_active = active.iter().filter(|k| **k).count();
    let discarded = discarded.clamp(0.0, 1.0);

    // logits, with the pruning penalty and the optional calibration wrapper
    let mut logits = seq.synth.step_logits()?;
    let mut scale = cfg.logit_scale * (1.0 - discarded);
    if let Some(fit) = calibration {
        scale /= fit.t_cal;
    }
    if scale != 1.0 {
        logits = if scale > 0.0 {
            miscalibrate(&logits, scale)?
        } else {
            LogitVector::new(vec![0.0; logits.vocab_size()])?
        };
    }
    let temperature = seq.controller.temperature;
    let dist = tempered_softmax(&logits, temperature)?;
    let est = estimate(&dist, cfg.entropy_estimator, cfg.k)?;

    if cfg.enable_sampling_control {
        seq.controller = update_temperature(&seq.controller, &cfg.controller, est.value)?;
    }

    let token = seq.synth.sample_token(&dist);
    let surprisal = -dist.probs()[token].ln();
    let cost = cfg.cost_model.step_cost(active_tokens);
    let dh_plus = record_step(&mut seq.trace, &mut seq.ledger, est.value, cost)?;

    update_profile(&mut seq.profile, dh_plus, &cfg.scheduler)?;
    seq.profile.compute_cost = cost;
    seq.synth.append_token(surprisal);
    seq.synth.advance();
    seq.profile.memory_pressure = seq.synth.total_tokens() as f64 / seq.synth.capacity() as f64;
    seq.last_estimate = Some(est);
    seq.steps += 1;
    seq.active_fraction_sum += n_blocks_active as f64 / n_blocks_total as f64;

    if est.value < cfg.resolution.entropy_threshold {
        seq.low_streak += 1;
    } else {
        seq.low_streak = 0;
    }
    if seq.low_streak >= cfg.resolution.consecutive_steps || seq.steps >= cfg.workload.max_steps {
        seq.resolved = true;
        seq.profile.resolved = true;
    }

    let record = StepRecord {
        step: tick,
        seq_id: seq.synth.seq_id,
        scheduled: true,
        h_value: est.value,
        h_lower: est.lower,
        h_upper: est.upper,
        dh_plus,
        tau_cumulative: seq.trace.tau(),
        temperature,
        theta,
        n_blocks_active,
        n_blocks_total,
        active_tokens,
        cost_step: cost,
        h_floor,
        keep_all,
        discarded_attention: discarded,
    };
    seq.last_record = Some(record);
    Ok(record)
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<StepRecord>,
    pub scheduling_log: SchedulingLog,
}

/// Runs a configuration to completion.
pub fn run(cfg: &EngineConfig) -> Result<RunOutput> {
    let mut engine = Engine::new(cfg.clone())?;
    let records = engine.run_to_end()?;
    Ok(RunOutput {
        report: engine.report(),
        records,
        scheduling_log: engine.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{EntropyRegime, WorkloadSpec};

    fn small(regime: EntropyRegime, seed: u64) -> EngineConfig {
        EngineConfig {
            max_ticks: 400,
            workload: WorkloadSpec {
                n_sequences: 8,
                vocab_size: 64,
                max_steps: 48,
                blocks_per_sequence: 6,
                tokens_per_block: 8,
                entropy_regime: regime,
                seed,
                ..Default::default()
            },
            scheduler: crate::scheduler::SchedulerConfig { batch_size: 3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn all_switches_off_is_the_baseline() {
        let cfg = small(EntropyRegime::Mixed, 1).with_switches(false, false, false);
        let out = run(&cfg).unwrap();
        assert!(out.records.iter().all(|r| r.scheduled));
        assert!(out.records.iter().all(|r| r.temperature == cfg.initial_temperature));
        assert!(out.records.iter().all(|r| r.n_blocks_active == r.n_blocks_total));
        assert_eq!(out.report.aggregate.mean_active_block_fraction, 1.0);
        // every unresolved sequence advances on every tick
        let mut per_tick = std::collections::BTreeMap::<u64, usize>::new();
        for r in &out.records {
            *per_tick.entry(r.step).or_default() += 1;
        }
        let unresolved_at = |t: u64| {
            out.records.iter().filter(|r| r.step == t).count()
        };
        for (t, n) in per_tick {
            assert_eq!(n, unresolved_at(t));
        }
    }

    #[test]
    fn pruning_with_zero_threshold_changes_nothing() {
        let mut cfg = small(EntropyRegime::NoisyPlateau, 2).with_switches(false, false, true);
        cfg.pruner.theta_max = 1e-300;
        cfg.pruner.h_min = 0.0;
        let pruned = run(&cfg).unwrap();
        let base = run(&cfg.clone().with_switches(false, false, false)).unwrap();
        assert_eq!(pruned.records.len(), base.records.len());
        for (a, b) in pruned.records.iter().zip(&base.records) {
            assert_eq!(a.cost_step, b.cost_step);
            assert_eq!(a.h_value, b.h_value);
            assert_eq!(a.n_blocks_active, a.n_blocks_total);
        }
    }

    #[test]
    fn accounting_is_conserved() {
        let out = run(&small(EntropyRegime::Mixed, 4)).unwrap();
        let cost: f64 = out.records.iter().map(|r| r.cost_step).sum();
        let tau: f64 = out.records.iter().map(|r| r.dh_plus).sum();
        let agg = &out.report.aggregate;
        assert!((cost - agg.cost_total).abs() < 1e-6 * agg.cost_total.max(1.0));
        assert!((tau - agg.tau_total).abs() < 1e-9 * agg.tau_total.max(1.0));
        assert!(out.records.iter().all(|r| r.h_lower <= r.h_value + 1e-12 && r.h_value <= r.h_upper + 1e-12));
    }

    #[test]
    fn switch_isolation() {
        let sampling_only = run(&small(EntropyRegime::Mixed, 5).with_switches(true, false, false)).unwrap();
        assert_eq!(sampling_only.report.aggregate.mean_active_block_fraction, 1.0);
        assert!(sampling_only.records.iter().all(|r| r.scheduled));
        let temps: std::collections::BTreeSet<u64> =
            sampling_only.records.iter().map(|r| r.temperature.to_bits()).collect();
        assert!(temps.len() > 1);

        let scheduling_only = run(&small(EntropyRegime::Mixed, 5).with_switches(false, true, false)).unwrap();
        assert!(scheduling_only.records.iter().any(|r| !r.scheduled));
        assert!(scheduling_only.records.iter().all(|r| r.temperature == 1.0));
        assert!(scheduling_only.records.iter().all(|r| r.n_blocks_active == r.n_blocks_total));
    }

    #[test]
    fn guards_hold_in_every_record() {
        let cfg = small(EntropyRegime::DecisiveDrops, 6);
        let out = run(&cfg).unwrap();
        for r in &out.records {
            assert!(r.n_blocks_active >= cfg.pruner.b_min.min(r.n_blocks_total));
            if let Some(f) = r.h_floor {
                assert_eq!(r.keep_all, f < cfg.pruner.h_min);
            }
        }
    }

    #[test]
    fn zero_step_workload_reports_undefined_efficiency() {
        let mut cfg = small(EntropyRegime::Mixed, 7);
        cfg.workload.max_steps = 0;
        let out = run(&cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.report.aggregate.tau_total, 0.0);
        assert_eq!(out.report.aggregate.cost_total, 0.0);
        assert!(out.report.aggregate.efficiency.is_none());
    }

    #[test]
    fn stepping_a_finished_engine_errors() {
        let mut cfg = small(EntropyRegime::Mixed, 7);
        cfg.workload.max_steps = 0;
        let mut engine = Engine::new(cfg).unwrap();
        assert!(engine.is_finished());
        assert!(matches!(engine.step(), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn calibration_wrapper_recovers_the_scale() {
        let mut cfg = small(EntropyRegime::Mixed, 8);
        cfg.logit_scale = 2.0;
        cfg.calibration.calibration_enabled = true;
        cfg.calibration.samples = 3000;
        let engine = Engine::new(cfg).unwrap();
        let fit = engine.calibration().unwrap();
        assert!((fit.t_cal - 2.0).abs() < 0.2, "{fit:?}");
    }
}
