//! Seeded synthetic workloads standing in for a language model.
//!
//! Every random draw comes from a counter-addressed ChaCha8 stream: the key
//! is derived from `(seed, seq_id)` and the stream index from
//! `(step, purpose)`. A sequence's logits at step `t` therefore do not depend
//! on how many other draws happened before, which keeps runs reproducible
//! regardless of scheduling order.
//!
//! Entropy is steered through a symmetric Dirichlet concentration: large
//! concentrations give near-uniform distributions, small ones near one-hot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::LabelledLogits;
use crate::entropy::{tempered_softmax, LogitVector, ProbDist};
use crate::error::{invalid, Result};
use crate::pruner::{BlockId, KvBlockView};
use crate::scheduler::SeqId;

/// Identifier of the random stream layout, recorded in run reports.
pub const RNG_ALGORITHM: &str =
    "chacha8-rand_chacha-0.9;key=seed_from_u64(splitmix64(seed^golden*seq_id));stream=step<<3|purpose";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sequence key from the workload seed.
pub fn sequence_key(seed: u64, seq_id: u64) -> u64 {
    splitmix64(seed ^ GOLDEN.wrapping_mul(seq_id.wrapping_add(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Latent = 0,
    Logits = 1,
    Attention = 2,
    Sample = 3,
    Prompt = 4,
    Setup = 5,
}

/// The random stream for one `(key, step, purpose)` triple.
pub fn stream(key: u64, step: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream((step << 3) | purpose as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyRegime {
    DecisiveDrops,
    NoisyPlateau,
    Mixed,
}

impl std::str::FromStr for EntropyRegime {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decisive_drops" => Ok(Self::DecisiveDrops),
            "noisy_plateau" => Ok(Self::NoisyPlateau),
            "mixed" => Ok(Self::Mixed),
            other => Err(invalid(format!(
                "unknown preset '{other}' (expected decisive_drops, noisy_plateau or mixed)"
            ))),
        }
    }
}

impl std::fmt::Display for EntropyRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::DecisiveDrops => "decisive_drops",
            Self::NoisyPlateau => "noisy_plateau",
            Self::Mixed => "mixed",
        })
    }
}

/// The regime a single sequence follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceRegime {
    Decisive,
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub n_sequences: usize,
    pub vocab_size: usize,
    /// Decoding steps after which a sequence is finished.
    pub max_steps: usize,
    pub blocks_per_sequence: usize,
    pub tokens_per_block: usize,
    pub entropy_regime: EntropyRegime,
    pub concentration_range: (f64, f64),
    pub seed: u64,
    /// Attention falls by this factor per block of age.
    pub attention_decay: f64,
    /// Log-normal spread of per-token attention noise; 0 disables noise.
    pub attention_noise: f64,
    /// Per-step probability of a collapse event in decisive sequences.
    pub event_probability: f64,
    /// Concentration multiplier applied at a collapse event.
    pub drop_factor: f64,
    /// Log-normal spread of the plateau concentration between steps.
    pub plateau_jitter: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            n_sequences: 64,
            vocab_size: 256,
            max_steps: 256,
            blocks_per_sequence: 16,
            tokens_per_block: 16,
            entropy_regime: EntropyRegime::Mixed,
            concentration_range: (1e-5, 2.0),
            seed: 0,
            attention_decay: 0.8,
            attention_noise: 0.25,
            event_probability: 0.06,
            drop_factor: 0.01,
            plateau_jitter: 0.3,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sequences == 0 {
            return Err(invalid("n_sequences must be >= 1"));
        }
        if self.vocab_size < 2 {
            return Err(invalid("vocab_size must be >= 2"));
        }
        if self.blocks_per_sequence == 0 || self.tokens_per_block == 0 {
            return Err(invalid("blocks_per_sequence and tokens_per_block must be >= 1"));
        }
        let (lo, hi) = self.concentration_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid(format!("bad concentration range ({lo}, {hi})")));
        }
        if !(self.attention_decay > 0.0 && self.attention_decay <= 1.0) {
            return Err(invalid("attention_decay must be in (0, 1]"));
        }
        if !(self.attention_noise >= 0.0 && self.plateau_jitter >= 0.0) {
            return Err(invalid("noise spreads must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.event_probability) {
            return Err(invalid("event_probability must be in [0, 1]"));
        }
        if !(self.drop_factor > 0.0 && self.drop_factor <= 1.0) {
            return Err(invalid("drop_factor must be in (0, 1]"));
        }
        Ok(())
    }

    /// Number of prompt blocks each sequence starts with.
    pub fn prompt_blocks(&self) -> usize {
        (self.blocks_per_sequence / 2).max(1)
    }
}

/// One synthetic decoding stream and its KV cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSequence {
    pub seq_id: SeqId,
    pub step_index: u64,
    pub latent_concentration: f64,
    pub regime: SequenceRegime,
    /// Cached blocks, oldest first. Attention weights hold the most recent
    /// refresh.
    pub blocks: Vec<KvBlockView>,
    /// Whether the last latent update was a collapse event.
    pub collapse_event: bool,
    key: u64,
    base_concentration: f64,
    next_block_id: BlockId,
    vocab_size: usize,
    blocks_per_sequence: usize,
    tokens_per_block: usize,
    concentration_floor: f64,
    attention_decay: f64,
    attention_noise: f64,
    event_probability: f64,
    drop_factor: f64,
    plateau_jitter: f64,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Uniform draw in `(0, 1]`.
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Log of a `Dirichlet(alpha, ..., alpha)` draw, up to an additive constant.
///
/// Uses `ln G(alpha) = ln G(alpha + 1) + ln(U) / alpha` so that tiny
/// concentrations stay finite.
pub fn dirichlet_logits<R: Rng>(rng: &mut R, vocab_size: usize, alpha: f64) -> Result<LogitVector> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("concentration must be > 0, got {alpha}")));
    }
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let scores = (0..vocab_size)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            g.ln() + open_unit(rng).ln() / alpha
        })
        .collect();
    LogitVector::new(scores)
}

/// Index drawn from `dist` by inverse CDF.
pub fn sample_index<R: Rng>(dist: &ProbDist, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in dist.probs().iter().enumerate() {
        if *p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_nonzero
}

impl SyntheticSequence {
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn total_tokens(&self) -> usize {
        self.blocks.iter().map(KvBlockView::token_count).sum()
    }

    /// Token capacity of the cache.
    pub fn capacity(&self) -> usize {
        self.blocks_per_sequence * self.tokens_per_block
    }

    fn new(seq_id: SeqId, spec: &WorkloadSpec) -> Self {
        let key = sequence_key(spec.seed, seq_id as u64);
        let mut setup = stream(key, 0, Purpose::Setup);
        let regime = match spec.entropy_regime {
            EntropyRegime::DecisiveDrops => SequenceRegime::Decisive,
            EntropyRegime::NoisyPlateau => SequenceRegime::Plateau,
            EntropyRegime::Mixed => {
                if setup.random::<bool>() {
                    SequenceRegime::Decisive
                } else {
                    SequenceRegime::Plateau
                }
            }
        };
        let (lo, hi) = spec.concentration_range;
        let base = match regime {
            SequenceRegime::Decisive => log_uniform(&mut setup, (hi / 4.0).max(lo), hi),
            SequenceRegime::Plateau => log_uniform(&mut setup, (hi / 8.0).max(lo), hi),
        };
        let mut seq = Self {
            seq_id,
            step_index: 0,
            latent_concentration: base,
            regime,
            blocks: Vec::new(),
            collapse_event: false,
            key,
            base_concentration: base,
            next_block_id: 0,
            vocab_size: spec.vocab_size,
            blocks_per_sequence: spec.blocks_per_sequence,
            tokens_per_block: spec.tokens_per_block,
            concentration_floor: lo,
            attention_decay: spec.attention_decay,
            attention_noise: spec.attention_noise,
            event_probability: spec.event_probability,
            drop_factor: spec.drop_factor,
            plateau_jitter: spec.plateau_jitter,
        };
        let mut prompt = stream(key, 0, Purpose::Prompt);
        for _ in 0..spec.prompt_blocks() * spec.tokens_per_block {
            // exponential surprisals with mean 2 nats
            let s = -2.0 * open_unit(&mut prompt).ln();
            seq.append_token(s);
        }
        seq
    }

    /// Appends a generated token's surprisal to the cache, evicting the
    /// oldest block once the cache is full.
    pub fn append_token(&mut self, surprisal: f64) {
        let surprisal = if surprisal.is_finite() { surprisal.max(0.0) } else { 0.0 };
        let need_block = self
            .blocks
            .last()
            .is_none_or(|b| b.token_count() >= self.tokens_per_block);
        if need_block {
            if self.blocks.len() >= self.blocks_per_sequence {
                self.blocks.remove(0);
            }
            self.blocks.push(KvBlockView {
                block_id: self.next_block_id,
                attention_weights: Vec::new(),
                surprisals: Vec::new(),
            });
            self.next_block_id += 1;
        }
        let b = self.blocks.last_mut().expect("block exists");
        b.surprisals.push(surprisal);
        b.attention_weights.push(0.0);
    }

    /// Logits for the current step.
    pub fn step_logits(&self) -> Result<LogitVector> {
        generate_step_logits(self)
    }

    /// Refreshes every block's attention weights for the current step.
    pub fn refresh_attention(&mut self) {
        let weights = synthetic_attention_weights(self);
        for (b, w) in self.blocks.iter_mut().zip(weights) {
            b.attention_weights = w;
        }
    }

    /// Samples the current step's token from `dist`.
    pub fn sample_token(&self, dist: &ProbDist) -> usize {
        sample_index(dist, &mut stream(self.key, self.step_index, Purpose::Sample))
    }

    /// Moves to the next step and evolves the latent concentration.
    pub fn advance(&mut self) {
        self.step_index += 1;
        let mut rng = stream(self.key, self.step_index, Purpose::Latent);
        self.collapse_event = false;
        match self.regime {
            SequenceRegime::Decisive => {
                let u: f64 = rng.random();
                if u < self.event_probability && self.latent_concentration > self.concentration_floor {
                    self.latent_concentration =
                        (self.latent_concentration * self.drop_factor).max(self.concentration_floor);
                    self.collapse_event = true;
                }
            }
            SequenceRegime::Plateau => {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.latent_concentration =
                    self.base_concentration * (self.plateau_jitter * z.clamp(-2.0, 2.0)).exp();
            }
        }
    }
}

/// Logits whose temperature-1 entropy follows the sequence's latent
/// concentration. Deterministic in `(seed, seq_id, step_index)`.
pub fn generate_step_logits(seq: &SyntheticSequence) -> Result<LogitVector> {
    let mut rng = stream(seq.key, seq.step_index, Purpose::Logits);
    dirichlet_logits(&mut rng, seq.vocab_size, seq.latent_concentration)
}

/// Attention weights over the sequence's cached tokens, one list per block.
///
/// Block of age `k` (0 = newest) gets relative weight `decay^k`, each token
/// gets log-normal noise, and the whole set is normalized to sum to one.
pub fn synthetic_attention_weights(seq: &SyntheticSequence) -> Vec<Vec<f64>> {
    let mut rng = stream(seq.key, seq.step_index, Purpose::Attention);
    let n = seq.blocks.len();
    let mut out: Vec<Vec<f64>> = seq
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let age = (n - 1 - i) as i32;
            let factor = seq.attention_decay.powi(age);
            (0..b.token_count())
                .map(|_| {
                    let noise = if seq.attention_noise > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (seq.attention_noise * z).exp()
                    } else {
                        1.0
                    };
                    factor * noise
                })
                .collect()
        })
        .collect();
    let total: f64 = out.iter().flatten().sum();
    if total > 0.0 {
        for w in out.iter_mut().flatten() {
            *w /= total;
        }
    }
    out
}

/// Initializes every sequence of a workload.
pub fn make_workload(spec: &WorkloadSpec) -> Result<Vec<SyntheticSequence>> {
    spec.validate()?;
    Ok((0..spec.n_sequences as SeqId)
        .map(|id| SyntheticSequence::new(id, spec))
        .collect())
}

/// A labelled held-out set for calibration.
///
/// Labels are sampled from `softmax(z)` of Dirichlet logits `z` with
/// concentrations log-uniform in `concentration_range`; the returned logits
/// are `logit_scale * z`, so the NLL-optimal temperature is `logit_scale`.
pub fn calibration_set(
    seed: u64,
    n: usize,
    vocab_size: usize,
    concentration_range: (f64, f64),
    logit_scale: f64,
) -> Result<Vec<LabelledLogits>> {
    let key = splitmix64(seed ^ 0xCA11_B8A7_E000_0000);
    (0..n as u64)
        .map(|i| {
            let mut rng = stream(key, i, Purpose::Logits);
            let alpha = log_uniform(&mut rng, concentration_range.0, concentration_range.1);
            let z = dirichlet_logits(&mut rng, vocab_size, alpha)?;
            let p = tempered_softmax(&z, 1.0)?;
            let label = sample_index(&p, &mut stream(key, i, Purpose::Sample));
            Ok(LabelledLogits {
                logits: crate::calibration::miscalibrate(&z, logit_scale)?,
                label,
            })
        })
        .collect()
}
