//! Post-hoc temperature calibration and miscalibration stress.

use serde::{Deserialize, Serialize};

use crate::entropy::{exact_entropy, tempered_softmax, EntropyEstimate, LogitVector};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_BOUNDS: (f64, f64) = (0.05, 20.0);
const LN_T_TOLERANCE: f64 = 1e-6;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub t_cal: f64,
    /// Mean NLL at `T = 1`.
    pub nll_before: f64,
    pub nll_after: f64,
    pub n_samples: usize,
    /// The optimum sits on a search bound.
    pub at_bound: bool,
    /// The sampled NLL profile was not unimodal.
    pub non_unimodal: bool,
}

impl CalibrationFit {
    pub fn identity() -> Self {
        Self {
            t_cal: 1.0,
            nll_before: 0.0,
            nll_after: 0.0,
            n_samples: 0,
            at_bound: false,
            non_unimodal: false,
        }
    }
}

/// A labelled example: logits and the index of the observed token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledLogits {
    pub logits: LogitVector,
    pub label: usize,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean negative log-likelihood of the labels under `softmax(z / T)`.
pub fn mean_nll(samples: &[LabelledLogits], temperature: f64) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            let scores = s.logits.scores();
            let lse = log_sum_exp(scores.iter().map(|z| z / temperature));
            lse - scores[s.label] / temperature
        })
        .sum();
    total / samples.len() as f64
}

/// Fits one global temperature by golden-section search on `ln T`.
pub fn fit_calibration_temperature(
    samples: &[LabelledLogits],
    bounds: (f64, f64),
) -> Result<CalibrationFit> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("calibration needs at least one sample".into()));
    }
    let (low, high) = bounds;
    if !(low > 0.0 && low < high && high.is_finite()) {
        return Err(invalid(format!("bad calibration bounds ({low}, {high})")));
    }
    if let Some(s) = samples.iter().find(|s| s.label >= s.logits.vocab_size()) {
        return Err(invalid(format!(
            "label {} out of range for vocabulary of {}",
            s.label,
            s.logits.vocab_size()
        )));
    }
    let f = |x: f64| mean_nll(samples, x.exp());

    let (mut a, mut b) = (low.ln(), high.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > LN_T_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut x = 0.5 * (a + b);
    let mut best = f(x);
    // golden section can miss an optimum sitting on the boundary
    for edge in [low.ln(), high.ln()] {
        let fe = f(edge);
        if fe < best {
            best = fe;
            x = edge;
        }
    }
    let nll_before = mean_nll(samples, 1.0);
    let mut t_cal = x.exp().clamp(low, high);
    let mut nll_after = best;
    if (low..=high).contains(&1.0) && nll_before < nll_after {
        t_cal = 1.0;
        nll_after = nll_before;
    }
    let at_bound = (t_cal.ln() - low.ln()).abs() < 1e-4 || (t_cal.ln() - high.ln()).abs() < 1e-4;
    Ok(CalibrationFit {
        t_cal,
        nll_before,
        nll_after,
        n_samples: samples.len(),
        at_bound,
        non_unimodal: !is_unimodal(&f, low.ln(), high.ln(), 64),
    })
}

/// Samples the profile on a grid and checks it has a single descent then ascent.
fn is_unimodal(f: &impl Fn(f64) -> f64, a: f64, b: f64, grid: usize) -> bool {
    let vals: Vec<f64> = (0..=grid)
        .map(|i| f(a + (b - a) * i as f64 / grid as f64))
        .collect();
    let mut rising = false;
    for w in vals.windows(2) {
        let diff = w[1] - w[0];
        let tol = 1e-12 * w[0].abs().max(1.0);
        if diff > tol {
            rising = true;
        } else if diff < -tol && rising {
            return false;
        }
    }
    true
}

/// Entropy of `softmax(z / t_cal)`.
pub fn calibrated_entropy(logits: &LogitVector, fit: &CalibrationFit) -> Result<EntropyEstimate> {
    Ok(exact_entropy(&tempered_softmax(logits, fit.t_cal)?))
}

/// Multiplies every score by `scale`: `> 1` makes the model overconfident,
/// `< 1` underconfident.
pub fn miscalibrate(logits: &LogitVector, scale: f64) -> Result<LogitVector> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid(format!("logit scale must be > 0, got {scale}")));
    }
    LogitVector::new(logits.scores().iter().map(|z| z * scale).collect())
}
