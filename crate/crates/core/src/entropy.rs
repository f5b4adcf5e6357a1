//! Probability and entropy primitives.
//!
//! All entropies are in nats. Three estimators are provided:
//!
//! * exact Shannon entropy over the full vocabulary,
//! * top-k entropy of the distribution renormalized onto its `k` most
//!   probable tokens (a lower estimate),
//! * tail-corrected entropy, which adds the binary entropy of the tail mass
//!   and the entropy of a uniform tail (an upper bound).
//!
//! Downstream controllers consume the tail-corrected value and report the
//! gap between the two bounds as the estimation error.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Probabilities below this are treated as exact zeros in entropy sums.
pub const PROB_EPSILON: f64 = 1e-15;

const SUM_TOLERANCE: f64 = 1e-9;

/// Raw scores over a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitVector {
    scores: Vec<f64>,
}

impl LogitVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(invalid(format!(
                "vocabulary size must be at least 2, got {}",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(invalid(format!("logit {i} is not finite ({})", scores[i])));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn vocab_size(&self) -> usize {
        self.scores.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }

    pub fn into_scores(self) -> Vec<f64> {
        self.scores
    }
}

/// A normalized distribution over a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist {
    probs: Vec<f64>,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(invalid(format!(
                "vocabulary size must be at least 2, got {}",
                probs.len()
            )));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid(format!("probability {i} is invalid ({})", probs[i])));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(invalid("weights sum to zero"));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(vocab_size: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; vocab_size])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Maximum attainable entropy, `ln V`.
    pub fn max_entropy(&self) -> f64 {
        (self.probs.len() as f64).ln()
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Exact,
    Topk,
    TailCorrected,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::Topk => "topk",
            EstimatorKind::TailCorrected => "tail_corrected",
        })
    }
}

/// An entropy value bracketed by a lower and an upper estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub kind: EstimatorKind,
    /// Truncated entropy of the renormalized top-k set.
    pub lower: f64,
    /// Tail-corrected entropy.
    pub upper: f64,
    pub error_bound: f64,
    /// Number of retained tokens; 0 for the exact estimator.
    pub k: usize,
    /// Probability mass inside the top-k set.
    pub top_mass: f64,
}

/// Softmax of `logits / temperature`, computed with a max shift.
pub fn tempered_softmax(logits: &LogitVector, temperature: f64) -> Result<ProbDist> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(invalid(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let scores = logits.scores();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Ok(ProbDist { probs })
}

/// Shannon entropy `-sum p ln p`, with `0 ln 0 = 0`.
pub fn shannon_entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|p| **p > PROB_EPSILON)
        .map(|p| -p * p.ln())
        .sum();
    h.max(0.0)
}

pub fn exact_entropy(dist: &ProbDist) -> EntropyEstimate {
    let value = shannon_entropy(dist.probs()).min(dist.max_entropy());
    EntropyEstimate {
        value,
        kind: EstimatorKind::Exact,
        lower: value,
        upper: value,
        error_bound: 0.0,
        k: 0,
        top_mass: 1.0,
    }
}

/// Binary entropy `h(m) = -m ln m - (1-m) ln(1-m)`.
pub fn binary_entropy(m: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&m) {
        return Err(invalid(format!("binary entropy needs m in [0, 1], got {m}")));
    }
    Ok(shannon_entropy(&[m, 1.0 - m]))
}

/// Indices of the `k` most probable tokens. Ties at equal probability go to
/// the lower index.
pub fn top_k_indices(dist: &ProbDist, k: usize) -> Result<Vec<usize>> {
    let v = dist.vocab_size();
    if k == 0 || k > v {
        return Err(invalid(format!("k must be in [1, {v}], got {k}")));
    }
    let probs = dist.probs();
    let rank = |a: &usize, b: &usize| probs[*b].total_cmp(&probs[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..v).collect();
    if k < v {
        idx.select_nth_unstable_by(k - 1, rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(rank);
    Ok(idx)
}

struct Truncation {
    entropy: f64,
    top_mass: f64,
}

fn truncate(dist: &ProbDist, k: usize) -> Result<Truncation> {
    let idx = top_k_indices(dist, k)?;
    let probs = dist.probs();
    let top_mass: f64 = idx.iter().map(|&i| probs[i]).sum();
    let renorm: Vec<f64> = idx.iter().map(|&i| probs[i] / top_mass).collect();
    let entropy = shannon_entropy(&renorm).min((k as f64).ln());
    Ok(Truncation {
        entropy,
        top_mass: top_mass.min(1.0),
    })
}

/// `h(tail) + tail * ln(V - k)`; zero when there is no tail.
fn tail_correction(vocab_size: usize, k: usize, top_mass: f64) -> Result<f64> {
    if k >= vocab_size {
        return Ok(0.0);
    }
    let tail = (1.0 - top_mass).clamp(0.0, 1.0);
    if tail <= PROB_EPSILON {
        return Ok(0.0);
    }
    Ok(binary_entropy(tail)? + tail * ((vocab_size - k) as f64).ln())
}

/// `H~ + h(tail) + tail * ln(V - k)` without clipping to `ln V`.
///
/// On a uniform distribution this exceeds `ln V` by `(1 - k/V) ln k`.
/// Estimates report `min(bound, ln V)`, which is still an upper bound.
pub fn tail_corrected_bound(dist: &ProbDist, k: usize) -> Result<f64> {
    let trunc = truncate(dist, k)?;
    Ok(trunc.entropy + tail_correction(dist.vocab_size(), k, trunc.top_mass)?)
}

/// Entropy of the top-k set after renormalization.
///
/// The `upper` field carries the tail-corrected bound so that callers get
/// the full bracket from one pass.
pub fn topk_entropy(dist: &ProbDist, k: usize) -> Result<EntropyEstimate> {
    let trunc = truncate(dist, k)?;
    let upper = (trunc.entropy + tail_correction(dist.vocab_size(), k, trunc.top_mass)?)
        .min(dist.max_entropy())
        .max(trunc.entropy);
    Ok(EntropyEstimate {
        value: trunc.entropy,
        kind: EstimatorKind::Topk,
        lower: trunc.entropy,
        upper,
        error_bound: upper - trunc.entropy,
        k,
        top_mass: trunc.top_mass,
    })
}

/// Conservative entropy estimate assuming a uniform tail over `V - k` tokens.
pub fn tail_corrected_entropy(dist: &ProbDist, k: usize) -> Result<EntropyEstimate> {
    let v = dist.vocab_size();
    if k == 0 || k >= v {
        return Err(invalid(format!(
            "tail correction needs k in [1, {}), got {k}; use the exact or top-k estimator",
            v
        )));
    }
    let est = topk_entropy(dist, k)?;
    Ok(EntropyEstimate {
        value: est.upper,
        kind: EstimatorKind::TailCorrected,
        ..est
    })
}

pub fn estimation_error_bound(est: &EntropyEstimate) -> f64 {
    match est.kind {
        EstimatorKind::Exact => 0.0,
        _ => (est.upper - est.lower).max(0.0),
    }
}

/// Dispatches to the estimator named by `kind`. A tail-corrected request
/// with `k >= V` falls back to the exact entropy.
pub fn estimate(dist: &ProbDist, kind: EstimatorKind, k: usize) -> Result<EntropyEstimate> {
    match kind {
        EstimatorKind::Exact => Ok(exact_entropy(dist)),
        EstimatorKind::Topk => topk_entropy(dist, k),
        EstimatorKind::TailCorrected if k >= dist.vocab_size() => Ok(exact_entropy(dist)),
        EstimatorKind::TailCorrected => tail_corrected_entropy(dist, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> ProbDist {
        ProbDist::new(p.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = tempered_softmax(&LogitVector::new(vec![0.0; 3]).unwrap(), 1.0).unwrap();
        for x in p.probs() {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let p = tempered_softmax(&LogitVector::new(vec![2f64.ln(), 0.0]).unwrap(), 1.0).unwrap();
        assert_abs_diff_eq!(p.probs()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.probs()[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_handles_large_scores() {
        let l = LogitVector::new(vec![1e4, -1e4, 9_999.0]).unwrap();
        let p = tempered_softmax(&l, 1.0).unwrap();
        assert!(p.probs().iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(p.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        let l = LogitVector::new(vec![0.0, 1.0]).unwrap();
        assert!(tempered_softmax(&l, 0.0).is_err());
        assert!(tempered_softmax(&l, -1.0).is_err());
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(vec![0.0]).is_err());
    }

    #[test]
    fn exact_entropy_examples() {
        assert_abs_diff_eq!(exact_entropy(&dist(&[0.25; 4])).value, 4f64.ln(), epsilon = 1e-12);
        assert_eq!(exact_entropy(&dist(&[0.0, 1.0, 0.0])).value, 0.0);
        // 0.5 ln 2 + 2 * 0.25 ln 4 = 1.5 ln 2
        let h = exact_entropy(&dist(&[0.5, 0.25, 0.25])).value;
        assert_abs_diff_eq!(h, 1.039_720_770_839_917_9, epsilon = 1e-6);
        assert_abs_diff_eq!(h, 1.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 2f64.ln(), epsilon = 1e-15);
        // -0.25 ln 0.25 - 0.75 ln 0.75
        assert_abs_diff_eq!(binary_entropy(0.25).unwrap(), 0.562_335_144_618_885, epsilon = 1e-6);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn topk_examples() {
        let d = dist(&[0.5, 0.25, 0.125, 0.125]);
        let est = topk_entropy(&d, 2).unwrap();
        let expected = 3f64.ln() - (2.0 / 3.0) * 2f64.ln();
        assert_abs_diff_eq!(est.value, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(est.value, 0.636_514, epsilon = 1e-6);
        assert_abs_diff_eq!(est.top_mass, 0.75, epsilon = 1e-15);

        let d = dist(&[0.0, 0.5, 0.0, 0.5]);
        let est = topk_entropy(&d, 2).unwrap();
        assert_abs_diff_eq!(est.value, exact_entropy(&d).value, epsilon = 1e-12);
        assert!(topk_entropy(&d, 0).is_err());
        assert!(topk_entropy(&d, 5).is_err());
    }

    #[test]
    fn topk_ties_prefer_lower_index() {
        let d = dist(&[0.2, 0.3, 0.2, 0.3]);
        assert_eq!(top_k_indices(&d, 3).unwrap(), vec![1, 3, 0]);
        assert_eq!(top_k_indices(&d, 1).unwrap(), vec![1]);
    }

    #[test]
    fn tail_corrected_examples() {
        let d = dist(&[0.5, 0.5]);
        let est = tail_corrected_entropy(&d, 1).unwrap();
        assert_abs_diff_eq!(est.value, 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(est.lower, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(estimation_error_bound(&est), 2f64.ln(), epsilon = 1e-12);

        let d = dist(&[0.6, 0.4, 0.0, 0.0]);
        let est = tail_corrected_entropy(&d, 2).unwrap();
        assert_abs_diff_eq!(est.value, est.lower, epsilon = 1e-15);
        assert!(tail_corrected_entropy(&d, 4).is_err());
    }

    #[test]
    fn uniform_bound_excess_is_closed_form() {
        for (v, k) in [(2usize, 1usize), (16, 4), (256, 16)] {
            let d = ProbDist::uniform(v).unwrap();
            let excess = tail_corrected_bound(&d, k).unwrap() - (v as f64).ln();
            let kf = k as f64;
            assert_abs_diff_eq!(excess, (1.0 - kf / v as f64) * kf.ln(), epsilon = 1e-9);
            assert!(tail_corrected_entropy(&d, k).unwrap().value <= (v as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn exact_error_bound_is_zero() {
        let est = exact_entropy(&dist(&[0.1, 0.9]));
        assert_eq!(estimation_error_bound(&est), 0.0);
    }

    fn arb_dist() -> impl Strategy<Value = ProbDist> {
        prop::collection::vec(0.0f64..1.0, 2..64)
            .prop_filter("non-zero", |w| w.iter().sum::<f64>() > 1e-6)
            .prop_map(|w| ProbDist::from_weights(&w).unwrap())
    }

    proptest! {
        #[test]
        fn sandwich_and_range(d in arb_dist(), k_frac in 0.0f64..1.0) {
            let v = d.vocab_size();
            let k = 1 + ((v - 1) as f64 * k_frac) as usize;
            let h = exact_entropy(&d).value;
            let est = topk_entropy(&d, k).unwrap();
            prop_assert!(est.lower <= h + 1e-9);
            prop_assert!(h <= est.upper + 1e-9);
            prop_assert!(est.error_bound >= 0.0);
            prop_assert!(est.upper <= (v as f64).ln() + 1e-9);
            prop_assert!(est.lower >= 0.0);
        }

        #[test]
        fn softmax_shift_invariant(scores in prop::collection::vec(-50.0f64..50.0, 2..32), c in -100.0f64..100.0, t in 0.1f64..10.0) {
            let a = tempered_softmax(&LogitVector::new(scores.clone()).unwrap(), t).unwrap();
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let b = tempered_softmax(&LogitVector::new(shifted).unwrap(), t).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn correction_gap_shrinks_with_k(d in arb_dist()) {
            let v = d.vocab_size();
            let mut prev = f64::INFINITY;
            for k in 1..v {
                let gap = topk_entropy(&d, k).unwrap().error_bound;
                prop_assert!(gap <= prev + 1e-9, "gap grew at k={}: {} > {}", k, gap, prev);
                prev = gap;
            }
        }
    }

    #[test]
    fn entropy_response_is_lipschitz_on_compact_interval() {
        let l = LogitVector::new(vec![3.0, 1.0, 0.5, -2.0, 0.0]).unwrap();
        let h = |t: f64| exact_entropy(&tempered_softmax(&l, t).unwrap()).value;
        let step = 1e-3;
        let mut max_slope: f64 = 0.0;
        let mut t = 0.2;
        while t < 5.0 {
            let slope = (h(t + step) - h(t)) / step;
            assert!(slope.is_finite());
            max_slope = max_slope.max(slope.abs());
            t += step;
        }
        // The variance of scaled logits bounds dH/dT on this interval.
        assert!(max_slope < 10.0, "slope {max_slope}");
    }
}
