//! Entropy-stabilized sampling temperature and its stability analysis.
//!
//! The update works on the log-temperature `x = ln T`:
//!
//! ```text
//! x_{t+1} = clip(x_t + s * gain * (H_t - H*), ln t_min, ln t_max)
//! ```
//!
//! where `s = +1` for [`FeedbackSign::PaperLiteral`] and `s = -1` for
//! [`FeedbackSign::NegativeFeedback`]. Near an equilibrium `T*` with restoring
//! slope `mu` the error `delta_t = x_t - ln T*` obeys
//! `|delta_{t+1}| <= (1 - gain * mu) |delta_t| + gain * |e_t|` for measurement
//! noise `e_t`, which gives the input-to-state bound
//! `|delta_t| <= a^t |delta_0| + eps_H / mu` with `a = 1 - gain * mu`.

use serde::{Deserialize, Serialize};

use crate::entropy::{exact_entropy, tempered_softmax, LogitVector};
use crate::error::{invalid, Error, Result};

/// Finite-difference step in log-temperature used by the analyzers.
pub const DEFAULT_SLOPE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSign {
    /// `T <- T exp(gain (H - H*))`: temperature rises when entropy is above target.
    PaperLiteral,
    /// `T <- T exp(-gain (H - H*))`: restoring for responses with `dH/dT > 0`.
    NegativeFeedback,
}

impl FeedbackSign {
    fn factor(self) -> f64 {
        match self {
            FeedbackSign::PaperLiteral => 1.0,
            FeedbackSign::NegativeFeedback => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gain: f64,
    pub target_entropy: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub feedback_sign: FeedbackSign,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gain: 0.25,
            target_entropy: 2.0,
            t_min: 0.25,
            t_max: 2.0,
            feedback_sign: FeedbackSign::NegativeFeedback,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(invalid(format!("gain must be > 0, got {}", self.gain)));
        }
        if !(self.target_entropy.is_finite() && self.target_entropy >= 0.0) {
            return Err(invalid(format!(
                "target_entropy must be >= 0, got {}",
                self.target_entropy
            )));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(invalid(format!(
                "need 0 < t_min < t_max, got t_min = {}, t_max = {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    /// Checks the target against the entropy ceiling of a vocabulary.
    pub fn validate_for_vocab(&self, vocab_size: usize) -> Result<()> {
        self.validate()?;
        let ceiling = (vocab_size as f64).ln();
        if self.target_entropy > ceiling {
            return Err(invalid(format!(
                "target_entropy {} exceeds ln V = {ceiling}",
                self.target_entropy
            )));
        }
        Ok(())
    }

    pub fn clip(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub temperature: f64,
    pub log_temperature: f64,
    pub step: u64,
}

impl ControllerState {
    /// Starts at `temperature`, clipped into the configured range.
    pub fn new(temperature: f64, cfg: &ControllerConfig) -> Self {
        let temperature = cfg.clip(temperature);
        Self {
            temperature,
            log_temperature: temperature.ln(),
            step: 0,
        }
    }
}

/// One controller step driven by a measured entropy.
pub fn update_temperature(
    state: &ControllerState,
    cfg: &ControllerConfig,
    measured_entropy: f64,
) -> Result<ControllerState> {
    if measured_entropy.is_nan() {
        return Err(invalid("measured entropy is NaN"));
    }
    if measured_entropy < 0.0 {
        return Err(invalid(format!(
            "measured entropy must be >= 0, got {measured_entropy}"
        )));
    }
    let exponent = cfg.feedback_sign.factor() * cfg.gain * (measured_entropy - cfg.target_entropy);
    let temperature = cfg.clip(state.temperature * exponent.exp());
    Ok(ControllerState {
        temperature,
        log_temperature: temperature.ln(),
        step: state.step + 1,
    })
}

/// Symmetric finite difference of `H(e^x)` in `x` at `x = ln t_star`.
///
/// A negative value is restoring under [`FeedbackSign::PaperLiteral`].
pub fn estimate_local_slope<F>(response: F, t_star: f64, h_step: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(t_star > 0.0 && t_star.is_finite()) {
        return Err(invalid(format!("T* must be positive, got {t_star}")));
    }
    if !(h_step > 0.0 && h_step.is_finite()) {
        return Err(invalid(format!("finite-difference step must be > 0, got {h_step}")));
    }
    let x = t_star.ln();
    let (t_hi, t_lo) = ((x + h_step).exp(), (x - h_step).exp());
    let (h_hi, h_lo) = (response(t_hi), response(t_lo));
    if !h_hi.is_finite() {
        return Err(Error::NonFiniteResponse(t_hi));
    }
    if !h_lo.is_finite() {
        return Err(Error::NonFiniteResponse(t_lo));
    }
    Ok((h_hi - h_lo) / (2.0 * h_step))
}

/// Largest `|dH/dT|` over a log-spaced grid of the admissible range.
pub fn estimate_lipschitz<F>(response: F, t_min: f64, t_max: f64, grid: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(t_min > 0.0 && t_min < t_max) {
        return Err(invalid("need 0 < t_min < t_max"));
    }
    let grid = grid.max(2);
    let (lo, hi) = (t_min.ln(), t_max.ln());
    let mut prev_t = t_min;
    let mut prev_h = response(t_min);
    if !prev_h.is_finite() {
        return Err(Error::NonFiniteResponse(t_min));
    }
    let mut lipschitz: f64 = 0.0;
    for i in 1..=grid {
        let t = (lo + (hi - lo) * i as f64 / grid as f64).exp();
        let h = response(t);
        if !h.is_finite() {
            return Err(Error::NonFiniteResponse(t));
        }
        lipschitz = lipschitz.max(((h - prev_h) / (t - prev_t)).abs());
        prev_t = t;
        prev_h = h;
    }
    Ok(lipschitz)
}

/// Locates `T*` with `H(T*) = H*` by bisection on `ln T`.
pub fn find_equilibrium<F>(response: F, cfg: &ControllerConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    let no_eq = |reason: String| Error::NoEquilibrium {
        t_min: cfg.t_min,
        t_max: cfg.t_max,
        reason,
    };
    let g = |x: f64| -> Result<f64> {
        let t = x.exp();
        let h = response(t);
        if h.is_finite() {
            Ok(h - cfg.target_entropy)
        } else {
            Err(Error::NonFiniteResponse(t))
        }
    };
    let (mut lo, mut hi) = (cfg.t_min.ln(), cfg.t_max.ln());
    let (mut g_lo, g_hi) = (g(lo)?, g(hi)?);
    if g_lo == 0.0 {
        return Ok(lo.exp());
    }
    if g_hi == 0.0 {
        return Ok(hi.exp());
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(no_eq(format!(
            "H - H* has the same sign at both ends ({g_lo}, {g_hi})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid)?;
        if g_mid == 0.0 || (hi - lo) < 1e-14 {
            return Ok(mid.exp());
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Local stability quantities around an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityAnalysis {
    /// Restoring slope of `H(e^x)`, oriented by the feedback sign.
    pub mu: f64,
    /// Lipschitz constant of `H(T)` on `[t_min, t_max]`.
    pub lipschitz: f64,
    /// `lipschitz * t_max`, the Lipschitz constant of `H(e^x)` in `x`.
    pub kappa: f64,
    pub contraction_ratio: f64,
    pub equilibrium_temperature: f64,
    pub noise_bound: f64,
    /// Steady-state radius `eps_H / mu` of the log-temperature error.
    pub enclosure_radius: f64,
}

impl StabilityAnalysis {
    /// `0 < gain * mu < 1`.
    pub fn is_contractive(&self, cfg: &ControllerConfig) -> bool {
        let g = cfg.gain * self.mu;
        g > 0.0 && g < 1.0
    }
}

pub fn analyze_stability<F>(
    response: F,
    cfg: &ControllerConfig,
    t_star: f64,
    noise_bound: f64,
) -> Result<StabilityAnalysis>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if noise_bound < 0.0 {
        return Err(invalid("noise bound must be >= 0"));
    }
    let h = DEFAULT_SLOPE_STEP;
    if !(t_star * (-h).exp() >= cfg.t_min && t_star * h.exp() <= cfg.t_max) {
        return Err(invalid(format!(
            "T* = {t_star} too close to the clip range [{}, {}]",
            cfg.t_min, cfg.t_max
        )));
    }
    let slope = estimate_local_slope(&response, t_star, h)?;
    // restoring means the log-domain update pulls back toward T*
    let mu = -cfg.feedback_sign.factor() * slope;
    let lipschitz = estimate_lipschitz(&response, cfg.t_min, cfg.t_max, 256)?;
    Ok(StabilityAnalysis {
        mu,
        lipschitz,
        kappa: lipschitz * cfg.t_max,
        contraction_ratio: 1.0 - cfg.gain * mu,
        equilibrium_temperature: t_star,
        noise_bound,
        enclosure_radius: if mu > 0.0 { noise_bound / mu } else { f64::INFINITY },
    })
}

/// Envelope `b_t = a^t |delta0| + eps_H / mu` for `t = 0..=horizon`.
pub fn iss_envelope(
    delta0: f64,
    a: f64,
    eps_h: f64,
    mu: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid(format!("contraction ratio must be in (0, 1), got {a}")));
    }
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be > 0, got {mu}")));
    }
    if eps_h < 0.0 {
        return Err(invalid(format!("eps_H must be >= 0, got {eps_h}")));
    }
    let floor = eps_h / mu;
    let mut decay = delta0.abs();
    let mut out = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        out.push(decay + floor);
        decay *= a;
    }
    Ok(out)
}

/// `(T* e^{-rho}, T* e^{rho})`.
pub fn multiplicative_enclosure(t_star: f64, rho: f64) -> Result<(f64, f64)> {
    if !(rho >= 0.0) {
        return Err(invalid(format!("rho must be >= 0, got {rho}")));
    }
    Ok((t_star * (-rho).exp(), t_star * rho.exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub equilibrium_temperature: f64,
    pub trials: usize,
    pub steps: usize,
    /// Largest `|delta_{t+1}| / |delta_t|` in log-temperature.
    pub max_log_ratio: f64,
    /// Geometric-mean log-domain ratio across all measured steps.
    pub mean_log_ratio: f64,
    /// Largest `|T_{t+1} - T*| / |T_t - T*|`.
    pub max_temperature_ratio: f64,
    /// Estimated restoring slope times gain.
    pub gain_slope: f64,
    pub contractive: bool,
}

/// Runs noise-free controller updates from starts around `t_star`.
#[derive(Debug, Clone, Copy)]
pub struct ContractionProbe {
    pub steps: usize,
    /// Largest initial log-temperature offset.
    pub perturbation: f64,
    /// Errors smaller than this are not used for ratio estimates.
    pub resolution: f64,
}

impl Default for ContractionProbe {
    fn default() -> Self {
        Self {
            steps: 50,
            perturbation: 0.2,
            resolution: 1e-9,
        }
    }
}

impl ContractionProbe {
    pub fn run<F>(
        &self,
        response: F,
        cfg: &ControllerConfig,
        t_star: f64,
        trials: usize,
    ) -> Result<ContractionReport>
    where
        F: Fn(f64) -> f64,
    {
        cfg.validate()?;
        if !(t_star >= cfg.t_min && t_star <= cfg.t_max) {
            return Err(Error::NoEquilibrium {
                t_min: cfg.t_min,
                t_max: cfg.t_max,
                reason: format!("T* = {t_star} is outside the clip range"),
            });
        }
        let h_star = response(t_star);
        if !h_star.is_finite() {
            return Err(Error::NonFiniteResponse(t_star));
        }
        if (h_star - cfg.target_entropy).abs() > 1e-6 {
            return Err(Error::NoEquilibrium {
                t_min: cfg.t_min,
                t_max: cfg.t_max,
                reason: format!("H(T*) = {h_star} differs from H* = {}", cfg.target_entropy),
            });
        }
        let x_star = t_star.ln();
        let slope = estimate_local_slope(&response, t_star, DEFAULT_SLOPE_STEP)?;
        let gain_slope = -cfg.feedback_sign.factor() * slope * cfg.gain;

        let mut max_log_ratio: f64 = 0.0;
        let mut max_t_ratio: f64 = 0.0;
        let (mut log_ratio_sum, mut n_ratios) = (0.0, 0usize);
        for trial in 0..trials {
            let magnitude = if trials <= 1 {
                self.perturbation
            } else {
                self.perturbation * (trial + 1) as f64 / trials as f64
            };
            let sign = if trial % 2 == 0 { 1.0 } else { -1.0 };
            let mut state = ControllerState::new((x_star + sign * magnitude).exp(), cfg);
            for _ in 0..self.steps {
                let h = response(state.temperature);
                if !h.is_finite() {
                    return Err(Error::NonFiniteResponse(state.temperature));
                }
                let next = update_temperature(&state, cfg, h.max(0.0))?;
                let (d0, d1) = (
                    (state.log_temperature - x_star).abs(),
                    (next.log_temperature - x_star).abs(),
                );
                if d0 > self.resolution {
                    let r = d1 / d0;
                    max_log_ratio = max_log_ratio.max(r);
                    if r > 0.0 {
                        log_ratio_sum += r.ln();
                        n_ratios += 1;
                    }
                    let e0 = (state.temperature - t_star).abs();
                    if e0 > 0.0 {
                        max_t_ratio = max_t_ratio.max((next.temperature - t_star).abs() / e0);
                    }
                }
                state = next;
            }
        }
        let mean_log_ratio = if n_ratios > 0 {
            (log_ratio_sum / n_ratios as f64).exp()
        } else {
            0.0
        };
        Ok(ContractionReport {
            equilibrium_temperature: t_star,
            trials,
            steps: self.steps,
            max_log_ratio,
            mean_log_ratio,
            max_temperature_ratio: max_t_ratio,
            gain_slope,
            contractive: max_log_ratio < 1.0,
        })
    }
}

/// Contraction check with the default probe (50 steps per trial).
pub fn verify_contraction<F>(
    response: F,
    cfg: &ControllerConfig,
    t_star: f64,
    trials: usize,
) -> Result<ContractionReport>
where
    F: Fn(f64) -> f64,
{
    ContractionProbe::default().run(response, cfg, t_star, trials)
}

/// Synthetic response `H(T) = H* - mu (ln T - ln T*)`.
///
/// Restoring under [`FeedbackSign::PaperLiteral`] for `mu > 0`.
pub fn linear_log_response(h_star: f64, mu: f64, t_star: f64) -> impl Fn(f64) -> f64 + Clone {
    let x_star = t_star.ln();
    move |t: f64| h_star - mu * (t.ln() - x_star)
}

/// Entropy of `softmax(logits / T)` as a function of `T`.
pub fn softmax_response(logits: LogitVector) -> impl Fn(f64) -> f64 {
    move |t: f64| match tempered_softmax(&logits, t) {
        Ok(p) => exact_entropy(&p).value,
        Err(_) => f64::NAN,
    }
}

/// Trajectory of a noisy closed loop around `T*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyTrajectory {
    pub temperatures: Vec<f64>,
    /// `ln T_t - ln T*`.
    pub deltas: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Runs `horizon` controller steps where the measured entropy is
/// `response(T_t) + noise(t, delta_t)`.
pub fn simulate_noisy_loop<F, N>(
    response: F,
    cfg: &ControllerConfig,
    t_star: f64,
    t0: f64,
    horizon: usize,
    mut noise: N,
) -> Result<NoisyTrajectory>
where
    F: Fn(f64) -> f64,
    N: FnMut(usize, f64) -> f64,
{
    cfg.validate()?;
    let x_star = t_star.ln();
    let mut state = ControllerState::new(t0, cfg);
    let mut out = NoisyTrajectory {
        temperatures: vec![state.temperature],
        deltas: vec![state.log_temperature - x_star],
        noise: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let delta = state.log_temperature - x_star;
        let e = noise(t, delta);
        let h = response(state.temperature);
        if !h.is_finite() {
            return Err(Error::NonFiniteResponse(state.temperature));
        }
        // a negative measurement is clamped; the response itself may dip below 0
        // for synthetic linear responses far from T*
        state = update_temperature(&state, cfg, (h + e).max(0.0))?;
        out.noise.push(e);
        out.temperatures.push(state.temperature);
        out.deltas.push(state.log_temperature - x_star);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn literal(gain: f64, h_star: f64) -> ControllerConfig {
        ControllerConfig {
            gain,
            target_entropy: h_star,
            t_min: 0.05,
            t_max: 20.0,
            feedback_sign: FeedbackSign::PaperLiteral,
        }
    }

    #[test]
    fn update_examples() {
        let cfg = literal(0.1, 2.0);
        let s = ControllerState::new(1.0, &cfg);
        assert_eq!(update_temperature(&s, &cfg, 2.0).unwrap().temperature, 1.0);
        let next = update_temperature(&s, &cfg, 2.5).unwrap();
        assert_abs_diff_eq!(next.temperature, 0.05f64.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(next.temperature, 1.051_271, epsilon = 1e-6);
        assert_eq!(next.step, 1);

        let top = ControllerState::new(cfg.t_max, &cfg);
        assert_eq!(update_temperature(&top, &cfg, 4.0).unwrap().temperature, cfg.t_max);

        let neg = ControllerConfig { feedback_sign: FeedbackSign::NegativeFeedback, ..cfg };
        let next = update_temperature(&s, &neg, 2.5).unwrap();
        assert_abs_diff_eq!(next.temperature, (-0.05f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn update_rejects_nan() {
        let cfg = literal(0.1, 2.0);
        let s = ControllerState::new(1.0, &cfg);
        assert!(update_temperature(&s, &cfg, f64::NAN).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let bad = ControllerConfig { gain: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ControllerConfig { t_min: 2.0, t_max: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let cfg = ControllerConfig { target_entropy: 3.0, ..Default::default() };
        assert!(cfg.validate_for_vocab(8).is_err());
        assert!(cfg.validate_for_vocab(32).is_ok());
    }

    #[test]
    fn slope_examples() {
        let r = linear_log_response(2.0, 0.7, 1.5);
        assert_abs_diff_eq!(estimate_local_slope(&r, 1.5, 1e-4).unwrap(), -0.7, epsilon = 1e-8);
        assert_eq!(estimate_local_slope(|_| 1.0, 1.0, 1e-4).unwrap(), 0.0);

        let l = LogitVector::new(vec![1.0, 0.0]).unwrap();
        let slope = estimate_local_slope(softmax_response(l.clone()), 1.0, 1e-4).unwrap();
        // central difference of H at the same x with a much smaller step
        let h = softmax_response(l);
        let fd = (h(1e-6f64.exp()) - h((-1e-6f64).exp())) / 2e-6;
        assert!(slope > 0.0);
        assert_abs_diff_eq!(slope, fd, epsilon = 1e-5);

        assert!(matches!(
            estimate_local_slope(|_| f64::NAN, 1.0, 1e-4),
            Err(Error::NonFiniteResponse(_))
        ));
    }

    #[test]
    fn envelope_examples() {
        let env = iss_envelope(2.0, 0.5, 0.0, 1.0, 4).unwrap();
        assert_eq!(env, vec![2.0, 1.0, 0.5, 0.25, 0.125]);
        let env = iss_envelope(1.0, 0.9, 0.3, 0.5, 2000).unwrap();
        assert_abs_diff_eq!(*env.last().unwrap(), 0.6, epsilon = 1e-12);
        assert!(iss_envelope(1.0, 1.0, 0.0, 1.0, 3).is_err());
        assert!(iss_envelope(1.0, 0.0, 0.0, 1.0, 3).is_err());
    }

    #[test]
    fn enclosure_examples() {
        assert_eq!(multiplicative_enclosure(1.3, 0.0).unwrap(), (1.3, 1.3));
        let (lo, hi) = multiplicative_enclosure(1.0, 2f64.ln()).unwrap();
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 2.0, epsilon = 1e-15);
        assert!(multiplicative_enclosure(1.0, -0.1).is_err());
    }

    #[test]
    fn contraction_at_fixed_point_stays_put() {
        let cfg = literal(0.5, 2.0);
        let r = linear_log_response(2.0, 1.0, 1.0);
        let probe = ContractionProbe { perturbation: 0.0, ..Default::default() };
        let report = probe.run(&r, &cfg, 1.0, 3).unwrap();
        assert_eq!(report.max_log_ratio, 0.0);
    }

    #[test]
    fn contraction_ratio_matches_linear_recursion() {
        let cfg = literal(0.5, 2.0);
        let r = linear_log_response(2.0, 1.0, 1.0);
        let report = verify_contraction(&r, &cfg, 1.0, 10).unwrap();
        assert!(report.contractive);
        assert_abs_diff_eq!(report.gain_slope, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(report.max_log_ratio, 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(report.mean_log_ratio, 0.5, epsilon = 1e-4);
    }

    #[test]
    fn contraction_flags_overshooting_gain() {
        let cfg = literal(2.5, 2.0);
        let r = linear_log_response(2.0, 1.0, 1.0);
        let report = verify_contraction(&r, &cfg, 1.0, 4).unwrap();
        assert!(!report.contractive);
        assert!(report.max_log_ratio > 1.0);
    }

    #[test]
    fn contraction_requires_equilibrium() {
        let cfg = literal(0.5, 2.0);
        let r = linear_log_response(2.0, 1.0, 1.0);
        assert!(matches!(
            verify_contraction(&r, &cfg, 50.0, 2),
            Err(Error::NoEquilibrium { .. })
        ));
        assert!(matches!(
            verify_contraction(&r, &cfg, 2.0, 2),
            Err(Error::NoEquilibrium { .. })
        ));
    }

    #[test]
    fn softmax_closed_loop_converges_with_negative_feedback() {
        let l = LogitVector::new(vec![2.0, 1.0, 0.5, 0.0, -1.0, -3.0]).unwrap();
        let cfg = ControllerConfig {
            gain: 0.3,
            target_entropy: 1.2,
            t_min: 0.1,
            t_max: 10.0,
            feedback_sign: FeedbackSign::NegativeFeedback,
        };
        let response = softmax_response(l);
        let t_star = find_equilibrium(&response, &cfg).unwrap();
        assert_abs_diff_eq!(response(t_star), 1.2, epsilon = 1e-9);
        let analysis = analyze_stability(&response, &cfg, t_star, 0.0).unwrap();
        assert!(analysis.mu > 0.0);
        assert!(analysis.is_contractive(&cfg));
        assert_abs_diff_eq!(analysis.kappa, analysis.lipschitz * cfg.t_max, epsilon = 1e-15);
        let report = verify_contraction(&response, &cfg, t_star, 6).unwrap();
        assert!(report.contractive, "{report:?}");
        assert!(report.max_log_ratio <= analysis.contraction_ratio + 0.05);
    }

    #[test]
    fn worst_case_noise_stays_in_envelope() {
        let (eta, mu, eps) = (0.4, 1.0, 0.05);
        let cfg = literal(eta, 2.0);
        let r = linear_log_response(2.0, mu, 1.0);
        let delta0: f64 = 0.3;
        let traj = simulate_noisy_loop(&r, &cfg, 1.0, delta0.exp(), 200, |_, d: f64| {
            eps * if d >= 0.0 { 1.0 } else { -1.0 }
        })
        .unwrap();
        let env = iss_envelope(delta0, 1.0 - eta * mu, eps, mu, 200).unwrap();
        for (d, b) in traj.deltas.iter().zip(&env) {
            assert!(d.abs() <= b + 1e-9);
        }
        // worst case reaches the floor eps/mu
        assert_abs_diff_eq!(traj.deltas.last().unwrap().abs(), eps / mu, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn clip_safety(hs in prop::collection::vec(0.0f64..20.0, 1..100), gain in 0.01f64..5.0, literal_sign in any::<bool>()) {
            let cfg = ControllerConfig {
                gain,
                target_entropy: 2.0,
                t_min: 0.3,
                t_max: 3.0,
                feedback_sign: if literal_sign { FeedbackSign::PaperLiteral } else { FeedbackSign::NegativeFeedback },
            };
            let mut s = ControllerState::new(1.0, &cfg);
            for h in hs {
                s = update_temperature(&s, &cfg, h).unwrap();
                prop_assert!(s.temperature >= cfg.t_min && s.temperature <= cfg.t_max);
                prop_assert!((s.log_temperature - s.temperature.ln()).abs() < 1e-12);
            }
        }

        #[test]
        fn fixed_point_is_exact(t0 in 0.3f64..3.0, steps in 1usize..50, literal_sign in any::<bool>()) {
            let cfg = ControllerConfig {
                feedback_sign: if literal_sign { FeedbackSign::PaperLiteral } else { FeedbackSign::NegativeFeedback },
                ..ControllerConfig::default()
            };
            let mut s = ControllerState::new(t0, &cfg);
            let start = s.temperature;
            for _ in 0..steps {
                s = update_temperature(&s, &cfg, cfg.target_entropy).unwrap();
            }
            prop_assert_eq!(s.temperature, start);
        }

        #[test]
        fn local_contraction_rate(mu in 0.1f64..2.0, g in 0.05f64..0.95, delta0 in -0.5f64..0.5) {
            let eta = g / mu;
            let cfg = literal(eta, 2.0);
            let r = linear_log_response(2.0, mu, 1.0);
            let traj = simulate_noisy_loop(&r, &cfg, 1.0, delta0.exp(), 30, |_, _| 0.0).unwrap();
            for w in traj.deltas.windows(2) {
                if w[0].abs() > 1e-9 {
                    prop_assert!(w[1].abs() / w[0].abs() <= 1.0 - g + 1e-6);
                }
            }
        }
    }
}
