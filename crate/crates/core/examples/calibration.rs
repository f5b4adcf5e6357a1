//! Recovering a global temperature from overconfident logits.

use entropic::calibration::{calibrated_entropy, fit_calibration_temperature, DEFAULT_BOUNDS};
use entropic::workload::calibration_set;

fn main() -> entropic::Result<()> {
    for scale in [0.5, 2.0, 4.0] {
        let samples = calibration_set(11, 5000, 128, (0.01, 1.0), scale)?;
        let fit = fit_calibration_temperature(&samples, DEFAULT_BOUNDS)?;
        let h_raw = calibrated_entropy(&samples[0].logits, &entropic::calibration::CalibrationFit::identity())?;
        let h_cal = calibrated_entropy(&samples[0].logits, &fit)?;
        println!(
            "scale {scale:>3}: T_cal = {:.3}  NLL {:.4} -> {:.4}  H(sample 0) {:.3} -> {:.3}",
            fit.t_cal, fit.nll_before, fit.nll_after, h_raw.value, h_cal.value
        );
    }
    Ok(())
}
