//! Exact, top-k and tail-corrected entropy on a peaked and a flat
//! distribution, and how the bracket narrows as k grows.

use entropic::entropy::{estimate, tail_corrected_bound, tempered_softmax, EstimatorKind, LogitVector, ProbDist};

fn show(name: &str, dist: &ProbDist) -> entropic::Result<()> {
    let exact = estimate(dist, EstimatorKind::Exact, 0)?.value;
    println!("{name}: V = {}, H = {exact:.4} nats", dist.vocab_size());
    println!("{:>6} {:>10} {:>10} {:>10} {:>9}", "k", "lower", "upper", "gap", "top mass");
    for k in [1, 4, 16, 64, 256] {
        if k >= dist.vocab_size() {
            break;
        }
        let e = estimate(dist, EstimatorKind::TailCorrected, k)?;
        println!(
            "{k:>6} {:>10.4} {:>10.4} {:>10.4} {:>9.4}",
            e.lower,
            e.upper,
            e.upper - e.lower,
            e.top_mass
        );
    }
    println!();
    Ok(())
}

fn main() -> entropic::Result<()> {
    let v = 1024;
    // Zipf-like scores: a handful of plausible tokens and a long tail
    let scores: Vec<f64> = (0..v).map(|i| -1.1 * ((i + 1) as f64).ln()).collect();
    let logits = LogitVector::new(scores)?;
    show("zipf, T = 1", &tempered_softmax(&logits, 1.0)?)?;
    show("zipf, T = 0.5", &tempered_softmax(&logits, 0.5)?)?;

    let uniform = ProbDist::uniform(256)?;
    show("uniform", &uniform)?;
    let k: f64 = 16.0;
    println!(
        "uniform, k = 16: raw bound - H = {:.6}, (1 - k/V) ln k = {:.6}",
        tail_corrected_bound(&uniform, 16)? - 256f64.ln(),
        (1.0 - k / 256.0) * k.ln()
    );
    Ok(())
}
