//! Entropy-gated KV block pruning: the threshold tightens as the model
//! becomes certain, and the guards keep context when it is not.

use entropic::entropy::{estimate, EstimatorKind, ProbDist};
use entropic::pruner::{block_information, select_active_blocks, KvBlockView, PruneConfig};

fn main() -> entropic::Result<()> {
    let blocks: Vec<KvBlockView> = (0..8u32)
        .map(|b| {
            let w = 0.02 * (b + 1) as f64;
            let s = if b % 3 == 0 { 4.0 } else { 1.0 };
            KvBlockView::new(b, vec![w; 4], vec![s; 4])
        })
        .collect::<entropic::Result<_>>()?;
    for b in &blocks {
        print!("I_{} = {:.3}  ", b.block_id, block_information(b)?);
    }
    println!("\n");

    let cfg = PruneConfig::default();
    for peak in [0.999, 0.9, 0.5, 0.1] {
        let mut w = vec![(1.0 - peak) / 63.0; 64];
        w[0] = peak;
        let est = estimate(&ProbDist::from_weights(&w)?, EstimatorKind::TailCorrected, 8)?;
        let d = select_active_blocks(&blocks, &est, &cfg)?;
        println!(
            "H = {:.3}  floor = {:.3}  theta = {:.3}  keep_all = {:<5}  active = {:?}",
            est.value, d.h_floor, d.theta, d.keep_all, d.active
        );
    }
    Ok(())
}
