//! The five-arm ablation averaged over a few seeds.

use entropic::engine::{run_ablation_suite, summarize, AblationMetrics, EngineConfig, ARMS};

fn main() -> entropic::Result<()> {
    let seeds = 0..4u64;
    let mut per_arm: Vec<Vec<AblationMetrics>> = vec![Vec::new(); ARMS.len()];
    for seed in seeds {
        let suite = run_ablation_suite(&EngineConfig::preset_named("mixed", seed)?)?;
        for (i, (_, m)) in suite.metrics().into_iter().enumerate() {
            per_arm[i].push(m);
        }
    }
    let rows: Vec<_> = ARMS
        .iter()
        .zip(&per_arm)
        .filter_map(|(a, ms)| AblationMetrics::mean(ms).map(|m| (*a, m)))
        .collect();
    let table = summarize(&rows)?;
    print!("{}", table.to_csv());
    println!("({})", table.note);
    Ok(())
}
