//! Steps the full engine tick by tick and prints a few sequences.

use entropic::engine::{Engine, EngineConfig};
use entropic::workload::EntropyRegime;

fn main() -> entropic::Result<()> {
    let mut cfg = EngineConfig::preset(EntropyRegime::Mixed, 5);
    cfg.workload.n_sequences = 12;
    cfg.scheduler.batch_size = 4;
    let mut engine = Engine::new(cfg)?;
    println!("{:>4} {:>4} {:>6} {:>6} {:>6} {:>6} {:>7}", "tick", "seq", "H", "T", "theta", "blocks", "cost");
    while !engine.is_finished() {
        for r in engine.step()? {
            if r.scheduled && r.seq_id < 3 && r.step % 10 == 0 {
                println!(
                    "{:>4} {:>4} {:>6.3} {:>6.3} {:>6.3} {:>3}/{:<2} {:>7.1}",
                    r.step, r.seq_id, r.h_value, r.temperature, r.theta, r.n_blocks_active,
                    r.n_blocks_total, r.cost_step
                );
            }
        }
    }
    print!("\n{}", entropic::engine::io::describe_report(&engine.report()));
    Ok(())
}
