//! Entropic time on a hand-written entropy trace: rises cost compute but do
//! not move the clock.

use entropic::entropic_time::{
    collapse_rate, efficiency, record_step, windowed_efficiency, CostLedger, EntropyTrace,
};

fn main() -> entropic::Result<()> {
    let entropies = [4.0, 3.9, 3.95, 2.1, 2.0, 2.4, 2.3, 0.6, 0.5, 0.55, 0.1];
    let mut trace = EntropyTrace::new(256);
    let mut ledger = CostLedger::new();
    println!("{:>4} {:>6} {:>7} {:>7}", "t", "H", "dH+", "tau");
    for (t, h) in entropies.iter().enumerate() {
        let dh = record_step(&mut trace, &mut ledger, *h, 10.0)?;
        println!("{t:>4} {h:>6.2} {dh:>7.3} {:>7.3}", trace.tau());
    }
    println!();
    println!("tau = {:.3} nats after {} steps", trace.tau(), trace.len());
    println!("efficiency dtau/dC = {:.4} nats per cost unit", efficiency(&trace, &ledger)?);
    println!("collapse rate = {:.4} nats per step", collapse_rate(&trace)?);
    let w = windowed_efficiency(&trace, &ledger, 3)?;
    let last: Vec<String> = w.iter().map(|x| x.map_or("-".into(), |v| format!("{v:.3}"))).collect();
    println!("3-step windowed efficiency: {}", last.join(" "));
    Ok(())
}
