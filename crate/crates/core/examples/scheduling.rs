//! Entropy-aware batch selection with aging, and a starvation audit.

use entropic::scheduler::{
    derived_starvation_bound, select_batch_scored, starvation_audit, update_profile,
    SchedulerConfig, SchedulingLog, SequenceProfile,
};

fn main() -> entropic::Result<()> {
    let cfg = SchedulerConfig {
        batch_size: 2,
        aging_bonus: 0.02,
        ..Default::default()
    };
    // sequence 0 resolves uncertainty quickly, 3 almost never does
    let drops = [0.9, 0.5, 0.2, 0.01, 0.05, 0.3];
    let mut profiles: Vec<SequenceProfile> = (0..drops.len() as u32)
        .map(|id| {
            let mut p = SequenceProfile::new(id);
            p.compute_cost = 1.0 + id as f64 * 0.2;
            p
        })
        .collect();
    let mut log = SchedulingLog::new();
    for tick in 0..30 {
        let decisions = select_batch_scored(&mut profiles, &cfg)?;
        log.record(tick, &decisions);
        let picked: Vec<u32> = decisions.iter().filter(|(_, s)| *s).map(|(d, _)| d.seq_id).collect();
        for id in &picked {
            update_profile(&mut profiles[*id as usize], drops[*id as usize], &cfg)?;
        }
        if tick < 8 {
            println!("tick {tick:>2}: {picked:?}");
        }
    }
    let max_base = drops.iter().cloned().fold(0.0, f64::max) / cfg.alpha;
    let bound = derived_starvation_bound(max_base, cfg.aging_bonus, drops.len(), cfg.batch_size)
        .unwrap_or(u64::MAX);
    let audit = starvation_audit(&log, bound);
    println!("\nderived bound {bound} ticks; longest waits {:?}", audit.max_wait);
    println!("flagged: {:?}", audit.flagged);
    Ok(())
}
