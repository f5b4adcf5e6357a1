//! The entropy-targeting temperature loop on a real softmax response:
//! equilibrium, local slope, contraction, and the noisy-loop envelope.

use entropic::controller::{
    analyze_stability, find_equilibrium, iss_envelope, multiplicative_enclosure,
    simulate_noisy_loop, softmax_response, verify_contraction, ControllerConfig,
};
use entropic::entropy::LogitVector;

fn main() -> entropic::Result<()> {
    let scores: Vec<f64> = (0..128).map(|i| -0.08 * i as f64).collect();
    let response = softmax_response(LogitVector::new(scores)?);
    let cfg = ControllerConfig {
        gain: 0.3,
        target_entropy: 3.0,
        t_min: 0.1,
        t_max: 10.0,
        ..Default::default()
    };

    let t_star = find_equilibrium(&response, &cfg)?;
    let eps_h = 0.05;
    let s = analyze_stability(&response, &cfg, t_star, eps_h)?;
    println!("T* = {t_star:.4}, mu = {:.4}, a = 1 - eta mu = {:.4}", s.mu, s.contraction_ratio);
    println!("L = {:.4}, kappa = {:.4}, eps/mu = {:.4}", s.lipschitz, s.kappa, s.enclosure_radius);

    let c = verify_contraction(&response, &cfg, t_star, 10)?;
    println!(
        "noise-free probe: max ratio {:.4}, geometric mean {:.4}, contractive = {}",
        c.max_log_ratio, c.mean_log_ratio, c.contractive
    );

    // worst-case measurement noise pushes away from T*
    let t0 = t_star * 3.0;
    let traj = simulate_noisy_loop(&response, &cfg, t_star, t0, 40, |_, d| {
        if d >= 0.0 { -eps_h } else { eps_h }
    })?;
    let env = iss_envelope(traj.deltas[0], s.contraction_ratio, eps_h, s.mu, 40)?;
    println!("\n{:>3} {:>9} {:>9} {:>9}", "t", "T", "|delta|", "envelope");
    for t in (0..=40).step_by(5) {
        let (lo, hi) = multiplicative_enclosure(t_star, env[t])?;
        assert!(traj.temperatures[t] >= lo * 0.999 && traj.temperatures[t] <= hi * 1.001);
        println!("{t:>3} {:>9.4} {:>9.5} {:>9.5}", traj.temperatures[t], traj.deltas[t].abs(), env[t]);
    }
    Ok(())
}
