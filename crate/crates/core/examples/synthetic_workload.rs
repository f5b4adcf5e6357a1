//! Entropy trajectories of the three synthetic workload regimes.

use entropic::entropy::{exact_entropy, tempered_softmax};
use entropic::workload::{make_workload, EntropyRegime, WorkloadSpec};

fn main() -> entropic::Result<()> {
    for regime in [EntropyRegime::DecisiveDrops, EntropyRegime::NoisyPlateau, EntropyRegime::Mixed] {
        let spec = WorkloadSpec {
            n_sequences: 4,
            vocab_size: 256,
            entropy_regime: regime,
            seed: 3,
            ..Default::default()
        };
        println!("{regime}");
        for mut seq in make_workload(&spec)? {
            let mut line = format!("  seq {} ({:?}):", seq.seq_id, seq.regime);
            for step in 0..48 {
                let p = tempered_softmax(&seq.step_logits()?, 1.0)?;
                if step % 6 == 0 {
                    line.push_str(&format!(" {:.2}", exact_entropy(&p).value));
                }
                seq.advance();
            }
            println!("{line}");
        }
    }
    Ok(())
}
