use std::process::Command;

use entropic::engine::{io, EngineConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entropic"))
}

#[test]
fn run_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = EngineConfig::default();
    cfg.workload.n_sequences = 4;
    cfg.workload.max_steps = 20;
    let config = dir.path().join("run.toml");
    std::fs::write(&config, cfg.to_toml_string().unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = bin().arg("run").arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), io::TRACE_HEADER);
    assert!(lines.all(|l| l.split(',').count() == 12));
    let report = io::read_report(&out.join("report.json")).unwrap();
    assert_eq!(report.config, cfg);
    assert_eq!(report.aggregate.tokens, 80);

    let summary = bin().arg("report").arg("--in").arg(&out).output().unwrap();
    assert!(summary.status.success());
    assert!(String::from_utf8_lossy(&summary.stdout).contains("efficiency"));
}

#[test]
fn ablate_writes_table_one_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ab");
    let status = bin()
        .args(["ablate", "--preset", "decisive_drops", "--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let table = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let labels: Vec<&str> = table.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        labels,
        ["configuration", "Baseline", "Sampling only", "Scheduling only", "Attention only", "Full system"]
    );
    assert!(table.lines().nth(1).unwrap().ends_with("1.00,1.00,1.00,1.00"));
    for arm in ["baseline", "sampling_only", "scheduling_only", "pruning_only", "full"] {
        assert!(out.join(arm).join("trace.csv").is_file());
    }
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin().args(["ablate", "--preset", "bursty", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("bursty"));

    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "k = 0\nentropy_estimator = \"topk\"\n").unwrap();
    let st = bin().arg("run").arg("--config").arg(&config).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!st.status.success());

    let st = bin().arg("report").arg("--in").arg(dir.path().join("missing")).output().unwrap();
    assert!(!st.status.success());
}
