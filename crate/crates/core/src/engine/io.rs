//! Run artifacts: `trace.csv`, `report.json`, `schedule.csv`, `ablation.csv`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AblationSuite, AblationTable, RunOutput, RunReport, StepRecord};
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str =
    "step,seq_id,scheduled,H_value,H_lower,H_upper,dh_plus,tau,temperature,theta,n_blocks_active,cost_step";

pub fn write_trace_csv<W: Write>(records: &[StepRecord], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.seq_id,
            u8::from(r.scheduled),
            r.h_value,
            r.h_lower,
            r.h_upper,
            r.dh_plus,
            r.tau_cumulative,
            r.temperature,
            r.theta,
            r.n_blocks_active,
            r.cost_step
        )?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `trace.csv`, `schedule.csv` and `report.json` into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("trace.csv"))?;
    write_trace_csv(&out.records, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("schedule.csv"))?;
    out.scheduling_log.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut w, &out.report)?;
    w.flush()?;
    Ok(())
}

/// One subdirectory per arm plus `ablation.csv` and `ablation.json` at the top.
pub fn write_ablation(dir: &Path, suite: &AblationSuite) -> Result<AblationTable> {
    fs::create_dir_all(dir)?;
    for (arm, out) in &suite.runs {
        write_run(&dir.join(arm.id()), out)?;
    }
    let table = suite.table()?;
    fs::write(dir.join("ablation.csv"), table.to_csv())?;
    fs::write(dir.join("ablation.json"), serde_json::to_string_pretty(&table)?)?;
    Ok(table)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |v| format!("{v:.6}"))
}

pub fn describe_report(r: &RunReport) -> String {
    let a = &r.aggregate;
    let mut s = String::new();
    s.push_str(&format!("seed {}  rng {}\n", r.seed, r.rng_algorithm));
    s.push_str(&format!(
        "sequences {} ({} resolved)  tokens {}  ticks {}\n",
        r.sequences.len(),
        a.resolved_sequences,
        a.tokens,
        a.ticks
    ));
    s.push_str(&format!("tau_total {:.6}  cost_total {:.3}\n", a.tau_total, a.cost_total));
    s.push_str(&format!("efficiency {}\n", fmt_opt(a.efficiency)));
    s.push_str(&format!("collapse_rate {}\n", fmt_opt(a.collapse_rate)));
    s.push_str(&format!("entropy_variance {}\n", fmt_opt(a.entropy_variance)));
    s.push_str(&format!("mean_active_block_fraction {:.4}\n", a.mean_active_block_fraction));
    s.push_str(&format!(
        "cost_per_token {}  tokens_per_cost {}\n",
        fmt_opt(a.cost_per_token),
        fmt_opt(a.tokens_per_cost)
    ));
    s.push_str(&format!("max_wait {}\n", a.max_wait));
    if let Some(c) = &r.calibration {
        s.push_str(&format!(
            "calibration t_cal {:.4}  nll {:.4} -> {:.4}\n",
            c.t_cal, c.nll_before, c.nll_after
        ));
    }
    s.push_str(&format!("({})\n", r.note));
    s
}

/// Human-readable summary of a run or ablation output directory.
pub fn describe_dir(dir: &Path) -> Result<String> {
    let ablation = dir.join("ablation.csv");
    let report = dir.join("report.json");
    if ablation.is_file() {
        let mut s = fs::read_to_string(&ablation)?;
        let full = dir.join("full").join("report.json");
        if full.is_file() {
            s.push_str("\nfull system:\n");
            s.push_str(&describe_report(&read_report(&full)?));
        }
        Ok(s)
    } else if report.is_file() {
        Ok(describe_report(&read_report(&report)?))
    } else {
        Err(Error::InvalidArgument(format!(
            "{} holds neither report.json nor ablation.csv",
            dir.display()
        )))
    }
}
