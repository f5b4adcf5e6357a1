use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, EngineConfig, RunOutput, RunReport};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationArm {
    Baseline,
    SamplingOnly,
    SchedulingOnly,
    PruningOnly,
    Full,
}

pub const ARMS: [AblationArm; 5] = [
    AblationArm::Baseline,
    AblationArm::SamplingOnly,
    AblationArm::SchedulingOnly,
    AblationArm::PruningOnly,
    AblationArm::Full,
];

impl AblationArm {
    /// (sampling, scheduling, pruning)
    pub fn switches(self) -> (bool, bool, bool) {
        match self {
            Self::Baseline => (false, false, false),
            Self::SamplingOnly => (true, false, false),
            Self::SchedulingOnly => (false, true, false),
            Self::PruningOnly => (false, false, true),
            Self::Full => (true, true, true),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::SamplingOnly => "sampling_only",
            Self::SchedulingOnly => "scheduling_only",
            Self::PruningOnly => "pruning_only",
            Self::Full => "full",
        }
    }

    /// Row label in the summary table.
    pub fn label(self) -> &'static str {
        match self {
            Self::Baseline => "Baseline",
            Self::SamplingOnly => "Sampling only",
            Self::SchedulingOnly => "Scheduling only",
            Self::PruningOnly => "Attention only",
            Self::Full => "Full system",
        }
    }

    pub fn apply(self, base: &EngineConfig) -> EngineConfig {
        let (a, b, c) = self.switches();
        base.clone().with_switches(a, b, c)
    }
}

impl fmt::Display for AblationArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AblationArm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ARMS.into_iter()
            .find(|a| a.id() == s || a.label() == s)
            .ok_or_else(|| invalid(format!("unknown ablation arm '{s}'")))
    }
}

/// One run per arm, in [`ARMS`] order.
#[derive(Debug, Clone)]
pub struct AblationSuite {
    pub runs: Vec<(AblationArm, RunOutput)>,
}

impl AblationSuite {
    pub fn report(&self, arm: AblationArm) -> Option<&RunReport> {
        self.runs.iter().find(|(a, _)| *a == arm).map(|(_, o)| &o.report)
    }

    pub fn metrics(&self) -> Vec<(AblationArm, AblationMetrics)> {
        self.runs
            .iter()
            .map(|(a, o)| (*a, AblationMetrics::from(&o.report)))
            .collect()
    }

    pub fn table(&self) -> Result<AblationTable> {
        summarize(&self.metrics())
    }
}

/// Runs the five arms on the same workload and seed. Arms run in parallel;
/// each is sequential and deterministic on its own.
pub fn run_ablation_suite(base: &EngineConfig) -> Result<AblationSuite> {
    base.validate()?;
    let runs = ARMS
        .par_iter()
        .map(|arm| run(&arm.apply(base)).map(|o| (*arm, o)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationSuite { runs })
}

/// The four table columns, raw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationMetrics {
    pub cost_per_token: Option<f64>,
    pub tokens_per_cost: Option<f64>,
    pub efficiency: Option<f64>,
    pub mean_dh_plus: Option<f64>,
}

pub const COLUMNS: [&str; 4] = ["cost_per_token", "tokens_per_cost", "efficiency", "mean_dh_plus"];

impl AblationMetrics {
    fn values(&self) -> [Option<f64>; 4] {
        [self.cost_per_token, self.tokens_per_cost, self.efficiency, self.mean_dh_plus]
    }

    /// Column-wise mean; a column is `None` if any input lacks it.
    pub fn mean(items: &[AblationMetrics]) -> Option<AblationMetrics> {
        if items.is_empty() {
            return None;
        }
        let col = |i: usize| -> Option<f64> {
            let vals: Option<Vec<f64>> = items.iter().map(|m| m.values()[i]).collect();
            vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        Some(AblationMetrics {
            cost_per_token: col(0),
            tokens_per_cost: col(1),
            efficiency: col(2),
            mean_dh_plus: col(3),
        })
    }
}

impl From<&RunReport> for AblationMetrics {
    fn from(r: &RunReport) -> Self {
        Self {
            cost_per_token: r.aggregate.cost_per_token,
            tokens_per_cost: r.aggregate.tokens_per_cost,
            efficiency: r.aggregate.efficiency,
            mean_dh_plus: r.aggregate.collapse_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: AblationArm,
    pub label: String,
    pub raw: AblationMetrics,
    /// Divided by the baseline; `None` where the column is not normalizable.
    pub normalized: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub columns: Vec<String>,
    pub rows: Vec<AblationRow>,
    /// Columns whose baseline value is zero or missing.
    pub not_normalizable: Vec<String>,
    pub note: String,
}

impl AblationTable {
    pub fn row(&self, arm: AblationArm) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }

    /// `configuration,cost_per_token,tokens_per_cost,efficiency,mean_dh_plus`
    /// with two decimals, `NA` for columns that cannot be normalized.
    pub fn to_csv(&self) -> String {
        let mut out = format!("configuration,{}\n", self.columns.join(","));
        for r in &self.rows {
            out.push_str(r.label.as_str());
            for v in r.normalized {
                match v {
                    Some(v) => out.push_str(&format!(",{v:.2}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Normalizes every row against the baseline row.
pub fn summarize(rows: &[(AblationArm, AblationMetrics)]) -> Result<AblationTable> {
    let base = rows
        .iter()
        .find(|(a, _)| *a == AblationArm::Baseline)
        .map(|(_, m)| m.values())
        .ok_or_else(|| invalid("ablation summary needs a baseline row"))?;
    let not_normalizable: Vec<String> = COLUMNS
        .iter()
        .zip(base)
        .filter(|(_, b)| !matches!(b, Some(b) if *b != 0.0 && b.is_finite()))
        .map(|(c, _)| c.to_string())
        .collect();
    let rows = rows
        .iter()
        .map(|(arm, m)| {
            let mut normalized = [None; 4];
            for (i, (v, b)) in m.values().into_iter().zip(base).enumerate() {
                normalized[i] = match (v, b) {
                    (Some(v), Some(b)) if b != 0.0 && b.is_finite() => Some(v / b),
                    _ => None,
                };
            }
            AblationRow {
                arm: *arm,
                label: arm.label().to_string(),
                raw: *m,
                normalized,
            }
        })
        .collect();
    Ok(AblationTable {
        columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
        not_normalizable,
        note: super::PROXY_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(c: f64, t: f64, e: f64, d: f64) -> AblationMetrics {
        AblationMetrics {
            cost_per_token: Some(c),
            tokens_per_cost: Some(t),
            efficiency: Some(e),
            mean_dh_plus: Some(d),
        }
    }

    #[test]
    fn identical_reports_normalize_to_one() {
        let rows: Vec<_> = ARMS.iter().map(|a| (*a, m(4.0, 0.25, 0.1, 0.3))).collect();
        let t = summarize(&rows).unwrap();
        for r in &t.rows {
            assert_eq!(r.normalized, [Some(1.0); 4]);
        }
        assert!(t.not_normalizable.is_empty());
        assert!(t.to_csv().contains("Baseline,1.00,1.00,1.00,1.00"));
    }

    #[test]
    fn division_and_zero_guard() {
        let rows = vec![
            (AblationArm::Baseline, m(4.0, 0.25, 0.0, 0.3)),
            (AblationArm::Full, m(2.0, 0.5, 0.2, 0.3)),
        ];
        let t = summarize(&rows).unwrap();
        let full = t.row(AblationArm::Full).unwrap();
        assert_eq!(full.normalized[0], Some(0.5));
        assert_eq!(full.normalized[1], Some(2.0));
        assert_eq!(full.normalized[2], None);
        assert_eq!(t.not_normalizable, vec!["efficiency".to_string()]);
        assert!(t.to_csv().contains("Full system,0.50,2.00,NA,1.00"));
    }

    #[test]
    fn missing_baseline_rejected() {
        let rows = vec![(AblationArm::Full, m(2.0, 0.5, 0.2, 0.3))];
        assert!(matches!(summarize(&rows), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn arms_parse_and_mean() {
        for a in ARMS {
            assert_eq!(a.id().parse::<AblationArm>().unwrap(), a);
        }
        let avg = AblationMetrics::mean(&[m(1.0, 1.0, 1.0, 1.0), m(3.0, 3.0, 3.0, 3.0)]).unwrap();
        assert_eq!(avg, m(2.0, 2.0, 2.0, 2.0));
    }
}
