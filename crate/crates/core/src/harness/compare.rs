use super::{HarnessError, RunReport};
use crate::trpo::Algorithm;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// Aggregated final evaluation for one algorithm / risk level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub runs: usize,
    pub mean_return: f64,
    pub cvar_return: f64,
    pub voltage_max_dev: f64,
    pub renewable_share: f64,
}

impl GroupSummary {
    pub fn label(&self) -> String {
        match self.algorithm {
            Algorithm::RsTrpo => format!("rs-trpo(alpha={})", self.alpha),
            other => other.id().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseDiff {
    pub a: String,
    pub b: String,
    pub mean_return_pct: f64,
    pub cvar_return_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub groups: Vec<GroupSummary>,
    pub pairwise: Vec<PairwiseDiff>,
}

/// Relative difference of `a` over `b` in percent.
pub fn pct_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b) / b.abs() * 100.0
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Groups reports by algorithm and α; all reports must share one scenario.
pub fn compare(reports: &[RunReport]) -> Result<Comparison, HarnessError> {
    let first = reports.first().ok_or_else(|| HarnessError::Usage("no reports to compare".into()))?;
    if let Some(other) = reports.iter().find(|r| r.scenario != first.scenario) {
        return Err(HarnessError::MismatchedScenarios(format!("{} and {}", first.scenario, other.scenario)));
    }
    let mut keys: Vec<(Algorithm, f64)> = Vec::new();
    for r in reports {
        if !keys.iter().any(|&(a, al)| a == r.algorithm && al == r.alpha) {
            keys.push((r.algorithm, r.alpha));
        }
    }
    let groups: Vec<GroupSummary> = keys
        .into_iter()
        .map(|(algorithm, alpha)| {
            let members: Vec<&RunReport> =
                reports.iter().filter(|r| r.algorithm == algorithm && r.alpha == alpha).collect();
            GroupSummary {
                scenario: first.scenario.clone(),
                algorithm,
                alpha,
                runs: members.len(),
                mean_return: mean(members.iter().map(|r| r.final_eval.mean_return)),
                cvar_return: mean(members.iter().map(|r| r.final_eval.cvar_return)),
                voltage_max_dev: members.iter().map(|r| r.final_eval.voltage_max_dev).fold(0.0, f64::max),
                renewable_share: mean(members.iter().map(|r| r.final_eval.renewable_share)),
            }
        })
        .collect();
    let mut pairwise = Vec::new();
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            pairwise.push(PairwiseDiff {
                a: a.label(),
                b: b.label(),
                mean_return_pct: pct_diff(a.mean_return, b.mean_return),
                cvar_return_pct: pct_diff(a.cvar_return, b.cvar_return),
            });
        }
    }
    Ok(Comparison { groups, pairwise })
}

fn collect_reports(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| HarnessError::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| HarnessError::io(path, err)))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() || p.file_name().is_some_and(|n| n == "report.json") {
                collect_reports(&p, out)?;
            }
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Loads `report.json` files (directories are searched recursively), compares
/// them and writes `summary.csv` and `pairwise.csv` into `out_dir`.
pub fn compare_files(inputs: &[PathBuf], out_dir: &Path) -> Result<Comparison, HarnessError> {
    let mut paths = Vec::new();
    for p in inputs {
        collect_reports(p, &mut paths)?;
    }
    let reports = paths.iter().map(|p| RunReport::load(p)).collect::<Result<Vec<_>, _>>()?;
    let cmp = compare(&reports)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    let summary_path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    w.write_record([
        "scenario",
        "algorithm",
        "alpha",
        "runs",
        "mean_return",
        "cvar_return",
        "voltage_max_dev",
        "renewable_share",
    ])?;
    for g in &cmp.groups {
        w.write_record([
            g.scenario.clone(),
            g.algorithm.id().to_string(),
            g.alpha.to_string(),
            g.runs.to_string(),
            g.mean_return.to_string(),
            g.cvar_return.to_string(),
            g.voltage_max_dev.to_string(),
            g.renewable_share.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(&summary_path, e))?;

    let pairwise_path = out_dir.join("pairwise.csv");
    let mut w = csv::Writer::from_path(&pairwise_path)?;
    w.write_record(["a", "b", "mean_return_pct", "cvar_return_pct"])?;
    for d in &cmp.pairwise {
        w.write_record([d.a.clone(), d.b.clone(), d.mean_return_pct.to_string(), d.cvar_return_pct.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(&pairwise_path, e))?;
    Ok(cmp)
}
