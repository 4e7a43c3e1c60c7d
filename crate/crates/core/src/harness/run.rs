use super::{HarnessError, ScenarioConfig, ScenarioData};
use crate::env::write_transition_log;
use crate::trpo::{
    evaluate_agents, train, Algorithm, Checkpoint, EvalSummary, IterationMetrics, TrainConfig, Trainer,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Iterations averaged for the end-of-training evaluation return.
pub const FINAL_WINDOW: usize = 20;
const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

/// Everything needed to reproduce a run, including the referenced data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub code_version: String,
    pub scenario: ScenarioConfig,
    pub run: TrainConfig,
    pub data: ScenarioData,
    pub seeds: Vec<u64>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    fn write(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| HarnessError::io(path, e))
    }
}

/// Per-seed result summary, written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub seed: u64,
    pub iterations: usize,
    pub initial_eval: EvalSummary,
    pub final_eval: EvalSummary,
    /// Mean per-iteration `eval_return` over the last iterations.
    pub final_window_eval_return: f64,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

}

pub fn metrics_header(n_agents: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "mean_return", "cvar_return", "min_return"].map(String::from).to_vec();
    h.extend((1..=n_agents).map(|k| format!("agent_kl_{k}")));
    h.extend((1..=n_agents).map(|k| format!("surrogate_{k}")));
    h.extend(
        ["critic_loss", "voltage_max_dev", "renewable_share", "wall_ms", "eval_return", "algorithm"].map(String::from),
    );
    h
}

fn metrics_row(m: &IterationMetrics, wall_ms: u64) -> Vec<String> {
    let mut r = vec![m.iter.to_string(), m.mean_return.to_string(), m.cvar_return.to_string(), m.min_return.to_string()];
    r.extend(m.agent_kl.iter().map(f64::to_string));
    r.extend(m.surrogate.iter().map(f64::to_string));
    r.extend([
        m.critic_loss.to_string(),
        m.voltage_max_dev.to_string(),
        m.renewable_share.to_string(),
        wall_ms.to_string(),
        m.eval_return.to_string(),
        m.algorithm.id().to_string(),
    ]);
    r
}

/// Writes a metrics CSV; `wall_ms` is recorded as 0 so files are reproducible.
pub fn write_metrics<W: Write>(out: W, metrics: &[IterationMetrics], n_agents: usize) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metrics_header(n_agents))?;
    for m in metrics {
        w.write_record(metrics_row(m, 0))?;
    }
    w.flush().map_err(|e| HarnessError::io("metrics", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

fn write_eval(dir: &Path, eval: &EvalSummary) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(&dir.join("eval.csv"))?);
    w.write_record(["episode", "return"])?;
    for (e, r) in eval.returns.iter().enumerate() {
        w.write_record([e.to_string(), r.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(dir.join("eval.csv"), e))?;
    write_transition_log(create(&dir.join("transitions.csv"))?, &eval.records)?;
    Ok(())
}

fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed-{seed}"))
}

fn run_seed(
    scenario: Arc<crate::env::Scenario>,
    cfg: &TrainConfig,
    name: &str,
    seed: u64,
    dir: &Path,
) -> Result<RunReport, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let n_agents = scenario.n_mg();
    let mut metrics_csv = csv::Writer::from_writer(create(&dir.join("metrics.csv"))?);
    metrics_csv.write_record(metrics_header(n_agents))?;
    let mut timing_csv = csv::Writer::from_writer(create(&dir.join("timing.csv"))?);
    timing_csv.write_record(["iter", "wall_ms"])?;
    let io_err = |e: csv::Error| crate::trpo::TrpoError::BadConfig(format!("metrics output: {e}"));

    let outcome = train(scenario, cfg, seed, |m, trainer| {
        metrics_csv.write_record(metrics_row(m, 0)).map_err(io_err)?;
        metrics_csv.flush()?;
        timing_csv.write_record([m.iter.to_string(), m.wall_ms.to_string()]).map_err(io_err)?;
        timing_csv.flush()?;
        if cfg.checkpoint_every > 0 && (m.iter + 1) % cfg.checkpoint_every == 0 {
            trainer.checkpoint().save(&dir.join(format!("checkpoint-{:05}.json", m.iter + 1)))?;
        }
        Ok(())
    })?;

    outcome.checkpoint.save(&dir.join("checkpoint.json")).map_err(HarnessError::from)?;
    write_eval(dir, &outcome.final_eval)?;
    let window: Vec<f64> =
        outcome.metrics.iter().rev().take(FINAL_WINDOW).map(|m| m.eval_return).collect();
    let final_window_eval_return =
        if window.is_empty() { outcome.initial_eval.mean_return } else { window.iter().sum::<f64>() / window.len() as f64 };
    let (alpha, _) = cfg.risk_settings();
    let report = RunReport {
        scenario: name.to_string(),
        algorithm: cfg.algorithm,
        alpha,
        seed,
        iterations: cfg.iterations,
        initial_eval: outcome.initial_eval,
        final_eval: outcome.final_eval,
        final_window_eval_return,
    };
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| HarnessError::io(&path, e))?;
    Ok(report)
}

/// Trains every seed of `run_cfg` and writes per-seed outputs plus a manifest.
pub fn run_experiment(
    scenario_cfg: &ScenarioConfig,
    run_cfg: &TrainConfig,
    data: &ScenarioData,
    out_dir: &Path,
) -> Result<Vec<RunReport>, HarnessError> {
    run_cfg
        .validate()
        .map_err(|reason| HarnessError::Validation { field: reason.split(':').next().unwrap_or("").into(), reason })?;
    let scenario = Arc::new(data.build(scenario_cfg)?);
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: scenario_cfg.clone(),
        run: run_cfg.clone(),
        data: data.clone(),
        seeds: run_cfg.seeds.clone(),
        status: RunStatus::Incomplete,
        error: None,
        outputs: Vec::new(),
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;

    let results: Vec<Result<RunReport, HarnessError>> = run_cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(Arc::clone(&scenario), run_cfg, &scenario_cfg.name, seed, &seed_dir(out_dir, seed)))
        .collect();

    let mut reports = Vec::new();
    let mut failure = None;
    for (seed, r) in run_cfg.seeds.iter().zip(results) {
        match r {
            Ok(rep) => {
                reports.push(rep);
                for f in ["metrics.csv", "eval.csv", "transitions.csv", "checkpoint.json", "report.json"] {
                    manifest.outputs.push(format!("seed-{seed}/{f}"));
                }
            }
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                failure.get_or_insert((*seed, e));
            }
        }
    }
    if let Some((seed, e)) = failure {
        manifest.error = Some(format!("seed {seed}: {e}"));
        manifest.write(&manifest_path)?;
        return Err(e);
    }
    manifest.status = RunStatus::Complete;
    manifest.write(&manifest_path)?;
    Ok(reports)
}

/// Re-runs a manifest into `out_dir`.
pub fn replay_manifest(manifest_path: &Path, out_dir: &Path) -> Result<Vec<RunReport>, HarnessError> {
    let m = Manifest::load(manifest_path)?;
    if m.format != MANIFEST_FORMAT {
        return Err(HarnessError::Validation { field: "manifest.format".into(), reason: format!("unsupported {}", m.format) });
    }
    if m.code_version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest written by version {}, replaying with {}", m.code_version, env!("CARGO_PKG_VERSION"));
    }
    let run = TrainConfig { seeds: m.seeds.clone(), ..m.run };
    run_experiment(&m.scenario, &run, &m.data, out_dir)
}

/// Deterministic evaluation of a saved checkpoint; writes eval and
/// transition CSVs to `out_dir`.
pub fn evaluate_checkpoint(
    scenario_cfg: &ScenarioConfig,
    data: &ScenarioData,
    checkpoint: &Checkpoint,
    episodes: usize,
    out_dir: &Path,
) -> Result<EvalSummary, HarnessError> {
    let scenario = Arc::new(data.build(scenario_cfg)?);
    let cfg = TrainConfig { algorithm: checkpoint.algorithm, ..TrainConfig::default() };
    let trainer = Trainer::from_checkpoint(Arc::clone(&scenario), cfg, checkpoint.clone())?;
    let eval = evaluate_agents(&scenario, &trainer.agents, checkpoint.seed, episodes)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    write_eval(out_dir, &eval)?;
    let path = out_dir.join("evaluation.json");
    fs::write(&path, serde_json::to_string_pretty(&eval)? + "\n").map_err(|e| HarnessError::io(&path, e))?;
    Ok(eval)
}
