//! Result files. Every CSV starts with one `#` line carrying the schema
//! version and the resolved config as compact JSON.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{median, Arm, ArmRun, Experiment, ExperimentConfig, Outcome, StabilityReport};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

pub fn header_line(cfg: &ExperimentConfig) -> Result<String> {
    Ok(format!(
        "# ternary-onn schema={SCHEMA_VERSION} config={}\n",
        serde_json::to_string(cfg)?
    ))
}

fn csv_writer(path: &Path, cfg: &ExperimentConfig) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(header_line(cfg)?.as_bytes())?;
    Ok(csv::Writer::from_writer(file))
}

#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    experiment: &'a str,
    task: &'a str,
    arm: &'a str,
    seed: String,
    alpha: Option<f64>,
    lambda: Option<f64>,
    train_nmse: f64,
    train_accuracy: f64,
    test_nmse: f64,
    test_accuracy: f64,
    test_ser: f64,
    threshold: f64,
    initial_nmse: Option<f64>,
    final_nmse: Option<f64>,
    epochs: Option<usize>,
    epochs_to_convergence: Option<usize>,
}

impl<'a> ResultRow<'a> {
    fn from_run(experiment: &'a str, run: &'a ArmRun) -> Self {
        let r = run.result.as_ref();
        Self {
            experiment,
            task: &run.task,
            arm: run.arm.name(),
            seed: run.seed.to_string(),
            alpha: run.alpha,
            lambda: run.lambda,
            train_nmse: run.train.nmse,
            train_accuracy: run.train.accuracy,
            test_nmse: run.test.nmse,
            test_accuracy: run.test.accuracy,
            test_ser: run.test.ser,
            threshold: run.train.threshold,
            initial_nmse: r.map(|r| r.initial_nmse),
            final_nmse: r.map(|r| r.final_nmse),
            epochs: r.map(|r| r.history.len()),
            epochs_to_convergence: r.map(|r| r.epochs_to_convergence()),
        }
    }

    /// Aggregate over a group of runs with the same task, arm and alpha.
    fn summary(
        experiment: &'a str,
        group: &[&'a ArmRun],
        label: &str,
        agg: fn(&[f64]) -> f64,
    ) -> Self {
        let first = group[0];
        let col = |f: &dyn Fn(&ArmRun) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = group.iter().map(|r| f(r)).collect();
            v.map(|v| agg(&v))
        };
        let col_usize = |f: &dyn Fn(&ArmRun) -> Option<usize>| -> Option<usize> {
            let v: Option<Vec<f64>> = group.iter().map(|r| f(r).map(|x| x as f64)).collect();
            v.map(|v| agg(&v).round() as usize)
        };
        Self {
            experiment,
            task: &first.task,
            arm: first.arm.name(),
            seed: label.to_string(),
            alpha: first.alpha,
            lambda: col(&|r| r.lambda),
            train_nmse: agg(&group.iter().map(|r| r.train.nmse).collect::<Vec<_>>()),
            train_accuracy: agg(&group.iter().map(|r| r.train.accuracy).collect::<Vec<_>>()),
            test_nmse: agg(&group.iter().map(|r| r.test.nmse).collect::<Vec<_>>()),
            test_accuracy: agg(&group.iter().map(|r| r.test.accuracy).collect::<Vec<_>>()),
            test_ser: agg(&group.iter().map(|r| r.test.ser).collect::<Vec<_>>()),
            threshold: agg(&group.iter().map(|r| r.train.threshold).collect::<Vec<_>>()),
            initial_nmse: col(&|r| r.result.as_ref().map(|x| x.initial_nmse)),
            final_nmse: col(&|r| r.result.as_ref().map(|x| x.final_nmse)),
            epochs: col_usize(&|r| r.result.as_ref().map(|x| x.history.len())),
            epochs_to_convergence: col_usize(&|r| {
                r.result.as_ref().map(|x| x.epochs_to_convergence())
            }),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Groups runs by (task, arm, alpha) in first-appearance order.
pub fn group_runs(runs: &[ArmRun]) -> Vec<Vec<&ArmRun>> {
    let mut groups: Vec<Vec<&ArmRun>> = Vec::new();
    for run in runs {
        let key = |r: &ArmRun| (r.task.clone(), r.arm, r.alpha.map(f64::to_bits));
        match groups.iter_mut().find(|g| key(g[0]) == key(run)) {
            Some(g) => g.push(run),
            None => groups.push(vec![run]),
        }
    }
    groups
}

/// `results.csv`: one row per run, then `mean` and `median` rows per group.
pub fn write_results(
    dir: &Path,
    cfg: &ExperimentConfig,
    experiment: &str,
    runs: &[ArmRun],
) -> Result<PathBuf> {
    let path = dir.join("results.csv");
    let mut w = csv_writer(&path, cfg)?;
    for run in runs {
        w.serialize(ResultRow::from_run(experiment, run))?;
    }
    for group in group_runs(runs) {
        w.serialize(ResultRow::summary(experiment, &group, "mean", mean))?;
        w.serialize(ResultRow::summary(experiment, &group, "median", median))?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = dir.join("config.resolved.json");
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// File-name stem shared by a run's history and mask files.
pub fn run_stem(run: &ArmRun, with_task: bool, with_alpha: bool) -> String {
    let mut stem = String::new();
    if with_task {
        stem.push_str(&run.task);
        stem.push('_');
    }
    stem.push_str(run.arm.name());
    if with_alpha {
        if let Some(a) = run.alpha {
            stem.push_str(&format!("_a{a}"));
        }
    }
    stem.push_str(&format!("_{}", run.seed));
    stem
}

#[derive(Serialize)]
struct MaskFile<'a> {
    task: &'a str,
    arm: Arm,
    seed: u64,
    alpha: Option<f64>,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    mask: &'a super::MaskDocument,
}

/// `history_<arm>_<seed>.csv` and `mask_<arm>_<seed>.json` for every trained
/// run. Task and alpha enter the stem only when they vary across runs.
pub fn write_run_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    runs: &[ArmRun],
) -> Result<Vec<PathBuf>> {
    let with_task = runs.iter().any(|r| r.task != runs[0].task);
    let first_alpha = runs.iter().find_map(|r| r.alpha);
    let with_alpha = runs
        .iter()
        .any(|r| r.alpha.is_some() && r.alpha != first_alpha);
    let mut written = Vec::new();
    for run in runs {
        let (Some(result), Some(mask)) = (&run.result, &run.mask) else {
            continue;
        };
        let stem = run_stem(run, with_task, with_alpha);
        let hist = dir.join(format!("history_{stem}.csv"));
        let mut w = csv_writer(&hist, cfg)?;
        for rec in &result.history {
            w.serialize(rec)?;
        }
        w.flush()?;
        written.push(hist);

        let mask_path = dir.join(format!("mask_{stem}.json"));
        let doc = MaskFile {
            task: &run.task,
            arm: run.arm,
            seed: run.seed,
            alpha: run.alpha,
            config: cfg,
            mask,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(&mask_path, text)?;
        written.push(mask_path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct CurveRow {
    alpha: f64,
    seed: u64,
    epoch: usize,
    nmse_best: f64,
}

/// `alpha_scan.csv` with columns `alpha,seed,epoch,nmse_best`.
pub fn write_alpha_curves(dir: &Path, cfg: &ExperimentConfig, runs: &[ArmRun]) -> Result<PathBuf> {
    let path = dir.join("alpha_scan.csv");
    let mut w = csv_writer(&path, cfg)?;
    for run in runs {
        let (Some(result), Some(alpha)) = (&run.result, run.alpha) else {
            continue;
        };
        for rec in &result.history {
            w.serialize(CurveRow {
                alpha,
                seed: run.seed,
                epoch: rec.epoch,
                nmse_best: rec.nmse_best,
            })?;
        }
    }
    w.flush()?;
    Ok(path)
}

#[derive(Serialize)]
struct StabilityRow {
    seed: u64,
    check: usize,
    gain: f64,
    consistency: f64,
    nmse: f64,
}

#[derive(Serialize)]
struct TraceRow {
    seed: u64,
    check: usize,
    sample: usize,
    output: f64,
}

/// `stability.csv` (one row per check) and `stability_traces.csv` (the
/// exported traces in long format).
pub fn write_stability(
    dir: &Path,
    cfg: &ExperimentConfig,
    reports: &[StabilityReport],
) -> Result<Vec<PathBuf>> {
    let series = dir.join("stability.csv");
    let mut w = csv_writer(&series, cfg)?;
    for rep in reports {
        for (check, ((&g, &c), &e)) in rep
            .gains
            .iter()
            .zip(&rep.consistencies)
            .zip(&rep.nmse_series)
            .enumerate()
        {
            w.serialize(StabilityRow {
                seed: rep.seed,
                check,
                gain: g,
                consistency: c,
                nmse: e,
            })?;
        }
    }
    w.flush()?;

    let traces = dir.join("stability_traces.csv");
    let mut w = csv_writer(&traces, cfg)?;
    let every = cfg.stability.trace_export_every.max(1);
    for rep in reports {
        for (k, trace) in rep.traces.iter().enumerate() {
            for (sample, &output) in trace.iter().enumerate() {
                w.serialize(TraceRow {
                    seed: rep.seed,
                    check: k * every,
                    sample,
                    output,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(vec![series, traces])
}

/// Writes every file of an outcome into `dir`, creating it if needed.
pub fn write_outcome(
    dir: &Path,
    cfg: &ExperimentConfig,
    experiment: Experiment,
    outcome: &Outcome,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = vec![write_config(dir, cfg)?];
    match outcome {
        Outcome::Runs(runs) => {
            written.push(write_results(dir, cfg, experiment.name(), runs)?);
            written.extend(write_run_artifacts(dir, cfg, runs)?);
            if experiment == Experiment::AlphaScan {
                written.push(write_alpha_curves(dir, cfg, runs)?);
            }
        }
        Outcome::Stability(reports) => {
            let runs: Vec<ArmRun> = reports.iter().map(|r| r.training.clone()).collect();
            written.push(write_results(dir, cfg, experiment.name(), &runs)?);
            written.extend(write_run_artifacts(dir, cfg, &runs)?);
            written.extend(write_stability(dir, cfg, reports)?);
        }
    }
    Ok(written)
}

/// Human-readable summary lines for a terminal.
pub fn summary_lines(outcome: &Outcome) -> Vec<String> {
    match outcome {
        Outcome::Runs(runs) => group_runs(runs)
            .iter()
            .map(|g| {
                let acc: Vec<f64> = g.iter().map(|r| r.test.accuracy).collect();
                let alpha = g[0].alpha.map(|a| format!(" alpha={a}")).unwrap_or_default();
                let fin: Vec<f64> = g.iter().filter_map(|r| r.result.as_ref().map(|x| x.final_nmse)).collect();
                let fin = if fin.is_empty() { String::new() } else { format!(" final_nmse median {:.4}", median(&fin)) };
                format!(
                    "{} {}{alpha}: test accuracy mean {:.4} median {:.4} over {} seeds{fin}",
                    g[0].task,
                    g[0].arm.name(),
                    mean(&acc),
                    median(&acc),
                    g.len()
                )
            })
            .collect(),
        Outcome::Stability(reports) => reports
            .iter()
            .map(|r| {
                let min = r.consistencies.iter().copied().fold(f64::INFINITY, f64::min);
                format!(
                    "{} seed {}: consistency median {:.5} min {:.5} over {} checks; nmse median {:.4}",
                    r.task,
                    r.seed,
                    r.median_consistency(),
                    min,
                    r.consistencies.len(),
                    median(&r.nmse_series)
                )
            })
            .collect(),
    }
}
