//! Experiment protocols on top of the simulated hardware.
//!
//! Every protocol is a pure function of an [`ExperimentConfig`] and the loaded
//! task data. Repeat `r` uses train seed `train.seed + r` and substrate seed
//! `substrate.seed + r`; batch and detector seeds are derived from those, so a
//! rerun with the same config reproduces every number. The `write_*`
//! functions in [`output`] turn results into CSV and JSON files.

mod config;
pub mod output;

use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lambda_sweep, ridge_eval, ridge_fit};
use crate::error::{Error, Result};
use crate::optimizer::{evaluate, nmse, train, Metrics, ThresholdRule, TrainConfig, TrainResult};
use crate::readout::{mean_all_on_power, BatchReadout, DetectorModel, MaskDocument, WeightMode};
use crate::substrate::{ReservoirState, Substrate, SubstrateConfig};
use crate::tasks::mnist::{load_mnist, make_onevsall_batch, MnistBatchOptions, MnistSplits, Split};
use crate::tasks::{make_header_batch, LabeledBatch};

pub use config::{Experiment, ExperimentConfig, RidgeConfig, StabilityConfig, TaskConfig};

/// Pearson correlation of two equal-length traces.
pub fn consistency(reference: &[f64], trace: &[f64]) -> Result<f64> {
    crate::error::check_len("consistency", reference.len(), trace.len())?;
    if reference.len() < 2 {
        return Err(Error::Usage(
            "consistency needs at least two samples".into(),
        ));
    }
    let n = reference.len() as f64;
    let ma = reference.iter().sum::<f64>() / n;
    let mb = trace.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&a, &b) in reference.iter().zip(trace) {
        let (da, db) = (a - ma, b - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant trace".into()));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// One readout configuration in the four-way comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Boolean,
    TernaryOff,
    Ternary,
    Ridge,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Boolean, Arm::TernaryOff, Arm::Ternary, Arm::Ridge];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Boolean => "boolean",
            Arm::TernaryOff => "ternary_off",
            Arm::Ternary => "ternary",
            Arm::Ridge => "ridge",
        }
    }

    pub fn vcsel_on(self) -> bool {
        self != Arm::TernaryOff
    }

    pub fn mode(self) -> Option<WeightMode> {
        match self {
            Arm::Boolean => Some(WeightMode::Boolean),
            Arm::TernaryOff | Arm::Ternary => Some(WeightMode::Ternary),
            Arm::Ridge => None,
        }
    }

    /// Trained arm for a mask mode with the laser on.
    pub fn for_mode(mode: WeightMode) -> Arm {
        match mode {
            WeightMode::Boolean => Arm::Boolean,
            WeightMode::Ternary => Arm::Ternary,
        }
    }
}

/// Task data loaded once per experiment.
#[derive(Debug, Clone)]
pub enum TaskData {
    Header,
    Mnist(MnistSplits),
}

impl TaskData {
    /// Loads whatever the task needs from disk. Header tasks need nothing.
    pub fn load(task: &TaskConfig) -> Result<Self> {
        match task {
            TaskConfig::Header { .. } => Ok(TaskData::Header),
            TaskConfig::Mnist {
                images,
                labels,
                test_images,
                test_labels,
                ..
            } => {
                let train = load_mnist(images, labels)?;
                let test_pair = match (test_images, test_labels) {
                    (Some(i), Some(l)) => Some((i.clone(), l.clone())),
                    (None, None) => sibling_test_files(images, labels),
                    _ => {
                        return Err(Error::Config(
                            "test_images and test_labels must be given together".into(),
                        ))
                    }
                };
                let splits = match test_pair {
                    Some((i, l)) => MnistSplits::new(train, load_mnist(&i, &l)?),
                    None => MnistSplits::hold_out(train, 10_000)?,
                };
                Ok(TaskData::Mnist(splits))
            }
        }
    }
}

fn sibling_test_files(images: &Path, labels: &Path) -> Option<(PathBuf, PathBuf)> {
    let swap = |p: &Path| {
        let name = p.file_name()?.to_str()?;
        let renamed = name.replacen("train", "t10k", 1);
        (renamed != name).then(|| p.with_file_name(renamed))
    };
    let (i, l) = (swap(images)?, swap(labels)?);
    (i.is_file() && l.is_file()).then_some((i, l))
}

/// A train batch and a disjoint test batch for one binary task.
#[derive(Debug, Clone)]
pub struct Workload {
    pub name: String,
    pub train: LabeledBatch,
    pub test: LabeledBatch,
}

/// SplitMix64 finaliser over a sequence of words.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z ^= p
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(z << 6)
            .wrapping_add(z >> 2);
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const TRAIN_BATCH: u64 = 1;
const TEST_BATCH: u64 = 2;
const TRAIN_DETECTOR: u64 = 3;
const TEST_DETECTOR: u64 = 4;
const RIDGE_FOLDS: u64 = 5;

/// Workloads for one seed: one per configured digit, or the single header task.
pub fn workloads(cfg: &ExperimentConfig, data: &TaskData, seed: u64) -> Result<Vec<Workload>> {
    match (&cfg.task, data) {
        (
            TaskConfig::Header {
                n_bits,
                target_value,
                n,
            },
            _,
        ) => {
            let side = cfg.substrate.input_side;
            let levels = cfg.train.target_levels;
            let make = |split| {
                make_header_batch(
                    *n_bits,
                    side,
                    *target_value,
                    *n,
                    derive_seed(seed, &[split]),
                    levels,
                )
            };
            Ok(vec![Workload {
                name: format!("header{n_bits}b_{target_value}"),
                train: make(TRAIN_BATCH)?,
                test: make(TEST_BATCH)?,
            }])
        }
        (
            TaskConfig::Mnist {
                digits,
                n,
                threshold_fraction,
                ..
            },
            TaskData::Mnist(splits),
        ) => {
            let opts = MnistBatchOptions {
                levels: cfg.train.target_levels,
                threshold_fraction: *threshold_fraction,
                side: cfg.substrate.input_side,
            };
            digits
                .iter()
                .map(|&d| {
                    let make = |split, tag| {
                        make_onevsall_batch(
                            splits,
                            d,
                            *n,
                            derive_seed(seed, &[tag, d as u64]),
                            split,
                            &opts,
                        )
                    };
                    Ok(Workload {
                        name: format!("digit{d}"),
                        train: make(Split::Train, TRAIN_BATCH)?,
                        test: make(Split::Test, TEST_BATCH)?,
                    })
                })
                .collect()
        }
        (TaskConfig::Mnist { .. }, TaskData::Header) => {
            Err(Error::Usage("MNIST task needs loaded MNIST data".into()))
        }
    }
}

/// Noiseless reservoir states of a workload under one substrate.
#[derive(Debug, Clone)]
pub struct StateSet {
    pub train: Vec<ReservoirState>,
    pub test: Vec<ReservoirState>,
}

impl StateSet {
    pub fn compute(substrate: &Substrate, workload: &Workload) -> Result<Self> {
        Ok(Self {
            train: substrate.forward_batch(&workload.train.patterns)?,
            test: substrate.forward_batch(&workload.test.patterns)?,
        })
    }
}

/// Outcome of one arm on one workload and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub task: String,
    pub arm: Arm,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub train: Metrics,
    pub test: Metrics,
    pub result: Option<TrainResult>,
    pub mask: Option<MaskDocument>,
}

/// Trains a mask on `states.train` through a noisy detector and scores it on
/// both batches. The decision threshold is fixed on the training batch.
#[allow(clippy::too_many_arguments)]
pub fn train_masked_arm(
    substrate: &Substrate,
    states: &StateSet,
    workload: &Workload,
    arm: Arm,
    train_cfg: &TrainConfig,
    noise_sigma: f64,
    seed: u64,
) -> Result<ArmRun> {
    let mode = arm
        .mode()
        .ok_or_else(|| Error::Usage("ridge arm has no mask to train".into()))?;
    let tc = TrainConfig {
        mode,
        seed,
        ..train_cfg.clone()
    };
    let unit = mean_all_on_power(&states.train);
    let arm_tag = arm as u64;
    let detector = |tag| -> Result<DetectorModel> {
        let mut d = DetectorModel::new(noise_sigma, derive_seed(seed, &[tag, arm_tag]))?;
        d.set_noise_scale(unit);
        Ok(d)
    };
    let mut train_readout = BatchReadout::new(&states.train, detector(TRAIN_DETECTOR)?, unit)?;
    train_readout.set_gain(substrate.gain());
    let result = train(
        |m| train_readout.measure(m),
        &workload.train.targets,
        substrate.node_count(),
        &tc,
    )?;
    let train_metrics = evaluate(
        |m| train_readout.measure(m),
        &result.best_mask,
        &workload.train.targets,
        &result.output_map,
        ThresholdRule::ClassMeanMidpoint,
    )?;
    let mut test_readout = BatchReadout::new(&states.test, detector(TEST_DETECTOR)?, unit)?;
    test_readout.set_gain(substrate.gain());
    let test_metrics = evaluate(
        |m| test_readout.measure(m),
        &result.best_mask,
        &workload.test.targets,
        &result.output_map,
        ThresholdRule::Fixed(train_metrics.threshold),
    )?;
    Ok(ArmRun {
        task: workload.name.clone(),
        arm,
        seed,
        alpha: Some(tc.alpha),
        lambda: None,
        train: train_metrics,
        test: test_metrics,
        mask: Some(MaskDocument::new(&result.best_mask, substrate)),
        result: Some(result),
    })
}

/// Ridge readout on noiseless laser-on states, lambda chosen by cross-validation.
pub fn ridge_arm(
    states: &StateSet,
    workload: &Workload,
    ridge: &RidgeConfig,
    seed: u64,
) -> Result<ArmRun> {
    let targets = &workload.train.targets;
    let lambda = lambda_sweep(
        &states.train,
        targets,
        &ridge.lambda_grid,
        ridge.folds,
        derive_seed(seed, &[RIDGE_FOLDS]),
    )?;
    let model = ridge_fit(&states.train, targets, lambda)?;
    let train = ridge_eval(
        &model,
        &states.train,
        targets,
        ThresholdRule::ClassMeanMidpoint,
    )?;
    let test = ridge_eval(
        &model,
        &states.test,
        &workload.test.targets,
        ThresholdRule::Fixed(train.threshold),
    )?;
    Ok(ArmRun {
        task: workload.name.clone(),
        arm: Arm::Ridge,
        seed,
        alpha: None,
        lambda: Some(lambda),
        train,
        test,
        result: None,
        mask: None,
    })
}

/// Substrate for repeat `r`.
pub fn substrate_for(cfg: &SubstrateConfig, repeat: usize) -> Result<Substrate> {
    Substrate::new(SubstrateConfig {
        seed: cfg.seed.wrapping_add(repeat as u64),
        ..cfg.clone()
    })
}

fn repeat_seed(cfg: &ExperimentConfig, repeat: usize) -> u64 {
    cfg.train.seed.wrapping_add(repeat as u64)
}

fn map_repeats<T, F>(repeats: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..repeats).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..repeats).map(f).collect()
    }
}

/// Runs `arms` on every workload and repeat. All arms of one repeat share the
/// substrate, batches and noiseless states. Output order: repeat, task, arm.
pub fn run_arms(cfg: &ExperimentConfig, data: &TaskData, arms: &[Arm]) -> Result<Vec<ArmRun>> {
    cfg.validate()?;
    let per_repeat = map_repeats(cfg.repeats, |r| {
        let seed = repeat_seed(cfg, r);
        let on = substrate_for(&cfg.substrate, r)?.with_vcsel(true);
        let off = on.with_vcsel(false);
        let mut runs = Vec::new();
        for workload in workloads(cfg, data, seed)? {
            let on_states = StateSet::compute(&on, &workload)?;
            let off_states = if arms.contains(&Arm::TernaryOff) {
                Some(StateSet::compute(&off, &workload)?)
            } else {
                None
            };
            for &arm in arms {
                let run = match arm {
                    Arm::Ridge => ridge_arm(&on_states, &workload, &cfg.ridge, seed)?,
                    Arm::TernaryOff => {
                        let states = off_states.as_ref().expect("computed above");
                        train_masked_arm(
                            &off,
                            states,
                            &workload,
                            arm,
                            &cfg.train,
                            cfg.substrate.noise_sigma,
                            seed,
                        )?
                    }
                    _ => train_masked_arm(
                        &on,
                        &on_states,
                        &workload,
                        arm,
                        &cfg.train,
                        cfg.substrate.noise_sigma,
                        seed,
                    )?,
                };
                runs.push(run);
            }
        }
        Ok(runs)
    })?;
    Ok(per_repeat.into_iter().flatten().collect())
}

/// Boolean, ternary-off, ternary-on and ridge on every configured task.
pub fn run_comparison(cfg: &ExperimentConfig, data: &TaskData) -> Result<Vec<ArmRun>> {
    run_arms(cfg, data, &Arm::ALL)
}

/// Header discrimination with the configured mask mode; reports test SER.
pub fn run_header_task(cfg: &ExperimentConfig) -> Result<Vec<ArmRun>> {
    if !matches!(cfg.task, TaskConfig::Header { .. }) {
        return Err(Error::Config(
            "header experiment needs a header task".into(),
        ));
    }
    run_arms(cfg, &TaskData::Header, &[Arm::for_mode(cfg.train.mode)])
}

/// A single training run per repeat with the configured mode and laser state.
pub fn run_train(cfg: &ExperimentConfig, data: &TaskData) -> Result<Vec<ArmRun>> {
    let arm = match (cfg.train.mode, cfg.substrate.vcsel_on) {
        (WeightMode::Ternary, false) => Arm::TernaryOff,
        (mode, true) => Arm::for_mode(mode),
        (WeightMode::Boolean, false) => {
            return Err(Error::Config(
                "Boolean masks are only trained with the laser on".into(),
            ))
        }
    };
    let first_task = first_task_only(cfg);
    run_arms(&first_task, data, &[arm])
}

fn first_task_only(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut out = cfg.clone();
    if let TaskConfig::Mnist { digits, .. } = &mut out.task {
        digits.truncate(1);
    }
    out
}

/// Every alpha for every repeat on the first configured task, laser on.
/// Runs of one repeat share substrate and batches across alphas.
pub fn run_alpha_scan(cfg: &ExperimentConfig, data: &TaskData) -> Result<Vec<ArmRun>> {
    if cfg.alphas.is_empty() {
        return Err(Error::Config("alpha scan needs at least one alpha".into()));
    }
    let cfg = first_task_only(cfg);
    cfg.validate()?;
    let arm = Arm::for_mode(cfg.train.mode);
    let per_repeat = map_repeats(cfg.repeats, |r| {
        let seed = repeat_seed(&cfg, r);
        let on = substrate_for(&cfg.substrate, r)?.with_vcsel(true);
        let workload = workloads(&cfg, data, seed)?.remove(0);
        let states = StateSet::compute(&on, &workload)?;
        cfg.alphas
            .iter()
            .map(|&alpha| {
                let tc = TrainConfig {
                    alpha,
                    ..cfg.train.clone()
                };
                train_masked_arm(
                    &on,
                    &states,
                    &workload,
                    arm,
                    &tc,
                    cfg.substrate.noise_sigma,
                    seed,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_repeat.into_iter().flatten().collect())
}

/// Frozen-mask output traces under gain drift and detector noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub task: String,
    pub seed: u64,
    pub reference_trace: Vec<f64>,
    /// Every `trace_export_every`-th trace, starting with the reference.
    pub traces: Vec<Vec<f64>>,
    pub consistencies: Vec<f64>,
    pub nmse_series: Vec<f64>,
    pub gains: Vec<f64>,
    pub training: ArmRun,
}

impl StabilityReport {
    pub fn median_consistency(&self) -> f64 {
        median(&self.consistencies)
    }
}

/// Trains for `stability.train_epochs` on the first task, freezes the mask,
/// then re-measures the test batch `n_checks` times, advancing the substrate
/// drift between checks. One report per repeat.
pub fn run_stability(cfg: &ExperimentConfig, data: &TaskData) -> Result<Vec<StabilityReport>> {
    let mut cfg = first_task_only(cfg);
    cfg.train.max_epochs = cfg.stability.train_epochs;
    cfg.validate()?;
    let st = cfg.stability.clone();
    let arm = Arm::for_mode(cfg.train.mode);
    map_repeats(cfg.repeats, |r| {
        let seed = repeat_seed(&cfg, r);
        let mut substrate = substrate_for(&cfg.substrate, r)?.with_vcsel(true);
        let workload = workloads(&cfg, data, seed)?.remove(0);
        let states = StateSet::compute(&substrate, &workload)?;
        let training = train_masked_arm(
            &substrate,
            &states,
            &workload,
            arm,
            &cfg.train,
            cfg.substrate.noise_sigma,
            seed,
        )?;
        let result = training.result.as_ref().expect("masked arm trains");
        let unit = mean_all_on_power(&states.train);
        let mut detector = DetectorModel::new(
            cfg.substrate.noise_sigma,
            derive_seed(seed, &[TEST_DETECTOR, 99]),
        )?;
        detector.set_noise_scale(unit);
        let mut readout = BatchReadout::new(&states.test, detector, unit)?;

        let mut traces = Vec::new();
        let mut consistencies = Vec::with_capacity(st.n_checks);
        let mut nmse_series = Vec::with_capacity(st.n_checks);
        let mut gains = Vec::with_capacity(st.n_checks);
        let mut reference = Vec::new();
        for check in 0..st.n_checks {
            if check > 0 {
                substrate.advance_drift(st.drift_steps_per_check);
            }
            readout.set_gain(substrate.gain());
            let mut y = readout.measure(&result.best_mask)?;
            result.output_map.apply(&mut y);
            if check == 0 {
                reference = y.clone();
            }
            consistencies.push(consistency(&reference, &y)?);
            nmse_series.push(nmse(&y, &workload.test.targets)?);
            gains.push(substrate.gain());
            if st.trace_export_every > 0 && check % st.trace_export_every == 0 {
                traces.push(y);
            }
        }
        Ok(StabilityReport {
            task: workload.name.clone(),
            seed,
            reference_trace: reference,
            traces,
            consistencies,
            nmse_series,
            gains,
            training,
        })
    })
}

/// Results of any protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Runs(Vec<ArmRun>),
    Stability(Vec<StabilityReport>),
}

/// Loads task data and runs one protocol.
pub fn execute(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let data = TaskData::load(&cfg.task)?;
    Ok(match experiment {
        Experiment::Compare => Outcome::Runs(run_comparison(cfg, &data)?),
        Experiment::AlphaScan => Outcome::Runs(run_alpha_scan(cfg, &data)?),
        Experiment::Header => Outcome::Runs(run_header_task(cfg)?),
        Experiment::Train => Outcome::Runs(run_train(cfg, &data)?),
        Experiment::Stability => Outcome::Stability(run_stability(cfg, &data)?),
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
