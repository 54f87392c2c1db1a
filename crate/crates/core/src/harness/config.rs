use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::default_lambda_grid;
use crate::error::{Error, Result};
use crate::optimizer::TrainConfig;
use crate::substrate::SubstrateConfig;

/// Which workload an experiment runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskConfig {
    Header {
        n_bits: u32,
        target_value: u64,
        n: usize,
    },
    Mnist {
        /// One-vs-all digits; single-digit protocols use the first entry.
        digits: Vec<u8>,
        n: usize,
        images: PathBuf,
        labels: PathBuf,
        /// Test partition. When absent, sibling `t10k-*` files next to the
        /// training files are used if present, else the last 10000 training
        /// images are held out.
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_threshold_fraction")]
        threshold_fraction: f64,
    },
}

fn default_threshold_fraction() -> f64 {
    0.5
}

impl TaskConfig {
    pub fn batch_size(&self) -> usize {
        match self {
            TaskConfig::Header { n, .. } | TaskConfig::Mnist { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeConfig {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    /// Training epochs before the mask is frozen.
    pub train_epochs: usize,
    /// One check per 10 s over 10 h.
    pub n_checks: usize,
    pub drift_steps_per_check: usize,
    /// Every how many checks a full output trace is written to disk.
    pub trace_export_every: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            train_epochs: 100,
            n_checks: 3600,
            drift_steps_per_check: 1,
            trace_export_every: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub substrate: SubstrateConfig,
    pub train: TrainConfig,
    pub task: TaskConfig,
    /// Independent seeds; repeat `r` offsets every base seed by `r`.
    pub repeats: usize,
    pub output_dir: PathBuf,
    pub ridge: RidgeConfig,
    pub alphas: Vec<f64>,
    pub stability: StabilityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            substrate: SubstrateConfig::default(),
            train: TrainConfig::default(),
            task: TaskConfig::Mnist {
                digits: (0..10).collect(),
                n: 1000,
                images: PathBuf::from("data/mnist/train-images-idx3-ubyte"),
                labels: PathBuf::from("data/mnist/train-labels-idx1-ubyte"),
                test_images: None,
                test_labels: None,
                threshold_fraction: 0.5,
            },
            repeats: 5,
            output_dir: PathBuf::from("results"),
            ridge: RidgeConfig::default(),
            alphas: vec![0.0, 2.0, 5.0, 10.0, 20.0],
            stability: StabilityConfig::default(),
        }
    }
}

/// The protocols the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Compare,
    AlphaScan,
    Header,
    Stability,
    Train,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Compare => "compare",
            Experiment::AlphaScan => "alpha-scan",
            Experiment::Header => "header",
            Experiment::Stability => "stability",
            Experiment::Train => "train",
        }
    }
}

impl ExperimentConfig {
    /// Default configuration of each protocol. MNIST paths point into
    /// `mnist_dir`.
    pub fn preset(experiment: Experiment, mnist_dir: &Path) -> Self {
        let mnist = |digits: Vec<u8>| TaskConfig::Mnist {
            digits,
            n: 1000,
            images: mnist_dir.join("train-images-idx3-ubyte"),
            labels: mnist_dir.join("train-labels-idx1-ubyte"),
            test_images: None,
            test_labels: None,
            threshold_fraction: 0.5,
        };
        let base = Self::default();
        match experiment {
            Experiment::Compare => Self {
                task: mnist((0..10).collect()),
                ..base
            },
            Experiment::AlphaScan => {
                let mut cfg = Self::header(4, 5, 200);
                cfg.repeats = 10;
                cfg.alphas = vec![0.0, 5.0, 10.0, 20.0];
                cfg.train.max_epochs = 1000;
                cfg
            }
            Experiment::Header => {
                let mut cfg = Self::header(6, 37, 400);
                cfg.train.max_epochs = 2000;
                cfg
            }
            Experiment::Stability | Experiment::Train => Self {
                task: mnist(vec![0]),
                repeats: 1,
                ..base
            },
        }
    }

    /// Header-task defaults.
    pub fn header(n_bits: u32, target_value: u64, n: usize) -> Self {
        Self {
            task: TaskConfig::Header {
                n_bits,
                target_value,
                n,
            },
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.substrate.validate()?;
        self.train.validate()?;
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        let n = self.task.batch_size();
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "batch size must be even and >= 2, got {n}"
            )));
        }
        match &self.task {
            TaskConfig::Header {
                n_bits,
                target_value,
                ..
            } => {
                crate::tasks::HeaderSpec {
                    n_bits: *n_bits,
                    image_side: self.substrate.input_side,
                    header_value: *target_value,
                }
                .validate()?;
            }
            TaskConfig::Mnist {
                digits,
                threshold_fraction,
                ..
            } => {
                if digits.is_empty() || digits.iter().any(|&d| d > 9) {
                    return Err(Error::Config(format!(
                        "digits must be a non-empty subset of 0..=9, got {digits:?}"
                    )));
                }
                if !(*threshold_fraction > 0.0 && *threshold_fraction < 1.0) {
                    return Err(Error::Config("threshold_fraction must be in (0, 1)".into()));
                }
            }
        }
        if self.alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config(
                "alphas must be finite and non-negative".into(),
            ));
        }
        if self.stability.n_checks < 2 {
            return Err(Error::Config("stability.n_checks must be >= 2".into()));
        }
        if self.stability.train_epochs < 1 {
            return Err(Error::Config("stability.train_epochs must be >= 1".into()));
        }
        Ok(())
    }
}
