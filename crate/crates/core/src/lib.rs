//! In-situ training of Boolean and ternary readout masks for a simulated
//! large-area VCSEL reservoir.
//!
//! The crate is organised along the data path:
//!
//! * [`substrate`]: input patterns, the frozen random mixing and the laser
//!   nonlinearity, gain drift.
//! * [`readout`]: ternary masks, their two Boolean mirror planes, detection.
//! * [`optimizer`]: the error-adaptive accept-if-better search and metrics.
//! * [`tasks`]: header and MNIST one-vs-all workloads.
//! * [`baselines`]: ridge-regression readout.
//! * [`harness`]: experiment protocols and result files.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod readout;
pub mod substrate;
pub mod tasks;

pub use error::{Error, Result};
pub use optimizer::{
    evaluate, n_mirrors, nmse, propose, train, EpochRecord, Metrics, OutputMap, ThresholdRule,
    TrainConfig, TrainResult,
};
pub use readout::{
    compose, decompose, detect, random_mask, readout, BatchReadout, BooleanPlane, DetectorModel,
    MaskDocument, TernaryMask, WeightMode,
};
pub use substrate::{InputPattern, ReservoirState, Substrate, SubstrateConfig};
