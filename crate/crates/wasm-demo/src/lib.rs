//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string, so the page needs no glue beyond `JSON.parse`.

use serde::Serialize;
use ternary_onn::harness::{run_header_task, run_stability, ExperimentConfig, TaskData};
use ternary_onn::tasks::header::{render_header, HeaderSpec};
use ternary_onn::{Substrate, SubstrateConfig, WeightMode};
use wasm_bindgen::prelude::*;

/// Side of the input image used by every demo.
pub const INPUT_SIDE: usize = 28;

#[derive(Serialize)]
pub struct ReservoirView {
    pub input_side: usize,
    pub input: Vec<u8>,
    pub grid_side: usize,
    /// Row-major grid; `null` outside the node aperture.
    pub intensity: Vec<Option<f64>>,
    pub total: f64,
}

/// Header image and the node intensities it produces.
pub fn reservoir_view(
    n_bits: u32,
    value: u64,
    laser_on: bool,
    seed: u64,
) -> Result<ReservoirView, String> {
    let spec = HeaderSpec {
        n_bits,
        image_side: INPUT_SIDE,
        header_value: value,
    };
    let pattern = render_header(&spec).map_err(|e| e.to_string())?;
    let cfg = SubstrateConfig {
        seed,
        vcsel_on: laser_on,
        ..SubstrateConfig::default()
    };
    let substrate = Substrate::new(cfg).map_err(|e| e.to_string())?;
    let state = substrate.forward(&pattern).map_err(|e| e.to_string())?;
    let side = substrate.config().grid_side;
    let mut intensity = vec![None; side * side];
    for (&(r, c), &x) in substrate.node_cells().iter().zip(state.intensities()) {
        intensity[r * side + c] = Some(x);
    }
    Ok(ReservoirView {
        input_side: INPUT_SIDE,
        input: pattern.pixels().iter().map(|&on| u8::from(on)).collect(),
        grid_side: side,
        intensity,
        total: state.total(),
    })
}

#[derive(Serialize)]
pub struct TrainingView {
    pub curve: Vec<f64>,
    pub n_mirrors: Vec<usize>,
    pub grid_side: usize,
    /// Row-major grid of weights; `null` outside the node aperture.
    pub mask: Vec<Option<i8>>,
    pub test_ser: f64,
    pub epochs_to_convergence: usize,
}

/// Trains one mask on a header task and returns its learning curve.
pub fn training_view(
    n_bits: u32,
    target: u64,
    alpha: f64,
    ternary: bool,
    epochs: usize,
    seed: u64,
) -> Result<TrainingView, String> {
    let mut cfg = ExperimentConfig::header(n_bits, target, 200);
    cfg.repeats = 1;
    cfg.train.alpha = alpha;
    cfg.train.max_epochs = epochs;
    cfg.train.seed = seed;
    cfg.substrate.seed = seed;
    cfg.train.mode = if ternary {
        WeightMode::Ternary
    } else {
        WeightMode::Boolean
    };
    let run = run_header_task(&cfg).map_err(|e| e.to_string())?.remove(0);
    let result = run.result.ok_or("no training result")?;
    let doc = run.mask.ok_or("no mask")?;
    Ok(TrainingView {
        curve: result.curve(),
        n_mirrors: result.history.iter().map(|h| h.n_mirrors).collect(),
        grid_side: doc.grid_side,
        mask: doc.to_grid(),
        test_ser: run.test.ser,
        epochs_to_convergence: result.epochs_to_convergence(),
    })
}

#[derive(Serialize)]
pub struct StabilityView {
    pub consistency: Vec<f64>,
    pub gain: Vec<f64>,
    pub nmse: Vec<f64>,
}

/// Frozen-mask consistency on a 4-bit header task under gain drift.
pub fn stability_view(
    checks: usize,
    drift_amplitude: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<StabilityView, String> {
    let mut cfg = ExperimentConfig::header(4, 5, 200);
    cfg.repeats = 1;
    cfg.train.seed = seed;
    cfg.substrate.seed = seed;
    cfg.substrate.drift_amplitude = drift_amplitude;
    cfg.substrate.noise_sigma = noise_sigma;
    cfg.stability.n_checks = checks;
    cfg.stability.train_epochs = 300;
    cfg.stability.trace_export_every = 0;
    let rep = run_stability(&cfg, &TaskData::Header)
        .map_err(|e| e.to_string())?
        .remove(0);
    Ok(StabilityView {
        consistency: rep.consistencies,
        gain: rep.gains,
        nmse: rep.nmse_series,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = reservoirView)]
pub fn reservoir_view_js(
    n_bits: u32,
    value: u32,
    laser_on: bool,
    seed: u32,
) -> Result<String, JsError> {
    to_json(reservoir_view(n_bits, value.into(), laser_on, seed.into()))
}

#[wasm_bindgen(js_name = trainingView)]
pub fn training_view_js(
    n_bits: u32,
    target: u32,
    alpha: f64,
    ternary: bool,
    epochs: u32,
    seed: u32,
) -> Result<String, JsError> {
    to_json(training_view(
        n_bits,
        target.into(),
        alpha,
        ternary,
        epochs as usize,
        seed.into(),
    ))
}

#[wasm_bindgen(js_name = stabilityView)]
pub fn stability_view_js(
    checks: u32,
    drift_amplitude: f64,
    noise_sigma: f64,
    seed: u32,
) -> Result<String, JsError> {
    to_json(stability_view(
        checks as usize,
        drift_amplitude,
        noise_sigma,
        seed.into(),
    ))
}
