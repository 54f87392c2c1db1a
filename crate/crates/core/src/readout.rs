//! Ternary readout weights and subtractive detection.
//!
//! A ternary mask is realised by two disjoint Boolean mirror planes. Each plane
//! routes its nodes onto the single detector; the ternary output is the
//! difference of the two sequential measurements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::substrate::{ReservoirState, Substrate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Boolean,
    Ternary,
}

impl WeightMode {
    /// Symbols a weight may take in this mode.
    pub fn alphabet(self) -> &'static [i8] {
        match self {
            WeightMode::Boolean => &[0, 1],
            WeightMode::Ternary => &[-1, 0, 1],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::Boolean => "boolean",
            WeightMode::Ternary => "ternary",
        }
    }
}

/// Readout weights in `{-1, 0, +1}`, one per active node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TernaryMask {
    weights: Vec<i8>,
    mode: WeightMode,
}

impl TernaryMask {
    pub fn new(weights: Vec<i8>, mode: WeightMode) -> Result<Self> {
        let alphabet = mode.alphabet();
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !alphabet.contains(w))
        {
            return Err(Error::Contract(format!(
                "weight {w} at node {i} is outside the {} alphabet",
                mode.as_str()
            )));
        }
        Ok(Self { weights, mode })
    }

    pub fn zeros(len: usize, mode: WeightMode) -> Self {
        Self {
            weights: vec![0; len],
            mode,
        }
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sets one weight, checking it against the mask's alphabet.
    pub fn set(&mut self, index: usize, value: i8) -> Result<()> {
        if !self.mode.alphabet().contains(&value) {
            return Err(Error::Contract(format!(
                "weight {value} is outside the {} alphabet",
                self.mode.as_str()
            )));
        }
        check_len("TernaryMask::set", self.len(), self.len().max(index + 1))?;
        self.weights[index] = value;
        Ok(())
    }

    /// Noiseless `sum_j w_j x_j`.
    pub fn dot(&self, intensities: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(intensities)
            .map(|(&w, &x)| f64::from(w) * x)
            .sum()
    }

    pub fn count(&self, symbol: i8) -> usize {
        self.weights.iter().filter(|&&w| w == symbol).count()
    }
}

/// One mirror plane: `true` routes that node onto the detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanPlane {
    bits: Vec<bool>,
}

impl BooleanPlane {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Splits a ternary mask into its `+1` plane and its `-1` plane.
pub fn decompose(mask: &TernaryMask) -> (BooleanPlane, BooleanPlane) {
    let plus = mask.weights.iter().map(|&w| w == 1).collect();
    let minus = mask.weights.iter().map(|&w| w == -1).collect();
    (BooleanPlane::new(plus), BooleanPlane::new(minus))
}

/// Inverse of [`decompose`]. The result is always in ternary mode.
pub fn compose(plus: &BooleanPlane, minus: &BooleanPlane) -> Result<TernaryMask> {
    check_len("compose", plus.len(), minus.len())?;
    let weights = plus
        .bits
        .iter()
        .zip(&minus.bits)
        .enumerate()
        .map(|(j, (&p, &m))| match (p, m) {
            (true, true) => Err(Error::OverlappingPlanes(j)),
            (true, false) => Ok(1),
            (false, true) => Ok(-1),
            (false, false) => Ok(0),
        })
        .collect::<Result<Vec<i8>>>()?;
    Ok(TernaryMask {
        weights,
        mode: WeightMode::Ternary,
    })
}

/// Uniform random mask over the mode's alphabet.
pub fn random_mask(len: usize, mode: WeightMode, seed: u64) -> TernaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mask_from(len, mode, &mut rng)
}

pub fn random_mask_from<R: Rng + ?Sized>(len: usize, mode: WeightMode, rng: &mut R) -> TernaryMask {
    let alphabet = mode.alphabet();
    let weights = (0..len)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect();
    TernaryMask { weights, mode }
}

/// Single photodetector with additive Gaussian noise.
///
/// Noise standard deviation is `noise_sigma * noise_scale`, where
/// `noise_scale` is the mean all-on detected power of a calibration batch.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    noise_sigma: f64,
    noise_scale: f64,
    /// Both planes measured at once on two detectors: one effective noise draw
    /// per ternary readout instead of two.
    dual_detector: bool,
    rng: ChaCha8Rng,
}

impl DetectorModel {
    pub fn new(noise_sigma: f64, seed: u64) -> Result<Self> {
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and non-negative, got {noise_sigma}"
            )));
        }
        Ok(Self {
            noise_sigma,
            noise_scale: 1.0,
            dual_detector: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_dual_detector(mut self, dual: bool) -> Self {
        self.dual_detector = dual;
        self
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn set_noise_scale(&mut self, scale: f64) {
        self.noise_scale = scale;
    }

    /// Sets the noise scale to the mean all-on power of `states` at unit gain.
    pub fn calibrate(&mut self, states: &[ReservoirState]) -> f64 {
        self.noise_scale = mean_all_on_power(states);
        self.noise_scale
    }

    /// One noise sample.
    pub fn draw(&mut self) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.noise_sigma * self.noise_scale * z
    }
}

pub fn mean_all_on_power(states: &[ReservoirState]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states.iter().map(ReservoirState::total).sum::<f64>() / states.len() as f64
}

/// Detected power of the nodes routed by `plane`, with one noise draw.
pub fn detect(
    state: &ReservoirState,
    plane: &BooleanPlane,
    gain: f64,
    det: &mut DetectorModel,
) -> Result<f64> {
    check_len("detect", state.len(), plane.len())?;
    let sum: f64 = state
        .intensities()
        .iter()
        .zip(plane.bits())
        .filter(|(_, &b)| b)
        .map(|(&x, _)| x)
        .sum();
    Ok(gain * sum + det.draw())
}

/// Subtractive readout `y+ - y-`: two sequential detections, two noise draws.
pub fn readout(
    state: &ReservoirState,
    mask: &TernaryMask,
    gain: f64,
    det: &mut DetectorModel,
) -> Result<f64> {
    check_len("readout", state.len(), mask.len())?;
    let (plus, minus) = decompose(mask);
    if det.dual_detector {
        let clean = gain * mask.dot(state.intensities());
        return Ok(clean + det.draw());
    }
    let y_plus = detect(state, &plus, gain, det)?;
    let y_minus = detect(state, &minus, gain, det)?;
    Ok(y_plus - y_minus)
}

/// JSON form of a mask, with the node grid geometry for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDocument {
    pub mode: WeightMode,
    pub weights: Vec<i8>,
    pub grid_side: usize,
    /// Row-major flat grid index of each weight's node.
    pub node_cells: Vec<usize>,
}

impl MaskDocument {
    pub fn new(mask: &TernaryMask, substrate: &Substrate) -> Self {
        let side = substrate.config().grid_side;
        Self {
            mode: mask.mode(),
            weights: mask.weights().to_vec(),
            grid_side: side,
            node_cells: substrate
                .node_cells()
                .iter()
                .map(|&(r, c)| r * side + c)
                .collect(),
        }
    }

    pub fn to_mask(&self) -> Result<TernaryMask> {
        check_len("MaskDocument", self.node_cells.len(), self.weights.len())?;
        TernaryMask::new(self.weights.clone(), self.mode)
    }

    /// Weights laid out on the full grid, row-major; cells outside the node
    /// aperture are `None`.
    pub fn to_grid(&self) -> Vec<Option<i8>> {
        let mut grid = vec![None; self.grid_side * self.grid_side];
        for (&cell, &w) in self.node_cells.iter().zip(&self.weights) {
            grid[cell] = Some(w);
        }
        grid
    }
}

/// Measures a fixed batch of reservoir states through the two-plane readout.
///
/// Noiseless plane sums are cached and updated incrementally for the nodes
/// whose weight changed since the previous call; noise is drawn fresh on every
/// call. Outputs are expressed in units of the calibrated mean all-on power.
#[derive(Debug, Clone)]
pub struct BatchReadout {
    n_samples: usize,
    n_nodes: usize,
    /// Node-major copy of the states: node `j` occupies `[j*N, (j+1)*N)`.
    node_major: Vec<f64>,
    detector: DetectorModel,
    gain: f64,
    /// Mean all-on power used as the output unit.
    power_unit: f64,
    cached: Option<(Vec<i8>, Vec<f64>, Vec<f64>)>,
    calls_since_refresh: usize,
}

const REFRESH_EVERY: usize = 512;

impl BatchReadout {
    pub fn new(
        states: &[ReservoirState],
        detector: DetectorModel,
        power_unit: f64,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Usage("BatchReadout needs at least one state".into()));
        }
        if !(power_unit.is_finite() && power_unit > 0.0) {
            return Err(Error::Numerical(format!(
                "output power unit must be positive, got {power_unit} (all-dark batch?)"
            )));
        }
        let n_nodes = states[0].len();
        let n_samples = states.len();
        let mut node_major = vec![0.0; n_nodes * n_samples];
        for (i, s) in states.iter().enumerate() {
            check_len("BatchReadout", n_nodes, s.len())?;
            for (j, &x) in s.intensities().iter().enumerate() {
                node_major[j * n_samples + i] = x;
            }
        }
        Ok(Self {
            n_samples,
            n_nodes,
            node_major,
            detector,
            gain: 1.0,
            power_unit,
            cached: None,
            calls_since_refresh: 0,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn set_gain(&mut self, gain: f64) {
        self.gain = gain;
    }

    pub fn detector(&self) -> &DetectorModel {
        &self.detector
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.node_major[j * self.n_samples..(j + 1) * self.n_samples]
    }

    fn full_sums(&self, weights: &[i8]) -> (Vec<f64>, Vec<f64>) {
        let mut plus = vec![0.0; self.n_samples];
        let mut minus = vec![0.0; self.n_samples];
        for (j, &w) in weights.iter().enumerate() {
            let target = match w {
                1 => &mut plus,
                -1 => &mut minus,
                _ => continue,
            };
            for (acc, &x) in target.iter_mut().zip(self.column(j)) {
                *acc += x;
            }
        }
        (plus, minus)
    }

    fn plane_sums(&mut self, weights: &[i8]) {
        let refresh = self.calls_since_refresh >= REFRESH_EVERY;
        match self.cached.take() {
            Some((mut old, mut plus, mut minus)) if !refresh => {
                for j in 0..self.n_nodes {
                    let (was, now) = (old[j], weights[j]);
                    if was == now {
                        continue;
                    }
                    let n = self.n_samples;
                    let col = &self.node_major[j * n..(j + 1) * n];
                    match was {
                        1 => plus.iter_mut().zip(col).for_each(|(a, &x)| *a -= x),
                        -1 => minus.iter_mut().zip(col).for_each(|(a, &x)| *a -= x),
                        _ => {}
                    }
                    match now {
                        1 => plus.iter_mut().zip(col).for_each(|(a, &x)| *a += x),
                        -1 => minus.iter_mut().zip(col).for_each(|(a, &x)| *a += x),
                        _ => {}
                    }
                    old[j] = now;
                }
                self.cached = Some((old, plus, minus));
                self.calls_since_refresh += 1;
            }
            _ => {
                let (plus, minus) = self.full_sums(weights);
                self.cached = Some((weights.to_vec(), plus, minus));
                self.calls_since_refresh = 0;
            }
        }
    }

    /// Measures every sample of the batch with `mask`.
    ///
    /// Boolean masks take one detection per sample; ternary masks take two
    /// sequential detections (the whole batch on the `+1` plane, then on the
    /// `-1` plane) unless the detector is in dual mode.
    pub fn measure(&mut self, mask: &TernaryMask) -> Result<Vec<f64>> {
        check_len("BatchReadout::measure", self.n_nodes, mask.len())?;
        self.plane_sums(mask.weights());
        let (_, plus, minus) = self.cached.as_ref().expect("sums cached");
        let g = self.gain;
        let unit = self.power_unit;
        let mut out: Vec<f64> = plus.iter().map(|&p| g * p).collect();
        match (mask.mode(), self.detector.dual_detector) {
            (WeightMode::Boolean, _) => {
                for y in &mut out {
                    *y += self.detector.draw();
                }
            }
            (WeightMode::Ternary, true) => {
                for (y, &m) in out.iter_mut().zip(minus) {
                    *y -= g * m;
                    *y += self.detector.draw();
                }
            }
            (WeightMode::Ternary, false) => {
                for y in &mut out {
                    *y += self.detector.draw();
                }
                for (y, &m) in out.iter_mut().zip(minus) {
                    *y -= g * m + self.detector.draw();
                }
            }
        }
        for y in &mut out {
            *y /= unit;
        }
        Ok(out)
    }
}
