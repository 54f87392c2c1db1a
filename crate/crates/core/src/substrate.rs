//! Surrogate of the optical forward path.
//!
//! An input pattern is mixed by a frozen complex random transmission matrix
//! (multimode-fibre speckle), converted to intensity on a circular grid of
//! laser nodes and, with the laser enabled, passed through a shared-gain
//! saturation: every node is divided by `1 + s * mean(p)`, so a bright input
//! compresses the whole array and each output depends on all injected light.
//! An optional Gaussian carrier-diffusion kernel then smooths the result.
//! With the laser disabled the node intensity is the bare speckle intensity
//! `|T u|^2`.
//!
//! The laser is operated in steady state, so the substrate is a static map:
//! everything time dependent lives in the detector-path gain, which drifts as a
//! seeded mean-reverting random walk.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const GAIN_MIN: f64 = 0.5;
const GAIN_MAX: f64 = 2.0;
/// Kernel support in units of `diffusion_sigma`.
const KERNEL_CUTOFF_SIGMAS: f64 = 4.0;

/// Row-major membership mask of the circle inscribed in a `side x side` square.
///
/// A cell is inside iff its centre lies within the circle (boundary included).
pub fn inscribed_circle(side: usize) -> Vec<bool> {
    let half = side as f64 / 2.0;
    let r2 = half * half;
    let mut mask = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let dy = row as f64 + 0.5 - half;
            let dx = col as f64 + 0.5 - half;
            mask.push(dx * dx + dy * dy <= r2);
        }
    }
    mask
}

/// A Boolean frame shown on the input micromirror array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPattern {
    side: usize,
    pixels: Vec<bool>,
    aperture: Vec<bool>,
}

impl InputPattern {
    /// Builds a pattern from row-major pixels. Pixels outside the circular
    /// aperture are switched off.
    pub fn new(side: usize, mut pixels: Vec<bool>) -> Result<Self> {
        if side < 4 {
            return Err(Error::Config(format!(
                "pattern side must be >= 4, got {side}"
            )));
        }
        check_len("InputPattern::new", side * side, pixels.len())?;
        let aperture = inscribed_circle(side);
        for (p, &inside) in pixels.iter_mut().zip(&aperture) {
            *p &= inside;
        }
        Ok(Self {
            side,
            pixels,
            aperture,
        })
    }

    pub fn blank(side: usize) -> Result<Self> {
        Self::new(side, vec![false; side * side])
    }

    /// Every pixel inside the aperture switched on.
    pub fn full(side: usize) -> Result<Self> {
        Self::new(side, vec![true; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn aperture(&self) -> &[bool] {
        &self.aperture
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.side + col]
    }

    pub fn on_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

/// Physical conditions the simulator stands in for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstrateConfig {
    pub grid_side: usize,
    pub input_side: usize,
    pub saturation: f64,
    pub diffusion_sigma: f64,
    pub noise_sigma: f64,
    pub drift_amplitude: f64,
    pub drift_timescale: f64,
    pub vcsel_on: bool,
    pub seed: u64,
}

impl Default for SubstrateConfig {
    fn default() -> Self {
        Self {
            grid_side: 24,
            input_side: 28,
            saturation: 0.03,
            diffusion_sigma: 0.0,
            noise_sigma: 0.003,
            drift_amplitude: 0.002,
            drift_timescale: 360.0,
            vcsel_on: true,
            seed: 0,
        }
    }
}

impl SubstrateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_side < 2 {
            return Err(Error::Config(format!(
                "grid_side must be >= 2, got {}",
                self.grid_side
            )));
        }
        if self.input_side < 4 {
            return Err(Error::Config(format!(
                "input_side must be >= 4, got {}",
                self.input_side
            )));
        }
        let reals = [
            ("saturation", self.saturation),
            ("diffusion_sigma", self.diffusion_sigma),
            ("noise_sigma", self.noise_sigma),
            ("drift_amplitude", self.drift_amplitude),
        ];
        for (name, v) in reals {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !self.drift_timescale.is_finite() || self.drift_timescale <= 0.0 {
            return Err(Error::Config(format!(
                "drift_timescale must be finite and positive, got {}",
                self.drift_timescale
            )));
        }
        Ok(())
    }
}

/// Non-negative optical power per active node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirState {
    intensities: Vec<f64>,
}

impl ReservoirState {
    pub fn new(intensities: Vec<f64>) -> Result<Self> {
        if let Some(bad) = intensities.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Contract(format!(
                "reservoir intensities must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self { intensities })
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.intensities.iter().sum()
    }
}

/// Scatter kernel: for each source node, the (target, weight) pairs it spreads
/// into. Weights of one source sum to one so smoothing conserves power.
#[derive(Debug, Clone)]
struct DiffusionKernel {
    spread: Vec<Vec<(usize, f64)>>,
}

impl DiffusionKernel {
    fn new(node_cells: &[(usize, usize)], sigma: f64) -> Option<Self> {
        if sigma <= 0.0 {
            return None;
        }
        let reach = KERNEL_CUTOFF_SIGMAS * sigma;
        let reach2 = reach * reach;
        let denom = 2.0 * sigma * sigma;
        let spread = node_cells
            .iter()
            .map(|&(r0, c0)| {
                let mut row: Vec<(usize, f64)> = node_cells
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &(r, c))| {
                        let dr = r as f64 - r0 as f64;
                        let dc = c as f64 - c0 as f64;
                        let d2 = dr * dr + dc * dc;
                        (d2 <= reach2).then(|| (k, (-d2 / denom).exp()))
                    })
                    .collect();
                let norm: f64 = row.iter().map(|(_, w)| w).sum();
                for (_, w) in &mut row {
                    *w /= norm;
                }
                row
            })
            .collect();
        Some(Self { spread })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (src, row) in self.spread.iter().enumerate() {
            let v = x[src];
            if v == 0.0 {
                continue;
            }
            for &(dst, w) in row {
                out[dst] += w * v;
            }
        }
        out
    }
}

/// The simulated optical hardware.
#[derive(Debug, Clone)]
pub struct Substrate {
    config: SubstrateConfig,
    /// Column-major: column `p` (one active input pixel) holds `node_count` entries.
    transmission: Vec<Complex64>,
    node_mask: Vec<bool>,
    node_cells: Vec<(usize, usize)>,
    /// Maps a flat input pixel index to its transmission column.
    pixel_column: Vec<Option<usize>>,
    input_pixels: usize,
    kernel: Option<DiffusionKernel>,
    gain: f64,
    drift_rng: ChaCha8Rng,
}

impl Substrate {
    pub fn new(config: SubstrateConfig) -> Result<Self> {
        config.validate()?;
        let node_mask = inscribed_circle(config.grid_side);
        let node_cells: Vec<(usize, usize)> = node_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| (i / config.grid_side, i % config.grid_side))
            .collect();

        let aperture = inscribed_circle(config.input_side);
        let mut pixel_column = vec![None; aperture.len()];
        let mut input_pixels = 0;
        for (i, &inside) in aperture.iter().enumerate() {
            if inside {
                pixel_column[i] = Some(input_pixels);
                input_pixels += 1;
            }
        }

        // Circular complex Gaussian with unit variance: each quadrature N(0, 1/2).
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let quad = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let n_nodes = node_cells.len();
        let transmission = (0..n_nodes * input_pixels)
            .map(|_| Complex64::new(quad.sample(&mut rng), quad.sample(&mut rng)))
            .collect();

        let kernel = if config.vcsel_on {
            DiffusionKernel::new(&node_cells, config.diffusion_sigma)
        } else {
            None
        };

        let mut drift_rng = ChaCha8Rng::seed_from_u64(config.seed);
        drift_rng.set_stream(1);

        Ok(Self {
            config,
            transmission,
            node_mask,
            node_cells,
            pixel_column,
            input_pixels,
            kernel,
            gain: 1.0,
            drift_rng,
        })
    }

    pub fn config(&self) -> &SubstrateConfig {
        &self.config
    }

    /// Number of active laser nodes (`K`).
    pub fn node_count(&self) -> usize {
        self.node_cells.len()
    }

    /// Number of input pixels inside the input aperture (`D`).
    pub fn input_pixel_count(&self) -> usize {
        self.input_pixels
    }

    pub fn node_mask(&self) -> &[bool] {
        &self.node_mask
    }

    /// `(row, col)` grid position of every active node, in node order.
    pub fn node_cells(&self) -> &[(usize, usize)] {
        &self.node_cells
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn set_gain(&mut self, gain: f64) {
        self.gain = gain.clamp(GAIN_MIN, GAIN_MAX);
    }

    /// Transmission coefficient from active input pixel `pixel` to node `node`.
    pub fn transmission(&self, node: usize, pixel: usize) -> Complex64 {
        self.transmission[pixel * self.node_count() + node]
    }

    /// Same substrate with the laser switched on or off. The transmission
    /// matrix and drift state are shared.
    pub fn with_vcsel(&self, vcsel_on: bool) -> Self {
        let mut out = self.clone();
        out.config.vcsel_on = vcsel_on;
        out.kernel = if vcsel_on {
            DiffusionKernel::new(&self.node_cells, self.config.diffusion_sigma)
        } else {
            None
        };
        out
    }

    /// Node intensities after mixing only, before any laser response.
    pub fn speckle_intensity(&self, pattern: &InputPattern) -> Result<Vec<f64>> {
        check_len("Substrate::forward", self.config.input_side, pattern.side())?;
        let k = self.node_count();
        let mut field = vec![Complex64::new(0.0, 0.0); k];
        for (i, &on) in pattern.pixels().iter().enumerate() {
            if !on {
                continue;
            }
            if let Some(col) = self.pixel_column[i] {
                let column = &self.transmission[col * k..(col + 1) * k];
                for (a, t) in field.iter_mut().zip(column) {
                    *a += t;
                }
            }
        }
        Ok(field.iter().map(|a| a.norm_sqr()).collect())
    }

    /// Steady-state reservoir response. Pure: no noise, no drift.
    ///
    /// Laser on: `x_j = p_j / (1 + s * mean(p))`, then the diffusion kernel if
    /// `diffusion_sigma > 0`. The mean node intensity stays below `1 / s`.
    pub fn forward(&self, pattern: &InputPattern) -> Result<ReservoirState> {
        let p = self.speckle_intensity(pattern)?;
        if !self.config.vcsel_on {
            return Ok(ReservoirState { intensities: p });
        }
        let s = self.config.saturation;
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        let saturated: Vec<f64> = p.iter().map(|&v| v / (1.0 + s * mean)).collect();
        let intensities = match &self.kernel {
            Some(kernel) => kernel.apply(&saturated),
            None => saturated,
        };
        Ok(ReservoirState { intensities })
    }

    /// Maps [`Substrate::forward`] over a batch, preserving order.
    pub fn forward_batch(&self, batch: &[InputPattern]) -> Result<Vec<ReservoirState>> {
        if batch.is_empty() {
            return Err(Error::Usage(
                "forward_batch called with an empty batch".into(),
            ));
        }
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            batch.par_iter().map(|p| self.forward(p)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            batch.iter().map(|p| self.forward(p)).collect()
        }
    }

    /// Advances the detector-path gain by `steps` mean-reverting random-walk
    /// steps, clamped to `[0.5, 2.0]`.
    pub fn advance_drift(&mut self, steps: usize) {
        let amp = self.config.drift_amplitude;
        let tau = self.config.drift_timescale;
        for _ in 0..steps {
            let xi: f64 = if amp > 0.0 {
                StandardNormal.sample(&mut self.drift_rng)
            } else {
                0.0
            };
            let next = self.gain + (1.0 - self.gain) / tau + amp * xi;
            self.gain = next.clamp(GAIN_MIN, GAIN_MAX);
        }
    }
}
