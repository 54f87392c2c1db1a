//! Error-adaptive multi-site search over readout masks.
//!
//! Each epoch flips `ceil(alpha * nmse_best)` randomly chosen mirrors (at least
//! one) to fresh random symbols, measures the candidate on the training batch
//! and keeps it only if its NMSE is strictly lower than the best so far. With
//! `alpha = 0` this is the classic single-flip Boolean learning rule; the
//! error takes the role the temperature plays in simulated annealing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::readout::{random_mask_from, TernaryMask, WeightMode};

/// Population standard deviation below which an output is treated as constant.
const DEGENERATE_STD: f64 = 1e-12;

/// `sum_i (y_out_i - y_target_i)^2 / (N * std(y_out))`, with the population
/// standard deviation. Note the normalisation is by the standard deviation,
/// not the variance.
///
/// A (near-)constant output returns `f64::INFINITY`, which can never be
/// accepted as an improvement.
pub fn nmse(y_out: &[f64], y_target: &[f64]) -> Result<f64> {
    check_len("nmse", y_target.len(), y_out.len())?;
    let n = y_out.len();
    if n < 2 {
        return Err(Error::Usage(format!(
            "nmse needs at least 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = y_out.iter().sum::<f64>() / nf;
    let var = y_out.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / nf;
    let std = var.sqrt();
    if !std.is_finite() || std < DEGENERATE_STD {
        return Ok(f64::INFINITY);
    }
    let sse: f64 = y_out
        .iter()
        .zip(y_target)
        .map(|(y, t)| (y - t) * (y - t))
        .sum();
    Ok(sse / (nf * std))
}

/// Number of mirrors to flip: `max(1, ceil(alpha * nmse))`, capped at
/// `mask_len`. The ceiling is taken on the exact product of the two floats.
pub fn n_mirrors(alpha: f64, nmse: f64, mask_len: usize) -> usize {
    let cap = mask_len.max(1);
    if alpha == 0.0 || nmse == 0.0 {
        return 1;
    }
    let product = alpha * nmse;
    if !product.is_finite() {
        return cap;
    }
    let mut ceil = product.ceil();
    // alpha * nmse may round down onto an integer; the rounding error of a
    // product is exactly representable, so fma recovers its sign.
    if ceil == product && alpha.mul_add(nmse, -product) > 0.0 {
        ceil += 1.0;
    }
    if ceil >= cap as f64 {
        cap
    } else {
        (ceil as usize).max(1)
    }
}

/// Copy of `mask` with `n` positions, chosen uniformly with replacement,
/// redrawn uniformly from the mode's alphabet.
pub fn propose<R: Rng + ?Sized>(
    mask: &TernaryMask,
    n: usize,
    mode: WeightMode,
    rng: &mut R,
) -> Result<TernaryMask> {
    if n == 0 || n > mask.len() {
        return Err(Error::Usage(format!(
            "cannot flip {n} mirrors of a {}-node mask",
            mask.len()
        )));
    }
    let alphabet = mode.alphabet();
    let mut weights = mask.weights().to_vec();
    for _ in 0..n {
        let pos = rng.random_range(0..weights.len());
        weights[pos] = alphabet[rng.random_range(0..alphabet.len())];
    }
    TernaryMask::new(weights, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub max_epochs: usize,
    pub mode: WeightMode,
    pub seed: u64,
    pub target_levels: (f64, f64),
    pub patience: Option<usize>,
    /// Map outputs affinely so that the initial mask's min/max land on the
    /// target levels; the map is frozen for the rest of the run.
    pub normalize_outputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            max_epochs: 3000,
            mode: WeightMode::Ternary,
            seed: 0,
            target_levels: (0.0, 1.0),
            patience: None,
            normalize_outputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        let (lo, hi) = self.target_levels;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Config(format!(
                "target_levels must satisfy low < high, got ({lo}, {hi})"
            )));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be >= 1 when set".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub nmse_best: f64,
    pub n_mirrors: usize,
    pub accepted: bool,
}

/// Affine output map `y -> (y - offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub offset: f64,
    pub scale: f64,
}

impl OutputMap {
    pub const IDENTITY: OutputMap = OutputMap {
        offset: 0.0,
        scale: 1.0,
    };

    /// Map sending `min(y)` to `low` and `max(y)` to `high`. Falls back to
    /// identity for a constant output.
    pub fn spanning(y: &[f64], (low, high): (f64, f64)) -> Self {
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        if !(span.is_finite() && span > 0.0) {
            return Self::IDENTITY;
        }
        let scale = (high - low) / span;
        Self {
            offset: min - low / scale,
            scale,
        }
    }

    pub fn apply(&self, y: &mut [f64]) {
        if *self == Self::IDENTITY {
            return;
        }
        for v in y {
            *v = (*v - self.offset) * self.scale;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    #[serde(with = "mask_serde")]
    pub best_mask: TernaryMask,
    pub initial_nmse: f64,
    pub final_nmse: f64,
    pub output_map: OutputMap,
    pub history: Vec<EpochRecord>,
}

impl TrainResult {
    /// First epoch whose best NMSE is within 5% of the total improvement from
    /// the initial to the final NMSE. Zero when the run never improved.
    pub fn epochs_to_convergence(&self) -> usize {
        let start = if self.initial_nmse.is_finite() {
            self.initial_nmse
        } else {
            match self.history.iter().find(|r| r.nmse_best.is_finite()) {
                Some(r) => r.nmse_best,
                None => return 0,
            }
        };
        let improvement = start - self.final_nmse;
        if improvement.is_nan() || improvement <= 0.0 {
            return 0;
        }
        let threshold = self.final_nmse + 0.05 * improvement;
        self.history
            .iter()
            .find(|r| r.nmse_best <= threshold)
            .map_or(0, |r| r.epoch)
    }

    /// Best-NMSE trace, one entry per epoch.
    pub fn curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.nmse_best).collect()
    }
}

mod mask_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Flat {
        mode: WeightMode,
        weights: Vec<i8>,
    }

    pub fn serialize<S: Serializer>(m: &TernaryMask, s: S) -> std::result::Result<S::Ok, S::Error> {
        Flat {
            mode: m.mode(),
            weights: m.weights().to_vec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<TernaryMask, D::Error> {
        let flat = Flat::deserialize(d)?;
        TernaryMask::new(flat.weights, flat.mode).map_err(serde::de::Error::custom)
    }
}

/// Hardware-in-the-loop training loop.
///
/// `forward_pass` measures a candidate mask on the fixed training batch and
/// returns one output per sample. It owns the substrate, detector and noise.
pub fn train<F>(
    mut forward_pass: F,
    y_target: &[f64],
    mask_len: usize,
    cfg: &TrainConfig,
) -> Result<TrainResult>
where
    F: FnMut(&TernaryMask) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    if mask_len == 0 {
        return Err(Error::Usage("mask length must be >= 1".into()));
    }
    let n = y_target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best = random_mask_from(mask_len, cfg.mode, &mut rng);
    let output_map = if cfg.normalize_outputs {
        let y0 = forward_pass(&best)?;
        check_len("train: forward pass output", n, y0.len())?;
        OutputMap::spanning(&y0, cfg.target_levels)
    } else {
        OutputMap::IDENTITY
    };
    let mut measure = |mask: &TernaryMask, map: &OutputMap| -> Result<f64> {
        let mut y = forward_pass(mask)?;
        if y.len() != n {
            return Err(Error::Contract(format!(
                "forward pass returned {} outputs for {n} targets",
                y.len()
            )));
        }
        map.apply(&mut y);
        nmse(&y, y_target)
    };

    let initial_nmse = measure(&best, &output_map)?;
    let mut nmse_best = initial_nmse;

    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut since_improvement = 0;
    for epoch in 1..=cfg.max_epochs {
        let flips = n_mirrors(cfg.alpha, nmse_best, mask_len);
        let candidate = propose(&best, flips, cfg.mode, &mut rng)?;
        let nmse_temp = measure(&candidate, &output_map)?;
        let accepted = nmse_temp < nmse_best;
        if accepted {
            best = candidate;
            nmse_best = nmse_temp;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        history.push(EpochRecord {
            epoch,
            nmse_best,
            n_mirrors: flips,
            accepted,
        });
        if cfg.patience.is_some_and(|p| since_improvement >= p) {
            break;
        }
    }

    Ok(TrainResult {
        best_mask: best,
        initial_nmse,
        final_nmse: nmse_best,
        output_map,
        history,
    })
}

/// How the decision threshold on the scalar output is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdRule {
    /// Midpoint between the mean output of each class on the evaluated batch.
    ClassMeanMidpoint,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nmse: f64,
    pub accuracy: f64,
    pub ser: f64,
    pub threshold: f64,
}

/// Positive-class labels: a target counts as positive when it is above the
/// midpoint of the batch's target range.
pub fn positive_labels(y_target: &[f64]) -> Vec<bool> {
    let lo = y_target.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y_target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    y_target.iter().map(|&t| hi > lo && t > mid).collect()
}

pub fn class_mean_midpoint(y_out: &[f64], labels: &[bool]) -> f64 {
    let (mut sp, mut np, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for (&y, &l) in y_out.iter().zip(labels) {
        if l {
            sp += y;
            np += 1;
        } else {
            sn += y;
            nn += 1;
        }
    }
    match (np, nn) {
        (0, 0) => 0.0,
        (0, _) => sn / nn as f64,
        (_, 0) => sp / np as f64,
        _ => 0.5 * (sp / np as f64 + sn / nn as f64),
    }
}

/// Scores a batch of outputs. A sample is predicted positive iff its output
/// is strictly above the threshold.
pub fn score(y_out: &[f64], y_target: &[f64], rule: ThresholdRule) -> Result<Metrics> {
    check_len("score", y_target.len(), y_out.len())?;
    let labels = positive_labels(y_target);
    let threshold = match rule {
        ThresholdRule::Fixed(t) => t,
        ThresholdRule::ClassMeanMidpoint => class_mean_midpoint(y_out, &labels),
    };
    let errors = y_out
        .iter()
        .zip(&labels)
        .filter(|(&y, &l)| (y > threshold) != l)
        .count();
    let ser = errors as f64 / y_out.len().max(1) as f64;
    Ok(Metrics {
        nmse: nmse(y_out, y_target)?,
        accuracy: 1.0 - ser,
        ser,
        threshold,
    })
}

/// Measures `mask` once through `forward_pass` and scores it.
pub fn evaluate<F>(
    mut forward_pass: F,
    mask: &TernaryMask,
    y_target: &[f64],
    output_map: &OutputMap,
    rule: ThresholdRule,
) -> Result<Metrics>
where
    F: FnMut(&TernaryMask) -> Result<Vec<f64>>,
{
    let mut y = forward_pass(mask)?;
    if y.len() != y_target.len() {
        return Err(Error::Contract(format!(
            "forward pass returned {} outputs for {} targets",
            y.len(),
            y_target.len()
        )));
    }
    output_map.apply(&mut y);
    score(&y, y_target, rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_examples() {
        let t = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        // std([0, 2]) = 1 (population), residuals 0 and 1.
        assert_eq!(nmse(&[0.0, 2.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(
            nmse(&[3.0, 3.0, 3.0], &[0.0, 1.0, 0.0]).unwrap(),
            f64::INFINITY
        );
        assert!(nmse(&[1.0], &[1.0]).is_err());
        assert!(nmse(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn n_mirrors_examples() {
        assert_eq!(n_mirrors(0.0, 0.7, 448), 1);
        assert_eq!(n_mirrors(0.0, f64::INFINITY, 448), 1);
        assert_eq!(n_mirrors(10.0, 0.25, 448), 3);
        assert_eq!(n_mirrors(10.0, 0.3, 448), 3);
        assert_eq!(n_mirrors(10.0, 0.0, 448), 1);
        assert_eq!(n_mirrors(10.0, f64::INFINITY, 448), 448);
        assert_eq!(n_mirrors(1e6, 1.0, 448), 448);
    }

    #[test]
    fn n_mirrors_exact_ceiling_when_product_rounds_down() {
        // 3 * (1/3 rounded up) exceeds 1 by less than half an ulp, so the
        // float product is exactly 1.0 while the true product is above it.
        let third = 1.0_f64 / 3.0;
        let e = f64::from_bits(third.to_bits() + 1);
        assert_eq!(3.0 * e, 1.0);
        assert_eq!(n_mirrors(3.0, e, 448), 2);
    }

    #[test]
    fn propose_single_site() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = TernaryMask::zeros(20, WeightMode::Ternary);
        for _ in 0..200 {
            let c = propose(&m, 1, WeightMode::Ternary, &mut rng).unwrap();
            let diff = m
                .weights()
                .iter()
                .zip(c.weights())
                .filter(|(a, b)| a != b)
                .count();
            assert!(diff <= 1);
        }
        assert!(propose(&m, 0, WeightMode::Ternary, &mut rng).is_err());
        assert!(propose(&m, 21, WeightMode::Ternary, &mut rng).is_err());
    }

    #[test]
    fn propose_boolean_stays_boolean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = TernaryMask::zeros(30, WeightMode::Boolean);
        for n in 1..=30 {
            let c = propose(&m, n, WeightMode::Boolean, &mut rng).unwrap();
            assert_eq!(c.count(-1), 0);
        }
    }

    #[test]
    fn train_config_validation() {
        let bad = [
            TrainConfig {
                max_epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                target_levels: (1.0, 1.0),
                ..TrainConfig::default()
            },
            TrainConfig {
                alpha: -1.0,
                ..TrainConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn train_rejects_wrong_output_length() {
        let cfg = TrainConfig {
            normalize_outputs: false,
            ..TrainConfig::default()
        };
        let r = train(|_| Ok(vec![0.0; 3]), &[0.0, 1.0], 4, &cfg);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn patience_stops_early() {
        let cfg = TrainConfig {
            patience: Some(5),
            normalize_outputs: false,
            ..TrainConfig::default()
        };
        // Output independent of the mask: nothing is ever accepted.
        let r = train(|_| Ok(vec![0.0, 2.0]), &[0.0, 1.0], 4, &cfg).unwrap();
        assert_eq!(r.history.len(), 5);
        assert!(r.history.iter().all(|h| !h.accepted));
        assert_eq!(r.final_nmse, 0.5);
        assert_eq!(r.epochs_to_convergence(), 0);
    }

    #[test]
    fn score_examples() {
        let t = [0.0, 1.0, 0.0, 1.0];
        let perfect = score(&t, &t, ThresholdRule::ClassMeanMidpoint).unwrap();
        assert_eq!((perfect.accuracy, perfect.ser), (1.0, 0.0));
        let flipped = score(&[1.0, 0.0, 1.0, 0.0], &t, ThresholdRule::ClassMeanMidpoint).unwrap();
        assert_eq!(flipped.accuracy, 0.0);
        let m = score(&[0.1, 0.9, 0.4, 0.6], &t, ThresholdRule::Fixed(0.5)).unwrap();
        assert_eq!(m.ser, 0.0);
        // Constant output: tie goes to the negative class.
        let c = score(&[0.3; 4], &t, ThresholdRule::ClassMeanMidpoint).unwrap();
        assert_eq!(c.accuracy, 0.5);
    }

    #[test]
    fn output_map_spans_levels() {
        let map = OutputMap::spanning(&[2.0, 4.0, 3.0], (0.0, 1.0));
        let mut y = vec![2.0, 4.0, 3.0];
        map.apply(&mut y);
        assert_eq!(y, vec![0.0, 1.0, 0.5]);
        assert_eq!(
            OutputMap::spanning(&[1.0, 1.0], (0.0, 1.0)),
            OutputMap::IDENTITY
        );
    }

    #[test]
    fn train_result_json() {
        let cfg = TrainConfig {
            max_epochs: 20,
            ..TrainConfig::default()
        };
        let x = [[1.0, 0.0, 2.0], [0.5, 1.0, 0.0], [0.0, 3.0, 1.0]];
        let r = train(
            |m| Ok(x.iter().map(|s| m.dot(s)).collect()),
            &[1.0, 0.0, 1.0],
            3,
            &cfg,
        )
        .unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: TrainResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
