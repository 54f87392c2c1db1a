use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledBatch;
use crate::error::{Error, Result};
use crate::substrate::InputPattern;

/// Pie-shaped Boolean header: the disk is cut into `n_bits` equal sectors,
/// sector `k` lit iff bit `k` of `header_value` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderSpec {
    pub n_bits: u32,
    pub image_side: usize,
    pub header_value: u64,
}

impl HeaderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_bits < 2 || self.n_bits > 32 {
            return Err(Error::Config(format!(
                "n_bits must be in 2..=32, got {}",
                self.n_bits
            )));
        }
        if self.header_value >= 1u64 << self.n_bits {
            return Err(Error::Config(format!(
                "header value {} does not fit in {} bits",
                self.header_value, self.n_bits
            )));
        }
        Ok(())
    }
}

/// Sector index of a pixel centre, angles measured counter-clockwise from +x
/// with rows growing downwards.
pub fn sector_of(row: usize, col: usize, side: usize, n_bits: u32) -> usize {
    let half = side as f64 / 2.0;
    let x = col as f64 + 0.5 - half;
    let y = half - (row as f64 + 0.5);
    let angle = y.atan2(x).rem_euclid(std::f64::consts::TAU);
    let k = (angle / std::f64::consts::TAU * f64::from(n_bits)).floor() as usize;
    k.min(n_bits as usize - 1)
}

pub fn render_header(spec: &HeaderSpec) -> Result<InputPattern> {
    spec.validate()?;
    let side = spec.image_side;
    let mut pixels = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let k = sector_of(row, col, side, spec.n_bits);
            pixels.push(spec.header_value >> k & 1 == 1);
        }
    }
    InputPattern::new(side, pixels)
}

/// Balanced one-vs-all batch: `n / 2` copies of `target_value` and `n / 2`
/// headers drawn uniformly from the other values, shuffled.
pub fn make_header_batch(
    n_bits: u32,
    image_side: usize,
    target_value: u64,
    n: usize,
    seed: u64,
    levels: (f64, f64),
) -> Result<LabeledBatch> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Usage(format!(
            "batch size must be even and positive, got {n}"
        )));
    }
    let spec = HeaderSpec {
        n_bits,
        image_side,
        header_value: target_value,
    };
    spec.validate()?;
    let n_values = 1u64 << n_bits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<u64> = vec![target_value; n / 2];
    for _ in 0..n / 2 {
        let mut v = rng.random_range(0..n_values - 1);
        if v >= target_value {
            v += 1;
        }
        values.push(v);
    }
    values.shuffle(&mut rng);

    let mut cache = std::collections::HashMap::new();
    let mut patterns = Vec::with_capacity(n);
    for &v in &values {
        let p = match cache.get(&v) {
            Some(p) => p,
            None => {
                let p = render_header(&HeaderSpec {
                    header_value: v,
                    ..spec
                })?;
                cache.entry(v).or_insert(p)
            }
        };
        patterns.push(p.clone());
    }
    let targets = values
        .iter()
        .map(|&v| {
            if v == target_value {
                levels.1
            } else {
                levels.0
            }
        })
        .collect();
    let labels = values.iter().map(|&v| v as i64).collect();
    LabeledBatch::new(patterns, targets, labels)
}
