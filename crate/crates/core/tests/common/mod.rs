//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ternary_onn::optimizer::{train, TrainConfig};
use ternary_onn::readout::{BatchReadout, DetectorModel};
use ternary_onn::{ReservoirState, TernaryMask, WeightMode};

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

/// NMSE in exact rational arithmetic; the only rounding is the final square
/// root. `None` for a constant output.
pub fn nmse_oracle(y: &[f64], t: &[f64]) -> Option<f64> {
    let n = BigRational::from_integer(BigInt::from(y.len()));
    let ys: Vec<BigRational> = y.iter().map(|&v| exact(v)).collect();
    let mean = ys.iter().fold(BigRational::zero(), |a, v| a + v) / &n;
    let var = ys
        .iter()
        .map(|v| {
            let d = v - &mean;
            &d * &d
        })
        .fold(BigRational::zero(), |a, v| a + v)
        / &n;
    if var.is_zero() {
        return None;
    }
    let sse = ys
        .iter()
        .zip(t)
        .map(|(v, &tt)| {
            let d = v - exact(tt);
            &d * &d
        })
        .fold(BigRational::zero(), |a, v| a + v);
    // nmse^2 = sse^2 / (n^2 var)
    let ratio = &sse * &sse / (&n * &n * var);
    Some(ratio.to_f64().expect("representable").sqrt())
}

/// `max(1, ceil(alpha * nmse))` capped at `len`, with the product exact.
pub fn n_mirrors_oracle(alpha: f64, nmse: f64, len: usize) -> usize {
    let cap = len.max(1);
    if alpha == 0.0 || nmse == 0.0 {
        return 1;
    }
    if nmse.is_infinite() {
        return cap;
    }
    let product = exact(alpha) * exact(nmse);
    let ceil = product.ceil().to_integer();
    if ceil >= BigInt::from(cap) {
        cap
    } else if ceil < BigInt::one() {
        1
    } else {
        ceil.to_usize().unwrap()
    }
}

/// Ridge objective `(1/N) sum (w.x + b - t)^2 + lambda |w|^2`.
pub fn ridge_objective(x: &[Vec<f64>], t: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.len() as f64;
    let sse: f64 = x
        .iter()
        .zip(t)
        .map(|(row, &tt)| {
            let y: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            (y - tt) * (y - tt)
        })
        .sum();
    sse / n + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Minimises the ridge objective over `(w, b)` by conjugate gradients on its
/// gradient, without forming or factoring any matrix.
pub fn ridge_numeric(x: &[Vec<f64>], t: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let k = x[0].len();
    let n = x.len() as f64;
    // theta = (w_0..w_{k-1}, b). The Hessian is constant: `apply(v, false)`
    // is H v and `apply(theta, true)` the gradient.
    let apply = |v: &[f64], with_targets: bool| -> Vec<f64> {
        let mut g = vec![0.0; k + 1];
        for (row, &tt) in x.iter().zip(t) {
            let mut r = row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + v[k];
            if with_targets {
                r -= tt;
            }
            for j in 0..k {
                g[j] += 2.0 * r * row[j] / n;
            }
            g[k] += 2.0 * r / n;
        }
        for j in 0..k {
            g[j] += 2.0 * lambda * v[j];
        }
        g
    };
    let grad = |theta: &[f64]| apply(theta, true);
    let hess = |v: &[f64]| apply(v, false);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut theta = vec![0.0; k + 1];
    let g_start = grad(&theta);
    let tol = 1e-30 * dot(&g_start, &g_start);
    for _restart in 0..3 {
        let mut r: Vec<f64> = grad(&theta).iter().map(|v| -v).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        for _ in 0..2 * (k + 1) {
            if rr <= tol {
                break;
            }
            let hp = hess(&p);
            let curvature = dot(&p, &hp);
            if curvature.is_nan() || curvature <= 0.0 {
                break;
            }
            let step = rr / curvature;
            for i in 0..=k {
                theta[i] += step * p[i];
                r[i] -= step * hp[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..=k {
                p[i] = r[i] + beta * p[i];
            }
        }
    }
    let b = theta[k];
    theta.truncate(k);
    (theta, b)
}

/// Exhaustive minimum NMSE over all `3^k` ternary masks of noiseless
/// `y = sum w_j x_j` outputs.
pub fn brute_force_min_nmse(states: &[ReservoirState], targets: &[f64]) -> f64 {
    let k = states[0].len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(k as u32) {
        let mut c = code;
        let w: Vec<i8> = (0..k)
            .map(|_| {
                let s = (c % 3) as i8 - 1;
                c /= 3;
                s
            })
            .collect();
        let mask = TernaryMask::new(w, WeightMode::Ternary).unwrap();
        let y: Vec<f64> = states.iter().map(|s| mask.dot(s.intensities())).collect();
        if let Some(e) = nmse_oracle(&y, targets) {
            best = best.min(e);
        }
    }
    best
}

pub fn random_states(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<ReservoirState> {
    (0..n)
        .map(|_| ReservoirState::new((0..k).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect()
}

pub fn balanced_targets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand::seq::SliceRandom;
    let mut t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    t.shuffle(rng);
    t
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR").map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
        PathBuf::from,
    )
}

pub fn relative_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// Noiseless 3-node toy: does a 200-epoch run reach the exhaustive optimum?
pub fn toy_reaches_optimum(seed: u64) -> bool {
    let mut rng = rng(1000 + seed);
    let n = 12;
    let states = random_states(&mut rng, n, 3);
    let targets = balanced_targets(&mut rng, n);
    let best = brute_force_min_nmse(&states, &targets);
    let cfg = TrainConfig {
        alpha: 10.0,
        max_epochs: 200,
        mode: WeightMode::Ternary,
        seed,
        normalize_outputs: false,
        ..TrainConfig::default()
    };
    let mut br = BatchReadout::new(&states, DetectorModel::new(0.0, 0).unwrap(), 1.0).unwrap();
    let result = train(|m| br.measure(m), &targets, 3, &cfg).unwrap();
    relative_diff(result.final_nmse, best) <= 1e-9
}
