//! Digital linear readout trained by ridge regression on reservoir states.
//!
//! Objective: `(1/N) * sum_i (w . x_i + b - t_i)^2 + lambda * |w|^2`; the
//! bias is not regularised. Because the data term is a mean, duplicating every
//! sample leaves the solution unchanged.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::optimizer::{class_mean_midpoint, positive_labels, score, Metrics, ThresholdRule};
use crate::substrate::ReservoirState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, states: &[ReservoirState]) -> Vec<f64> {
        states
            .iter()
            .map(|s| self.predict_one(s.intensities()))
            .collect()
    }

    /// Threshold on the model's own training predictions.
    pub fn training_threshold(&self, states: &[ReservoirState], targets: &[f64]) -> f64 {
        class_mean_midpoint(&self.predict(states), &positive_labels(targets))
    }
}

/// Centred design: `(X - mean)` rows as a matrix, plus the column means.
struct Centered {
    x: DMatrix<f64>,
    x_mean: DVector<f64>,
    t: DVector<f64>,
    t_mean: f64,
}

fn center(states: &[&ReservoirState], targets: &[f64]) -> Result<Centered> {
    let n = states.len();
    check_len("ridge targets", n, targets.len())?;
    if n < 2 {
        return Err(Error::Usage(format!(
            "ridge needs at least 2 samples, got {n}"
        )));
    }
    let k = states[0].len();
    for s in states {
        check_len("ridge states", k, s.len())?;
    }
    let mut x = DMatrix::from_fn(n, k, |i, j| states[i].intensities()[j]);
    let x_mean = DVector::from_fn(k, |j, _| x.column(j).mean());
    for j in 0..k {
        let m = x_mean[j];
        x.column_mut(j).add_scalar_mut(-m);
    }
    let t_mean = targets.iter().sum::<f64>() / n as f64;
    let t = DVector::from_fn(n, |i, _| targets[i] - t_mean);
    Ok(Centered {
        x,
        x_mean,
        t,
        t_mean,
    })
}

fn finish(c: &Centered, w: DVector<f64>, lambda: f64) -> RidgeModel {
    let bias = c.t_mean - w.dot(&c.x_mean);
    RidgeModel {
        weights: w.iter().copied().collect(),
        bias,
        lambda,
    }
}

fn fit_refs(states: &[&ReservoirState], targets: &[f64], lambda: f64) -> Result<RidgeModel> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let c = center(states, targets)?;
    let n = c.x.nrows() as f64;
    let k = c.x.ncols();
    let gram = c.x.transpose() * &c.x / n + DMatrix::identity(k, k) * lambda;
    let rhs = c.x.transpose() * &c.t / n;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "ridge normal equations are singular at lambda = {lambda}; use lambda > 0"
        ))
    })?;
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "ridge solution is not finite; use lambda > 0".into(),
        ));
    }
    Ok(finish(&c, w, lambda))
}

/// Closed-form ridge fit on mean-centred states.
pub fn ridge_fit(states: &[ReservoirState], targets: &[f64], lambda: f64) -> Result<RidgeModel> {
    let refs: Vec<&ReservoirState> = states.iter().collect();
    fit_refs(&refs, targets, lambda)
}

/// Scores the model on a batch with the given threshold rule.
pub fn ridge_eval(
    model: &RidgeModel,
    states: &[ReservoirState],
    targets: &[f64],
    rule: ThresholdRule,
) -> Result<Metrics> {
    score(&model.predict(states), targets, rule)
}

/// Ridge solutions for many lambdas from one eigendecomposition.
struct RidgePath {
    centered: Centered,
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    projected_rhs: DVector<f64>,
}

impl RidgePath {
    fn new(states: &[&ReservoirState], targets: &[f64]) -> Result<Self> {
        let centered = center(states, targets)?;
        let n = centered.x.nrows() as f64;
        let gram = centered.x.transpose() * &centered.x / n;
        let rhs = centered.x.transpose() * &centered.t / n;
        let eig = SymmetricEigen::new(gram);
        let projected_rhs = eig.eigenvectors.transpose() * rhs;
        Ok(Self {
            centered,
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.map(|v| v.max(0.0)),
            projected_rhs,
        })
    }

    fn model(&self, lambda: f64) -> RidgeModel {
        let scaled = DVector::from_fn(self.values.len(), |i, _| {
            self.projected_rhs[i] / (self.values[i] + lambda)
        });
        let w = &self.vectors * scaled;
        finish(&self.centered, w, lambda)
    }
}

/// Default logarithmic lambda grid, 1e-6 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (-6..=2).map(|e| 10f64.powi(e)).collect()
}

/// K-fold cross-validated accuracy for each lambda; returns the best lambda,
/// ties going to the smaller value. Folds are a seeded shuffle.
pub fn lambda_sweep(
    states: &[ReservoirState],
    targets: &[f64],
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Usage("lambda grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::Usage(format!("need at least 2 folds, got {folds}")));
    }
    check_len("lambda_sweep targets", states.len(), targets.len())?;
    if states.len() < 2 * folds {
        return Err(Error::Usage(format!(
            "{} samples are too few for {folds}-fold cross-validation",
            states.len()
        )));
    }
    if let Some(bad) = grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::Config(format!(
            "lambda grid values must be > 0, got {bad}"
        )));
    }
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid.len() == 1 {
        return Ok(grid[0]);
    }

    let mut order: Vec<usize> = (0..states.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = |pos: usize| pos * folds / order.len();

    let fold_scores = |f: usize| -> Result<Vec<f64>> {
        let (mut tr_s, mut tr_t, mut te_s, mut te_t) = (vec![], vec![], vec![], vec![]);
        for (pos, &i) in order.iter().enumerate() {
            if fold_of(pos) == f {
                te_s.push(states[i].clone());
                te_t.push(targets[i]);
            } else {
                tr_s.push(&states[i]);
                tr_t.push(targets[i]);
            }
        }
        let path = RidgePath::new(&tr_s, &tr_t)?;
        let labels = positive_labels(&tr_t);
        grid.iter()
            .map(|&lambda| {
                let model = path.model(lambda);
                let train_pred: Vec<f64> = tr_s
                    .iter()
                    .map(|s| model.predict_one(s.intensities()))
                    .collect();
                let threshold = class_mean_midpoint(&train_pred, &labels);
                Ok(ridge_eval(&model, &te_s, &te_t, ThresholdRule::Fixed(threshold))?.accuracy)
            })
            .collect()
    };

    #[cfg(feature = "parallel")]
    let per_fold: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..folds)
            .into_par_iter()
            .map(fold_scores)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_fold: Vec<Vec<f64>> = (0..folds).map(fold_scores).collect::<Result<_>>()?;

    let mut best = (f64::NEG_INFINITY, grid[0]);
    for (g, &lambda) in grid.iter().enumerate() {
        let acc: f64 = per_fold.iter().map(|s| s[g]).sum::<f64>() / folds as f64;
        if acc > best.0 {
            best = (acc, lambda);
        }
    }
    Ok(best.1)
}
