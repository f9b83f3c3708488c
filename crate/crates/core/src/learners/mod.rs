//! From-scratch probabilistic learners: L1-penalized logistic regression
//! (labeler), gradient-boosted trees (scorer) and an isolation forest
//! (reject filter).

mod gbt;
mod iforest;
mod logistic;

pub use gbt::{fit_gbt, fit_gbt_with_holdout, GbtModel, GbtParams, Node as GbtNode, RegressionTree};
pub use iforest::{average_path_length, fit_isolation_forest, IsolationForestModel, IsolationParams};
pub use logistic::{fit_l1_logistic, L1LogisticModel, L1Problem, L1Solution, SolverOptions};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Numerically safe logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Keeps reported probabilities strictly inside (0, 1).
pub(crate) fn clamp_prob(p: f64) -> f64 {
    const EPS: f64 = 1e-12;
    p.clamp(EPS, 1.0 - EPS)
}

/// Mean logistic loss of raw scores against 0/1 targets.
pub fn logistic_loss(raw: &[f64], y: &[f64]) -> f64 {
    let s: f64 = raw
        .iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - t * z)
        .sum();
    s / raw.len().max(1) as f64
}

pub(crate) fn check_dim(expected: usize, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: x.ncols(),
        });
    }
    Ok(())
}

/// A fitted model that maps feature rows to predicted PDs.
pub trait ProbabilisticModel {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>>;
}
