//! L1-penalized logistic regression.
//!
//! Minimizes `mean(softplus(b + x·w) - y (b + x·w)) + lambda ||w||_1` with an
//! unpenalized intercept. Each outer sweep forms the quadratic (IRLS) model of
//! the loss at the current point, minimizes model + penalty by cyclic
//! coordinate descent with soft-thresholding, then backtracks along the
//! resulting direction until the true penalized objective decreases.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_dim, clamp_prob, sigmoid, softplus, ProbabilisticModel};
use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Converged when the largest coefficient change of a sweep is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

/// A penalized logistic problem on an already prepared design matrix.
#[derive(Debug, Clone, Copy)]
pub struct L1Problem<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [f64],
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub weights: Array1<f64>,
    pub intercept: f64,
    /// Penalized objective at the start and after every sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl L1Problem<'_> {
    fn linear(&self, w: &Array1<f64>, b: f64) -> Array1<f64> {
        self.x.dot(w) + b
    }

    pub fn loss(&self, w: &Array1<f64>, b: f64) -> f64 {
        let eta = self.linear(w, b);
        let s: f64 = eta
            .iter()
            .zip(self.y)
            .map(|(&z, &t)| softplus(z) - t * z)
            .sum();
        s / self.y.len() as f64
    }

    pub fn objective(&self, w: &Array1<f64>, b: f64) -> f64 {
        self.loss(w, b) + self.lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Gradient of the unpenalized mean loss: `(d/dw, d/db)`.
    pub fn loss_gradient(&self, w: &Array1<f64>, b: f64) -> (Array1<f64>, f64) {
        let n = self.y.len() as f64;
        let resid: Array1<f64> = self
            .linear(w, b)
            .iter()
            .zip(self.y)
            .map(|(&z, &t)| sigmoid(z) - t)
            .collect();
        let gw = self.x.t().dot(&resid) / n;
        (gw, resid.sum() / n)
    }

    /// Gradient of the penalized objective where it is differentiable
    /// (coordinates with `w_j != 0`); zero coordinates get the loss gradient.
    pub fn objective_gradient(&self, w: &Array1<f64>, b: f64) -> (Array1<f64>, f64) {
        let (mut gw, gb) = self.loss_gradient(w, b);
        for (g, &wj) in gw.iter_mut().zip(w) {
            if wj != 0.0 {
                *g += self.lambda * wj.signum();
            }
        }
        (gw, gb)
    }

    pub fn solve(&self, opts: &SolverOptions) -> L1Solution {
        let (n, d) = self.x.dim();
        let nf = n as f64;
        let mean_y = self.y.iter().sum::<f64>() / nf;
        let mut w = Array1::<f64>::zeros(d);
        let mut b = logit(mean_y.clamp(1e-6, 1.0 - 1e-6));
        let mut obj = self.objective(&w, b);
        let mut trace = vec![obj];
        let mut converged = false;

        let cols: Vec<Array1<f64>> = self.x.axis_iter(Axis(1)).map(|c| c.to_owned()).collect();
        let mut weights = vec![0.0; n];
        let mut resid = vec![0.0; n];

        for _ in 0..opts.max_iter {
            // quadratic model around (w, b)
            let eta = self.linear(&w, b);
            for i in 0..n {
                let p = sigmoid(eta[i]);
                let h = (p * (1.0 - p)).max(1e-6);
                weights[i] = h;
                // working residual z - eta
                resid[i] = (self.y[i] - p) / h;
            }
            let mut w_new = w.clone();
            let mut b_new = b;
            let sum_w: f64 = weights.iter().sum();
            for _inner in 0..100 {
                let mut max_step: f64 = 0.0;
                for j in 0..d {
                    let col = &cols[j];
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for i in 0..n {
                        let wx = weights[i] * col[i];
                        num += wx * resid[i];
                        den += wx * col[i];
                    }
                    if den <= 0.0 {
                        continue;
                    }
                    let old = w_new[j];
                    let num = num / nf + den / nf * old;
                    let updated = soft_threshold(num, self.lambda) / (den / nf);
                    let delta = updated - old;
                    if delta != 0.0 {
                        for i in 0..n {
                            resid[i] -= delta * col[i];
                        }
                        w_new[j] = updated;
                        max_step = max_step.max(delta.abs());
                    }
                }
                let db = weights.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / sum_w;
                if db != 0.0 {
                    for r in resid.iter_mut() {
                        *r -= db;
                    }
                    b_new += db;
                    max_step = max_step.max(db.abs());
                }
                if max_step < opts.tol * 0.1 {
                    break;
                }
            }

            let dir_w = &w_new - &w;
            let dir_b = b_new - b;
            let step_size = dir_w
                .iter()
                .fold(dir_b.abs(), |m, v| m.max(v.abs()));
            if step_size < opts.tol {
                converged = true;
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand_w = &w + &(&dir_w * t);
                let cand_b = b + t * dir_b;
                let cand = self.objective(&cand_w, cand_b);
                if cand <= obj {
                    accepted = Some((cand_w, cand_b, cand));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((cw, cb, cobj)) => {
                    let moved = step_size * t;
                    w = cw;
                    b = cb;
                    obj = cobj;
                    trace.push(obj);
                    if moved < opts.tol {
                        converged = true;
                        break;
                    }
                }
                None => {
                    // no decrease representable in floating point
                    converged = true;
                    break;
                }
            }
        }
        L1Solution {
            weights: w,
            intercept: b,
            objective_trace: trace,
            converged,
        }
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fitted L1-logistic labeler. Weights live in standardized feature space;
/// the standardization statistics come from the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl L1LogisticModel {
    /// A model on raw features with no standardization.
    pub fn from_raw(weights: Vec<f64>, intercept: f64) -> Self {
        let d = weights.len();
        Self {
            weights,
            intercept,
            lambda: 0.0,
            means: vec![0.0; d],
            scales: vec![1.0; d],
            sweeps: 0,
            converged: true,
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// Coefficients expressed on the original feature scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.scales)
            .map(|(w, s)| w / s)
            .collect();
        let b = self.intercept - w.iter().zip(&self.means).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }

    pub fn decision_function(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dim(self.n_features(), &x)?;
        Ok(x.rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .zip(&self.weights)
                        .zip(self.means.iter().zip(&self.scales))
                        .map(|((v, w), (m, s))| w * (v - m) / s)
                        .sum::<f64>()
            })
            .collect())
    }
}

impl ProbabilisticModel for L1LogisticModel {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .decision_function(x)?
            .into_iter()
            .map(|z| clamp_prob(sigmoid(z)))
            .collect())
    }
}

/// Standardizes `x` with its own column statistics and fits the penalized
/// logistic model.
pub fn fit_l1_logistic(
    x: ArrayView2<f64>,
    y: &[Label],
    lambda: f64,
    opts: &SolverOptions,
) -> Result<L1LogisticModel> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::InvalidDataset(format!("{} labels for {n} rows", y.len())));
    }
    if n < 2 {
        return Err(Error::Empty("logistic regression needs at least two rows"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let bads = y.iter().filter(|l| l.is_bad()).count();
    if bads == 0 {
        return Err(Error::SingleClass("good"));
    }
    if bads == n {
        return Err(Error::SingleClass("bad"));
    }
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let means = x.mean_axis(Axis(0)).expect("n >= 2");
    let mut scales = vec![1.0; d];
    for j in 0..d {
        let m = means[j];
        let var = x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        if var > 1e-24 {
            scales[j] = var.sqrt();
        }
    }
    let mut z = Array2::<f64>::zeros((n, d));
    for ((i, j), v) in z.indexed_iter_mut() {
        *v = (x[[i, j]] - means[j]) / scales[j];
    }
    let targets: Vec<f64> = y.iter().map(|l| l.target()).collect();
    let problem = L1Problem {
        x: z.view(),
        y: &targets,
        lambda,
    };
    let sol = problem.solve(opts);
    Ok(L1LogisticModel {
        weights: sol.weights.to_vec(),
        intercept: sol.intercept,
        lambda,
        means: means.to_vec(),
        scales,
        sweeps: sol.objective_trace.len() - 1,
        converged: sol.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn huge_penalty_gives_base_rate() {
        let x = array![[0.0, 1.0], [1.0, 3.0], [2.0, -1.0], [3.0, 0.5], [4.0, 2.0]];
        let y = [Label::Bad, Label::Good, Label::Good, Label::Bad, Label::Good];
        let m = fit_l1_logistic(x.view(), &y, 1e6, &SolverOptions::default()).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        let p: f64 = 0.4;
        assert!((m.intercept - (p / (1.0 - p)).ln()).abs() < 1e-7);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = L1LogisticModel::from_raw(vec![0.0, 0.0], 0.0);
        let p = m.predict_proba(array![[1.0, 2.0], [-5.0, 7.0]].view()).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn monotone_in_feature() {
        let m = L1LogisticModel::from_raw(vec![0.7], -0.2);
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 * 0.3 - 3.0);
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p.windows(2).all(|w| w[1] > w[0]));
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = L1LogisticModel::from_raw(vec![0.7], -0.2);
        assert!(matches!(
            m.predict_proba(array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn single_class_and_non_finite_rejected() {
        let x = array![[0.0], [1.0]];
        let opts = SolverOptions::default();
        assert!(matches!(
            fit_l1_logistic(x.view(), &[Label::Bad, Label::Bad], 0.1, &opts),
            Err(Error::SingleClass(_))
        ));
        let x = array![[0.0], [f64::INFINITY]];
        assert!(matches!(
            fit_l1_logistic(x.view(), &[Label::Bad, Label::Good], 0.1, &opts),
            Err(Error::NonFinite { .. })
        ));
    }

    /// Scalar oracle: with two symmetric standardized points the intercept is
    /// zero at the optimum, so the objective is a function of `w` alone.
    #[test]
    fn separable_pair_matches_grid_oracle() {
        let x = array![[-2.0], [5.0]];
        let y = [Label::Good, Label::Bad];
        let lambda = 0.01;
        let m = fit_l1_logistic(x.view(), &y, lambda, &SolverOptions { tol: 1e-10, max_iter: 500 })
            .unwrap();
        // standardized points are -1 and +1
        let f = |w: f64| 0.5 * (softplus(-w) + softplus(-w)) + lambda * w.abs();
        let (mut best_w, mut best_f) = (0.0, f(0.0));
        let mut w = -10.0;
        while w <= 10.0 {
            if f(w) < best_f {
                best_f = f(w);
                best_w = w;
            }
            w += 1e-4;
        }
        assert!(m.weights[0] > 0.0);
        assert!((m.weights[0] - best_w).abs() < 1e-3, "{} vs {best_w}", m.weights[0]);
        assert!(m.intercept.abs() < 1e-6);
    }
}
