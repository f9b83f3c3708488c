//! Self-learning strategies.
//!
//! Regular self-learning retrains the boosted scorer every round and labels
//! the most confident tails of the remaining rejects. Shallow self-learning
//! filters the rejects once, labels with a separate L1-logistic model, fixes
//! its score thresholds on the first round and keeps labeling rejects that
//! cross them until none do.

use serde::{Deserialize, Serialize};

use super::{AugmentedTrainingSet, IterationTrace};
use crate::data::{stratified_split, CreditDataset, Label};
use crate::error::{Error, Result};
use crate::filtering::{filter_rejects, FilterConfig};
use crate::learners::{
    fit_gbt_with_holdout, fit_l1_logistic, GbtParams, ProbabilisticModel, SolverOptions,
};
use crate::metrics::auc;
use crate::rng::derive_seed;

/// Candidate penalties for labeler tuning.
pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.001, 0.01, 0.1, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShallowConfig {
    /// Share of rejects labeled good on the first round.
    pub alpha: f64,
    /// Imbalance multiplier: `alpha * theta` of rejects are labeled bad on
    /// the first round.
    pub theta: f64,
    /// Labeler penalty; tuned on the accepts when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub max_iterations: usize,
    #[serde(default)]
    pub filter: FilterConfig,
}

impl Default for ShallowConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            theta: 2.0,
            lambda: None,
            max_iterations: 5,
            filter: FilterConfig::symmetric(2.0),
        }
    }
}

impl ShallowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.theta >= 1.0 && self.theta.is_finite()) {
            return Err(Error::param(format!("theta must be >= 1, got {}", self.theta)));
        }
        if self.alpha * self.theta >= 1.0 {
            return Err(Error::param("alpha * theta must be < 1"));
        }
        if self.max_iterations < 1 {
            return Err(Error::param("max_iterations must be >= 1"));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::param("lambda must be >= 0"));
            }
        }
        self.filter.validate()
    }
}

fn count_for(fraction: f64, m: usize) -> usize {
    ((fraction * m as f64).round() as usize).max(1)
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) * 0.5
}

/// First-round thresholds `(c_good, c_bad)`: about `alpha` of `scores` lie
/// below `c_good` and about `alpha * theta` above `c_bad`. `None` when the
/// distribution is too small or too tied to separate the two tails.
pub fn derive_thresholds(scores: &[f64], alpha: f64, theta: f64) -> Option<(f64, f64)> {
    let m = scores.len();
    let kg = count_for(alpha, m);
    let kb = count_for(alpha * theta, m);
    if kg + kb > m {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let c_good = midpoint(sorted[kg - 1], sorted[kg]);
    let c_bad = midpoint(sorted[m - kb - 1], sorted[m - kb]);
    (c_good < c_bad).then_some((c_good, c_bad))
}

/// Picks the penalty with the best validation AUC on a stratified 75/25
/// split of the accepts. Ties keep the earlier grid value.
pub fn tune_lambda(accepts: &CreditDataset, grid: &[f64], seed: u64) -> Result<f64> {
    let labels = accepts.require_both_classes()?;
    let (tr, va) = stratified_split(accepts, 0.75, seed)?;
    let x = accepts.features();
    let tx = x.select(ndarray::Axis(0), &tr);
    let ty: Vec<Label> = tr.iter().map(|&i| labels[i]).collect();
    let vx = x.select(ndarray::Axis(0), &va);
    let vy: Vec<Label> = va.iter().map(|&i| labels[i]).collect();
    let mut best: Option<(f64, f64)> = None;
    for &lambda in grid {
        let model = fit_l1_logistic(tx.view(), &ty, lambda, &SolverOptions::default())?;
        let score = match auc(&vy, &model.predict_proba(vx.view())?) {
            Ok(a) => a,
            Err(Error::SingleClass(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((lambda, score));
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| Error::param("no penalty candidate could be evaluated"))
}

pub fn shallow_self_learning(
    accepts: &CreditDataset,
    rejects: &CreditDataset,
    cfg: &ShallowConfig,
    seed: u64,
) -> Result<AugmentedTrainingSet> {
    cfg.validate()?;
    accepts.require_both_classes()?;
    if rejects.is_empty() {
        return Err(Error::Empty("rejects"));
    }
    let filtered = filter_rejects(accepts, rejects, &cfg.filter, derive_seed(seed, &[0x1F]))?;
    let pool_rejects = filtered.retained;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => tune_lambda(accepts, &DEFAULT_LAMBDA_GRID, derive_seed(seed, &[0x7A]))?,
    };

    let mut picks: Vec<(usize, Label)> = Vec::new();
    let mut remaining: Vec<usize> = (0..pool_rejects.len()).collect();
    let mut thresholds: Option<(f64, f64)> = None;
    let mut pool = accepts.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;

    while !remaining.is_empty() && iterations < cfg.max_iterations {
        let labels = pool.require_labels()?;
        let labeler = fit_l1_logistic(
            pool.features().view(),
            labels,
            lambda,
            &SolverOptions::default(),
        )?;
        let unlabeled = pool_rejects.select(&remaining);
        let scores = labeler.predict_proba(unlabeled.features().view())?;
        let (c_good, c_bad) = match thresholds {
            Some(t) => t,
            None => match derive_thresholds(&scores, cfg.alpha, cfg.theta) {
                Some(t) => {
                    thresholds = Some(t);
                    t
                }
                None => {
                    let mut out = AugmentedTrainingSet::accepts_only(accepts);
                    out.note = Some(
                        "degenerate first-round score distribution: c_good >= c_bad".into(),
                    );
                    return Ok(out);
                }
            },
        };
        let mut n_good = 0;
        let mut n_bad = 0;
        let mut keep = Vec::with_capacity(remaining.len());
        for (pos, &r) in remaining.iter().enumerate() {
            let s = scores[pos];
            if s < c_good {
                picks.push((r, Label::Good));
                n_good += 1;
            } else if s > c_bad {
                picks.push((r, Label::Bad));
                n_bad += 1;
            } else {
                keep.push(r);
            }
        }
        if n_good + n_bad == 0 {
            break;
        }
        iterations += 1;
        remaining = keep;
        pool = AugmentedTrainingSet::from_picks(accepts, &pool_rejects, &picks)?.dataset;
        trace.push(IterationTrace {
            iteration: iterations,
            pool_size: pool.len(),
            remaining: remaining.len(),
            c_good: Some(c_good),
            c_bad: Some(c_bad),
            n_good,
            n_bad,
        });
    }

    let mut out = AugmentedTrainingSet::from_picks(accepts, &pool_rejects, &picks)?;
    out.iterations_used = iterations;
    out.trace = trace;
    Ok(out)
}

pub fn regular_self_learning(
    accepts: &CreditDataset,
    rejects: &CreditDataset,
    percentage: f64,
    max_iterations: usize,
    scorer: &GbtParams,
    seed: u64,
) -> Result<AugmentedTrainingSet> {
    if !(percentage > 0.0 && percentage < 0.5) {
        return Err(Error::param("percentage must lie in (0, 0.5)"));
    }
    if max_iterations < 1 {
        return Err(Error::param("max_iterations must be >= 1"));
    }
    let mut picks: Vec<(usize, Label)> = Vec::new();
    let mut remaining: Vec<usize> = (0..rejects.len()).collect();
    let mut pool = accepts.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;

    while !remaining.is_empty() && iterations < max_iterations {
        let model = fit_gbt_with_holdout(&pool, scorer, derive_seed(seed, &[iterations as u64]))?;
        let unlabeled = rejects.select(&remaining);
        let scores = model.predict_proba(unlabeled.features().view())?;
        let m = remaining.len();
        let k = count_for(percentage, m).min(m / 2);
        if k == 0 {
            break;
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut chosen = vec![false; m];
        for &pos in &order[..k] {
            picks.push((remaining[pos], Label::Good));
            chosen[pos] = true;
        }
        for &pos in &order[m - k..] {
            picks.push((remaining[pos], Label::Bad));
            chosen[pos] = true;
        }
        let c_good = scores[order[k - 1]];
        let c_bad = scores[order[m - k]];
        remaining = remaining
            .iter()
            .enumerate()
            .filter(|(pos, _)| !chosen[*pos])
            .map(|(_, &r)| r)
            .collect();
        iterations += 1;
        pool = AugmentedTrainingSet::from_picks(accepts, rejects, &picks)?.dataset;
        trace.push(IterationTrace {
            iteration: iterations,
            pool_size: pool.len(),
            remaining: remaining.len(),
            c_good: Some(c_good),
            c_bad: Some(c_bad),
            n_good: k,
            n_bad: k,
        });
    }
    let mut out = AugmentedTrainingSet::from_picks(accepts, rejects, &picks)?;
    out.iterations_used = iterations;
    out.trace = trace;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_thresholds() {
        let m = 1000;
        let scores: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let (cg, cb) = derive_thresholds(&scores, 0.02, 2.0).unwrap();
        assert!((cg - 0.02).abs() < 1e-3, "{cg}");
        assert!((cb - 0.96).abs() < 1e-3, "{cb}");
        let good = scores.iter().filter(|&&s| s < cg).count();
        let bad = scores.iter().filter(|&&s| s > cb).count();
        assert_eq!((good, bad), (20, 40));
    }

    #[test]
    fn theta_one_is_symmetric() {
        let scores: Vec<f64> = (0..300).map(|i| ((i * 7919) % 300) as f64 / 300.0).collect();
        let (cg, cb) = derive_thresholds(&scores, 0.03, 1.0).unwrap();
        let good = scores.iter().filter(|&&s| s < cg).count();
        let bad = scores.iter().filter(|&&s| s > cb).count();
        assert_eq!(good, bad);
    }

    #[test]
    fn constant_scores_are_degenerate() {
        assert_eq!(derive_thresholds(&[0.4; 50], 0.02, 2.0), None);
    }

    #[test]
    fn config_validation() {
        let ok = ShallowConfig::default();
        assert!(ok.validate().is_ok());
        assert!(ShallowConfig { alpha: 0.6, theta: 2.0, ..ok.clone() }.validate().is_err());
        assert!(ShallowConfig { theta: 0.5, ..ok.clone() }.validate().is_err());
        assert!(ShallowConfig { max_iterations: 0, ..ok }.validate().is_err());
    }
}
