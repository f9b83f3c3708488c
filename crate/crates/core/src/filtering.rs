//! Isolation-forest filtering of rejects ahead of labeling.
//!
//! A forest trained on the accepts scores every reject's similarity to them;
//! rejects in the bottom `beta_bottom` and top `beta_top` percentiles of that
//! similarity are dropped.

use serde::{Deserialize, Serialize};

use crate::data::CreditDataset;
use crate::error::{Error, Result};
use crate::learners::{fit_isolation_forest, IsolationParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Percentage in `[0, 100)` of least-similar rejects to drop.
    pub beta_bottom: f64,
    /// Percentage in `[0, 100)` of most-similar rejects to drop.
    pub beta_top: f64,
    pub forest: IsolationParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            beta_bottom: 0.0,
            beta_top: 0.0,
            forest: IsolationParams::default(),
        }
    }
}

impl FilterConfig {
    /// Splits a total filtered percentage evenly between both tails.
    pub fn symmetric(total_percentage: f64) -> Self {
        Self {
            beta_bottom: total_percentage / 2.0,
            beta_top: total_percentage / 2.0,
            ..Self::default()
        }
    }

    pub fn total_percentage(&self) -> f64 {
        self.beta_bottom + self.beta_top
    }

    pub fn is_noop(&self) -> bool {
        self.beta_bottom == 0.0 && self.beta_top == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| (0.0..100.0).contains(&b);
        if !ok(self.beta_bottom) || !ok(self.beta_top) {
            return Err(Error::param("filter percentages must lie in [0, 100)"));
        }
        if self.beta_bottom + self.beta_top >= 100.0 {
            return Err(Error::param("beta_bottom + beta_top must be < 100"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub retained: CreditDataset,
    pub removed_ids: Vec<String>,
    /// Similarity of every input reject, in input order; empty when the
    /// filter was a no-op.
    pub similarity: Vec<f64>,
}

/// Number of cases in a `pct` percent tail of `m` by nearest rank.
fn tail_count(pct: f64, m: usize) -> usize {
    ((pct / 100.0 * m as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Removal mask for the two tails. The nearest-rank boundary value of each
/// tail is itself removed together with every score tied to it.
pub fn tail_mask(scores: &[f64], beta_bottom: f64, beta_top: f64) -> Vec<bool> {
    let m = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kb = tail_count(beta_bottom, m).min(m);
    let kt = tail_count(beta_top, m).min(m);
    let low = (kb > 0).then(|| sorted[kb - 1]);
    let high = (kt > 0).then(|| sorted[m - kt]);
    scores
        .iter()
        .map(|&s| low.is_some_and(|l| s <= l) || high.is_some_and(|h| s >= h))
        .collect()
}

pub fn filter_rejects(
    accepts: &CreditDataset,
    rejects: &CreditDataset,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<FilterOutcome> {
    cfg.validate()?;
    if accepts.is_empty() {
        return Err(Error::Empty("accepts"));
    }
    if rejects.is_empty() {
        return Err(Error::Empty("rejects"));
    }
    if cfg.is_noop() {
        return Ok(FilterOutcome {
            retained: rejects.clone(),
            removed_ids: Vec::new(),
            similarity: Vec::new(),
        });
    }
    let psi = cfg.forest.subsample_size.min(accepts.len());
    let forest = fit_isolation_forest(accepts.features().view(), cfg.forest.n_trees, psi, seed)?;
    let similarity = forest.similarity_score(rejects.features().view())?;
    let removed = tail_mask(&similarity, cfg.beta_bottom, cfg.beta_top);
    let keep: Vec<usize> = (0..rejects.len()).filter(|&i| !removed[i]).collect();
    if keep.is_empty() {
        return Err(Error::FilterRemovesAll);
    }
    let removed_ids = (0..rejects.len())
        .filter(|&i| removed[i])
        .map(|i| rejects.ids()[i].clone())
        .collect();
    Ok(FilterOutcome {
        retained: rejects.select(&keep),
        removed_ids,
        similarity,
    })
}
