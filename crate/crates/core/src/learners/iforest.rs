//! Isolation forest: random axis-parallel partitioning of subsamples, with
//! anomaly score `2^(-E[h(x)] / c(psi))` from the average isolation depth.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_dim;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng, Rng};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful BST search among `n` points,
/// `c(n) = 2 H(n-1) - 2 (n-1) / n`.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsolationParams {
    pub n_trees: usize,
    /// Upper bound on the per-tree subsample; the effective size is
    /// `min(subsample_size, n)`.
    pub subsample_size: usize,
}

impl Default for IsolationParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum INode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    External {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<INode>,
}

impl IsolationTree {
    fn path_length(&self, row: ArrayView1<f64>) -> f64 {
        let mut at = 0;
        let mut depth = 0.0;
        loop {
            match &self.nodes[at] {
                INode::External { size } => return depth + average_path_length(*size),
                INode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *threshold { *left } else { *right };
                    depth += 1.0;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[INode], at: usize) -> usize {
            match &nodes[at] {
                INode::External { .. } => 0,
                INode::Internal { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<IsolationTree>,
    pub subsample_size: usize,
    pub n_trees: usize,
    pub n_features: usize,
}

fn build(
    x: &ArrayView2<f64>,
    rows: Vec<usize>,
    depth: usize,
    limit: usize,
    r: &mut Rng,
    nodes: &mut Vec<INode>,
) -> usize {
    let at = nodes.len();
    nodes.push(INode::External { size: rows.len() });
    if rows.len() <= 1 || depth >= limit {
        return at;
    }
    // features that still vary inside this node
    let varying: Vec<(usize, f64, f64)> = (0..x.ncols())
        .filter_map(|j| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = x[[i, j]];
                (lo.min(v), hi.max(v))
            });
            (hi > lo).then_some((j, lo, hi))
        })
        .collect();
    if varying.is_empty() {
        return at;
    }
    let (feature, lo, hi) = varying[r.random_range(0..varying.len())];
    let mut threshold = r.random_range(lo..hi);
    if threshold <= lo {
        // keep both sides non-empty
        threshold = lo + (hi - lo) * 0.5;
    }
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&i| x[[i, feature]] < threshold);
    let left = build(x, left_rows, depth + 1, limit, r, nodes);
    let right = build(x, right_rows, depth + 1, limit, r, nodes);
    nodes[at] = INode::Internal {
        feature,
        threshold,
        left,
        right,
    };
    at
}

/// Grows `n_trees` isolation trees, each on its own subsample of
/// `subsample_size` rows drawn without replacement, with depth capped at
/// `ceil(log2(subsample_size))`.
pub fn fit_isolation_forest(
    x: ArrayView2<f64>,
    n_trees: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<IsolationForestModel> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Empty("isolation forest needs at least two rows"));
    }
    if n_trees < 1 {
        return Err(Error::param("n_trees must be >= 1"));
    }
    if subsample_size > n {
        return Err(Error::param(format!(
            "subsample_size {subsample_size} exceeds {n} rows"
        )));
    }
    if subsample_size < 2 {
        return Err(Error::param("subsample_size must be >= 2"));
    }
    let limit = (subsample_size as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(derive_seed(seed, &[t as u64]));
            let rows = sample(&mut r, n, subsample_size).into_vec();
            let mut nodes = Vec::new();
            build(&x, rows, 0, limit, &mut r, &mut nodes);
            IsolationTree { nodes }
        })
        .collect();
    Ok(IsolationForestModel {
        trees,
        subsample_size,
        n_trees,
        n_features: x.ncols(),
    })
}

impl IsolationForestModel {
    /// Mean isolation depth per row.
    pub fn mean_path_length(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dim(self.n_features, &x)?;
        let t = self.trees.len() as f64;
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|tr| tr.path_length(row)).sum::<f64>() / t
            })
            .collect())
    }

    /// Standard anomaly score `2^(-E[h]/c(psi))`; higher is more anomalous.
    pub fn anomaly_score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let c = average_path_length(self.subsample_size);
        Ok(self
            .mean_path_length(x)?
            .into_iter()
            .map(|h| 2f64.powf(-h / c))
            .collect())
    }

    /// `1 - anomaly_score`; higher means closer to the training distribution.
    pub fn similarity_score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .anomaly_score(x)?
            .into_iter()
            .map(|s| 1.0 - s)
            .collect())
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(|t| t.depth()).max().unwrap_or(0)
    }
}
