//! Gradient-boosted regression trees on the logistic loss.
//!
//! Splits come from an exact greedy scan over each feature's sorted distinct
//! values (thresholds at midpoints), evaluated level by level for all open
//! nodes at once. Leaf values are second-order (Newton) steps scaled by the
//! learning rate. Ties between candidate splits go to the lowest feature
//! index, then the lowest threshold.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{check_dim, clamp_prob, logistic_loss, sigmoid, ProbabilisticModel};
use crate::data::{stratified_split, CreditDataset, Label};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub max_trees: usize,
    pub early_stopping_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
    /// Row fraction sampled (without replacement) per round.
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    /// Minimum loss reduction for a split.
    pub min_split_gain: f64,
    /// Share of training rows held out for early stopping by
    /// [`fit_gbt_with_holdout`].
    pub validation_fraction: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            max_trees: 500,
            early_stopping_rounds: 25,
            learning_rate: 0.1,
            max_depth: 3,
            min_child_weight: 1.0,
            subsample: 0.8,
            reg_lambda: 1.0,
            min_split_gain: 0.0,
            validation_fraction: 0.2,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_trees < 1 {
            return Err(Error::param("max_trees must be >= 1"));
        }
        if self.early_stopping_rounds < 1 {
            return Err(Error::param("early_stopping_rounds must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::param("learning_rate must lie in (0, 1]"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::param("subsample must lie in (0, 1]"));
        }
        if self.min_child_weight < 0.0 || self.reg_lambda < 0.0 || self.min_split_gain < 0.0 {
            return Err(Error::param(
                "min_child_weight, reg_lambda and min_split_gain must be >= 0",
            ));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::param("validation_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x < threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Raw (log-odds) score every prediction starts from.
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    /// Number of leading trees used by [`ProbabilisticModel::predict_proba`].
    pub best_iteration: usize,
    pub n_features: usize,
    /// Per-round mean training loss, starting with the base score alone.
    pub train_loss: Vec<f64>,
    /// Per-round validation loss when early stopping was used.
    pub valid_loss: Vec<f64>,
}

impl GbtModel {
    pub fn from_trees(base_score: f64, trees: Vec<RegressionTree>, n_features: usize) -> Self {
        Self {
            base_score,
            best_iteration: trees.len(),
            trees,
            learning_rate: 1.0,
            n_features,
            train_loss: Vec::new(),
            valid_loss: Vec::new(),
        }
    }

    pub fn raw_staged(&self, x: ArrayView2<f64>, n_trees: usize) -> Result<Vec<f64>> {
        check_dim(self.n_features, &x)?;
        let n_trees = n_trees.min(self.trees.len());
        Ok(x.axis_iter(Axis(0))
            .map(|row| {
                self.base_score
                    + self.trees[..n_trees]
                        .iter()
                        .map(|t| t.predict_row(row))
                        .sum::<f64>()
            })
            .collect())
    }

    /// Probabilities from the first `n_trees` trees.
    pub fn predict_proba_staged(&self, x: ArrayView2<f64>, n_trees: usize) -> Result<Vec<f64>> {
        Ok(self
            .raw_staged(x, n_trees)?
            .into_iter()
            .map(|z| clamp_prob(sigmoid(z)))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            format: &'static str,
            version: u32,
            model: &'a GbtModel,
        }
        Ok(serde_json::to_string_pretty(&Dump {
            format: "gbt",
            version: 1,
            model: self,
        })?)
    }
}

impl ProbabilisticModel for GbtModel {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.predict_proba_staged(x, self.best_iteration)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct OpenNode {
    arena: usize,
    g: f64,
    h: f64,
}

/// Greedy tree growth for one boosting round. `node_of[i]` is the open-node
/// slot of row `i` for rows in the round's sample, `usize::MAX` otherwise.
fn grow_tree(
    x: ArrayView2<f64>,
    order: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    in_sample: &[bool],
    params: &GbtParams,
) -> RegressionTree {
    let n = x.nrows();
    let d = x.ncols();
    let lambda = params.reg_lambda;
    let leaf_value = |g: f64, h: f64| -g / (h + lambda) * params.learning_rate;
    let score = |g: f64, h: f64| g * g / (h + lambda);

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut node_of = vec![usize::MAX; n];
    let (mut g0, mut h0) = (0.0, 0.0);
    for i in 0..n {
        if in_sample[i] {
            node_of[i] = 0;
            g0 += grad[i];
            h0 += hess[i];
        }
    }
    let mut open = vec![OpenNode { arena: 0, g: g0, h: h0 }];

    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let k = open.len();
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        let mut gl = vec![0.0; k];
        let mut hl = vec![0.0; k];
        let mut last: Vec<f64> = vec![f64::NAN; k];
        for (feature, ord) in order.iter().enumerate().take(d) {
            gl.iter_mut().for_each(|v| *v = 0.0);
            hl.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &ri in ord {
                let i = ri as usize;
                let slot = node_of[i];
                if slot == usize::MAX {
                    continue;
                }
                let v = x[[i, feature]];
                let prev = last[slot];
                if !prev.is_nan() && v > prev {
                    let node = &open[slot];
                    let (gls, hls) = (gl[slot], hl[slot]);
                    let (grs, hrs) = (node.g - gls, node.h - hls);
                    if hls >= params.min_child_weight && hrs >= params.min_child_weight {
                        let gain = 0.5 * (score(gls, hls) + score(grs, hrs) - score(node.g, node.h))
                            - params.min_split_gain;
                        if gain > 0.0 && best[slot].is_none_or(|b| gain > b.gain) {
                            let mut threshold = prev + (v - prev) * 0.5;
                            if threshold <= prev {
                                threshold = v;
                            }
                            best[slot] = Some(Candidate {
                                gain,
                                feature,
                                threshold,
                            });
                        }
                    }
                }
                gl[slot] += grad[i];
                hl[slot] += hess[i];
                last[slot] = v;
            }
        }

        // materialize splits; children become the next level's open nodes
        let mut next = Vec::new();
        let mut child_slots: Vec<Option<(usize, usize)>> = vec![None; k];
        for (slot, cand) in best.iter().enumerate() {
            if let Some(c) = cand {
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[open[slot].arena] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right: left + 1,
                };
                let ls = next.len();
                next.push(OpenNode { arena: left, g: 0.0, h: 0.0 });
                next.push(OpenNode { arena: left + 1, g: 0.0, h: 0.0 });
                child_slots[slot] = Some((ls, ls + 1));
            } else {
                let node = &open[slot];
                nodes[node.arena] = Node::Leaf {
                    value: leaf_value(node.g, node.h),
                };
            }
        }
        for i in 0..n {
            let slot = node_of[i];
            if slot == usize::MAX {
                continue;
            }
            match (child_slots[slot], &best[slot]) {
                (Some((l, r)), Some(c)) => {
                    let s = if x[[i, c.feature]] < c.threshold { l } else { r };
                    node_of[i] = s;
                    next[s].g += grad[i];
                    next[s].h += hess[i];
                }
                _ => node_of[i] = usize::MAX,
            }
        }
        open = next;
    }
    for node in &open {
        nodes[node.arena] = Node::Leaf {
            value: leaf_value(node.g, node.h),
        };
    }
    RegressionTree { nodes }
}

/// Row indices of each feature sorted by value (stable in row index).
fn presort(x: ArrayView2<f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<u32> = (0..x.nrows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect()
}

fn check_labels(y: &[Label], n: usize) -> Result<Vec<f64>> {
    if y.len() != n {
        return Err(Error::InvalidDataset(format!("{} labels for {n} rows", y.len())));
    }
    let bads = y.iter().filter(|l| l.is_bad()).count();
    if bads == 0 {
        return Err(Error::SingleClass("good"));
    }
    if bads == n {
        return Err(Error::SingleClass("bad"));
    }
    Ok(y.iter().map(|l| l.target()).collect())
}

/// Fits boosted trees. With `validation`, boosting stops once the validation
/// loss has not improved for `early_stopping_rounds` rounds and the model
/// predicts with the best prefix of trees.
pub fn fit_gbt(
    x: ArrayView2<f64>,
    y: &[Label],
    params: &GbtParams,
    validation: Option<(ArrayView2<f64>, &[Label])>,
    seed: u64,
) -> Result<GbtModel> {
    params.validate()?;
    let (n, d) = x.dim();
    let targets = check_labels(y, n)?;
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let valid = match validation {
        Some((vx, vy)) => {
            if vx.nrows() == 0 {
                return Err(Error::Empty("validation set for early stopping"));
            }
            check_dim(d, &vx)?;
            if vy.len() != vx.nrows() {
                return Err(Error::InvalidDataset("validation labels misaligned".into()));
            }
            Some((vx, vy.iter().map(|l| l.target()).collect::<Vec<f64>>()))
        }
        None => None,
    };

    let rate = targets.iter().sum::<f64>() / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let order = presort(x);
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut in_sample = vec![true; n];
    let sample_size = ((params.subsample * n as f64).round() as usize).clamp(1, n);

    let mut trees = Vec::new();
    let mut train_loss = vec![logistic_loss(&raw, &targets)];
    let mut valid_raw = valid.as_ref().map(|(vx, _)| vec![base_score; vx.nrows()]);
    let mut valid_loss = Vec::new();
    let mut best = (0usize, f64::INFINITY);
    if let (Some(vr), Some((_, vt))) = (&valid_raw, &valid) {
        best = (0, logistic_loss(vr, vt));
        valid_loss.push(best.1);
    }

    for round in 0..params.max_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - targets[i];
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        if sample_size < n {
            let mut r = rng(derive_seed(seed, &[round as u64]));
            in_sample.iter_mut().for_each(|v| *v = false);
            for i in sample(&mut r, n, sample_size) {
                in_sample[i] = true;
            }
        }
        let tree = grow_tree(x, &order, &grad, &hess, &in_sample, params);
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            raw[i] += tree.predict_row(row);
        }
        train_loss.push(logistic_loss(&raw, &targets));
        if let (Some(vr), Some((vx, vt))) = (valid_raw.as_mut(), &valid) {
            for (i, row) in vx.axis_iter(Axis(0)).enumerate() {
                vr[i] += tree.predict_row(row);
            }
            let loss = logistic_loss(vr, vt);
            valid_loss.push(loss);
            trees.push(tree);
            if loss < best.1 {
                best = (round + 1, loss);
            } else if round + 1 - best.0 >= params.early_stopping_rounds {
                break;
            }
        } else {
            trees.push(tree);
        }
    }
    let best_iteration = if valid.is_some() { best.0 } else { trees.len() };
    Ok(GbtModel {
        base_score,
        trees,
        learning_rate: params.learning_rate,
        best_iteration,
        n_features: d,
        train_loss,
        valid_loss,
    })
}

/// Fits on `ds` with early stopping on a stratified holdout of
/// `params.validation_fraction` of its rows. Falls back to a plain fit of
/// `max_trees` trees when the fraction is zero or the holdout would lack a
/// class.
pub fn fit_gbt_with_holdout(ds: &CreditDataset, params: &GbtParams, seed: u64) -> Result<GbtModel> {
    let labels = ds.require_both_classes()?;
    let x = ds.features().view();
    if params.validation_fraction > 0.0 {
        let (goods, bads) = ds.class_indices()?;
        if goods.len() >= 4 && bads.len() >= 4 {
            let (tr, va) =
                stratified_split(ds, 1.0 - params.validation_fraction, derive_seed(seed, &[0xE5]))?;
            let tx = x.select(Axis(0), &tr);
            let ty: Vec<Label> = tr.iter().map(|&i| labels[i]).collect();
            let vx = x.select(Axis(0), &va);
            let vy: Vec<Label> = va.iter().map(|&i| labels[i]).collect();
            return fit_gbt(tx.view(), &ty, params, Some((vx.view(), &vy)), seed);
        }
    }
    fit_gbt(x, labels, params, None, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn single_zero_leaf_predicts_half() {
        let m = GbtModel::from_trees(0.0, vec![RegressionTree::leaf(0.0)], 2);
        let p = m.predict_proba(array![[1.0, 5.0], [3.0, -2.0]].view()).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert!(m.predict_proba(array![[1.0]].view()).is_err());
    }

    #[test]
    fn threshold_split_prefers_lowest_feature_on_ties() {
        // two identical columns: the split must use feature 0
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let y = [Label::Good, Label::Good, Label::Bad, Label::Bad];
        let params = GbtParams {
            max_depth: 1,
            max_trees: 1,
            subsample: 1.0,
            min_child_weight: 0.0,
            ..GbtParams::default()
        };
        let m = fit_gbt(x.view(), &y, &params, None, 0).unwrap();
        match &m.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn empty_validation_is_an_error() {
        let x = array![[0.0], [1.0]];
        let y = [Label::Good, Label::Bad];
        let vx = Array2::<f64>::zeros((0, 1));
        assert!(matches!(
            fit_gbt(x.view(), &y, &GbtParams::default(), Some((vx.view(), &[])), 0),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            fit_gbt(x.view(), &[Label::Good, Label::Good], &GbtParams::default(), None, 0),
            Err(Error::SingleClass(_))
        ));
    }

    #[test]
    fn separable_data_depth_one_reaches_perfect_training_auc() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let y: Vec<Label> = (0..40).map(|i| Label::from_bad(i >= 25)).collect();
        let params = GbtParams {
            max_depth: 1,
            max_trees: 10,
            subsample: 1.0,
            ..GbtParams::default()
        };
        let m = fit_gbt(x.view(), &y, &params, None, 1).unwrap();
        let p = m.predict_proba(x.view()).unwrap();
        let auc = crate::metrics::auc(&y, &p).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(m.trees.len(), 10);
        assert!(m.trees.iter().all(|t| t.depth() <= 1));
    }

    #[test]
    fn hopeless_validation_stops_early() {
        // training says "x=1 is bad"; validation at x=1 is all good, so every
        // round makes the validation loss worse
        let x = Array2::from_shape_fn((40, 1), |(i, _)| (i % 2) as f64);
        let y: Vec<Label> = (0..40).map(|i| Label::from_bad(i % 2 == 1)).collect();
        let vx = Array2::from_elem((10, 1), 1.0);
        let vy = vec![Label::Good; 10];
        let params = GbtParams {
            early_stopping_rounds: 5,
            subsample: 1.0,
            ..GbtParams::default()
        };
        let m = fit_gbt(x.view(), &y, &params, Some((vx.view(), &vy)), 3).unwrap();
        assert_eq!(m.best_iteration, 0);
        assert!(m.trees.len() <= params.early_stopping_rounds + 1);
    }

    #[test]
    fn deterministic_for_seed() {
        let x = Array2::from_shape_fn((60, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let y: Vec<Label> = (0..60).map(|i| Label::from_bad((i * 5) % 3 == 0)).collect();
        let params = GbtParams {
            max_trees: 20,
            ..GbtParams::default()
        };
        let a = fit_gbt(x.view(), &y, &params, None, 42).unwrap();
        let b = fit_gbt(x.view(), &y, &params, None, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.to_json().unwrap().contains("\"version\": 1"));
    }
}
