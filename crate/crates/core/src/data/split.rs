use rand::seq::SliceRandom;
use rand::Rng as _;

use super::dataset::CreditDataset;
use crate::error::{Error, Result};
use crate::rng::rng;

/// Fold index per row, in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.folds
    }

    /// Rows held out in fold `f`.
    pub fn test_indices(&self, f: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == f).collect()
    }

    /// Rows used for training when fold `f` is held out.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != f).collect()
    }
}

/// Label-stratified k-fold assignment.
///
/// Each class is shuffled and dealt round-robin into the folds, continuing the
/// deal across classes so fold sizes also stay within one of each other.
pub fn stratified_kfold(ds: &CreditDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::param(format!("k-fold needs k >= 2, got {k}")));
    }
    let (mut goods, mut bads) = ds.class_indices()?;
    if goods.len() < k || bads.len() < k {
        return Err(Error::param(format!(
            "each class needs at least {k} members (goods {}, bads {})",
            goods.len(),
            bads.len()
        )));
    }
    let mut r = rng(seed);
    goods.shuffle(&mut r);
    bads.shuffle(&mut r);
    let mut folds = vec![0; ds.len()];
    for (pos, &i) in bads.iter().chain(goods.iter()).enumerate() {
        folds[i] = pos % k;
    }
    Ok(FoldAssignment { folds, k })
}

/// Stratified two-way split: returns `(train, holdout)` row indices, each
/// sorted ascending. `train_fraction` of every class goes to `train`
/// (rounded), leaving at least one member of each class on each side when
/// the class has two or more members.
pub fn stratified_split(
    ds: &CreditDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!(
            "split fraction must lie in (0,1), got {train_fraction}"
        )));
    }
    let (mut goods, mut bads) = ds.class_indices()?;
    let mut r = rng(seed);
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for class in [&mut bads, &mut goods] {
        class.shuffle(&mut r);
        let n = class.len();
        let mut cut = (train_fraction * n as f64).round() as usize;
        if n >= 2 {
            cut = cut.clamp(1, n - 1);
        }
        train.extend_from_slice(&class[..cut]);
        hold.extend_from_slice(&class[cut..]);
    }
    train.sort_unstable();
    hold.sort_unstable();
    Ok((train, hold))
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

/// Bootstrap resample of `ds`. Resampled ids are suffixed with `#<draw>` to
/// stay unique.
pub fn bootstrap_sample(ds: &CreditDataset, seed: u64) -> Result<CreditDataset> {
    if ds.is_empty() {
        return Err(Error::Empty("bootstrap of an empty dataset"));
    }
    let idx = bootstrap_indices(ds.len(), seed);
    let ids = idx
        .iter()
        .enumerate()
        .map(|(draw, &i)| format!("{}#{draw}", ds.ids()[i]))
        .collect();
    let features = ds.features().select(ndarray::Axis(0), &idx);
    let labels = ds.labels().map(|l| idx.iter().map(|&i| l[i]).collect());
    CreditDataset::new(ids, ds.feature_names().to_vec(), features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use ndarray::Array2;
    use std::collections::HashSet;

    fn labeled(n: usize, bads: usize) -> CreditDataset {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let labels = (0..n).map(|i| Label::from_bad(i < bads)).collect();
        CreditDataset::from_matrix(x, Some(labels)).unwrap()
    }

    #[test]
    fn k4_on_100_with_39_bad() {
        let ds = labeled(100, 39);
        let fa = stratified_kfold(&ds, 4, 11).unwrap();
        let labels = ds.labels().unwrap();
        for f in 0..4 {
            let idx = fa.test_indices(f);
            let b = idx.iter().filter(|&&i| labels[i].is_bad()).count();
            assert!(b == 9 || b == 10, "fold {f} has {b} bads");
            assert!(idx.len() == 25, "fold {f} has {} rows", idx.len());
        }
    }

    #[test]
    fn k2_on_four_cases() {
        let ds = labeled(4, 2);
        let fa = stratified_kfold(&ds, 2, 3).unwrap();
        let labels = ds.labels().unwrap();
        for f in 0..2 {
            let idx = fa.test_indices(f);
            assert_eq!(idx.len(), 2);
            assert_eq!(idx.iter().filter(|&&i| labels[i].is_bad()).count(), 1);
        }
    }

    #[test]
    fn kfold_is_deterministic_and_validates() {
        let ds = labeled(50, 20);
        assert_eq!(
            stratified_kfold(&ds, 5, 1).unwrap(),
            stratified_kfold(&ds, 5, 1).unwrap()
        );
        assert!(stratified_kfold(&ds, 1, 1).is_err());
        assert!(stratified_kfold(&labeled(10, 2), 3, 1).is_err());
        assert!(stratified_kfold(&ds.without_labels(), 3, 1).is_err());
    }

    #[test]
    fn bootstrap_single_row() {
        let ds = labeled(1, 1);
        let b = bootstrap_sample(&ds, 5).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.features()[[0, 0]], 0.0);
        assert_eq!(b.ids(), &["0#0"]);
    }

    #[test]
    fn bootstrap_distinct_fraction() {
        let n = 10_000;
        let idx = bootstrap_indices(n, 99);
        let distinct = idx.iter().collect::<HashSet<_>>().len() as f64 / n as f64;
        assert!((0.60..=0.66).contains(&distinct), "{distinct}");
        assert_eq!(idx, bootstrap_indices(n, 99));
        assert!(bootstrap_sample(&labeled(0, 0), 1).is_err());
    }

    #[test]
    fn stratified_split_keeps_classes_on_both_sides() {
        let ds = labeled(20, 4);
        let (tr, ho) = stratified_split(&ds, 0.7, 2).unwrap();
        assert_eq!(tr.len() + ho.len(), 20);
        let l = ds.labels().unwrap();
        assert!(tr.iter().any(|&i| l[i].is_bad()) && ho.iter().any(|&i| l[i].is_bad()));
        assert!(stratified_split(&ds, 1.0, 2).is_err());
    }
}
