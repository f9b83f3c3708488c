use rand::Rng as _;

use super::{AugmentedTrainingSet, Provenance};
use crate::data::{stratified_kfold, CreditDataset, Label};
use crate::error::{Error, Result};
use crate::learners::{fit_gbt_with_holdout, GbtParams, ProbabilisticModel};
use crate::rng::{derive_seed, rng};

pub fn ignore_rejects(
    accepts: &CreditDataset,
    _rejects: &CreditDataset,
) -> Result<AugmentedTrainingSet> {
    Ok(AugmentedTrainingSet::accepts_only(accepts))
}

pub fn label_all_bad(accepts: &CreditDataset, rejects: &CreditDataset) -> Result<AugmentedTrainingSet> {
    if rejects.is_empty() {
        return Ok(AugmentedTrainingSet::accepts_only(accepts));
    }
    let picks: Vec<(usize, Label)> = (0..rejects.len()).map(|i| (i, Label::Bad)).collect();
    AugmentedTrainingSet::from_picks(accepts, rejects, &picks)
}

/// `Bad` iff the score exceeds `threshold`.
pub fn hard_cutoff_labels(scores: &[f64], threshold: f64) -> Vec<Label> {
    scores.iter().map(|&s| Label::from_bad(s > threshold)).collect()
}

pub fn hard_cutoff(
    accepts: &CreditDataset,
    rejects: &CreditDataset,
    threshold: f64,
    scorer: &GbtParams,
    seed: u64,
) -> Result<AugmentedTrainingSet> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("threshold must lie in (0,1), got {threshold}")));
    }
    if rejects.is_empty() {
        return Ok(AugmentedTrainingSet::accepts_only(accepts));
    }
    let model = fit_gbt_with_holdout(accepts, scorer, seed)?;
    let scores = model.predict_proba(rejects.features().view())?;
    let picks: Vec<(usize, Label)> = hard_cutoff_labels(&scores, threshold)
        .into_iter()
        .enumerate()
        .collect();
    AugmentedTrainingSet::from_picks(accepts, rejects, &picks)
}

/// Equal-frequency band edges over `accept_scores` and each band's bad rate.
///
/// Returns `(edges, bad_rates)` with `edges.len() + 1 == bad_rates.len()`;
/// a score `s` falls in band `edges.partition_point(|e| *e <= s)`. Bands that
/// would hold no accepts (ties in the scores) are merged into a neighbor.
pub fn score_bands(
    accept_scores: &[f64],
    accept_labels: &[Label],
    n_batches: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = accept_scores.len();
    let mut sorted = accept_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..n_batches).map(|b| sorted[b * n / n_batches]).collect();
    edges.dedup();
    loop {
        let mut counts = vec![0usize; edges.len() + 1];
        let mut bads = vec![0usize; edges.len() + 1];
        for (s, l) in accept_scores.iter().zip(accept_labels) {
            let b = edges.partition_point(|e| e <= s);
            counts[b] += 1;
            bads[b] += l.is_bad() as usize;
        }
        match counts.iter().position(|&c| c == 0) {
            Some(empty) => {
                // drop the edge separating the empty band from a neighbor
                let edge = if empty < edges.len() { empty } else { empty - 1 };
                edges.remove(edge);
            }
            None => {
                let rates = bads
                    .iter()
                    .zip(&counts)
                    .map(|(&b, &c)| b as f64 / c as f64)
                    .collect();
                return (edges, rates);
            }
        }
    }
}

/// Draws `Bad` with probability `min(1, rate * multiplier)` per case.
pub fn parcel_labels(
    band_rates: &[f64],
    bands: &[usize],
    multiplier: f64,
    seed: u64,
) -> Vec<Label> {
    let mut r = rng(seed);
    bands
        .iter()
        .map(|&b| {
            let p = (band_rates[b] * multiplier).min(1.0);
            Label::from_bad(r.random::<f64>() < p)
        })
        .collect()
}

pub fn parcelling(
    accepts: &CreditDataset,
    rejects: &CreditDataset,
    n_batches: usize,
    multiplier: f64,
    scorer: &GbtParams,
    seed: u64,
) -> Result<AugmentedTrainingSet> {
    if n_batches < 2 {
        return Err(Error::param("parcelling needs n_batches >= 2"));
    }
    if rejects.is_empty() {
        return Ok(AugmentedTrainingSet::accepts_only(accepts));
    }
    let labels = accepts.require_both_classes()?;
    let model = fit_gbt_with_holdout(accepts, scorer, seed)?;
    let accept_scores = model.predict_proba(accepts.features().view())?;
    let reject_scores = model.predict_proba(rejects.features().view())?;
    let (edges, rates) = score_bands(&accept_scores, labels, n_batches.min(accepts.len()));
    let bands: Vec<usize> = reject_scores
        .iter()
        .map(|s| edges.partition_point(|e| e <= s))
        .collect();
    let drawn = parcel_labels(&rates, &bands, multiplier, derive_seed(seed, &[0xBA7C]));
    let picks: Vec<(usize, Label)> = drawn.into_iter().enumerate().collect();
    AugmentedTrainingSet::from_picks(accepts, rejects, &picks)
}

/// Unanimous hard-cutoff vote across models; `None` where models disagree.
pub fn vote(scores_per_model: &[Vec<f64>], threshold: f64) -> Vec<Option<Label>> {
    let m = scores_per_model.first().map_or(0, Vec::len);
    (0..m)
        .map(|i| {
            let bad = scores_per_model.iter().filter(|s| s[i] > threshold).count();
            if bad == scores_per_model.len() {
                Some(Label::Bad)
            } else if bad == 0 {
                Some(Label::Good)
            } else {
                None
            }
        })
        .collect()
}

pub fn cv_voting(
    accepts: &CreditDataset,
    rejects: &CreditDataset,
    n_folds: usize,
    threshold: f64,
    scorer: &GbtParams,
    seed: u64,
) -> Result<AugmentedTrainingSet> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("threshold must lie in (0,1), got {threshold}")));
    }
    if rejects.is_empty() {
        return Ok(AugmentedTrainingSet::accepts_only(accepts));
    }
    let folds = stratified_kfold(accepts, n_folds, derive_seed(seed, &[0xF0]))?;
    let mut scores = Vec::with_capacity(n_folds);
    for f in 0..n_folds {
        let train = accepts.select(&folds.train_indices(f));
        let model = fit_gbt_with_holdout(&train, scorer, derive_seed(seed, &[f as u64]))?;
        scores.push(model.predict_proba(rejects.features().view())?);
    }
    let picks: Vec<(usize, Label)> = vote(&scores, threshold)
        .into_iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .collect();
    let mut out = AugmentedTrainingSet::from_picks(accepts, rejects, &picks)?;
    debug_assert_eq!(out.count(Provenance::OriginalAccept), accepts.len());
    out.iterations_used = 1;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn accepts(l: usize, bads: usize) -> CreditDataset {
        let x = Array2::from_shape_fn((l, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..l).map(|i| Label::from_bad(i < bads)).collect();
        CreditDataset::from_matrix(x, Some(labels)).unwrap()
    }

    fn rejects(m: usize) -> CreditDataset {
        CreditDataset::new(
            (0..m).map(|i| format!("r{i}")).collect(),
            vec!["x0".into(), "x1".into()],
            Array2::from_shape_fn((m, 2), |(i, j)| (i + j) as f64 * 0.5),
            None,
        )
        .unwrap()
    }

    #[test]
    fn ignore_is_identity() {
        let a = accepts(10, 4);
        let out = ignore_rejects(&a, &rejects(5)).unwrap();
        assert_eq!(out.dataset, a);
        assert!(out.provenance.iter().all(|p| *p == Provenance::OriginalAccept));
        assert_eq!(out.iterations_used, 0);
    }

    #[test]
    fn label_all_bad_counts() {
        let a = accepts(10, 4);
        let none = label_all_bad(&a, &rejects(0)).unwrap();
        assert_eq!(none.dataset, a);
        let out = label_all_bad(&a, &rejects(5)).unwrap();
        assert_eq!(out.dataset.len(), 15);
        assert_eq!(out.count(Provenance::InferredBad), 5);
        assert!((out.dataset.bad_rate().unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn cutoff_labels() {
        assert!(hard_cutoff_labels(&[0.45; 4], 0.4).iter().all(|l| l.is_bad()));
        assert_eq!(hard_cutoff_labels(&[0.2, 0.7], 0.5), vec![Label::Good, Label::Bad]);
        let a = accepts(10, 4);
        assert!(hard_cutoff(&a, &rejects(3), 1.0, &GbtParams::default(), 0).is_err());
    }

    #[test]
    fn parcel_clipping_matches_label_all_bad() {
        let labels = parcel_labels(&[0.1, 0.3, 0.05], &[0, 1, 2, 1, 0], 1e6, 3);
        assert!(labels.iter().all(|l| l.is_bad()));
    }

    #[test]
    fn parcel_binomial_band() {
        let bands = vec![0usize; 1000];
        let labels = parcel_labels(&[0.2], &bands, 2.0, 17);
        let bad = labels.iter().filter(|l| l.is_bad()).count();
        assert!((360..=440).contains(&bad), "{bad}");
    }

    #[test]
    fn bands_merge_on_ties() {
        let scores = [0.1, 0.1, 0.1, 0.1, 0.5, 0.6];
        let labels = [Label::Good, Label::Good, Label::Bad, Label::Good, Label::Bad, Label::Bad];
        let (edges, rates) = score_bands(&scores, &labels, 6);
        assert_eq!(edges.len() + 1, rates.len());
        assert_eq!(edges, vec![0.5, 0.6]);
        assert_eq!(rates[0], 0.25);
    }

    #[test]
    fn voting_rules() {
        let same = vec![vec![0.2, 0.6], vec![0.2, 0.6], vec![0.2, 0.6]];
        assert_eq!(vote(&same, 0.3), vec![Some(Label::Good), Some(Label::Bad)]);
        let split = vec![vec![0.25, 0.9], vec![0.35, 0.8]];
        assert_eq!(vote(&split, 0.3), vec![None, Some(Label::Bad)]);
    }
}
