//! Score-spread and AUC-scatter exports: a sparse linear scorer against
//! boosted trees on identical data, and accepts-versus-unbiased AUC over a
//! boosted-tree meta-parameter grid.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::experiment1::make_folds;
use super::{
    create_dir, fmt, fmt_opt, load_data, with_pool, write_manifest, write_rows, ExperimentConfig,
    LoadedData, SALT_DIAG,
};
use crate::data::{stratified_split, Label};
use crate::error::{Error, Result};
use crate::learners::{
    fit_gbt_with_holdout, fit_l1_logistic, GbtParams, ProbabilisticModel, SolverOptions,
};
use crate::metrics::{auc, spearman};
use crate::rng::derive_seed;
use crate::strategies::{tune_lambda, DEFAULT_LAMBDA_GRID};

/// Linear-interpolation quantile of unsorted `values`, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// `P90 - P10`.
pub fn interdecile_range(values: &[f64]) -> Option<f64> {
    Some(quantile(values, 0.9)? - quantile(values, 0.1)?)
}

/// Counts over `bins` equal-width bins on `[0, 1]`; 1.0 lands in the last bin.
pub fn histogram(probs: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &p in probs {
        let b = ((p.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSpread {
    pub model: &'static str,
    pub p10: f64,
    pub p90: f64,
    pub interdecile: f64,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub variant: String,
    pub accepts_auc: Option<f64>,
    pub unbiased_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub spreads: Vec<ScoreSpread>,
    pub l1_lambda: f64,
    pub scatter: Vec<ScatterPoint>,
    pub rank_correlation: Option<f64>,
}

impl DiagnosticsReport {
    pub fn spread(&self, model: &str) -> Option<&ScoreSpread> {
        self.spreads.iter().find(|s| s.model == model)
    }
}

/// Fits both models on the same stratified 70% of the accepts and scores
/// the held-out 30%.
pub fn score_spreads(data: &LoadedData, scorer: &GbtParams, bins: usize, seed: u64) -> Result<(Vec<ScoreSpread>, f64)> {
    let accepts = &data.partition.accepts;
    let (tr, ho) = stratified_split(accepts, 0.7, derive_seed(seed, &[0]))?;
    let train = accepts.select(&tr);
    let hold = accepts.select(&ho);
    let labels = train.require_labels()?;
    let lambda = tune_lambda(&train, &DEFAULT_LAMBDA_GRID, derive_seed(seed, &[1]))?;
    let l1 = fit_l1_logistic(train.features().view(), labels, lambda, &SolverOptions::default())?;
    let gbt = fit_gbt_with_holdout(&train, scorer, derive_seed(seed, &[2]))?;
    let x = hold.features().view();
    let spreads = [("l1_logistic", l1.predict_proba(x)?), ("gbt", gbt.predict_proba(x)?)]
        .into_iter()
        .map(|(model, probs)| {
            let p10 = quantile(&probs, 0.1).ok_or(Error::Empty("holdout"))?;
            let p90 = quantile(&probs, 0.9).ok_or(Error::Empty("holdout"))?;
            Ok(ScoreSpread {
                model,
                p10,
                p90,
                interdecile: p90 - p10,
                counts: histogram(&probs, bins),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((spreads, lambda))
}

pub fn export_diagnostics(cfg: &ExperimentConfig, data: &LoadedData, jobs: usize) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    let seed = derive_seed(cfg.seed, &[SALT_DIAG]);
    let (spreads, l1_lambda) = score_spreads(data, &cfg.scorer, cfg.diagnostics.histogram_bins, seed)?;

    let p = &data.partition;
    let folds = make_folds(cfg, p)?;
    let grid = cfg.diagnostics.scorer_grid(&cfg.scorer);
    let accept_labels = p.accepts.require_labels()?;
    let unbiased_labels = p.unbiased.require_labels()?;
    let scatter: Vec<ScatterPoint> = with_pool(jobs, || {
        grid.par_iter()
            .enumerate()
            .map(|(g, params)| {
                let fit_seed = |f: u64| derive_seed(seed, &[2, g as u64, f]);
                let mut aucs = Vec::new();
                for f in 0..folds.k() {
                    let test = folds.test_indices(f);
                    let model = fit_gbt_with_holdout(
                        &p.accepts.select(&folds.train_indices(f)),
                        params,
                        fit_seed(f as u64),
                    )?;
                    let probs = model.predict_proba(p.accepts.select(&test).features().view())?;
                    let l: Vec<Label> = test.iter().map(|&i| accept_labels[i]).collect();
                    aucs.extend(auc(&l, &probs).ok());
                }
                let full = fit_gbt_with_holdout(&p.accepts, params, fit_seed(u64::MAX))?;
                let probs = full.predict_proba(p.unbiased.features().view())?;
                Ok(ScatterPoint {
                    variant: format!(
                        "gbt(max_depth={},learning_rate={})",
                        params.max_depth, params.learning_rate
                    ),
                    accepts_auc: (!aucs.is_empty())
                        .then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
                    unbiased_auc: auc(unbiased_labels, &probs).ok(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let (a, u): (Vec<f64>, Vec<f64>) = scatter
        .iter()
        .filter_map(|s| Some((s.accepts_auc?, s.unbiased_auc?)))
        .unzip();
    Ok(DiagnosticsReport {
        spreads,
        l1_lambda,
        rank_correlation: spearman(&a, &u),
        scatter,
    })
}

impl DiagnosticsReport {
    /// Files under `dir`: `score_histogram.csv`, `score_spread.csv`,
    /// `auc_scatter.csv` and `auc_rank_correlation.csv`.
    pub fn write(&self, dir: &Path, bins: usize) -> Result<()> {
        create_dir(dir)?;
        let mut hist = Vec::new();
        for s in &self.spreads {
            for (b, c) in s.counts.iter().enumerate() {
                hist.push(vec![
                    s.model.to_string(),
                    b.to_string(),
                    fmt(b as f64 / bins as f64),
                    fmt((b + 1) as f64 / bins as f64),
                    c.to_string(),
                ]);
            }
        }
        write_rows(
            &dir.join("score_histogram.csv"),
            &["model", "bin", "lower", "upper", "count"],
            &hist,
        )?;
        let spread: Vec<Vec<String>> = self
            .spreads
            .iter()
            .map(|s| vec![s.model.into(), fmt(s.p10), fmt(s.p90), fmt(s.interdecile)])
            .collect();
        write_rows(&dir.join("score_spread.csv"), &["model", "p10", "p90", "interdecile"], &spread)?;
        let scatter: Vec<Vec<String>> = self
            .scatter
            .iter()
            .map(|s| vec![s.variant.clone(), fmt_opt(s.accepts_auc), fmt_opt(s.unbiased_auc)])
            .collect();
        write_rows(&dir.join("auc_scatter.csv"), &["variant", "accepts_auc", "unbiased_auc"], &scatter)?;
        write_rows(
            &dir.join("auc_rank_correlation.csv"),
            &["spearman", "n"],
            &[vec![fmt_opt(self.rank_correlation), self.scatter.len().to_string()]],
        )
    }
}

pub fn diag(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<DiagnosticsReport> {
    let data = load_data(cfg)?;
    let report = export_diagnostics(cfg, &data, jobs)?;
    create_dir(out)?;
    report.write(&out.join("diagnostics"), cfg.diagnostics.histogram_bins)?;
    write_manifest(
        out,
        "diag",
        cfg,
        &data,
        serde_json::json!({ "l1_lambda": report.l1_lambda }),
    )?;
    Ok(report)
}
