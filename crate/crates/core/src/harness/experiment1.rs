//! Strategy benchmark: every grid strategy on every cross-validation fold,
//! scored on the held-out accepts and on bootstrap resamples of the unbiased
//! sample.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    create_dir, fmt, load_data, with_pool, write_manifest, write_rows, ExperimentConfig,
    LoadedData, SALT_BOOTSTRAP, SALT_FOLDS, SALT_SCORER, SALT_STRATEGY,
};
use crate::data::{bootstrap_indices, stratified_kfold, FoldAssignment, Label, PartitionedData};
use crate::error::Result;
use crate::learners::{fit_gbt_with_holdout, GbtParams, ProbabilisticModel};
use crate::metrics::{
    auc, brier, friedman_test, nemenyi_cd, r_precision, DEFAULT_ACCEPT_FRACTION,
};
use crate::rng::{derive_seed, stable_hash};
use crate::strategies::{run_strategy, StrategyKind, StrategySpec};

/// Metric names in report order; the first three come from held-out accepts.
pub const METRICS: [&str; 6] = [
    "accepts_auc",
    "accepts_bs",
    "accepts_rp",
    "unbiased_auc",
    "unbiased_bs",
    "unbiased_rp",
];

fn higher_is_better(metric: &str) -> bool {
    !metric.ends_with("_bs")
}

/// `[auc, brier, r_precision]`, `None` where undefined.
pub(crate) fn score_metrics(labels: &[Label], probs: &[f64]) -> [Option<f64>; 3] {
    [
        auc(labels, probs).ok(),
        brier(labels, probs).ok(),
        r_precision(labels, probs, DEFAULT_ACCEPT_FRACTION).ok(),
    ]
}

/// Outcome of one strategy on one fold.
pub(crate) struct FoldEval {
    pub accepts: [Option<f64>; 3],
    pub unbiased_probs: Vec<f64>,
    pub inferred: usize,
    pub iterations: usize,
    pub note: Option<String>,
}

pub(crate) fn fold_seeds(master: u64, fold: usize, spec: &StrategySpec) -> (u64, u64) {
    let h = stable_hash(&spec.label());
    (
        derive_seed(master, &[SALT_STRATEGY, fold as u64, h]),
        derive_seed(master, &[SALT_SCORER, fold as u64, h]),
    )
}

pub(crate) fn evaluate_fold(
    partition: &PartitionedData,
    folds: &FoldAssignment,
    fold: usize,
    spec: &StrategySpec,
    scorer: &GbtParams,
    master: u64,
) -> Result<FoldEval> {
    let (strategy_seed, scorer_seed) = fold_seeds(master, fold, spec);
    let train = partition.accepts.select(&folds.train_indices(fold));
    let test = partition.accepts.select(&folds.test_indices(fold));
    let aug = run_strategy(spec, &train, &partition.rejects, scorer, strategy_seed)?;
    let model = fit_gbt_with_holdout(&aug.dataset, scorer, scorer_seed)?;
    let test_probs = model.predict_proba(test.features().view())?;
    let unbiased_probs = model.predict_proba(partition.unbiased.features().view())?;
    Ok(FoldEval {
        accepts: score_metrics(test.require_labels()?, &test_probs),
        unbiased_probs,
        inferred: aug.inferred_count(),
        iterations: aug.iterations_used,
        note: aug.note,
    })
}

pub(crate) fn make_folds(cfg: &ExperimentConfig, partition: &PartitionedData) -> Result<FoldAssignment> {
    stratified_kfold(&partition.accepts, cfg.k_folds, derive_seed(cfg.seed, &[SALT_FOLDS]))
}

/// One long-format observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub strategy: String,
    pub fold: usize,
    /// `None` for held-out accepts metrics.
    pub bootstrap: Option<usize>,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub kind: StrategyKind,
    pub folds_ok: usize,
    /// Means in [`METRICS`] order.
    pub means: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanRow {
    pub metric: &'static str,
    pub k: usize,
    pub n_blocks: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub critical_difference: Option<f64>,
    /// `(strategy, mean rank)`, rank 1 = best.
    pub mean_ranks: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldInfo {
    pub strategy: String,
    pub fold: usize,
    pub inferred: usize,
    pub iterations: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub strategy: String,
    pub fold: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub friedman: Vec<FriedmanRow>,
    /// Method representatives used by the rank tests.
    pub representatives: Vec<String>,
    pub folds: Vec<FoldInfo>,
    pub failures: Vec<Failure>,
}

pub fn run_experiment1(cfg: &ExperimentConfig, data: &LoadedData, jobs: usize) -> Result<EvaluationReport> {
    cfg.validate()?;
    let partition = &data.partition;
    let folds = make_folds(cfg, partition)?;
    let n_unbiased = partition.unbiased.len();
    let unbiased_labels = partition.unbiased.require_labels()?;
    let boots: Vec<Vec<usize>> = (0..cfg.n_bootstraps)
        .map(|b| bootstrap_indices(n_unbiased, derive_seed(cfg.seed, &[SALT_BOOTSTRAP, b as u64])))
        .collect();

    let tasks: Vec<(usize, usize)> = (0..cfg.strategies.len())
        .flat_map(|s| (0..cfg.k_folds).map(move |f| (s, f)))
        .collect();
    let results: Vec<Result<FoldEval>> = with_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(s, f)| evaluate_fold(partition, &folds, f, &cfg.strategies[s], &cfg.scorer, cfg.seed))
            .collect()
    })?;

    let mut rows = Vec::new();
    let mut infos = Vec::new();
    let mut failures = Vec::new();
    for (&(s, f), res) in tasks.iter().zip(results) {
        let label = cfg.strategies[s].label();
        match res {
            Ok(ev) => {
                for (m, v) in METRICS[..3].iter().zip(ev.accepts) {
                    if let Some(v) = v {
                        rows.push(MetricRow {
                            strategy: label.clone(),
                            fold: f,
                            bootstrap: None,
                            metric: m,
                            value: v,
                        });
                    }
                }
                for (b, idx) in boots.iter().enumerate() {
                    let l: Vec<Label> = idx.iter().map(|&i| unbiased_labels[i]).collect();
                    let p: Vec<f64> = idx.iter().map(|&i| ev.unbiased_probs[i]).collect();
                    for (m, v) in METRICS[3..].iter().zip(score_metrics(&l, &p)) {
                        if let Some(v) = v {
                            rows.push(MetricRow {
                                strategy: label.clone(),
                                fold: f,
                                bootstrap: Some(b),
                                metric: m,
                                value: v,
                            });
                        }
                    }
                }
                infos.push(FoldInfo {
                    strategy: label,
                    fold: f,
                    inferred: ev.inferred,
                    iterations: ev.iterations,
                    note: ev.note,
                });
            }
            Err(e) => failures.push(Failure {
                strategy: label,
                fold: f,
                error: e.to_string(),
            }),
        }
    }

    let summary = summarize(cfg, &rows, &infos);
    let representatives = pick_representatives(cfg, &summary);
    let friedman = rank_tests(&rows, &representatives)?;
    Ok(EvaluationReport {
        rows,
        summary,
        friedman,
        representatives,
        folds: infos,
        failures,
    })
}

/// Means per strategy and metric, accumulated in row order.
fn summarize(cfg: &ExperimentConfig, rows: &[MetricRow], infos: &[FoldInfo]) -> Vec<SummaryRow> {
    let mut acc: HashMap<(&str, &str), (f64, usize)> = HashMap::new();
    for r in rows {
        let e = acc.entry((r.strategy.as_str(), r.metric)).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    cfg.strategies
        .iter()
        .map(|s| {
            let label = s.label();
            let means = METRICS
                .iter()
                .map(|m| acc.get(&(label.as_str(), *m)).map(|(sum, n)| sum / *n as f64))
                .collect();
            SummaryRow {
                folds_ok: infos.iter().filter(|i| i.strategy == label).count(),
                strategy: label,
                kind: s.kind(),
                means,
            }
        })
        .collect()
}

/// Per method, the variant with the best mean accepts AUC (first on ties).
fn pick_representatives(cfg: &ExperimentConfig, summary: &[SummaryRow]) -> Vec<String> {
    let mut best: BTreeMap<StrategyKind, (usize, f64)> = BTreeMap::new();
    for (i, row) in summary.iter().enumerate() {
        let Some(v) = row.means[0] else { continue };
        match best.get(&row.kind) {
            Some(&(_, b)) if b >= v => {}
            _ => {
                best.insert(row.kind, (i, v));
            }
        }
    }
    let mut picked: Vec<usize> = best.values().map(|&(i, _)| i).collect();
    picked.sort_unstable();
    picked.into_iter().map(|i| cfg.strategies[i].label()).collect()
}

/// Friedman test and Nemenyi critical difference per metric over the
/// representatives, with (fold, bootstrap) pairs as blocks.
fn rank_tests(rows: &[MetricRow], reps: &[String]) -> Result<Vec<FriedmanRow>> {
    let k = reps.len();
    let mut out = Vec::new();
    for metric in METRICS {
        let mut blocks: BTreeMap<(usize, Option<usize>), Vec<Option<f64>>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.metric == metric) {
            if let Some(pos) = reps.iter().position(|s| *s == r.strategy) {
                blocks.entry((r.fold, r.bootstrap)).or_insert_with(|| vec![None; k])[pos] =
                    Some(r.value);
            }
        }
        let complete: Vec<Vec<f64>> = blocks
            .into_values()
            .filter_map(|b| b.into_iter().collect::<Option<Vec<f64>>>())
            .collect();
        let n = complete.len();
        let sign = if higher_is_better(metric) { -1.0 } else { 1.0 };
        let mut row = FriedmanRow {
            metric,
            k,
            n_blocks: n,
            statistic: None,
            p_value: None,
            critical_difference: None,
            mean_ranks: Vec::new(),
        };
        if k >= 3 && n >= 2 {
            let m = Array2::from_shape_fn((k, n), |(i, j)| sign * complete[j][i]);
            let res = friedman_test(&m)?;
            row.statistic = Some(res.statistic);
            row.p_value = Some(res.p_value);
            row.mean_ranks = reps.iter().cloned().zip(res.mean_ranks).collect();
        }
        if (2..=10).contains(&k) && n >= 1 {
            row.critical_difference = Some(nemenyi_cd(k, n, 0.05)?);
        }
        out.push(row);
    }
    Ok(out)
}

impl EvaluationReport {
    /// `raw_metrics.csv`, `summary_table.csv`, `friedman.csv`, `ranks.csv`,
    /// `folds.csv` and `failures.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let raw: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.strategy.clone(),
                    r.fold.to_string(),
                    r.bootstrap.map(|b| b.to_string()).unwrap_or_default(),
                    r.metric.to_string(),
                    fmt(r.value),
                ]
            })
            .collect();
        write_rows(
            &dir.join("raw_metrics.csv"),
            &["strategy", "fold", "bootstrap", "metric", "value"],
            &raw,
        )?;

        let mut header = vec!["strategy", "kind", "folds_ok"];
        header.extend(METRICS);
        let summary: Vec<Vec<String>> = self
            .summary
            .iter()
            .map(|s| {
                let mut r = vec![s.strategy.clone(), s.kind.name().into(), s.folds_ok.to_string()];
                r.extend(s.means.iter().map(|m| super::fmt_opt(*m)));
                r
            })
            .collect();
        write_rows(&dir.join("summary_table.csv"), &header, &summary)?;

        let friedman: Vec<Vec<String>> = self
            .friedman
            .iter()
            .map(|f| {
                vec![
                    f.metric.to_string(),
                    f.k.to_string(),
                    f.n_blocks.to_string(),
                    super::fmt_opt(f.statistic),
                    super::fmt_opt(f.p_value),
                    super::fmt_opt(f.critical_difference),
                ]
            })
            .collect();
        write_rows(
            &dir.join("friedman.csv"),
            &["metric", "k", "n_blocks", "statistic", "p_value", "critical_difference"],
            &friedman,
        )?;
        let ranks: Vec<Vec<String>> = self
            .friedman
            .iter()
            .flat_map(|f| {
                f.mean_ranks
                    .iter()
                    .map(move |(s, r)| vec![f.metric.to_string(), s.clone(), fmt(*r)])
            })
            .collect();
        write_rows(&dir.join("ranks.csv"), &["metric", "strategy", "mean_rank"], &ranks)?;

        let folds: Vec<Vec<String>> = self
            .folds
            .iter()
            .map(|i| {
                vec![
                    i.strategy.clone(),
                    i.fold.to_string(),
                    i.inferred.to_string(),
                    i.iterations.to_string(),
                    i.note.clone().unwrap_or_default(),
                ]
            })
            .collect();
        write_rows(
            &dir.join("folds.csv"),
            &["strategy", "fold", "inferred", "iterations", "note"],
            &folds,
        )?;
        let failures: Vec<Vec<String>> = self
            .failures
            .iter()
            .map(|f| vec![f.strategy.clone(), f.fold.to_string(), f.error.clone()])
            .collect();
        write_rows(&dir.join("failures.csv"), &["strategy", "fold", "error"], &failures)
    }
}

/// Loads data, runs the benchmark and writes the report and manifest to `out`.
pub fn bench(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<EvaluationReport> {
    let data = load_data(cfg)?;
    let report = run_experiment1(cfg, &data, jobs)?;
    report.write(out)?;
    write_manifest(
        out,
        "bench",
        cfg,
        &data,
        serde_json::json!({
            "n_strategies": cfg.strategies.len(),
            "representatives": report.representatives,
            "failures": report.failures.len(),
        }),
    )?;
    Ok(report)
}
