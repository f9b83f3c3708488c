//! Evaluation-strategy comparison over the self-learning variants of the
//! grid: accepts AUC (cross-validated), unbiased-sample AUC and kickout.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::experiment1::{evaluate_fold, make_folds, score_metrics, FoldEval};
use super::{
    create_dir, fmt_opt, load_data, with_pool, write_manifest, write_rows, ExperimentConfig,
    LoadedData, SALT_KICKOUT,
};
use crate::error::{Error, Result};
use crate::metrics::{kickout_protocol, spearman, KickoutOutcome};
use crate::rng::derive_seed;
use crate::strategies::StrategySpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantPoint {
    pub variant: String,
    /// Cross-validated `[auc, brier, r_precision]` on held-out accepts.
    pub accepts: [Option<f64>; 3],
    /// Same metrics on the unbiased sample, averaged over fold models.
    pub unbiased: [Option<f64>; 3],
    /// Mean over the protocol repetitions where it is defined.
    pub kickout: Option<f64>,
    pub kickout_defined: usize,
    pub folds_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub a: &'static str,
    pub b: &'static str,
    pub spearman: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub criterion: &'static str,
    pub variant: String,
    /// Unbiased-sample `[auc, brier, r_precision]` of the selected variant.
    pub unbiased: [Option<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub points: Vec<VariantPoint>,
    pub correlations: Vec<CorrelationRow>,
    pub selections: Vec<SelectionRow>,
    pub failures: Vec<(String, String)>,
}

/// Measures in correlation-matrix order.
pub const MEASURES: [&str; 3] = ["accepts_auc", "unbiased_auc", "kickout"];

impl VariantPoint {
    fn measure(&self, name: &str) -> Option<f64> {
        match name {
            "accepts_auc" => self.accepts[0],
            "unbiased_auc" => self.unbiased[0],
            "kickout" => self.kickout,
            _ => None,
        }
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

enum Task {
    Fold(usize, usize),
    Kickout(usize, usize),
}

enum Done {
    Fold(Result<FoldEval>),
    Kickout(Result<KickoutOutcome>),
}

pub fn run_experiment2(cfg: &ExperimentConfig, data: &LoadedData, jobs: usize) -> Result<SelectionReport> {
    cfg.validate()?;
    let variants: Vec<StrategySpec> = cfg.self_learning_variants();
    if variants.is_empty() {
        return Err(Error::Config("the grid holds no self-learning variants".into()));
    }
    let partition = &data.partition;
    let folds = make_folds(cfg, partition)?;
    let unbiased_labels = partition.unbiased.require_labels()?;

    let mut tasks = Vec::new();
    for v in 0..variants.len() {
        tasks.extend((0..cfg.k_folds).map(|f| Task::Fold(v, f)));
        tasks.extend((0..cfg.kickout.repeats).map(|r| Task::Kickout(v, r)));
    }
    let done: Vec<Done> = with_pool(jobs, || {
        tasks
            .par_iter()
            .map(|t| match *t {
                Task::Fold(v, f) => Done::Fold(evaluate_fold(
                    partition,
                    &folds,
                    f,
                    &variants[v],
                    &cfg.scorer,
                    cfg.seed,
                )),
                Task::Kickout(v, r) => {
                    // shared splits across variants keep the comparison paired
                    let seed = derive_seed(cfg.seed, &[SALT_KICKOUT, r as u64]);
                    let protocol = cfg.kickout.protocol(&cfg.scorer, seed);
                    Done::Kickout(kickout_protocol(partition, &variants[v], &protocol))
                }
            })
            .collect()
    })?;

    let n = variants.len();
    let mut fold_evals: Vec<Vec<FoldEval>> = (0..n).map(|_| Vec::new()).collect();
    let mut kickouts: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    let mut failures = Vec::new();
    for (t, d) in tasks.iter().zip(done) {
        match (t, d) {
            (Task::Fold(v, _), Done::Fold(Ok(ev))) => fold_evals[*v].push(ev),
            (Task::Kickout(v, _), Done::Kickout(Ok(k))) => kickouts[*v].push(k.value),
            (Task::Fold(v, f), Done::Fold(Err(e))) => {
                failures.push((variants[*v].label(), format!("fold {f}: {e}")))
            }
            (Task::Kickout(v, r), Done::Kickout(Err(e))) => {
                failures.push((variants[*v].label(), format!("kickout repeat {r}: {e}")))
            }
            _ => unreachable!("results follow task order"),
        }
    }

    let points: Vec<VariantPoint> = variants
        .iter()
        .enumerate()
        .map(|(v, spec)| {
            let evs = &fold_evals[v];
            let unbiased: Vec<[Option<f64>; 3]> = evs
                .iter()
                .map(|ev| score_metrics(unbiased_labels, &ev.unbiased_probs))
                .collect();
            let pick = |rows: &[[Option<f64>; 3]], i: usize| mean(rows.iter().map(|r| r[i]));
            let accepts: Vec<[Option<f64>; 3]> = evs.iter().map(|ev| ev.accepts).collect();
            VariantPoint {
                variant: spec.label(),
                accepts: [pick(&accepts, 0), pick(&accepts, 1), pick(&accepts, 2)],
                unbiased: [pick(&unbiased, 0), pick(&unbiased, 1), pick(&unbiased, 2)],
                kickout: mean(kickouts[v].iter().copied()),
                kickout_defined: kickouts[v].iter().flatten().count(),
                folds_ok: evs.len(),
            }
        })
        .collect();

    Ok(SelectionReport {
        correlations: correlations(&points),
        selections: selections(&points),
        points,
        failures,
    })
}

/// Pairwise-complete Spearman correlations between [`MEASURES`].
fn correlations(points: &[VariantPoint]) -> Vec<CorrelationRow> {
    let mut rows = Vec::new();
    for a in MEASURES {
        for b in MEASURES {
            let pairs: Vec<(f64, f64)> = points
                .iter()
                .filter_map(|p| Some((p.measure(a)?, p.measure(b)?)))
                .collect();
            let (xa, xb): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let rho = if a == b && pairs.len() >= 2 {
                Some(1.0)
            } else {
                spearman(&xa, &xb)
            };
            rows.push(CorrelationRow {
                a,
                b,
                spearman: rho,
                n: pairs.len(),
            });
        }
    }
    rows
}

/// Index of the best defined value; earlier variants win ties.
fn best_by(points: &[VariantPoint], key: impl Fn(&VariantPoint) -> Option<f64>, higher: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let Some(v) = key(p) else { continue };
        let better = match best {
            None => true,
            Some((_, b)) => {
                if higher {
                    v > b
                } else {
                    v < b
                }
            }
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|b| b.0)
}

type Criterion = (&'static str, Box<dyn Fn(&VariantPoint) -> Option<f64>>, bool);

fn selections(points: &[VariantPoint]) -> Vec<SelectionRow> {
    let criteria: [Criterion; 5] = [
        ("accepts_auc", Box::new(|p| p.accepts[0]), true),
        ("accepts_bs", Box::new(|p| p.accepts[1]), false),
        ("accepts_rp", Box::new(|p| p.accepts[2]), true),
        ("kickout", Box::new(|p| p.kickout), true),
        ("unbiased_auc_oracle", Box::new(|p| p.unbiased[0]), true),
    ];
    criteria
        .iter()
        .filter_map(|(name, key, higher)| {
            let i = best_by(points, key, *higher)?;
            Some(SelectionRow {
                criterion: name,
                variant: points[i].variant.clone(),
                unbiased: points[i].unbiased,
            })
        })
        .collect()
}

impl SelectionReport {
    pub fn correlation(&self, a: &str, b: &str) -> Option<f64> {
        self.correlations
            .iter()
            .find(|r| r.a == a && r.b == b)
            .and_then(|r| r.spearman)
    }

    /// `points.csv`, `correlations.csv`, `selection.csv` and `failures.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let points: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|p| {
                let mut r = vec![p.variant.clone()];
                r.extend(p.accepts.iter().chain(&p.unbiased).map(|v| fmt_opt(*v)));
                r.push(fmt_opt(p.kickout));
                r.push(p.kickout_defined.to_string());
                r.push(p.folds_ok.to_string());
                r
            })
            .collect();
        write_rows(
            &dir.join("points.csv"),
            &[
                "variant",
                "accepts_auc",
                "accepts_bs",
                "accepts_rp",
                "unbiased_auc",
                "unbiased_bs",
                "unbiased_rp",
                "kickout",
                "kickout_defined",
                "folds_ok",
            ],
            &points,
        )?;
        let corr: Vec<Vec<String>> = self
            .correlations
            .iter()
            .map(|c| vec![c.a.into(), c.b.into(), fmt_opt(c.spearman), c.n.to_string()])
            .collect();
        write_rows(&dir.join("correlations.csv"), &["measure_a", "measure_b", "spearman", "n"], &corr)?;
        let sel: Vec<Vec<String>> = self
            .selections
            .iter()
            .map(|s| {
                let mut r = vec![s.criterion.to_string(), s.variant.clone()];
                r.extend(s.unbiased.iter().map(|v| fmt_opt(*v)));
                r
            })
            .collect();
        write_rows(
            &dir.join("selection.csv"),
            &["criterion", "variant", "unbiased_auc", "unbiased_bs", "unbiased_rp"],
            &sel,
        )?;
        let failures: Vec<Vec<String>> = self
            .failures
            .iter()
            .map(|(v, e)| vec![v.clone(), e.clone()])
            .collect();
        write_rows(&dir.join("failures.csv"), &["variant", "error"], &failures)
    }
}

pub fn select(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<SelectionReport> {
    let data = load_data(cfg)?;
    let report = run_experiment2(cfg, &data, jobs)?;
    report.write(out)?;
    write_manifest(
        out,
        "select",
        cfg,
        &data,
        serde_json::json!({
            "n_variants": report.points.len(),
            "failures": report.failures.len(),
        }),
    )?;
    Ok(report)
}
