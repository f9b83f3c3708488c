//! Reject-inference strategies. Each takes labeled accepts and unlabeled
//! rejects and returns an augmented labeled training set.

mod benchmarks;
mod self_learning;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use benchmarks::{
    cv_voting, hard_cutoff, hard_cutoff_labels, ignore_rejects, label_all_bad, parcel_labels,
    parcelling, score_bands, vote,
};
pub use self_learning::{
    derive_thresholds, regular_self_learning, shallow_self_learning, tune_lambda,
    ShallowConfig, DEFAULT_LAMBDA_GRID,
};

use crate::data::{CreditDataset, Label};
use crate::error::{Error, Result};
use crate::learners::GbtParams;

/// A reject-inference technique with its meta-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    IgnoreRejects,
    LabelAllBad,
    HardCutoff { threshold: f64 },
    Parcelling { n_batches: usize, multiplier: f64 },
    CvVoting { n_folds: usize, threshold: f64 },
    RegularSelfLearning { percentage: f64, max_iterations: usize },
    ShallowSelfLearning(ShallowConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    IgnoreRejects,
    LabelAllBad,
    HardCutoff,
    Parcelling,
    CvVoting,
    RegularSelfLearning,
    ShallowSelfLearning,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::IgnoreRejects => "ignore_rejects",
            StrategyKind::LabelAllBad => "label_all_bad",
            StrategyKind::HardCutoff => "hard_cutoff",
            StrategyKind::Parcelling => "parcelling",
            StrategyKind::CvVoting => "cv_voting",
            StrategyKind::RegularSelfLearning => "regular_self_learning",
            StrategyKind::ShallowSelfLearning => "shallow_self_learning",
        }
    }

    pub fn is_self_learning(self) -> bool {
        matches!(
            self,
            StrategyKind::RegularSelfLearning | StrategyKind::ShallowSelfLearning
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl StrategySpec {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategySpec::IgnoreRejects => StrategyKind::IgnoreRejects,
            StrategySpec::LabelAllBad => StrategyKind::LabelAllBad,
            StrategySpec::HardCutoff { .. } => StrategyKind::HardCutoff,
            StrategySpec::Parcelling { .. } => StrategyKind::Parcelling,
            StrategySpec::CvVoting { .. } => StrategyKind::CvVoting,
            StrategySpec::RegularSelfLearning { .. } => StrategyKind::RegularSelfLearning,
            StrategySpec::ShallowSelfLearning(_) => StrategyKind::ShallowSelfLearning,
        }
    }

    /// Stable, human-readable identifier, e.g. `hard_cutoff(threshold=0.4)`.
    pub fn label(&self) -> String {
        let name = self.kind().name();
        match self {
            StrategySpec::IgnoreRejects | StrategySpec::LabelAllBad => name.to_string(),
            StrategySpec::HardCutoff { threshold } => format!("{name}(threshold={threshold})"),
            StrategySpec::Parcelling {
                n_batches,
                multiplier,
            } => format!("{name}(batches={n_batches},multiplier={multiplier})"),
            StrategySpec::CvVoting { n_folds, threshold } => {
                format!("{name}(folds={n_folds},threshold={threshold})")
            }
            StrategySpec::RegularSelfLearning {
                percentage,
                max_iterations,
            } => format!("{name}(percentage={percentage},max_iter={max_iterations})"),
            StrategySpec::ShallowSelfLearning(c) => {
                let lambda = c.lambda.map_or("tuned".to_string(), |l| l.to_string());
                format!(
                    "{name}(alpha={},theta={},filtered={},max_iter={},lambda={lambda})",
                    c.alpha,
                    c.theta,
                    c.filter.total_percentage(),
                    c.max_iterations
                )
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, what: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{what} must lie in (0,1), got {v}")))
            }
        };
        match self {
            StrategySpec::IgnoreRejects | StrategySpec::LabelAllBad => Ok(()),
            StrategySpec::HardCutoff { threshold } => unit(*threshold, "threshold"),
            StrategySpec::Parcelling {
                n_batches,
                multiplier,
            } => {
                if *n_batches < 2 {
                    return Err(Error::param("parcelling needs n_batches >= 2"));
                }
                if !(*multiplier > 0.0 && multiplier.is_finite()) {
                    return Err(Error::param("parcelling multiplier must be > 0"));
                }
                Ok(())
            }
            StrategySpec::CvVoting { n_folds, threshold } => {
                if *n_folds < 2 {
                    return Err(Error::param("cv voting needs n_folds >= 2"));
                }
                unit(*threshold, "threshold")
            }
            StrategySpec::RegularSelfLearning {
                percentage,
                max_iterations,
            } => {
                if *max_iterations < 1 {
                    return Err(Error::param("max_iterations must be >= 1"));
                }
                if !(*percentage > 0.0 && *percentage < 0.5) {
                    return Err(Error::param("percentage must lie in (0, 0.5)"));
                }
                Ok(())
            }
            StrategySpec::ShallowSelfLearning(c) => c.validate(),
        }
    }
}

/// Where a training case came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    OriginalAccept,
    InferredGood,
    InferredBad,
}

/// One labeling round of an iterative strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Labeled pool size after this round.
    pub pool_size: usize,
    /// Unlabeled rejects left after this round.
    pub remaining: usize,
    pub c_good: Option<f64>,
    pub c_bad: Option<f64>,
    pub n_good: usize,
    pub n_bad: usize,
}

#[derive(Debug, Clone)]
pub struct AugmentedTrainingSet {
    pub dataset: CreditDataset,
    pub provenance: Vec<Provenance>,
    pub iterations_used: usize,
    pub trace: Vec<IterationTrace>,
    /// Set when the strategy fell back to the accepts for a signalled reason.
    pub note: Option<String>,
}

impl AugmentedTrainingSet {
    pub(crate) fn accepts_only(accepts: &CreditDataset) -> Self {
        Self {
            dataset: accepts.clone(),
            provenance: vec![Provenance::OriginalAccept; accepts.len()],
            iterations_used: 0,
            trace: Vec::new(),
            note: None,
        }
    }

    /// Accepts followed by the chosen rejects with their inferred labels.
    pub(crate) fn from_picks(
        accepts: &CreditDataset,
        rejects: &CreditDataset,
        picks: &[(usize, Label)],
    ) -> Result<Self> {
        let idx: Vec<usize> = picks.iter().map(|p| p.0).collect();
        let labels: Vec<Label> = picks.iter().map(|p| p.1).collect();
        let inferred = rejects.select(&idx).with_labels(labels.clone())?;
        let dataset = accepts.concat(&inferred)?;
        let mut provenance = vec![Provenance::OriginalAccept; accepts.len()];
        provenance.extend(labels.iter().map(|l| {
            if l.is_bad() {
                Provenance::InferredBad
            } else {
                Provenance::InferredGood
            }
        }));
        Ok(Self {
            dataset,
            provenance,
            iterations_used: 0,
            trace: Vec::new(),
            note: None,
        })
    }

    pub fn inferred_count(&self) -> usize {
        self.provenance
            .iter()
            .filter(|p| **p != Provenance::OriginalAccept)
            .count()
    }

    pub fn count(&self, which: Provenance) -> usize {
        self.provenance.iter().filter(|p| **p == which).count()
    }

    /// Writes the per-iteration trace as CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,pool_size,remaining,c_good,c_bad,n_good,n_bad\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for t in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t.iteration,
                t.pool_size,
                t.remaining,
                opt(t.c_good),
                opt(t.c_bad),
                t.n_good,
                t.n_bad
            ));
        }
        out
    }
}

fn check_inputs(accepts: &CreditDataset, rejects: &CreditDataset) -> Result<()> {
    accepts.require_both_classes()?;
    if rejects.is_labeled() {
        return Err(Error::InvalidDataset(
            "rejects handed to a strategy must be unlabeled".into(),
        ));
    }
    if !rejects.is_empty() && rejects.n_features() != accepts.n_features() {
        return Err(Error::DimensionMismatch {
            expected: accepts.n_features(),
            actual: rejects.n_features(),
        });
    }
    let ids: HashSet<&str> = accepts.ids().iter().map(String::as_str).collect();
    if let Some(dup) = rejects.ids().iter().find(|id| ids.contains(id.as_str())) {
        return Err(Error::DuplicateId(dup.clone()));
    }
    Ok(())
}

/// Runs `spec` on `(accepts, rejects)`. `scorer` configures every boosted
/// model a strategy trains internally.
pub fn run_strategy(
    spec: &StrategySpec,
    accepts: &CreditDataset,
    rejects: &CreditDataset,
    scorer: &GbtParams,
    seed: u64,
) -> Result<AugmentedTrainingSet> {
    spec.validate()?;
    check_inputs(accepts, rejects)?;
    match spec {
        StrategySpec::IgnoreRejects => ignore_rejects(accepts, rejects),
        StrategySpec::LabelAllBad => label_all_bad(accepts, rejects),
        StrategySpec::HardCutoff { threshold } => {
            hard_cutoff(accepts, rejects, *threshold, scorer, seed)
        }
        StrategySpec::Parcelling {
            n_batches,
            multiplier,
        } => parcelling(accepts, rejects, *n_batches, *multiplier, scorer, seed),
        StrategySpec::CvVoting { n_folds, threshold } => {
            cv_voting(accepts, rejects, *n_folds, *threshold, scorer, seed)
        }
        StrategySpec::RegularSelfLearning {
            percentage,
            max_iterations,
        } => regular_self_learning(accepts, rejects, *percentage, *max_iterations, scorer, seed),
        StrategySpec::ShallowSelfLearning(cfg) => shallow_self_learning(accepts, rejects, cfg, seed),
    }
}
