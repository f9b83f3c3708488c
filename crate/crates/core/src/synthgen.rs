//! Synthetic biased-lending data.
//!
//! Applicants are drawn from a two-component Gaussian mixture with AR(1)
//! correlated features. The true PD is a logistic function of a linear index
//! over the informative features plus a few pairwise interactions and
//! latent noise, with the intercept bisected so the population bad rate hits
//! a target. A legacy scorecard that only sees a subset of the informative
//! features decides who was accepted; an unbiased slice is carved off first
//! and kept whole, as if granted without scoring.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{write_csv, CreditDataset, CsvOptions, Label, PartitionedData, SealedLabels};
use crate::error::{Error, Result};
use crate::learners::{fit_l1_logistic, sigmoid, ProbabilisticModel, SolverOptions};
use crate::metrics::auc;
use crate::rng::{derive_seed, rng, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_population: usize,
    pub n_features: usize,
    pub n_informative: usize,
    /// Standard deviation of the latent noise added to the risk index.
    pub noise_scale: f64,
    /// Number of pairwise interaction terms among informative features.
    pub n_interactions: usize,
    /// Number of (leading, strongest) informative features the legacy
    /// scorecard may use.
    pub legacy_feature_subset: usize,
    /// Size of the separate sample the legacy scorecard is trained on.
    pub legacy_sample_size: usize,
    pub acceptance_rate: f64,
    pub unbiased_fraction: f64,
    /// Population-level bad rate the intercept is calibrated to.
    pub target_bad_rate: f64,
    /// Lag-one correlation of neighbouring features.
    pub correlation: f64,
    /// Set from the experiment's master seed rather than from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_population: 6000,
            n_features: 30,
            n_informative: 12,
            noise_scale: 0.5,
            n_interactions: 4,
            legacy_feature_subset: 4,
            legacy_sample_size: 2000,
            acceptance_rate: 0.66,
            unbiased_fraction: 0.05,
            target_bad_rate: 0.35,
            correlation: 0.3,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_population < 10 {
            return Err(Error::param("n_population must be >= 10"));
        }
        if self.n_features == 0 || self.n_informative == 0 {
            return Err(Error::param("need at least one (informative) feature"));
        }
        if self.n_informative > self.n_features {
            return Err(Error::param("n_informative must be <= n_features"));
        }
        if self.legacy_feature_subset == 0 || self.legacy_feature_subset > self.n_informative {
            return Err(Error::param("legacy_feature_subset must lie in 1..=n_informative"));
        }
        if self.n_interactions > 0 && self.n_informative < 2 {
            return Err(Error::param("interactions need two informative features"));
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.acceptance_rate > 0.0 && self.acceptance_rate <= 1.0) {
            return Err(Error::param("acceptance_rate must lie in (0, 1]"));
        }
        if !unit(self.unbiased_fraction) || !unit(self.target_bad_rate) {
            return Err(Error::param("unbiased_fraction and target_bad_rate must lie in (0,1)"));
        }
        let ok_noise = self.noise_scale >= 0.0 && self.noise_scale.is_finite();
        let ok_corr = self.correlation.abs() < 1.0;
        if !ok_noise || !ok_corr {
            return Err(Error::param("noise_scale must be >= 0 and |correlation| < 1"));
        }
        if self.legacy_sample_size < 10 {
            return Err(Error::param("legacy_sample_size must be >= 10"));
        }
        Ok(())
    }
}

/// The data-generating risk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub interactions: Vec<(usize, usize, f64)>,
    pub component_shift: Vec<f64>,
}

impl TruthModel {
    fn index(&self, row: &[f64]) -> f64 {
        let lin: f64 = self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum();
        let inter: f64 = self
            .interactions
            .iter()
            .map(|&(a, b, g)| g * row[a] * row[b])
            .sum();
        lin + inter
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub dataset: CreditDataset,
    pub true_pd: Vec<f64>,
    pub truth: TruthModel,
}

fn draw_truth(cfg: &GeneratorConfig, r: &mut Rng) -> TruthModel {
    let d = cfg.n_features;
    let k = cfg.n_informative;
    let mut coefficients = vec![0.0; d];
    for (j, c) in coefficients.iter_mut().take(k).enumerate() {
        // strongest first, decaying magnitudes, random signs
        let mag = 1.0 / (1.0 + 0.25 * j as f64) * r.random_range(0.8..1.2);
        *c = if r.random::<bool>() { mag } else { -mag };
    }
    let mut interactions = Vec::new();
    for _ in 0..cfg.n_interactions {
        let a = r.random_range(0..k);
        let mut b = r.random_range(0..k);
        while b == a {
            b = r.random_range(0..k);
        }
        let g = r.random_range(0.25..0.5) * if r.random::<bool>() { 1.0 } else { -1.0 };
        interactions.push((a.min(b), a.max(b), g));
    }
    let component_shift = (0..d)
        .map(|j| if j % 3 == 0 { 0.8 } else { 0.0 })
        .collect();
    TruthModel {
        intercept: 0.0,
        coefficients,
        interactions,
        component_shift,
    }
}

fn draw_features(cfg: &GeneratorConfig, truth: &TruthModel, n: usize, r: &mut Rng) -> Array2<f64> {
    let d = cfg.n_features;
    let rho = cfg.correlation;
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = Array2::<f64>::zeros((n, d));
    for mut row in x.rows_mut() {
        let second = r.random::<bool>();
        let mut prev: f64 = r.sample(StandardNormal);
        for j in 0..d {
            if j > 0 {
                let e: f64 = r.sample(StandardNormal);
                prev = rho * prev + innov * e;
            }
            let shift = if second { truth.component_shift[j] } else { -truth.component_shift[j] };
            row[j] = prev + shift * 0.5;
        }
    }
    x
}

/// Intercept such that the mean of `sigmoid(b + index)` equals `target`.
fn calibrate_intercept(index: &[f64], target: f64) -> Result<f64> {
    let mean_pd = |b: f64| index.iter().map(|z| sigmoid(b + z)).sum::<f64>() / index.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    if !(mean_pd(lo) < target && mean_pd(hi) > target) {
        return Err(Error::Calibration(format!("target rate {target} not bracketed")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_pd(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::Calibration("bisection did not converge".into()))
}

fn draw_cases(
    cfg: &GeneratorConfig,
    truth: &TruthModel,
    n: usize,
    r: &mut Rng,
) -> (Array2<f64>, Vec<f64>) {
    let x = draw_features(cfg, truth, n, r);
    let index: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| {
            let noise: f64 = r.sample(StandardNormal);
            truth.index(row.as_slice().expect("standard layout")) + cfg.noise_scale * noise
        })
        .collect();
    (x, index)
}

fn label_cases(index: &[f64], intercept: f64, r: &mut Rng) -> (Vec<f64>, Vec<Label>) {
    let pd: Vec<f64> = index.iter().map(|z| sigmoid(intercept + z)).collect();
    let labels = pd
        .iter()
        .map(|&p| Label::from_bad(r.random::<f64>() < p))
        .collect();
    (pd, labels)
}

/// Draws the labeled population and its true PDs.
pub fn generate_population(cfg: &GeneratorConfig) -> Result<Population> {
    cfg.validate()?;
    let mut r = rng(derive_seed(cfg.seed, &[0]));
    let mut truth = draw_truth(cfg, &mut r);
    let (x, index) = draw_cases(cfg, &truth, cfg.n_population, &mut r);
    truth.intercept = calibrate_intercept(&index, cfg.target_bad_rate)?;
    let (true_pd, labels) = label_cases(&index, truth.intercept, &mut r);
    let ids = (0..cfg.n_population).map(|i| format!("p{i}")).collect();
    let names = (0..cfg.n_features).map(|j| format!("f{j}")).collect();
    let dataset = CreditDataset::new(ids, names, x, Some(labels))?;
    Ok(Population {
        dataset,
        true_pd,
        truth,
    })
}

/// Realized statistics of a simulated lending history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub n_accepts: usize,
    pub n_rejects: usize,
    pub n_unbiased: usize,
    pub population_bad_rate: f64,
    pub accept_bad_rate: f64,
    /// Oracle value from the sealed reject labels.
    pub reject_bad_rate: Option<f64>,
    pub unbiased_bad_rate: f64,
    /// Legacy scorecard AUC on the unbiased sample.
    pub legacy_auc_unbiased: f64,
    /// AUC of the true PD on the unbiased sample.
    pub true_pd_auc_unbiased: f64,
}

/// Splits `population` into unbiased, accepted and rejected applicants.
pub fn simulate_acceptance(
    population: &Population,
    cfg: &GeneratorConfig,
) -> Result<(PartitionedData, AcceptanceStats)> {
    cfg.validate()?;
    let ds = &population.dataset;
    let labels = ds.require_labels()?;
    let n = ds.len();
    let mut r = rng(derive_seed(cfg.seed, &[1]));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let n_unbiased = ((cfg.unbiased_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut unbiased_idx = order[..n_unbiased].to_vec();
    let mut rest = order[n_unbiased..].to_vec();
    unbiased_idx.sort_unstable();
    rest.sort_unstable();

    // legacy scorecard on its own sample and a feature subset
    let mut lr = rng(derive_seed(cfg.seed, &[2]));
    let (lx, lindex) = draw_cases(cfg, &population.truth, cfg.legacy_sample_size, &mut lr);
    let (_, llabels) = label_cases(&lindex, population.truth.intercept, &mut lr);
    let legacy_cols: Vec<usize> = (0..cfg.legacy_feature_subset).collect();
    let lx_sub = lx.select(ndarray::Axis(1), &legacy_cols);
    let legacy = fit_l1_logistic(lx_sub.view(), &llabels, 0.01, &SolverOptions::default())?;

    let rest_x = ds.features().select(ndarray::Axis(0), &rest);
    let legacy_scores = legacy.predict_proba(rest_x.select(ndarray::Axis(1), &legacy_cols).view())?;
    let n_accept = ((cfg.acceptance_rate * rest.len() as f64).round() as usize).min(rest.len());
    let mut by_score: Vec<usize> = (0..rest.len()).collect();
    by_score.sort_by(|&a, &b| legacy_scores[a].total_cmp(&legacy_scores[b]));
    let mut accept_idx: Vec<usize> = by_score[..n_accept].iter().map(|&p| rest[p]).collect();
    let mut reject_idx: Vec<usize> = by_score[n_accept..].iter().map(|&p| rest[p]).collect();
    accept_idx.sort_unstable();
    reject_idx.sort_unstable();

    if accept_idx.is_empty() || unbiased_idx.is_empty() {
        return Err(Error::InvalidDataset("a partition came out empty".into()));
    }
    let accepts = ds.select(&accept_idx);
    let unbiased = ds.select(&unbiased_idx);
    let reject_labels: Vec<Label> = reject_idx.iter().map(|&i| labels[i]).collect();
    let rejects = ds.select(&reject_idx).without_labels();
    let oracle = SealedLabels::seal(reject_labels);

    let unbiased_labels = unbiased.require_labels()?;
    let legacy_unbiased = legacy.predict_proba(
        unbiased
            .features()
            .select(ndarray::Axis(1), &legacy_cols)
            .view(),
    )?;
    let true_unbiased: Vec<f64> = unbiased_idx.iter().map(|&i| population.true_pd[i]).collect();
    let stats = AcceptanceStats {
        n_accepts: accepts.len(),
        n_rejects: rejects.len(),
        n_unbiased: unbiased.len(),
        population_bad_rate: ds.bad_rate().unwrap_or(0.0),
        accept_bad_rate: accepts.bad_rate().unwrap_or(0.0),
        reject_bad_rate: oracle.bad_rate(),
        unbiased_bad_rate: unbiased.bad_rate().unwrap_or(0.0),
        legacy_auc_unbiased: auc(unbiased_labels, &legacy_unbiased).unwrap_or(f64::NAN),
        true_pd_auc_unbiased: auc(unbiased_labels, &true_unbiased).unwrap_or(f64::NAN),
    };
    let partition = PartitionedData::with_oracle(accepts, rejects, unbiased, Some(oracle))?;
    Ok((partition, stats))
}

/// Population plus acceptance simulation in one call.
pub fn generate(cfg: &GeneratorConfig) -> Result<(PartitionedData, AcceptanceStats)> {
    let population = generate_population(cfg)?;
    simulate_acceptance(&population, cfg)
}

/// Column layout shared by generated files and [`crate::data::load_csv`].
pub fn csv_options() -> CsvOptions {
    CsvOptions::labeled("label").with_id_column("id")
}

/// Writes `accepts.csv`, `rejects.csv`, `rejects_labels_oracle.csv`,
/// `unbiased.csv` and `manifest.json` into `dir`.
pub fn write_partition(
    dir: &Path,
    partition: &PartitionedData,
    cfg: &GeneratorConfig,
    stats: &AcceptanceStats,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let opts = csv_options();
    write_csv(&partition.accepts, dir.join("accepts.csv"), &opts)?;
    write_csv(&partition.rejects, dir.join("rejects.csv"), &opts)?;
    write_csv(&partition.unbiased, dir.join("unbiased.csv"), &opts)?;
    if let Some(oracle) = partition.reject_oracle() {
        let path = dir.join("rejects_labels_oracle.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["id", "label"])?;
        for (id, l) in partition.rejects.ids().iter().zip(oracle.reveal()) {
            w.write_record([id.as_str(), if l.is_bad() { "1" } else { "0" }])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        seed: u64,
        generator: &'a GeneratorConfig,
        stats: &'a AcceptanceStats,
    }
    let json = serde_json::to_string_pretty(&Manifest {
        seed: cfg.seed,
        generator: cfg,
        stats,
    })?;
    crate::data::write_text(&dir.join("manifest.json"), &json)
}
