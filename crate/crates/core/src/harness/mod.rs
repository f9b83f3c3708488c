//! Experiment orchestration: the strategy benchmark, evaluation-strategy
//! comparison, diagnostics and the on-disk report layout.

mod config;
mod diagnostics;
mod experiment1;
mod experiment2;

use std::path::Path;

use serde::Serialize;

pub use config::{
    shallow_grid, default_grid, DataSource, DiagnosticsConfig, ExperimentConfig, KickoutSettings,
};
pub use diagnostics::{
    export_diagnostics, histogram, interdecile_range, quantile, DiagnosticsReport, ScatterPoint,
    ScoreSpread,
};
pub use diagnostics::{diag, score_spreads};
pub use experiment1::{
    bench, run_experiment1, EvaluationReport, Failure, FoldInfo, FriedmanRow, MetricRow,
    SummaryRow, METRICS,
};
pub use experiment2::{
    run_experiment2, select, CorrelationRow, SelectionReport, SelectionRow, VariantPoint, MEASURES,
};

use crate::data::{load_csv, CsvOptions, PartitionedData, SealedLabels};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::synthgen::{self, AcceptanceStats, GeneratorConfig};

// seed salts, one per consumer of the master seed
pub(crate) const SALT_DATA: u64 = 1;
pub(crate) const SALT_FOLDS: u64 = 2;
pub(crate) const SALT_BOOTSTRAP: u64 = 3;
pub(crate) const SALT_STRATEGY: u64 = 4;
pub(crate) const SALT_SCORER: u64 = 5;
pub(crate) const SALT_KICKOUT: u64 = 6;
pub(crate) const SALT_DIAG: u64 = 7;

/// Partitioned data plus generator statistics when synthetic.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub partition: PartitionedData,
    pub generator: Option<(GeneratorConfig, AcceptanceStats)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub n_accepts: usize,
    pub n_rejects: usize,
    pub n_unbiased: usize,
    pub n_features: usize,
    pub accept_bad_rate: Option<f64>,
    pub unbiased_bad_rate: Option<f64>,
    pub generator: Option<AcceptanceStats>,
}

impl LoadedData {
    pub fn summary(&self) -> DataSummary {
        let p = &self.partition;
        DataSummary {
            n_accepts: p.accepts.len(),
            n_rejects: p.rejects.len(),
            n_unbiased: p.unbiased.len(),
            n_features: p.accepts.n_features(),
            accept_bad_rate: p.accepts.bad_rate(),
            unbiased_bad_rate: p.unbiased.bad_rate(),
            generator: self.generator.as_ref().map(|g| g.1.clone()),
        }
    }
}

/// Generator configuration with the seed derived from the master seed.
pub fn generator_for(cfg: &ExperimentConfig) -> Option<GeneratorConfig> {
    match &cfg.data {
        DataSource::Synthetic(g) => Some(GeneratorConfig {
            seed: derive_seed(cfg.seed, &[SALT_DATA]),
            ..g.clone()
        }),
        DataSource::Csv { .. } => None,
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    match &cfg.data {
        DataSource::Synthetic(_) => {
            let g = generator_for(cfg).expect("synthetic source");
            let (partition, stats) = synthgen::generate(&g)?;
            Ok(LoadedData {
                partition,
                generator: Some((g, stats)),
            })
        }
        DataSource::Csv {
            accepts,
            rejects,
            unbiased,
            rejects_oracle,
            label_column,
            id_column,
        } => {
            let labeled = CsvOptions::labeled(label_column).with_id_column(id_column);
            let unlabeled = CsvOptions {
                label_column: None,
                ..labeled.clone()
            };
            let a = load_csv(accepts, &labeled)?;
            let r = load_csv(rejects, &unlabeled)?;
            let u = load_csv(unbiased, &labeled)?;
            let oracle = match rejects_oracle {
                Some(path) => Some(read_oracle(path, &r, &labeled)?),
                None => None,
            };
            Ok(LoadedData {
                partition: PartitionedData::with_oracle(a, r, u, oracle)?,
                generator: None,
            })
        }
    }
}

/// Sealed reject labels from an `id,label` file, aligned to `rejects`.
fn read_oracle(
    path: &Path,
    rejects: &crate::data::CreditDataset,
    opts: &CsvOptions,
) -> Result<SealedLabels> {
    let ds = load_csv(path, opts)?;
    let by_id: std::collections::HashMap<&str, crate::data::Label> = ds
        .ids()
        .iter()
        .map(String::as_str)
        .zip(ds.require_labels()?.iter().copied())
        .collect();
    let labels = rejects
        .ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidDataset(format!("no oracle label for reject '{id}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SealedLabels::seal(labels))
}

/// Runs `f` inside a pool of `jobs` worker threads (0 means all cores).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    data: DataSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<&'a GeneratorConfig>,
    extra: serde_json::Value,
}

pub(crate) fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    data: &LoadedData,
    extra: serde_json::Value,
) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
        data: data.summary(),
        generator: data.generator.as_ref().map(|g| &g.0),
        extra,
    };
    let json = serde_json::to_string_pretty(&m)?;
    crate::data::write_text(&dir.join("manifest.json"), &(json + "\n"))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes rows of already formatted cells.
pub(crate) fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn fmt(v: f64) -> String {
    crate::data::format_f64(v)
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}
