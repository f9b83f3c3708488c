//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7             # master seed; every child seed derives from it
//! k_folds = 4
//! n_bootstraps = 50
//!
//! [data]
//! source = "synthetic" # or "csv"
//! [data.generator]     # any GeneratorConfig field except `seed`
//! n_population = 6000
//!
//! # source = "csv" takes paths relative to the config file:
//! # accepts = "accepts.csv"
//! # rejects = "rejects.csv"
//! # unbiased = "unbiased.csv"
//! # rejects_oracle = "rejects_labels_oracle.csv"   (optional)
//! # label_column = "label"                         (default)
//! # id_column = "id"                               (default)
//!
//! [scorer]             # GbtParams fields
//! max_trees = 500
//!
//! [kickout]
//! mu = 0.7
//! accept_split = 0.7
//! reject_split = 0.7
//! repeats = 4
//!
//! [diagnostics]
//! histogram_bins = 20
//! max_depth = [2, 3, 4, 6]
//! learning_rate = [0.05, 0.1, 0.3]
//!
//! [[strategies]]
//! kind = "hard_cutoff"
//! threshold = [0.3, 0.4, 0.5]  # arrays expand into a grid
//! ```
//!
//! Strategy parameters per kind (defaults in parentheses):
//! `ignore_rejects` and `label_all_bad` take none; `hard_cutoff`: threshold;
//! `parcelling`: multiplier, n_batches (10); `cv_voting`: n_folds,
//! threshold (0.3); `regular_self_learning`: percentage, max_iterations (5);
//! `shallow_self_learning`: alpha, theta, filtered_percentage (2),
//! max_iterations (5), lambda (tuned on the accepts when absent).
//!
//! Errors carry the line of the offending key.

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Spanned, Value};

use crate::error::{Error, Result};
use crate::filtering::FilterConfig;
use crate::learners::GbtParams;
use crate::metrics::KickoutProtocolConfig;
use crate::strategies::{ShallowConfig, StrategySpec};
use crate::synthgen::GeneratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(GeneratorConfig),
    Csv {
        accepts: PathBuf,
        rejects: PathBuf,
        unbiased: PathBuf,
        rejects_oracle: Option<PathBuf>,
        label_column: String,
        id_column: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KickoutSettings {
    pub mu: f64,
    pub accept_split: f64,
    pub reject_split: f64,
    /// Protocol repetitions with independent splits; kickout is averaged
    /// over the repetitions where it is defined.
    pub repeats: usize,
}

impl Default for KickoutSettings {
    fn default() -> Self {
        let d = KickoutProtocolConfig::default();
        Self {
            mu: d.mu,
            accept_split: d.accept_split,
            reject_split: d.reject_split,
            repeats: 4,
        }
    }
}

impl KickoutSettings {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::param("kickout repeats must be >= 1"));
        }
        self.protocol(&GbtParams::default(), 0).validate()
    }

    pub fn protocol(&self, scorer: &GbtParams, seed: u64) -> KickoutProtocolConfig {
        KickoutProtocolConfig {
            mu: self.mu,
            accept_split: self.accept_split,
            reject_split: self.reject_split,
            scorer: scorer.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub histogram_bins: usize,
    /// Scorer grid for the accepts-versus-unbiased AUC scatter.
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            histogram_bins: 20,
            max_depth: vec![2, 3, 4, 6],
            learning_rate: vec![0.05, 0.1, 0.3],
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.histogram_bins < 1 {
            return Err(Error::param("histogram_bins must be >= 1"));
        }
        if self.max_depth.is_empty() || self.learning_rate.is_empty() {
            return Err(Error::param("diagnostics grid must not be empty"));
        }
        self.scorer_grid(&GbtParams::default())
            .iter()
            .try_for_each(GbtParams::validate)
    }

    pub fn scorer_grid(&self, base: &GbtParams) -> Vec<GbtParams> {
        let mut grid = Vec::new();
        for &max_depth in &self.max_depth {
            for &learning_rate in &self.learning_rate {
                grid.push(GbtParams {
                    max_depth,
                    learning_rate,
                    ..base.clone()
                });
            }
        }
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub k_folds: usize,
    pub n_bootstraps: usize,
    pub data: DataSource,
    pub scorer: GbtParams,
    pub kickout: KickoutSettings,
    pub diagnostics: DiagnosticsConfig,
    pub strategies: Vec<StrategySpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k_folds: 4,
            n_bootstraps: 50,
            data: DataSource::Synthetic(GeneratorConfig::default()),
            scorer: GbtParams::default(),
            kickout: KickoutSettings::default(),
            diagnostics: DiagnosticsConfig::default(),
            strategies: default_grid(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::Config("k_folds must be >= 2".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategy grid is empty".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.strategies {
            s.validate()?;
            if !seen.insert(s.label()) {
                return Err(Error::Config(format!("duplicate strategy {}", s.label())));
            }
        }
        self.scorer.validate()?;
        self.kickout.validate()?;
        self.diagnostics.validate()?;
        if let DataSource::Synthetic(g) = &self.data {
            g.validate()?;
        }
        Ok(())
    }

    /// Self-learning variants of the grid, in grid order.
    pub fn self_learning_variants(&self) -> Vec<StrategySpec> {
        self.strategies
            .iter()
            .filter(|s| s.kind().is_self_learning())
            .cloned()
            .collect()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        parse(&src, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}:{msg}", path.display())),
            other => other,
        })
    }

    /// Parses a TOML document; relative CSV paths stay relative.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        parse(src, Path::new(""))
    }
}

/// Every concrete run of the benchmark grid: ignore, label-all-bad, three
/// cutoffs, three parcelling multipliers, three voting fold counts, three
/// self-learning percentages and 2 x 3 x 2 shallow variants.
pub fn default_grid() -> Vec<StrategySpec> {
    let mut grid = vec![StrategySpec::IgnoreRejects, StrategySpec::LabelAllBad];
    for threshold in [0.3, 0.4, 0.5] {
        grid.push(StrategySpec::HardCutoff { threshold });
    }
    for multiplier in [1.0, 2.0, 3.0] {
        grid.push(StrategySpec::Parcelling {
            n_batches: 10,
            multiplier,
        });
    }
    for n_folds in [2, 5, 10] {
        grid.push(StrategySpec::CvVoting {
            n_folds,
            threshold: 0.3,
        });
    }
    for percentage in [0.01, 0.02, 0.03] {
        grid.push(StrategySpec::RegularSelfLearning {
            percentage,
            max_iterations: 5,
        });
    }
    grid.extend(shallow_grid());
    grid
}

/// The 12 shallow self-learning variants: theta in {1, 2}, alpha in
/// {0.01, 0.02, 0.03}, filtered percentage in {0, 2}.
pub fn shallow_grid() -> Vec<StrategySpec> {
    let mut grid = Vec::new();
    for theta in [1.0, 2.0] {
        for alpha in [0.01, 0.02, 0.03] {
            for filtered in [0.0, 2.0] {
                grid.push(StrategySpec::ShallowSelfLearning(ShallowConfig {
                    alpha,
                    theta,
                    filter: FilterConfig::symmetric(filtered),
                    ..ShallowConfig::default()
                }));
            }
        }
    }
    grid
}

type RawStrategy = BTreeMap<String, Spanned<Value>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    k_folds: Option<Spanned<usize>>,
    n_bootstraps: Option<usize>,
    data: Option<Spanned<RawData>>,
    scorer: Option<Spanned<GbtParams>>,
    kickout: Option<Spanned<KickoutSettings>>,
    diagnostics: Option<Spanned<DiagnosticsConfig>>,
    strategies: Option<Spanned<Vec<RawStrategy>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    source: Spanned<String>,
    generator: Option<Spanned<GeneratorConfig>>,
    accepts: Option<String>,
    rejects: Option<String>,
    unbiased: Option<String>,
    rejects_oracle: Option<String>,
    label_column: Option<String>,
    id_column: Option<String>,
}

fn line_of(src: &str, span: Range<usize>) -> usize {
    let end = span.start.min(src.len());
    src[..end].bytes().filter(|&b| b == b'\n').count() + 1
}

fn at(src: &str, span: Range<usize>, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {}: {msg}", line_of(src, span)))
}

fn check<T>(src: &str, spanned: &Spanned<T>, f: impl FnOnce(&T) -> Result<()>) -> Result<()> {
    f(spanned.get_ref()).map_err(|e| at(src, spanned.span(), e))
}

fn parse(src: &str, base: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| match e.span() {
        Some(span) => at(src, span, e.message()),
        None => Error::Config(e.message().to_string()),
    })?;
    let mut cfg = ExperimentConfig {
        seed: raw.seed,
        ..ExperimentConfig::default()
    };
    if let Some(k) = raw.k_folds {
        if *k.get_ref() < 2 {
            return Err(at(src, k.span(), "k_folds must be >= 2"));
        }
        cfg.k_folds = k.into_inner();
    }
    if let Some(b) = raw.n_bootstraps {
        cfg.n_bootstraps = b;
    }
    if let Some(s) = raw.scorer {
        check(src, &s, GbtParams::validate)?;
        cfg.scorer = s.into_inner();
    }
    if let Some(k) = raw.kickout {
        check(src, &k, KickoutSettings::validate)?;
        cfg.kickout = k.into_inner();
    }
    if let Some(d) = raw.diagnostics {
        check(src, &d, DiagnosticsConfig::validate)?;
        cfg.diagnostics = d.into_inner();
    }
    if let Some(d) = raw.data {
        cfg.data = data_source(src, d, base)?;
    }
    if let Some(list) = raw.strategies {
        let span = list.span();
        let mut grid = Vec::new();
        for entry in list.into_inner() {
            grid.extend(expand_entry(src, &entry, span.clone())?);
        }
        if grid.is_empty() {
            return Err(at(src, span, "strategy grid is empty"));
        }
        let mut seen = HashSet::new();
        for s in &grid {
            if !seen.insert(s.label()) {
                return Err(at(src, span.clone(), format!("duplicate strategy {}", s.label())));
            }
        }
        cfg.strategies = grid;
    }
    Ok(cfg)
}

fn data_source(src: &str, d: Spanned<RawData>, base: &Path) -> Result<DataSource> {
    let span = d.span();
    let d = d.into_inner();
    match d.source.get_ref().as_str() {
        "synthetic" => {
            let g = match d.generator {
                Some(g) => {
                    check(src, &g, GeneratorConfig::validate)?;
                    g.into_inner()
                }
                None => GeneratorConfig::default(),
            };
            Ok(DataSource::Synthetic(g))
        }
        "csv" => {
            let path = |p: Option<String>, what: &str| {
                p.map(|p| base.join(p))
                    .ok_or_else(|| at(src, span.clone(), format!("csv source needs `{what}`")))
            };
            Ok(DataSource::Csv {
                accepts: path(d.accepts, "accepts")?,
                rejects: path(d.rejects, "rejects")?,
                unbiased: path(d.unbiased, "unbiased")?,
                rejects_oracle: d.rejects_oracle.map(|p| base.join(p)),
                label_column: d.label_column.unwrap_or_else(|| "label".into()),
                id_column: d.id_column.unwrap_or_else(|| "id".into()),
            })
        }
        other => Err(at(
            src,
            d.source.span(),
            format!("unknown data source '{other}' (expected synthetic or csv)"),
        )),
    }
}

/// Parameter names per kind, in grid expansion order, with defaults.
fn schema(kind: &str) -> Option<&'static [(&'static str, Option<f64>)]> {
    Some(match kind {
        "ignore_rejects" | "label_all_bad" => &[],
        "hard_cutoff" => &[("threshold", None)],
        "parcelling" => &[("n_batches", Some(10.0)), ("multiplier", None)],
        "cv_voting" => &[("n_folds", None), ("threshold", Some(0.3))],
        "regular_self_learning" => &[("percentage", None), ("max_iterations", Some(5.0))],
        "shallow_self_learning" => &[
            ("theta", None),
            ("alpha", None),
            ("filtered_percentage", Some(2.0)),
            ("max_iterations", Some(5.0)),
            ("lambda", Some(f64::NAN)),
        ],
        _ => return None,
    })
}

fn scalar(src: &str, v: &Value, span: Range<usize>, key: &str) -> Result<f64> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(f) => Ok(*f),
        _ => Err(at(src, span, format!("`{key}` must be a number or an array of numbers"))),
    }
}

fn count(src: &str, v: f64, span: Range<usize>, key: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(at(src, span, format!("`{key}` must be a non-negative integer, got {v}")))
    }
}

fn expand_entry(
    src: &str,
    entry: &BTreeMap<String, Spanned<Value>>,
    list_span: Range<usize>,
) -> Result<Vec<StrategySpec>> {
    let kind_v = entry
        .get("kind")
        .ok_or_else(|| at(src, list_span.clone(), "strategy entry without `kind`"))?;
    let kind = kind_v
        .get_ref()
        .as_str()
        .ok_or_else(|| at(src, kind_v.span(), "`kind` must be a string"))?;
    let params = schema(kind).ok_or_else(|| at(src, kind_v.span(), format!("unknown strategy kind '{kind}'")))?;
    for (key, v) in entry {
        if key != "kind" && !params.iter().any(|(p, _)| p == key) {
            return Err(at(src, v.span(), format!("unknown parameter `{key}` for {kind}")));
        }
    }

    // candidate values per parameter, each with the span to blame
    let mut axes: Vec<Vec<(f64, Range<usize>)>> = Vec::new();
    for (key, default) in params {
        let values = match entry.get(*key) {
            Some(v) => {
                let span = v.span();
                match v.get_ref() {
                    Value::Array(items) if items.is_empty() => {
                        return Err(at(src, span, format!("`{key}` grid is empty")))
                    }
                    Value::Array(items) => items
                        .iter()
                        .map(|it| Ok((scalar(src, it, span.clone(), key)?, span.clone())))
                        .collect::<Result<Vec<_>>>()?,
                    other => vec![(scalar(src, other, span.clone(), key)?, span)],
                }
            }
            None => match default {
                Some(d) => vec![(*d, kind_v.span())],
                None => return Err(at(src, kind_v.span(), format!("{kind} needs `{key}`"))),
            },
        };
        axes.push(values);
    }

    let mut combos: Vec<Vec<(f64, Range<usize>)>> = vec![Vec::new()];
    for axis in &axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                axis.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }

    combos
        .into_iter()
        .map(|c| {
            let blame = c.last().map_or(kind_v.span(), |v| v.1.clone());
            let spec = build_spec(src, kind, &c)?;
            spec.validate().map_err(|e| at(src, blame, e))?;
            Ok(spec)
        })
        .collect()
}

fn build_spec(src: &str, kind: &str, v: &[(f64, Range<usize>)]) -> Result<StrategySpec> {
    let n = |i: usize, key: &str| count(src, v[i].0, v[i].1.clone(), key);
    Ok(match kind {
        "ignore_rejects" => StrategySpec::IgnoreRejects,
        "label_all_bad" => StrategySpec::LabelAllBad,
        "hard_cutoff" => StrategySpec::HardCutoff { threshold: v[0].0 },
        "parcelling" => StrategySpec::Parcelling {
            n_batches: n(0, "n_batches")?,
            multiplier: v[1].0,
        },
        "cv_voting" => StrategySpec::CvVoting {
            n_folds: n(0, "n_folds")?,
            threshold: v[1].0,
        },
        "regular_self_learning" => StrategySpec::RegularSelfLearning {
            percentage: v[0].0,
            max_iterations: n(1, "max_iterations")?,
        },
        "shallow_self_learning" => {
            let filtered = v[2].0;
            if !(0.0..100.0).contains(&filtered) {
                return Err(at(src, v[2].1.clone(), "filtered_percentage must lie in [0, 100)"));
            }
            StrategySpec::ShallowSelfLearning(ShallowConfig {
                theta: v[0].0,
                alpha: v[1].0,
                filter: FilterConfig::symmetric(filtered),
                max_iterations: n(3, "max_iterations")?,
                lambda: (!v[4].0.is_nan()).then_some(v[4].0),
            })
        }
        _ => unreachable!("kind checked against schema"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL_GRID: &str = r#"
seed = 3
[[strategies]]
kind = "ignore_rejects"
[[strategies]]
kind = "label_all_bad"
[[strategies]]
kind = "hard_cutoff"
threshold = [0.3, 0.4, 0.5]
[[strategies]]
kind = "parcelling"
multiplier = [1, 2, 3]
n_batches = 10
[[strategies]]
kind = "cv_voting"
n_folds = [2, 5, 10]
threshold = 0.3
[[strategies]]
kind = "regular_self_learning"
percentage = [0.01, 0.02, 0.03]
max_iterations = 5
[[strategies]]
kind = "shallow_self_learning"
theta = [1, 2]
alpha = [0.01, 0.02, 0.03]
filtered_percentage = [0, 2]
max_iterations = 5
"#;

    #[test]
    fn full_grid_enumerates_26_runs() {
        let cfg = ExperimentConfig::from_toml_str(FULL_GRID).unwrap();
        assert_eq!(cfg.strategies.len(), 26);
        assert_eq!(cfg.strategies, default_grid());
        assert_eq!(cfg.self_learning_variants().len(), 15);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.k_folds, 4);
        assert_eq!(cfg.n_bootstraps, 50);
    }

    #[test]
    fn minimal_grid() {
        let cfg = ExperimentConfig::from_toml_str("[[strategies]]\nkind = \"ignore_rejects\"\n").unwrap();
        assert_eq!(cfg.strategies, vec![StrategySpec::IgnoreRejects]);
        cfg.validate().unwrap();
    }

    fn err_line(src: &str) -> String {
        ExperimentConfig::from_toml_str(src).unwrap_err().to_string()
    }

    #[test]
    fn errors_name_the_line() {
        let e = err_line("seed = 1\n\n[[strategies]]\nkind = \"hard_cutoff\"\nthreshold = [0.3, 1.5]\n");
        assert!(e.contains("line 5"), "{e}");
        let e = err_line("seed = 1\nk_folds = 1\n");
        assert!(e.contains("line 2"), "{e}");
        let e = err_line("seed = 1\n[[strategies]]\nkind = \"magic\"\n");
        assert!(e.contains("line 3") && e.contains("magic"), "{e}");
        let e = err_line("seed = 1\n[[strategies]]\nkind = \"cv_voting\"\nfolds = 3\n");
        assert!(e.contains("line 4") && e.contains("folds"), "{e}");
        let e = err_line("seed = 1\nbogus = 2\n");
        assert!(e.contains("line 2"), "{e}");
        let e = err_line("[scorer]\nlearning_rate = 0\n");
        assert!(e.contains("line 1"), "{e}");
        let e = err_line("[data]\nsource = \"ftp\"\n");
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn duplicates_rejected() {
        let e = err_line("[[strategies]]\nkind = \"hard_cutoff\"\nthreshold = [0.3, 0.3]\n");
        assert!(e.contains("duplicate"), "{e}");
    }

    #[test]
    fn csv_paths_resolve_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(
            &p,
            "[data]\nsource = \"csv\"\naccepts = \"a.csv\"\nrejects = \"r.csv\"\nunbiased = \"u.csv\"\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_path(&p).unwrap();
        match cfg.data {
            DataSource::Csv { accepts, .. } => assert_eq!(accepts, dir.path().join("a.csv")),
            _ => panic!("expected csv source"),
        }
    }

    #[test]
    fn generator_section_is_read() {
        let cfg = ExperimentConfig::from_toml_str(
            "[data]\nsource = \"synthetic\"\n[data.generator]\nn_population = 900\n",
        )
        .unwrap();
        match cfg.data {
            DataSource::Synthetic(g) => assert_eq!(g.n_population, 900),
            _ => panic!(),
        }
    }
}
