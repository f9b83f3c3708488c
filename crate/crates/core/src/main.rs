use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rejinf::harness::{self, ExperimentConfig};
use rejinf::synthgen;

#[derive(Parser)]
#[command(name = "rejinf", version, about = "Reject inference experiments for credit scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic accepts/rejects/unbiased partition
    Synth(Common),
    /// Benchmark every strategy in the grid
    Bench(Common),
    /// Compare evaluation strategies for model selection
    Select(Common),
    /// Export score-spread and AUC-scatter diagnostics
    Diag(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn config(&self) -> rejinf::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> rejinf::Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = c.config()?;
            let Some(gen) = harness::generator_for(&cfg) else {
                return Err(rejinf::Error::Config(
                    "synth needs a synthetic data source".into(),
                ));
            };
            let (partition, stats) = synthgen::generate(&gen)?;
            synthgen::write_partition(&c.out, &partition, &gen, &stats)?;
            eprintln!(
                "accepts {} (bad rate {:.3}), rejects {} (bad rate {:.3}), unbiased {} (bad rate {:.3})",
                stats.n_accepts,
                stats.accept_bad_rate,
                stats.n_rejects,
                stats.reject_bad_rate.unwrap_or(f64::NAN),
                stats.n_unbiased,
                stats.unbiased_bad_rate
            );
        }
        Command::Bench(c) => {
            let cfg = c.config()?;
            let report = harness::bench(&cfg, &c.out, c.jobs)?;
            for s in &report.summary {
                let cell = |i: usize| s.means[i].map_or("-".into(), |v| format!("{v:.4}"));
                eprintln!(
                    "{:<80} acc AUC {} | unbiased AUC {} BS {} RP {}",
                    s.strategy,
                    cell(0),
                    cell(3),
                    cell(4),
                    cell(5)
                );
            }
            if !report.failures.is_empty() {
                eprintln!("{} strategy/fold runs failed, see failures.csv", report.failures.len());
            }
        }
        Command::Select(c) => {
            let cfg = c.config()?;
            let report = harness::select(&cfg, &c.out, c.jobs)?;
            for r in &report.correlations {
                if r.a < r.b {
                    let v = r.spearman.map_or("-".into(), |v| format!("{v:.4}"));
                    eprintln!("spearman({}, {}) = {v} (n={})", r.a, r.b, r.n);
                }
            }
        }
        Command::Diag(c) => {
            let cfg = c.config()?;
            let report = harness::diag(&cfg, &c.out, c.jobs)?;
            for s in &report.spreads {
                eprintln!("{}: P90-P10 = {:.4}", s.model, s.interdecile);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
