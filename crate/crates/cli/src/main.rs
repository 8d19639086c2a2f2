//! `ptm-energy`: score pAE logit tensors, report gradient sparsity, run toy
//! binder designs, screen candidate sets and apply folding filters.
//!
//! Exit codes: 0 success, 1 invalid input, 2 I/O failure, 3 internal
//! invariant violation.

mod commands;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "ptm-energy", version, about = "Confidence metrics and pTMEnergy tooling for pAE logits")]
struct Cli {
    /// Emit machine-readable JSON on stdout (and errors as JSON on stderr).
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct TensorInputs {
    /// `(L, L, B)` pAE logits as NPY (`<f4` or `<f8`).
    #[arg(long)]
    pub logits: PathBuf,
    /// Chain map TOML.
    #[arg(long)]
    pub chains: PathBuf,
    /// 1-D NPY of bin centers in Angstrom; defaults to 64 bins of 0.5.
    #[arg(long, env = "PTMENERGY_BINS")]
    pub bins: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoreMetric {
    All,
    Ptm,
    Iptm,
    IptmMean,
    PtmEnergy,
    Ipae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GradObjective {
    PtmEnergy,
    Iptm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DesignObjective {
    PtmEnergy,
    Iptm,
    IptmMean,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RankMetric {
    PtmEnergy,
    Iptm,
    IptmMean,
}

#[derive(Subcommand)]
enum Command {
    /// Compute confidence metrics for one complex.
    Score {
        #[command(flatten)]
        inputs: TensorInputs,
        #[arg(long, value_enum, default_value = "all")]
        metric: ScoreMetric,
        /// Per-residue pLDDT in [0, 1] as 1-D NPY; adds `plddt_mean`.
        #[arg(long)]
        plddt: Option<PathBuf>,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient of an objective with respect to the logits: heatmap CSV and
    /// summary.
    GradReport {
        #[command(flatten)]
        inputs: TensorInputs,
        #[arg(long, value_enum)]
        objective: GradObjective,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Compare against central finite differences; exit 3 above 1e-5.
        #[arg(long)]
        check_fd: bool,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run toy-predictor binder design trajectories.
    Design {
        /// Design config TOML; missing keys take their defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        objective: Option<DesignObjective>,
        /// Number of trajectories, seeded `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        batch: usize,
        /// Worker threads for batch runs; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Gradient-sparsity top-k recorded alongside each trajectory.
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Rank candidates and compute AUPRC and precision@k.
    Screen {
        /// CSV with columns candidate_id,label,logits_path,score.
        #[arg(long)]
        table: PathBuf,
        #[arg(long, value_enum)]
        metric: RankMetric,
        /// Chain map used when a logits file has no `<stem>.chains.toml`.
        #[arg(long)]
        chains: Option<PathBuf>,
        #[arg(long, env = "PTMENERGY_BINS")]
        bins: Option<PathBuf>,
        /// Comma-separated cutoffs; without the flag 5,10,50 are reported
        /// where the table is large enough.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the folding-model acceptance filters to a metrics report.
    Filter {
        /// MetricsReport JSON; `-` or omitted reads stdin.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Replace a threshold, e.g. `plddt_min=0.7`. Not for comparisons
        /// against published filter settings.
        #[arg(long = "override", value_name = "NAME=VALUE")]
        overrides: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let json = cli.json;
    match cli.command {
        Command::Score {
            inputs,
            metric,
            plddt,
            out,
        } => commands::score(&inputs, metric, plddt.as_deref(), out.as_deref(), json),
        Command::GradReport {
            inputs,
            objective,
            k,
            check_fd,
            epsilon,
            out,
        } => commands::grad_report(&inputs, objective, k, check_fd.then_some(epsilon), &out, json),
        Command::Design {
            config,
            out,
            objective,
            batch,
            jobs,
            seed,
            k,
        } => commands::design(&config, &out, objective, batch, jobs, seed, k, json),
        Command::Screen {
            table,
            metric,
            chains,
            bins,
            k,
            out,
        } => commands::screen(&table, metric, chains, bins.as_deref(), k, &out, json),
        Command::Filter { metrics, overrides } => commands::filter(metrics.as_deref(), &overrides, json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                eprintln!("{}", serde_json::json!({ "error": e }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.category.exit_code())
        }
    }
}
