use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stgc_cli::config::PipelineConfig;
use stgc_cli::pipeline;
use stgc_core::Error;

#[derive(Parser)]
#[command(
    name = "stgc",
    version,
    about = "Spatio-temporal graph classification for irregular multivariate time series",
    long_about = "Pipeline: synth -> graph -> train -> eval -> explain. \
                  The graph and train commands are driven by one JSON config; \
                  identical config and seed reproduce every artifact byte for byte."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a planted class signal.
    Synth {
        /// Output dataset JSON path (the generator spec lands beside it).
        #[arg(long)]
        out: PathBuf,
        /// Generator spec JSON; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split the cohort and estimate the (spatio-temporal) graphs.
    Graph {
        #[arg(long)]
        config: PathBuf,
    },
    /// Grid search with cross-validation; writes the best checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on the held-out test set, or summarize reports.
    Eval {
        #[arg(long, required_unless_present = "summarize")]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "summarize")]
        dataset: Option<PathBuf>,
        #[arg(long, required_unless_present = "summarize")]
        split: Option<PathBuf>,
        /// Output report (or summary) JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Aggregate existing report files into mean +/- std instead.
        #[arg(long, num_args = 1.., conflicts_with_all = ["checkpoint", "dataset", "split"])]
        summarize: Option<Vec<PathBuf>>,
    },
    /// Export importance, class-frequency, and sensitivity CSVs.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Restrict importance to the split's test patients.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Near-zero band as a fraction of the largest |projection|.
        #[arg(long, default_value_t = 0.05)]
        tau_factor: f64,
    },
}

fn run(cli: Cli) -> stgc_core::Result<()> {
    match cli.command {
        Command::Synth { out, spec, seed } => pipeline::run_synth(spec.as_deref(), &out, seed),
        Command::Graph { config } => {
            let config = PipelineConfig::load(&config)?;
            pipeline::run_graph(&config).map(|_| ())
        }
        Command::Train { config } => {
            let config = PipelineConfig::load(&config)?;
            pipeline::run_train(&config).map(|_| ())
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
            out,
            summarize,
        } => match summarize {
            Some(reports) => pipeline::run_eval_summarize(&reports, &out),
            None => pipeline::run_eval(
                &checkpoint.expect("clap enforces presence"),
                &dataset.expect("clap enforces presence"),
                &split.expect("clap enforces presence"),
                &out,
            )
            .map(|_| ()),
        },
        Command::Explain {
            checkpoint,
            dataset,
            split,
            out_dir,
            tau_factor,
        } => pipeline::run_explain(
            &checkpoint,
            &dataset,
            split.as_deref(),
            &out_dir,
            tau_factor,
        )
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ Error::Config(_)) => {
            eprintln!("config error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
