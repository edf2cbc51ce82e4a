use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pgdl_cli::{
    cmd_compare, cmd_evaluate, cmd_generate_data, cmd_reconstruct, cmd_train, CliError, ExperimentConfig, Method,
};

#[derive(Parser)]
#[command(name = "pgdl", version, about = "Unrolled physics-guided MR reconstruction with multi-mask training")]
struct Cli {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the unrolled network on a dataset's training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of disjoint loss/data-consistency mask pairs per slice.
        #[arg(long)]
        k: Option<usize>,
        /// Continue from `<out>/checkpoint.bin`.
        #[arg(long)]
        resume: bool,
    },
    /// Reconstruct every test slice.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        /// unrolled, cg-sense, zero-filled or reference.
        #[arg(long)]
        method: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Name used in reports.
        #[arg(long)]
        label: Option<String>,
    },
    /// Score reconstructions against the ground truth.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Reconstruction directories.
        #[arg(long = "recon", required = true)]
        recon: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, train one model per K, reconstruct and evaluate.
    Compare {
        /// Defaults to `eval.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated K values; defaults to `eval.compare_k`.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = || ExperimentConfig::load(cli.config.as_deref(), &cli.overrides);
    match &cli.command {
        Command::GenerateData { out } => {
            let ds = cmd_generate_data(&cfg()?, out)?;
            println!("wrote {} slices to {}", ds.manifest.slices.len(), ds.dir.display());
        }
        Command::Train { data, out, k, resume } => {
            let ck = cmd_train(&cfg()?, data, out, *k, *resume)?;
            println!("trained {} steps ({} epochs)", ck.state.step, ck.state.epoch);
        }
        Command::Reconstruct { data, method, checkpoint, out, label } => {
            let m = cmd_reconstruct(&cfg()?, data, Method::parse(method)?, checkpoint.as_deref(), out, label.as_deref())?;
            println!("reconstructed {} slices ({})", m.slices.len(), m.label);
        }
        Command::Evaluate { data, recon, out } => {
            print!("{}", cmd_evaluate(data, recon, out)?.report.to_table());
        }
        Command::Compare { out, k } => {
            let cfg = cfg()?;
            let out = out.clone().unwrap_or_else(|| PathBuf::from(&cfg.eval.output_dir));
            print!("{}", cmd_compare(&cfg, &out, k.as_deref())?.report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
