mod bundle;
mod config;
mod plots;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{read_config, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fin", version, about = "Trap-measure experiments on resistance spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scaling exponents of a space and trap index.
    Exponents(Flags),
    /// Ball-volume envelopes of an environment ensemble.
    Volume(Flags),
    /// Samples of the stable subordinator against its exact law.
    Subordinator(Flags),
    /// Quenched and annealed heat kernels.
    Heatkernel(Flags),
    /// Small-time hitting tails.
    Exit(Flags),
    /// Plots and summary of a finished bundle.
    Report(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Experiment, Flags) {
        match self {
            Self::Exponents(f) => (Experiment::Exponents, f),
            Self::Volume(f) => (Experiment::Volume, f),
            Self::Subordinator(f) => (Experiment::Subordinator, f),
            Self::Heatkernel(f) => (Experiment::Heatkernel, f),
            Self::Exit(f) => (Experiment::Exit, f),
            Self::Report(f) => (Experiment::Report, f),
        }
    }
}

fn load(experiment: Experiment, flags: &Flags) -> Result<ExperimentConfig, String> {
    let mut cfg = read_config(&flags.config).map_err(|e| e.to_string())?;
    if cfg.experiment != experiment {
        return Err(format!(
            "config {} is for experiment {}, not {experiment}",
            flags.config.display(),
            cfg.experiment
        ));
    }
    if flags.seed.is_some() {
        cfg.seed = flags.seed;
    }
    if flags.workers.is_some() {
        cfg.workers = flags.workers;
    }
    if flags.out.is_some() {
        cfg.output_dir = flags.out.clone();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let (experiment, flags) = Cli::parse().command.split();
    let cfg = match load(experiment, &flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("fin: {e}");
            return ExitCode::from(2);
        }
    };
    if experiment == Experiment::Report {
        let source = cfg.source.clone().expect("validated");
        let out = cfg.output_dir.clone().unwrap_or_else(|| source.join("report"));
        if out == source {
            eprintln!("fin: report output must differ from its source bundle");
            return ExitCode::from(2);
        }
        return match report::run_report(&source, &out, &cfg) {
            Ok(_) => {
                println!("report written to {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("fin: {e}");
                ExitCode::FAILURE
            }
        };
    }
    let runner = run::Runner::new(cfg);
    match runner.run() {
        Ok(m) if m.status == "ok" => {
            println!("{} bundle written to {} ({} files)", m.experiment, runner.out.display(), m.files.len());
            ExitCode::SUCCESS
        }
        Ok(m) => {
            let failed = m.tasks.iter().filter(|t| t.status != "ok").count();
            eprintln!(
                "fin: {failed} of {} tasks failed; partial results in {}",
                m.tasks.len(),
                runner.out.display()
            );
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("fin: {e}");
            ExitCode::FAILURE
        }
    }
}
