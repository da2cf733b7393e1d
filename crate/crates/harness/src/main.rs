use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use harness::plot::{emit_plot_data, PlotKind};
use harness::{demo_config, report, run_experiment, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "harness", version, about = "Exposure strategy comparisons on simulated driving scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Keep only the named strategies (repeatable).
        #[arg(long)]
        strategy: Vec<String>,
    },
    /// Derive plot-ready CSV from a finished report directory.
    PlotData {
        #[arg(value_enum)]
        kind: Kind,
        /// Report directory written by `run` or `demo`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and check a config, including its scenario files.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the four built-in demo scenarios.
    Demo {
        #[arg(long, default_value = "demo-results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strategy: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Cdf,
    Timeseries,
    Spectrogram,
}

impl From<Kind> for PlotKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Cdf => PlotKind::Cdf,
            Kind::Timeseries => PlotKind::Timeseries,
            Kind::Spectrogram => PlotKind::Spectrogram,
        }
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, seed: Option<u64>, strategies: &[String]) -> Result<()> {
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.filter_strategies(strategies)
}

fn run_and_print(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<()> {
    let summary = run_experiment(cfg, out)?;
    print!("{}", report::format_table(&summary));
    println!("report written to {}", out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, seed, strategy } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            apply_overrides(&mut cfg, seed, &strategy)?;
            let out = out.unwrap_or_else(|| cfg.resolved_output_dir());
            run_and_print(&cfg, &out)
        }
        Command::Demo { out, seed, strategy } => {
            let mut cfg = demo_config();
            apply_overrides(&mut cfg, seed, &strategy)?;
            run_and_print(&cfg, &out)
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            cfg.validate()?;
            let scenarios = cfg.load_scenarios()?;
            println!(
                "ok: {} scenario(s) x {} strategy(ies) x {} seed(s)",
                scenarios.len(),
                cfg.strategies.len(),
                cfg.seeds.len()
            );
            Ok(())
        }
        Command::PlotData { kind, out } => {
            for path in emit_plot_data(&out, kind.into())? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
