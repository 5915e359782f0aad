use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nss_core::bounds::{BoundSet, LevelPair};
use nss_lab::{run_config, ExperimentConfig, LabError};

/// Exit code for runtime and usage errors.
const EXIT_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "nss-lab", version, about = "Simulate eNSS systems and check their bounds on data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a configuration file.
    Run {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[command(flatten)]
        common: Overrides,
    },
    /// Print t_uc, t_dc, beta and the ratio bound for a level pair.
    Bounds {
        #[arg(long = "c", allow_negative_numbers = true)]
        c: f64,
        #[arg(long = "gamma-max", allow_negative_numbers = true)]
        gamma_max: f64,
        #[arg(long, allow_negative_numbers = true)]
        v1: f64,
        #[arg(long, allow_negative_numbers = true, conflicts_with = "optimal", required_unless_present = "optimal")]
        v0: Option<f64>,
        /// Use v0 at the optimal level ratio.
        #[arg(long)]
        optimal: bool,
    },
    /// Run the built-in example with default settings.
    Example {
        #[command(flatten)]
        common: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Override one setting, e.g. `--set simulation.seed=7`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set output.dir=DIR`.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, cfg: &mut ExperimentConfig) -> Result<(), LabError> {
        cfg.apply_overrides(&self.set)?;
        if let Some(dir) = self.output_dir {
            cfg.output_dir = dir;
        }
        Ok(())
    }
}

fn run_experiment(mut cfg: ExperimentConfig, common: Overrides) -> Result<u8, LabError> {
    common.apply(&mut cfg)?;
    let report = run_config(&cfg)?;
    print!("{}", nss_lab::report::summary_text(&report));
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(report.exit_code())
}

fn bounds(c: f64, gamma_max: f64, v1: f64, v0: Option<f64>) -> Result<u8, LabError> {
    let levels = match v0 {
        Some(v0) => LevelPair::new(v0, v1, c, gamma_max),
        None => LevelPair::optimal(v1, c, gamma_max),
    }
    .map_err(|source| LabError::Stage { stage: "levels", source })?;
    let set = BoundSet::new(levels);
    println!("v0 = {}", levels.v0);
    println!("v1 = {}", levels.v1);
    println!("t_uc = {}", set.t_uc);
    println!("t_dc = {}", set.t_dc);
    println!("beta = {}", set.beta);
    println!("beta_star = {}", set.beta_star);
    println!("ratio_bound = {}", set.ratio_bound);
    println!("optimal_ratio = {}", set.optimal_ratio());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run { config, common } => {
            ExperimentConfig::load(&config, &[]).and_then(|cfg| run_experiment(cfg, common))
        }
        Command::Bounds { c, gamma_max, v1, v0, optimal: _ } => bounds(c, gamma_max, v1, v0),
        Command::Example { common } => run_experiment(ExperimentConfig::default(), common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("nss-lab: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
