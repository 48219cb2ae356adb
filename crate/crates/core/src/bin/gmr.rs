use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use gmr_core::config::SimConfig;
use gmr_core::scenario::{compare_closures, run};
use gmr_core::verify::run_suite;
use gmr_core::GmrError;

/// Box-ocean simulator with regularized Gent-McWilliams-Redi closures.
#[derive(Parser)]
#[command(name = "gmr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write budgets, snapshots and plot data.
    Run(ScenarioArgs),
    /// Run an invariant suite and print a pass/fail table.
    Verify {
        /// ellipticity | skewness | bounds | energy | slopes | eos | elliptic | all
        suite: String,
    },
    /// Run the scenario under both closures and write the difference series.
    CompareClosures(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted override, e.g. --set physics.K_I=500. Repeatable, last wins.
    #[arg(long = "set", value_name = "K=V")]
    set: Vec<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    snapshot_every: Option<usize>,
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORTED: u8 = 3;

impl ScenarioArgs {
    fn resolve(&self) -> Result<SimConfig, GmrError> {
        let base = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.set)?;
        if let Some(o) = &self.out {
            cfg.run.out_dir = o.to_string_lossy().into_owned();
        }
        if let Some(n) = self.steps {
            cfg.run.steps = n;
        }
        if let Some(n) = self.snapshot_every {
            cfg.run.snapshot_every = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report_setup_error(e: &GmrError) -> ExitCode {
    eprintln!("gmr: {e}");
    match e {
        GmrError::Config(_) | GmrError::ConfigList(_) | GmrError::Argument(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_FAILED),
    }
}

fn cmd_run(args: &ScenarioArgs) -> ExitCode {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => return report_setup_error(&e),
    };
    info!("running {} steps into {}", cfg.run.steps, cfg.run.out_dir);
    match run(&cfg) {
        Ok(s) => match s.aborted {
            None => {
                println!("completed {} steps, t = {:e}, output in {}", s.steps_done, s.final_state.t, s.out_dir.display());
                ExitCode::SUCCESS
            }
            Some(msg) => {
                error!("aborted after {} steps: {msg}", s.steps_done);
                eprintln!("gmr: aborted after {} steps: {msg}", s.steps_done);
                eprintln!("gmr: see {}", s.out_dir.join("failure.json").display());
                ExitCode::from(EXIT_ABORTED)
            }
        },
        Err(e) => report_setup_error(&e),
    }
}

fn cmd_verify(suite: &str) -> ExitCode {
    let checks = match run_suite(suite) {
        Ok(c) => c,
        Err(e) => return report_setup_error(&e),
    };
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn cmd_compare(args: &ScenarioArgs) -> ExitCode {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => return report_setup_error(&e),
    };
    match compare_closures(&cfg) {
        Ok(s) => {
            if let Some(d) = s.diffs.last() {
                println!(
                    "t = {:e}: |theta_full - theta_small| = {:e}, |S_full - S_small| = {:e}, max gap ratio {:e}",
                    d.t, d.theta_diff_l2, d.s_diff_l2, d.gap_ratio
                );
            }
            println!("output in {}", cfg.run.out_dir);
            ExitCode::SUCCESS
        }
        Err(e @ (GmrError::Numerical(_) | GmrError::Admissibility { .. } | GmrError::EosDomain { .. })) => {
            eprintln!("gmr: aborted: {e}");
            ExitCode::from(EXIT_ABORTED)
        }
        Err(e) => report_setup_error(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify { suite } => cmd_verify(suite),
        Command::CompareClosures(a) => cmd_compare(a),
    }
}
