use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

use cellfree::config::{ExperimentConfig, Severity};
use cellfree::gates::{run_selftest, SelftestBudget};
use cellfree::harness::{run_experiment, run_fig2};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free massive MIMO Monte-Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Paper,
    Desk,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config; overrides the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "paper")]
    profile: Profile,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write se.csv, clusters.json and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Coherence blocks per drop.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Precoder gain distributions for one antenna, one UE and perfect CSI.
    Fig2 {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of channel samples.
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        #[arg(long, default_value = "out/fig2")]
        out: PathBuf,
    },
    /// Check a config and print diagnostics as JSON.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the oracle gates; exits nonzero if any gate fails.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Blocks for the closed-form and estimator gates.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, default_value = "out/selftest")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> cellfree::Result<ExperimentConfig> {
    let mut cfg = match (&common.config, common.profile) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Profile::Paper) => ExperimentConfig::default(),
        (None, Profile::Desk) => ExperimentConfig::desk(),
    };
    if let Some(seed) = common.seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.display().to_string();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> cellfree::Result<ExitCode> {
    match cli.command {
        Command::Run { common, budget, drops } => {
            let mut cfg = load(&common)?;
            if let Some(b) = budget {
                cfg.monte_carlo.blocks = b;
            }
            if let Some(d) = drops {
                cfg.monte_carlo.drops = d;
            }
            let r = run_experiment(&cfg, &PathBuf::from(&cfg.output.dir))?;
            for a in &r.summary.aggregates {
                println!(
                    "{:<3} {:<5} {:<15} mean SE {:.4} +- {:.4} bit/s/Hz",
                    a.link.as_str(),
                    a.scheme,
                    a.bound.as_str(),
                    a.mean_se,
                    a.stderr
                );
            }
            if !r.summary.failed_drops.is_empty() {
                println!("{} drops failed; see summary.json", r.summary.failed_drops.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fig2 { seed, budget, out } => {
            let r = run_fig2(budget, seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&r.summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { common } => {
            let cfg = load(&common)?;
            let diags = cfg.validate();
            println!("{}", serde_json::to_string_pretty(&diags)?);
            if diags.iter().any(|d| d.severity == Severity::Error) {
                Ok(ExitCode::FAILURE)
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Selftest { seed, budget, out } => {
            let mut b = SelftestBudget::default();
            if let Some(blocks) = budget {
                b.blocks = blocks;
            }
            let gates = run_selftest(seed, &b, &out)?;
            for g in &gates {
                println!("[{}] gate {}: {}: {}", if g.passed { "PASS" } else { "FAIL" }, g.id, g.name, g.detail);
            }
            if gates.iter().all(|g| g.passed) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
