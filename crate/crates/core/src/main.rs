//! Command-line front end: `run`, `oracle` and `stats`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sre_qmc::config::{parse_config_with_overrides, ENV_PREFIX};
use sre_qmc::error::Error;
use sre_qmc::runner;

#[derive(Parser)]
#[command(name = "sreqmc", version, about = "Non-equilibrium QMC for Renyi entropies of transverse-field Ising systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the non-equilibrium QMC estimate described by a config file.
    Run {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for side walkers (0 = all cores). Never affects
        /// results, only wall time.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Override the config file's rng.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Complete the missing paths of an interrupted run in the same
        /// output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate the configured quantity with the dense small-system oracle.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Work-distribution statistics from one or more paths.csv files.
    Stats {
        /// Input paths.csv files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Output directory for stats.json, histograms and fit lines.
        #[arg(long, default_value = "stats_out")]
        out_dir: PathBuf,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<sre_qmc::config::RunConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let env_vars = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX));
    let mut cfg = parse_config_with_overrides(&text, env_vars)?;
    if let Some(seed) = seed {
        cfg.rng.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            workers,
            seed,
            resume,
        } => {
            let cfg = load_config(&config, seed)?;
            let artifacts = runner::run(&cfg, workers, resume)?;
            let doc = &artifacts.document;
            println!(
                "{} n={} estimate = {:.9} +- {:.9} (abandoned fraction {:.4})",
                match doc.quantity {
                    sre_qmc::config::Quantity::Sre => "M",
                    sre_qmc::config::Quantity::Ere => "S",
                    sre_qmc::config::Quantity::Pre => "H",
                },
                doc.renyi_n,
                doc.estimate,
                doc.stderr,
                doc.abandoned_fraction
            );
            if let Some(p) = &artifacts.result_json {
                println!("result: {}", p.display());
            }
            if let Some(p) = &artifacts.paths_csv {
                println!("paths:  {}", p.display());
            }
            Ok(())
        }
        Command::Oracle { config } => {
            let cfg = load_config(&config, None)?;
            let artifacts = runner::oracle_run(&cfg)?;
            println!(
                "exact value = {:.12}",
                artifacts.document.estimate
            );
            if let Some(p) = &artifacts.result_json {
                println!("result: {}", p.display());
            }
            Ok(())
        }
        Command::Stats { paths, out_dir } => {
            let doc = runner::stats(&paths, &out_dir)?;
            for e in &doc.ensembles {
                println!(
                    "{}: N={} paths={} Wbar={:.6} var={:.6} ks={:.4} abandoned={}",
                    e.source,
                    e.n_sites,
                    e.n_paths,
                    e.work_stats.mean,
                    e.work_stats.variance,
                    e.work_stats.ks_distance,
                    e.n_abandoned
                );
            }
            if let Some(fit) = &doc.snr_fit {
                println!(
                    "SNR fit: alpha = {:.4}, alpha_c = {:.4e}, gamma = {:?}",
                    fit.alpha, fit.alpha_c, fit.gamma
                );
            }
            println!("stats: {}", out_dir.join("stats.json").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = match &err {
                Error::Config { .. } | Error::SizeCap(_) => ("config", 2u8),
                _ => ("runtime", 3u8),
            };
            let payload = serde_json::json!({
                "error": { "kind": kind, "message": err.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}
