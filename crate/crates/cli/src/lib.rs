//! Command-line front end for the federated QUIC classification simulator.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use quicfed_core::{Aggregator, Error, Result, Scenario};

use crate::commands::{cmd_compare, cmd_generate, cmd_importance, cmd_run, emit, run_stem, save_comparison};
use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "quicfed", version, about = "Federated QUIC service classification simulator")]
pub struct Cli {
    /// INI config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides [experiment] seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel clients (overrides [federation] workers).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (overrides [io] out_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic corpus and its manifest.
    Generate,
    /// Run one scenario over the corpus.
    Run {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        aggregator: Option<String>,
    },
    /// Compare round reports over a window of rounds.
    Compare {
        #[arg(required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// `START:END`, inclusive; defaults to the [evaluation] window.
        #[arg(long)]
        window: Option<String>,
    },
    /// Permutation importance of a centralized checkpoint.
    Importance {
        /// Defaults to the centralized run's final checkpoint in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_window(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("window `{s}` is not START:END"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Generate => {
            let g = cmd_generate(&cfg)?;
            emit(&format!(
                "wrote {} flows to {} (sha256 {})\n",
                g.flows,
                g.corpus.display(),
                g.sha256
            ));
        }
        Command::Run { scenario, aggregator } => {
            let scenario: Scenario = match scenario {
                Some(s) => s.parse()?,
                None => cfg.scenario,
            };
            let aggregator: Aggregator = match aggregator {
                Some(a) => a.parse()?,
                None => cfg.aggregator,
            };
            let s = cmd_run(&cfg, scenario, aggregator)?;
            emit(&s.csv());
        }
        Command::Compare { reports, window } => {
            if let Some(w) = window {
                (cfg.window_start, cfg.window_end) = parse_window(w)?;
            }
            let cmp = cmd_compare(reports, cfg.window_start..=cfg.window_end)?;
            save_comparison(&cmp, &cfg.out_dir)?;
            emit(&cmp.table());
            emit(&cmp.ratio_table());
        }
        Command::Importance { checkpoint } => {
            let path = checkpoint.clone().unwrap_or_else(|| {
                cfg.out_dir
                    .join(format!("{}_final.ckpt", run_stem(Scenario::Centralized, cfg.aggregator)))
            });
            let ranked = cmd_importance(&cfg, &path)?;
            let mut s = String::from("rank,feature,mean_f1_drop\n");
            for (i, f) in ranked.iter().take(10).enumerate() {
                s.push_str(&format!("{},{},{}\n", i + 1, f.feature, f.mean_f1_drop));
            }
            emit(&s);
        }
    }
    Ok(())
}
