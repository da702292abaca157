//! gtvlab: graph total variation experiments driven by TOML configs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gtvlab", version, about = "Graph total variation and Ginzburg-Landau experiments")]
struct Cli {
    /// Experiment configuration (TOML)
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. --set graph.eps=0.1 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory
    #[arg(short, long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample or load a point cloud
    Sample,
    /// Build the geometric graph and write its edge list
    Graph,
    /// Evaluate the graph energy of a labeling
    Energy,
    /// Compute minimizers with seed constraints
    Minimize,
    /// TL1 distance between graph and continuum labels
    Tl1,
    /// Monte Carlo rate study of the unbiased graph TV
    Rate,
    /// Anisotropic energy sweep over the kernel weighting
    Aniso,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Graph => "graph",
            Command::Energy => "energy",
            Command::Minimize => "minimize",
            Command::Tl1 => "tl1",
            Command::Rate => "rate",
            Command::Aniso => "aniso",
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    let path = cli.config.as_deref().context("--config is required")?;
    let loaded = config::load(path, &cli.overrides, cli.seed)?;
    let mut ctx = commands::Ctx::new(cli.command.name(), &loaded.config, &loaded.base_dir, &cli.out)?;
    match cli.command {
        Command::Sample => commands::sample(&mut ctx)?,
        Command::Graph => commands::graph(&mut ctx)?,
        Command::Energy => commands::energy(&mut ctx)?,
        Command::Minimize => commands::minimize(&mut ctx)?,
        Command::Tl1 => commands::tl1(&mut ctx)?,
        Command::Rate => commands::rate(&mut ctx)?,
        Command::Aniso => commands::aniso(&mut ctx)?,
    }
    ctx.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cmd = cli.command.name();
    match run(cli) {
        Ok(dir) => {
            log::info!("{cmd}: wrote {}", dir.display());
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
