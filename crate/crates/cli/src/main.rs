//! `randcover`: experiment driver for random covering sets.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use config::{parse_levels, Command, ConfigError, Overrides};

#[derive(Parser)]
#[command(name = "randcover", version, about = "Random covering sets: simulation, spectra and energy certificates")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of replicated seeds.
    #[arg(long, global = true)]
    seeds: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Covering exponent; sets `tree.alpha` for tree-certify, `cover.alpha` otherwise.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Model name: uniform, cantor, bernoulli or example.
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// One cover realisation: window table and dimension estimate.
    SimulateCover(CoverArgs),
    /// Dimension estimates over replicated seeds with mean and standard error.
    EstimateDim(CoverArgs),
    /// Coarse spectrum counts, the G curve and the bound curves.
    Spectrum(SpectrumArgs),
    /// Lipschitz hull and tilde transform of a spectrum curve.
    Hull(HullArgs),
    /// Grow a fractal tree and certify its energy bound.
    TreeCertify(TreeArgs),
    /// Checks of the covering dimension, fattened masses and local dimensions
    /// of the example measure against closed forms.
    ExampleVerify(ExampleArgs),
}

#[derive(Args, Default)]
struct CoverArgs {
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long)]
    j_min: Option<u32>,
    #[arg(long)]
    j_max: Option<u32>,
}

#[derive(Args, Default)]
struct SpectrumArgs {
    /// Inclusive level range `LO..HI`.
    #[arg(long, value_parser = parse_levels)]
    levels: Option<(u32, u32)>,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args, Default)]
struct HullArgs {
    /// `s,value` CSV on a uniform grid.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Default)]
struct TreeArgs {
    #[arg(long)]
    eps: Option<f64>,
    /// Energy exponent.
    #[arg(long)]
    t: Option<f64>,
    /// Uniformity exponent (requires `tree.c` in the config).
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    max_generation: Option<u32>,
    /// `growing` or a minimum child count.
    #[arg(long)]
    child_floor: Option<String>,
}

#[derive(Args, Default)]
struct ExampleArgs {
    #[arg(long)]
    j_min: Option<u32>,
    #[arg(long)]
    j_max: Option<u32>,
    /// Local-dimension level range `LO..HI`.
    #[arg(long, value_parser = parse_levels)]
    levels: Option<(u32, u32)>,
}

fn split(cli: Cli) -> (Command, Option<PathBuf>, Overrides) {
    let g = cli.global;
    let mut o = Overrides { seed: g.seed, seeds: g.seeds, out: g.out, alpha: g.alpha, model: g.model, ..Default::default() };
    let cmd = match cli.command {
        Cmd::SimulateCover(a) => {
            (o.n_max, o.j_min, o.j_max) = (a.n_max, a.j_min, a.j_max);
            Command::SimulateCover
        }
        Cmd::EstimateDim(a) => {
            (o.n_max, o.j_min, o.j_max) = (a.n_max, a.j_min, a.j_max);
            Command::EstimateDim
        }
        Cmd::Spectrum(a) => {
            (o.levels, o.eps) = (a.levels, a.eps);
            Command::Spectrum
        }
        Cmd::Hull(a) => {
            o.input = a.input;
            Command::Hull
        }
        Cmd::TreeCertify(a) => {
            (o.eps, o.t, o.s, o.max_generation, o.child_floor) = (a.eps, a.t, a.s, a.max_generation, a.child_floor);
            Command::TreeCertify
        }
        Cmd::ExampleVerify(a) => {
            (o.j_min, o.j_max, o.levels) = (a.j_min, a.j_max, a.levels);
            Command::ExampleVerify
        }
    };
    (cmd, g.config, o)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn execute(cmd: Command, config_path: Option<PathBuf>, o: Overrides) -> Result<()> {
    let started = Instant::now();
    let mut cfg = config::load(config_path.as_deref())?;
    cfg.apply(cmd, &o);
    let model = cfg.validate(cmd)?;
    let digest = cfg.digest(cmd);
    let meta = vec![
        ("tool".to_string(), format!("randcover {}", env!("CARGO_PKG_VERSION"))),
        ("command".to_string(), cmd.name().to_string()),
        ("config_sha256".to_string(), digest.clone()),
        ("model".to_string(), model.name().to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("seeds".to_string(), cfg.seeds.to_string()),
    ];
    let artifacts = commands::run(cmd, &cfg, &model, &meta).with_context(|| format!("{} failed", cmd.name()))?;

    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut listing = String::new();
    for (name, body) in &artifacts.files {
        let path = cfg.out.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        listing.push_str(&format!("{}  {name}\n", sha256_hex(body.as_bytes())));
    }
    for line in &artifacts.summary {
        println!("{line}");
    }
    let seeds: Vec<String> = match cmd {
        Command::EstimateDim | Command::ExampleVerify => cfg.seed_list().iter().map(u64::to_string).collect(),
        _ => vec![cfg.seed.to_string()],
    };
    let manifest = format!(
        "tool: randcover {}\ncommand: {}\nconfig_sha256: {digest}\nseeds: {}\nwall_clock_s: {:.3}\n\n[summary]\n{}\n[files]\n{listing}\n[config]\n{}",
        env!("CARGO_PKG_VERSION"),
        cmd.name(),
        seeds.join(","),
        started.elapsed().as_secs_f64(),
        artifacts.summary.iter().map(|l| format!("{l}\n")).collect::<String>(),
        cfg.echo(),
    );
    let path = cfg.out.join("manifest.txt");
    std::fs::write(&path, manifest).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} files to {}", artifacts.files.len() + 1, cfg.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let (cmd, config_path, overrides) = split(Cli::parse());
    match execute(cmd, config_path, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("error: {c}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
