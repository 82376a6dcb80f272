// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line driver: configuration loading, command dispatch, run
//! manifests and replay.
//!
//! Exit codes: 0 success, 1 output error, 2 configuration error, 3 numerical
//! failure, 4 failed check (self-test, budget check or replay mismatch).

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod selftest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nvmetro_core::metrology::ScalingLaw;
use nvmetro_core::numerics::RNG_ALGORITHM;

use crate::commands::{Outputs, Verdict};
use crate::config::{
    resolve_path, BudgetConfig, CampaignConfig, InterfereConfig, OptimizeConfig, ScalingConfig,
};
pub use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "nvmetro", version, about = "NV-center entangled interferometer toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "nvmetro-out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Robust GRAPE pulse optimization: waveform, report and robustness map.
    OptimizePulse,
    /// Simulate an interference circuit: fringe, visibility fit and QFI summary.
    Interfere,
    /// Monte-Carlo phase-estimation campaign: histogram and variance curve.
    Campaign,
    /// Error-budget product with per-row running product.
    Budget,
    /// Scaling-law scan with SQL and Heisenberg reference columns.
    Scaling {
        #[arg(long)]
        max_n: Option<usize>,
        #[arg(long)]
        one_spin: Option<f64>,
        #[arg(long)]
        per_spin: Option<f64>,
    },
    /// Closed-form smoke checks of every module.
    Selftest,
    /// Re-run a manifest and compare output digests.
    Replay {
        manifest: PathBuf,
    },
}

/// A fully resolved command.
#[derive(Debug, Clone)]
pub enum Job {
    OptimizePulse(OptimizeConfig),
    Interfere(InterfereConfig),
    Campaign(CampaignConfig),
    Budget(BudgetConfig),
    Scaling(ScalingConfig),
    Selftest,
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::OptimizePulse(_) => "optimize-pulse",
            Job::Interfere(_) => "interfere",
            Job::Campaign(_) => "campaign",
            Job::Budget(_) => "budget",
            Job::Scaling(_) => "scaling",
            Job::Selftest => "selftest",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Job::OptimizePulse(c) => c.seed,
            Job::Interfere(c) => c.seed,
            Job::Campaign(c) => c.seed,
            Job::Budget(_) | Job::Scaling(_) | Job::Selftest => 0,
        }
    }

    fn set_seed(&mut self, seed: u64) {
        match self {
            Job::OptimizePulse(c) => c.seed = seed,
            Job::Interfere(c) => c.seed = seed,
            Job::Campaign(c) => c.seed = seed,
            Job::Budget(_) | Job::Scaling(_) | Job::Selftest => {}
        }
    }

    pub fn config_toml(&self) -> CliResult<String> {
        match self {
            Job::OptimizePulse(c) => config::to_toml(c),
            Job::Interfere(c) => config::to_toml(c),
            Job::Campaign(c) => config::to_toml(c),
            Job::Budget(c) => config::to_toml(c),
            Job::Scaling(c) => config::to_toml(c),
            Job::Selftest => Ok(String::new()),
        }
    }

    /// Parses `text` for command `name`; relative paths resolve against `base`.
    pub fn from_text(name: &str, text: &str, base: &Path) -> CliResult<Job> {
        Ok(match name {
            "optimize-pulse" => {
                let mut c: OptimizeConfig = config::parse(text)?;
                c.pulse.initial = c.pulse.initial.map(|p| resolve_path(base, &p));
                Job::OptimizePulse(c)
            }
            "interfere" => {
                let mut c: InterfereConfig = config::parse(text)?;
                if let Some(pc) = c.pulse_check.as_mut() {
                    pc.pulse = resolve_path(base, &pc.pulse);
                }
                Job::Interfere(c)
            }
            "campaign" => Job::Campaign(config::parse(text)?),
            "budget" => Job::Budget(config::parse(text)?),
            "scaling" => Job::Scaling(if text.trim().is_empty() {
                ScalingConfig::default()
            } else {
                config::parse(text)?
            }),
            "selftest" => Job::Selftest,
            other => return Err(CliError::Config(format!("unknown command `{other}`"))),
        })
    }

    fn execute(&self, out: &mut Outputs) -> CliResult<Verdict> {
        match self {
            Job::OptimizePulse(c) => commands::optimize_pulse(c, out),
            Job::Interfere(c) => commands::interfere(c, out),
            Job::Campaign(c) => commands::campaign(c, out),
            Job::Budget(c) => commands::budget(c, out),
            Job::Scaling(c) => commands::scaling(c, out),
            Job::Selftest => {
                let (text, failed) = selftest::report(&selftest::run_all());
                out.write("selftest.txt", &text)?;
                print!("{text}");
                Ok(if failed == 0 {
                    Verdict::Success
                } else {
                    Verdict::Failed(CliError::Check(format!("{failed} self-test checks failed")))
                })
            }
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn read_config(path: &Path) -> CliResult<(String, PathBuf)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = absolute(path)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok((text, base))
}

fn with_file(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Builds the job for a command line, applying flag overrides.
pub fn resolve(cli: &Cli) -> CliResult<Job> {
    let name = match &cli.command {
        Command::OptimizePulse => "optimize-pulse",
        Command::Interfere => "interfere",
        Command::Campaign => "campaign",
        Command::Budget => "budget",
        Command::Scaling { .. } => "scaling",
        Command::Selftest => "selftest",
        Command::Replay { .. } => {
            return Err(CliError::Config("replay is resolved from its manifest".into()))
        }
    };
    let needs_config = !matches!(cli.command, Command::Scaling { .. } | Command::Selftest);
    let mut job = match &cli.global.config {
        Some(path) => {
            let (text, base) = read_config(path)?;
            Job::from_text(name, &text, &base).map_err(|e| with_file(path, e))?
        }
        None if needs_config => {
            return Err(CliError::Config(format!("`{name}` requires --config <path>")))
        }
        None => Job::from_text(name, "", Path::new("."))?,
    };
    if let Some(seed) = cli.global.seed {
        job.set_seed(seed);
    }
    if let (Command::Scaling { max_n, one_spin, per_spin }, Job::Scaling(c)) = (&cli.command, &mut job) {
        if let Some(n) = max_n {
            c.max_n = *n;
        }
        c.law = ScalingLaw {
            one_spin_visibility: one_spin.unwrap_or(c.law.one_spin_visibility),
            per_spin_factor: per_spin.unwrap_or(c.law.per_spin_factor),
        };
    }
    Ok(job)
}

/// Runs `job` into `out`, writes the manifest and returns it with the verdict.
pub fn execute(job: &Job, out: &Path, threads: Option<usize>) -> CliResult<(RunManifest, Verdict)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    let start = Instant::now();
    let config = job.config_toml()?;
    let mut outputs = Outputs::new(out)?;
    let verdict = pool.install(|| job.execute(&mut outputs))?;
    let manifest = RunManifest {
        command: job.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: job.seed(),
        rng: RNG_ALGORITHM.to_string(),
        threads: pool.current_num_threads(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        outputs: outputs.files,
        config,
    };
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_text())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok((manifest, verdict))
}

fn replay(manifest_path: &Path, out: &Path, threads: Option<usize>) -> CliResult<()> {
    let recorded = RunManifest::read(manifest_path)?;
    let job = Job::from_text(&recorded.command, &recorded.config, Path::new("/"))?;
    if job.seed() != recorded.seed {
        return Err(CliError::Config(format!(
            "manifest seed {} disagrees with its config seed {}",
            recorded.seed,
            job.seed()
        )));
    }
    let (fresh, _) = execute(&job, out, threads)?;
    if fresh.outputs != recorded.outputs {
        let mut diff = Vec::new();
        for (d, name) in &recorded.outputs {
            match fresh.outputs.iter().find(|(_, n)| n == name) {
                Some((d2, _)) if d2 == d => {}
                Some(_) => diff.push(format!("{name} differs")),
                None => diff.push(format!("{name} missing")),
            }
        }
        return Err(CliError::Check(format!("replay mismatch: {}", diff.join(", "))));
    }
    println!("replay reproduced {} outputs bit-exactly", fresh.outputs.len());
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &cli.global.out, cli.global.threads);
    }
    let job = resolve(cli)?;
    match execute(&job, &cli.global.out, cli.global.threads)? {
        (_, Verdict::Success) => Ok(()),
        (_, Verdict::Failed(e)) => Err(e),
    }
}
