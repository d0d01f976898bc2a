use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use neural_galerkin::experiment::{self, write_artifacts, ExperimentConfig};
use neural_galerkin::params::read_checkpoint;
use neural_galerkin::{suite, Error};

/// Environment variable that replaces the configured output directory.
const OUTPUT_DIR_ENV: &str = "NGS_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "ngs", version, about = "Run Neural Galerkin experiments and property suites")]
struct Cli {
    /// Worker threads for intra-run parallelism (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Properties,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config, or a built-in suite.
    Run {
        #[arg(required_unless_present = "suite", conflicts_with = "suite")]
        config: Option<PathBuf>,
        #[arg(long)]
        suite: Option<Suite>,
        /// Seed for the randomized suite checks.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the layout and norms of a checkpoint.
    Inspect { checkpoint: PathBuf },
    /// Compare the metric CSVs of two run directories.
    Diff { run_a: PathBuf, run_b: PathBuf },
    /// Write the resolved default config of an experiment to stdout.
    Defaults { experiment: String },
}

const EXIT_THRESHOLD: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        eprintln!("error: could not start {workers} workers: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let result = match cli.command {
        Command::Run { suite: Some(Suite::Properties), seed, .. } => run_suite(seed),
        Command::Run { config: Some(path), .. } => run_config(&path, workers),
        Command::Run { .. } => unreachable!("clap requires a config or a suite"),
        Command::Inspect { checkpoint } => inspect(&checkpoint).map(|()| 0),
        Command::Diff { run_a, run_b } => diff(&run_a, &run_b).map(|()| 0),
        Command::Defaults { experiment } => defaults(&experiment).map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.downcast_ref::<Error>().is_some_and(Error::is_numerical);
            ExitCode::from(if numerical { EXIT_NUMERICAL } else { EXIT_CONFIG })
        }
    }
}

fn run_suite(seed: u64) -> anyhow::Result<u8> {
    let checks = suite::properties(seed);
    let mut failed = 0;
    for c in &checks {
        println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    println!("{} checks, {failed} failed", checks.len());
    Ok(if failed == 0 { 0 } else { EXIT_THRESHOLD })
}

fn run_config(path: &Path, workers: usize) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    let start = Instant::now();
    let outcome = experiment::run(&cfg)?;
    let manifest = write_artifacts(&cfg.output_dir, &cfg, &outcome, workers, start.elapsed().as_secs_f64())?;
    for note in &outcome.notes {
        println!("note: {note}");
    }
    for a in &outcome.acceptance {
        println!(
            "{} {}: {:.4e} {} {:.4e}",
            if a.passed { "PASS" } else { "FAIL" },
            a.criterion,
            a.value,
            a.comparison.symbol(),
            a.threshold
        );
    }
    println!("artifacts: {} ({:.1} s)", cfg.output_dir.display(), manifest.wall_time_seconds);
    if let Some(failure) = &outcome.numerical_failure {
        eprintln!("error: {failure}");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(if outcome.passed() { 0 } else { EXIT_THRESHOLD })
}

fn inspect(path: &Path) -> anyhow::Result<()> {
    let ckpt = read_checkpoint(path)?;
    let spec = &ckpt.spec;
    println!("architecture: {}", spec.architecture.name());
    if let Some(period) = spec.architecture.period() {
        println!("period: {period}");
    }
    println!("width: {}  dim: {}  frozen_features: {}", spec.width, spec.dim, spec.frozen_features);
    println!("time: {}", ckpt.time);
    let layout = spec.layout()?;
    println!("params: {} ({} active)", layout.len(), layout.active().len());
    let theta = &ckpt.theta.values;
    println!("{:<12} {:<14} {:>6} {:>14} {:>14}", "unit", "role", "len", "l2", "max_abs");
    for e in &layout.entries {
        let v = &theta[e.range.clone()];
        let l2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        println!(
            "{:<12} {:<14} {:>6} {:>14.6e} {:>14.6e}",
            format!("{:?}", e.unit),
            format!("{:?}", e.role),
            v.len(),
            l2,
            max
        );
    }
    let total = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("total l2: {total:.6e}");
    Ok(())
}

type MetricKey = (String, String, String);

fn read_metrics(dir: &Path) -> anyhow::Result<BTreeMap<MetricKey, f64>> {
    let path = dir.join("metrics.csv");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("experiment,series,metric,t,value") {
        bail!("{} is not a metrics file", path.display());
    }
    let mut out = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            bail!("malformed line in {}: {line}", path.display());
        }
        let value: f64 = f[4].parse().with_context(|| format!("bad value in {line}"))?;
        out.insert((f[1].to_string(), f[2].to_string(), f[3].to_string()), value);
    }
    Ok(out)
}

fn diff(a: &Path, b: &Path) -> anyhow::Result<()> {
    let (ma, mb) = (read_metrics(a)?, read_metrics(b)?);
    println!("series,metric,t,a,b,delta");
    let mut identical = 0;
    for (key, va) in &ma {
        match mb.get(key) {
            Some(vb) if va.to_bits() == vb.to_bits() => identical += 1,
            Some(vb) => println!("{},{},{},{va:.6e},{vb:.6e},{:.6e}", key.0, key.1, key.2, vb - va),
            None => println!("{},{},{},{va:.6e},,", key.0, key.1, key.2),
        }
    }
    for (key, vb) in &mb {
        if !ma.contains_key(key) {
            println!("{},{},{},,{vb:.6e},", key.0, key.1, key.2);
        }
    }
    eprintln!("{identical} identical values");
    Ok(())
}

fn defaults(name: &str) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::from_toml(&format!("experiment = {name:?}\n"))?;
    print!("{}", cfg.to_toml()?);
    Ok(())
}
