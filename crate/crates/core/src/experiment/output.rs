//! Artifact directory layout.
//!
//! ```text
//! <output_dir>/
//!   config.resolved.toml     every field of the config, defaults expanded
//!   metrics.csv              experiment,series,metric,t,value
//!   acceptance.csv           experiment,criterion,value,comparison,threshold,passed
//!   steps_<series>.csv       per-step integrator diagnostics
//!   trajectory_<series>.csv  θ at every snapshot
//!   checkpoints/<series>/step_<n>.ckpt
//!   fit_<series>.txt         per-replicate fitting losses
//!   notes.txt                early stops and other remarks
//!   manifest.toml            hashes, seed, wall time, workers
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, RunOutcome};
use crate::error::Result;
use crate::params::{Checkpoint, ParamVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub passed: bool,
    /// SHA-256 of every other file in the directory, keyed by relative path.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| crate::Error::Parse(e.to_string()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn metrics_csv(cfg: &ExperimentConfig, out: &RunOutcome) -> String {
    let name = cfg.experiment.name();
    let mut s = String::from("experiment,series,metric,t,value\n");
    for r in &out.rows {
        writeln!(s, "{name},{},{},{:.12e},{:.12e}", r.series, r.metric, r.t, r.value).unwrap();
    }
    s
}

pub(crate) fn acceptance_csv(cfg: &ExperimentConfig, out: &RunOutcome) -> String {
    let name = cfg.experiment.name();
    let mut s = String::from("experiment,criterion,value,comparison,threshold,passed\n");
    for a in &out.acceptance {
        writeln!(
            s,
            "{name},{},{:.12e},{},{:.12e},{}",
            a.criterion,
            a.value,
            a.comparison.symbol(),
            a.threshold,
            a.passed
        )
        .unwrap();
    }
    s
}

fn trajectory_csv(times: &[f64], thetas: &[Vec<f64>]) -> String {
    let p = thetas.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for i in 0..p {
        write!(s, ",theta_{i}").unwrap();
    }
    s.push('\n');
    for (t, theta) in times.iter().zip(thetas) {
        write!(s, "{t:.12e}").unwrap();
        for v in theta {
            write!(s, ",{v:.16e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Writes every artifact of `out` under `dir` and returns the manifest.
pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    out: &RunOutcome,
    workers: usize,
    wall_time_seconds: f64,
) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut put = |rel: PathBuf, body: &[u8]| -> Result<()> {
        let path = dir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body)?;
        files.insert(rel.to_string_lossy().replace('\\', "/"), sha256_hex(body));
        Ok(())
    };
    let config_text = cfg.to_toml()?;
    put("config.resolved.toml".into(), config_text.as_bytes())?;
    put("metrics.csv".into(), metrics_csv(cfg, out).as_bytes())?;
    put("acceptance.csv".into(), acceptance_csv(cfg, out).as_bytes())?;
    for (series, spec, record) in &out.trajectories {
        let mut steps = Vec::new();
        {
            use std::io::Write as _;
            writeln!(steps, "{}", crate::integrators::StepDiagnostics::CSV_HEADER)?;
            for d in &record.steps {
                writeln!(steps, "{}", d.csv_line())?;
            }
        }
        put(format!("steps_{series}.csv").into(), &steps)?;
        put(format!("trajectory_{series}.csv").into(), trajectory_csv(&record.times, &record.thetas).as_bytes())?;
        for c in &record.checkpoints {
            let ckpt = Checkpoint { spec: spec.clone(), time: c.t, theta: ParamVector::new(spec, c.theta.clone())? };
            put(format!("checkpoints/{series}/step_{:06}.ckpt", c.step).into(), ckpt.to_text().as_bytes())?;
        }
    }
    for (series, report) in &out.fits {
        put(format!("fit_{series}.txt").into(), report.to_text().as_bytes())?;
    }
    let mut notes = String::new();
    for n in &out.notes {
        writeln!(notes, "{n}").unwrap();
    }
    put("notes.txt".into(), notes.as_bytes())?;

    let manifest = Manifest {
        experiment: cfg.experiment.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        workers,
        wall_time_seconds,
        passed: out.passed(),
        files,
    };
    let text = toml::to_string(&manifest).map_err(|e| crate::Error::Config(e.to_string()))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(manifest)
}
