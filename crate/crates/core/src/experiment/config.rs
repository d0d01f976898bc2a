//! Experiment configuration.
//!
//! A config file names an experiment and overrides any subset of its
//! defaults. [`ExperimentConfig::from_toml`] merges the file over the
//! experiment's defaults, so the resolved config written beside every run
//! has every field spelled out.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::assembly::Regularization;
use crate::error::{Error, Result};
use crate::fitting::FitConfig;
use crate::integrators::{ImplicitConfig, ImplicitLoss, Resample, Scheme, StepController};
use crate::optim::{OptimizerKind, Schedule};
use crate::params::{Architecture, NetSpec};
use crate::pde::{InitialCondition, PdeProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Kdv,
    AllenCahn,
    AdvectionTime,
    AdvectionSpacetime,
    FpHarmonic,
    FpAharmonic,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Kdv => "kdv",
            ExperimentKind::AllenCahn => "allen_cahn",
            ExperimentKind::AdvectionTime => "advection_time",
            ExperimentKind::AdvectionSpacetime => "advection_spacetime",
            ExperimentKind::FpHarmonic => "fp_harmonic",
            ExperimentKind::FpAharmonic => "fp_aharmonic",
            ExperimentKind::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureChoice {
    /// Uniform on the box `[lo, hi]`.
    Uniform,
    /// Mixture aligned with the network nodes, bandwidth scale `kappa`.
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub measure: MeasureChoice,
    pub n: usize,
    pub kappa: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resample: Resample,
    pub regularization: Regularization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub enabled: bool,
    /// Node count of the frozen-feature linear baselines.
    pub width: usize,
    /// Bandwidth parameter `w` of the equidistant basis.
    pub bandwidth: f64,
    /// Static uniform sampling box and sample count.
    pub static_lo: Vec<f64>,
    pub static_hi: Vec<f64>,
    pub static_n: usize,
    pub integrator: StepController,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub grid: usize,
    pub dt: f64,
    pub paths: usize,
    /// Rerun the grid reference at twice the resolution and report the change.
    pub convergence_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Grid size for one-dimensional error norms.
    pub grid: usize,
    /// Samples per snapshot for high-dimensional error estimates.
    pub samples: usize,
    pub residual_kappa: f64,
    pub residual_samples: usize,
    pub entropy_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub t_end: f64,
    /// Number of equal intervals between metric snapshots.
    pub snapshots: usize,
    pub checkpoint_stride: usize,
    pub net: NetSpec,
    pub sampling: SamplingConfig,
    pub integrator: StepController,
    pub fitting: FitConfig,
    /// Standard-deviation inflation of the fitting measure on unbounded domains.
    pub fit_spread: f64,
    pub baselines: BaselineConfig,
    pub reference: ReferenceConfig,
    pub metrics: MetricsConfig,
    /// Named acceptance thresholds; see the README for each experiment's keys.
    pub acceptance: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<PdeProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCondition>,
}

fn thresholds(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn rk45(rtol: f64, atol: f64, dt0: f64, max_step: f64) -> StepController {
    StepController { scheme: Scheme::Rk45 { rtol, atol, min_step: 1e-8, max_step }, dt: dt0 }
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let fit = FitConfig {
            batch: 1000,
            test_batch: 4000,
            iterations: 2000,
            schedule: Schedule { lr: 0.1, final_factor: 1e-2 },
            optimizer: OptimizerKind::adam(),
            replicates: 5,
            frozen_batch: false,
        };
        let base = ExperimentConfig {
            experiment: kind,
            seed: 1,
            output_dir: PathBuf::from(format!("runs/{}", kind.name())),
            t_end: 1.0,
            snapshots: 20,
            checkpoint_stride: 50,
            net: NetSpec::new(Architecture::ShallowGaussian, 10, 1),
            sampling: SamplingConfig {
                measure: MeasureChoice::Uniform,
                n: 1000,
                kappa: 1.0,
                lo: vec![0.0],
                hi: vec![1.0],
                resample: Resample::PerStage,
                regularization: Regularization::default(),
            },
            integrator: rk45(1e-4, 1e-6, 1e-3, 0.1),
            fitting: fit,
            fit_spread: 1.5,
            baselines: BaselineConfig {
                enabled: true,
                width: 30,
                bandwidth: 1.0,
                static_lo: vec![0.0],
                static_hi: vec![1.0],
                static_n: 1000,
                integrator: rk45(1e-4, 1e-6, 1e-3, 0.1),
            },
            reference: ReferenceConfig { grid: 2048, dt: 1e-4, paths: 10_000, convergence_check: false },
            metrics: MetricsConfig {
                grid: 2048,
                samples: 4000,
                residual_kappa: 2.0,
                residual_samples: 5000,
                entropy_samples: 5000,
            },
            acceptance: BTreeMap::new(),
            problem: None,
            initial: None,
        };
        let advection_fit =
            FitConfig { iterations: 6000, schedule: Schedule { lr: 5e-3, final_factor: 0.1 }, ..base.fitting.clone() };
        match kind {
            ExperimentKind::Kdv => ExperimentConfig {
                t_end: 6.0,
                snapshots: 60,
                net: NetSpec::new(Architecture::ShallowPeriodicGaussian { period: 60.0 }, 10, 1),
                sampling: SamplingConfig {
                    lo: vec![-20.0],
                    hi: vec![40.0],
                    resample: Resample::PerStep,
                    ..base.sampling.clone()
                },
                fitting: FitConfig {
                    iterations: 6000,
                    schedule: Schedule { lr: 5e-2, final_factor: 1e-3 },
                    ..base.fitting.clone()
                },
                baselines: BaselineConfig {
                    width: 30,
                    // Effective width of one node spacing: w π / L = 30 / 60.
                    bandwidth: 60.0 / (PI * 2.0),
                    ..base.baselines.clone()
                },
                acceptance: thresholds(&[("ng_error_max", 5e-2), ("baseline_factor_min", 10.0)]),
                ..base
            },
            ExperimentKind::AllenCahn => ExperimentConfig {
                t_end: 4.0,
                snapshots: 40,
                net: NetSpec::new(Architecture::DeepTanhPeriodic { period: 2.0 * PI, layers: 3 }, 2, 1),
                sampling: SamplingConfig { lo: vec![0.0], hi: vec![2.0 * PI], ..base.sampling.clone() },
                integrator: StepController {
                    scheme: Scheme::BackwardEulerOpt(ImplicitConfig {
                        iterations: 200,
                        schedule: Schedule { lr: 2e-3, final_factor: 0.1 },
                        batch: 256,
                        optimizer: OptimizerKind::adam(),
                        loss: ImplicitLoss::Residual,
                    }),
                    dt: 1e-2,
                },
                fitting: FitConfig {
                    iterations: 4000,
                    schedule: Schedule { lr: 2e-2, final_factor: 1e-2 },
                    ..base.fitting.clone()
                },
                baselines: BaselineConfig {
                    width: 16,
                    // Effective width of one node spacing: w π / L = 16 / (2π).
                    bandwidth: 2.0 * PI * 16.0 / (2.0 * PI * PI),
                    ..base.baselines.clone()
                },
                reference: ReferenceConfig { grid: 512, dt: 1e-4, paths: 0, convergence_check: true },
                acceptance: thresholds(&[("baseline_factor_min", 10.0), ("reference_change_max", 1e-3)]),
                ..base
            },
            ExperimentKind::AdvectionTime => {
                let d = 3;
                ExperimentConfig {
                    t_end: 1.0,
                    snapshots: 10,
                    net: NetSpec::new(Architecture::ShallowGaussian, 50, d),
                    sampling: SamplingConfig {
                        measure: MeasureChoice::Adaptive,
                        kappa: 1.0,
                        lo: vec![0.0; d],
                        hi: vec![15.0; d],
                        resample: Resample::PerStep,
                        ..base.sampling.clone()
                    },
                    integrator: rk45(1e-3, 1e-4, 1e-3, 0.05),
                    fitting: advection_fit.clone(),
                    fit_spread: 3.0,
                    metrics: MetricsConfig { samples: 10_000, ..base.metrics.clone() },
                    baselines: BaselineConfig {
                        static_lo: vec![0.0; d],
                        static_hi: vec![15.0; d],
                        integrator: rk45(1e-3, 1e-4, 1e-3, 0.05),
                        ..base.baselines.clone()
                    },
                    acceptance: thresholds(&[("adaptive_error_max", 0.1), ("static_error_min", 0.9)]),
                    ..base
                }
            }
            ExperimentKind::AdvectionSpacetime => {
                let d = 3;
                ExperimentConfig {
                    t_end: 1.0,
                    snapshots: 10,
                    net: NetSpec::new(Architecture::ShallowGaussian, 50, d),
                    sampling: SamplingConfig {
                        measure: MeasureChoice::Adaptive,
                        n: 2000,
                        kappa: 1.0,
                        lo: vec![0.0; d],
                        hi: vec![15.0; d],
                        resample: Resample::PerStep,
                        ..base.sampling.clone()
                    },
                    integrator: rk45(1e-3, 1e-4, 1e-3, 0.05),
                    fitting: advection_fit.clone(),
                    fit_spread: 3.0,
                    metrics: MetricsConfig { samples: 10_000, ..base.metrics.clone() },
                    baselines: BaselineConfig {
                        static_lo: vec![0.0; d],
                        static_hi: vec![15.0; d],
                        static_n: 2000,
                        integrator: rk45(1e-3, 1e-4, 1e-3, 0.05),
                        ..base.baselines.clone()
                    },
                    acceptance: thresholds(&[
                        ("roundtrip_error_max", 5e-2),
                        ("adaptive_relative_residual_max", 0.1),
                        ("static_residual_factor_min", 100.0),
                    ]),
                    ..base
                }
            }
            ExperimentKind::FpHarmonic | ExperimentKind::FpAharmonic => {
                let d = 4;
                let harmonic = kind == ExperimentKind::FpHarmonic;
                ExperimentConfig {
                    t_end: 1.0,
                    snapshots: 10,
                    net: NetSpec::new(Architecture::ShallowSquaredGaussian, if harmonic { 30 } else { 40 }, d),
                    sampling: SamplingConfig {
                        measure: MeasureChoice::Adaptive,
                        n: if harmonic { 1000 } else { 2000 },
                        kappa: 1.5,
                        lo: vec![0.0; d],
                        hi: vec![5.0; d],
                        resample: Resample::PerStep,
                        regularization: Regularization::Relative(if harmonic { 1e-4 } else { 1e-3 }),
                    },
                    integrator: StepController::forward_euler(1e-3),
                    fitting: advection_fit.clone(),
                    baselines: BaselineConfig {
                        enabled: harmonic,
                        static_lo: vec![0.0; d],
                        static_hi: vec![5.0; d],
                        integrator: StepController::forward_euler(1e-3),
                        ..base.baselines.clone()
                    },
                    reference: ReferenceConfig { grid: 0, dt: 1e-4, paths: 10_000, convergence_check: false },
                    acceptance: if harmonic {
                        thresholds(&[
                            ("mean_error_max", 1e-2),
                            ("cov_diag_error_max", 0.2),
                            ("static_factor_min", 10.0),
                            ("entropy_se_max", 3.0),
                        ])
                    } else {
                        thresholds(&[
                            ("mean_error_max", 5e-2),
                            ("cov_diag_error_max", 5e-2),
                            ("se_multiple", 4.0),
                            ("entropy_se_max", 3.0),
                        ])
                    },
                    ..base
                }
            }
            ExperimentKind::Custom => base,
        }
    }

    /// Parses a config file, filling every absent key from the defaults of
    /// the named experiment.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let kind_value =
            user.get("experiment").cloned().ok_or_else(|| Error::Config("missing `experiment` key".into()))?;
        let kind: ExperimentKind = kind_value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let defaults = toml::Table::try_from(Self::defaults(kind)).map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge(defaults, user);
        let cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.integrator.validate()?;
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be finite and non-negative, got {}", self.t_end)));
        }
        if self.snapshots == 0 || self.checkpoint_stride == 0 {
            return Err(Error::Config("snapshots and checkpoint_stride must be at least 1".into()));
        }
        let s = &self.sampling;
        if s.n == 0 {
            return Err(Error::Config("sampling.n must be at least 1".into()));
        }
        if s.measure == MeasureChoice::Adaptive && !(s.kappa > 0.0) {
            return Err(Error::Config("sampling.kappa must be positive".into()));
        }
        if s.lo.len() != self.net.dim || s.hi.len() != self.net.dim {
            return Err(Error::Config("sampling box must match net.dim".into()));
        }
        if self.baselines.enabled {
            self.baselines.integrator.validate()?;
        }
        if self.experiment == ExperimentKind::Custom && (self.problem.is_none() || self.initial.is_none()) {
            return Err(Error::Config("custom experiments need [problem] and [initial] sections".into()));
        }
        Ok(())
    }

    /// Equally spaced snapshot times on `[0, t_end]`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        (0..=self.snapshots).map(|k| self.t_end * k as f64 / self.snapshots as f64).collect()
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !is_tagged_switch(&b, &o) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// A table that changes its `kind` tag replaces the default wholesale.
fn is_tagged_switch(base: &toml::Table, over: &toml::Table) -> bool {
    matches!((base.get("kind"), over.get("kind")), (Some(a), Some(b)) if a != b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_default_round_trips() {
        for kind in [
            ExperimentKind::Kdv,
            ExperimentKind::AllenCahn,
            ExperimentKind::AdvectionTime,
            ExperimentKind::AdvectionSpacetime,
            ExperimentKind::FpHarmonic,
            ExperimentKind::FpAharmonic,
        ] {
            let cfg = ExperimentConfig::defaults(kind);
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg, "{text}");
        }
    }

    #[test]
    fn overrides_merge_into_defaults() {
        let cfg = ExperimentConfig::from_toml("experiment = \"kdv\"\nseed = 7\n[sampling]\nn = 200\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sampling.n, 200);
        assert_eq!(cfg.sampling.lo, vec![-20.0]);
    }

    #[test]
    fn switching_scheme_replaces_its_table() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"kdv\"\n[integrator]\ndt = 0.01\n[integrator.scheme]\nkind = \"forward_euler\"\n",
        )
        .unwrap();
        assert_eq!(cfg.integrator, StepController::forward_euler(0.01));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("experiment = \"kdv\"\nsede = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"nope\"\n").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"kdv\"\n[sampling]\nn = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"custom\"\n").is_err());
    }
}
