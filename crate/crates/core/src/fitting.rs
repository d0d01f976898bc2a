//! Least-squares fit of the initial parameters to a target function.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind, Schedule};
use crate::params::{Architecture, NetSpec, Role, Seed, Unit};
use crate::reduce::tree_reduce;
use crate::rng::{stream, Rng};
use crate::sampling::{draw, Measure, SampleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub batch: usize,
    pub test_batch: usize,
    pub iterations: usize,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub replicates: usize,
    /// Reuse one training batch for every iteration.
    #[serde(default)]
    pub frozen_batch: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            batch: 1000,
            test_batch: 2000,
            iterations: 2000,
            schedule: Schedule { lr: 0.1, final_factor: 1e-2 },
            optimizer: OptimizerKind::adam(),
            replicates: 5,
            frozen_batch: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    /// Final training loss of each replicate.
    pub train_losses: Vec<f64>,
    /// Held-out mean squared error of each replicate.
    pub test_losses: Vec<f64>,
    pub best: usize,
}

impl FitReport {
    pub fn best_test_loss(&self) -> f64 {
        self.test_losses[self.best]
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("replicates: {}\nbest: {}\n", self.test_losses.len(), self.best);
        for (i, (a, b)) in self.train_losses.iter().zip(&self.test_losses).enumerate() {
            s.push_str(&format!("replicate {i}: train {a:.6e} test {b:.6e}\n"));
        }
        s
    }
}

/// Axis-aligned region where the measure puts essentially all its mass.
fn support_box(measure: &Measure) -> (Vec<f64>, Vec<f64>) {
    match measure {
        Measure::UniformBox { lo, hi } => (lo.clone(), hi.clone()),
        Measure::GaussianMixture { dim, means, stds, .. } => {
            let d = *dim;
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for (row, srow) in means.chunks_exact(d).zip(stds.chunks_exact(d)) {
                for k in 0..d {
                    lo[k] = lo[k].min(row[k] - 2.0 * srow[k]);
                    hi[k] = hi[k].max(row[k] + 2.0 * srow[k]);
                }
            }
            (lo, hi)
        }
    }
}

/// Random initial parameters scaled to the region `[lo, hi]`.
///
/// Centres are uniform over the region and bandwidths are drawn so that a
/// node covers between half and twice the node spacing.
pub fn init_params(spec: &NetSpec, lo: &[f64], hi: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let layout = spec.layout()?;
    let mut theta = vec![0.0; layout.len()];
    let (m, d) = (spec.width, spec.dim);
    let extent: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let spacing = extent / (m as f64).powf(1.0 / d as f64);
    for e in &layout.entries {
        for i in e.range.clone() {
            theta[i] = match (&spec.architecture, e.role) {
                (Architecture::ShallowSquaredGaussian, Role::Coefficient) => {
                    rng.random_range(0.5..1.0) / (m as f64).sqrt()
                }
                (_, Role::Coefficient) if spec.architecture.is_shallow() => 0.0,
                (_, Role::Bandwidth) => {
                    let w = 1.0 / (spacing * rng.random_range(0.5..2.0));
                    match spec.architecture {
                        // sin(π r / L) ≈ π r / L near the centre.
                        Architecture::ShallowPeriodicGaussian { period } => w * period / std::f64::consts::PI,
                        _ => w,
                    }
                }
                (_, Role::Center) => {
                    let k = i - e.range.start;
                    rng.random_range(lo[k]..hi[k])
                }
                (_, Role::Coefficient) => rng.random_range(-1.0..1.0) / (m as f64).sqrt(),
                (_, Role::Weight) => {
                    let fan_in = if e.unit == Unit::Layer(1) { d } else { m };
                    rng.random_range(-1.0..1.0) / (fan_in as f64).sqrt()
                }
                (_, Role::Bias) => {
                    if e.unit == Unit::Layer(1) {
                        let k = i - e.range.start;
                        rng.random_range(lo[k]..hi[k])
                    } else {
                        rng.random_range(-1.0..1.0) / (m as f64).sqrt()
                    }
                }
            };
        }
    }
    Ok(theta)
}

/// Moves every centre onto a draw from `measure`, so that no node starts in
/// a region the fitting batches never visit.
fn centers_from(spec: &NetSpec, theta: &mut [f64], measure: &Measure, rng: &mut Rng) -> Result<()> {
    let layout = spec.layout()?;
    let centers: Vec<_> = layout.entries.iter().filter(|e| e.role == Role::Center).collect();
    let points = draw(measure, centers.len(), rng)?;
    for (e, x) in centers.iter().zip(points.iter()) {
        theta[e.range.clone()].copy_from_slice(x);
    }
    Ok(())
}

struct Partial {
    loss: f64,
    grad: Vec<f64>,
}

/// Mean squared misfit on `samples` and, when `with_grad`, its full-length gradient.
pub fn fit_loss(
    spec: &NetSpec,
    theta: &[f64],
    samples: &SampleSet,
    targets: &[f64],
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    spec.value(theta, samples.point(0))?;
    let n = samples.len() as f64;
    let p = theta.len();
    let total = tree_reduce(
        samples.len(),
        |range| {
            let mut part = Partial { loss: 0.0, grad: if with_grad { vec![0.0; p] } else { vec![] } };
            for i in range {
                let x = samples.point(i);
                let r = spec.value_unchecked(theta, x) - targets[i];
                part.loss += r * r;
                if with_grad {
                    let seed = Seed { u: 2.0 * r / n, ..Seed::value() };
                    spec.vjp_unchecked(theta, x, &seed, &mut part.grad);
                }
            }
            part
        },
        |mut a, b| {
            a.loss += b.loss;
            a.grad.iter_mut().zip(&b.grad).for_each(|(x, y)| *x += y);
            a
        },
    );
    Ok((total.loss / n, total.grad))
}

fn targets_on(samples: &SampleSet, target: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Vec<f64>> {
    let v: Vec<f64> = samples.iter().map(target).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("target values".into()));
    }
    Ok(v)
}

/// Optimizes the active entries of `theta` in place; returns the final training loss.
pub fn fit_from(
    spec: &NetSpec,
    theta: &mut [f64],
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    measure: &Measure,
    config: &FitConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let active = spec.layout()?.active().to_vec();
    let mut opt = Optimizer::new(config.optimizer, active.len());
    let mut x: Vec<f64> = active.iter().map(|&i| theta[i]).collect();
    let mut batch = None;
    let mut last = f64::NAN;
    for it in 0..config.iterations {
        if batch.is_none() || !config.frozen_batch {
            let s = draw(measure, config.batch, rng)?;
            let t = targets_on(&s, target)?;
            batch = Some((s, t));
        }
        let (s, t) = batch.as_ref().expect("drawn");
        let (loss, grad) = fit_loss(spec, theta, s, t, true)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("fit loss at iteration {it}")));
        }
        last = loss;
        let g: Vec<f64> = active.iter().map(|&i| grad[i]).collect();
        opt.step(&mut x, &g, config.schedule.at(it, config.iterations));
        for (&i, v) in active.iter().zip(&x) {
            theta[i] = *v;
        }
    }
    if let Some((s, t)) = batch.as_ref() {
        last = fit_loss(spec, theta, s, t, false)?.0;
    }
    Ok(last)
}

/// Fits `replicates` independently initialized networks to `target` and
/// returns the one with the lowest held-out error.
pub fn fit_initial(
    spec: &NetSpec,
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    measure: &Measure,
    config: &FitConfig,
    rng: &mut Rng,
) -> Result<(Vec<f64>, FitReport)> {
    if config.replicates == 0 {
        return Err(Error::Config("fitting needs at least one replicate".into()));
    }
    if config.batch == 0 || config.test_batch == 0 {
        return Err(Error::Config("fitting batches must be non-empty".into()));
    }
    spec.validate()?;
    measure.validate()?;
    let (lo, hi) = support_box(measure);
    let seed = crate::rng::fork_seed(rng);
    let test = draw(measure, config.test_batch, &mut stream(seed, 0))?;
    let test_targets = targets_on(&test, target)?;

    let results: Vec<Result<(Vec<f64>, f64, f64)>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64 + 1);
            let mut theta = init_params(spec, &lo, &hi, &mut rng)?;
            if matches!(measure, Measure::GaussianMixture { .. }) {
                centers_from(spec, &mut theta, measure, &mut rng)?;
            }
            let train = fit_from(spec, &mut theta, target, measure, config, &mut rng)?;
            let test_loss = fit_loss(spec, &theta, &test, &test_targets, false)?.0;
            Ok((theta, train, test_loss))
        })
        .collect();
    let mut thetas = Vec::new();
    let mut report = FitReport { train_losses: vec![], test_losses: vec![], best: 0 };
    for r in results {
        let (theta, train, test) = r?;
        thetas.push(theta);
        report.train_losses.push(train);
        report.test_losses.push(if test.is_finite() { test } else { f64::INFINITY });
    }
    report.best =
        (0..thetas.len()).min_by(|&a, &b| report.test_losses[a].total_cmp(&report.test_losses[b])).expect("non-empty");
    if !report.test_losses[report.best].is_finite() {
        return Err(Error::NonFinite("every replicate diverged".into()));
    }
    Ok((thetas.swap_remove(report.best), report))
}

/// Least-squares projection of `target` onto the span of the active
/// parameters of a network that is linear in them (frozen features with
/// plain coefficients).
pub fn project_coefficients(
    spec: &NetSpec,
    theta: &mut [f64],
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    samples: &SampleSet,
) -> Result<f64> {
    if !spec.frozen_features || spec.architecture == Architecture::ShallowSquaredGaussian {
        return Err(Error::InvalidSpec("projection needs a network linear in its active parameters".into()));
    }
    let layout = spec.layout()?;
    let active = layout.active().to_vec();
    let p = active.len();
    let n = samples.len();
    let targets = targets_on(samples, target)?;
    let mut g = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        let b = spec.eval(theta, samples.point(i), crate::params::DerivMask::VALUE.with_grad_theta())?;
        for (k, v) in b.grad_theta.expect("requested").iter().enumerate() {
            g[(i, k)] = *v;
        }
    }
    let gram = g.tr_mul(&g) / n as f64;
    let rhs = g.tr_mul(&DVector::from_vec(targets.clone())) / n as f64;
    let lambda = 1e-12 * gram.trace().max(1e-300) / p as f64;
    let shifted = &gram + DMatrix::<f64>::identity(p, p) * lambda;
    let coef = nalgebra::Cholesky::new(shifted).ok_or(Error::Factorization)?.solve(&rhs);
    for (k, &i) in active.iter().enumerate() {
        theta[i] = coef[k];
    }
    Ok(fit_loss(spec, theta, samples, &targets, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn quick() -> FitConfig {
        FitConfig {
            batch: 256,
            test_batch: 512,
            iterations: 1500,
            schedule: Schedule { lr: 0.05, final_factor: 1e-2 },
            replicates: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_target() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 3, 1);
        let measure = Measure::uniform_cube(1, -2.0, 2.0).unwrap();
        let (_, report) = fit_initial(&spec, &|_| 0.0, &measure, &quick(), &mut seeded(1)).unwrap();
        assert!(report.best_test_loss() < 1e-6, "{}", report.best_test_loss());
    }

    #[test]
    fn best_replicate_has_lowest_test_loss() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 2, 1);
        let measure = Measure::uniform_cube(1, -3.0, 3.0).unwrap();
        let target = |x: &[f64]| (-(x[0] - 0.5).powi(2)).exp() - 0.5 * (-(x[0] + 1.0).powi(2) * 4.0).exp();
        let (_, report) = fit_initial(&spec, &target, &measure, &quick(), &mut seeded(2)).unwrap();
        assert!(report.test_losses.iter().all(|&l| report.best_test_loss() <= l));
        assert_eq!(report.test_losses.len(), 3);
    }

    #[test]
    fn zero_replicates_is_an_error() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 2, 1);
        let measure = Measure::uniform_cube(1, 0.0, 1.0).unwrap();
        let cfg = FitConfig { replicates: 0, ..quick() };
        assert!(fit_initial(&spec, &|_| 0.0, &measure, &cfg, &mut seeded(0)).is_err());
    }

    #[test]
    fn projection_recovers_linear_combination() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 3, 1).frozen();
        let truth = vec![1.0, 2.0, -1.0, -0.5, 1.5, 0.5, 0.3, 3.0, 1.0];
        let mut theta = truth.clone();
        for i in [0, 3, 6] {
            theta[i] = 0.0;
        }
        let measure = Measure::uniform_cube(1, -2.0, 3.0).unwrap();
        let s = draw(&measure, 400, &mut seeded(3)).unwrap();
        let t = |x: &[f64]| spec.value(&truth, x).unwrap();
        let loss = project_coefficients(&spec, &mut theta, &t, &s).unwrap();
        assert!(loss < 1e-16);
        for i in [0, 3, 6] {
            assert!((theta[i] - truth[i]).abs() < 1e-6);
        }
    }
}
