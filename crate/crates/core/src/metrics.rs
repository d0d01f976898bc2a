//! Error measures, residual estimates, marginals and density statistics.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::{Architecture, DerivMask, NetSpec};
use crate::pde::PdeProblem;
use crate::reduce::tree_reduce;
use crate::rng::Rng;
use crate::sampling::{draw, Measure, SampleSet};

/// `Σ_k ‖u(t_k) - ũ(t_k)‖² / Σ_k ‖u(t_k)‖²` over snapshots on a common grid.
///
/// This is a ratio of squared norms; see [`rel_l2_error_rooted`] for its square root.
pub fn rel_l2_error(reference: &[Vec<f64>], approx: &[Vec<f64>]) -> Result<f64> {
    if reference.len() != approx.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: approx.len() });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (u, v) in reference.iter().zip(approx) {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
        }
        for (a, b) in u.iter().zip(v) {
            num += (a - b) * (a - b);
            den += a * a;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("reference norm"));
    }
    Ok(num / den)
}

pub fn rel_l2_error_rooted(reference: &[Vec<f64>], approx: &[Vec<f64>]) -> Result<f64> {
    rel_l2_error(reference, approx).map(f64::sqrt)
}

/// Importance-weighted form of [`rel_l2_error`] for high-dimensional domains:
/// each triple is `(u, ũ, 1/q)` at a point drawn from `q`.
pub fn rel_l2_error_sampled(values: &[(f64, f64, f64)]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(u, v, w) in values {
        num += w * (u - v) * (u - v);
        den += w * u * u;
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("reference norm"));
    }
    Ok(num / den)
}

/// `(1/2n) Σ |∇_θU · θ̇ - f|²` on the given samples; `theta_dot` has one entry
/// per active parameter.
pub fn residual_on(
    spec: &NetSpec,
    theta: &[f64],
    theta_dot: &[f64],
    problem: &PdeProblem,
    t: f64,
    samples: &SampleSet,
) -> Result<f64> {
    let layout = spec.layout()?;
    if theta_dot.len() != layout.active().len() {
        return Err(Error::DimensionMismatch { expected: layout.active().len(), got: theta_dot.len() });
    }
    let mask = problem.required_mask().with_grad_theta();
    spec.eval(theta, samples.point(0), mask)?;
    let active = layout.active().to_vec();
    let total = tree_reduce(
        samples.len(),
        |range| -> Result<f64> {
            let mut acc = 0.0;
            for i in range {
                let x = samples.point(i);
                let b = spec.eval_unchecked(theta, x, mask, Some(&active));
                let f = problem.rhs_jet(t, x, &b)?.value;
                let g = b.grad_theta.as_ref().expect("requested");
                let r: f64 = g.iter().zip(theta_dot).map(|(a, b)| a * b).sum::<f64>() - f;
                acc += r * r;
            }
            Ok(acc)
        },
        |a, b| Ok(a? + b?),
    )?;
    Ok(0.5 * total / samples.len() as f64)
}

/// [`residual_on`] with `n` fresh samples from the network's own mixture at bandwidth scale `κ`.
#[allow(clippy::too_many_arguments)]
pub fn residual_estimate(
    spec: &NetSpec,
    theta: &[f64],
    theta_dot: &[f64],
    problem: &PdeProblem,
    t: f64,
    kappa: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let measure = spec.as_mixture(theta, kappa)?;
    let samples = draw(&measure, n, rng)?;
    residual_on(spec, theta, theta_dot, problem, t, &samples)
}

/// Monte-Carlo marginal `∫ u(t, x) dx_{-axis}` on `grid` at each of `times`.
///
/// `proposal(t)` is a `(d-1)`-dimensional measure for the remaining
/// coordinates; `u(t, x)` is the field being marginalized.
pub fn marginals(
    u: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    proposal: &dyn Fn(f64) -> Result<Measure>,
    dim: usize,
    axis: usize,
    times: &[f64],
    grid: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    if axis >= dim {
        return Err(Error::DimensionMismatch { expected: dim, got: axis });
    }
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if dim == 1 {
            out.push(grid.iter().map(|&xi| u(t, &[xi])).collect());
            continue;
        }
        let q = proposal(t)?;
        let s = draw(&q, n, rng)?;
        let inv_q: Vec<f64> = s.log_density.iter().map(|l| (-l).exp()).collect();
        let row = grid
            .iter()
            .map(|&xi| {
                let mut x = vec![0.0; dim];
                let mut acc = 0.0;
                for (j, y) in s.iter().enumerate() {
                    let mut k = 0;
                    for (a, slot) in x.iter_mut().enumerate() {
                        if a == axis {
                            *slot = xi;
                        } else {
                            *slot = y[k];
                            k += 1;
                        }
                    }
                    acc += u(t, &x) * inv_q[j];
                }
                acc / n as f64
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// How the squared-coefficient network is normalized into a density.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// Divide by the true mass `Σ c_i² (π / w_i²)^{d/2}`.
    Exact,
    /// Divide by `Σ c_i²` only.
    CoefficientSum,
}

fn check_squared(spec: &NetSpec, theta: &[f64]) -> Result<()> {
    if spec.architecture != Architecture::ShallowSquaredGaussian {
        return Err(Error::NotGaussian("density statistics need the squared-coefficient network"));
    }
    spec.param_count().and_then(|p| {
        if theta.len() == p {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: p, got: theta.len() })
        }
    })
}

/// Probability that a draw from the normalized network comes from node `i`.
pub fn node_probabilities(spec: &NetSpec, theta: &[f64]) -> Result<Vec<f64>> {
    check_squared(spec, theta)?;
    let d = spec.dim as f64;
    let stride = spec.dim + 2;
    let masses: Vec<f64> = theta
        .chunks_exact(stride)
        .map(|node| {
            let (c, w) = (node[0], node[1]);
            c * c * (PI / (w * w)).powf(d / 2.0)
        })
        .collect();
    let z: f64 = masses.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::ZeroDenominator("network mass"));
    }
    Ok(masses.iter().map(|m| m / z).collect())
}

/// Total mass `∫ Σ c_i² exp(-w_i²|x - b_i|²) dx`.
pub fn network_mass(spec: &NetSpec, theta: &[f64]) -> Result<f64> {
    check_squared(spec, theta)?;
    let d = spec.dim as f64;
    Ok(theta.chunks_exact(spec.dim + 2).map(|n| n[0] * n[0] * (PI / (n[1] * n[1])).powf(d / 2.0)).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityStats {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub cov: Vec<f64>,
    /// `-(1/n) Σ log Ū(x_i)` with the exact normalization.
    pub entropy: f64,
    /// Standard error of `entropy`.
    pub entropy_se: f64,
    /// The same estimate when `Ū = U / Σ c_i²`.
    pub entropy_coefficient_sum: f64,
    pub samples: Vec<f64>,
}

/// Samples the normalized squared-coefficient network exactly and returns
/// its sample mean, covariance and entropy estimate.
pub fn density_stats(spec: &NetSpec, theta: &[f64], n: usize, rng: &mut Rng) -> Result<DensityStats> {
    let probs = node_probabilities(spec, theta)?;
    if n < 2 {
        return Err(Error::Config("density statistics need at least two samples".into()));
    }
    let d = spec.dim;
    let stride = d + 2;
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cumulative.push(acc);
    }
    let mut points = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let i = cumulative.partition_point(|&c| c <= u).min(probs.len() - 1);
        let node = &theta[i * stride..(i + 1) * stride];
        let sd = 1.0 / (std::f64::consts::SQRT_2 * node[1].abs());
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            points.push(node[2 + k] + sd * z);
        }
    }
    let z_exact = network_mass(spec, theta)?;
    let z_coef: f64 = theta.chunks_exact(stride).map(|n| n[0] * n[0]).sum();
    let logs: Vec<f64> = points.chunks_exact(d).map(|x| spec.value_unchecked(theta, x).ln()).collect();
    let nf = n as f64;
    let mean_log = logs.iter().sum::<f64>() / nf;
    let var_log = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / (nf - 1.0);
    let (mean, cov) = sample_moments(&points, d);
    Ok(DensityStats {
        mean,
        cov,
        entropy: z_exact.ln() - mean_log,
        entropy_se: (var_log / nf).sqrt(),
        entropy_coefficient_sum: z_coef.ln() - mean_log,
        samples: points,
    })
}

/// Exact mean and row-major covariance of the normalized squared-coefficient network.
pub fn mixture_moments(spec: &NetSpec, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let probs = node_probabilities(spec, theta)?;
    let d = spec.dim;
    let stride = d + 2;
    let mut mean = vec![0.0; d];
    for (p, node) in probs.iter().zip(theta.chunks_exact(stride)) {
        for k in 0..d {
            mean[k] += p * node[2 + k];
        }
    }
    let mut cov = vec![0.0; d * d];
    for (p, node) in probs.iter().zip(theta.chunks_exact(stride)) {
        let var = 1.0 / (2.0 * node[1] * node[1]);
        for i in 0..d {
            let di = node[2 + i] - mean[i];
            cov[i * d + i] += p * var;
            for j in 0..d {
                cov[i * d + j] += p * di * (node[2 + j] - mean[j]);
            }
        }
    }
    Ok((mean, cov))
}

/// Sample mean and unbiased covariance of row-major points.
pub fn sample_moments(points: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (points.len() / d) as f64;
    let mut mean = vec![0.0; d];
    for x in points.chunks_exact(d) {
        for k in 0..d {
            mean[k] += x[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    for x in points.chunks_exact(d) {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1.0).max(1.0));
    (mean, cov)
}

/// Largest absolute excess kurtosis over the coordinate axes.
pub fn max_excess_kurtosis(points: &[f64], d: usize) -> f64 {
    let (mean, cov) = sample_moments(points, d);
    let n = (points.len() / d) as f64;
    (0..d)
        .map(|k| {
            let m4 = points.chunks_exact(d).map(|x| (x[k] - mean[k]).powi(4)).sum::<f64>() / n;
            (m4 / cov[k * d + k].powi(2) - 3.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Entropy `½ log((2πe)^d det C)` of a Gaussian with covariance `C`.
pub fn gaussian_entropy(cov: &[f64], d: usize) -> Result<f64> {
    let m = DMatrix::from_row_slice(d, d, cov);
    let chol = nalgebra::Cholesky::new(m).ok_or(Error::Factorization)?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (d as f64 * (2.0 * PI * E).ln() + log_det))
}

/// Values of `U(θ, ·)` on a grid of 1-D points.
pub fn on_grid(spec: &NetSpec, theta: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    spec.eval(theta, &grid[..1], DerivMask::VALUE)?;
    Ok(grid.iter().map(|&x| spec.value_unchecked(theta, &[x])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn mixture_moments_match_sampling() {
        let spec = NetSpec::new(Architecture::ShallowSquaredGaussian, 2, 2);
        let theta = vec![1.0, 1.0, 0.0, 1.0, 0.5, 2.0, 2.0, -1.0];
        let (mean, cov) = mixture_moments(&spec, &theta).unwrap();
        let stats = density_stats(&spec, &theta, 200_000, &mut seeded(3)).unwrap();
        for k in 0..2 {
            assert!((mean[k] - stats.mean[k]).abs() < 1e-2, "{mean:?} {:?}", stats.mean);
        }
        for k in 0..4 {
            assert!((cov[k] - stats.cov[k]).abs() < 2e-2, "{cov:?} {:?}", stats.cov);
        }
    }

    #[test]
    fn printed_formula_cases() {
        let u = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(rel_l2_error(&u, &u).unwrap(), 0.0);
        let z = vec![vec![0.0; 2]; 2];
        assert_eq!(rel_l2_error(&u, &z).unwrap(), 1.0);
        let half = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(rel_l2_error(&u, &half).unwrap(), 0.5);
        assert!(matches!(rel_l2_error(&z, &u), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn single_node_entropy() {
        let spec = NetSpec::new(Architecture::ShallowSquaredGaussian, 1, 2);
        let theta = vec![1.3, 1.0, 0.0, 0.0];
        let s = density_stats(&spec, &theta, 20_000, &mut seeded(5)).unwrap();
        let exact = (2.0 * PI * E * 0.5f64).ln();
        assert!((s.entropy - exact).abs() < 3.0 * s.entropy_se + 1e-12, "{} vs {exact}", s.entropy);
        for k in 0..2 {
            assert!((s.cov[k * 2 + k] - 0.5).abs() < 0.025);
        }
    }

    #[test]
    fn gaussian_entropy_identity() {
        let h = gaussian_entropy(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!((h - (2.0 * PI * E).ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_coefficients_have_no_density() {
        let spec = NetSpec::new(Architecture::ShallowSquaredGaussian, 2, 1);
        assert!(density_stats(&spec, &[0.0, 1.0, 0.0, 0.0, 2.0, 1.0], 10, &mut seeded(0)).is_err());
    }
}
