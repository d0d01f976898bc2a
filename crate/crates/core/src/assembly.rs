//! Monte-Carlo estimates of the Galerkin operators
//!
//! ```text
//! M̃ = (1/n) Σ ∇_θU(x_i) ⊗ ∇_θU(x_i),   F̃ = (1/n) Σ ∇_θU(x_i) f(t, x_i, U)
//! ```
//!
//! and the regularized solve `(M̃ + λI) θ̇ = F̃`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::NetSpec;
use crate::pde::PdeProblem;
use crate::reduce::tree_reduce;
use crate::sampling::{Measure, SampleSet};

/// Tikhonov shift added to `M̃` before factorization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Regularization {
    /// `λ = factor · trace(M̃) / p`.
    Relative(f64),
    Absolute(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Relative(1e-6)
    }
}

impl Regularization {
    fn resolve(self, m: &DMatrix<f64>) -> f64 {
        match self {
            Regularization::Absolute(v) => v,
            Regularization::Relative(factor) => {
                let p = m.nrows().max(1) as f64;
                let tr = m.trace();
                if tr > 0.0 {
                    factor * tr / p
                } else {
                    factor
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssembledSystem {
    pub m: DMatrix<f64>,
    pub f: DVector<f64>,
    pub t: f64,
    pub n: usize,
    pub lambda: f64,
    /// Weighted mean of `f²` over the samples, for residual evaluation.
    pub f_sq_mean: f64,
}

impl AssembledSystem {
    /// `½ mean |∇_θU · η - f|²` on the samples the system was built from.
    pub fn residual(&self, eta: &[f64]) -> f64 {
        let eta = DVector::from_column_slice(eta);
        let quad = eta.dot(&(&self.m * &eta));
        (0.5 * (quad - 2.0 * eta.dot(&self.f) + self.f_sq_mean)).max(0.0)
    }
}

struct Partial {
    m: DMatrix<f64>,
    f: DVector<f64>,
    f_sq: f64,
    weight: f64,
}

/// Builds `M̃` and `F̃` at time `t` from `samples`.
///
/// With `reweight = Some(ν)` each term is weighted by `ν(x_i) / q(x_i)`
/// where `q` is the density that generated the samples, and the sums are
/// self-normalized by the total weight.
pub fn assemble(
    spec: &NetSpec,
    theta: &[f64],
    problem: &PdeProblem,
    t: f64,
    samples: &SampleSet,
    reweight: Option<&Measure>,
    regularization: Regularization,
) -> Result<AssembledSystem> {
    let layout = spec.layout()?;
    if theta.len() != layout.len() {
        return Err(Error::DimensionMismatch { expected: layout.len(), got: theta.len() });
    }
    if samples.dim != spec.dim || problem.dim != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: samples.dim });
    }
    if samples.is_empty() {
        return Err(Error::InvalidMeasure("empty sample set".into()));
    }
    let mask = problem.required_mask().with_grad_theta();
    // Surface unsupported derivative requests before the parallel loop.
    spec.eval(theta, samples.point(0), mask)?;

    let weights: Vec<f64> = match reweight {
        None => vec![1.0; samples.len()],
        Some(nominal) => {
            let mut w = Vec::with_capacity(samples.len());
            for (i, (x, lq)) in samples.iter().zip(&samples.log_density).enumerate() {
                // ω = q / ν; the estimator divides by ω.
                let omega = (lq - nominal.log_density(x)).exp();
                if !(omega > 0.0) || omega.is_nan() {
                    return Err(Error::InvalidWeight(i));
                }
                w.push(1.0 / omega);
            }
            w
        }
    };

    let active = layout.active().to_vec();
    let p = active.len();
    let frozen = spec.frozen_features;

    let reduced = tree_reduce(
        samples.len(),
        |range| -> Result<Partial> {
            let rows = range.len();
            let mut g = DMatrix::<f64>::zeros(rows, p);
            let mut rf = DVector::<f64>::zeros(rows);
            let mut f_sq = 0.0;
            let mut weight = 0.0;
            for (r, i) in range.enumerate() {
                let x = samples.point(i);
                let bundle = spec.eval_unchecked(theta, x, mask, frozen.then_some(&active[..]));
                let f = problem.rhs_jet(t, x, &bundle)?.value;
                if !f.is_finite() {
                    return Err(Error::NonFinite(format!("rhs at sample {i}")));
                }
                let w = weights[i];
                let sw = w.sqrt();
                let grad = bundle.grad_theta.as_ref().expect("requested");
                for (c, gv) in grad.iter().enumerate() {
                    g[(r, c)] = sw * gv;
                }
                rf[r] = sw * f;
                f_sq += w * f * f;
                weight += w;
            }
            Ok(Partial { m: g.tr_mul(&g), f: g.tr_mul(&rf), f_sq, weight })
        },
        |a, b| match (a, b) {
            (Ok(a), Ok(b)) => {
                Ok(Partial { m: a.m + b.m, f: a.f + b.f, f_sq: a.f_sq + b.f_sq, weight: a.weight + b.weight })
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
    )?;

    let norm = match reweight {
        None => samples.len() as f64,
        Some(_) => reduced.weight,
    };
    if !(norm > 0.0) {
        return Err(Error::ZeroDenominator("importance weights"));
    }
    let mut m = reduced.m / norm;
    let sym = (&m + m.transpose()) * 0.5;
    m = sym;
    let lambda = regularization.resolve(&m);
    Ok(AssembledSystem { m, f: reduced.f / norm, t, n: samples.len(), lambda, f_sq_mean: reduced.f_sq / norm })
}

/// Solves `(M̃ + λI) η = F̃` by Cholesky factorization.
pub fn solve_theta_dot(sys: &AssembledSystem) -> Result<Vec<f64>> {
    if !(sys.lambda >= 0.0) {
        return Err(Error::Config(format!("regularization must be non-negative, got {}", sys.lambda)));
    }
    let p = sys.m.nrows();
    let shifted = &sys.m + DMatrix::<f64>::identity(p, p) * sys.lambda;
    let chol = nalgebra::Cholesky::new(shifted.clone()).ok_or(Error::Factorization)?;
    let eta = chol.solve(&sys.f);
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization);
    }
    // One step of iterative refinement tightens the residual on ill-conditioned systems.
    let r = &sys.f - &shifted * &eta;
    let eta = eta + chol.solve(&r);
    Ok(eta.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Architecture, DerivMask};
    use crate::pde::{Domain, PdeKind};
    use crate::rng::seeded;
    use crate::sampling::draw;

    fn linear_setup() -> (NetSpec, Vec<f64>, PdeProblem) {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 3, 1).frozen();
        let theta = vec![1.0, 2.0, 0.2, -0.5, 1.5, 0.5, 0.3, 3.0, 0.8];
        let problem = PdeProblem::new(PdeKind::LinearDecay { rate: 1.0 }, 1, Domain::UnboundedRd).unwrap();
        (spec, theta, problem)
    }

    #[test]
    fn single_sample_is_rank_one() {
        let (spec, theta, problem) = linear_setup();
        let measure = Measure::uniform_cube(1, 0.0, 1.0).unwrap();
        let s = draw(&measure, 1, &mut seeded(1)).unwrap();
        let sys = assemble(&spec, &theta, &problem, 0.0, &s, None, Regularization::Absolute(0.0)).unwrap();
        let b = spec.eval(&theta, s.point(0), DerivMask::VALUE.with_grad_theta()).unwrap();
        let g = b.grad_theta.unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((sys.m[(i, j)] - g[i] * g[j]).abs() < 1e-15);
            }
            assert!((sys.f[i] - g[i] * (-b.u)).abs() < 1e-15);
        }
    }

    #[test]
    fn neutral_weights_match_plain_mode() {
        let (spec, theta, problem) = linear_setup();
        let measure = Measure::uniform_cube(1, -1.0, 2.0).unwrap();
        let s = draw(&measure, 500, &mut seeded(4)).unwrap();
        let plain = assemble(&spec, &theta, &problem, 0.0, &s, None, Regularization::default()).unwrap();
        let rew = assemble(&spec, &theta, &problem, 0.0, &s, Some(&measure), Regularization::default()).unwrap();
        assert!((plain.m.clone() - rew.m).amax() < 1e-14);
        assert!((plain.f.clone() - rew.f).amax() < 1e-14);
    }

    #[test]
    fn zero_proposal_density_is_rejected() {
        let (spec, theta, problem) = linear_setup();
        let proposal = Measure::uniform_cube(1, 0.0, 1.0).unwrap();
        let mut s = draw(&proposal, 4, &mut seeded(4)).unwrap();
        s.log_density[2] = f64::NEG_INFINITY;
        let nominal = Measure::uniform_cube(1, 0.0, 1.0).unwrap();
        let err = assemble(&spec, &theta, &problem, 0.0, &s, Some(&nominal), Regularization::default());
        assert!(matches!(err, Err(Error::InvalidWeight(2))));
    }

    #[test]
    fn insufficient_mask_is_reported() {
        let spec = NetSpec::new(Architecture::DeepTanhPeriodic { period: 60.0, layers: 2 }, 2, 1);
        let theta = vec![0.1; spec.param_count().unwrap()];
        let problem = PdeProblem::kdv(-20.0, 60.0);
        let s = draw(&Measure::uniform_cube(1, -20.0, 40.0).unwrap(), 8, &mut seeded(0)).unwrap();
        assert!(matches!(
            assemble(&spec, &theta, &problem, 0.0, &s, None, Regularization::default()),
            Err(Error::UnsupportedDerivative(_))
        ));
    }

    fn sys(m: DMatrix<f64>, f: Vec<f64>, lambda: f64) -> AssembledSystem {
        AssembledSystem { m, f: DVector::from_vec(f), t: 0.0, n: 1, lambda, f_sq_mean: 0.0 }
    }

    #[test]
    fn identity_system() {
        let v = vec![1.0, -2.0, 0.5];
        let eta = solve_theta_dot(&sys(DMatrix::identity(3, 3), v.clone(), 0.0)).unwrap();
        assert_eq!(eta, v);
    }

    #[test]
    fn pure_regularization() {
        let v = vec![1.0, -2.0];
        let eta = solve_theta_dot(&sys(DMatrix::zeros(2, 2), v.clone(), 1e-3)).unwrap();
        for (e, v) in eta.iter().zip(&v) {
            assert!((e - 1e3 * v).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_without_lambda_fails() {
        assert!(matches!(solve_theta_dot(&sys(DMatrix::zeros(2, 2), vec![1.0, 1.0], 0.0)), Err(Error::Factorization)));
    }
}
