//! Runtime property and oracle checks, run by `ngs run --suite properties`
//! and by the acceptance tests.

use rand::Rng as _;

use crate::assembly::{assemble, Regularization};
use crate::error::Result;
use crate::integrators::{integrate, IntegrateOptions, MeasurePolicy, SamplingPolicy, Setup, StepController};
use crate::oracles::{euler_maruyama, fp_moment_odes};
use crate::params::{Architecture, DerivMask, NetSpec, Role, Seed};
use crate::pde::{
    advection_exact, Domain, ForceSpec, GaussianPackets, PdeKind, PdeProblem, TrapCenter, TrapKind, TwoSoliton,
    Velocity,
};
use crate::reduce::tree_reduce;
use crate::rng::{seeded, Rng};
use crate::sampling::{draw, Measure};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, value: f64, bound: f64) -> Self {
        Check { name, passed: value < bound, detail: format!("{value:.3e} < {bound:.1e}") }
    }

    fn failed(name: &'static str, err: crate::Error) -> Self {
        Check { name, passed: false, detail: err.to_string() }
    }
}

/// Largest relative deviations of the analytic derivatives from central
/// differences at one point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DerivativeErrors {
    pub grad_theta: f64,
    pub grad_x: f64,
    pub diag_hess_x: f64,
    pub d3_x: Option<f64>,
    /// Mixed seed `(U, ∇_x U, diag ∇²_x U)` pulled back to θ.
    pub vjp: f64,
}

impl DerivativeErrors {
    pub fn max(&self) -> f64 {
        [self.grad_theta, self.grad_x, self.diag_hess_x, self.d3_x.unwrap_or(0.0), self.vjp]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8);
    num / den
}

fn central(f: impl Fn(f64) -> f64, at: f64) -> f64 {
    let h = 1e-5 * at.abs().max(1.0);
    (f(at + h) - f(at - h)) / (2.0 * h)
}

/// Checks every derivative the network provides at `(θ, x)` against central
/// differences of the next-lower derivative.
pub fn derivative_errors(spec: &NetSpec, theta: &[f64], x: &[f64], seed: &Seed) -> Result<DerivativeErrors> {
    let d = spec.dim;
    let with_d3 = d == 1 && spec.architecture.is_shallow();
    let mask = DerivMask { grad_theta: true, grad_x: true, diag_hess_x: true, d3_x: with_d3 };
    let b = spec.eval(theta, x, mask)?;
    let spatial = |xs: &[f64]| spec.eval(theta, xs, DerivMask { d3_x: false, grad_theta: false, ..mask });
    let shifted = |k: usize, v: f64| {
        let mut y = x.to_vec();
        y[k] = v;
        y
    };

    let fd_theta: Vec<f64> = (0..theta.len())
        .map(|i| {
            central(
                |v| {
                    let mut t = theta.to_vec();
                    t[i] = v;
                    spec.value(&t, x).expect("checked")
                },
                theta[i],
            )
        })
        .collect();
    let fd_grad: Vec<f64> =
        (0..d).map(|k| central(|v| spec.value(theta, &shifted(k, v)).expect("checked"), x[k])).collect();
    let mut fd_hess = Vec::with_capacity(d);
    for k in 0..d {
        let g = |v: f64| spatial(&shifted(k, v)).map(|s| s.grad_x.expect("requested")[k]);
        let h = 1e-5 * x[k].abs().max(1.0);
        fd_hess.push((g(x[k] + h)? - g(x[k] - h)?) / (2.0 * h));
    }
    let d3_x = if with_d3 {
        let h = 1e-5 * x[0].abs().max(1.0);
        let hess = |v: f64| spatial(&[v]).map(|s| s.diag_hess_x.expect("requested")[0]);
        let fd = (hess(x[0] + h)? - hess(x[0] - h)?) / (2.0 * h);
        Some(rel(&[b.d3_x.expect("requested")], &[fd]))
    } else {
        None
    };

    let mut pulled = vec![0.0; theta.len()];
    spec.vjp(theta, x, seed, &mut pulled)?;
    let seeded_value = |t: &[f64]| -> f64 {
        let s = spec.eval(t, x, DerivMask { grad_x: true, diag_hess_x: true, ..DerivMask::VALUE }).expect("checked");
        let dot = |a: &[f64], w: &[f64]| a.iter().zip(w).map(|(p, q)| p * q).sum::<f64>();
        seed.u * s.u
            + dot(&s.grad_x.expect("requested"), &seed.grad_x)
            + dot(&s.diag_hess_x.expect("requested"), &seed.diag_hess_x)
    };
    let fd_vjp: Vec<f64> = (0..theta.len())
        .map(|i| {
            central(
                |v| {
                    let mut t = theta.to_vec();
                    t[i] = v;
                    seeded_value(&t)
                },
                theta[i],
            )
        })
        .collect();

    let full_grad = {
        let mut g = vec![0.0; theta.len()];
        spec.vjp(theta, x, &Seed::value(), &mut g)?;
        g
    };
    let active = spec.layout()?.active().to_vec();
    let reported = b.grad_theta.expect("requested");
    let gathered: Vec<f64> = active.iter().map(|&i| full_grad[i]).collect();
    let fd_active: Vec<f64> = active.iter().map(|&i| fd_theta[i]).collect();

    Ok(DerivativeErrors {
        grad_theta: rel(&reported, &fd_active).max(rel(&gathered, &fd_active)),
        grad_x: rel(&b.grad_x.expect("requested"), &fd_grad),
        diag_hess_x: rel(&b.diag_hess_x.expect("requested"), &fd_hess),
        d3_x,
        vjp: rel(&pulled, &fd_vjp),
    })
}

/// A random architecture of small size; `case` cycles through the four families.
pub fn random_spec(case: usize, rng: &mut Rng) -> NetSpec {
    let arch = match case % 4 {
        0 => Architecture::ShallowGaussian,
        1 => Architecture::ShallowPeriodicGaussian { period: rng.random_range(1.5..4.0) },
        2 => Architecture::ShallowSquaredGaussian,
        _ => Architecture::DeepTanhPeriodic { period: rng.random_range(1.5..4.0), layers: rng.random_range(1..=3) },
    };
    NetSpec::new(arch, rng.random_range(1..=4), rng.random_range(1..=3))
}

/// Random parameters with bandwidths bounded away from zero.
pub fn random_theta(spec: &NetSpec, rng: &mut Rng) -> Result<Vec<f64>> {
    let layout = spec.layout()?;
    let mut theta = vec![0.0; layout.len()];
    for e in &layout.entries {
        for i in e.range.clone() {
            theta[i] = match e.role {
                Role::Bandwidth => rng.random_range(0.5..1.5),
                _ => rng.random_range(-1.0..1.0),
            };
        }
    }
    Ok(theta)
}

pub fn random_seed(d: usize, rng: &mut Rng) -> Seed {
    Seed {
        u: rng.random_range(-1.0..1.0),
        grad_x: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        diag_hess_x: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

/// Largest derivative error over `cases` random `(spec, θ, x)` triples.
pub fn gradient_sweep(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let spec = random_spec(case, &mut rng);
        let theta = random_theta(&spec, &mut rng)?;
        let x: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = random_seed(spec.dim, &mut rng);
        worst = worst.max(derivative_errors(&spec, &theta, &x, &s)?.max());
    }
    Ok(worst)
}

/// Relative final-time error of the coefficient dynamics of a frozen-feature
/// network under `∂_t u = -rate u`, which keeps `f` in the tangent space.
pub fn linear_consistency(rtol: f64) -> Result<f64> {
    let spec = NetSpec::new(Architecture::ShallowGaussian, 4, 1).frozen();
    let mut theta = vec![0.0; spec.param_count()?];
    for (i, node) in theta.chunks_exact_mut(3).enumerate() {
        node[0] = 1.0 + 0.5 * i as f64;
        node[1] = 1.5;
        node[2] = -1.5 + i as f64;
    }
    let rate = 0.7;
    let problem = PdeProblem::new(PdeKind::LinearDecay { rate }, 1, Domain::UnboundedRd)?;
    let policy = SamplingPolicy {
        regularization: Regularization::Absolute(0.0),
        ..SamplingPolicy::new(MeasurePolicy::Static(Measure::uniform_box(vec![-3.0], vec![3.0])?), 200)
    };
    let t1 = 2.0;
    let controller = StepController::rk45(rtol, rtol * 1e-2, 1e-2);
    let record = integrate(
        &theta,
        &controller,
        &IntegrateOptions::span(0.0, t1),
        Setup { spec: &spec, problem: &problem, policy: &policy },
        &mut seeded(5),
    )?;
    let decay = (-rate * t1).exp();
    let exact: Vec<f64> = theta.iter().enumerate().map(|(i, v)| if i % 3 == 0 { v * decay } else { *v }).collect();
    Ok(rel(record.final_theta(), &exact))
}

/// Largest `|u_t + 6 u u_x + u_xxx|` of the two-soliton solution over its collision.
pub fn kdv_residual() -> f64 {
    let s = TwoSoliton::default();
    let (ht, hx) = (1e-4, 1e-2);
    let mut worst = 0.0f64;
    for i in 0..=60 {
        let t = 6.0 * i as f64 / 60.0;
        for j in 0..=240 {
            let x = -20.0 + 60.0 * j as f64 / 240.0;
            let u = |dx: f64| s.eval(t, x + dx);
            let ut = (s.eval(t + ht, x) - s.eval(t - ht, x)) / (2.0 * ht);
            let ux = (u(hx) - u(-hx)) / (2.0 * hx);
            let uxxx = (u(2.0 * hx) - 2.0 * u(hx) + 2.0 * u(-hx) - u(-2.0 * hx)) / (2.0 * hx * hx * hx);
            worst = worst.max((ut + 6.0 * u(0.0) * ux + uxxx).abs());
        }
    }
    worst
}

/// Largest `|u_t + a · ∇u|` of the exact time-only advection solution at random points.
pub fn advection_residual(seed: u64) -> Result<f64> {
    let d = 3;
    let v = Velocity::time_only(d);
    let p = GaussianPackets::advection_time_only(d);
    let law = p.law(&vec![0.0; d])?;
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    let h = 1e-5;
    for _ in 0..200 {
        let t: f64 = rng.random_range(0.0..1.0);
        let s = v.displacement(t)?;
        let mut x = draw(&law, 1, &mut rng)?.points;
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        let u = |t: f64, x: &[f64]| advection_exact(&v, |y| p.eval(y), t, x);
        let ut = (u(t + h, &x)? - u(t - h, &x)?) / (2.0 * h);
        let mut a = vec![0.0; d];
        v.at(t, &x, &mut a);
        let mut adv = 0.0;
        for k in 0..d {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            adv += a[k] * (u(t, &xp)? - u(t, &xm)?) / (2.0 * h);
        }
        worst = worst.max((ut + adv).abs());
    }
    Ok(worst)
}

/// Largest deviation of the moment ODEs at `α = 0` from their closed form.
pub fn moment_closed_form() -> Result<f64> {
    let d = 3;
    let center = TrapCenter::oscillating();
    let diffusion = 0.05;
    let mean0 = vec![0.3, 1.0, 2.0];
    let mut cov0 = vec![0.0; d * d];
    for i in 0..d {
        cov0[i * d + i] = 0.1 * (i + 1) as f64;
    }
    cov0[1] = 0.02;
    cov0[3] = 0.02;
    let times = [0.0, 0.5, 1.0, 2.0];
    let traj = fp_moment_odes(d, 0.0, &center, diffusion, &mean0, &cov0, &times)?;
    let (s, w, o) = (center.scale, center.frequency, center.offset);
    let mut worst = 0.0f64;
    for (k, &t) in times.iter().enumerate() {
        let e = (-t).exp();
        for i in 0..d {
            let c = mean0[i] - s * o + s * w / (1.0 + w * w);
            let exact = c * e + s * o + s * ((w * t).sin() - w * (w * t).cos()) / (1.0 + w * w);
            worst = worst.max((traj.means[k][i] - exact).abs());
            for j in 0..d {
                let decay = cov0[i * d + j] * e * e;
                let exact = if i == j { decay + diffusion * (1.0 - e * e) } else { decay };
                worst = worst.max((traj.covs[k][i * d + j] - exact).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest deviation of particle statistics from the moment ODEs, in units
/// of the Monte-Carlo standard error.
pub fn particles_against_moments(paths: usize, seed: u64) -> Result<f64> {
    let d = 2;
    let force = ForceSpec { trap: TrapKind::Harmonic, center: TrapCenter::oscillating(), alpha: 0.25, diffusion: 0.01 };
    let p = GaussianPackets::particle_initial(d, 0.1);
    let times = [0.0, 0.25, 0.5];
    let ens = euler_maruyama(&force, d, paths, 1e-3, &times, &p.law(&[0.0, 0.0])?, seed)?;
    let mut cov0 = vec![0.0; d * d];
    cov0[0] = 0.1;
    cov0[3] = 0.1;
    let ode = fp_moment_odes(d, force.alpha, &force.center, force.diffusion, &p.means[0], &cov0, &times)?;
    let mut worst = 0.0f64;
    for k in 1..times.len() {
        for i in 0..d {
            worst = worst.max((ens.means[k][i] - ode.means[k][i]).abs() / ens.mean_se[k][i]);
            worst = worst.max((ens.covs[k][i * d + i] - ode.covs[k][i * d + i]).abs() / ens.var_se[k][i]);
        }
    }
    Ok(worst)
}

/// Smallest eigenvalue of `M̃` relative to its trace, and its asymmetry.
fn mass_matrix_shape(seed: u64) -> Result<(f64, f64)> {
    let mut rng = seeded(seed);
    let spec = NetSpec::new(Architecture::ShallowGaussian, 5, 2);
    let theta = random_theta(&spec, &mut rng)?;
    let problem = PdeProblem::new(PdeKind::LinearDecay { rate: 1.0 }, 2, Domain::UnboundedRd)?;
    let samples = draw(&spec.as_mixture(&theta, 1.0)?, 500, &mut rng)?;
    let sys = assemble(&spec, &theta, &problem, 0.0, &samples, None, Regularization::Absolute(0.0))?;
    let asym = (&sys.m - sys.m.transpose()).abs().max();
    let min = sys.m.clone().symmetric_eigenvalues().min();
    Ok((min / sys.m.trace(), asym))
}

/// Whether a parallel reduction returns the same bits on one and on several workers.
fn reduction_is_pool_independent() -> bool {
    let values: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 1e3f64.powi(i % 5)).collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("pool")
            .install(|| tree_reduce(values.len(), |r| values[r].iter().sum::<f64>(), |a, b| a + b))
    };
    run(1).to_bits() == run(4).to_bits()
}

fn periodicity(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for case in [1usize, 3, 5, 7] {
        let spec = random_spec(case, &mut rng);
        let theta = random_theta(&spec, &mut rng)?;
        let period = spec.architecture.period().expect("periodic case");
        let x: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for k in 0..spec.dim {
            let mut y = x.clone();
            y[k] += period;
            worst = worst.max((spec.value(&theta, &x)? - spec.value(&theta, &y)?).abs());
        }
    }
    Ok(worst)
}

/// Every check of the property suite.
pub fn properties(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut record = |name: &'static str, r: Result<f64>, bound: f64| {
        out.push(match r {
            Ok(v) => Check::new(name, v, bound),
            Err(e) => Check::failed(name, e),
        })
    };
    record("derivatives match finite differences", gradient_sweep(100, seed), 1e-5);
    record("periodic networks are periodic", periodicity(seed), 1e-10);
    record("galerkin reproduces linear coefficient dynamics", linear_consistency(1e-10), 1e-8);
    record("two-soliton solves KdV", Ok(kdv_residual()), 1e-3);
    record("time-only advection solution solves the equation", advection_residual(seed), 1e-3);
    record("moment equations match the closed form at zero coupling", moment_closed_form(), 1e-8);
    record(
        "particle statistics agree with the moment equations (standard errors)",
        particles_against_moments(4000, seed),
        4.0,
    );
    match mass_matrix_shape(seed) {
        Ok((min, asym)) => {
            out.push(Check::new("mass matrix is symmetric", asym, 1e-12));
            out.push(Check {
                name: "mass matrix is positive semidefinite",
                passed: min > -1e-12,
                detail: format!("{min:.3e}"),
            });
        }
        Err(e) => out.push(Check::failed("mass matrix shape", e)),
    }
    let same = reduction_is_pool_independent();
    out.push(Check { name: "reductions are independent of the worker count", passed: same, detail: String::new() });
    out
}
