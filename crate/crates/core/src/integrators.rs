//! Time integration of the parameter dynamics.
//!
//! Explicit schemes advance `θ̇ = η(t, θ)` where `η` solves the assembled
//! Galerkin system on freshly drawn samples. The implicit scheme minimizes
//! the time-discrete residual of one backward Euler step over the next
//! parameter vector.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, solve_theta_dot, Regularization};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind, Schedule};
use crate::params::{NetSpec, Seed};
use crate::pde::PdeProblem;
use crate::reduce::tree_reduce;
use crate::rng::Rng;
use crate::sampling::{draw, Measure, SampleSet};

/// Loss minimized by the implicit step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitLoss {
    /// `mean |U(φ) - U(θ) - δt f(t+δt, U(φ))|²`, optimized by the inner optimizer.
    #[default]
    Residual,
    /// Fixed-point iteration `φ ← θ + δt η(t+δt, φ)` on the discrete Galerkin equation.
    GalerkinFixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitConfig {
    pub iterations: usize,
    pub schedule: Schedule,
    pub batch: usize,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub loss: ImplicitLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    ForwardEuler,
    Rk45 { rtol: f64, atol: f64, min_step: f64, max_step: f64 },
    BackwardEulerOpt(ImplicitConfig),
}

/// Scheme plus the step size (fixed, or initial for RK45).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepController {
    pub scheme: Scheme,
    pub dt: f64,
}

impl StepController {
    pub fn forward_euler(dt: f64) -> Self {
        StepController { scheme: Scheme::ForwardEuler, dt }
    }

    pub fn rk45(rtol: f64, atol: f64, dt0: f64) -> Self {
        StepController { scheme: Scheme::Rk45 { rtol, atol, min_step: 1e-10, max_step: f64::INFINITY }, dt: dt0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("step size must be positive, got {}", self.dt)));
        }
        match &self.scheme {
            Scheme::ForwardEuler => Ok(()),
            Scheme::Rk45 { rtol, atol, min_step, max_step } => {
                if !(*rtol > 0.0) || !(*atol > 0.0) {
                    return Err(Error::Config("RK45 tolerances must be positive".into()));
                }
                if !(*min_step > 0.0) || !(max_step >= min_step) {
                    return Err(Error::Config("RK45 needs 0 < min_step <= max_step".into()));
                }
                Ok(())
            }
            Scheme::BackwardEulerOpt(c) => {
                if c.iterations == 0 || c.batch == 0 {
                    return Err(Error::Config("implicit step needs at least one iteration and sample".into()));
                }
                if !(c.schedule.lr > 0.0) || !(c.schedule.final_factor > 0.0) {
                    return Err(Error::Config("inner learning rate must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

/// Where residual samples come from.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasurePolicy {
    Static(Measure),
    /// The Gaussian mixture aligned with the network's own nodes.
    Adaptive {
        kappa: f64,
    },
}

/// When samples are redrawn during an explicit step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    PerStage,
    PerStep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPolicy {
    pub measure: MeasurePolicy,
    pub n: usize,
    pub resample: Resample,
    /// Nominal measure for importance reweighting.
    pub reweight: Option<Measure>,
    pub regularization: Regularization,
}

impl SamplingPolicy {
    pub fn new(measure: MeasurePolicy, n: usize) -> Self {
        SamplingPolicy {
            measure,
            n,
            resample: Resample::PerStage,
            reweight: None,
            regularization: Regularization::default(),
        }
    }

    pub fn measure_at(&self, spec: &NetSpec, theta: &[f64]) -> Result<Measure> {
        match &self.measure {
            MeasurePolicy::Static(m) => Ok(m.clone()),
            MeasurePolicy::Adaptive { kappa } => spec.as_mixture(theta, *kappa),
        }
    }
}

/// Everything a step needs besides the state.
#[derive(Clone, Copy, Debug)]
pub struct Setup<'a> {
    pub spec: &'a NetSpec,
    pub problem: &'a PdeProblem,
    pub policy: &'a SamplingPolicy,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub rejected: usize,
    /// `J` of the Galerkin solve at the start of the step.
    pub residual: f64,
    /// `½ mean f²` on the same samples, the residual of `θ̇ = 0`.
    pub rhs_energy: f64,
    pub samples: usize,
    /// Final inner loss of an implicit step.
    pub loss: Option<f64>,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "step,t,dt,rejected,residual,rhs_energy,samples,loss";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{},{:.12e},{:.12e},{},{}",
            self.step,
            self.t,
            self.dt,
            self.rejected,
            self.residual,
            self.rhs_energy,
            self.samples,
            self.loss.map(|l| format!("{l:.12e}")).unwrap_or_default()
        )
    }
}

/// A first-order system `y' = f(t, y)`.
pub trait VectorField {
    fn eval(&mut self, t: f64, y: &[f64]) -> Result<Vec<f64>>;

    /// Called once before the stages of each attempted step.
    fn begin_step(&mut self, _t: f64, _y: &[f64]) -> Result<()> {
        Ok(())
    }
}

impl<F> VectorField for F
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    fn eval(&mut self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self(t, y)
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Dormand–Prince 5(4) with a PI step-size controller.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub min_step: f64,
    pub max_step: f64,
    h: f64,
    err_old: f64,
}

#[derive(Clone, Debug)]
pub struct AcceptedStep {
    pub t: f64,
    pub y: Vec<f64>,
    pub h: f64,
    pub rejected: usize,
}

impl Dopri5 {
    const SAFETY: f64 = 0.9;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;
    const BETA: f64 = 0.04;

    pub fn new(rtol: f64, atol: f64, h0: f64, min_step: f64, max_step: f64) -> Self {
        Dopri5 { rtol, atol, min_step, max_step, h: h0.min(max_step), err_old: 1e-4 }
    }

    /// Proposed size of the next step.
    pub fn next_step(&self) -> f64 {
        self.h
    }

    /// Takes one accepted step from `(t, y)` that does not pass `t_end`.
    pub fn step(&mut self, field: &mut impl VectorField, t: f64, y: &[f64], t_end: f64) -> Result<AcceptedStep> {
        let n = y.len();
        let mut rejected = 0;
        loop {
            let remaining = t_end - t;
            let (h, lands) = if self.h >= remaining * (1.0 - 1e-12) { (remaining, true) } else { (self.h, false) };
            if h < self.min_step && !lands {
                return Err(Error::StepUnderflow { t, h, min: self.min_step });
            }
            field.begin_step(t, y)?;
            let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
            let mut stage = vec![0.0; n];
            for s in 0..7 {
                stage.copy_from_slice(y);
                for (j, kj) in k.iter().enumerate() {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..n {
                            stage[i] += h * a * kj[i];
                        }
                    }
                }
                k.push(field.eval(t + C[s] * h, &stage)?);
            }
            // The last stage point is the fifth-order solution.
            let y_new = stage;
            let mut acc = 0.0;
            for i in 0..n {
                let e: f64 = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                acc += (e / sc).powi(2);
            }
            let mut err = if n == 0 { 0.0 } else { (acc / n as f64).sqrt() };
            if !err.is_finite() {
                err = f64::INFINITY;
            }
            let expo = 0.2 - 0.75 * Self::BETA;
            if err <= 1.0 {
                let fac = (err.max(1e-16).powf(expo) / self.err_old.powf(Self::BETA) / Self::SAFETY)
                    .clamp(1.0 / Self::FAC_MAX, 1.0 / Self::FAC_MIN);
                let proposed = (h / fac).min(self.max_step);
                if !lands || proposed > self.h {
                    self.h = proposed;
                }
                self.err_old = err.max(1e-4);
                let t_new = if lands { t_end } else { t + h };
                return Ok(AcceptedStep { t: t_new, y: y_new, h, rejected });
            }
            rejected += 1;
            let fac = if err.is_finite() {
                (err.powf(expo) / Self::SAFETY).min(1.0 / Self::FAC_MIN)
            } else {
                1.0 / Self::FAC_MIN
            };
            self.h = h / fac;
            if self.h < self.min_step {
                return Err(Error::StepUnderflow { t, h: self.h, min: self.min_step });
            }
        }
    }

    /// Integrates from `t0` to each of `times` (ascending, all `>= t0`).
    pub fn solve(&mut self, field: &mut impl VectorField, t0: f64, y0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            if target < t {
                return Err(Error::Config("output times must be ascending".into()));
            }
            while t < target {
                let s = self.step(field, t, &y, target)?;
                t = s.t;
                y = s.y;
            }
            out.push(y.clone());
        }
        Ok(out)
    }
}

/// The Galerkin vector field over the active parameters.
struct Galerkin<'a, 'r> {
    setup: Setup<'a>,
    rng: &'r mut Rng,
    full: Vec<f64>,
    active: Option<Vec<usize>>,
    frozen_samples: Option<SampleSet>,
    first: Option<(f64, f64)>,
}

impl<'a, 'r> Galerkin<'a, 'r> {
    fn new(setup: Setup<'a>, theta: &[f64], rng: &'r mut Rng) -> Result<Self> {
        let layout = setup.spec.layout()?;
        if theta.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), got: theta.len() });
        }
        let active = setup.spec.frozen_features.then(|| layout.active().to_vec());
        Ok(Galerkin { setup, rng, full: theta.to_vec(), active, frozen_samples: None, first: None })
    }

    fn gather(&self, full: &[f64]) -> Vec<f64> {
        match &self.active {
            Some(a) => a.iter().map(|&i| full[i]).collect(),
            None => full.to_vec(),
        }
    }

    fn scatter(&mut self, y: &[f64]) {
        match &self.active {
            Some(a) => {
                for (&i, v) in a.iter().zip(y) {
                    self.full[i] = *v;
                }
            }
            None => self.full.copy_from_slice(y),
        }
    }

    fn draw_at_current(&mut self) -> Result<SampleSet> {
        let measure = self.setup.policy.measure_at(self.setup.spec, &self.full)?;
        draw(&measure, self.setup.policy.n, self.rng)
    }
}

impl VectorField for Galerkin<'_, '_> {
    fn begin_step(&mut self, _t: f64, y: &[f64]) -> Result<()> {
        self.first = None;
        if self.setup.policy.resample == Resample::PerStep {
            self.scatter(y);
            self.frozen_samples = Some(self.draw_at_current()?);
        }
        Ok(())
    }

    fn eval(&mut self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.scatter(y);
        let samples = match self.setup.policy.resample {
            Resample::PerStep if self.frozen_samples.is_some() => self.frozen_samples.clone().expect("checked"),
            _ => self.draw_at_current()?,
        };
        let p = self.setup.policy;
        let sys = assemble(
            self.setup.spec,
            &self.full,
            self.setup.problem,
            t,
            &samples,
            p.reweight.as_ref(),
            p.regularization,
        )?;
        let eta = solve_theta_dot(&sys)?;
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter velocity at t = {t}")));
        }
        if self.first.is_none() {
            self.first = Some((sys.residual(&eta), 0.5 * sys.f_sq_mean));
        }
        Ok(eta)
    }
}

/// One explicit step of size `controller.dt` (Euler) or one accepted
/// adaptive step (RK45, using `dopri` for controller state).
pub fn step_explicit(
    t: f64,
    theta: &mut [f64],
    controller: &StepController,
    dopri: Option<&mut Dopri5>,
    t_limit: f64,
    setup: Setup<'_>,
    rng: &mut Rng,
) -> Result<StepDiagnostics> {
    let mut field = Galerkin::new(setup, theta, rng)?;
    let y = field.gather(theta);
    let (t_new, y_new, dt, rejected) = match &controller.scheme {
        Scheme::ForwardEuler => {
            let dt = land(t, controller.dt, t_limit);
            field.begin_step(t, &y)?;
            let eta = field.eval(t, &y)?;
            let y_new: Vec<f64> = y.iter().zip(&eta).map(|(a, b)| a + dt * b).collect();
            let t_new = if t + dt >= t_limit { t_limit } else { t + dt };
            (t_new, y_new, dt, 0)
        }
        Scheme::Rk45 { rtol, atol, min_step, max_step } => {
            let mut local;
            let dopri = match dopri {
                Some(d) => d,
                None => {
                    local = Dopri5::new(*rtol, *atol, controller.dt, *min_step, *max_step);
                    &mut local
                }
            };
            let s = dopri.step(&mut field, t, &y, t_limit)?;
            (s.t, s.y, s.h, s.rejected)
        }
        Scheme::BackwardEulerOpt(_) => {
            return Err(Error::Config("step_explicit called with an implicit scheme".into()));
        }
    };
    let (residual, rhs_energy) = field.first.unwrap_or((f64::NAN, f64::NAN));
    field.scatter(&y_new);
    if field.full.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("parameters after step at t = {t}")));
    }
    theta.copy_from_slice(&field.full);
    Ok(StepDiagnostics { step: 0, t: t_new, dt, rejected, residual, rhs_energy, samples: setup.policy.n, loss: None })
}

fn land(t: f64, dt: f64, t_limit: f64) -> f64 {
    let remaining = t_limit - t;
    if dt >= remaining * (1.0 - 1e-9) {
        remaining
    } else {
        dt
    }
}

struct LossPartial {
    loss: f64,
    grad: Vec<f64>,
}

/// Value and gradient (full length) of the implicit residual loss at `phi`.
fn implicit_loss(
    setup: Setup<'_>,
    theta: &[f64],
    phi: &[f64],
    t_next: f64,
    dt: f64,
    samples: &SampleSet,
) -> Result<(f64, Vec<f64>)> {
    let spec = setup.spec;
    let problem = setup.problem;
    let mask = problem.required_mask();
    let n = samples.len() as f64;
    let p = phi.len();
    let total = tree_reduce(
        samples.len(),
        |range| -> Result<LossPartial> {
            let mut part = LossPartial { loss: 0.0, grad: vec![0.0; p] };
            for i in range {
                let x = samples.point(i);
                let u_theta = spec.value_unchecked(theta, x);
                let bundle = spec.eval_unchecked(phi, x, mask, None);
                let jet = problem.rhs_jet(t_next, x, &bundle)?;
                let r = bundle.u - u_theta - dt * jet.value;
                if !r.is_finite() {
                    return Err(Error::NonFinite(format!("implicit residual at sample {i}")));
                }
                part.loss += r * r;
                let s = 2.0 * r / n;
                let seed = Seed {
                    u: s * (1.0 - dt * jet.du),
                    grad_x: jet.dgrad.iter().map(|v| -s * dt * v).collect(),
                    diag_hess_x: jet.dhess.iter().map(|v| -s * dt * v).collect(),
                };
                spec.vjp_unchecked(phi, x, &seed, &mut part.grad);
            }
            Ok(part)
        },
        |a, b| match (a, b) {
            (Ok(mut a), Ok(b)) => {
                a.loss += b.loss;
                a.grad.iter_mut().zip(&b.grad).for_each(|(x, y)| *x += y);
                Ok(a)
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
    )?;
    Ok((total.loss / n, total.grad))
}

/// One backward Euler step of size `controller.dt`, solved by optimization.
pub fn step_implicit(
    t: f64,
    theta: &mut [f64],
    controller: &StepController,
    t_limit: f64,
    setup: Setup<'_>,
    rng: &mut Rng,
) -> Result<StepDiagnostics> {
    let Scheme::BackwardEulerOpt(cfg) = &controller.scheme else {
        return Err(Error::Config("step_implicit needs the backward Euler scheme".into()));
    };
    let spec = setup.spec;
    let layout = spec.layout()?;
    if theta.len() != layout.len() {
        return Err(Error::DimensionMismatch { expected: layout.len(), got: theta.len() });
    }
    if setup.problem.required_mask().d3_x {
        return Err(Error::UnsupportedDerivative("implicit step does not differentiate third derivatives".into()));
    }
    spec.eval(theta, &vec![0.0; spec.dim], setup.problem.required_mask())?;
    let dt = land(t, controller.dt, t_limit);
    let t_next = if t + dt >= t_limit { t_limit } else { t + dt };
    let measure = setup.policy.measure_at(spec, theta)?;
    let active = layout.active().to_vec();
    let mut phi = theta.to_vec();

    let loss = match cfg.loss {
        ImplicitLoss::Residual => {
            let mut opt = Optimizer::new(cfg.optimizer, active.len());
            let mut x: Vec<f64> = active.iter().map(|&i| phi[i]).collect();
            for it in 0..cfg.iterations {
                let samples = draw(&measure, cfg.batch, rng)?;
                let (l, grad) = implicit_loss(setup, theta, &phi, t_next, dt, &samples)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("implicit loss at t = {t}")));
                }
                let g: Vec<f64> = active.iter().map(|&i| grad[i]).collect();
                opt.step(&mut x, &g, cfg.schedule.at(it, cfg.iterations));
                for (&i, v) in active.iter().zip(&x) {
                    phi[i] = *v;
                }
            }
            let samples = draw(&measure, cfg.batch, rng)?;
            implicit_loss(setup, theta, &phi, t_next, dt, &samples)?.0
        }
        ImplicitLoss::GalerkinFixedPoint => {
            let mut misfit = f64::NAN;
            for _ in 0..cfg.iterations {
                let samples = draw(&measure, cfg.batch, rng)?;
                let sys = assemble(spec, &phi, setup.problem, t_next, &samples, None, setup.policy.regularization)?;
                let eta = solve_theta_dot(&sys)?;
                let mut next = theta.to_vec();
                for (k, &i) in active.iter().enumerate() {
                    next[i] += dt * eta[k];
                }
                misfit = active.iter().map(|&i| (next[i] - phi[i]).powi(2)).sum::<f64>().sqrt();
                phi = next;
            }
            misfit
        }
    };
    if !loss.is_finite() || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("implicit step at t = {t}")));
    }
    theta.copy_from_slice(&phi);
    Ok(StepDiagnostics {
        step: 0,
        t: t_next,
        dt,
        rejected: 0,
        residual: f64::NAN,
        rhs_energy: f64::NAN,
        samples: cfg.batch * cfg.iterations,
        loss: Some(loss),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub t: f64,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    /// θ at the requested output times (always including the start).
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub checkpoints: Vec<Checkpoint>,
    pub steps: Vec<StepDiagnostics>,
}

impl TrajectoryRecord {
    pub fn final_theta(&self) -> &[f64] {
        self.thetas.last().map(|v| &v[..]).unwrap_or(&[])
    }

    pub fn write_steps(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{}", StepDiagnostics::CSV_HEADER)?;
        for s in &self.steps {
            writeln!(f, "{}", s.csv_line())?;
        }
        f.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub t0: f64,
    pub t1: f64,
    /// Extra times at which θ is recorded; steps are shortened to land on them.
    pub output_times: Vec<f64>,
    pub checkpoint_stride: usize,
}

impl IntegrateOptions {
    pub fn span(t0: f64, t1: f64) -> Self {
        IntegrateOptions { t0, t1, output_times: vec![], checkpoint_stride: usize::MAX }
    }
}

/// Advances `theta0` over `[t0, t1]`. For backward integration pass the
/// reversed problem and a forward span.
pub fn integrate(
    theta0: &[f64],
    controller: &StepController,
    options: &IntegrateOptions,
    setup: Setup<'_>,
    rng: &mut Rng,
) -> Result<TrajectoryRecord> {
    match integrate_partial(theta0, controller, options, setup, rng) {
        (record, None) => Ok(record),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`integrate`], but a failure mid-run keeps the record up to the last
/// accepted step. Output times past the failure are missing from it.
pub fn integrate_partial(
    theta0: &[f64],
    controller: &StepController,
    options: &IntegrateOptions,
    setup: Setup<'_>,
    rng: &mut Rng,
) -> (TrajectoryRecord, Option<Error>) {
    let mut record = TrajectoryRecord::default();
    let err = run_into(&mut record, theta0, controller, options, setup, rng).err();
    (record, err)
}

fn run_into(
    record: &mut TrajectoryRecord,
    theta0: &[f64],
    controller: &StepController,
    options: &IntegrateOptions,
    setup: Setup<'_>,
    rng: &mut Rng,
) -> Result<()> {
    controller.validate()?;
    let (t0, t1) = (options.t0, options.t1);
    if !t0.is_finite() || !t1.is_finite() || t1 < t0 {
        return Err(Error::Config(format!("invalid time span [{t0}, {t1}]")));
    }
    if options.checkpoint_stride == 0 {
        return Err(Error::Config("checkpoint stride must be at least 1".into()));
    }
    let mut targets: Vec<f64> = options.output_times.iter().copied().filter(|&s| s > t0 && s < t1).collect();
    targets.push(t1);
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    record.times.push(t0);
    record.thetas.push(theta0.to_vec());
    record.checkpoints.push(Checkpoint { step: 0, t: t0, theta: theta0.to_vec() });
    if t1 == t0 {
        return Ok(());
    }
    let mut dopri = match &controller.scheme {
        Scheme::Rk45 { rtol, atol, min_step, max_step } => {
            Some(Dopri5::new(*rtol, *atol, controller.dt, *min_step, *max_step))
        }
        _ => None,
    };
    let mut theta = theta0.to_vec();
    let mut t = t0;
    let mut step = 0;
    let mut outcome = Ok(());
    'outer: for &target in &targets {
        while t < target {
            let stepped = match &controller.scheme {
                Scheme::BackwardEulerOpt(_) => step_implicit(t, &mut theta, controller, target, setup, rng),
                _ => step_explicit(t, &mut theta, controller, dopri.as_mut(), target, setup, rng),
            };
            let mut d = match stepped {
                Ok(d) => d,
                Err(e) => {
                    outcome = Err(e);
                    break 'outer;
                }
            };
            step += 1;
            d.step = step;
            t = d.t;
            record.steps.push(d);
            if step % options.checkpoint_stride == 0 {
                record.checkpoints.push(Checkpoint { step, t, theta: theta.clone() });
            }
        }
        record.times.push(t);
        record.thetas.push(theta.clone());
    }
    if record.checkpoints.last().map(|c| c.step) != Some(step) {
        record.checkpoints.push(Checkpoint { step, t, theta: theta.clone() });
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dopri_integrates_quartic_exactly() {
        let mut f = |t: f64, _y: &[f64]| -> Result<Vec<f64>> { Ok(vec![t.powi(4)]) };
        let mut d = Dopri5::new(1e-6, 1e-6, 0.1, 1e-12, 1.0);
        let y = d.solve(&mut f, 0.0, &[0.0], &[2.0]).unwrap();
        assert!((y[0][0] - 32.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn dopri_exponential() {
        let mut f = |_t: f64, y: &[f64]| -> Result<Vec<f64>> { Ok(vec![-y[0]]) };
        let mut d = Dopri5::new(1e-10, 1e-12, 1e-3, 1e-12, 1.0);
        let y = d.solve(&mut f, 0.0, &[1.0], &[1.0]).unwrap();
        assert!((y[0][0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn dopri_underflow_is_reported() {
        let mut f = |_t: f64, _y: &[f64]| -> Result<Vec<f64>> { Ok(vec![f64::NAN]) };
        let mut d = Dopri5::new(1e-6, 1e-6, 0.1, 1e-3, 1.0);
        assert!(matches!(d.solve(&mut f, 0.0, &[1.0], &[1.0]), Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn controller_validation() {
        assert!(StepController::forward_euler(0.0).validate().is_err());
        assert!(StepController::rk45(0.0, 1e-6, 1e-3).validate().is_err());
        let bad = StepController {
            scheme: Scheme::BackwardEulerOpt(ImplicitConfig {
                iterations: 0,
                schedule: Schedule::constant(1e-3),
                batch: 10,
                optimizer: OptimizerKind::adam(),
                loss: ImplicitLoss::Residual,
            }),
            dt: 0.1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn diagnostics_line_has_every_column() {
        let d = StepDiagnostics { step: 3, t: 0.5, dt: 0.1, loss: Some(1.0), ..Default::default() };
        assert_eq!(d.csv_line().split(',').count(), StepDiagnostics::CSV_HEADER.split(',').count());
    }
}
