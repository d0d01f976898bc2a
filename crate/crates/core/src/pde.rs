//! Right-hand sides `f(t, x, U)` of the evolution equations `∂_t u = f`,
//! their exact solutions where available, and the initial conditions of the
//! benchmark problems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{DerivMask, EvalBundle};
use crate::sampling::Measure;

/// Spatial domain of a problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// `[lo, lo + period)` along each axis, periodic.
    PeriodicBox {
        lo: Vec<f64>,
        period: Vec<f64>,
    },
    UnboundedRd,
}

/// Allen–Cahn reaction coefficient `a(t, x) = base + slope · t · sin(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionCoefficient {
    pub base: f64,
    pub slope: f64,
}

impl ReactionCoefficient {
    pub fn at(&self, t: f64, x: f64) -> f64 {
        self.base + self.slope * t * x.sin()
    }
}

/// Advection velocity fields built from `a_s = [1, …, d]` and
/// `a_v = 2 + (2/d)[0, …, d-1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Velocity {
    /// `a_s ⊙ (sin(a_v π t) + shift)`.
    TimeOnly { scale: Vec<f64>, frequency: Vec<f64>, shift: f64 },
    /// `a_s ⊙ (sin(a_v π t) + shift) ⊙ (x + 1) / 10`.
    SpaceTime { scale: Vec<f64>, frequency: Vec<f64>, shift: f64 },
}

impl Velocity {
    fn coefficient_vectors(d: usize) -> (Vec<f64>, Vec<f64>) {
        let scale = (1..=d).map(|i| i as f64).collect();
        let frequency = (0..d).map(|i| 2.0 + 2.0 / d as f64 * i as f64).collect();
        (scale, frequency)
    }

    pub fn time_only(d: usize) -> Self {
        let (scale, frequency) = Self::coefficient_vectors(d);
        Velocity::TimeOnly { scale, frequency, shift: 1.25 }
    }

    pub fn space_time(d: usize) -> Self {
        let (scale, frequency) = Self::coefficient_vectors(d);
        Velocity::SpaceTime { scale, frequency, shift: 3.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            Velocity::TimeOnly { scale, .. } | Velocity::SpaceTime { scale, .. } => scale.len(),
        }
    }

    pub fn at(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Velocity::TimeOnly { scale, frequency, shift } => {
                for k in 0..scale.len() {
                    out[k] = scale[k] * ((frequency[k] * PI * t).sin() + shift);
                }
            }
            Velocity::SpaceTime { scale, frequency, shift } => {
                for k in 0..scale.len() {
                    out[k] = scale[k] * ((frequency[k] * PI * t).sin() + shift) * (x[k] + 1.0) / 10.0;
                }
            }
        }
    }

    /// `∫_0^t a(s) ds` for the time-only field.
    pub fn displacement(&self, t: f64) -> Result<Vec<f64>> {
        match self {
            Velocity::TimeOnly { scale, frequency, shift } => Ok(scale
                .iter()
                .zip(frequency)
                .map(|(s, v)| s * ((1.0 - (v * PI * t).cos()) / (v * PI) + shift * t))
                .collect()),
            Velocity::SpaceTime { .. } => {
                Err(Error::ProblemMismatch("closed-form displacement needs a time-only velocity".into()))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    /// `g(t, x) = a(t) - x`
    Harmonic,
    /// `g(t, x) = (a(t) - x)³`
    Aharmonic,
}

/// Trap center `a(t) = scale · (sin(frequency · t) + offset)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapCenter {
    pub scale: f64,
    pub frequency: f64,
    pub offset: f64,
}

impl TrapCenter {
    pub fn constant(a: f64) -> Self {
        TrapCenter { scale: a, frequency: 0.0, offset: 1.0 }
    }

    /// `5/4 (sin(π t) + 3/2)`.
    pub fn oscillating() -> Self {
        TrapCenter { scale: 1.25, frequency: PI, offset: 1.5 }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.scale * ((self.frequency * t).sin() + self.offset)
    }
}

/// One-body force, pair interaction `K(x, y) = α/d (y - x)`, and diffusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSpec {
    pub trap: TrapKind,
    pub center: TrapCenter,
    pub alpha: f64,
    pub diffusion: f64,
}

impl ForceSpec {
    pub fn g(&self, t: f64, x: f64) -> f64 {
        let r = self.center.at(t) - x;
        match self.trap {
            TrapKind::Harmonic => r,
            TrapKind::Aharmonic => r * r * r,
        }
    }

    pub fn dg_dx(&self, t: f64, x: f64) -> f64 {
        match self.trap {
            TrapKind::Harmonic => -1.0,
            TrapKind::Aharmonic => {
                let r = self.center.at(t) - x;
                -3.0 * r * r
            }
        }
    }

    /// Total drift `h_i = g(t, x_i) + Σ_j K(x_i, x_j)` for every particle.
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let d = x.len() as f64;
        let mean = x.iter().sum::<f64>() / d;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.g(t, xi) + self.alpha * (mean - xi);
        }
    }

    /// `∂_{x_i} h_i`; the self-pair contributes nothing since `K(x, x) = 0`.
    pub fn drift_divergence_term(&self, t: f64, xi: f64, d: usize) -> f64 {
        self.dg_dx(t, xi) - self.alpha * (d as f64 - 1.0) / d as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PdeKind {
    /// `∂_t u = -∂³_x u - 6 u ∂_x u`
    Kdv,
    /// `∂_t u = ε ∂²_x u + a(t, x)(u - u³)`, so `u = ±1` attract where `a > 0`.
    AllenCahn { epsilon: f64, reaction: ReactionCoefficient },
    /// `∂_t u = -a(t, x) · ∇u`
    Advection { velocity: Velocity },
    /// `∂_t u = Σ_i -∂_i(u h_i) + D ∂²_i u`
    FokkerPlanck { force: ForceSpec },
    /// `∂_t u = -rate · u`, the linear test equation.
    LinearDecay { rate: f64 },
}

/// An evolution equation together with its domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub kind: PdeKind,
    pub dim: usize,
    pub domain: Domain,
    /// When set to `T`, the problem is integrated backwards from `T`:
    /// `f̃(τ, x, u) = -f(T - τ, x, u)`.
    #[serde(default)]
    pub time_reversal: Option<f64>,
}

/// `f` and its partial derivatives with respect to the bundle entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RhsJet {
    pub value: f64,
    pub du: f64,
    pub dgrad: Vec<f64>,
    pub dhess: Vec<f64>,
    pub dd3: f64,
}

impl PdeProblem {
    pub fn new(kind: PdeKind, dim: usize, domain: Domain) -> Result<Self> {
        let p = PdeProblem { kind, dim, domain, time_reversal: None };
        p.validate()?;
        Ok(p)
    }

    pub fn kdv(lo: f64, period: f64) -> Self {
        PdeProblem {
            kind: PdeKind::Kdv,
            dim: 1,
            domain: Domain::PeriodicBox { lo: vec![lo], period: vec![period] },
            time_reversal: None,
        }
    }

    /// The time-reversed problem on `[0, T]`.
    pub fn reversed(&self, t_end: f64) -> Self {
        let mut p = self.clone();
        p.time_reversal = match self.time_reversal {
            None => Some(t_end),
            Some(_) => None,
        };
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::ProblemMismatch("dimension must be at least 1".into()));
        }
        let periodic = matches!(self.domain, Domain::PeriodicBox { .. });
        if let Domain::PeriodicBox { lo, period } = &self.domain {
            if lo.len() != self.dim || period.len() != self.dim || period.iter().any(|p| !(*p > 0.0)) {
                return Err(Error::ProblemMismatch("periodic box must match the dimension".into()));
            }
        }
        match &self.kind {
            PdeKind::Kdv | PdeKind::AllenCahn { .. } if self.dim != 1 || !periodic => {
                Err(Error::ProblemMismatch("KdV and Allen–Cahn need d = 1 on a periodic domain".into()))
            }
            PdeKind::AllenCahn { epsilon, .. } if !(*epsilon > 0.0) => {
                Err(Error::ProblemMismatch("Allen–Cahn needs ε > 0".into()))
            }
            PdeKind::Advection { velocity } if velocity.dim() != self.dim => {
                Err(Error::ProblemMismatch("velocity dimension differs from the problem dimension".into()))
            }
            PdeKind::FokkerPlanck { force } if !(force.diffusion > 0.0) => {
                Err(Error::ProblemMismatch("Fokker–Planck needs D > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Derivatives of `U` that [`rhs`] reads.
    pub fn required_mask(&self) -> DerivMask {
        match self.kind {
            PdeKind::Kdv => DerivMask { grad_x: true, d3_x: true, ..Default::default() },
            PdeKind::AllenCahn { .. } => DerivMask { diag_hess_x: true, ..Default::default() },
            PdeKind::Advection { .. } => DerivMask { grad_x: true, ..Default::default() },
            PdeKind::FokkerPlanck { .. } => DerivMask { grad_x: true, diag_hess_x: true, ..Default::default() },
            PdeKind::LinearDecay { .. } => DerivMask::VALUE,
        }
    }

    fn physical_time(&self, t: f64) -> (f64, f64) {
        match self.time_reversal {
            Some(t_end) => (t_end - t, -1.0),
            None => (t, 1.0),
        }
    }

    /// `f` with its linearization in the bundle entries.
    pub fn rhs_jet(&self, t: f64, x: &[f64], bundle: &EvalBundle) -> Result<RhsJet> {
        let (t, sign) = self.physical_time(t);
        let d = self.dim;
        let grad = || bundle.grad_x.as_deref().ok_or(Error::MissingDerivative("grad_x"));
        let hess = || bundle.diag_hess_x.as_deref().ok_or(Error::MissingDerivative("diag_hess_x"));
        let u = bundle.u;
        let mut jet = match &self.kind {
            PdeKind::Kdv => {
                let ux = grad()?[0];
                let uxxx = bundle.d3_x.ok_or(Error::MissingDerivative("d3_x"))?;
                RhsJet { value: -uxxx - 6.0 * u * ux, du: -6.0 * ux, dgrad: vec![-6.0 * u], dhess: vec![], dd3: -1.0 }
            }
            PdeKind::AllenCahn { epsilon, reaction } => {
                let uxx = hess()?[0];
                let a = reaction.at(t, x[0]);
                RhsJet {
                    value: epsilon * uxx + a * (u - u * u * u),
                    du: a * (1.0 - 3.0 * u * u),
                    dgrad: vec![],
                    dhess: vec![*epsilon],
                    dd3: 0.0,
                }
            }
            PdeKind::Advection { velocity } => {
                let g = grad()?;
                let mut a = vec![0.0; d];
                velocity.at(t, x, &mut a);
                let value = -a.iter().zip(g).map(|(a, g)| a * g).sum::<f64>();
                RhsJet { value, du: 0.0, dgrad: a.iter().map(|v| -v).collect(), dhess: vec![], dd3: 0.0 }
            }
            PdeKind::FokkerPlanck { force } => {
                let (g, h2) = (grad()?, hess()?);
                let mut h = vec![0.0; d];
                force.drift(t, x, &mut h);
                let div: f64 = x.iter().map(|&xi| force.drift_divergence_term(t, xi, d)).sum();
                let mut value = -u * div;
                for i in 0..d {
                    value += -h[i] * g[i] + force.diffusion * h2[i];
                }
                RhsJet {
                    value,
                    du: -div,
                    dgrad: h.iter().map(|v| -v).collect(),
                    dhess: vec![force.diffusion; d],
                    dd3: 0.0,
                }
            }
            PdeKind::LinearDecay { rate } => {
                RhsJet { value: -rate * u, du: -rate, dgrad: vec![], dhess: vec![], dd3: 0.0 }
            }
        };
        if sign < 0.0 {
            jet.value = -jet.value;
            jet.du = -jet.du;
            jet.dgrad.iter_mut().for_each(|v| *v = -*v);
            jet.dhess.iter_mut().for_each(|v| *v = -*v);
            jet.dd3 = -jet.dd3;
        }
        Ok(jet)
    }
}

/// `f(t, x, U(θ))` for the problem's equation.
pub fn rhs(problem: &PdeProblem, t: f64, x: &[f64], bundle: &EvalBundle) -> Result<f64> {
    Ok(problem.rhs_jet(t, x, bundle)?.value)
}

/// Exact solution of the time-only advection problem: `u0(x - ∫_0^t a)`.
pub fn advection_exact(velocity: &Velocity, u0: impl Fn(&[f64]) -> f64, t: f64, x: &[f64]) -> Result<f64> {
    let s = velocity.displacement(t)?;
    let shifted: Vec<f64> = x.iter().zip(&s).map(|(x, s)| x - s).collect();
    Ok(u0(&shifted))
}

/// Hirota two-soliton solution of `∂_t u + 6 u ∂_x u + ∂³_x u = 0`:
/// `u = 2 ∂²_x log(1 + e^{η1} + e^{η2} + A e^{η1+η2})` with
/// `η_i = k_i (x - x_i) - k_i³ t` and `A = ((k1 - k2)/(k1 + k2))²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSoliton {
    pub k1: f64,
    pub k2: f64,
    /// Positions the two solitons would occupy at `t = 0` in isolation.
    pub x1: f64,
    pub x2: f64,
}

impl Default for TwoSoliton {
    fn default() -> Self {
        TwoSoliton { k1: 1.0, k2: 0.7, x1: -5.0, x2: 5.0 }
    }
}

impl TwoSoliton {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) || self.k1 == self.k2 {
            return Err(Error::ProblemMismatch("two-soliton needs distinct positive wavenumbers".into()));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let (k1, k2) = (self.k1, self.k2);
        let a12 = ((k1 - k2) / (k1 + k2)).powi(2);
        let e1 = k1 * (x - self.x1) - k1.powi(3) * t;
        let e2 = k2 * (x - self.x2) - k2.powi(3) * t;
        // u = 2 Var(κ) under softmax weights over the four τ terms.
        let exps = [0.0, e1, e2, e1 + e2 + a12.ln()];
        let kap = [0.0, k1, k2, k1 + k2];
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = exps.iter().map(|e| (e - max).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean: f64 = w.iter().zip(&kap).map(|(w, k)| w * k).sum::<f64>() / z;
        let var: f64 = w.iter().zip(&kap).map(|(w, k)| w * (k - mean).powi(2)).sum::<f64>() / z;
        2.0 * var
    }
}

/// Free-function form of [`TwoSoliton::eval`].
pub fn kdv_exact(solitons: &TwoSoliton, t: f64, x: f64) -> Result<f64> {
    solitons.validate()?;
    Ok(solitons.eval(t, x))
}

/// Sum of axis-aligned Gaussian packets `Σ_j amp_j exp(-½ Σ_k (x_k - μ_jk)² / var_jk)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPackets {
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub amplitudes: Vec<f64>,
}

impl GaussianPackets {
    /// Weighted sum of normalized Gaussian densities.
    pub fn densities(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        let dim = means[0].len();
        let amplitudes = variances
            .iter()
            .zip(&weights)
            .map(|(v, w)| w / v.iter().map(|s| (2.0 * PI * s).sqrt()).product::<f64>())
            .collect();
        GaussianPackets { dim, means, variances, amplitudes }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.means
            .iter()
            .zip(&self.variances)
            .zip(&self.amplitudes)
            .map(|((mu, var), a)| {
                let q: f64 = (0..self.dim).map(|k| (x[k] - mu[k]).powi(2) / var[k]).sum();
                a * (-0.5 * q).exp()
            })
            .sum()
    }

    pub fn mass(&self) -> f64 {
        self.variances
            .iter()
            .zip(&self.amplitudes)
            .map(|(v, a)| a * v.iter().map(|s| (2.0 * PI * s).sqrt()).product::<f64>())
            .sum()
    }

    /// The normalized law `u / ∫u`, shifted by `offset`.
    pub fn law(&self, offset: &[f64]) -> Result<Measure> {
        let mut means = Vec::new();
        let mut stds = Vec::new();
        let mut weights = Vec::new();
        for ((mu, var), a) in self.means.iter().zip(&self.variances).zip(&self.amplitudes) {
            means.extend(mu.iter().zip(offset).map(|(m, o)| m + o));
            stds.extend(var.iter().map(|v| v.sqrt()));
            weights.push(a * var.iter().map(|s| (2.0 * PI * s).sqrt()).product::<f64>());
        }
        Measure::gaussian_mixture(self.dim, means, stds, weights)
    }

    /// Packets of the time-only advection benchmark: means `1.1·1` and
    /// `¾(1.5 - (-1)^i i/(d+1))`, covariances `diag(2, 4, …, 2d)/200` and
    /// `diag(d, …, 1)/200`, unit amplitudes weighted one half each.
    pub fn advection_time_only(d: usize) -> Self {
        let mu1 = vec![1.1; d];
        let mu2 = (1..=d).map(|i| 0.75 * (1.5 - (-1f64).powi(i as i32) * i as f64 / (d as f64 + 1.0))).collect();
        let s1 = (1..=d).map(|i| 2.0 * i as f64 / 200.0).collect();
        let s2 = (1..=d).map(|i| (d + 1 - i) as f64 / 200.0).collect();
        GaussianPackets { dim: d, means: vec![mu1, mu2], variances: vec![s1, s2], amplitudes: vec![0.5, 0.5] }
    }

    /// `p_1/10 + p_2/10` with means `2 - [-1, 2, -3, 4, -5]/12`, `1.8 - [1, -2, 3, -4, 5]/12`
    /// and isotropic covariances `3/50`, `3/100`; truncated to the first `d ≤ 5` axes.
    pub fn advection_space_time(d: usize) -> Self {
        let mu1 = (1..=d).map(|i| 2.0 - (-1f64).powi(i as i32) * i as f64 / 12.0).collect();
        let mu2 = (1..=d).map(|i| 1.8 + (-1f64).powi(i as i32) * i as f64 / 12.0).collect();
        GaussianPackets::densities(vec![mu1, mu2], vec![vec![0.06; d], vec![0.03; d]], vec![0.1, 0.1])
    }

    /// Isotropic Gaussian density with mean `9/10 + 21/(10(d-1)) [0, …, d-1]` and variance `σ²`.
    pub fn particle_initial(d: usize, variance: f64) -> Self {
        let step = if d > 1 { 21.0 / (10.0 * (d as f64 - 1.0)) } else { 0.0 };
        let mu = (0..d).map(|i| 0.9 + step * i as f64).collect();
        GaussianPackets::densities(vec![mu], vec![vec![variance; d]], vec![1.0])
    }
}

/// Initial conditions of the benchmark problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    TwoSoliton(TwoSoliton),
    /// `Σ amp_j exp(-w_j² sin²(π (x - b_j)/L))`.
    PeriodicBumps {
        period: f64,
        bumps: Vec<(f64, f64, f64)>,
    },
    Packets(GaussianPackets),
}

impl InitialCondition {
    /// `φ_G^L(x, √10, 1/2) - φ_G^L(x, √10, 4.4)`.
    pub fn allen_cahn(period: f64) -> Self {
        let w = 10f64.sqrt();
        InitialCondition::PeriodicBumps { period, bumps: vec![(1.0, w, 0.5), (-1.0, w, 4.4)] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialCondition::TwoSoliton(s) => s.eval(0.0, x[0]),
            InitialCondition::PeriodicBumps { period, bumps } => {
                bumps.iter().map(|(a, w, b)| a * (-(w * w) * (PI * (x[0] - b) / period).sin().powi(2)).exp()).sum()
            }
            InitialCondition::Packets(p) => p.eval(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(u: f64, ux: f64, uxx: f64, uxxx: Option<f64>) -> EvalBundle {
        EvalBundle { u, grad_theta: None, grad_x: Some(vec![ux]), diag_hess_x: Some(vec![uxx]), d3_x: uxxx }
    }

    #[test]
    fn kdv_substitution() {
        let p = PdeProblem::kdv(-20.0, 60.0);
        assert_eq!(rhs(&p, 0.0, &[0.0], &bundle(1.0, 2.0, 0.0, Some(3.0))).unwrap(), -15.0);
    }

    #[test]
    fn allen_cahn_fixed_point() {
        let p = PdeProblem::new(
            PdeKind::AllenCahn { epsilon: 0.05, reaction: ReactionCoefficient { base: 1.05, slope: 1.0 } },
            1,
            Domain::PeriodicBox { lo: vec![0.0], period: vec![2.0 * PI] },
        )
        .unwrap();
        for (t, x) in [(0.0, 0.3), (2.0, 4.0)] {
            assert_eq!(rhs(&p, t, &[x], &bundle(1.0, 0.5, 0.0, None)).unwrap(), 0.0);
        }
        // a(0, x) = 1.05 pushes u = 1/2 up towards 1.
        let f = rhs(&p, 0.0, &[0.3], &bundle(0.5, 0.0, 0.0, None)).unwrap();
        assert!((f - 1.05 * 0.375).abs() < 1e-15);
        // a(2, 3π/2) = -0.95 pulls it back to 0.
        let f = rhs(&p, 2.0, &[1.5 * PI], &bundle(0.5, 0.0, 0.0, None)).unwrap();
        assert!((f + 0.95 * 0.375).abs() < 1e-15);
    }

    #[test]
    fn missing_derivative_and_mismatch() {
        let p = PdeProblem::kdv(-20.0, 60.0);
        assert!(matches!(rhs(&p, 0.0, &[0.0], &bundle(1.0, 2.0, 0.0, None)), Err(Error::MissingDerivative("d3_x"))));
        assert!(PdeProblem::new(PdeKind::Kdv, 2, Domain::UnboundedRd).is_err());
    }

    #[test]
    fn advection_is_linear_in_gradient() {
        let p =
            PdeProblem::new(PdeKind::Advection { velocity: Velocity::space_time(2) }, 2, Domain::UnboundedRd).unwrap();
        let b1 = EvalBundle { u: 1.0, grad_x: Some(vec![0.3, -0.7]), ..Default::default() };
        let b2 = EvalBundle { u: 1.0, grad_x: Some(vec![0.6, -1.4]), ..Default::default() };
        let f1 = rhs(&p, 0.4, &[0.2, 1.1], &b1).unwrap();
        let f2 = rhs(&p, 0.4, &[0.2, 1.1], &b2).unwrap();
        assert!((f2 - 2.0 * f1).abs() < 1e-14);
    }

    #[test]
    fn reversal_negates_and_mirrors_time() {
        let p =
            PdeProblem::new(PdeKind::Advection { velocity: Velocity::time_only(1) }, 1, Domain::UnboundedRd).unwrap();
        let r = p.reversed(1.0);
        let b = EvalBundle { u: 1.0, grad_x: Some(vec![0.5]), ..Default::default() };
        let f = rhs(&p, 0.7, &[0.0], &b).unwrap();
        let g = rhs(&r, 0.3, &[0.0], &b).unwrap();
        assert!((f + g).abs() < 1e-14);
        assert_eq!(r.reversed(1.0), p);
    }

    #[test]
    fn advection_exact_at_zero() {
        let v = Velocity::time_only(3);
        let u0 = |x: &[f64]| x.iter().map(|v| (-v * v).exp()).product::<f64>();
        let x = [0.2, -0.1, 0.5];
        assert_eq!(advection_exact(&v, u0, 0.0, &x).unwrap(), u0(&x));
        assert!(advection_exact(&Velocity::space_time(3), u0, 0.5, &x).is_err());
    }

    #[test]
    fn soliton_mass_is_twice_wavenumber_sum() {
        let s = TwoSoliton::default();
        let (a, b, n) = (-80.0, 120.0, 40_000);
        let h = (b - a) / n as f64;
        let mass: f64 = (0..n).map(|i| s.eval(0.0, a + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((mass - 2.0 * (s.k1 + s.k2)).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn packets_law_is_normalized_ratio() {
        let p = GaussianPackets::advection_time_only(2);
        let law = p.law(&[0.0, 0.0]).unwrap();
        for x in [[1.0, 1.1], [0.8, 1.3]] {
            assert!((law.density(&x) - p.eval(&x) / p.mass()).abs() < 1e-10);
        }
    }

    #[test]
    fn particle_initial_mean() {
        let p = GaussianPackets::particle_initial(8, 0.1);
        assert!((p.means[0][7] - 3.0).abs() < 1e-14);
        assert!((p.mass() - 1.0).abs() < 1e-14);
    }
}
