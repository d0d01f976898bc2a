//! Nonlinear parametrizations `U(θ, x)`.
//!
//! Four architectures are supported: shallow networks with Gaussian units
//! (plain, periodic, and with squared coefficients), and a periodic deep tanh
//! network. Every derivative the solver needs is computed in closed form:
//! parameter gradients, spatial gradients, the diagonal of the spatial
//! Hessian, and in one dimension the third spatial derivative.
//!
//! Mixed derivatives (parameter gradients of spatial derivatives) are exposed
//! through [`NetSpec::vjp`], a vector-Jacobian product seeded on the value,
//! the spatial gradient, and the diagonal Hessian.

mod checkpoint;
mod deep;
mod shallow;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::Measure;

/// Network family and its shape parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `Σ c_i exp(-w_i² |x - b_i|²)`.
    ShallowGaussian,
    /// `Σ c_i exp(-w_i² |sin(π (x - b_i) / L)|²)` on the torus of side `L`.
    ShallowPeriodicGaussian { period: f64 },
    /// `Σ c_i² exp(-w_i² |x - b_i|²)`, non-negative for every θ.
    ShallowSquaredGaussian,
    /// `cᵀ tanh(W_ℓ … tanh(W_1 sin(2π (x - b_1) / L)) + b_ℓ)` with `layers` hidden layers.
    DeepTanhPeriodic { period: f64, layers: usize },
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::ShallowGaussian => "shallow_gaussian",
            Architecture::ShallowPeriodicGaussian { .. } => "shallow_periodic_gaussian",
            Architecture::ShallowSquaredGaussian => "shallow_squared_gaussian",
            Architecture::DeepTanhPeriodic { .. } => "deep_tanh_periodic",
        }
    }

    pub fn is_shallow(&self) -> bool {
        !matches!(self, Architecture::DeepTanhPeriodic { .. })
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            Architecture::ShallowPeriodicGaussian { period } => Some(period),
            Architecture::DeepTanhPeriodic { period, .. } => Some(period),
            _ => None,
        }
    }
}

/// Architecture description: family, width `m`, spatial dimension `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub architecture: Architecture,
    /// Number of nodes (shallow) or units per hidden layer (deep).
    pub width: usize,
    pub dim: usize,
    /// When set, only the output coefficients evolve.
    #[serde(default)]
    pub frozen_features: bool,
}

/// What a parameter entry does inside the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Coefficient,
    Bandwidth,
    Center,
    Weight,
    Bias,
}

/// Which part of the network a parameter block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Unit {
    /// Node `i` of a shallow network.
    Node(usize),
    /// Hidden layer `l` (1-based) of a deep network.
    Layer(usize),
    /// Output coefficients of a deep network.
    Output,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayoutEntry {
    pub unit: Unit,
    pub role: Role,
    pub range: Range<usize>,
}

/// Map from (unit, role) to index ranges of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub entries: Vec<LayoutEntry>,
    len: usize,
    active: Vec<usize>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Indices that evolve in time, in increasing order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn ranges_for(&self, role: Role) -> impl Iterator<Item = &LayoutEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }
}

/// Flat parameter vector θ together with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(spec: &NetSpec, values: Vec<f64>) -> Result<Self> {
        let layout = spec.layout()?;
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), got: values.len() });
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(spec: &NetSpec) -> Result<Self> {
        let p = spec.param_count()?;
        Self::new(spec, vec![0.0; p])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn active_values(&self) -> Vec<f64> {
        self.layout.active().iter().map(|&i| self.values[i]).collect()
    }

    /// Adds `scale * delta` to the active entries; `delta` has active length.
    pub fn add_active(&mut self, delta: &[f64], scale: f64) {
        debug_assert_eq!(delta.len(), self.layout.active().len());
        for (&i, &v) in self.layout.active().iter().zip(delta) {
            self.values[i] += scale * v;
        }
    }
}

/// Which derivative fields `eval_bundle` should populate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DerivMask {
    pub grad_theta: bool,
    pub grad_x: bool,
    pub diag_hess_x: bool,
    pub d3_x: bool,
}

impl DerivMask {
    pub const VALUE: DerivMask = DerivMask { grad_theta: false, grad_x: false, diag_hess_x: false, d3_x: false };
    pub const ALL_1D: DerivMask = DerivMask { grad_theta: true, grad_x: true, diag_hess_x: true, d3_x: true };

    pub fn with_grad_theta(mut self) -> Self {
        self.grad_theta = true;
        self
    }

    pub fn union(self, other: DerivMask) -> DerivMask {
        DerivMask {
            grad_theta: self.grad_theta || other.grad_theta,
            grad_x: self.grad_x || other.grad_x,
            diag_hess_x: self.diag_hess_x || other.diag_hess_x,
            d3_x: self.d3_x || other.d3_x,
        }
    }
}

/// Per-point evaluation record. Unrequested fields are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalBundle {
    pub u: f64,
    /// Parameter gradient restricted to the active entries.
    pub grad_theta: Option<Vec<f64>>,
    pub grad_x: Option<Vec<f64>>,
    /// `∂²U/∂x_i²` for each axis.
    pub diag_hess_x: Option<Vec<f64>>,
    /// `∂³U/∂x³`, one-dimensional networks only.
    pub d3_x: Option<f64>,
}

/// Seeds for a vector-Jacobian product over `(U, ∇_x U, diag ∇²_x U)`.
///
/// Empty spatial seeds are treated as zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Seed {
    pub u: f64,
    pub grad_x: Vec<f64>,
    pub diag_hess_x: Vec<f64>,
}

impl Seed {
    pub fn value() -> Self {
        Seed { u: 1.0, ..Default::default() }
    }
}

/// Spatial derivatives of the network without parameter gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct SpatialEval {
    pub u: f64,
    pub grad_x: Vec<f64>,
    pub diag_hess_x: Vec<f64>,
    pub d3_x: Option<f64>,
}

impl NetSpec {
    pub fn new(architecture: Architecture, width: usize, dim: usize) -> Self {
        NetSpec { architecture, width, dim, frozen_features: false }
    }

    pub fn frozen(mut self) -> Self {
        self.frozen_features = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::InvalidSpec("width must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if let Some(period) = self.architecture.period() {
            if !(period > 0.0 && period.is_finite()) {
                return Err(Error::InvalidSpec(format!("period must be positive, got {period}")));
            }
        }
        if let Architecture::DeepTanhPeriodic { layers, .. } = self.architecture {
            if layers == 0 {
                return Err(Error::InvalidSpec("deep network needs at least one hidden layer".into()));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        let (m, d) = (self.width, self.dim);
        Ok(match self.architecture {
            Architecture::DeepTanhPeriodic { layers, .. } => m + m * d + d + (layers - 1) * (m * m + m),
            _ => m * (d + 2),
        })
    }

    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let (m, d) = (self.width, self.dim);
        let mut entries = Vec::new();
        let mut at = 0usize;
        let mut push = |unit, role, len: usize| {
            entries.push(LayoutEntry { unit, role, range: at..at + len });
            at += len;
        };
        match self.architecture {
            Architecture::DeepTanhPeriodic { layers, .. } => {
                push(Unit::Output, Role::Coefficient, m);
                push(Unit::Layer(1), Role::Weight, m * d);
                push(Unit::Layer(1), Role::Bias, d);
                for l in 2..=layers {
                    push(Unit::Layer(l), Role::Weight, m * m);
                    push(Unit::Layer(l), Role::Bias, m);
                }
            }
            _ => {
                for i in 0..m {
                    push(Unit::Node(i), Role::Coefficient, 1);
                    push(Unit::Node(i), Role::Bandwidth, 1);
                    push(Unit::Node(i), Role::Center, d);
                }
            }
        }
        let len = at;
        let active = if self.frozen_features {
            entries.iter().filter(|e| e.role == Role::Coefficient).flat_map(|e| e.range.clone()).collect()
        } else {
            (0..len).collect()
        };
        Ok(Layout { entries, len, active })
    }

    pub fn active_count(&self) -> Result<usize> {
        Ok(self.layout()?.active().len())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let p = self.param_count()?;
        if theta.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: theta.len() });
        }
        Ok(())
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point".into()));
        }
        Ok(())
    }

    fn check_mask(&self, mask: DerivMask) -> Result<()> {
        if mask.d3_x {
            if self.dim != 1 {
                return Err(Error::UnsupportedDerivative(format!(
                    "third derivative requires d = 1, got d = {}",
                    self.dim
                )));
            }
            if !self.architecture.is_shallow() {
                return Err(Error::UnsupportedDerivative(
                    "third derivative is only available for shallow networks".into(),
                ));
            }
        }
        Ok(())
    }

    /// Value only.
    pub fn value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_x(x)?;
        Ok(self.value_unchecked(theta, x))
    }

    pub(crate) fn value_unchecked(&self, theta: &[f64], x: &[f64]) -> f64 {
        match self.architecture {
            Architecture::DeepTanhPeriodic { period, layers } => {
                deep::DeepNet::new(self.width, self.dim, layers, period, theta).value(x)
            }
            _ => shallow::value(self, theta, x),
        }
    }

    pub(crate) fn spatial_unchecked(&self, theta: &[f64], x: &[f64], with_d3: bool) -> SpatialEval {
        match self.architecture {
            Architecture::DeepTanhPeriodic { period, layers } => {
                deep::DeepNet::new(self.width, self.dim, layers, period, theta).forward(x).spatial()
            }
            _ => shallow::spatial(self, theta, x, with_d3),
        }
    }

    /// Evaluates the requested fields at `x`.
    pub fn eval(&self, theta: &[f64], x: &[f64], mask: DerivMask) -> Result<EvalBundle> {
        self.check_theta(theta)?;
        self.check_x(x)?;
        self.check_mask(mask)?;
        Ok(self.eval_unchecked(theta, x, mask, None))
    }

    /// Evaluation without input checks; `active` gathers the gradient when given.
    pub(crate) fn eval_unchecked(
        &self,
        theta: &[f64],
        x: &[f64],
        mask: DerivMask,
        active: Option<&[usize]>,
    ) -> EvalBundle {
        let spatial = mask.grad_x || mask.diag_hess_x || mask.d3_x;
        let mut bundle = EvalBundle::default();
        if spatial {
            let s = self.spatial_unchecked(theta, x, mask.d3_x);
            bundle.u = s.u;
            if mask.grad_x {
                bundle.grad_x = Some(s.grad_x);
            }
            if mask.diag_hess_x {
                bundle.diag_hess_x = Some(s.diag_hess_x);
            }
            if mask.d3_x {
                bundle.d3_x = s.d3_x;
            }
        } else {
            bundle.u = self.value_unchecked(theta, x);
        }
        if mask.grad_theta {
            let mut full = vec![0.0; theta.len()];
            self.vjp_unchecked(theta, x, &Seed::value(), &mut full);
            let g = if self.frozen_features {
                let owned;
                let idx = match active {
                    Some(a) => a,
                    None => {
                        owned = self.layout().expect("validated").active;
                        &owned[..]
                    }
                };
                idx.iter().map(|&i| full[i]).collect()
            } else {
                full
            };
            bundle.grad_theta = Some(g);
        }
        bundle
    }

    /// Accumulates `seedᵀ ∂(U, ∇_x U, diag ∇²_x U)/∂θ` into `out` (full length `p`).
    pub fn vjp(&self, theta: &[f64], x: &[f64], seed: &Seed, out: &mut [f64]) -> Result<()> {
        self.check_theta(theta)?;
        self.check_x(x)?;
        if out.len() != theta.len() {
            return Err(Error::DimensionMismatch { expected: theta.len(), got: out.len() });
        }
        for s in [&seed.grad_x, &seed.diag_hess_x] {
            if !s.is_empty() && s.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: s.len() });
            }
        }
        self.vjp_unchecked(theta, x, seed, out);
        Ok(())
    }

    pub(crate) fn vjp_unchecked(&self, theta: &[f64], x: &[f64], seed: &Seed, out: &mut [f64]) {
        match self.architecture {
            Architecture::DeepTanhPeriodic { period, layers } => {
                let net = deep::DeepNet::new(self.width, self.dim, layers, period, theta);
                let fwd = net.forward(x);
                net.backward(&fwd, seed, out);
            }
            _ => shallow::vjp(self, theta, x, seed, out),
        }
    }

    /// Equal-weight Gaussian mixture with means `b_i` and standard deviations
    /// `κ / (√2 |w_i|)`, the sampling measure aligned with Gaussian units.
    pub fn as_mixture(&self, theta: &[f64], kappa: f64) -> Result<Measure> {
        self.check_theta(theta)?;
        match self.architecture {
            Architecture::ShallowGaussian | Architecture::ShallowSquaredGaussian => {}
            _ => return Err(Error::NotGaussian(self.architecture.name())),
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidMeasure(format!("kappa must be positive, got {kappa}")));
        }
        let (m, d) = (self.width, self.dim);
        let stride = d + 2;
        let mut means = Vec::with_capacity(m * d);
        let mut stds = Vec::with_capacity(m * d);
        for i in 0..m {
            let w = theta[i * stride + 1];
            if w == 0.0 || !w.is_finite() {
                return Err(Error::DegenerateBandwidth(i));
            }
            let s = kappa / (std::f64::consts::SQRT_2 * w.abs());
            means.extend_from_slice(&theta[i * stride + 2..i * stride + 2 + d]);
            stds.extend(std::iter::repeat_n(s, d));
        }
        Measure::gaussian_mixture(d, means, stds, vec![1.0 / m as f64; m])
    }
}

/// Free-function form of [`NetSpec::eval`].
pub fn eval_bundle(spec: &NetSpec, theta: &ParamVector, x: &[f64], mask: DerivMask) -> Result<EvalBundle> {
    spec.eval(&theta.values, x, mask)
}

/// Free-function form of [`NetSpec::as_mixture`].
pub fn as_mixture(spec: &NetSpec, theta: &ParamVector, kappa: f64) -> Result<Measure> {
    spec.as_mixture(&theta.values, kappa)
}

/// Result of [`fit_check_dimensions`].
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionReport {
    pub expected: Option<usize>,
    pub got: usize,
    pub active_count: Option<usize>,
    pub inactive_ranges: Vec<Range<usize>>,
    pub problems: Vec<String>,
}

impl DimensionReport {
    pub fn is_consistent(&self) -> bool {
        self.problems.is_empty()
    }
}

impl fmt::Display for DimensionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_consistent() {
            write!(f, "consistent")?;
        } else {
            write!(f, "inconsistent: {}", self.problems.join("; "))?;
        }
        if let Some(a) = self.active_count {
            write!(f, " (active {a} of {})", self.got)?;
        }
        Ok(())
    }
}

/// Reports layout consistency of `theta` against `spec`.
pub fn fit_check_dimensions(spec: &NetSpec, theta: &[f64]) -> DimensionReport {
    let mut report = DimensionReport {
        expected: None,
        got: theta.len(),
        active_count: None,
        inactive_ranges: Vec::new(),
        problems: Vec::new(),
    };
    let layout = match spec.layout() {
        Ok(l) => l,
        Err(e) => {
            report.problems.push(e.to_string());
            return report;
        }
    };
    report.expected = Some(layout.len());
    if theta.len() != layout.len() {
        report.problems.push(format!("dimension error: expected {} parameters, got {}", layout.len(), theta.len()));
    }
    let mut covered = vec![0u8; layout.len()];
    for e in &layout.entries {
        for i in e.range.clone() {
            covered[i] += 1;
        }
    }
    if covered.iter().any(|&c| c != 1) {
        report.problems.push("layout ranges overlap or leave gaps".into());
    }
    if theta.iter().any(|v| !v.is_finite()) {
        report.problems.push("non-finite parameter values".into());
    }
    report.active_count = Some(layout.active().len());
    if spec.frozen_features {
        report.inactive_ranges =
            layout.entries.iter().filter(|e| e.role != Role::Coefficient).map(|e| e.range.clone()).collect();
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic(m: usize, d: usize) -> NetSpec {
        NetSpec::new(Architecture::ShallowPeriodicGaussian { period: 1.0 }, m, d)
    }

    #[test]
    fn single_gaussian_node_at_center() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 1, 1);
        let b = spec.eval(&[2.0, 3.0, 0.0], &[0.0], DerivMask::VALUE).unwrap();
        assert_eq!(b.u, 2.0);
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        for arch in [
            Architecture::ShallowGaussian,
            Architecture::ShallowSquaredGaussian,
            Architecture::ShallowPeriodicGaussian { period: 2.0 },
        ] {
            let spec = NetSpec::new(arch, 3, 2);
            let mut theta = vec![0.7; spec.param_count().unwrap()];
            for i in 0..3 {
                theta[i * 4] = 0.0;
            }
            let mask = DerivMask { grad_x: true, ..Default::default() };
            let b = spec.eval(&theta, &[0.3, -0.2], mask).unwrap();
            assert_eq!(b.u, 0.0);
            assert!(b.grad_x.unwrap().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn unrequested_fields_are_absent() {
        let spec = periodic(2, 1);
        let b = spec.eval(&[1.0, 1.0, 0.1, 0.5, 2.0, 0.4], &[0.2], DerivMask::VALUE).unwrap();
        assert!(b.grad_theta.is_none() && b.grad_x.is_none() && b.diag_hess_x.is_none() && b.d3_x.is_none());
    }

    #[test]
    fn dimension_and_mask_errors() {
        let spec = periodic(2, 2);
        let theta = vec![0.5; 8];
        assert!(matches!(
            spec.eval(&theta, &[0.1], DerivMask::VALUE),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let mask = DerivMask { d3_x: true, ..Default::default() };
        assert!(matches!(spec.eval(&theta, &[0.1, 0.2], mask), Err(Error::UnsupportedDerivative(_))));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(periodic(5, 2).param_count().unwrap(), 20);
        let deep = NetSpec::new(Architecture::DeepTanhPeriodic { period: 1.0, layers: 3 }, 2, 1);
        assert_eq!(deep.param_count().unwrap(), 2 + 2 + 1 + 2 * (4 + 2));
        assert!(NetSpec::new(Architecture::ShallowGaussian, 0, 1).param_count().is_err());
        assert!(NetSpec::new(Architecture::ShallowPeriodicGaussian { period: 0.0 }, 1, 1).validate().is_err());
    }

    #[test]
    fn layout_covers_every_index_once() {
        let deep = NetSpec::new(Architecture::DeepTanhPeriodic { period: 1.0, layers: 4 }, 3, 2);
        let layout = deep.layout().unwrap();
        let mut seen = vec![false; layout.len()];
        for e in &layout.entries {
            for i in e.range.clone() {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn frozen_features_keep_only_coefficients() {
        let spec = periodic(4, 3).frozen();
        let layout = spec.layout().unwrap();
        assert_eq!(layout.active(), &[0, 5, 10, 15]);
        let theta = vec![0.3; 20];
        let b = spec.eval(&theta, &[0.1, 0.2, 0.3], DerivMask::VALUE.with_grad_theta()).unwrap();
        assert_eq!(b.grad_theta.unwrap().len(), 4);
    }

    #[test]
    fn dimension_report() {
        let spec = periodic(3, 1);
        assert_eq!(fit_check_dimensions(&spec, &[0.1; 9]).to_string(), "consistent (active 9 of 9)");
        let short = fit_check_dimensions(&spec, &[0.1; 8]);
        assert!(!short.is_consistent());
        assert!(short.to_string().contains("dimension error"));
        let frozen = fit_check_dimensions(&spec.clone().frozen(), &[0.1; 9]);
        assert!(frozen.is_consistent());
        assert_eq!(frozen.active_count, Some(3));
        assert_eq!(frozen.inactive_ranges.len(), 6);
    }

    #[test]
    fn mixture_from_single_node() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 1, 1);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let Measure::GaussianMixture { stds, .. } = spec.as_mixture(&[1.0, 1.0, 0.0], 1.0).unwrap() else {
            panic!("expected a mixture");
        };
        assert!((stds[0] - half).abs() < 1e-15);
        let Measure::GaussianMixture { stds, .. } = spec.as_mixture(&[1.0, 1.0, 0.0], 2.0).unwrap() else {
            panic!("expected a mixture");
        };
        assert!((stds[0] - 2.0 * half).abs() < 1e-15);
    }

    #[test]
    fn mixture_weights_ignore_coefficients() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 2, 1);
        let Measure::GaussianMixture { weights, .. } = spec.as_mixture(&[10.0, 1.0, 0.0, 0.1, 2.0, 1.0], 1.0).unwrap()
        else {
            panic!("expected a mixture");
        };
        assert_eq!(weights, vec![0.5, 0.5]);
    }

    #[test]
    fn mixture_errors() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 2, 1);
        assert!(matches!(spec.as_mixture(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0], 1.0), Err(Error::DegenerateBandwidth(0))));
        assert!(matches!(periodic(1, 1).as_mixture(&[1.0, 1.0, 0.0], 1.0), Err(Error::NotGaussian(_))));
    }
}
