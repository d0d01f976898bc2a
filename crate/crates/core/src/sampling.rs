//! Sampling measures for the Monte-Carlo estimators.
//!
//! Two measures are supported: a uniform box, used by the static baselines,
//! and a Gaussian mixture with diagonal components, used for the adaptive
//! measure induced by Gaussian networks and for oracle proposals.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Rng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, PartialEq)]
pub enum Measure {
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Mixture of axis-aligned Gaussians; `means` and `stds` are `m × d` row-major.
    GaussianMixture {
        dim: usize,
        means: Vec<f64>,
        stds: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl Measure {
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let m = Measure::UniformBox { lo, hi };
        m.validate()?;
        Ok(m)
    }

    /// Cube `[lo, hi]^d`.
    pub fn uniform_cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::uniform_box(vec![lo; dim], vec![hi; dim])
    }

    /// Mixture with per-axis standard deviations; `stds` may also hold one
    /// value per component (isotropic components).
    pub fn gaussian_mixture(dim: usize, means: Vec<f64>, stds: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        let stds = if stds.len() == m && dim != 1 {
            stds.iter().flat_map(|&s| std::iter::repeat_n(s, dim)).collect()
        } else {
            stds
        };
        let total: f64 = weights.iter().sum();
        let weights = if total > 0.0 { weights.iter().map(|w| w / total).collect() } else { weights };
        let measure = Measure::GaussianMixture { dim, means, stds, weights };
        measure.validate()?;
        Ok(measure)
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::UniformBox { lo, .. } => lo.len(),
            Measure::GaussianMixture { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Measure::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidMeasure("box bounds must be non-empty and equally long".into()));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::InvalidMeasure("box requires lo < hi componentwise".into()));
                }
            }
            Measure::GaussianMixture { dim, means, stds, weights } => {
                let m = weights.len();
                if *dim == 0 || m == 0 || means.len() != m * dim || stds.len() != m * dim {
                    return Err(Error::InvalidMeasure("mixture arrays have inconsistent shapes".into()));
                }
                if stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::InvalidMeasure("mixture standard deviations must be positive".into()));
                }
                if means.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidMeasure("mixture means must be finite".into()));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidMeasure("mixture weights must be non-negative and sum to 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Normalized density at `x` (zero outside a uniform box).
    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Measure::UniformBox { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= *a && *v <= *b);
                if inside {
                    -lo.iter().zip(hi).map(|(a, b)| (b - a).ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Measure::GaussianMixture { dim, means, stds, weights } => {
                let d = *dim;
                let mut terms = Vec::with_capacity(weights.len());
                for (j, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let mut lp = w.ln();
                    for k in 0..d {
                        let s = stds[j * d + k];
                        let z = (x[k] - means[j * d + k]) / s;
                        lp += -0.5 * z * z - s.ln() - LN_SQRT_2PI;
                    }
                    terms.push(lp);
                }
                log_sum_exp(&terms)
            }
        }
    }

    /// The measure of the remaining coordinates after dropping `axis`.
    pub fn without_axis(&self, axis: usize) -> Result<Measure> {
        let d = self.dim();
        if axis >= d || d < 2 {
            return Err(Error::InvalidMeasure(format!("cannot drop axis {axis} from a {d}-dimensional measure")));
        }
        let keep = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(d)
                .flat_map(|row| row.iter().enumerate().filter(|(k, _)| *k != axis).map(|(_, v)| *v))
                .collect()
        };
        Ok(match self {
            Measure::UniformBox { lo, hi } => Measure::UniformBox { lo: keep(lo), hi: keep(hi) },
            Measure::GaussianMixture { means, stds, weights, .. } => {
                Measure::GaussianMixture { dim: d - 1, means: keep(means), stds: keep(stds), weights: weights.clone() }
            }
        })
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Where in the random stream a sample set was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DrawRecord {
    pub stream: u64,
    pub word_pos: u128,
}

/// `n × d` points with the log density of the generating measure.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    pub points: Vec<f64>,
    pub log_density: Vec<f64>,
    pub record: DrawRecord,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.log_density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_density.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Builds a sample set from explicit points, e.g. a quadrature grid.
    pub fn from_points(measure: &Measure, points: Vec<f64>) -> Result<Self> {
        let dim = measure.dim();
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: points.len() % dim.max(1) });
        }
        let log_density: Vec<f64> = points.chunks_exact(dim).map(|x| measure.log_density(x)).collect();
        if log_density.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidMeasure("points outside the support of the measure".into()));
        }
        Ok(SampleSet { dim, points, log_density, record: DrawRecord { stream: 0, word_pos: 0 } })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).chain(["log_density".into()]).collect();
        writeln!(out, "{}", header.join(","))?;
        for (x, l) in self.iter().zip(&self.log_density) {
            let row: Vec<String> = x.iter().chain(std::iter::once(l)).map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. samples. Identical generator state gives identical output.
pub fn draw(measure: &Measure, n: usize, rng: &mut Rng) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidMeasure("sample count must be at least 1".into()));
    }
    measure.validate()?;
    let record = DrawRecord { stream: rng.get_stream(), word_pos: rng.get_word_pos() };
    let d = measure.dim();
    let mut points = Vec::with_capacity(n * d);
    match measure {
        Measure::UniformBox { lo, hi } => {
            for _ in 0..n {
                for k in 0..d {
                    let u: f64 = rng.random();
                    points.push(lo[k] + (hi[k] - lo[k]) * u);
                }
            }
        }
        Measure::GaussianMixture { means, stds, weights, .. } => {
            let mut cumulative = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in weights {
                acc += w;
                cumulative.push(acc);
            }
            let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() * acc;
                let j = cumulative.partition_point(|&c| c <= u).min(last);
                for k in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    points.push(means[j * d + k] + stds[j * d + k] * z);
                }
            }
        }
    }
    let log_density: Vec<f64> = points.chunks_exact(d).map(|x| measure.log_density(x)).collect();
    Ok(SampleSet { dim: d, points, log_density, record })
}

/// Free-function form of [`Measure::density`].
pub fn density(measure: &Measure, x: &[f64]) -> f64 {
    measure.density(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn uniform_moments() {
        let m = Measure::uniform_cube(2, 0.0, 1.0).unwrap();
        let n = 100_000;
        let s = draw(&m, n, &mut seeded(1)).unwrap();
        let tol = 4.0 * (1.0 / 12f64.sqrt()) / (n as f64).sqrt();
        for k in 0..2 {
            let mean = s.iter().map(|x| x[k]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < tol, "axis {k}: {mean}");
        }
    }

    #[test]
    fn single_component_variance() {
        let (b, sd) = (1.5, 0.3);
        let m = Measure::gaussian_mixture(1, vec![b], vec![sd], vec![1.0]).unwrap();
        let n = 100_000;
        let s = draw(&m, n, &mut seeded(2)).unwrap();
        let mean = s.points.iter().sum::<f64>() / n as f64;
        let var = s.points.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / (sd * sd) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn same_seed_same_points() {
        let m = Measure::gaussian_mixture(3, vec![0.0; 6], vec![1.0, 2.0], vec![0.3, 0.7]).unwrap();
        let a = draw(&m, 50, &mut seeded(7)).unwrap();
        let b = draw(&m, 50, &mut seeded(7)).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn box_density() {
        let m = Measure::uniform_cube(1, 0.0, 2.0).unwrap();
        assert_eq!(m.density(&[1.0]), 0.5);
        assert_eq!(m.density(&[3.0]), 0.0);
    }

    #[test]
    fn duplicated_component_density() {
        let one = Measure::gaussian_mixture(2, vec![0.2, -0.1], vec![0.4], vec![1.0]).unwrap();
        let two = Measure::gaussian_mixture(2, vec![0.2, -0.1, 0.2, -0.1], vec![0.4, 0.4], vec![0.5, 0.5]).unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [0.3, 0.3]] {
            assert!((one.density(&x) - two.density(&x)).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_integrates_to_one() {
        let m = Measure::gaussian_mixture(1, vec![-1.0, 0.5, 2.0], vec![0.3, 0.8, 0.1], vec![0.2, 0.5, 0.3]).unwrap();
        let mass = simpson(|x| m.density(&[x]), -12.0, 12.0, 20_000);
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn stored_log_density_matches_recomputation() {
        let m = Measure::gaussian_mixture(2, vec![0.0, 1.0, 2.0, -1.0], vec![0.5, 0.2], vec![0.5, 0.5]).unwrap();
        let s = draw(&m, 200, &mut seeded(3)).unwrap();
        for (x, l) in s.iter().zip(&s.log_density) {
            assert!((m.log_density(x) - l).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_measures() {
        assert!(Measure::uniform_box(vec![1.0], vec![0.0]).is_err());
        assert!(Measure::gaussian_mixture(1, vec![0.0], vec![0.0], vec![1.0]).is_err());
        let m = Measure::uniform_cube(1, 0.0, 1.0).unwrap();
        assert!(draw(&m, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn dropping_an_axis() {
        let m = Measure::gaussian_mixture(3, vec![0.0, 1.0, 2.0], vec![0.1, 0.2, 0.3], vec![1.0]).unwrap();
        let Measure::GaussianMixture { means, stds, .. } = m.without_axis(1).unwrap() else { unreachable!() };
        assert_eq!(means, vec![0.0, 2.0]);
        assert_eq!(stds, vec![0.1, 0.3]);
    }
}
