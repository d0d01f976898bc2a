//! Reference solutions independent of the Galerkin machinery.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrators::Dopri5;
use crate::pde::{ForceSpec, TrapCenter};
use crate::rng::stream;
use crate::sampling::{draw, Measure};

/// Solution snapshots on a uniform periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTrajectory {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
}

/// Constant-coefficient cyclic tridiagonal system `b x_i - r (x_{i-1} + x_{i+1}) = y_i`,
/// solved with the Thomas algorithm plus a Sherman–Morrison correction.
struct CyclicSolver {
    n: usize,
    #[cfg(test)]
    diag: f64,
    off: f64,
    /// Forward-elimination factors of the modified tridiagonal matrix.
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    z: Vec<f64>,
    gamma: f64,
}

impl CyclicSolver {
    fn new(n: usize, diag: f64, off: f64) -> Self {
        let gamma = -diag;
        let mut bb = vec![diag; n];
        bb[0] = diag - gamma;
        bb[n - 1] = diag - off * off / gamma;
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = bb[0];
        c_prime[0] = off / bb[0];
        for i in 1..n {
            denom[i] = bb[i] - off * c_prime[i - 1];
            c_prime[i] = off / denom[i];
        }
        let mut s = CyclicSolver {
            n,
            #[cfg(test)]
            diag,
            off,
            c_prime,
            denom,
            z: vec![],
            gamma,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        s.z = s.thomas(&u);
        s
    }

    fn thomas(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        y[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            y[i] = (rhs[i] - self.off * y[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= self.c_prime[i] * y[i + 1];
        }
        y
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = self.thomas(rhs);
        let beta = self.off;
        let fact = (x[0] + beta * x[n - 1] / self.gamma) / (1.0 + self.z[0] + beta * self.z[n - 1] / self.gamma);
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
        x
    }

    #[cfg(test)]
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| self.diag * x[i] + self.off * (x[(i + n - 1) % n] + x[(i + 1) % n])).collect()
    }
}

/// Semi-implicit finite differences for `∂_t u = ε ∂²_x u + a(t, x)(u - u³)`
/// on `[lo, lo + period)` with `points` grid points: diffusion implicit,
/// reaction explicit. Snapshots are taken at `times`, which must be
/// multiples of `dt`.
pub fn ac_reference(
    points: usize,
    lo: f64,
    period: f64,
    dt: f64,
    epsilon: f64,
    reaction: impl Fn(f64, f64) -> f64,
    u0: impl Fn(f64) -> f64,
    times: &[f64],
) -> Result<GridTrajectory> {
    if points < 16 {
        return Err(Error::Config(format!("reference grid needs at least 16 points, got {points}")));
    }
    if !(dt > 0.0) || !(epsilon >= 0.0) || !(period > 0.0) {
        return Err(Error::Config("reference solver needs dt > 0, ε ≥ 0, period > 0".into()));
    }
    let h = period / points as f64;
    let x: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    let r = dt * epsilon / (h * h);
    let solver = CyclicSolver::new(points, 1.0 + 2.0 * r, -r);
    let mut u: Vec<f64> = x.iter().map(|&xi| u0(xi)).collect();
    let mut out = GridTrajectory { x: x.clone(), times: vec![], u: vec![] };
    let mut step: u64 = 0;
    for &target in times {
        let target_step = (target / dt).round() as u64;
        if ((target_step as f64) * dt - target).abs() > 1e-9 * target.abs().max(1.0) || target_step < step {
            return Err(Error::Config(format!("snapshot time {target} is not an ascending multiple of dt")));
        }
        while step < target_step {
            let t = step as f64 * dt;
            let rhs: Vec<f64> =
                u.iter().zip(&x).map(|(&ui, &xi)| ui + dt * reaction(t, xi) * (ui - ui * ui * ui)).collect();
            u = solver.solve(&rhs);
            step += 1;
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("reference solution at t = {}", step as f64 * dt)));
            }
        }
        out.times.push(target);
        out.u.push(u.clone());
    }
    Ok(out)
}

/// Mean and covariance trajectories of the harmonic-trap particle system.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d`.
    pub covs: Vec<Vec<f64>>,
}

/// Integrates `X̄' = A X̄ + a(t) 1` and `C' = A C + C Aᵀ + 2D I` with
/// `A = -(1+α) I + (α/d) 11ᵀ`.
pub fn fp_moment_odes(
    d: usize,
    alpha: f64,
    center: &TrapCenter,
    diffusion: f64,
    mean0: &[f64],
    cov0: &[f64],
    times: &[f64],
) -> Result<MomentTrajectory> {
    if mean0.len() != d || cov0.len() != d * d {
        return Err(Error::DimensionMismatch { expected: d, got: mean0.len() });
    }
    let apply_a = |v: &[f64], out: &mut [f64]| {
        let s: f64 = v.iter().sum::<f64>() * alpha / d as f64;
        for (o, x) in out.iter_mut().zip(v) {
            *o = -(1.0 + alpha) * x + s;
        }
    };
    let mut field = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (mean, cov) = y.split_at(d);
        let mut out = vec![0.0; d + d * d];
        let a = center.at(t);
        apply_a(mean, &mut out[..d]);
        out[..d].iter_mut().for_each(|v| *v += a);
        // AC column by column, then add its transpose.
        let mut col = vec![0.0; d];
        let mut colout = vec![0.0; d];
        let mut ac = vec![0.0; d * d];
        for j in 0..d {
            for i in 0..d {
                col[i] = cov[i * d + j];
            }
            apply_a(&col, &mut colout);
            for i in 0..d {
                ac[i * d + j] = colout[i];
            }
        }
        for i in 0..d {
            for j in 0..d {
                out[d + i * d + j] = ac[i * d + j] + ac[j * d + i] + if i == j { 2.0 * diffusion } else { 0.0 };
            }
        }
        Ok(out)
    };
    let mut y0 = mean0.to_vec();
    y0.extend_from_slice(cov0);
    let mut dopri = Dopri5::new(1e-10, 1e-12, 1e-3, 1e-14, 0.1);
    let sol = dopri.solve(&mut field, 0.0, &y0, times)?;
    Ok(MomentTrajectory {
        times: times.to_vec(),
        means: sol.iter().map(|y| y[..d].to_vec()).collect(),
        covs: sol.iter().map(|y| y[d..].to_vec()).collect(),
    })
}

/// Ensemble statistics of a particle simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub times: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d` sample covariances.
    pub covs: Vec<Vec<f64>>,
    /// Standard error of each mean coordinate.
    pub mean_se: Vec<Vec<f64>>,
    /// Standard error of each covariance diagonal entry.
    pub var_se: Vec<Vec<f64>>,
    /// Final states, `paths × d` row-major.
    pub endpoints: Vec<f64>,
}

/// Euler–Maruyama for `dX = h(t, X) dt + √(2D) dW` with `X_0` drawn from `initial`.
/// Path `k` uses its own random stream, so results do not depend on scheduling.
pub fn euler_maruyama(
    force: &ForceSpec,
    d: usize,
    paths: usize,
    dt: f64,
    times: &[f64],
    initial: &Measure,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if paths == 0 {
        return Err(Error::Config("particle simulation needs at least one path".into()));
    }
    if initial.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: initial.dim() });
    }
    if !(dt > 0.0) {
        return Err(Error::Config("time step must be positive".into()));
    }
    let sigma = (2.0 * force.diffusion).sqrt();
    let targets: Vec<u64> = times.iter().map(|t| (t / dt).round() as u64).collect();
    if targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("output times must be ascending".into()));
    }
    let states: Vec<Result<Vec<f64>>> = (0..paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let mut x = draw(initial, 1, &mut rng)?.points;
            let mut h = vec![0.0; d];
            let mut snaps = Vec::with_capacity(targets.len() * d);
            let mut step = 0u64;
            for &target in &targets {
                while step < target {
                    let t = step as f64 * dt;
                    force.drift(t, &x, &mut h);
                    for i in 0..d {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x[i] += h[i] * dt + sigma * dt.sqrt() * z;
                    }
                    step += 1;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("particle path {k}")));
                }
                snaps.extend_from_slice(&x);
            }
            Ok(snaps)
        })
        .collect();
    let states: Vec<Vec<f64>> = states.into_iter().collect::<Result<_>>()?;
    let n = paths as f64;
    let mut ens = ParticleEnsemble {
        times: times.to_vec(),
        means: vec![],
        covs: vec![],
        mean_se: vec![],
        var_se: vec![],
        endpoints: vec![],
    };
    for (ti, _) in times.iter().enumerate() {
        let at = |k: usize| &states[k][ti * d..(ti + 1) * d];
        let mut mean = vec![0.0; d];
        for k in 0..paths {
            for i in 0..d {
                mean[i] += at(k)[i];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = vec![0.0; d * d];
        let mut m4 = vec![0.0; d];
        for k in 0..paths {
            let x = at(k);
            for i in 0..d {
                let di = x[i] - mean[i];
                m4[i] += di.powi(4);
                for j in 0..d {
                    cov[i * d + j] += di * (x[j] - mean[j]);
                }
            }
        }
        let denom = (n - 1.0).max(1.0);
        cov.iter_mut().for_each(|c| *c /= denom);
        let se = (0..d).map(|i| (cov[i * d + i] / n).sqrt()).collect();
        let var_se = (0..d)
            .map(|i| {
                let v = cov[i * d + i];
                ((m4[i] / n - v * v).max(0.0) / n).sqrt()
            })
            .collect();
        ens.means.push(mean);
        ens.covs.push(cov);
        ens.mean_se.push(se);
        ens.var_se.push(var_se);
    }
    if let Some(last) = times.len().checked_sub(1) {
        ens.endpoints = states.iter().flat_map(|s| s[last * d..(last + 1) * d].to_vec()).collect();
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::TrapKind;
    use std::f64::consts::PI;

    #[test]
    fn cyclic_solver_inverts_its_matrix() {
        let s = CyclicSolver::new(20, 2.3, -0.6);
        let rhs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() + 0.1).collect();
        let x = s.solve(&rhs);
        for (a, b) in s.apply(&x).iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let traj = ac_reference(64, 0.0, 2.0 * PI, 1e-3, 0.0, |_, _| 0.0, |x| x.cos(), &[0.0, 0.05]).unwrap();
        assert_eq!(traj.u[0], traj.u[1]);
    }

    #[test]
    fn fourier_mode_decays() {
        let (eps, k) = (0.1, 3.0);
        let traj = ac_reference(512, 0.0, 2.0 * PI, 1e-5, eps, |_, _| 0.0, |x| (k * x).sin(), &[0.1]).unwrap();
        let expected = (-eps * k * k * 0.1f64).exp();
        let amp: f64 = traj.u[0].iter().zip(&traj.x).map(|(u, x)| u * (k * x).sin()).sum::<f64>() * 2.0 / 512.0;
        assert!((amp - expected).abs() / expected < 1e-3, "{amp} vs {expected}");
    }

    #[test]
    fn moment_closed_form_without_interaction() {
        let a = 1.7;
        let mom =
            fp_moment_odes(2, 0.0, &TrapCenter::constant(a), 0.3, &[0.2, -1.0], &[0.1, 0.0, 0.0, 0.2], &[0.5, 3.0])
                .unwrap();
        for (ti, &t) in mom.times.iter().enumerate() {
            for (i, x0) in [0.2, -1.0].iter().enumerate() {
                let exact = a + (x0 - a) * (-t).exp();
                assert!((mom.means[ti][i] - exact).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn deterministic_particles_relax() {
        let force =
            ForceSpec { trap: TrapKind::Harmonic, center: TrapCenter::constant(2.0), alpha: 0.0, diffusion: 0.0 };
        let init = Measure::gaussian_mixture(1, vec![0.5], vec![1e-9], vec![1.0]).unwrap();
        let ens = euler_maruyama(&force, 1, 3, 1e-3, &[1.0], &init, 9).unwrap();
        let exact = 2.0 + (0.5 - 2.0) * (-1.0f64).exp();
        assert!((ens.means[0][0] - exact).abs() < 2e-3);
    }
}
