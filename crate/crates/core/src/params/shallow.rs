//! Shallow networks `Σ a(c_i) exp(-w_i² Σ_k q(x_k - b_ik))`.
//!
//! `q(r) = r²` for Gaussian units and `q(r) = sin²(π r / L)` for periodic
//! units. Writing `g1 = -w² q'`, `g2 = -w² q'' + w⁴ q'²` and
//! `g3 = -w² q''' + 3 w⁴ q' q'' - w⁶ q'³`, the axis-k spatial derivatives of
//! a unit `φ` are `g1 φ`, `g2 φ` and (d = 1) `g3 φ`.

use super::{Architecture, NetSpec, Seed, SpatialEval};

/// `q` and its first three derivatives at `r`.
#[derive(Clone, Copy, Debug)]
struct Q {
    q: f64,
    q1: f64,
    q2: f64,
    q3: f64,
}

#[inline]
fn q_terms(arch: &Architecture, r: f64) -> Q {
    match *arch {
        Architecture::ShallowPeriodicGaussian { period } => {
            let om = std::f64::consts::PI / period;
            let (s, c) = (om * r).sin_cos();
            let (s2, c2) = (2.0 * s * c, (c - s) * (c + s));
            Q { q: s * s, q1: om * s2, q2: 2.0 * om * om * c2, q3: -4.0 * om * om * om * s2 }
        }
        _ => Q { q: r * r, q1: 2.0 * r, q2: 2.0, q3: 0.0 },
    }
}

#[inline]
fn squared(arch: &Architecture) -> bool {
    matches!(arch, Architecture::ShallowSquaredGaussian)
}

/// Output amplitude `a(c)` and its derivative.
#[inline]
fn amplitude(arch: &Architecture, c: f64) -> (f64, f64) {
    if squared(arch) {
        (c * c, 2.0 * c)
    } else {
        (c, 1.0)
    }
}

pub(super) fn value(spec: &NetSpec, theta: &[f64], x: &[f64]) -> f64 {
    let d = spec.dim;
    let stride = d + 2;
    let arch = &spec.architecture;
    let mut u = 0.0;
    for node in theta.chunks_exact(stride) {
        let (a, _) = amplitude(arch, node[0]);
        let w2 = node[1] * node[1];
        let s: f64 = (0..d).map(|k| q_terms(arch, x[k] - node[2 + k]).q).sum();
        u += a * (-w2 * s).exp();
    }
    u
}

pub(super) fn spatial(spec: &NetSpec, theta: &[f64], x: &[f64], with_d3: bool) -> SpatialEval {
    let d = spec.dim;
    let stride = d + 2;
    let arch = &spec.architecture;
    let mut out = SpatialEval { u: 0.0, grad_x: vec![0.0; d], diag_hess_x: vec![0.0; d], d3_x: with_d3.then_some(0.0) };
    let mut qs = vec![Q { q: 0.0, q1: 0.0, q2: 0.0, q3: 0.0 }; d];
    for node in theta.chunks_exact(stride) {
        let (a, _) = amplitude(arch, node[0]);
        let w2 = node[1] * node[1];
        let mut s = 0.0;
        for k in 0..d {
            qs[k] = q_terms(arch, x[k] - node[2 + k]);
            s += qs[k].q;
        }
        let aphi = a * (-w2 * s).exp();
        out.u += aphi;
        for (k, q) in qs.iter().enumerate() {
            out.grad_x[k] += aphi * (-w2 * q.q1);
            out.diag_hess_x[k] += aphi * (-w2 * q.q2 + w2 * w2 * q.q1 * q.q1);
        }
        if let Some(d3) = out.d3_x.as_mut() {
            let q = qs[0];
            *d3 += aphi * (-w2 * q.q3 + 3.0 * w2 * w2 * q.q1 * q.q2 - w2 * w2 * w2 * q.q1.powi(3));
        }
    }
    out
}

/// Closed-form vector-Jacobian product, accumulated into `out`.
pub(super) fn vjp(spec: &NetSpec, theta: &[f64], x: &[f64], seed: &Seed, out: &mut [f64]) {
    let d = spec.dim;
    let stride = d + 2;
    let arch = &spec.architecture;
    let sg = |k: usize| seed.grad_x.get(k).copied().unwrap_or(0.0);
    let sh = |k: usize| seed.diag_hess_x.get(k).copied().unwrap_or(0.0);
    let spatial_seeds = !seed.grad_x.is_empty() || !seed.diag_hess_x.is_empty();
    let mut qs = vec![Q { q: 0.0, q1: 0.0, q2: 0.0, q3: 0.0 }; d];
    for (node, o) in theta.chunks_exact(stride).zip(out.chunks_exact_mut(stride)) {
        let (a, da) = amplitude(arch, node[0]);
        let w = node[1];
        let w2 = w * w;
        let mut s = 0.0;
        for k in 0..d {
            qs[k] = q_terms(arch, x[k] - node[2 + k]);
            s += qs[k].q;
        }
        let phi = (-w2 * s).exp();
        // Combined seed weight on φ itself.
        let mut big_s = seed.u;
        let mut dw_extra = 0.0;
        if spatial_seeds {
            for (k, q) in qs.iter().enumerate() {
                let g1 = -w2 * q.q1;
                let g2 = -w2 * q.q2 + w2 * w2 * q.q1 * q.q1;
                big_s += sg(k) * g1 + sh(k) * g2;
                dw_extra += sg(k) * (-2.0 * w * q.q1) + sh(k) * (-2.0 * w * q.q2 + 4.0 * w * w2 * q.q1 * q.q1);
            }
        }
        o[0] += da * phi * big_s;
        o[1] += a * phi * (big_s * (-2.0 * w * s) + dw_extra);
        for (k, q) in qs.iter().enumerate() {
            let mut v = big_s * w2 * q.q1;
            if spatial_seeds {
                v += sg(k) * w2 * q.q2 + sh(k) * (w2 * q.q3 - 2.0 * w2 * w2 * q.q1 * q.q2);
            }
            o[2 + k] += a * phi * v;
        }
    }
}
