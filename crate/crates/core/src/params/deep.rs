//! Periodic deep tanh network with hand-written reverse mode.
//!
//! The forward pass carries, per axis `k`, the first and second x-derivatives
//! of every pre- and post-activation ("jets"). The backward pass propagates
//! adjoints of `(U, ∂_k U, ∂²_k U)` through those jets so that one sweep
//! yields the parameter gradient of any linear combination of them.
//!
//! Parameter layout: `c (m) | W_1 (m×d, row-major) | b_1 (d) | {W_l (m×m) | b_l (m)}_{l≥2}`.

use super::{Seed, SpatialEval};

pub(super) struct DeepNet<'a> {
    m: usize,
    d: usize,
    layers: usize,
    omega: f64,
    theta: &'a [f64],
}

/// Per-layer cache: post-activations and their axis jets.
struct LayerCache {
    h: Vec<f64>,
    /// `1 - h²`
    t1: Vec<f64>,
    /// `-2 h t1`
    t2: Vec<f64>,
    /// `dz[k][i]`, `d2z[k][i]`: jets of the pre-activation.
    dz: Vec<Vec<f64>>,
    d2z: Vec<Vec<f64>>,
    dh: Vec<Vec<f64>>,
    d2h: Vec<Vec<f64>>,
}

pub(super) struct Forward {
    layers: Vec<LayerCache>,
    /// `sin(ω r_k)` and its first three r-derivatives.
    s: [Vec<f64>; 4],
    u: f64,
    grad_x: Vec<f64>,
    diag_hess_x: Vec<f64>,
}

impl Forward {
    pub(super) fn spatial(self) -> SpatialEval {
        SpatialEval { u: self.u, grad_x: self.grad_x, diag_hess_x: self.diag_hess_x, d3_x: None }
    }
}

impl<'a> DeepNet<'a> {
    pub(super) fn new(m: usize, d: usize, layers: usize, period: f64, theta: &'a [f64]) -> Self {
        DeepNet { m, d, layers, omega: 2.0 * std::f64::consts::PI / period, theta }
    }

    fn c(&self) -> &[f64] {
        &self.theta[..self.m]
    }

    fn w1(&self, i: usize, k: usize) -> f64 {
        self.theta[self.m + i * self.d + k]
    }

    fn w1_offset(&self) -> usize {
        self.m
    }

    fn b1_offset(&self) -> usize {
        self.m + self.m * self.d
    }

    /// Offset of `W_l` for `l ≥ 2`; `b_l` follows at `+ m²`.
    fn wl_offset(&self, l: usize) -> usize {
        self.b1_offset() + self.d + (l - 2) * (self.m * self.m + self.m)
    }

    pub(super) fn value(&self, x: &[f64]) -> f64 {
        let (m, d) = (self.m, self.d);
        let b1 = &self.theta[self.b1_offset()..self.b1_offset() + d];
        let s: Vec<f64> = (0..d).map(|k| (self.omega * (x[k] - b1[k])).sin()).collect();
        let mut h: Vec<f64> = (0..m).map(|i| (0..d).map(|k| self.w1(i, k) * s[k]).sum::<f64>().tanh()).collect();
        for l in 2..=self.layers {
            let off = self.wl_offset(l);
            let w = &self.theta[off..off + m * m];
            let b = &self.theta[off + m * m..off + m * m + m];
            h = (0..m).map(|i| (b[i] + (0..m).map(|j| w[i * m + j] * h[j]).sum::<f64>()).tanh()).collect();
        }
        self.c().iter().zip(&h).map(|(c, h)| c * h).sum()
    }

    pub(super) fn forward(&self, x: &[f64]) -> Forward {
        let (m, d) = (self.m, self.d);
        let om = self.omega;
        let b1 = &self.theta[self.b1_offset()..self.b1_offset() + d];
        let mut s = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        for k in 0..d {
            let (sn, cs) = (om * (x[k] - b1[k])).sin_cos();
            s[0][k] = sn;
            s[1][k] = om * cs;
            s[2][k] = -om * om * sn;
            s[3][k] = -om * om * om * cs;
        }

        let mut z = vec![0.0; m];
        let mut dz = vec![vec![0.0; m]; d];
        let mut d2z = vec![vec![0.0; m]; d];
        for i in 0..m {
            for k in 0..d {
                let w = self.w1(i, k);
                z[i] += w * s[0][k];
                dz[k][i] = w * s[1][k];
                d2z[k][i] = w * s[2][k];
            }
        }
        let mut caches = Vec::with_capacity(self.layers);
        caches.push(activate(&z, dz, d2z));

        for l in 2..=self.layers {
            let off = self.wl_offset(l);
            let w = &self.theta[off..off + m * m];
            let b = &self.theta[off + m * m..off + m * m + m];
            let prev = caches.last().expect("first layer");
            let mut z = b.to_vec();
            let mut dz = vec![vec![0.0; m]; d];
            let mut d2z = vec![vec![0.0; m]; d];
            for i in 0..m {
                for j in 0..m {
                    let wij = w[i * m + j];
                    z[i] += wij * prev.h[j];
                    for k in 0..d {
                        dz[k][i] += wij * prev.dh[k][j];
                        d2z[k][i] += wij * prev.d2h[k][j];
                    }
                }
            }
            caches.push(activate(&z, dz, d2z));
        }

        let last = caches.last().expect("at least one layer");
        let c = self.c();
        let dot = |v: &[f64]| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let u = dot(&last.h);
        let grad_x = (0..d).map(|k| dot(&last.dh[k])).collect();
        let diag_hess_x = (0..d).map(|k| dot(&last.d2h[k])).collect();
        Forward { layers: caches, s, u, grad_x, diag_hess_x }
    }

    pub(super) fn backward(&self, fwd: &Forward, seed: &Seed, out: &mut [f64]) {
        let (m, d) = (self.m, self.d);
        let sg = |k: usize| seed.grad_x.get(k).copied().unwrap_or(0.0);
        let sh = |k: usize| seed.diag_hess_x.get(k).copied().unwrap_or(0.0);
        let c = self.c().to_vec();
        let last = fwd.layers.last().expect("at least one layer");

        for i in 0..m {
            let mut v = seed.u * last.h[i];
            for k in 0..d {
                v += sg(k) * last.dh[k][i] + sh(k) * last.d2h[k][i];
            }
            out[i] += v;
        }

        // Adjoints of the current layer's outputs.
        let mut hb: Vec<f64> = c.iter().map(|ci| seed.u * ci).collect();
        let mut dhb: Vec<Vec<f64>> = (0..d).map(|k| c.iter().map(|ci| sg(k) * ci).collect()).collect();
        let mut d2hb: Vec<Vec<f64>> = (0..d).map(|k| c.iter().map(|ci| sh(k) * ci).collect()).collect();

        for l in (1..=self.layers).rev() {
            let cache = &fwd.layers[l - 1];
            let mut zb = vec![0.0; m];
            let mut dzb = vec![vec![0.0; m]; d];
            let mut d2zb = vec![vec![0.0; m]; d];
            for i in 0..m {
                let (h, t1, t2) = (cache.h[i], cache.t1[i], cache.t2[i]);
                let t3 = -2.0 * t1 * t1 + 4.0 * h * h * t1;
                let mut v = hb[i] * t1;
                for k in 0..d {
                    let (dzk, d2zk) = (cache.dz[k][i], cache.d2z[k][i]);
                    v += dhb[k][i] * t2 * dzk + d2hb[k][i] * (t3 * dzk * dzk + t2 * d2zk);
                    dzb[k][i] = dhb[k][i] * t1 + d2hb[k][i] * 2.0 * t2 * dzk;
                    d2zb[k][i] = d2hb[k][i] * t1;
                }
                zb[i] = v;
            }

            if l >= 2 {
                let prev = &fwd.layers[l - 2];
                let off = self.wl_offset(l);
                let w = &self.theta[off..off + m * m];
                for i in 0..m {
                    for j in 0..m {
                        let mut g = zb[i] * prev.h[j];
                        for k in 0..d {
                            g += dzb[k][i] * prev.dh[k][j] + d2zb[k][i] * prev.d2h[k][j];
                        }
                        out[off + i * m + j] += g;
                    }
                    out[off + m * m + i] += zb[i];
                }
                let back =
                    |v: &[f64]| -> Vec<f64> { (0..m).map(|j| (0..m).map(|i| w[i * m + j] * v[i]).sum()).collect() };
                hb = back(&zb);
                dhb = dzb.iter().map(|v| back(v)).collect();
                d2hb = d2zb.iter().map(|v| back(v)).collect();
            } else {
                let s = &fwd.s;
                let w1o = self.w1_offset();
                let b1o = self.b1_offset();
                for k in 0..d {
                    let mut pz = 0.0;
                    let mut pdz = 0.0;
                    let mut pd2z = 0.0;
                    for i in 0..m {
                        out[w1o + i * d + k] += zb[i] * s[0][k] + dzb[k][i] * s[1][k] + d2zb[k][i] * s[2][k];
                        let w = self.w1(i, k);
                        pz += w * zb[i];
                        pdz += w * dzb[k][i];
                        pd2z += w * d2zb[k][i];
                    }
                    out[b1o + k] -= pz * s[1][k] + pdz * s[2][k] + pd2z * s[3][k];
                }
            }
        }
    }
}

fn activate(z: &[f64], dz: Vec<Vec<f64>>, d2z: Vec<Vec<f64>>) -> LayerCache {
    let h: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
    let t1: Vec<f64> = h.iter().map(|h| 1.0 - h * h).collect();
    let t2: Vec<f64> = h.iter().zip(&t1).map(|(h, t1)| -2.0 * h * t1).collect();
    let dh = dz.iter().map(|dzk| dzk.iter().zip(&t1).map(|(a, b)| a * b).collect()).collect();
    let d2h = dz
        .iter()
        .zip(&d2z)
        .map(|(dzk, d2zk)| (0..h.len()).map(|i| t2[i] * dzk[i] * dzk[i] + t1[i] * d2zk[i]).collect())
        .collect();
    LayerCache { h, t1, t2, dz, d2z, dh, d2h }
}
