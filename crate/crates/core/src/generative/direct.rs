//! Direct-parameter decoding: the decoder emits `[g, raw_aoa, raw_aod]` per
//! path and each raw angle is squashed onto `(-π, π)` with `π·tanh`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::{ArrayConfig, PathParams};

pub fn squash_angle(raw: f64) -> f64 {
    PI * raw.tanh()
}

fn squash_slope(raw: f64) -> f64 {
    let t = raw.tanh();
    PI * (1.0 - t * t)
}

/// Interprets one decoder row of length `3P`.
pub fn decode_row(row: &[f64]) -> Vec<PathParams> {
    row.chunks_exact(3)
        .map(|c| PathParams {
            gain: c[0],
            aoa: squash_angle(c[1]),
            aod: squash_angle(c[2]),
        })
        .collect()
}

fn phases(theta: f64, n: usize, u: f64) -> Vec<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    let step = u * theta.sin();
    (0..n)
        .map(|k| Complex64::from_polar(norm, k as f64 * step))
        .collect()
}

/// Flat channel (real plane then imaginary plane) for one decoder row.
pub(crate) fn synthesize_row(row: &[f64], cfg: &ArrayConfig, out: &mut [f64]) {
    let (n_r, n_t) = (cfg.n_r, cfg.n_t);
    let m = n_r * n_t;
    out.iter_mut().for_each(|v| *v = 0.0);
    for p in decode_row(row) {
        let ar = phases(p.aoa, n_r, cfg.u);
        let at = phases(p.aod, n_t, cfg.u);
        for k in 0..n_r {
            let gr = ar[k] * p.gain;
            for l in 0..n_t {
                let v = gr * at[l].conj();
                out[k * n_t + l] += v.re;
                out[m + k * n_t + l] += v.im;
            }
        }
    }
}

/// Gradient of a real loss with respect to one raw decoder row, given the
/// gradient `grad_h` with respect to the flat synthesized channel.
pub(crate) fn row_gradient(row: &[f64], grad_h: &[f64], cfg: &ArrayConfig, out: &mut [f64]) {
    let (n_r, n_t, u) = (cfg.n_r, cfg.n_t, cfg.u);
    let m = n_r * n_t;
    for (c, o) in row.chunks_exact(3).zip(out.chunks_exact_mut(3)) {
        let (g, aoa, aod) = (c[0], squash_angle(c[1]), squash_angle(c[2]));
        let ar = phases(aoa, n_r, u);
        let at = phases(aod, n_t, u);
        // q_kl = conj(G_kl) · a_r[k] · conj(a_t[l])
        let mut s0 = Complex64::new(0.0, 0.0);
        let mut s_k = Complex64::new(0.0, 0.0);
        let mut s_l = Complex64::new(0.0, 0.0);
        for k in 0..n_r {
            for l in 0..n_t {
                let gk = Complex64::new(grad_h[k * n_t + l], -grad_h[m + k * n_t + l]);
                let q = gk * ar[k] * at[l].conj();
                s0 += q;
                s_k += q * k as f64;
                s_l += q * l as f64;
            }
        }
        o[0] = s0.re;
        o[1] = -g * u * aoa.cos() * s_k.im * squash_slope(c[1]);
        o[2] = g * u * aod.cos() * s_l.im * squash_slope(c[2]);
    }
}
