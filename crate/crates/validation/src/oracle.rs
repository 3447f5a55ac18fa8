//! Scalar reference computations.

use num_complex::Complex64;
use pbgc::{ChannelMatrix, PathParams};

/// Triple loop over paths, receive and transmit elements:
/// `H[k][l] = Σ_p g_p / √(n_r n_t) · exp(j u (k sin θ_a − l sin θ_d))`.
/// Row-major `n_r × n_t`.
pub fn scalar_channel(paths: &[PathParams], n_r: usize, n_t: usize, u: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n_r * n_t];
    let amp_norm = 1.0 / ((n_r * n_t) as f64).sqrt();
    for p in paths {
        let (sa, sd) = (p.aoa.sin(), p.aod.sin());
        for k in 0..n_r {
            for l in 0..n_t {
                let phase = u * (k as f64 * sa - l as f64 * sd);
                let amp = p.gain * amp_norm;
                out[k * n_t + l] += Complex64::new(amp * phase.cos(), amp * phase.sin());
            }
        }
    }
    out
}

/// `‖H − ref‖_F / ‖ref‖_F`; the absolute error when `ref` is zero.
pub fn relative_frobenius(h: &ChannelMatrix, reference: &[Complex64]) -> f64 {
    assert_eq!(h.entries().len(), reference.len(), "entry count");
    let (mut diff, mut norm) = (0.0, 0.0);
    for (a, b) in h.entries().iter().zip(reference) {
        diff += (a - b).norm_sqr();
        norm += b.norm_sqr();
    }
    if norm > 0.0 {
        (diff / norm).sqrt()
    } else {
        diff.sqrt()
    }
}

/// Kernel MMD with a Gaussian kernel `exp(−‖x−y‖² / (2γ²))`, biased (V-statistic)
/// estimate, by explicit double loops.
pub fn scalar_mmd(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| {
        let d: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        (-d / (2.0 * gamma * gamma)).exp()
    };
    let mean = |xs: &[Vec<f64>], ys: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in xs {
            for y in ys {
                s += k(x, y);
            }
        }
        s / (xs.len() * ys.len()) as f64
    };
    (mean(a, a) + mean(b, b) - 2.0 * mean(a, b)).max(0.0).sqrt()
}

/// Exact 2-Wasserstein distance by enumerating every permutation (Heap's
/// algorithm). Only for tiny sets.
pub fn brute_force_w2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len(), "equal cardinalities");
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum())
                .collect()
        })
        .collect();
    let total = |perm: &[usize]| {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| cost[i][j])
            .sum::<f64>()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (best / n as f64).sqrt()
}

/// Median Euclidean distance over all unordered pairs of distinct points in
/// `a ∪ b`, by full sort.
pub fn scalar_median_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let pts: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let mut d = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let s: f64 = pts[i]
                .iter()
                .zip(pts[j])
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            d.push(s.sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    }
}
