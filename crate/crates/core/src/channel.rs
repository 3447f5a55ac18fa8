//! Geometric multipath channel model for uniform linear arrays.
//!
//! A channel is the superposition of `P` propagation paths, each contributing
//! `g · a_r(θ_a) · a_t(θ_d)^H`, where `a_r` and `a_t` are the unit-norm receive
//! and transmit array responses. Matrices are stored receive-major
//! (`n_r × n_t`): row = receive antenna, column = transmit antenna.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Antenna counts and the phase constant `u = 2π·d/λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_t: usize,
    pub n_r: usize,
    #[serde(default = "default_u")]
    pub u: f64,
}

fn default_u() -> f64 {
    PI
}

impl ArrayConfig {
    pub fn new(n_t: usize, n_r: usize, u: f64) -> Result<Self> {
        let cfg = ArrayConfig { n_t, n_r, u };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n × n` array with half-wavelength spacing.
    pub fn square(n: usize) -> Self {
        ArrayConfig {
            n_t: n,
            n_r: n,
            u: PI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 {
            return Err(Error::InvalidConfig(format!(
                "antenna counts must be positive (n_t={}, n_r={})",
                self.n_t, self.n_r
            )));
        }
        if !(self.u.is_finite() && self.u > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "phase constant u must be positive and finite, got {}",
                self.u
            )));
        }
        Ok(())
    }

    /// Number of reals in a flattened channel (real plane + imaginary plane).
    pub fn flat_dim(&self) -> usize {
        2 * self.n_r * self.n_t
    }
}

/// One propagation path: linear gain, angle of arrival, angle of departure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: f64,
    pub aoa: f64,
    pub aod: f64,
}

impl PathParams {
    pub fn new(gain: f64, aoa: f64, aod: f64) -> Self {
        PathParams { gain, aoa, aod }
    }

    /// Checks that both angles lie in `[-π, π]` and everything is finite.
    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a.is_finite() && (-PI..=PI).contains(&a);
        if !self.gain.is_finite() || !ok(self.aoa) || !ok(self.aod) {
            return Err(Error::InvalidConfig(format!(
                "path parameters out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Complex `n_r × n_t` propagation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix(Array2<Complex64>);

impl ChannelMatrix {
    pub fn zeros(config: &ArrayConfig) -> Self {
        ChannelMatrix(Array2::zeros((config.n_r, config.n_t)))
    }

    pub fn from_array(entries: Array2<Complex64>) -> Self {
        ChannelMatrix(entries)
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn entries_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.0
    }

    pub fn into_array(self) -> Array2<Complex64> {
        self.0
    }

    pub fn n_r(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn matches(&self, config: &ArrayConfig) -> bool {
        self.shape() == (config.n_r, config.n_t)
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ChannelMatrix(self.0.mapv(|c| c * factor))
    }

    /// Real plane then imaginary plane, each row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.0.len());
        self.write_flat(&mut out);
        out
    }

    pub(crate) fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend(self.0.iter().map(|c| c.re));
        out.extend(self.0.iter().map(|c| c.im));
    }

    /// Inverse of [`ChannelMatrix::to_flat`].
    pub fn from_flat(n_r: usize, n_t: usize, flat: &[f64]) -> Result<Self> {
        let m = n_r * n_t;
        if flat.len() != 2 * m {
            return Err(shape_err(2 * m, flat.len()));
        }
        let entries = Array2::from_shape_fn((n_r, n_t), |(i, j)| {
            let k = i * n_t + j;
            Complex64::new(flat[k], flat[m + k])
        });
        Ok(ChannelMatrix(entries))
    }
}

/// Unit-norm ULA response with `n` elements: entry `k` is
/// `exp(j·k·u·sin θ) / √n`.
pub fn steering_vector(theta: f64, n: usize, u: f64) -> Array1<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    let step = u * theta.sin();
    Array1::from_shape_fn(n, |k| Complex64::from_polar(norm, k as f64 * step))
}

pub fn array_response_tx(theta: f64, config: &ArrayConfig) -> Array1<Complex64> {
    steering_vector(theta, config.n_t, config.u)
}

pub fn array_response_rx(theta: f64, config: &ArrayConfig) -> Array1<Complex64> {
    steering_vector(theta, config.n_r, config.u)
}

/// `H = Σ_p g_p · a_r(θ_a^p) · a_t(θ_d^p)^H`. An empty path list gives the zero
/// matrix.
pub fn synthesize_channel(paths: &[PathParams], config: &ArrayConfig) -> ChannelMatrix {
    let mut h = Array2::<Complex64>::zeros((config.n_r, config.n_t));
    for p in paths {
        let rx = array_response_rx(p.aoa, config);
        let tx = array_response_tx(p.aod, config);
        for (i, r) in rx.iter().enumerate() {
            let gr = r * p.gain;
            for (h_ij, t) in h.row_mut(i).iter_mut().zip(tx.iter()) {
                *h_ij += gr * t.conj();
            }
        }
    }
    ChannelMatrix(h)
}

/// `‖H − Ĥ‖²_F / ‖H‖²_F`.
pub fn nmse(reference: &ChannelMatrix, estimate: &ChannelMatrix) -> Result<f64> {
    if reference.shape() != estimate.shape() {
        return Err(shape_err(
            format!("{:?}", reference.shape()),
            format!("{:?}", estimate.shape()),
        ));
    }
    let denom = reference.frobenius_norm_sqr();
    if denom == 0.0 {
        return Err(Error::ZeroNormReference);
    }
    let err: f64 = reference
        .0
        .iter()
        .zip(estimate.0.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(err / denom)
}
