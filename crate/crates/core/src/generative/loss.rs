use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::dictionary::GainMatrix;
use crate::error::{shape_err, Result};

/// Loss components; `total = mse + alpha_d·kl + alpha_s·l1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
    pub l1: f64,
}

impl LossTerms {
    pub fn combine(mse: f64, kl: f64, l1: f64, alpha_d: f64, alpha_s: f64) -> Self {
        LossTerms {
            total: mse + alpha_d * kl + alpha_s * l1,
            mse,
            kl,
            l1,
        }
    }
}

/// KL divergence of `N(mu, diag(exp(logvar)))` from `N(0, I)`.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

/// Single-sample objective: squared Frobenius reconstruction error (over real
/// and imaginary parts), KL to the unit Gaussian prior, and the L1 norm of the
/// gain matrix when one is present.
pub fn vae_loss(
    h: &ChannelMatrix,
    h_hat: &ChannelMatrix,
    mu: &[f64],
    logvar: &[f64],
    w: Option<&GainMatrix>,
    alpha_d: f64,
    alpha_s: f64,
) -> Result<LossTerms> {
    if h.shape() != h_hat.shape() {
        return Err(shape_err(
            format!("{:?}", h.shape()),
            format!("{:?}", h_hat.shape()),
        ));
    }
    if mu.len() != logvar.len() {
        return Err(shape_err(mu.len(), logvar.len()));
    }
    let mse: f64 = h
        .entries()
        .iter()
        .zip(h_hat.entries())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let kl = gaussian_kl(mu, logvar);
    let l1 = w.map(GainMatrix::l1_norm).unwrap_or(0.0);
    Ok(LossTerms::combine(mse, kl, l1, alpha_d, alpha_s))
}
