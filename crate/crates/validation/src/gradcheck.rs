//! Central finite-difference gradient checks.

use ndarray::Array2;
use pbgc::generative::VaeModel;
use pbgc::neural::{Mlp, Mode};
use pbgc::{ChannelMatrix, Dictionary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|)`, with the denominator floored at 1e-5 so that
/// exactly-zero gradients compare by absolute roundoff (about ε·|L|/h).
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

pub fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Worst relative error over every parameter and input of `net` for the
/// scalar loss `Σ c ⊙ net(x)`, with `x` and `c` standard normal.
pub fn network_worst_error(mut net: Mlp, seed: u64, rows: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = standard_normal(&mut rng, rows, net.input_dim().expect("nonempty network"));
    let c = standard_normal(&mut rng, rows, net.output_dim().expect("nonempty network"));
    let loss = |net: &mut Mlp, x: &Array2<f64>| -> f64 {
        (&net.forward(x, Mode::Train).expect("forward") * &c).sum()
    };
    net.forward(&x, Mode::Train).expect("forward");
    let (grads, dx) = net.backward(&c).expect("backward");
    let mut worst: f64 = 0.0;
    for (t, g) in grads.iter().enumerate() {
        for (k, &analytic) in g.iter().enumerate() {
            let orig = net.params()[t][k];
            net.params_mut()[t][k] = orig + STEP;
            let up = loss(&mut net, &x);
            net.params_mut()[t][k] = orig - STEP;
            let down = loss(&mut net, &x);
            net.params_mut()[t][k] = orig;
            worst = worst.max(rel_err(analytic, (up - down) / (2.0 * STEP)));
        }
    }
    for ((i, j), &analytic) in dx.indexed_iter() {
        let mut xp = x.clone();
        xp[[i, j]] += STEP;
        let up = loss(&mut net, &xp);
        xp[[i, j]] -= 2.0 * STEP;
        let down = loss(&mut net, &xp);
        worst = worst.max(rel_err(analytic, (up - down) / (2.0 * STEP)));
    }
    worst
}

/// Worst relative error of the full VAE objective over every trainable
/// scalar of `model`, with the reparameterization noise held fixed.
pub fn vae_worst_error(
    model: &mut VaeModel,
    dict: Option<&Dictionary>,
    batch: &[ChannelMatrix],
    noise: &Array2<f64>,
) -> f64 {
    let (_, grads) = model
        .loss_and_gradients(dict, batch, noise)
        .expect("gradients");
    let mut worst: f64 = 0.0;
    for (t, g) in grads.iter().enumerate() {
        for (k, &analytic) in g.iter().enumerate() {
            let orig = model.params()[t][k];
            model.params_mut()[t][k] = orig + STEP;
            let up = model.batch_loss(dict, batch, noise).expect("loss").total;
            model.params_mut()[t][k] = orig - STEP;
            let down = model.batch_loss(dict, batch, noise).expect("loss").total;
            model.params_mut()[t][k] = orig;
            worst = worst.max(rel_err(analytic, (up - down) / (2.0 * STEP)));
        }
    }
    worst
}
