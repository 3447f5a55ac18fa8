//! Mini-batch training: encode → reparameterize → decode → synthesize, with
//! reverse-mode gradients through the synthesis step.

use ndarray::{concatenate, s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{direct, normalization_scale, EpochMetrics, LossTerms, VaeConfig, VaeMode, VaeModel};
use crate::channel::{ArrayConfig, ChannelMatrix};
use crate::dictionary::Dictionary;
use crate::error::{shape_err, Error, Result};
use crate::exec::Exec;
use crate::neural::{adam_step, Mode, OptimizerState};

/// Batch means of the loss terms plus the raw energies behind the NMSE.
struct Pass {
    terms: LossTerms,
    err_energy: f64,
    ref_energy: f64,
    grads: Option<Vec<Vec<f64>>>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl VaeModel {
    fn pass(
        &mut self,
        dict: Option<&Dictionary>,
        x: &Array2<f64>,
        noise: &Array2<f64>,
        want_grads: bool,
        exec: Exec,
    ) -> Result<Pass> {
        let b = x.nrows();
        let zd = self.config.latent_dim;
        if noise.dim() != (b, zd) {
            return Err(shape_err(
                format!("noise {b}x{zd}"),
                format!("{:?}", noise.dim()),
            ));
        }
        let enc = self.encoder.forward(x, Mode::Train)?;
        let mu = enc.slice(s![.., ..zd]).to_owned();
        let lv = enc.slice(s![.., zd..]).to_owned();
        let std = lv.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&std * noise);
        let dec = self.decoder.forward(&z, Mode::Train)?;
        let xh = match dict {
            Some(d) => d.synthesize_batch(dec.view(), exec)?,
            None => direct_batch(&dec, &self.array, exec),
        };
        let err = &xh - x;
        let bf = b as f64;
        let err_energy: f64 = err.iter().map(|e| e * e).sum();
        let ref_energy: f64 = x.iter().map(|e| e * e).sum();
        let kl: f64 = mu
            .iter()
            .zip(lv.iter())
            .map(|(m, l)| 0.5 * (m * m + l.exp() - l - 1.0))
            .sum();
        let relaxed = self.config.mode == VaeMode::Relaxed;
        let l1: f64 = if relaxed {
            dec.iter().map(|v| v.abs()).sum()
        } else {
            0.0
        };
        let (alpha_d, alpha_s) = (self.config.alpha_d, self.config.alpha_s);
        let terms = LossTerms::combine(err_energy / bf, kl / bf, l1 / bf, alpha_d, alpha_s);
        if !want_grads {
            return Ok(Pass {
                terms,
                err_energy,
                ref_energy,
                grads: None,
            });
        }

        let g_xh = err.mapv(|e| 2.0 * e / bf);
        let mut g_dec = match dict {
            Some(d) => d.gain_gradient_batch(g_xh.view(), exec)?,
            None => direct_batch_gradient(&dec, &g_xh, &self.array, exec),
        };
        if relaxed && alpha_s > 0.0 {
            g_dec.zip_mut_with(&dec, |g, &w| *g += alpha_s * sign(w) / bf);
        }
        let (dec_grads, g_z) = self.decoder.backward(&g_dec)?;
        let g_mu = &g_z + &mu.mapv(|m| alpha_d * m / bf);
        let mut g_lv = &g_z * noise * &std * 0.5;
        g_lv.zip_mut_with(&lv, |g, &l| *g += alpha_d * 0.5 * (l.exp() - 1.0) / bf);
        let g_enc = concatenate(Axis(1), &[g_mu.view(), g_lv.view()]).expect("same row count");
        let (mut grads, _) = self.encoder.backward(&g_enc)?;
        grads.extend(dec_grads);
        Ok(Pass {
            terms,
            err_energy,
            ref_energy,
            grads: Some(grads),
        })
    }

    /// Batch-mean objective on `batch` with the given reparameterization
    /// noise (`B × Z`). Runs the networks in training mode, so batch-norm
    /// running statistics are updated.
    pub fn batch_loss(
        &mut self,
        dict: Option<&Dictionary>,
        batch: &[ChannelMatrix],
        noise: &Array2<f64>,
    ) -> Result<LossTerms> {
        let dict = self.check_dictionary(dict)?;
        let x = self.normalized_rows(&batch.iter().collect::<Vec<_>>())?;
        Ok(self.pass(dict, &x, noise, false, Exec::Sequential)?.terms)
    }

    /// [`VaeModel::batch_loss`] plus its gradient with respect to every
    /// tensor of [`VaeModel::params`], in the same order.
    pub fn loss_and_gradients(
        &mut self,
        dict: Option<&Dictionary>,
        batch: &[ChannelMatrix],
        noise: &Array2<f64>,
    ) -> Result<(LossTerms, Vec<Vec<f64>>)> {
        let dict = self.check_dictionary(dict)?;
        let x = self.normalized_rows(&batch.iter().collect::<Vec<_>>())?;
        let p = self.pass(dict, &x, noise, true, Exec::Sequential)?;
        Ok((p.terms, p.grads.expect("gradients requested")))
    }
}

fn direct_batch(dec: &Array2<f64>, cfg: &ArrayConfig, exec: Exec) -> Array2<f64> {
    let dim = cfg.flat_dim();
    let rows = exec.map(dec.nrows(), |i| {
        let mut h = vec![0.0; dim];
        direct::synthesize_row(dec.row(i).as_slice().expect("contiguous"), cfg, &mut h);
        h
    });
    Array2::from_shape_vec((dec.nrows(), dim), rows.concat()).expect("row-major")
}

fn direct_batch_gradient(
    dec: &Array2<f64>,
    g_h: &Array2<f64>,
    cfg: &ArrayConfig,
    exec: Exec,
) -> Array2<f64> {
    let w = dec.ncols();
    let rows = exec.map(dec.nrows(), |i| {
        let mut g = vec![0.0; w];
        direct::row_gradient(
            dec.row(i).as_slice().expect("contiguous"),
            g_h.row(i).as_slice().expect("contiguous"),
            cfg,
            &mut g,
        );
        g
    });
    Array2::from_shape_vec((dec.nrows(), w), rows.concat()).expect("row-major")
}

/// Trains a fresh model with the default execution strategy.
pub fn train(
    dataset: &[ChannelMatrix],
    dict: Option<&Dictionary>,
    config: &VaeConfig,
) -> Result<VaeModel> {
    train_with(dataset, dict, config, Exec::default(), |_| {})
}

/// Trains a fresh model, calling `on_epoch` after every epoch.
pub fn train_with<F: FnMut(&EpochMetrics)>(
    dataset: &[ChannelMatrix],
    dict: Option<&Dictionary>,
    config: &VaeConfig,
    exec: Exec,
    on_epoch: F,
) -> Result<VaeModel> {
    config.validate()?;
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let array = ArrayConfig::new(first.n_t(), first.n_r(), config.u)?;
    let grid = match (config.mode, dict) {
        (VaeMode::Relaxed, Some(d)) => Some(*d.grid()),
        _ => None,
    };
    let mut model = VaeModel::init(config, &array, grid.as_ref(), normalization_scale(dataset))?;
    fit(&mut model, dataset, dict, config.epochs, exec, on_epoch)?;
    Ok(model)
}

/// Continues training `model` for `epochs` more epochs with a fresh
/// optimizer state. The normalization scale is kept.
pub fn resume<F: FnMut(&EpochMetrics)>(
    mut model: VaeModel,
    dataset: &[ChannelMatrix],
    dict: Option<&Dictionary>,
    epochs: usize,
    exec: Exec,
    on_epoch: F,
) -> Result<VaeModel> {
    fit(&mut model, dataset, dict, epochs, exec, on_epoch)?;
    Ok(model)
}

fn fit<F: FnMut(&EpochMetrics)>(
    model: &mut VaeModel,
    dataset: &[ChannelMatrix],
    dict: Option<&Dictionary>,
    epochs: usize,
    exec: Exec,
    mut on_epoch: F,
) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dict = model.check_dictionary(dict)?;
    let n = dataset.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let all = model.normalized_rows(&dataset.iter().collect::<Vec<_>>())?;
    let bs = model.config.batch_size.min(n);
    let zd = model.config.latent_dim;
    let names = model.param_names();
    let mut opt = OptimizerState::new(model.config.learning_rate);
    let start = model.history.len();
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    rng.set_stream(1 + start as u64);
    let mut order: Vec<usize> = (0..n).collect();

    for e in 0..epochs {
        let epoch = start + e + 1;
        order.shuffle(&mut rng);
        let (mut mse, mut kl, mut l1) = (0.0, 0.0, 0.0);
        let (mut err, mut reference, mut seen) = (0.0, 0.0, 0usize);
        for (bi, chunk) in order.chunks(bs).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let x = all.select(Axis(0), chunk);
            let noise =
                Array2::from_shape_simple_fn((chunk.len(), zd), || StandardNormal.sample(&mut rng));
            let p = model.pass(dict, &x, &noise, true, exec)?;
            if !p.terms.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            let grads = p.grads.expect("gradients requested");
            adam_step(&mut opt, &mut model.params_mut(), &grads, &names)?;
            let w = chunk.len() as f64;
            mse += w * p.terms.mse;
            kl += w * p.terms.kl;
            l1 += w * p.terms.l1;
            err += p.err_energy;
            reference += p.ref_energy;
            seen += chunk.len();
        }
        let s = seen as f64;
        // the logged total is recombined so the decomposition holds exactly
        let t = LossTerms::combine(
            mse / s,
            kl / s,
            l1 / s,
            model.config.alpha_d,
            model.config.alpha_s,
        );
        let m = EpochMetrics {
            epoch,
            total: t.total,
            mse: t.mse,
            kl: t.kl,
            l1: t.l1,
            nmse: if reference > 0.0 {
                err / reference
            } else {
                0.0
            },
        };
        model.history.push(m);
        on_epoch(&m);
    }
    Ok(())
}
