//! Downstream utility check: a dense bottleneck autoencoder for channel
//! compression, and the train-set × test-set NMSE cross-evaluation.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{shape_err, Error, FormatError, Result};
use crate::generative::normalization_scale;
use crate::neural::checkpoint::{Checkpoint, ModelKind};
use crate::neural::{adam_step, Mlp, Mode, OptimizerState, DEFAULT_LEAKY_SLOPE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressorConfig {
    pub bottleneck_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub leaky_slope: f64,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig {
            bottleneck_dim: 32,
            widths: vec![256],
            epochs: 300,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl CompressorConfig {
    /// `input_dim` is the flattened channel length `2·n_r·n_t`.
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.bottleneck_dim == 0 || self.bottleneck_dim > input_dim {
            return bad(format!(
                "bottleneck_dim must be in 1..={input_dim}, got {}",
                self.bottleneck_dim
            ));
        }
        if self.widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Compressor {
    pub encoder: Mlp,
    pub decoder: Mlp,
    config: CompressorConfig,
    shape: (usize, usize),
    scale: f64,
    /// Per-epoch training NMSE.
    history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CompressorMeta {
    config: CompressorConfig,
    n_r: usize,
    n_t: usize,
    scale: f64,
    history: Vec<f64>,
}

fn flatten(channels: &[ChannelMatrix], shape: (usize, usize), scale: f64) -> Result<Array2<f64>> {
    let dim = 2 * shape.0 * shape.1;
    let mut flat = Vec::with_capacity(channels.len() * dim);
    for h in channels {
        if h.shape() != shape {
            return Err(shape_err(format!("{shape:?}"), format!("{:?}", h.shape())));
        }
        h.write_flat(&mut flat);
    }
    flat.iter_mut().for_each(|v| *v /= scale);
    Ok(Array2::from_shape_vec((channels.len(), dim), flat).expect("rectangular"))
}

/// Trains a compressor on squared reconstruction error.
pub fn train_compressor(
    dataset: &[ChannelMatrix],
    config: &CompressorConfig,
) -> Result<Compressor> {
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let shape = first.shape();
    let dim = 2 * shape.0 * shape.1;
    config.validate(dim)?;
    if dataset.len() < 2 {
        return Err(Error::BatchTooSmall(dataset.len()));
    }
    let scale = normalization_scale(dataset);
    let x_all = flatten(dataset, shape, scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let encoder = Mlp::block_stack(
        dim,
        &config.widths,
        config.bottleneck_dim,
        config.leaky_slope,
        &mut rng,
    );
    let rev: Vec<usize> = config.widths.iter().rev().copied().collect();
    let decoder = Mlp::block_stack(
        config.bottleneck_dim,
        &rev,
        dim,
        config.leaky_slope,
        &mut rng,
    );
    let mut model = Compressor {
        encoder,
        decoder,
        config: config.clone(),
        shape,
        scale,
        history: Vec::with_capacity(config.epochs),
    };
    let mut names = model.encoder.param_names("encoder");
    names.extend(model.decoder.param_names("decoder"));
    let mut opt = OptimizerState::new(config.learning_rate);
    let n = dataset.len();
    let bs = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut err, mut reference) = (0.0, 0.0);
        for (bi, chunk) in order.chunks(bs).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let x = x_all.select(Axis(0), chunk);
            let code = model.encoder.forward(&x, Mode::Train)?;
            let xh = model.decoder.forward(&code, Mode::Train)?;
            let diff = &xh - &x;
            let e: f64 = diff.iter().map(|d| d * d).sum();
            if !e.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            err += e;
            reference += x.iter().map(|v| v * v).sum::<f64>();
            let g = diff.mapv(|d| 2.0 * d / chunk.len() as f64);
            let (dec_grads, g_code) = model.decoder.backward(&g)?;
            let (mut grads, _) = model.encoder.backward(&g_code)?;
            grads.extend(dec_grads);
            let mut params = model.encoder.params_mut();
            params.extend(model.decoder.params_mut());
            adam_step(&mut opt, &mut params, &grads, &names)?;
        }
        model.history.push(if reference > 0.0 {
            err / reference
        } else {
            0.0
        });
    }
    Ok(model)
}

impl Compressor {
    pub fn config(&self) -> &CompressorConfig {
        &self.config
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn reconstruct_batch(&self, channels: &[ChannelMatrix]) -> Result<Vec<ChannelMatrix>> {
        if channels.is_empty() {
            return Ok(Vec::new());
        }
        let x = flatten(channels, self.shape, self.scale)?;
        let xh = self.decoder.predict(&self.encoder.predict(&x)?)?;
        xh.rows()
            .into_iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().map(|x| x * self.scale).collect();
                ChannelMatrix::from_flat(self.shape.0, self.shape.1, &v)
            })
            .collect()
    }

    pub fn reconstruct(&self, h: &ChannelMatrix) -> Result<ChannelMatrix> {
        Ok(self.reconstruct_batch(std::slice::from_ref(h))?.remove(0))
    }

    /// Mean over samples of `‖H − Ĥ‖²_F / ‖H‖²_F`; zero-norm samples are
    /// rejected.
    pub fn mean_nmse(&self, channels: &[ChannelMatrix]) -> Result<f64> {
        if channels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let rec = self.reconstruct_batch(channels)?;
        let mut total = 0.0;
        for (h, hh) in channels.iter().zip(&rec) {
            total += crate::channel::nmse(h, hh)?;
        }
        Ok(total / channels.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = CompressorMeta {
            config: self.config.clone(),
            n_r: self.shape.0,
            n_t: self.shape.1,
            scale: self.scale,
            history: self.history.clone(),
        };
        Checkpoint {
            kind: ModelKind::Compressor,
            metadata: serde_json::to_string(&meta).expect("metadata serializes"),
            networks: vec![
                ("encoder".into(), self.encoder.clone()),
                ("decoder".into(), self.decoder.clone()),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::Compressor {
            return Err(
                FormatError::Inconsistent("checkpoint does not hold a compressor".into()).into(),
            );
        }
        let meta: CompressorMeta = serde_json::from_str(&ck.metadata)
            .map_err(|e| FormatError::Inconsistent(format!("compressor metadata: {e}")))?;
        let dim = 2 * meta.n_r * meta.n_t;
        let encoder = ck.network("encoder")?.clone();
        let decoder = ck.network("decoder")?.clone();
        if encoder.input_dim() != Some(dim) || decoder.output_dim() != Some(dim) {
            return Err(FormatError::Inconsistent(
                "compressor widths do not match its shape".into(),
            )
            .into());
        }
        Ok(Compressor {
            encoder,
            decoder,
            config: meta.config,
            shape: (meta.n_r, meta.n_t),
            scale: meta.scale,
            history: meta.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Labeled NMSE matrix: `nmse[[i, j]]` is the compressor trained on
/// `train_labels[i]` evaluated on `test_labels[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalMatrix {
    pub train_labels: Vec<String>,
    pub test_labels: Vec<String>,
    pub nmse: Vec<Vec<f64>>,
}

impl CrossEvalMatrix {
    pub fn get(&self, train: &str, test: &str) -> Option<f64> {
        let i = self.train_labels.iter().position(|l| l == train)?;
        let j = self.test_labels.iter().position(|l| l == test)?;
        Some(self.nmse[i][j])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "train\\test,{}", self.test_labels.join(","))?;
        for (label, row) in self.train_labels.iter().zip(&self.nmse) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{label},{}", vals.join(","))?;
        }
        Ok(())
    }
}

pub type NamedSet = (String, Vec<ChannelMatrix>);

/// Trains one compressor per train set (up to `jobs` at a time) and
/// evaluates each on every test set.
pub fn cross_evaluate(
    train_sets: &[NamedSet],
    test_sets: &[NamedSet],
    config: &CompressorConfig,
    jobs: usize,
) -> Result<CrossEvalMatrix> {
    let shape = train_sets
        .iter()
        .chain(test_sets)
        .find_map(|(_, s)| s.first().map(ChannelMatrix::shape))
        .ok_or(Error::EmptyDataset)?;
    for (name, set) in train_sets.iter().chain(test_sets) {
        if set.is_empty() {
            return Err(Error::InvalidConfig(format!("set `{name}` is empty")));
        }
        if let Some(h) = set.iter().find(|h| h.shape() != shape) {
            return Err(shape_err(
                format!("{shape:?} in every set"),
                format!("{:?} in `{name}`", h.shape()),
            ));
        }
    }
    let run = |i: usize| -> Result<Vec<f64>> {
        let model = train_compressor(&train_sets[i].1, config)?;
        test_sets.iter().map(|(_, t)| model.mean_nmse(t)).collect()
    };
    let rows: Vec<Result<Vec<f64>>> = run_jobs(train_sets.len(), jobs, run);
    Ok(CrossEvalMatrix {
        train_labels: train_sets.iter().map(|(n, _)| n.clone()).collect(),
        test_labels: test_sets.iter().map(|(n, _)| n.clone()).collect(),
        nmse: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(feature = "parallel")]
fn run_jobs<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if jobs <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs<T, F>(n: usize, _jobs: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
