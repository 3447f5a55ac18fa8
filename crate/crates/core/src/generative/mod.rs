//! Variational autoencoders over channel matrices.
//!
//! Both pipelines share the encoder (`Linear → BatchNorm → LeakyReLU` blocks
//! producing `(mu, logvar)`) and differ in what the decoder emits:
//!
//! * [`VaeMode::Direct`] emits `3P` path parameters `[g, aoa, aod]` which are
//!   synthesized with the geometric channel model;
//! * [`VaeMode::Relaxed`] emits an `R × R` gain matrix which is synthesized
//!   linearly through a [`Dictionary`].
//!
//! Channels are divided by the training set's mean Frobenius norm before
//! they reach the encoder; the scale is stored in the model and re-applied to
//! everything it decodes.

mod direct;
mod loss;
mod train;

pub use direct::{decode_row as decode_path_row, squash_angle};
pub use loss::{gaussian_kl, vae_loss, LossTerms};
pub use train::{resume, train, train_with};

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayConfig, ChannelMatrix, PathParams};
use crate::dictionary::{AngleGrid, Dictionary, GainMatrix};
use crate::error::{shape_err, Error, FormatError, Result};
use crate::exec::Exec;
use crate::io_util::parse_toml;
use crate::neural::checkpoint::{Checkpoint, ModelKind};
use crate::neural::{Mlp, DEFAULT_LEAKY_SLOPE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VaeMode {
    Direct,
    Relaxed,
}

impl VaeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            VaeMode::Direct => "direct",
            VaeMode::Relaxed => "relaxed",
        }
    }
}

impl std::str::FromStr for VaeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(VaeMode::Direct),
            "relaxed" => Ok(VaeMode::Relaxed),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected direct or relaxed)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub mode: VaeMode,
    pub latent_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    /// KL weight.
    pub alpha_d: f64,
    /// L1 weight on the gain matrix (relaxed mode only).
    pub alpha_s: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Number of decoded paths in direct mode.
    pub num_paths: usize,
    pub leaky_slope: f64,
    /// Array phase constant used when synthesizing channels.
    pub u: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            mode: VaeMode::Relaxed,
            latent_dim: 64,
            encoder_widths: vec![512, 256],
            decoder_widths: vec![256, 512],
            alpha_d: 1e-3,
            alpha_s: 1e-4,
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 256,
            seed: 0,
            num_paths: 1,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            u: std::f64::consts::PI,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.alpha_d >= 0.0 && self.alpha_d.is_finite()) {
            return bad(format!(
                "alpha_d must be a finite nonnegative number, got {}",
                self.alpha_d
            ));
        }
        if !(self.alpha_s >= 0.0 && self.alpha_s.is_finite()) {
            return bad(format!(
                "alpha_s must be a finite nonnegative number, got {}",
                self.alpha_s
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.encoder_widths.contains(&0) || self.decoder_widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.u > 0.0 && self.u.is_finite()) {
            return bad(format!("u must be positive, got {}", self.u));
        }
        if self.mode == VaeMode::Direct && self.num_paths == 0 {
            return bad("direct mode needs num_paths ≥ 1".into());
        }
        Ok(())
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: VaeConfig = parse_toml(src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

/// Batch-averaged loss components and reconstruction NMSE for one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
    pub l1: f64,
    pub nmse: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,total,mse,kl,l1,nmse";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e}",
            self.epoch, self.total, self.mse, self.kl, self.l1, self.nmse
        )
    }
}

pub fn write_history_csv<W: Write>(history: &[EpochMetrics], mut w: W) -> Result<()> {
    writeln!(w, "{}", EpochMetrics::CSV_HEADER)?;
    for m in history {
        writeln!(w, "{}", m.csv_row())?;
    }
    Ok(())
}

/// Trained (or freshly initialized) VAE.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    config: VaeConfig,
    array: ArrayConfig,
    grid: Option<AngleGrid>,
    scale: f64,
    history: Vec<EpochMetrics>,
}

#[derive(Serialize, Deserialize)]
struct VaeMeta {
    config: VaeConfig,
    array: ArrayConfig,
    grid: Option<AngleGrid>,
    scale: f64,
    history: Vec<EpochMetrics>,
}

/// Output of [`generate`]. `gains` is filled in relaxed mode and `paths` in
/// direct mode; both are in physical (de-normalized) units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratedSet {
    pub channels: Vec<ChannelMatrix>,
    pub gains: Vec<GainMatrix>,
    pub paths: Vec<Vec<PathParams>>,
}

impl VaeModel {
    /// Randomly initialized model. `grid` is required in relaxed mode and
    /// ignored in direct mode.
    pub fn init(
        config: &VaeConfig,
        array: &ArrayConfig,
        grid: Option<&AngleGrid>,
        scale: f64,
    ) -> Result<Self> {
        config.validate()?;
        array.validate()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "normalization scale must be positive, got {scale}"
            )));
        }
        let grid = match config.mode {
            VaeMode::Relaxed => {
                let g = grid.ok_or_else(|| {
                    Error::InvalidConfig("relaxed mode needs an angle grid".into())
                })?;
                g.validate()?;
                Some(*g)
            }
            VaeMode::Direct => None,
        };
        let out_dim = match (config.mode, grid) {
            (VaeMode::Relaxed, Some(g)) => g.resolution * g.resolution,
            _ => 3 * config.num_paths,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let z = config.latent_dim;
        let encoder = Mlp::block_stack(
            array.flat_dim(),
            &config.encoder_widths,
            2 * z,
            config.leaky_slope,
            &mut rng,
        );
        let decoder = Mlp::block_stack(
            z,
            &config.decoder_widths,
            out_dim,
            config.leaky_slope,
            &mut rng,
        );
        Ok(VaeModel {
            encoder,
            decoder,
            config: config.clone(),
            array: *array,
            grid,
            scale,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn mode(&self) -> VaeMode {
        self.config.mode
    }

    pub fn array(&self) -> &ArrayConfig {
        &self.array
    }

    pub fn grid(&self) -> Option<&AngleGrid> {
        self.grid.as_ref()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Trainable tensors: encoder then decoder.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = self.encoder.param_names("encoder");
        n.extend(self.decoder.param_names("decoder"));
        n
    }

    fn check_channel(&self, h: &ChannelMatrix) -> Result<()> {
        if !h.matches(&self.array) {
            return Err(shape_err(
                format!("{}x{}", self.array.n_r, self.array.n_t),
                format!("{}x{}", h.n_r(), h.n_t()),
            ));
        }
        Ok(())
    }

    /// Checks that `dict` is present exactly when the mode needs it and that
    /// it matches the model's grid and array.
    pub(crate) fn check_dictionary<'a>(
        &self,
        dict: Option<&'a Dictionary>,
    ) -> Result<Option<&'a Dictionary>> {
        match (self.config.mode, dict) {
            (VaeMode::Relaxed, None) => Err(Error::InvalidConfig(
                "relaxed mode needs a dictionary".into(),
            )),
            (VaeMode::Direct, Some(_)) => Err(Error::InvalidConfig(
                "direct mode does not use a dictionary".into(),
            )),
            (VaeMode::Direct, None) => Ok(None),
            (VaeMode::Relaxed, Some(d)) => {
                if Some(*d.grid()) != self.grid || *d.config() != self.array {
                    return Err(Error::InvalidConfig(
                        "dictionary grid or array does not match the model".into(),
                    ));
                }
                Ok(Some(d))
            }
        }
    }

    pub(crate) fn normalized_rows(&self, batch: &[&ChannelMatrix]) -> Result<Array2<f64>> {
        let dim = self.array.flat_dim();
        let mut flat = Vec::with_capacity(batch.len() * dim);
        for h in batch {
            self.check_channel(h)?;
            h.write_flat(&mut flat);
        }
        let inv = 1.0 / self.scale;
        flat.iter_mut().for_each(|v| *v *= inv);
        Ok(Array2::from_shape_vec((batch.len(), dim), flat).expect("row-major batch"))
    }

    fn mode_guard(&self, expected: VaeMode) -> Result<()> {
        if self.config.mode != expected {
            return Err(Error::ModeMismatch {
                expected: expected.as_str(),
                actual: self.config.mode.as_str(),
            });
        }
        Ok(())
    }

    fn decode_rows(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.config.latent_dim {
            return Err(shape_err(self.config.latent_dim, z.ncols()));
        }
        self.decoder.predict(z)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = VaeMeta {
            config: self.config.clone(),
            array: self.array,
            grid: self.grid,
            scale: self.scale,
            history: self.history.clone(),
        };
        Checkpoint {
            kind: ModelKind::Vae,
            metadata: serde_json::to_string(&meta).expect("metadata serializes"),
            networks: vec![
                ("encoder".into(), self.encoder.clone()),
                ("decoder".into(), self.decoder.clone()),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::Vae {
            return Err(FormatError::Inconsistent("checkpoint does not hold a VAE".into()).into());
        }
        let meta: VaeMeta = serde_json::from_str(&ck.metadata)
            .map_err(|e| FormatError::Inconsistent(format!("VAE metadata: {e}")))?;
        let model = VaeModel {
            encoder: ck.network("encoder")?.clone(),
            decoder: ck.network("decoder")?.clone(),
            config: meta.config,
            array: meta.array,
            grid: meta.grid,
            scale: meta.scale,
            history: meta.history,
        };
        let z = model.config.latent_dim;
        let out = match (model.config.mode, model.grid) {
            (VaeMode::Relaxed, Some(g)) => g.resolution * g.resolution,
            (VaeMode::Relaxed, None) => {
                return Err(FormatError::Inconsistent("relaxed VAE without a grid".into()).into())
            }
            (VaeMode::Direct, _) => 3 * model.config.num_paths,
        };
        let dims = [
            (
                model.encoder.input_dim(),
                model.array.flat_dim(),
                "encoder input",
            ),
            (model.encoder.output_dim(), 2 * z, "encoder output"),
            (model.decoder.input_dim(), z, "decoder input"),
            (model.decoder.output_dim(), out, "decoder output"),
        ];
        for (got, want, what) in dims {
            if got != Some(want) {
                return Err(FormatError::Inconsistent(format!(
                    "{what} width {got:?} does not match configuration ({want})"
                ))
                .into());
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Posterior parameters for one channel (evaluation-mode batch norm).
pub fn encode(model: &VaeModel, h: &ChannelMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = model.normalized_rows(&[h])?;
    let out = model.encoder.predict(&x)?;
    let z = model.config.latent_dim;
    let row = out.row(0);
    Ok((
        row.iter().take(z).copied().collect(),
        row.iter().skip(z).copied().collect(),
    ))
}

/// Decodes a latent vector into `P` paths with physical gains.
pub fn decode_direct(model: &VaeModel, z: &[f64]) -> Result<Vec<PathParams>> {
    model.mode_guard(VaeMode::Direct)?;
    let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("one row");
    let raw = model.decode_rows(&zm)?;
    let mut paths = direct::decode_row(raw.row(0).as_slice().expect("contiguous"));
    for p in &mut paths {
        p.gain *= model.scale;
    }
    Ok(paths)
}

/// Decodes a latent vector into an `R × R` gain matrix in physical units.
pub fn decode_relaxed(model: &VaeModel, z: &[f64]) -> Result<GainMatrix> {
    model.mode_guard(VaeMode::Relaxed)?;
    let r = model.grid.expect("relaxed model has a grid").resolution;
    let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("one row");
    let raw = model.decode_rows(&zm)?;
    let w = raw
        .row(0)
        .iter()
        .map(|v| v * model.scale)
        .collect::<Vec<_>>();
    Ok(GainMatrix(
        Array2::from_shape_vec((r, r), w).expect("R² outputs"),
    ))
}

const GENERATE_CHUNK: usize = 512;

/// Draws `count` latents from `N(0, I)` and decodes and synthesizes them.
pub fn generate(
    model: &VaeModel,
    dict: Option<&Dictionary>,
    count: usize,
    seed: u64,
) -> Result<GeneratedSet> {
    generate_with(model, dict, count, seed, Exec::default())
}

pub fn generate_with(
    model: &VaeModel,
    dict: Option<&Dictionary>,
    count: usize,
    seed: u64,
    exec: Exec,
) -> Result<GeneratedSet> {
    let dict = model.check_dictionary(dict)?;
    let mut out = GeneratedSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zdim = model.config.latent_dim;
    let (n_r, n_t) = (model.array.n_r, model.array.n_t);
    let dim = model.array.flat_dim();
    let s = model.scale;
    let mut done = 0;
    while done < count {
        let b = GENERATE_CHUNK.min(count - done);
        let z = Array2::from_shape_simple_fn((b, zdim), || StandardNormal.sample(&mut rng));
        let raw = model.decode_rows(&z)?;
        match dict {
            Some(d) => {
                let r = d.resolution();
                let flat = d.synthesize_batch(raw.view(), exec)?;
                for (hrow, wrow) in flat.axis_iter(Axis(0)).zip(raw.axis_iter(Axis(0))) {
                    let h: Vec<f64> = hrow.iter().map(|v| v * s).collect();
                    out.channels.push(ChannelMatrix::from_flat(n_r, n_t, &h)?);
                    let w = Array2::from_shape_fn((r, r), |(i, j)| wrow[i * r + j] * s);
                    out.gains.push(GainMatrix(w));
                }
            }
            None => {
                let arr = model.array;
                let rows = exec.map(b, |i| {
                    let row = raw.row(i);
                    let row = row.as_slice().expect("contiguous");
                    let mut h = vec![0.0; dim];
                    direct::synthesize_row(row, &arr, &mut h);
                    h.iter_mut().for_each(|v| *v *= s);
                    let mut paths = direct::decode_row(row);
                    paths.iter_mut().for_each(|p| p.gain *= s);
                    (h, paths)
                });
                for (h, paths) in rows {
                    out.channels.push(ChannelMatrix::from_flat(n_r, n_t, &h)?);
                    out.paths.push(paths);
                }
            }
        }
        done += b;
    }
    Ok(out)
}

/// Mean Frobenius norm of a dataset, used as the input normalization scale.
/// Falls back to 1 for an all-zero dataset.
pub fn normalization_scale(dataset: &[ChannelMatrix]) -> f64 {
    if dataset.is_empty() {
        return 1.0;
    }
    let mean = dataset
        .iter()
        .map(ChannelMatrix::frobenius_norm)
        .sum::<f64>()
        / dataset.len() as f64;
    if mean > 0.0 && mean.is_finite() {
        mean
    } else {
        1.0
    }
}
