//! Synthetic scenarios, seeded channel datasets, splitting, and the `CHNL`
//! channel tensor file format.
//!
//! A scenario draws each path's gain, angle of arrival and angle of departure
//! independently from uniform ranges. Sample `i` of a dataset uses its own
//! ChaCha stream `(seed, i)`, so generation is reproducible bit-for-bit and
//! independent of the execution strategy.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{synthesize_channel, ArrayConfig, ChannelMatrix, PathParams};
use crate::error::{Error, FormatError, Result};
use crate::exec::Exec;
use crate::generative::normalization_scale;
use crate::io_util::{line_col, parse_toml, write_atomic, ByteReader};

pub const MAGIC: &[u8; 4] = b"CHNL";
pub const VERSION: u16 = 1;
const FLAG_TRUTH: u8 = 1;
const FLAG_SCENARIO: u8 = 2;

/// Independent uniform ranges for one path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathDistribution {
    #[serde(rename = "gain")]
    pub gain_range: (f64, f64),
    #[serde(rename = "aoa")]
    pub aoa_range: (f64, f64),
    #[serde(rename = "aod")]
    pub aod_range: (f64, f64),
}

impl PathDistribution {
    pub fn new(gain: (f64, f64), aoa: (f64, f64), aod: (f64, f64)) -> Self {
        PathDistribution {
            gain_range: gain,
            aoa_range: aoa,
            aod_range: aod,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("gain", self.gain_range, None)?;
        check_range("aoa", self.aoa_range, Some(PI))?;
        check_range("aod", self.aod_range, Some(PI))
    }

    /// True when both angles lie inside this distribution's angle box.
    pub fn contains_angles(&self, aoa: f64, aod: f64) -> bool {
        (self.aoa_range.0..=self.aoa_range.1).contains(&aoa)
            && (self.aod_range.0..=self.aod_range.1).contains(&aod)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> PathParams {
        let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let gain = draw(self.gain_range);
        let aoa = draw(self.aoa_range);
        let aod = draw(self.aod_range);
        PathParams { gain, aoa, aod }
    }
}

fn check_range(what: &str, (lo, hi): (f64, f64), bound: Option<f64>) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "{what} range [{lo}, {hi}] must be finite with low ≤ high"
        )));
    }
    if let Some(b) = bound {
        if lo < -b || hi > b {
            return Err(Error::InvalidConfig(format!(
                "{what} range [{lo}, {hi}] must lie within [-π, π]"
            )));
        }
    }
    Ok(())
}

/// A named parameter distribution over `P ≥ 1` paths and an antenna array.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub array: ArrayConfig,
    #[serde(rename = "path")]
    pub paths: Vec<PathDistribution>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    array: toml::Spanned<ArrayConfig>,
    #[serde(default)]
    path: Vec<toml::Spanned<RawPath>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    gain: toml::Spanned<(f64, f64)>,
    aoa: toml::Spanned<(f64, f64)>,
    aod: toml::Spanned<(f64, f64)>,
}

fn at<T>(src: &str, span: std::ops::Range<usize>, r: Result<T>) -> Result<T> {
    r.map_err(|e| {
        let (line, column) = line_col(src, span.start);
        let message = match e {
            Error::InvalidConfig(m) => m,
            other => other.to_string(),
        };
        Error::Spec {
            line,
            column,
            message,
        }
    })
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        if self.paths.is_empty() {
            return Err(Error::InvalidConfig(
                "a scenario needs at least one path".into(),
            ));
        }
        self.paths.iter().try_for_each(PathDistribution::validate)
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Parses the TOML scenario format; every error carries a line and column.
    ///
    /// ```toml
    /// name = "example"
    /// [array]
    /// n_t = 16
    /// n_r = 16
    /// [[path]]
    /// gain = [0.001, 0.01]
    /// aoa = [0.4, 0.8]
    /// aod = [0.1, 0.3]
    /// ```
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let raw: RawSpec = parse_toml(src)?;
        let array_span = raw.array.span();
        let array = raw.array.into_inner();
        at(src, array_span.clone(), array.validate())?;
        if raw.path.is_empty() {
            return at(
                src,
                0..0,
                Err(Error::InvalidConfig(
                    "a scenario needs at least one [[path]] block".into(),
                )),
            );
        }
        let mut paths = Vec::with_capacity(raw.path.len());
        for p in raw.path {
            let p = p.into_inner();
            at(
                src,
                p.gain.span(),
                check_range("gain", *p.gain.get_ref(), None),
            )?;
            at(
                src,
                p.aoa.span(),
                check_range("aoa", *p.aoa.get_ref(), Some(PI)),
            )?;
            at(
                src,
                p.aod.span(),
                check_range("aod", *p.aod.get_ref(), Some(PI)),
            )?;
            paths.push(PathDistribution::new(
                p.gain.into_inner(),
                p.aoa.into_inner(),
                p.aod.into_inner(),
            ));
        }
        Ok(ScenarioSpec {
            name: raw.name,
            array,
            paths,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always representable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Built-in scenarios on an `n × n` half-wavelength array.
    ///
    /// * `paths-6-to-8`: the three overlapping path distributions with gains
    ///   `U(0.001, 0.01)`.
    /// * `single-path`: the first of those paths alone.
    /// * `three-boxes`: three paths with pairwise disjoint angle boxes.
    /// * `bs10-like`, `bs11-like`: two-path scenarios whose angle boxes are
    ///   disjoint from each other.
    pub fn preset(name: &str, n: usize) -> Result<Self> {
        let g = (0.001, 0.01);
        let paths = match name {
            "paths-6-to-8" => vec![
                PathDistribution::new(g, (0.4, 0.8), (0.1, 0.3)),
                PathDistribution::new(g, (0.6, 1.0), (-0.3, -0.1)),
                PathDistribution::new(g, (-0.3, 0.9), (0.6, 1.0)),
            ],
            "single-path" => vec![PathDistribution::new(g, (0.4, 0.8), (0.1, 0.3))],
            "three-boxes" => vec![
                PathDistribution::new(g, (-1.0, -0.6), (-1.0, -0.6)),
                PathDistribution::new(g, (-0.2, 0.2), (0.4, 0.8)),
                PathDistribution::new(g, (0.6, 1.0), (-0.4, 0.0)),
            ],
            "bs10-like" => vec![
                PathDistribution::new(g, (-1.0, -0.6), (0.2, 0.6)),
                PathDistribution::new(g, (-0.4, -0.1), (-0.9, -0.5)),
            ],
            "bs11-like" => vec![
                PathDistribution::new(g, (0.5, 0.9), (-0.6, -0.2)),
                PathDistribution::new(g, (0.1, 0.3), (0.6, 1.0)),
            ],
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset `{other}` (known: {})",
                    Self::preset_names().join(", ")
                )))
            }
        };
        let spec = ScenarioSpec {
            name: name.to_string(),
            array: ArrayConfig::new(n, n, PI)?,
            paths,
        };
        Ok(spec)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "paths-6-to-8",
            "single-path",
            "three-boxes",
            "bs10-like",
            "bs11-like",
        ]
    }
}

/// Channels with optional ground-truth paths and scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDataset {
    pub channels: Vec<ChannelMatrix>,
    pub truth: Option<Vec<Vec<PathParams>>>,
    pub scenario: Option<ScenarioSpec>,
    pub normalization_scale: f64,
}

impl ChannelDataset {
    pub fn from_channels(channels: Vec<ChannelMatrix>) -> Result<Self> {
        let ds = ChannelDataset {
            normalization_scale: normalization_scale(&channels),
            channels,
            truth: None,
            scenario: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.channels.first().map(ChannelMatrix::shape)
    }

    /// Array geometry: the scenario's when known, else the channel shape with
    /// half-wavelength spacing.
    pub fn array(&self) -> Option<ArrayConfig> {
        match &self.scenario {
            Some(s) => Some(s.array),
            None => self
                .shape()
                .map(|(n_r, n_t)| ArrayConfig { n_t, n_r, u: PI }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(shape) = self.shape() {
            if let Some(bad) = self.channels.iter().position(|h| h.shape() != shape) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{}", shape.0, shape.1),
                    found: format!(
                        "{}x{} at sample {bad}",
                        self.channels[bad].n_r(),
                        self.channels[bad].n_t()
                    ),
                });
            }
        }
        if !(self.normalization_scale.is_finite() && self.normalization_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "normalization scale must be positive and finite, got {}",
                self.normalization_scale
            )));
        }
        if let Some(t) = &self.truth {
            if t.len() != self.channels.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} truth entries", self.channels.len()),
                    found: t.len().to_string(),
                });
            }
            if let Some(p) = t.first().map(Vec::len) {
                if t.iter().any(|v| v.len() != p) {
                    return Err(Error::InvalidConfig(
                        "truth entries must all list the same number of paths".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Rounds every channel entry to `f32`, the precision of the file format.
    pub fn to_storage_precision(&self) -> Self {
        let mut out = self.clone();
        for h in &mut out.channels {
            h.entries_mut().mapv_inplace(|c| {
                num_complex::Complex64::new(c.re as f32 as f64, c.im as f32 as f64)
            });
        }
        out
    }

    fn subset(&self, idx: &[usize]) -> Self {
        ChannelDataset {
            channels: idx.iter().map(|&i| self.channels[i].clone()).collect(),
            truth: self
                .truth
                .as_ref()
                .map(|t| idx.iter().map(|&i| t[i].clone()).collect()),
            scenario: self.scenario.clone(),
            normalization_scale: self.normalization_scale,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        let (n_r, n_t) = self.shape().unwrap_or_else(|| {
            self.scenario
                .as_ref()
                .map(|s| (s.array.n_r, s.array.n_t))
                .unwrap_or((0, 0))
        });
        let p = self
            .truth
            .as_ref()
            .and_then(|t| t.first().map(Vec::len))
            .or_else(|| self.scenario.as_ref().map(ScenarioSpec::num_paths))
            .unwrap_or(0);
        let mut flags = 0u8;
        if self.truth.is_some() {
            flags |= FLAG_TRUTH;
        }
        if self.scenario.is_some() {
            flags |= FLAG_SCENARIO;
        }
        let narrow = |v: usize, what: &str| {
            u16::try_from(v).map_err(|_| Error::InvalidConfig(format!("{what} {v} exceeds u16")))
        };
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[flags])?;
        let count = u32::try_from(self.len())
            .map_err(|_| Error::InvalidConfig("more than u32::MAX samples".into()))?;
        w.write_all(&count.to_le_bytes())?;
        w.write_all(&narrow(n_r, "n_r")?.to_le_bytes())?;
        w.write_all(&narrow(n_t, "n_t")?.to_le_bytes())?;
        w.write_all(&narrow(p, "path count")?.to_le_bytes())?;
        w.write_all(&self.normalization_scale.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * n_r * n_t);
        for h in &self.channels {
            buf.clear();
            for c in h.entries().iter() {
                buf.extend_from_slice(&(c.re as f32).to_le_bytes());
            }
            for c in h.entries().iter() {
                buf.extend_from_slice(&(c.im as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        if let Some(truth) = &self.truth {
            for paths in truth {
                for q in paths {
                    for v in [q.gain, q.aoa, q.aod] {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
        }
        if let Some(s) = &self.scenario {
            let text = s.to_toml_string();
            w.write_all(&(text.len() as u32).to_le_bytes())?;
            w.write_all(text.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = ByteReader::new(r);
        let mut magic = [0u8; 4];
        r.fill(&mut magic, "CHNL header")?;
        if &magic != MAGIC {
            return Err(FormatError::BadMagic {
                expected: *MAGIC,
                found: magic,
            }
            .into());
        }
        let version = r.u16("CHNL header")?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: version,
                supported: VERSION,
            }
            .into());
        }
        let flags = r.u8("CHNL header")?;
        if flags & !(FLAG_TRUTH | FLAG_SCENARIO) != 0 {
            return Err(
                FormatError::Inconsistent(format!("unknown flag bits {flags:#04x}")).into(),
            );
        }
        let count = r.u32("CHNL header")? as usize;
        let n_r = r.u16("CHNL header")? as usize;
        let n_t = r.u16("CHNL header")? as usize;
        let p = r.u16("CHNL header")? as usize;
        let normalization_scale = r.f64("CHNL header")?;
        if !(normalization_scale.is_finite() && normalization_scale > 0.0) {
            return Err(FormatError::Inconsistent(format!(
                "normalization scale {normalization_scale} is not positive and finite"
            ))
            .into());
        }
        if count > 0 && (n_r == 0 || n_t == 0) {
            return Err(FormatError::Inconsistent(format!(
                "{count} samples with an empty {n_r}x{n_t} shape"
            ))
            .into());
        }
        if flags & FLAG_TRUTH != 0 && p == 0 && count > 0 {
            return Err(FormatError::Inconsistent("truth flag set with zero paths".into()).into());
        }
        let m = n_r * n_t;
        let mut channels = Vec::with_capacity(count.min(1 << 16));
        let mut raw = vec![0u8; 8 * m];
        let mut flat = vec![0.0f64; 2 * m];
        for _ in 0..count {
            r.fill(&mut raw, "channel payload")?;
            for (v, b) in flat.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
            }
            channels.push(ChannelMatrix::from_flat(n_r, n_t, &flat)?);
        }
        let truth = if flags & FLAG_TRUTH != 0 {
            let mut t = Vec::with_capacity(count.min(1 << 16));
            for _ in 0..count {
                let mut paths = Vec::with_capacity(p);
                for _ in 0..p {
                    let gain = r.f64("truth payload")?;
                    let aoa = r.f64("truth payload")?;
                    let aod = r.f64("truth payload")?;
                    paths.push(PathParams { gain, aoa, aod });
                }
                t.push(paths);
            }
            Some(t)
        } else {
            None
        };
        let scenario = if flags & FLAG_SCENARIO != 0 {
            let len = r.u32("scenario block")? as usize;
            let bytes = r.bytes(len, "scenario block")?;
            let text = String::from_utf8(bytes)
                .map_err(|_| FormatError::Inconsistent("scenario block is not UTF-8".into()))?;
            let spec = ScenarioSpec::from_toml_str(&text)
                .map_err(|e| FormatError::Inconsistent(format!("scenario block: {e}")))?;
            if count > 0 && (spec.array.n_r, spec.array.n_t) != (n_r, n_t) {
                return Err(FormatError::Inconsistent(
                    "scenario array does not match the channel shape".into(),
                )
                .into());
            }
            Some(spec)
        } else {
            None
        };
        r.expect_end()?;
        Ok(ChannelDataset {
            channels,
            truth,
            scenario,
            normalization_scale,
        })
    }
}

pub fn generate_dataset(spec: &ScenarioSpec, count: usize, seed: u64) -> Result<ChannelDataset> {
    generate_dataset_with(spec, count, seed, Exec::default())
}

pub fn generate_dataset_with(
    spec: &ScenarioSpec,
    count: usize,
    seed: u64,
    exec: Exec,
) -> Result<ChannelDataset> {
    spec.validate()?;
    let samples = exec.map(count, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let paths: Vec<PathParams> = spec.paths.iter().map(|d| d.sample(&mut rng)).collect();
        (synthesize_channel(&paths, &spec.array), paths)
    });
    let (channels, truth): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
    Ok(ChannelDataset {
        normalization_scale: normalization_scale(&channels),
        channels,
        truth: Some(truth),
        scenario: Some(spec.clone()),
    })
}

/// Seeded shuffle followed by a contiguous partition with sizes rounded from
/// the cumulative fractions.
pub fn split(
    dataset: &ChannelDataset,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<ChannelDataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidConfig(
            "split fractions must be positive".into(),
        ));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions sum to {sum}, not 1"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(fractions.len());
    let (mut start, mut cum) = (0usize, 0.0);
    for (k, f) in fractions.iter().enumerate() {
        cum += f;
        let end = if k + 1 == fractions.len() {
            n
        } else {
            ((cum * n as f64).round() as usize).clamp(start, n)
        };
        out.push(dataset.subset(&order[start..end]));
        start = end;
    }
    Ok(out)
}

pub fn save_dataset(dataset: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &dataset.to_bytes()?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    let f = std::fs::File::open(path)?;
    ChannelDataset::read_from(std::io::BufReader::new(f))
}
