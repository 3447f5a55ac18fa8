//! Versioned binary checkpoint: a metadata block plus a manifest of named
//! networks, each a list of layers with little-endian `f64` payloads.
//! The byte layout is documented in `docs/FORMATS.md`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{BatchNormLayer, DenseLayer, Layer, Mlp};
use crate::error::{Error, FormatError, Result};
use crate::io_util::{write_atomic, ByteReader};

pub const MAGIC: &[u8; 4] = b"PBCK";
pub const VERSION: u16 = 1;

// Sanity cap on any single tensor read from disk (elements).
const MAX_TENSOR: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Vae = 0,
    Compressor = 1,
}

impl ModelKind {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ModelKind::Vae),
            1 => Ok(ModelKind::Compressor),
            other => Err(FormatError::Inconsistent(format!("unknown model kind {other}")).into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    /// UTF-8 JSON describing the model configuration and history.
    pub metadata: String,
    pub networks: Vec<(String, Mlp)>,
}

const TAG_DENSE: u8 = 0;
const TAG_BATCHNORM: u8 = 1;
const TAG_LEAKY: u8 = 2;

fn put_f64s<W: Write>(w: &mut W, vals: impl Iterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.kind as u8, 0])?;
        w.write_all(&(self.metadata.len() as u32).to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        w.write_all(&(self.networks.len() as u16).to_le_bytes())?;
        for (name, net) in &self.networks {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(net.layers().len() as u16).to_le_bytes())?;
            for layer in net.layers() {
                match layer {
                    Layer::Dense(d) => {
                        w.write_all(&[TAG_DENSE])?;
                        w.write_all(&(d.input_dim() as u32).to_le_bytes())?;
                        w.write_all(&(d.output_dim() as u32).to_le_bytes())?;
                        put_f64s(&mut w, d.weights.iter().copied())?;
                        put_f64s(&mut w, d.bias.iter().copied())?;
                    }
                    Layer::BatchNorm(b) => {
                        w.write_all(&[TAG_BATCHNORM])?;
                        w.write_all(&(b.dim() as u32).to_le_bytes())?;
                        put_f64s(&mut w, [b.momentum, b.epsilon].into_iter())?;
                        for t in [&b.scale, &b.shift, &b.running_mean, &b.running_var] {
                            put_f64s(&mut w, t.iter().copied())?;
                        }
                    }
                    Layer::LeakyRelu { slope } => {
                        w.write_all(&[TAG_LEAKY])?;
                        w.write_all(&slope.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..])
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = ByteReader::new(r);
        let mut magic = [0u8; 4];
        r.fill(&mut magic, "checkpoint header")?;
        if &magic != MAGIC {
            return Err(FormatError::BadMagic {
                expected: *MAGIC,
                found: magic,
            }
            .into());
        }
        let version = r.u16("checkpoint header")?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: version,
                supported: VERSION,
            }
            .into());
        }
        let kind = ModelKind::from_u8(r.u8("checkpoint header")?)?;
        let reserved = r.u8("checkpoint header")?;
        if reserved != 0 {
            return Err(FormatError::Inconsistent(format!(
                "reserved header byte is {reserved:#04x}"
            ))
            .into());
        }
        let meta_len = r.u32("checkpoint metadata")? as usize;
        if meta_len > MAX_TENSOR {
            return Err(FormatError::Inconsistent("metadata block too large".into()).into());
        }
        let metadata = String::from_utf8(r.bytes(meta_len, "checkpoint metadata")?)
            .map_err(|_| FormatError::Inconsistent("metadata is not UTF-8".into()))?;
        let n_nets = r.u16("network manifest")? as usize;
        let mut networks = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            let name_len = r.u16("network manifest")? as usize;
            let name = String::from_utf8(r.bytes(name_len, "network manifest")?)
                .map_err(|_| FormatError::Inconsistent("network name is not UTF-8".into()))?;
            let n_layers = r.u16("network manifest")? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                layers.push(read_layer(&mut r)?);
            }
            check_chain(&name, &layers)?;
            networks.push((name, Mlp::new(layers)));
        }
        r.expect_end()?;
        Ok(Checkpoint {
            kind,
            metadata,
            networks,
        })
    }

    pub fn network(&self, name: &str) -> Result<&Mlp> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| FormatError::Inconsistent(format!("missing network `{name}`")).into())
    }
}

fn read_vec<R: Read>(r: &mut ByteReader<R>, len: usize) -> Result<Vec<f64>> {
    if len > MAX_TENSOR {
        return Err(FormatError::Inconsistent(format!("tensor of {len} elements")).into());
    }
    (0..len).map(|_| r.f64("layer payload")).collect()
}

fn read_layer<R: Read>(r: &mut ByteReader<R>) -> Result<Layer> {
    match r.u8("layer manifest")? {
        TAG_DENSE => {
            let input = r.u32("layer manifest")? as usize;
            let output = r.u32("layer manifest")? as usize;
            let w = read_vec(r, input.saturating_mul(output))?;
            let b = read_vec(r, output)?;
            Ok(Layer::Dense(DenseLayer {
                weights: Array2::from_shape_vec((output, input), w)
                    .map_err(|e| FormatError::Inconsistent(e.to_string()))?,
                bias: Array1::from_vec(b),
            }))
        }
        TAG_BATCHNORM => {
            let dim = r.u32("layer manifest")? as usize;
            let momentum = r.f64("layer payload")?;
            let epsilon = r.f64("layer payload")?;
            let mut t = (0..4)
                .map(|_| read_vec(r, dim).map(Array1::from_vec))
                .collect::<Result<Vec<_>>>()?
                .into_iter();
            let mut next = || t.next().expect("four tensors");
            Ok(Layer::BatchNorm(BatchNormLayer {
                scale: next(),
                shift: next(),
                running_mean: next(),
                running_var: next(),
                momentum,
                epsilon,
            }))
        }
        TAG_LEAKY => Ok(Layer::LeakyRelu {
            slope: r.f64("layer payload")?,
        }),
        other => Err(FormatError::Inconsistent(format!("unknown layer tag {other}")).into()),
    }
}

fn check_chain(name: &str, layers: &[Layer]) -> Result<()> {
    let mut width: Option<usize> = None;
    for (i, layer) in layers.iter().enumerate() {
        let (input, output) = match layer {
            Layer::Dense(d) => (Some(d.input_dim()), Some(d.output_dim())),
            Layer::BatchNorm(b) => (Some(b.dim()), Some(b.dim())),
            Layer::LeakyRelu { .. } => (None, None),
        };
        if let (Some(w), Some(inp)) = (width, input) {
            if w != inp {
                return Err(Error::Format(FormatError::Inconsistent(format!(
                    "network `{name}` layer {i} expects width {inp} but receives {w}"
                ))));
            }
        }
        if output.is_some() {
            width = output;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample() -> Checkpoint {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut a = Mlp::block_stack(6, &[5, 4], 3, 0.01, &mut rng);
        if let Layer::BatchNorm(b) = &mut a.layers_mut()[1] {
            b.running_var[2] = 0.123456789;
        }
        Checkpoint {
            kind: ModelKind::Vae,
            metadata: r#"{"hello":1}"#.into(),
            networks: vec![
                ("encoder".into(), a),
                (
                    "decoder".into(),
                    Mlp::block_stack(3, &[2], 6, 0.2, &mut rng),
                ),
            ],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_inputs_give_typed_errors() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[1] = b'?';
        assert!(matches!(
            Checkpoint::read_from(&bad[..]),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::read_from(&bad[..]),
            Err(Error::Format(FormatError::UnsupportedVersion {
                found: 9,
                ..
            }))
        ));
        for cut in [3, 10, 40, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::read_from(&bytes[..cut]),
                Err(Error::Format(FormatError::Truncated { .. }))
            ));
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            Checkpoint::read_from(&long[..]),
            Err(Error::Format(FormatError::Inconsistent(_)))
        ));
    }

    #[test]
    fn mismatched_layer_widths_are_rejected() {
        let c = Checkpoint {
            kind: ModelKind::Compressor,
            metadata: String::new(),
            networks: vec![(
                "bad".into(),
                Mlp::new(vec![
                    Layer::Dense(DenseLayer::zeros(3, 4)),
                    Layer::Dense(DenseLayer::zeros(5, 2)),
                ]),
            )],
        };
        assert!(matches!(
            Checkpoint::read_from(&c.to_bytes()[..]),
            Err(Error::Format(FormatError::Inconsistent(_)))
        ));
    }
}
