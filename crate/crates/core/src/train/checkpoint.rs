//! Binary checkpoints.
//!
//! Layout (little-endian): `"CNCP"`, `u32` version, `u32` config length and
//! UTF-8 model configuration text, `u32` tensor count, then per tensor a
//! `u16` name length and UTF-8 name, `u8` rank, `rank × u64` extents and the
//! `f32` values in row-major order. A trailer follows the tensors: `u64`
//! seed, `u64` epoch, `u8` optimizer flag and, when the flag is 1, the Adam
//! constants (`3 × f64`), step counter (`u64`) and the first then second
//! moment values of every tensor in the same order.

use std::path::Path;

use super::adam::{AdamConfig, AdamState};
use crate::arch::{Model, ModelConfig};
use crate::bytes::{put_f32s, read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CNCP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Model configuration, parameters and optional optimizer state. Values are
/// held in 32-bit precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub adam: Option<AdamState<f32>>,
    pub seed: u64,
    pub epoch: u64,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(
        model: &Model<T>,
        adam: Option<&AdamState<T>>,
        seed: u64,
        epoch: u64,
    ) -> Self {
        Checkpoint {
            config: model.config().clone(),
            tensors: model
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (n, t.cast::<f32>()))
                .collect(),
            adam: adam.map(|s| AdamState {
                config: s.config,
                m: s.m.iter().map(Tensor::cast).collect(),
                v: s.v.iter().map(Tensor::cast).collect(),
                t: s.t,
            }),
            seed,
            epoch,
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        Model::from_tensors(
            &self.config,
            self.tensors.iter().map(|(n, t)| (n.clone(), t.cast::<T>())).collect(),
        )
    }

    pub fn adam_state<T: Scalar>(&self) -> Option<AdamState<T>> {
        self.adam.as_ref().map(|s| AdamState {
            config: s.config,
            m: s.m.iter().map(Tensor::cast).collect(),
            v: s.v.iter().map(Tensor::cast).collect(),
            t: s.t,
        })
    }

    /// Number of parameter scalars stored (optimizer moments excluded).
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let text = self.config.to_text();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            put_f32s(&mut out, t.data());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        match &self.adam {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                for c in [s.config.beta1, s.config.beta2, s.config.epsilon] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                out.extend_from_slice(&s.t.to_le_bytes());
                for m in &s.m {
                    put_f32s(&mut out, m.data());
                }
                for v in &s.v {
                    put_f32s(&mut out, v.data());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        r.version(CHECKPOINT_VERSION)?;
        let len = r.u32("config length")? as usize;
        let at = r.offset();
        let text = r.utf8(len, "config text")?;
        let config = ModelConfig::from_text(text)
            .map_err(|e| Error::format(at, format!("invalid model configuration: {e}")))?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = r.u16("name length")? as usize;
            let name = r.utf8(n, "tensor name")?.to_string();
            let rank = r.u8("rank")? as usize;
            let at = r.offset();
            let shape = (0..rank)
                .map(|_| r.u64("extent").map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| Error::format(at, format!("extents of `{name}` overflow")))?;
            let values = r.f32s(numel, "tensor values")?;
            let t = Tensor::new(shape, values)
                .map_err(|e| Error::format(at, format!("tensor `{name}`: {e}")))?;
            tensors.push((name, t));
        }
        let seed = r.u64("seed")?;
        let epoch = r.u64("epoch")?;
        let at = r.offset();
        let adam = match r.u8("optimizer flag")? {
            0 => None,
            1 => {
                let config = AdamConfig {
                    beta1: r.f64("beta1")?,
                    beta2: r.f64("beta2")?,
                    epsilon: r.f64("epsilon")?,
                };
                let t = r.u64("step counter")?;
                let mut read_moments = |what: &str| -> Result<Vec<Tensor<f32>>> {
                    tensors
                        .iter()
                        .map(|(_, p)| {
                            let v = r.f32s(p.numel(), what)?;
                            Tensor::new(p.shape().to_vec(), v)
                        })
                        .collect()
                };
                let m = read_moments("first moments")?;
                let v = read_moments("second moments")?;
                Some(AdamState { config, m, v, t })
            }
            f => return Err(Error::format(at, format!("optimizer flag {f} is neither 0 nor 1"))),
        };
        r.finish()?;
        let ck = Checkpoint {
            config,
            tensors,
            adam,
            seed,
            epoch,
        };
        // structural check: names and shapes must match the configuration
        ck.to_model::<f32>()
            .map_err(|e| Error::format(bytes.len() as u64, format!("parameters do not fit the configuration: {e}")))?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Architecture;
    use crate::tensor::Prng;

    fn model() -> Model<f32> {
        let cfg = ModelConfig::uniform(Architecture::Chrononet, 2, 2, &[2, 4], 2, 2, &[3, 3, 2], 2);
        Model::build(&cfg, &mut Prng::new(5)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let mut adam = AdamState::<f32>::for_tensors(
            &m.named_tensors().into_iter().map(|(_, t)| t).collect::<Vec<_>>(),
        );
        adam.t = 7;
        adam.m[0].data_mut()[0] = 0.125;
        let ck = Checkpoint::from_model(&m, Some(&adam), 42, 3);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model::<f32>().unwrap(), m);
        assert_eq!(back.scalar_count(), m.parameter_count());
    }

    #[test]
    fn truncation_anywhere_is_rejected() {
        let bytes = Checkpoint::from_model(&model(), None, 1, 1).to_bytes();
        for cut in [0, 3, 4, 9, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = Checkpoint::from_model(&model(), None, 1, 1).to_bytes();
        bytes[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { offset: 4, .. })));
        bytes[0] = b'Z';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { offset: 0, .. })));
    }
}
