use std::path::Path;

use super::{CompletionModel, ModelVariant, TrainError};
use crate::codec::AutoEncoder;
use crate::nn::{GroupGrad, Network};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VOXW";
pub const CHECKPOINT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8;

/// Parameters, momentum buffers and progress of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: ModelVariant,
    pub epoch: u32,
    pub seed: u64,
    pub network: Network<f32>,
    pub velocity: Vec<GroupGrad<f32>>,
}

impl Checkpoint {
    /// Fresh checkpoint at epoch 0 with zero momentum.
    pub fn from_network(variant: ModelVariant, network: Network<f32>, seed: u64) -> Self {
        let velocity = zero_like(&network);
        Self {
            variant,
            epoch: 0,
            seed,
            network,
            velocity,
        }
    }

    pub fn model(&self) -> Result<CompletionModel, TrainError> {
        CompletionModel::from_network(self.variant, self.network.clone())
    }

    pub fn autoencoder(&self) -> Result<AutoEncoder, TrainError> {
        if self.variant != ModelVariant::AutoEncoder {
            return Err(TrainError::Variant {
                expected: "autoencoder",
                found: self.variant,
            });
        }
        Ok(AutoEncoder::from_network(self.network.clone())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.network.param_count() + 256);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.variant.code());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for (g, v) in self.network.params().groups().iter().zip(&self.velocity) {
            for (suffix, p, m) in [("weight", &g.weight, &v.weight), ("bias", &g.bias, &v.bias)] {
                let name = format!("{}.{suffix}", g.name);
                out.extend_from_slice(&(name.len() as u16).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.push(p.shape().len() as u8);
                for &e in p.shape() {
                    out.extend_from_slice(&(e as u32).to_le_bytes());
                }
                for x in p.data().iter().chain(m.data()) {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                out.push(g.trainable as u8);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(format_err(0, "bad magic, expected VOXW"));
        }
        if bytes.len() < HEADER_LEN + 4 {
            return Err(format_err(bytes.len(), "truncated header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Version {
                offset: 4,
                found: version,
            });
        }
        let body_len = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[..body_len]) != stored {
            return Err(format_err(body_len, "checksum mismatch"));
        }
        let variant = ModelVariant::from_code(bytes[6])
            .ok_or_else(|| format_err(6, format!("unknown model variant {}", bytes[6])))?;
        let epoch = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes"));
        let seed = u64::from_le_bytes(bytes[11..19].try_into().expect("8 bytes"));

        let mut network = variant.builder().build_zeroed::<f32>()?;
        let mut velocity = zero_like(&network);
        let mut r = Reader {
            bytes: &bytes[..body_len],
            pos: HEADER_LEN,
        };
        for (g, v) in network.params_mut().groups_mut().iter_mut().zip(&mut velocity) {
            let mut flags = [false; 2];
            for (i, (suffix, p, m)) in [
                ("weight", &mut g.weight, &mut v.weight),
                ("bias", &mut g.bias, &mut v.bias),
            ]
            .into_iter()
            .enumerate()
            {
                let expected = format!("{}.{suffix}", g.name);
                let at = r.pos;
                let len = r.u16()? as usize;
                let name = r.take(len)?;
                if name != expected.as_bytes() {
                    return Err(format_err(
                        at,
                        format!(
                            "expected tensor `{expected}`, found `{}`",
                            String::from_utf8_lossy(name)
                        ),
                    ));
                }
                let at = r.pos;
                let rank = r.take(1)?[0] as usize;
                let mut shape = Vec::with_capacity(rank);
                for _ in 0..rank {
                    shape.push(r.u32()? as usize);
                }
                if shape != p.shape() {
                    return Err(format_err(
                        at,
                        format!("tensor `{expected}` has shape {shape:?}, expected {:?}", p.shape()),
                    ));
                }
                r.f32s(p)?;
                r.f32s(m)?;
                let at = r.pos;
                flags[i] = match r.take(1)?[0] {
                    0 => false,
                    1 => true,
                    b => return Err(format_err(at, format!("trainable flag {b} is not 0 or 1"))),
                };
            }
            if flags[0] != flags[1] {
                return Err(format_err(
                    r.pos,
                    format!("group `{}` has mixed trainable flags", g.name),
                ));
            }
            g.trainable = flags[0];
        }
        if r.pos != body_len {
            return Err(format_err(r.pos, "trailing bytes after last tensor"));
        }
        Ok(Self {
            variant,
            epoch,
            seed,
            network,
            velocity,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn zero_like(net: &Network<f32>) -> Vec<GroupGrad<f32>> {
    net.params()
        .groups()
        .iter()
        .map(|g| GroupGrad {
            weight: Tensor::zeros(g.weight.shape()),
            bias: Tensor::zeros(g.bias.shape()),
        })
        .collect()
}

fn format_err(offset: usize, message: impl Into<String>) -> TrainError {
    TrainError::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(self.pos, "truncated tensor data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, TrainError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, dst: &mut Tensor<f32>) -> Result<(), TrainError> {
        let raw = self.take(4 * dst.len())?;
        for (d, b) in dst.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        Ok(())
    }
}
