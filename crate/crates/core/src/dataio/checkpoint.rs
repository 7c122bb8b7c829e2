//! The PFLC checkpoint container.
//!
//! Little-endian layout: magic `PFLC`, version `u16`, joint width `u32`,
//! raw width `u32`, layer count `u32`, config length `u32` and that many
//! bytes of TOML, parameter count `u32`, then per parameter: name length
//! `u16`, name bytes, trainable flag `u8`, rank `u8`, `rank` dimensions as
//! `u32`, and the values as `f64`.

use std::path::Path;

use crate::error::{PflError, Result};
use crate::model::PflModel;
use crate::numcore::Tensor;
use crate::train::TrainConfig;

pub const PFLC_MAGIC: [u8; 4] = *b"PFLC";
pub const PFLC_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredParam {
    pub name: String,
    pub trainable: bool,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dim: usize,
    pub raw_dim: usize,
    pub layers: usize,
    pub config: TrainConfig,
    pub params: Vec<StoredParam>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(PflError::format(
                self.bytes.len() as u64,
                format!("checkpoint truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl Checkpoint {
    pub fn from_model(model: &PflModel, config: &TrainConfig) -> Self {
        Checkpoint {
            dim: model.config.dim,
            raw_dim: model.config.raw_dim,
            layers: model.config.layers,
            config: config.clone(),
            params: model
                .params
                .iter()
                .map(|p| StoredParam {
                    name: p.name.clone(),
                    trainable: p.trainable,
                    value: p.value.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model and checks every stored flag against it.
    pub fn to_model(&self) -> Result<PflModel> {
        let mc = self.config.model_config(self.dim, self.raw_dim)?;
        if mc.layers != self.layers {
            return Err(PflError::config(format!(
                "checkpoint lists {} layers but its config has {}",
                self.layers, mc.layers
            )));
        }
        let mut model = PflModel::new(mc, 0)?;
        for p in &self.params {
            if let Some(id) = model.params.id_of(&p.name) {
                if model.params.get(id).trainable != p.trainable {
                    return Err(PflError::config(format!(
                        "trainable flag of {} differs",
                        p.name
                    )));
                }
            }
        }
        model.load_values(self.params.iter().map(|p| (p.name.as_str(), &p.value)))?;
        Ok(model)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&PFLC_MAGIC);
        out.extend_from_slice(&PFLC_VERSION.to_le_bytes());
        for v in [self.dim, self.raw_dim, self.layers] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let text = self.config.to_toml();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(p.trainable as u8);
            out.push(p.value.shape().len() as u8);
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != PFLC_MAGIC {
            return Err(PflError::format(0, "bad checkpoint magic"));
        }
        let version = r.u16("version")?;
        if version != PFLC_VERSION {
            return Err(PflError::format(
                4,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let dim = r.u32("dim")? as usize;
        let raw_dim = r.u32("raw dim")? as usize;
        let layers = r.u32("layer count")? as usize;
        let len = r.u32("config length")? as usize;
        let at = r.pos as u64;
        let text = std::str::from_utf8(r.take(len, "config")?)
            .map_err(|_| PflError::format(at, "config snapshot is not UTF-8"))?;
        let config =
            TrainConfig::from_toml(text).map_err(|e| PflError::format(at, e.to_string()))?;
        let count = r.u32("parameter count")? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u16("name length")? as usize;
            let at = r.pos as u64;
            let name = std::str::from_utf8(r.take(n, "name")?)
                .map_err(|_| PflError::format(at, "parameter name is not UTF-8"))?
                .to_string();
            let at = r.pos as u64;
            let trainable = match r.u8("trainable flag")? {
                0 => false,
                1 => true,
                other => return Err(PflError::format(at, format!("bad trainable flag {other}"))),
            };
            let rank = r.u8("rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u32("dimension").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * 8, "parameter values")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params.push(StoredParam {
                name,
                trainable,
                value: Tensor::new(shape, data)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(PflError::format(
                r.pos as u64,
                "trailing bytes after checkpoint",
            ));
        }
        Ok(Checkpoint {
            dim,
            raw_dim,
            layers,
            config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| PflError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| PflError::io(path, e))?;
        Checkpoint::decode(&bytes)
    }
}
