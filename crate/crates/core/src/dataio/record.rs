//! The PFLE embedding container.
//!
//! Layout, little-endian throughout:
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `PFLE`               |
//! | 4      | 2    | version (`u16`, 1)         |
//! | 6      | 4    | joint width `C` (`u32`)    |
//! | 10     | 2    | layer count `L` (`u16`)    |
//! | 12     | 2    | grid height `H` (`u16`)    |
//! | 14     | 2    | grid width `W` (`u16`)     |
//! | 16     | 4    | raw width `D_raw` (`u32`)  |
//! | 20     | 4    | flags (`u32`)              |
//! | 24     | ...  | payload                    |
//!
//! The payload is `D_raw` `f32` values of the class token followed by `L`
//! blocks of `H*W*D_raw` `f32` patch features, patches row-major from the
//! top-left corner.

use std::path::Path;

use crate::align::MapGeometry;
use crate::error::{PflError, Result};
use crate::model::ImageFeatures;
use crate::numcore::Tensor;

pub const PFLE_MAGIC: [u8; 4] = *b"PFLE";
pub const PFLE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

/// Patch tokens are stored row-major from the top-left patch.
pub const FLAG_ROW_MAJOR: u32 = 1;
/// Patch features were taken after the block's layer norm.
pub const FLAG_POST_LN: u32 = 1 << 1;
const KNOWN_FLAGS: u32 = FLAG_ROW_MAJOR | FLAG_POST_LN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub dim: u32,
    pub layers: u16,
    pub grid_h: u16,
    pub grid_w: u16,
    pub raw_dim: u32,
    pub flags: u32,
}

impl RecordHeader {
    pub fn patches(&self) -> usize {
        self.grid_h as usize * self.grid_w as usize
    }

    /// Number of `f32` values in the payload.
    pub fn payload_values(&self) -> usize {
        let d = self.raw_dim as usize;
        d + self.layers as usize * self.patches() * d
    }

    pub fn payload_bytes(&self) -> usize {
        4 * self.payload_values()
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&PFLE_MAGIC);
        out[4..6].copy_from_slice(&PFLE_VERSION.to_le_bytes());
        out[6..10].copy_from_slice(&self.dim.to_le_bytes());
        out[10..12].copy_from_slice(&self.layers.to_le_bytes());
        out[12..14].copy_from_slice(&self.grid_h.to_le_bytes());
        out[14..16].copy_from_slice(&self.grid_w.to_le_bytes());
        out[16..20].copy_from_slice(&self.raw_dim.to_le_bytes());
        out[20..24].copy_from_slice(&self.flags.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(PflError::format(
                bytes.len() as u64,
                format!(
                    "header truncated: {} of {HEADER_LEN} bytes present",
                    bytes.len()
                ),
            ));
        }
        if bytes[0..4] != PFLE_MAGIC {
            return Err(PflError::format(0, format!("bad magic {:?}", &bytes[0..4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at =
            |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let version = u16_at(4);
        if version != PFLE_VERSION {
            return Err(PflError::format(
                4,
                format!("unsupported version {version}"),
            ));
        }
        let header = RecordHeader {
            dim: u32_at(6),
            layers: u16_at(10),
            grid_h: u16_at(12),
            grid_w: u16_at(14),
            raw_dim: u32_at(16),
            flags: u32_at(20),
        };
        let zero = [
            (header.dim == 0, 6, "C"),
            (header.layers == 0, 10, "L"),
            (header.grid_h == 0, 12, "H"),
            (header.grid_w == 0, 14, "W"),
            (header.raw_dim == 0, 16, "D_raw"),
        ];
        if let Some((_, offset, name)) = zero.iter().find(|z| z.0) {
            return Err(PflError::format(
                *offset,
                format!("{name} must be positive"),
            ));
        }
        if header.flags & !KNOWN_FLAGS != 0 {
            return Err(PflError::format(
                20,
                format!("unknown flag bits {:#x}", header.flags),
            ));
        }
        Ok(header)
    }
}

/// Frozen-encoder embeddings of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub header: RecordHeader,
    /// `D_raw` values.
    pub x_cls: Vec<f32>,
    /// `L` blocks of `H*W*D_raw` values.
    pub layers: Vec<Vec<f32>>,
}

impl EmbeddingRecord {
    pub fn new(header: RecordHeader, x_cls: Vec<f32>, layers: Vec<Vec<f32>>) -> Result<Self> {
        let block = header.patches() * header.raw_dim as usize;
        if x_cls.len() != header.raw_dim as usize
            || layers.len() != header.layers as usize
            || layers.iter().any(|l| l.len() != block)
        {
            return Err(PflError::argument(
                "record payload does not match its header",
            ));
        }
        Ok(EmbeddingRecord {
            header,
            x_cls,
            layers,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.header.payload_bytes());
        out.extend_from_slice(&self.header.encode());
        for v in self.x_cls.iter().chain(self.layers.iter().flatten()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = RecordHeader::decode(bytes)?;
        let expected = HEADER_LEN + header.payload_bytes();
        if bytes.len() < expected {
            return Err(PflError::format(
                bytes.len() as u64,
                format!("payload truncated: expected {expected} bytes in total, file ends early"),
            ));
        }
        if bytes.len() > expected {
            return Err(PflError::format(
                expected as u64,
                format!("{} trailing bytes after payload", bytes.len() - expected),
            ));
        }
        let mut values = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let d = header.raw_dim as usize;
        let x_cls: Vec<f32> = values.by_ref().take(d).collect();
        let block = header.patches() * d;
        let layers = (0..header.layers)
            .map(|_| values.by_ref().take(block).collect())
            .collect();
        Ok(EmbeddingRecord {
            header,
            x_cls,
            layers,
        })
    }

    /// Converts to the model's `f64` input with output resolution `h x w`.
    pub fn to_features(
        &self,
        class_name: &str,
        out_h: usize,
        out_w: usize,
    ) -> Result<ImageFeatures> {
        let d = self.header.raw_dim as usize;
        let hw = self.header.patches();
        let widen = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        Ok(ImageFeatures {
            x_cls: Tensor::matrix(1, d, widen(&self.x_cls))?,
            layers: self
                .layers
                .iter()
                .map(|l| Tensor::matrix(hw, d, widen(l)))
                .collect::<Result<_>>()?,
            geometry: MapGeometry {
                grid_h: self.header.grid_h as usize,
                grid_w: self.header.grid_w as usize,
                out_h,
                out_w,
            },
            class_name: class_name.to_string(),
        })
    }
}

pub fn write_record(path: &Path, record: &EmbeddingRecord) -> Result<()> {
    std::fs::write(path, record.encode()).map_err(|e| PflError::io(path, e))
}

pub fn read_record(path: &Path) -> Result<EmbeddingRecord> {
    let bytes = std::fs::read(path).map_err(|e| PflError::io(path, e))?;
    EmbeddingRecord::decode(&bytes)
}
