//! 8-bit binary PGM (`P5`, maxval 255) for masks and anomaly maps.

use std::path::Path;

use crate::error::{PflError, Result};
use crate::infer_eval::Grid;

/// Mask pixels above this value are anomalous.
pub const MASK_THRESHOLD: u8 = 127;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    /// Quantizes `values` in `[0, 1]` as `round(255 v)`.
    pub fn from_unit(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(PflError::argument("PGM size does not match value count"));
        }
        let pixels = values
            .iter()
            .map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
            .collect();
        Ok(Pgm {
            width,
            height,
            pixels,
        })
    }

    pub fn from_mask(mask: &Grid<bool>) -> Self {
        Pgm {
            width: mask.width,
            height: mask.height,
            pixels: mask
                .values
                .iter()
                .map(|&m| if m { 255 } else { 0 })
                .collect(),
        }
    }

    pub fn to_mask(&self) -> Grid<bool> {
        Grid {
            width: self.width,
            height: self.height,
            values: self.pixels.iter().map(|&p| p > MASK_THRESHOLD).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses any `P5` file with maxval 255, allowing comments and arbitrary
    /// whitespace in the header.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(PflError::format(0, "not a binary PGM (missing P5 magic)"));
        }
        pos += 2;
        let mut fields = [0usize; 3];
        for field in &mut fields {
            loop {
                match bytes.get(pos) {
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                pos += 1;
            }
            if start == pos {
                return Err(PflError::format(
                    pos as u64,
                    "expected a number in PGM header",
                ));
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| PflError::format(start as u64, "PGM header number out of range"))?;
        }
        if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
            return Err(PflError::format(
                pos as u64,
                "PGM header must end with one whitespace byte",
            ));
        }
        pos += 1;
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(PflError::format(
                pos as u64,
                format!("PGM maxval {maxval} unsupported"),
            ));
        }
        let need = width * height;
        let data = &bytes[pos..];
        if data.len() < need {
            return Err(PflError::format(
                bytes.len() as u64,
                "PGM pixel data truncated",
            ));
        }
        if data.len() > need {
            return Err(PflError::format(
                (pos + need) as u64,
                "trailing bytes after PGM pixels",
            ));
        }
        Ok(Pgm {
            width,
            height,
            pixels: data.to_vec(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| PflError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| PflError::io(path, e))?;
        Pgm::decode(&bytes)
    }
}
