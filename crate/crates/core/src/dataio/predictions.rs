//! Stored inference output: `predictions.tsv` plus one raw map per image
//! under `maps/`, each `h*w` little-endian `f32` values in row-major order.

use std::path::{Path, PathBuf};

use crate::error::{PflError, Result};

pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const PREDICTIONS_HEADER: &str = "id\tcategory\tlabel\tscore\ts_text\ts_img\tmap";

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub category: String,
    pub label: bool,
    pub score: f64,
    pub s_text: f64,
    pub s_img: f64,
    /// Map path relative to the predictions directory.
    pub map: String,
}

pub fn map_path(id: &str) -> String {
    format!("maps/{id}.f32")
}

pub fn encode_map(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub fn decode_map(bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 4 * expected {
        return Err(PflError::format(
            bytes.len().min(4 * expected) as u64,
            format!("map holds {} bytes, expected {}", bytes.len(), 4 * expected),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes the table and every map. `maps[i]` belongs to `rows[i]`.
pub fn write_predictions(dir: &Path, rows: &[PredictionRow], maps: &[Vec<f64>]) -> Result<()> {
    let map_dir = dir.join("maps");
    std::fs::create_dir_all(&map_dir).map_err(|e| PflError::io(&map_dir, e))?;
    let mut table = String::from(PREDICTIONS_HEADER);
    table.push('\n');
    for (row, map) in rows.iter().zip(maps) {
        table.push_str(&format!(
            "{}\t{}\t{}\t{:.17e}\t{:.17e}\t{:.17e}\t{}\n",
            row.id, row.category, row.label as u8, row.score, row.s_text, row.s_img, row.map
        ));
        let path = dir.join(&row.map);
        std::fs::write(&path, encode_map(map)).map_err(|e| PflError::io(&path, e))?;
    }
    let path = dir.join(PREDICTIONS_FILE);
    std::fs::write(&path, table).map_err(|e| PflError::io(&path, e))
}

pub fn read_predictions(dir: &Path) -> Result<Vec<PredictionRow>> {
    let path: PathBuf = dir.join(PREDICTIONS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| PflError::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(PREDICTIONS_HEADER) {
        return Err(PflError::format(
            0,
            "predictions table has an unexpected header",
        ));
    }
    let mut offset = PREDICTIONS_HEADER.len() as u64 + 1;
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || PflError::format(offset, format!("malformed predictions row {line:?}"));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(PredictionRow {
            id: f[0].to_string(),
            category: f[1].to_string(),
            label: match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            },
            score: num(f[3])?,
            s_text: num(f[4])?,
            s_img: num(f[5])?,
            map: f[6].to_string(),
        });
        offset += line.len() as u64 + 1;
    }
    Ok(rows)
}
