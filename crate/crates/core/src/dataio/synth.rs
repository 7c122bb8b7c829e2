//! Seeded synthetic dataset in the on-disk layout of a real extraction.
//!
//! Every category has its own texture direction; a single anomaly direction
//! is shared by all categories, so a detector trained on some categories can
//! find anomalies in categories it never saw. Patch latents pass through a
//! fixed orthogonal mixing matrix per encoder layer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry, Split, MANIFEST_VERSION};
use super::pgm::Pgm;
use super::record::{write_record, EmbeddingRecord, RecordHeader, FLAG_ROW_MAJOR};
use crate::error::{PflError, Result};
use crate::numcore::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_categories: usize,
    pub test_categories: usize,
    pub images_per_category: usize,
    /// Patch grid side `H = W`.
    pub grid: usize,
    pub raw_dim: usize,
    /// Joint width written to record headers.
    pub dim: usize,
    pub layers: usize,
    /// Pixels per patch side; image side is `grid * pixel_scale`.
    pub pixel_scale: usize,
    pub footprint_min: usize,
    pub footprint_max: usize,
    /// Displacement of anomalous patches along the anomaly direction.
    pub shift: f64,
    /// Per-coordinate standard deviation of patch noise.
    pub noise: f64,
    /// Per-coordinate standard deviation of texture directions.
    pub texture_scale: f64,
    /// Class-token displacement of anomalous images.
    pub cls_shift: f64,
    pub anomaly_frac: f64,
    /// Fraction of training-category images held out for validation.
    pub val_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            train_categories: 5,
            test_categories: 3,
            images_per_category: 40,
            grid: 16,
            raw_dim: 32,
            dim: 16,
            layers: 4,
            pixel_scale: 4,
            footprint_min: 3,
            footprint_max: 6,
            shift: 3.0,
            noise: 0.5,
            texture_scale: 1.0,
            cls_shift: 1.0,
            anomaly_frac: 0.5,
            val_frac: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SynthConfig = toml::from_str(text).map_err(|e| PflError::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train_categories", self.train_categories),
            ("test_categories", self.test_categories),
            ("images_per_category", self.images_per_category),
            ("grid", self.grid),
            ("raw_dim", self.raw_dim),
            ("dim", self.dim),
            ("layers", self.layers),
            ("pixel_scale", self.pixel_scale),
            ("footprint_min", self.footprint_min),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(PflError::config(format!("{name} must be positive")));
        }
        if self.footprint_min > self.footprint_max || self.footprint_max > self.grid {
            return Err(PflError::config(
                "footprint range must satisfy min <= max <= grid",
            ));
        }
        if self.raw_dim < 2 {
            return Err(PflError::config("raw_dim must be at least 2"));
        }
        if self.grid > u16::MAX as usize || self.layers > u16::MAX as usize {
            return Err(PflError::config("grid and layers must fit in 16 bits"));
        }
        for (name, v) in [
            ("anomaly_frac", self.anomaly_frac),
            ("val_frac", self.val_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PflError::config(format!("{name} must lie in [0, 1]")));
            }
        }
        for (name, v) in [
            ("shift", self.shift),
            ("noise", self.noise),
            ("texture_scale", self.texture_scale),
            ("cls_shift", self.cls_shift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PflError::config(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn image_side(&self) -> usize {
        self.grid * self.pixel_scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Random orthogonal `d x d` matrix (rows orthonormal) by Gram-Schmidt.
fn orthogonal(d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for r in &rows {
            let p = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(x, y)| *x -= p * y);
        }
        if dot(&v, &v) > 1e-6 {
            rows.push(unit(v));
        }
    }
    rows
}

/// Latent generators shared by every image of a dataset.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    /// Unit anomaly direction in latent space.
    pub anomaly: Vec<f64>,
    /// Per-layer orthogonal mixing, `mixing[l][i]` is row `i`.
    pub mixing: Vec<Vec<Vec<f64>>>,
    /// Texture direction of every category, orthogonal to `anomaly`.
    pub textures: Vec<Vec<f64>>,
}

impl SynthWorld {
    pub fn new(config: &SynthConfig) -> Self {
        let d = config.raw_dim;
        let mut rng = Rng::stream(config.seed, 0);
        let anomaly = unit((0..d).map(|_| rng.normal()).collect());
        let mixing = (0..config.layers)
            .map(|_| orthogonal(d, &mut rng))
            .collect();
        let categories = config.train_categories + config.test_categories;
        let textures = (0..categories)
            .map(|_| {
                let mut t: Vec<f64> = (0..d)
                    .map(|_| config.texture_scale * rng.normal())
                    .collect();
                let p = dot(&t, &anomaly);
                t.iter_mut().zip(&anomaly).for_each(|(x, a)| *x -= p * a);
                t
            })
            .collect();
        SynthWorld {
            anomaly,
            mixing,
            textures,
        }
    }
}

/// One generated image before serialization.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub record: EmbeddingRecord,
    /// Patch-level footprint, row-major `grid x grid`.
    pub footprint: Vec<bool>,
    pub label: bool,
}

pub fn generate_image(
    config: &SynthConfig,
    world: &SynthWorld,
    category: usize,
    label: bool,
    rng: &mut Rng,
) -> SynthImage {
    let (d, g) = (config.raw_dim, config.grid);
    let mut footprint = vec![false; g * g];
    if label {
        let span = config.footprint_max - config.footprint_min + 1;
        let fh = config.footprint_min + rng.below(span);
        let fw = config.footprint_min + rng.below(span);
        let y0 = rng.below(g - fh + 1);
        let x0 = rng.below(g - fw + 1);
        for y in y0..y0 + fh {
            for x in x0..x0 + fw {
                footprint[y * g + x] = true;
            }
        }
    }
    let texture = &world.textures[category];
    let latents: Vec<Vec<f64>> = footprint
        .iter()
        .map(|&anomalous| {
            (0..d)
                .map(|i| {
                    let planted = if anomalous {
                        config.shift * world.anomaly[i]
                    } else {
                        0.0
                    };
                    texture[i] + planted + config.noise * rng.normal()
                })
                .collect()
        })
        .collect();
    let mut x_cls: Vec<f64> = (0..d)
        .map(|i| latents.iter().map(|z| z[i]).sum::<f64>() / latents.len() as f64)
        .collect();
    if label {
        x_cls
            .iter_mut()
            .zip(&world.anomaly)
            .for_each(|(x, a)| *x += config.cls_shift * a);
    }
    let layers = world
        .mixing
        .iter()
        .map(|m| {
            latents
                .iter()
                .flat_map(|z| m.iter().map(move |row| dot(row, z) as f32))
                .collect()
        })
        .collect();
    let header = RecordHeader {
        dim: config.dim as u32,
        layers: config.layers as u16,
        grid_h: g as u16,
        grid_w: g as u16,
        raw_dim: d as u32,
        flags: FLAG_ROW_MAJOR,
    };
    let record = EmbeddingRecord::new(header, x_cls.iter().map(|&v| v as f32).collect(), layers)
        .expect("generator builds consistent records");
    SynthImage {
        record,
        footprint,
        label,
    }
}

/// Patch footprint upsampled to a pixel mask.
pub fn pixel_mask(config: &SynthConfig, footprint: &[bool]) -> Pgm {
    let (g, s) = (config.grid, config.pixel_scale);
    let side = g * s;
    let pixels = (0..side * side)
        .map(|p| {
            let (y, x) = (p / side / s, p % side / s);
            if footprint[y * g + x] {
                255
            } else {
                0
            }
        })
        .collect();
    Pgm {
        width: side,
        height: side,
        pixels,
    }
}

/// Writes `manifest.json`, `records/*.pfle` and `masks/*.pgm` under `out`.
pub fn generate_synthetic(config: &SynthConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    let world = SynthWorld::new(config);
    for sub in ["records", "masks"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| PflError::io(&dir, e))?;
    }
    let side = config.image_side();
    let n = config.images_per_category;
    let anomalous = (config.anomaly_frac * n as f64).round() as usize;
    let n_val = (config.val_frac * n as f64).round() as usize;
    let mut images = Vec::new();
    let categories = config.train_categories + config.test_categories;
    for c in 0..categories {
        let held_out = c >= config.train_categories;
        let name = if held_out {
            format!("heldout{:02}", c - config.train_categories)
        } else {
            format!("seen{c:02}")
        };
        let mut rng = Rng::stream(config.seed, 1 + c as u64);
        let mut labels: Vec<bool> = (0..n).map(|i| i < anomalous).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.below(i + 1));
        }
        for (i, &label) in labels.iter().enumerate() {
            let split = match (held_out, i < n_val) {
                (true, _) => Split::Test,
                (false, true) => Split::Val,
                (false, false) => Split::Train,
            };
            let id = format!("{name}-{i:03}");
            let img = generate_image(config, &world, c, label, &mut rng);
            let record = format!("records/{id}.pfle");
            write_record(&out.join(&record), &img.record)?;
            let mask = if label {
                let rel = format!("masks/{id}.pgm");
                pixel_mask(config, &img.footprint).write(&out.join(&rel))?;
                Some(rel)
            } else {
                None
            };
            images.push(ManifestEntry {
                id,
                category: name.clone(),
                split,
                record,
                label: label as u8,
                mask,
                height: side,
                width: side,
            });
        }
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        images,
    };
    let path = out.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| PflError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            train_categories: 2,
            test_categories: 1,
            images_per_category: 10,
            grid: 8,
            raw_dim: 6,
            dim: 4,
            layers: 2,
            pixel_scale: 2,
            footprint_min: 2,
            footprint_max: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn normal_images_have_empty_masks_and_splits_are_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic(&small(), dir.path()).unwrap();
        assert_eq!(m.images.len(), 30);
        for e in &m.images {
            assert_eq!(e.mask.is_some(), e.label == 1);
        }
        let cats = |s: Split| {
            m.entries(s)
                .map(|e| e.category.clone())
                .collect::<std::collections::BTreeSet<_>>()
        };
        assert!(cats(Split::Test).is_disjoint(&cats(Split::Train)));
        assert!(cats(Split::Test).is_disjoint(&cats(Split::Val)));
        assert_eq!(m.entries(Split::Val).count(), 4);
        assert!(m.validate(dir.path()).is_empty());
        let anomalous = m.images.iter().filter(|e| e.label == 1).count();
        assert_eq!(anomalous, 15);
    }

    #[test]
    fn mixing_is_orthogonal_and_textures_avoid_the_anomaly() {
        let config = small();
        let world = SynthWorld::new(&config);
        for m in &world.mixing {
            for i in 0..6 {
                for j in 0..6 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(&m[i], &m[j]) - e).abs() < 1e-12);
                }
            }
        }
        for t in &world.textures {
            assert!(dot(t, &world.anomaly).abs() < 1e-12);
        }
    }

    #[test]
    fn footprint_mask_upsampling() {
        let config = small();
        let mut fp = vec![false; 64];
        fp[8 + 1] = true;
        let mask = pixel_mask(&config, &fp);
        assert_eq!(mask.width, 16);
        let on: Vec<usize> = (0..256).filter(|&p| mask.pixels[p] == 255).collect();
        assert_eq!(on, vec![2 * 16 + 2, 2 * 16 + 3, 3 * 16 + 2, 3 * 16 + 3]);
    }
}
