//! Patch projection, residual cross-modal attention, per-layer anomaly maps,
//! map aggregation, the global image embedding and image scoring.
//!
//! Maps are carried as `h*w x 1` columns in row-major pixel order.

use crate::error::{PflError, Result};
use crate::numcore::{Bindings, ParamId, ParamSet, Rng, Tape, Tensor, Var};

/// Per-layer bias-free `D_raw -> C` projections.
#[derive(Debug, Clone)]
pub struct PatchProjection {
    pub raw_dim: usize,
    pub dim: usize,
    pub weights: Vec<ParamId>,
}

impl PatchProjection {
    pub fn new(
        params: &mut ParamSet,
        layers: usize,
        raw_dim: usize,
        dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let std = 1.0 / (raw_dim as f64).sqrt();
        let weights = (0..layers)
            .map(|l| {
                params.add(
                    format!("projection.{l}"),
                    rng.normal_tensor(&[raw_dim, dim], std),
                    true,
                )
            })
            .collect();
        PatchProjection {
            raw_dim,
            dim,
            weights,
        }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    /// `F_l = raw · W_l`, `HW x C`.
    pub fn project(&self, tape: &mut Tape, bind: &Bindings, raw: Var, layer: usize) -> Result<Var> {
        let w = *self.weights.get(layer).ok_or_else(|| {
            PflError::argument(format!(
                "layer {layer} out of range for {} projections",
                self.layers()
            ))
        })?;
        let cols = tape.value(raw).cols();
        if cols != self.raw_dim {
            return Err(PflError::format(
                0,
                format!(
                    "patch features have width {cols}, projection expects {}",
                    self.raw_dim
                ),
            ));
        }
        tape.matmul(raw, bind[w])
    }
}

/// `F^t = Z^t + softmax(Z^t W (F^I)ᵀ / √C) · F^I`.
pub fn rca_refine(tape: &mut Tape, zt: Var, patches: Var, w: Var) -> Result<Var> {
    let dim = tape.value(zt).cols() as f64;
    let q = tape.matmul(zt, w)?;
    let logits = tape.matmul_bt(q, patches)?;
    let logits = tape.scale(logits, 1.0 / dim.sqrt());
    let att = tape.softmax_rows(logits);
    let mixed = tape.matmul(att, patches)?;
    tape.add(zt, mixed)
}

/// Spatial sizes for one map: patch grid and output resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapGeometry {
    pub grid_h: usize,
    pub grid_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl MapGeometry {
    pub fn pixels(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Abnormal-channel probability of `softmax(Up(s · F̃ F̃ᵗᵀ))`, `h*w x 1`.
pub fn layer_anomaly_map(
    tape: &mut Tape,
    patches: Var,
    text: Var,
    geometry: MapGeometry,
    logit_scale: f64,
) -> Result<Var> {
    let f = tape.l2_normalize_rows(patches);
    let t = tape.l2_normalize_rows(text);
    let logits = tape.matmul_bt(f, t)?;
    let logits = tape.scale(logits, logit_scale);
    let up = tape.upsample_bilinear(
        logits,
        geometry.grid_h,
        geometry.grid_w,
        geometry.out_h,
        geometry.out_w,
    )?;
    let probs = tape.softmax_rows(up);
    tape.slice_cols(probs, 1, 1)
}

/// Arithmetic mean of a set of equally shaped maps.
pub fn aggregate(tape: &mut Tape, maps: &[Var]) -> Result<Var> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| PflError::argument("cannot aggregate an empty map set"))?;
    let mut total = *first;
    for &m in rest {
        total = tape.add(total, m)?;
    }
    Ok(tape.scale(total, 1.0 / maps.len() as f64))
}

/// `x = x_cls + (mean_HW concat_l F_l) · W_fusion`, `1 x C`.
pub fn global_embedding(
    tape: &mut Tape,
    x_cls: Var,
    projected: &[Var],
    fusion: Var,
) -> Result<Var> {
    if projected.is_empty() {
        return Err(PflError::argument(
            "global embedding needs at least one layer",
        ));
    }
    let cat = tape.concat_cols(projected)?;
    let pooled = tape.mean_rows(cat);
    let x_patch = tape.matmul(pooled, fusion)?;
    tape.add(x_cls, x_patch)
}

/// Text-branch probabilities of one pair: `softmax(s · x̃ Z̃ᵗᵀ)`, `1 x 2`.
pub fn text_probabilities(tape: &mut Tape, x: Var, zt: Var, logit_scale: f64) -> Result<Var> {
    let xn = tape.l2_normalize_rows(x);
    let zn = tape.l2_normalize_rows(zt);
    let logits = tape.matmul_bt(xn, zn)?;
    let logits = tape.scale(logits, logit_scale);
    Ok(tape.softmax_rows(logits))
}

/// Image-level scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageScore {
    pub text: f64,
    pub image: f64,
    pub total: f64,
}

/// Averages the text probabilities of every pair. Returns the `1 x 2` mean
/// probabilities and the score triple built from them and `max(M)`.
pub fn image_score(
    tape: &mut Tape,
    x: Var,
    pairs: &[Var],
    map: Var,
    logit_scale: f64,
) -> Result<(Var, ImageScore)> {
    if pairs.is_empty() {
        return Err(PflError::argument(
            "image score needs at least one text pair",
        ));
    }
    let probs = pairs
        .iter()
        .map(|&zt| text_probabilities(tape, x, zt, logit_scale))
        .collect::<Result<Vec<_>>>()?;
    let mean = aggregate(tape, &probs)?;
    let text = tape.value(mean).data()[1];
    let image = tape.value(map).max();
    Ok((
        mean,
        ImageScore {
            text,
            image,
            total: text + image,
        },
    ))
}

/// Plain-value mean of maps.
pub fn mean_maps(maps: &[Tensor]) -> Result<Tensor> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| PflError::argument("cannot aggregate an empty map set"))?;
    let mut out = first.clone();
    for m in rest {
        if m.shape() != out.shape() {
            return Err(PflError::argument("maps differ in shape"));
        }
        for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
            *o += v;
        }
    }
    let n = maps.len() as f64;
    Ok(out.map(|v| v / n))
}
