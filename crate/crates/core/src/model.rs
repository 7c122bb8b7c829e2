//! The full prompt-flow model: parameters, training forward pass and
//! inference forward pass for one image.

use std::str::FromStr;

use crate::align::{
    aggregate, global_embedding, image_score, layer_anomaly_map, rca_refine, ImageScore,
    MapGeometry, PatchProjection,
};
use crate::error::{PflError, Result};
use crate::flow::FlowStack;
use crate::losses::{
    cls_loss, dice_loss, flow_reg, focal_loss, gaussian_elbo_reg, total_loss, LossBreakdown,
    LossTerms, FOCAL_GAMMA,
};
use crate::numcore::{Bindings, ParamId, ParamSet, Rng, Tape, Tensor, Var};
use crate::prompt_bank::{
    orthogonal_loss, ClassEmbedding, Polarity, PromptBank, ReferenceTextEncoder, TextEmbeddingPair,
    TextEncoder,
};

/// Seed of the frozen reference text encoder.
pub const TEXT_ENCODER_SEED: u64 = 0;
/// Seed of the frozen class-token projection used when `D_raw != C`.
pub const CLS_PROJECTION_SEED: u64 = 0x00c1_5000;

/// Which variational regularizer trains the prompt distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularizer {
    #[default]
    Flow,
    /// Base Gaussian only, analytic KL, flow layers bypassed.
    Gaussian,
}

impl FromStr for Regularizer {
    type Err = PflError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(Regularizer::Flow),
            "gaussian" => Ok(Regularizer::Gaussian),
            other => Err(PflError::config(format!("unknown regularizer {other:?}"))),
        }
    }
}

impl Regularizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Regularizer::Flow => "flow",
            Regularizer::Gaussian => "gaussian",
        }
    }
}

/// How the `B·R` prompt variants are combined at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleMode {
    /// Average maps and scores over all variants.
    #[default]
    Image,
    /// Average text embeddings first, then align once.
    Text,
}

impl FromStr for EnsembleMode {
    type Err = PflError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" | "image_ensemble" => Ok(EnsembleMode::Image),
            "text" | "text_ensemble" => Ok(EnsembleMode::Text),
            other => Err(PflError::config(format!("unknown ensemble mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Joint embedding width `C`.
    pub dim: usize,
    /// Raw patch feature width `D_raw`.
    pub raw_dim: usize,
    /// Number of encoder layers `L`.
    pub layers: usize,
    pub banks: usize,
    pub context_len: usize,
    pub state_len: usize,
    pub flow_len: usize,
    pub logit_scale: f64,
    pub regularizer: Regularizer,
}

/// Embeddings of one image in `f64`, ready for the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    /// `1 x D_raw`.
    pub x_cls: Tensor,
    /// `L` blocks of `HW x D_raw`.
    pub layers: Vec<Tensor>,
    pub geometry: MapGeometry,
    pub class_name: String,
}

/// Output of inference for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Aggregated abnormal probability, `h*w` values in row-major order.
    pub map: Vec<f64>,
    pub score: ImageScore,
}

#[derive(Debug, Clone)]
pub struct PflModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub projection: PatchProjection,
    /// Frozen `D_raw x C` map for the class token.
    pub cls_projection: ParamId,
    /// `(L·C) x C`.
    pub fusion: ParamId,
    /// `C x C` query projection shared across layers.
    pub rca: ParamId,
    pub flow: FlowStack,
    pub bank: PromptBank,
    /// Learnable conditions of the image-agnostic normal and abnormal
    /// distributions.
    pub free_normal: ParamId,
    pub free_abnormal: ParamId,
    pub encoder: ReferenceTextEncoder,
}

struct Embedded {
    projected: Vec<Var>,
    x: Var,
}

struct Draws {
    context: crate::flow::FlowDraw,
    normal: crate::flow::FlowDraw,
    abnormal: crate::flow::FlowDraw,
}

impl PflModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let c = config.dim;
        if c == 0 || config.raw_dim == 0 || config.layers == 0 {
            return Err(PflError::config("model dimensions must be positive"));
        }
        if !(config.logit_scale.is_finite() && config.logit_scale > 0.0) {
            return Err(PflError::config("logit_scale must be positive"));
        }
        let mut rng = Rng::new(seed);
        let mut params = ParamSet::new();
        let projection =
            PatchProjection::new(&mut params, config.layers, config.raw_dim, c, &mut rng);
        let cls_value = if config.raw_dim == c {
            Tensor::identity(c)
        } else {
            Rng::new(CLS_PROJECTION_SEED)
                .normal_tensor(&[config.raw_dim, c], 1.0 / (config.raw_dim as f64).sqrt())
        };
        let cls_projection = params.add("cls_projection", cls_value, false);
        let fusion_std = 1.0 / ((config.layers * c) as f64).sqrt();
        let fusion = params.add(
            "fusion",
            rng.normal_tensor(&[config.layers * c, c], fusion_std),
            true,
        );
        let rca = params.add(
            "rca",
            rng.normal_tensor(&[c, c], 1.0 / (c as f64).sqrt()),
            true,
        );
        let flow = FlowStack::new(&mut params, "flow", c, config.flow_len, &mut rng);
        let bank = PromptBank::new(
            &mut params,
            config.banks,
            config.context_len,
            config.state_len,
            c,
            &mut rng,
        )?;
        let free_normal = params.add("free.normal", rng.normal_tensor(&[1, c], 1.0), true);
        let free_abnormal = params.add("free.abnormal", rng.normal_tensor(&[1, c], 1.0), true);
        Ok(PflModel {
            config,
            params,
            projection,
            cls_projection,
            fusion,
            rca,
            flow,
            bank,
            free_normal,
            free_abnormal,
            encoder: ReferenceTextEncoder::new(c, TEXT_ENCODER_SEED),
        })
    }

    /// Replaces every parameter value from `(name, tensor)` pairs. Names and
    /// shapes must match this model exactly.
    pub fn load_values<'a>(
        &mut self,
        values: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<()> {
        let mut seen = 0;
        for (name, value) in values {
            let id = self.params.id_of(name).ok_or_else(|| {
                PflError::config(format!("checkpoint has unknown parameter {name:?}"))
            })?;
            let p = self.params.get_mut(id);
            if p.value.shape() != value.shape() {
                return Err(PflError::config(format!(
                    "parameter {name:?} has shape {:?} in checkpoint, model expects {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value.clone();
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(PflError::config(format!(
                "checkpoint provides {seen} parameters, model has {}",
                self.params.len()
            )));
        }
        Ok(())
    }

    fn check_features(&self, features: &ImageFeatures) -> Result<()> {
        let g = features.geometry;
        if features.layers.len() != self.config.layers {
            return Err(PflError::argument(format!(
                "image has {} layers, model expects {}",
                features.layers.len(),
                self.config.layers
            )));
        }
        if features.x_cls.len() != self.config.raw_dim {
            return Err(PflError::argument("class token width differs from D_raw"));
        }
        for layer in &features.layers {
            if layer.rows() != g.grid_h * g.grid_w || layer.cols() != self.config.raw_dim {
                return Err(PflError::argument(format!(
                    "layer block has shape {:?}, expected [{}, {}]",
                    layer.shape(),
                    g.grid_h * g.grid_w,
                    self.config.raw_dim
                )));
            }
        }
        Ok(())
    }

    fn embed(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        features: &ImageFeatures,
    ) -> Result<Embedded> {
        self.check_features(features)?;
        let mut projected = Vec::with_capacity(features.layers.len());
        for (l, raw) in features.layers.iter().enumerate() {
            let r = tape.leaf(raw.clone());
            projected.push(self.projection.project(tape, bind, r, l)?);
        }
        let cls = tape.leaf(features.x_cls.clone().reshape(&[1, self.config.raw_dim])?);
        let cls = tape.matmul(cls, bind[self.cls_projection])?;
        let x = global_embedding(tape, cls, &projected, bind[self.fusion])?;
        Ok(Embedded { projected, x })
    }

    fn draw(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        x: Var,
        count: usize,
        rng: &mut Rng,
    ) -> Result<Draws> {
        let context = self.flow.sample(tape, bind, x, count, rng)?;
        let normal = self
            .flow
            .sample(tape, bind, bind[self.free_normal], count, rng)?;
        let abnormal = self
            .flow
            .sample(tape, bind, bind[self.free_abnormal], count, rng)?;
        Ok(Draws {
            context,
            normal,
            abnormal,
        })
    }

    /// `Φ_K` for the flow regularizer, `Φ_0` when the flow is bypassed.
    fn sample_rows(&self, tape: &mut Tape, draw: &crate::flow::FlowDraw, r: usize) -> Result<Var> {
        let source = match self.config.regularizer {
            Regularizer::Flow => draw.phi,
            Regularizer::Gaussian => draw.phi0,
        };
        tape.slice_rows(source, r, 1)
    }

    fn encode_pair(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        draws: &Draws,
        b: usize,
        r: usize,
        class: &ClassEmbedding,
    ) -> Result<TextEmbeddingPair> {
        let pe = self.sample_rows(tape, &draws.context, r)?;
        let pn = self.sample_rows(tape, &draws.normal, r)?;
        let pa = self.sample_rows(tape, &draws.abnormal, r)?;
        let tn = self
            .bank
            .assemble(tape, bind, b, pe, pn, class, Polarity::Normal)?;
        let ta = self
            .bank
            .assemble(tape, bind, b, pe, pa, class, Polarity::Abnormal)?;
        Ok(TextEmbeddingPair {
            normal: self.encoder.encode(tape, tn)?,
            abnormal: self.encoder.encode(tape, ta)?,
        })
    }

    /// Maps for every (pair, layer), aggregated, plus the text-branch scores.
    fn align(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        emb: &Embedded,
        zts: &[Var],
        geometry: MapGeometry,
    ) -> Result<(Var, Var, ImageScore)> {
        let mut maps = Vec::with_capacity(zts.len() * emb.projected.len());
        for &zt in zts {
            for &f in &emb.projected {
                let ft = rca_refine(tape, zt, f, bind[self.rca])?;
                maps.push(layer_anomaly_map(
                    tape,
                    f,
                    ft,
                    geometry,
                    self.config.logit_scale,
                )?);
            }
        }
        let map = aggregate(tape, &maps)?;
        let (probs, score) = image_score(tape, emb.x, zts, map, self.config.logit_scale)?;
        Ok((map, probs, score))
    }

    /// Builds the single-sample training loss of one image on `tape`.
    /// `mask` is `h*w x 1` with entries in {0, 1}.
    #[allow(clippy::too_many_arguments)]
    pub fn training_loss(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        features: &ImageFeatures,
        label: bool,
        mask: &Tensor,
        bank_index: usize,
        rng: &mut Rng,
    ) -> Result<(Var, LossBreakdown)> {
        let emb = self.embed(tape, bind, features)?;
        let draws = self.draw(tape, bind, emb.x, 1, rng)?;
        let class = self.encoder.class_embedding(&features.class_name);
        let pairs = (0..self.config.banks)
            .map(|b| self.encode_pair(tape, bind, &draws, b, 0, &class))
            .collect::<Result<Vec<_>>>()?;
        let selected = pairs
            .get(bank_index)
            .ok_or_else(|| PflError::argument(format!("bank index {bank_index} out of range")))?
            .stacked(tape)?;
        let (map, probs, _) = self.align(tape, bind, &emb, &[selected], features.geometry)?;
        let all = [&draws.context, &draws.normal, &draws.abnormal];
        let reg = match self.config.regularizer {
            Regularizer::Flow => flow_reg(tape, &all)?,
            Regularizer::Gaussian => gaussian_elbo_reg(tape, &all)?,
        };
        let terms = LossTerms {
            ort: orthogonal_loss(tape, &pairs)?,
            flow_reg: reg,
            cls: cls_loss(tape, &[probs], &[label])?,
            focal: focal_loss(tape, map, mask, FOCAL_GAMMA)?,
            dice: dice_loss(tape, mask, map)?,
        };
        total_loss(tape, &terms)
    }

    /// `R`-sample inference for one image.
    pub fn predict(
        &self,
        features: &ImageFeatures,
        samples: usize,
        mode: EnsembleMode,
        rng: &mut Rng,
    ) -> Result<Prediction> {
        if samples == 0 {
            return Err(PflError::argument("sample count must be at least 1"));
        }
        let mut tape = Tape::new();
        let bind = tape.bind(&self.params);
        let emb = self.embed(&mut tape, &bind, features)?;
        let draws = self.draw(&mut tape, &bind, emb.x, samples, rng)?;
        let class = self.encoder.class_embedding(&features.class_name);
        let mut pairs = Vec::with_capacity(self.config.banks * samples);
        for b in 0..self.config.banks {
            for r in 0..samples {
                pairs.push(self.encode_pair(&mut tape, &bind, &draws, b, r, &class)?);
            }
        }
        let zts = match mode {
            EnsembleMode::Image => pairs
                .iter()
                .map(|p| p.stacked(&mut tape))
                .collect::<Result<Vec<_>>>()?,
            EnsembleMode::Text => {
                let normals: Vec<Var> = pairs.iter().map(|p| p.normal).collect();
                let abnormals: Vec<Var> = pairs.iter().map(|p| p.abnormal).collect();
                let pair = TextEmbeddingPair {
                    normal: aggregate(&mut tape, &normals)?,
                    abnormal: aggregate(&mut tape, &abnormals)?,
                };
                vec![pair.stacked(&mut tape)?]
            }
        };
        let (map, _, score) = self.align(&mut tape, &bind, &emb, &zts, features.geometry)?;
        let map = tape.value(map).data().to_vec();
        if !map.iter().all(|v| v.is_finite()) || !score.total.is_finite() {
            return Err(PflError::numeric("non-finite anomaly map or score"));
        }
        Ok(Prediction { map, score })
    }
}
