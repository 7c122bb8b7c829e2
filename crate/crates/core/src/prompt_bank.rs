//! Learnable prompt banks, their fusion with flow samples, the frozen text
//! encoder interface and the orthogonality loss.

use crate::error::{PflError, Result};
use crate::numcore::{Bindings, ParamId, ParamSet, Rng, Tape, Tensor, Var};

/// Init scale of bank vectors.
pub const BANK_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Normal,
    Abnormal,
}

/// `B` prompts, each `P` context vectors plus `Q` normal and `Q` abnormal
/// state vectors. Stored as `B x P x C` and `B x Q x C` parameters.
#[derive(Debug, Clone)]
pub struct PromptBank {
    pub banks: usize,
    pub context_len: usize,
    pub state_len: usize,
    pub dim: usize,
    pub context: ParamId,
    pub normal_state: ParamId,
    pub abnormal_state: ParamId,
}

impl PromptBank {
    pub fn new(
        params: &mut ParamSet,
        banks: usize,
        context_len: usize,
        state_len: usize,
        dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if banks == 0 || context_len == 0 || state_len == 0 {
            return Err(PflError::config("prompt bank needs B, P, Q >= 1"));
        }
        let context = params.add(
            "bank.context",
            rng.normal_tensor(&[banks, context_len, dim], BANK_INIT_STD),
            true,
        );
        let normal_state = params.add(
            "bank.normal_state",
            rng.normal_tensor(&[banks, state_len, dim], BANK_INIT_STD),
            true,
        );
        let abnormal_state = params.add(
            "bank.abnormal_state",
            rng.normal_tensor(&[banks, state_len, dim], BANK_INIT_STD),
            true,
        );
        Ok(PromptBank {
            banks,
            context_len,
            state_len,
            dim,
            context,
            normal_state,
            abnormal_state,
        })
    }

    /// Token sequence of prompt `b`:
    /// `[E_b1 + φe, …, E_bP + φe, S_b1 + φs, …, S_bQ + φs, class]`,
    /// `(P + Q + 1) x C`.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        b: usize,
        phi_context: Var,
        phi_state: Var,
        class: &ClassEmbedding,
        polarity: Polarity,
    ) -> Result<Var> {
        if b >= self.banks {
            return Err(PflError::argument(format!(
                "prompt index {b} out of range for {} banks",
                self.banks
            )));
        }
        let ctx = tape.slice_rows(bind[self.context], b * self.context_len, self.context_len)?;
        let ctx = tape.add(ctx, phi_context)?;
        let state_id = match polarity {
            Polarity::Normal => self.normal_state,
            Polarity::Abnormal => self.abnormal_state,
        };
        let state = tape.slice_rows(bind[state_id], b * self.state_len, self.state_len)?;
        let state = tape.add(state, phi_state)?;
        let cls = tape.leaf(class.vector.clone());
        tape.concat_rows(&[ctx, state, cls])
    }

    pub fn sequence_len(&self) -> usize {
        self.context_len + self.state_len + 1
    }
}

/// Frozen embedding of a class name, `1 x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbedding {
    pub name: String,
    pub vector: Tensor,
}

/// A frozen text encoder: differentiable with respect to its input tokens,
/// never with respect to its own weights.
pub trait TextEncoder: Send + Sync {
    fn width(&self) -> usize;

    /// Maps an `n x C` token sequence to a `1 x C` text embedding.
    fn encode(&self, tape: &mut Tape, tokens: Var) -> Result<Var>;

    fn class_embedding(&self, name: &str) -> ClassEmbedding;
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderBlock {
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    w1: Tensor,
    w2: Tensor,
}

/// Seeded two-block, single-head transformer with mean-pool readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTextEncoder {
    dim: usize,
    seed: u64,
    blocks: Vec<EncoderBlock>,
    readout: Tensor,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl ReferenceTextEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let std = 1.0 / (dim as f64).sqrt();
        let mut mat = || rng.normal_tensor(&[dim, dim], std);
        let blocks = (0..2)
            .map(|_| EncoderBlock {
                wq: mat(),
                wk: mat(),
                wv: mat(),
                wo: mat(),
                w1: mat(),
                w2: mat(),
            })
            .collect();
        let readout = mat();
        ReferenceTextEncoder {
            dim,
            seed,
            blocks,
            readout,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl TextEncoder for ReferenceTextEncoder {
    fn width(&self) -> usize {
        self.dim
    }

    fn encode(&self, tape: &mut Tape, tokens: Var) -> Result<Var> {
        if tape.value(tokens).cols() != self.dim || tape.value(tokens).rows() == 0 {
            return Err(PflError::argument(format!(
                "token sequence has shape {:?}, encoder width is {}",
                tape.value(tokens).shape(),
                self.dim
            )));
        }
        let inv_sqrt = 1.0 / (self.dim as f64).sqrt();
        let mut x = tokens;
        for block in &self.blocks {
            let h = tape.layer_norm_rows(x, LAYER_NORM_EPS);
            let wq = tape.leaf(block.wq.clone());
            let wk = tape.leaf(block.wk.clone());
            let wv = tape.leaf(block.wv.clone());
            let wo = tape.leaf(block.wo.clone());
            let q = tape.matmul(h, wq)?;
            let k = tape.matmul(h, wk)?;
            let v = tape.matmul(h, wv)?;
            let logits = tape.matmul_bt(q, k)?;
            let logits = tape.scale(logits, inv_sqrt);
            let att = tape.softmax_rows(logits);
            let mixed = tape.matmul(att, v)?;
            let out = tape.matmul(mixed, wo)?;
            x = tape.add(x, out)?;

            let h = tape.layer_norm_rows(x, LAYER_NORM_EPS);
            let w1 = tape.leaf(block.w1.clone());
            let w2 = tape.leaf(block.w2.clone());
            let m = tape.matmul(h, w1)?;
            let m = tape.tanh(m);
            let m = tape.matmul(m, w2)?;
            x = tape.add(x, m)?;
        }
        let h = tape.layer_norm_rows(x, LAYER_NORM_EPS);
        let pooled = tape.mean_rows(h);
        let readout = tape.leaf(self.readout.clone());
        tape.matmul(pooled, readout)
    }

    fn class_embedding(&self, name: &str) -> ClassEmbedding {
        let mut rng = Rng::new(fnv1a(name.as_bytes()) ^ self.seed);
        ClassEmbedding {
            name: name.to_string(),
            vector: rng.normal_tensor(&[1, self.dim], BANK_INIT_STD),
        }
    }
}

/// Normal/abnormal text embeddings of one prompt, each `1 x C`.
#[derive(Debug, Clone, Copy)]
pub struct TextEmbeddingPair {
    pub normal: Var,
    pub abnormal: Var,
}

impl TextEmbeddingPair {
    /// `Z^t`, `2 x C`, normal row first.
    pub fn stacked(&self, tape: &mut Tape) -> Result<Var> {
        tape.concat_rows(&[self.normal, self.abnormal])
    }
}

fn off_diagonal_cos2(tape: &mut Tape, rows: &[Var]) -> Result<Var> {
    let n = rows.len();
    let m = tape.concat_rows(rows)?;
    let m = tape.l2_normalize_rows(m);
    let gram = tape.matmul_bt(m, m)?;
    let gram2 = tape.square(gram);
    let mut mask = Tensor::full(&[n, n], 1.0);
    for i in 0..n {
        mask.data_mut()[i * n + i] = 0.0;
    }
    let mask = tape.leaf(mask);
    let off = tape.mul(gram2, mask)?;
    Ok(tape.sum(off))
}

/// `Σ_{i≠j} cos²(tⁿ_i, tⁿ_j) + cos²(tᵃ_i, tᵃ_j)` over ordered pairs.
pub fn orthogonal_loss(tape: &mut Tape, pairs: &[TextEmbeddingPair]) -> Result<Var> {
    if pairs.is_empty() {
        return Err(PflError::argument(
            "orthogonal loss needs at least one prompt",
        ));
    }
    if pairs.len() == 1 {
        return Ok(tape.constant_scalar(0.0));
    }
    let normals: Vec<Var> = pairs.iter().map(|p| p.normal).collect();
    let abnormals: Vec<Var> = pairs.iter().map(|p| p.abnormal).collect();
    let n = off_diagonal_cos2(tape, &normals)?;
    let a = off_diagonal_cos2(tape, &abnormals)?;
    tape.add(n, a)
}
