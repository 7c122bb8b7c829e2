//! Training objectives.

use crate::error::{PflError, Result};
use crate::flow::{std_normal_log_density, FlowDraw};
use crate::numcore::{Tape, Tensor, Var};

/// Clamp applied to probabilities inside logarithms.
pub const EPS_PROB: f64 = 1e-7;
/// Smoothing in the dice denominator.
pub const EPS_DICE: f64 = 1e-6;
pub const FOCAL_GAMMA: f64 = 2.0;

/// Scalar loss values of one step, each already averaged over the batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_ort: f64,
    pub l_flow_reg: f64,
    pub l_cls: f64,
    pub l_focal: f64,
    pub l_dice: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_parts(l_ort: f64, l_flow_reg: f64, l_cls: f64, l_focal: f64, l_dice: f64) -> Self {
        LossBreakdown {
            l_ort,
            l_flow_reg,
            l_cls,
            l_focal,
            l_dice,
            total: l_ort + l_flow_reg + l_cls + l_focal + l_dice,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.l_ort,
            self.l_flow_reg,
            self.l_cls,
            self.l_focal,
            self.l_dice,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Running sum helper for batch averaging.
    pub fn add_scaled(&mut self, other: &LossBreakdown, scale: f64) {
        self.l_ort += scale * other.l_ort;
        self.l_flow_reg += scale * other.l_flow_reg;
        self.l_cls += scale * other.l_cls;
        self.l_focal += scale * other.l_focal;
        self.l_dice += scale * other.l_dice;
        self.total += scale * other.total;
    }
}

/// Tape handles of the five loss terms for one image.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub ort: Var,
    pub flow_reg: Var,
    pub cls: Var,
    pub focal: Var,
    pub dice: Var,
}

/// Sums the terms on the tape and reads back their values.
pub fn total_loss(tape: &mut Tape, terms: &LossTerms) -> Result<(Var, LossBreakdown)> {
    let mut total = tape.add(terms.ort, terms.flow_reg)?;
    for v in [terms.cls, terms.focal, terms.dice] {
        total = tape.add(total, v)?;
    }
    let breakdown = LossBreakdown::from_parts(
        tape.scalar(terms.ort),
        tape.scalar(terms.flow_reg),
        tape.scalar(terms.cls),
        tape.scalar(terms.focal),
        tape.scalar(terms.dice),
    );
    debug_assert!(
        (breakdown.total - tape.scalar(total)).abs() <= 1e-9 * breakdown.total.abs().max(1.0)
    );
    Ok((total, breakdown))
}

/// Mean over draws and samples of `log q_0(Φ_0) - Σ log|det J| - log N(Φ_K; 0, I)`.
pub fn flow_reg(tape: &mut Tape, draws: &[&FlowDraw]) -> Result<Var> {
    if draws.is_empty() {
        return Err(PflError::argument(
            "flow regularizer needs at least one draw",
        ));
    }
    let mut terms = Vec::with_capacity(draws.len());
    for d in draws {
        let prior = std_normal_log_density(tape, d.phi);
        let diff = tape.sub(d.log_q, prior)?;
        terms.push(tape.mean(diff));
    }
    mean_scalars(tape, &terms)
}

/// `KL[N(μ, σ²) ‖ N(0, I)] = ½ Σ (σ² + μ² - 1 - ln σ²)` for `1 x C` rows.
pub fn gaussian_kl(tape: &mut Tape, mu: Var, sigma: Var) -> Result<Var> {
    let s2 = tape.square(sigma);
    let m2 = tape.square(mu);
    let ln = tape.ln(s2);
    let a = tape.add(s2, m2)?;
    let a = tape.sub(a, ln)?;
    let a = tape.shift(a, -1.0);
    let s = tape.sum(a);
    Ok(tape.scale(s, 0.5))
}

/// Analytic KL of each draw's base Gaussian, averaged over draws. The flow
/// layers do not enter.
pub fn gaussian_elbo_reg(tape: &mut Tape, draws: &[&FlowDraw]) -> Result<Var> {
    if draws.is_empty() {
        return Err(PflError::argument(
            "gaussian regularizer needs at least one draw",
        ));
    }
    let terms = draws
        .iter()
        .map(|d| gaussian_kl(tape, d.mu, d.sigma))
        .collect::<Result<Vec<_>>>()?;
    mean_scalars(tape, &terms)
}

fn mean_scalars(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(tape.scale(total, 1.0 / terms.len() as f64))
}

fn check_mask(tape: &Tape, prob: Var, mask: &Tensor) -> Result<()> {
    if tape.value(prob).len() != mask.len() {
        return Err(PflError::argument(format!(
            "prediction has {} pixels, mask has {}",
            tape.value(prob).len(),
            mask.len()
        )));
    }
    Ok(())
}

/// `-(1/N) Σ (1 - p_i)^γ ln p_i` where `p_i` is the probability of the
/// correct class of pixel `i` under the abnormal-channel map `prob`.
pub fn focal_loss(tape: &mut Tape, prob: Var, mask: &Tensor, gamma: f64) -> Result<Var> {
    check_mask(tape, prob, mask)?;
    let shape = tape.value(prob).shape().to_vec();
    let offset = Tensor::new(shape.clone(), mask.data().iter().map(|y| 1.0 - y).collect())?;
    let sign = Tensor::new(shape, mask.data().iter().map(|y| 2.0 * y - 1.0).collect())?;
    let offset = tape.leaf(offset);
    let sign = tape.leaf(sign);
    let p = tape.mul(prob, sign)?;
    let p = tape.add(p, offset)?;
    focal_from_correct(tape, p, gamma)
}

/// Focal loss on probabilities that already refer to the correct class.
pub fn focal_from_correct(tape: &mut Tape, p_correct: Var, gamma: f64) -> Result<Var> {
    let p = tape.clamp(p_correct, EPS_PROB, 1.0);
    let logp = tape.ln(p);
    let weighted = if gamma == 0.0 {
        logp
    } else {
        let q = tape.one_minus(p);
        let factor = tape.powf(q, gamma);
        tape.mul(factor, logp)?
    };
    let m = tape.mean(weighted);
    Ok(tape.scale(m, -1.0))
}

/// `1 - (2 Σ y ŷ + ε) / (Σ y + Σ ŷ + ε)`. The smoothing term in the
/// numerator makes an empty mask with an empty prediction score 0.
pub fn dice_loss(tape: &mut Tape, mask: &Tensor, prob: Var) -> Result<Var> {
    check_mask(tape, prob, mask)?;
    let y_sum: f64 = mask.sum();
    let y = tape.leaf(mask.clone().reshape(tape.value(prob).shape())?);
    let inter = tape.mul(y, prob)?;
    let inter = tape.sum(inter);
    let num = tape.scale(inter, 2.0);
    let num = tape.shift(num, EPS_DICE);
    let p_sum = tape.sum(prob);
    let den = tape.shift(p_sum, y_sum + EPS_DICE);
    let ratio = tape.div(num, den)?;
    Ok(tape.one_minus(ratio))
}

/// Mean `-ln p(correct)` over images; `probs[i]` is `1 x 2` (normal, abnormal).
pub fn cls_loss(tape: &mut Tape, probs: &[Var], labels: &[bool]) -> Result<Var> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(PflError::argument(format!(
            "cls loss needs matching probabilities and labels, got {} and {}",
            probs.len(),
            labels.len()
        )));
    }
    let mut terms = Vec::with_capacity(probs.len());
    for (&p, &label) in probs.iter().zip(labels) {
        let c = tape.slice_cols(p, usize::from(label), 1)?;
        let c = tape.clamp(c, EPS_PROB, 1.0);
        let l = tape.ln(c);
        terms.push(tape.scale(l, -1.0));
    }
    mean_scalars(tape, &terms)
}
