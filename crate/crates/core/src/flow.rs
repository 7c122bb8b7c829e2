//! Prompt flow: a conditional diagonal Gaussian followed by `K` planar
//! layers, with reparameterized sampling and exact flow log-density.
//!
//! All sampling is batched: `R` draws for one condition vector travel through
//! the flow as the rows of an `R x C` matrix.

use std::f64::consts::PI;

use crate::error::{PflError, Result};
use crate::numcore::{softplus, Bindings, ParamId, ParamSet, Rng, Tape, Tensor, Var};

/// Lower clamp on `|1 + û·ψ(Φ)|` inside the log-determinant.
pub const EPS_DET: f64 = 1e-6;

/// Affine layer `x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Self {
        let std = 1.0 / (input as f64).sqrt();
        let weight = params.add(
            format!("{name}.weight"),
            rng.normal_tensor(&[input, output], std),
            true,
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[1, output]), true);
        Linear { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Bindings, x: Var) -> Result<Var> {
        let y = tape.matmul(x, bind[self.weight])?;
        tape.add(y, bind[self.bias])
    }
}

/// The two conditioning networks `f_mu` and `f_sigma`. Each is three linear
/// layers `C -> C -> C -> C` with softplus between consecutive layers; the
/// sigma head applies a final softplus so its output is strictly positive.
#[derive(Debug, Clone)]
pub struct BaseNet {
    pub mu: [Linear; 3],
    pub sigma: [Linear; 3],
}

impl BaseNet {
    pub fn new(params: &mut ParamSet, prefix: &str, dim: usize, rng: &mut Rng) -> Self {
        let mut mlp = |head: &str| {
            [0, 1, 2].map(|i| Linear::new(params, &format!("{prefix}.{head}.{i}"), dim, dim, rng))
        };
        let mu = mlp("mu");
        let sigma = mlp("sigma");
        BaseNet { mu, sigma }
    }

    fn mlp(layers: &[Linear; 3], tape: &mut Tape, bind: &Bindings, xi: Var) -> Result<Var> {
        let mut h = layers[0].forward(tape, bind, xi)?;
        h = tape.softplus(h);
        h = layers[1].forward(tape, bind, h)?;
        h = tape.softplus(h);
        layers[2].forward(tape, bind, h)
    }

    /// `(mu(xi), sigma(xi))`.
    pub fn forward(&self, tape: &mut Tape, bind: &Bindings, xi: Var) -> Result<(Var, Var)> {
        let mu = Self::mlp(&self.mu, tape, bind, xi)?;
        let s = Self::mlp(&self.sigma, tape, bind, xi)?;
        let sigma = tape.softplus(s);
        Ok((mu, sigma))
    }
}

/// One invertible map `h(Φ) = Φ + û tanh(wᵀΦ + b)`.
#[derive(Debug, Clone)]
pub struct PlanarLayer {
    pub u: ParamId,
    pub w: ParamId,
    pub b: ParamId,
}

/// `û` from raw `(u, w)`: `u + (m(uᵀw) - uᵀw) w / ‖w‖²` with
/// `m(a) = -1 + softplus(a)`, so that `ûᵀw > -1`. Returns `u` unchanged when
/// `w = 0`.
pub fn enforce_invertibility(u: &[f64], w: &[f64]) -> Vec<f64> {
    let uw: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
    let w2: f64 = w.iter().map(|v| v * v).sum();
    if w2 == 0.0 {
        return u.to_vec();
    }
    let coeff = (softplus(uw) - 1.0 - uw) / w2;
    u.iter().zip(w).map(|(a, b)| a + coeff * b).collect()
}

impl PlanarLayer {
    pub fn new(params: &mut ParamSet, prefix: &str, dim: usize, rng: &mut Rng) -> Self {
        let u = params.add(
            format!("{prefix}.u"),
            rng.normal_tensor(&[1, dim], 0.1),
            true,
        );
        let w = params.add(
            format!("{prefix}.w"),
            rng.normal_tensor(&[1, dim], 0.1),
            true,
        );
        let b = params.add(format!("{prefix}.b"), Tensor::zeros(&[1, 1]), true);
        PlanarLayer { u, w, b }
    }

    /// Differentiable `û` (see [`enforce_invertibility`]).
    pub fn effective_u(&self, tape: &mut Tape, bind: &Bindings) -> Result<Var> {
        let (u, w) = (bind[self.u], bind[self.w]);
        let w2: f64 = tape.value(w).data().iter().map(|v| v * v).sum();
        if w2 == 0.0 {
            return Ok(u);
        }
        let uw = tape.mul(u, w)?;
        let uw = tape.sum(uw);
        let m = tape.softplus(uw);
        let m = tape.shift(m, -1.0);
        let gap = tape.sub(m, uw)?;
        let ww = tape.mul(w, w)?;
        let ww = tape.sum(ww);
        let coeff = tape.div(gap, ww)?;
        let delta = tape.mul(coeff, w)?;
        tape.add(u, delta)
    }

    /// Pre-activation `wᵀΦ + b` for every row, `R x 1`.
    fn preactivation(&self, tape: &mut Tape, bind: &Bindings, phi: Var) -> Result<Var> {
        let a = tape.matmul_bt(phi, bind[self.w])?;
        tape.add(a, bind[self.b])
    }

    /// Applies the layer to every row of `phi`.
    pub fn forward(&self, tape: &mut Tape, bind: &Bindings, phi: Var) -> Result<Var> {
        let u_hat = self.effective_u(tape, bind)?;
        self.forward_with(tape, bind, phi, u_hat)
    }

    fn forward_with(&self, tape: &mut Tape, bind: &Bindings, phi: Var, u_hat: Var) -> Result<Var> {
        let a = self.preactivation(tape, bind, phi)?;
        let t = tape.tanh(a);
        let shift = tape.mul(t, u_hat)?;
        tape.add(phi, shift)
    }

    /// `log|1 + ûᵀψ(Φ)|` per row with `ψ(Φ) = tanh'(wᵀΦ + b) w`, evaluated
    /// at the layer input and clamped below at `ln EPS_DET`.
    pub fn log_det(&self, tape: &mut Tape, bind: &Bindings, phi: Var) -> Result<Var> {
        let u_hat = self.effective_u(tape, bind)?;
        self.log_det_with(tape, bind, phi, u_hat)
    }

    fn log_det_with(&self, tape: &mut Tape, bind: &Bindings, phi: Var, u_hat: Var) -> Result<Var> {
        let a = self.preactivation(tape, bind, phi)?;
        let t = tape.tanh(a);
        let t2 = tape.square(t);
        let psi = tape.one_minus(t2);
        let uw = tape.mul(u_hat, bind[self.w])?;
        let uw = tape.sum(uw);
        let scaled = tape.mul(psi, uw)?;
        let det = tape.shift(scaled, 1.0);
        Ok(tape.log_abs_clamped(det, EPS_DET))
    }
}

/// Which distribution a condition vector selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    /// Conditioned on the global image feature.
    ImageSpecific,
    /// Conditioned on the learnable free vector for normal states.
    AgnosticNormal,
    /// Conditioned on the learnable free vector for abnormal states.
    AgnosticAbnormal,
}

/// Conditional base distribution plus `K` planar layers.
#[derive(Debug, Clone)]
pub struct FlowStack {
    pub dim: usize,
    pub base: BaseNet,
    pub layers: Vec<PlanarLayer>,
}

/// `R` reparameterized draws from one condition vector.
#[derive(Debug, Clone)]
pub struct FlowDraw {
    /// Final samples `Φ_K`, `R x C`.
    pub phi: Var,
    /// Initial samples `Φ_0 = μ + ε ⊙ σ`, `R x C`.
    pub phi0: Var,
    /// `log q_0(Φ_0)`, `R x 1`.
    pub log_q0: Var,
    /// `Σ_k log|det J_k|`, `R x 1`.
    pub log_det_sum: Var,
    /// `log q_K(Φ_K) = log q_0 - Σ_k log|det J_k|`, `R x 1`.
    pub log_q: Var,
    pub mu: Var,
    pub sigma: Var,
    pub eps: Tensor,
}

/// Plain-value view of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub phi: Vec<f64>,
    pub log_q: f64,
    pub eps: Vec<f64>,
}

impl FlowDraw {
    pub fn samples(&self, tape: &Tape) -> Vec<FlowSample> {
        let phi = tape.value(self.phi);
        let log_q = tape.value(self.log_q);
        (0..phi.rows())
            .map(|r| FlowSample {
                phi: phi.row_slice(r).to_vec(),
                log_q: log_q.data()[r],
                eps: self.eps.row_slice(r).to_vec(),
            })
            .collect()
    }
}

/// Standard-normal log-density of every row, `R x 1`.
pub fn std_normal_log_density(tape: &mut Tape, x: Var) -> Var {
    let dim = tape.value(x).cols() as f64;
    let sq = tape.square(x);
    let s = tape.sum_cols(sq);
    let s = tape.scale(s, -0.5);
    tape.shift(s, -0.5 * dim * (2.0 * PI).ln())
}

impl FlowStack {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let base = BaseNet::new(params, &format!("{prefix}.base"), dim, rng);
        let layers = (0..layers)
            .map(|k| PlanarLayer::new(params, &format!("{prefix}.planar.{k}"), dim, rng))
            .collect();
        FlowStack { dim, base, layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// `(μ(ξ), σ(ξ))` for a `1 x C` condition.
    pub fn base_distribution(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        xi: Var,
    ) -> Result<(Var, Var)> {
        let shape = tape.value(xi).shape();
        if tape.value(xi).cols() != self.dim || tape.value(xi).rows() != 1 {
            return Err(PflError::config(format!(
                "condition vector has shape {shape:?}, flow expects [1, {}]",
                self.dim
            )));
        }
        self.base.forward(tape, bind, xi)
    }

    /// Pushes `Φ_0 = μ + ε ⊙ σ` through every layer. `eps` is `R x C`.
    pub fn sample_with_eps(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        xi: Var,
        eps: Tensor,
    ) -> Result<FlowDraw> {
        if eps.rows() == 0 {
            return Err(PflError::argument("sample count must be at least 1"));
        }
        if eps.cols() != self.dim {
            return Err(PflError::config(format!(
                "noise has {} columns, flow dimension is {}",
                eps.cols(),
                self.dim
            )));
        }
        let (mu, sigma) = self.base_distribution(tape, bind, xi)?;
        let eps_var = tape.leaf(eps.clone());
        let noise = tape.mul(eps_var, sigma)?;
        let phi0 = tape.add(noise, mu)?;

        // log N(Φ_0; μ, σ) = -½‖ε‖² - Σ ln σ - (C/2) ln 2π
        let std_part = std_normal_log_density(tape, eps_var);
        let log_sigma = tape.ln(sigma);
        let log_sigma = tape.sum(log_sigma);
        let log_q0 = tape.sub(std_part, log_sigma)?;

        let mut phi = phi0;
        let rows = eps.rows();
        let mut log_det_sum = tape.leaf(Tensor::zeros(&[rows, 1]));
        for layer in &self.layers {
            let u_hat = layer.effective_u(tape, bind)?;
            let ld = layer.log_det_with(tape, bind, phi, u_hat)?;
            log_det_sum = tape.add(log_det_sum, ld)?;
            phi = layer.forward_with(tape, bind, phi, u_hat)?;
        }
        let log_q = tape.sub(log_q0, log_det_sum)?;
        Ok(FlowDraw {
            phi,
            phi0,
            log_q0,
            log_det_sum,
            log_q,
            mu,
            sigma,
            eps,
        })
    }

    /// Draws `count` samples with fresh standard-normal noise from `rng`.
    pub fn sample(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        xi: Var,
        count: usize,
        rng: &mut Rng,
    ) -> Result<FlowDraw> {
        if count == 0 {
            return Err(PflError::argument("sample count must be at least 1"));
        }
        let eps = rng.normal_tensor(&[count, self.dim], 1.0);
        self.sample_with_eps(tape, bind, xi, eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::check_gradients;

    fn stack(dim: usize, k: usize, seed: u64) -> (ParamSet, FlowStack) {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(seed);
        let stack = FlowStack::new(&mut params, "flow", dim, k, &mut rng);
        (params, stack)
    }

    fn set(params: &mut ParamSet, id: ParamId, values: &[f64]) {
        params.get_mut(id).value.data_mut().copy_from_slice(values);
    }

    #[test]
    fn zero_weights_give_zero_mean_and_ln2_sigma() {
        let (mut params, stack) = stack(3, 0, 0);
        for p in params.iter_mut() {
            p.value.fill(0.0);
        }
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let xi = tape.leaf(Tensor::row(&[0.4, -1.0, 2.0]));
        let (mu, sigma) = stack.base_distribution(&mut tape, &bind, xi).unwrap();
        assert!(tape.value(mu).data().iter().all(|&v| v == 0.0));
        for &s in tape.value(sigma).data() {
            assert!((s - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn base_distribution_matches_straight_line_oracle() {
        let (params, stack) = stack(3, 0, 9);
        let xi = [0.3, -0.7, 1.1];
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let xv = tape.leaf(Tensor::row(&xi));
        let (mu, sigma) = stack.base_distribution(&mut tape, &bind, xv).unwrap();

        let affine = |x: &[f64], lin: &Linear| -> Vec<f64> {
            let w = params.value(lin.weight);
            let b = params.value(lin.bias);
            (0..3)
                .map(|j| b.data()[j] + (0..3).map(|i| x[i] * w.at(i, j)).sum::<f64>())
                .collect()
        };
        let sp = |v: Vec<f64>| {
            v.into_iter()
                .map(|x| (1.0 + x.exp()).ln())
                .collect::<Vec<_>>()
        };
        let head = |layers: &[Linear; 3]| {
            affine(
                &sp(affine(&sp(affine(&xi, &layers[0])), &layers[1])),
                &layers[2],
            )
        };
        let mu_ref = head(&stack.base.mu);
        let sigma_ref = sp(head(&stack.base.sigma));
        for j in 0..3 {
            assert!((tape.value(mu).data()[j] - mu_ref[j]).abs() < 1e-12);
            assert!((tape.value(sigma).data()[j] - sigma_ref[j]).abs() < 1e-12);
        }

        // determinism
        let mut tape2 = Tape::new();
        let bind2 = tape2.bind(&params);
        let xv2 = tape2.leaf(Tensor::row(&xi));
        let (mu2, _) = stack.base_distribution(&mut tape2, &bind2, xv2).unwrap();
        assert_eq!(tape.value(mu), tape2.value(mu2));
    }

    #[test]
    fn wrong_condition_dimension_is_config_error() {
        let (params, stack) = stack(3, 0, 0);
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let xi = tape.leaf(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(
            stack.base_distribution(&mut tape, &bind, xi),
            Err(PflError::Config(_))
        ));
    }

    #[test]
    fn invertibility_examples() {
        let u = enforce_invertibility(&[1.0, 0.0], &[1.0, 0.0]);
        let uw = u[0];
        assert!((uw - 0.313262).abs() < 1e-6);

        let w = [0.6, 0.8];
        let u = enforce_invertibility(&[-1.2, -1.6], &w);
        let uw: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
        // -1 + ln(1 + e^-2)
        assert!((uw - -0.873_071_9).abs() < 1e-6);

        assert_eq!(
            enforce_invertibility(&[0.3, -2.0], &[0.0, 0.0]),
            vec![0.3, -2.0]
        );
    }

    #[test]
    fn effective_u_on_tape_matches_plain() {
        let (params, stack) = stack(4, 1, 5);
        let layer = &stack.layers[0];
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let u_hat = layer.effective_u(&mut tape, &bind).unwrap();
        let plain =
            enforce_invertibility(params.value(layer.u).data(), params.value(layer.w).data());
        for (a, b) in tape.value(u_hat).data().iter().zip(plain) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn single_layer(u: &[f64], w: &[f64], b: f64) -> (ParamSet, PlanarLayer) {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(0);
        let layer = PlanarLayer::new(&mut params, "p", u.len(), &mut rng);
        set(&mut params, layer.u, u);
        set(&mut params, layer.w, w);
        set(&mut params, layer.b, &[b]);
        (params, layer)
    }

    fn apply(params: &ParamSet, layer: &PlanarLayer, phi: &[f64]) -> (Vec<f64>, f64) {
        let mut tape = Tape::new();
        let bind = tape.bind(params);
        let x = tape.leaf(Tensor::row(phi));
        let y = layer.forward(&mut tape, &bind, x).unwrap();
        let ld = layer.log_det(&mut tape, &bind, x).unwrap();
        (tape.value(y).data().to_vec(), tape.scalar(ld))
    }

    #[test]
    fn planar_identity_and_shift_cases() {
        // û = 0: identity map with zero log-det.
        let (params, layer) = single_layer(&[0.4, 0.1], &[0.5, -1.0], 0.3);
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let x = tape.leaf(Tensor::row(&[1.0, 2.0]));
        let zero = tape.leaf(Tensor::zeros(&[1, 2]));
        let y = layer.forward_with(&mut tape, &bind, x, zero).unwrap();
        let ld = layer.log_det_with(&mut tape, &bind, x, zero).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
        assert_eq!(tape.scalar(ld), 0.0);

        // Raw u = 0 is still reparameterized because uᵀw = 0 maps to m(0).
        let (params, layer) = single_layer(&[0.0, 0.0], &[0.5, -1.0], 0.3);
        let (y, ld) = apply(&params, &layer, &[1.0, 2.0]);
        let u_hat = enforce_invertibility(&[0.0, 0.0], &[0.5, -1.0]);
        let a = 0.5 * 1.0 - 2.0 + 0.3;
        assert!((y[0] - (1.0 + u_hat[0] * f64::tanh(a))).abs() < 1e-14);
        let det = 1.0 + (1.0 - a.tanh().powi(2)) * (u_hat[0] * 0.5 - u_hat[1]);
        assert!((ld - det.abs().ln()).abs() < 1e-14);

        // w = 0: constant shift û tanh(b), zero log-det.
        let (params, layer) = single_layer(&[0.7, -0.2], &[0.0, 0.0], 0.4);
        let (y, ld) = apply(&params, &layer, &[1.0, 2.0]);
        assert!((y[0] - (1.0 + 0.7 * 0.4f64.tanh())).abs() < 1e-15);
        assert!((y[1] - (2.0 - 0.2 * 0.4f64.tanh())).abs() < 1e-15);
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn planar_hand_arithmetic() {
        // u = w = [1, 0], b = 0, φ = [1, 1]: û = [softplus(1) - 1, 0]
        let (params, layer) = single_layer(&[1.0, 0.0], &[1.0, 0.0], 0.0);
        let (y, _) = apply(&params, &layer, &[1.0, 1.0]);
        let u_hat = (1.0 + 1f64.exp()).ln() - 1.0;
        assert!((y[0] - (1.0 + u_hat * 1f64.tanh())).abs() < 1e-15);
        assert_eq!(y[1], 1.0);
    }

    #[test]
    fn log_det_matches_fd_jacobian() {
        let mut rng = Rng::new(77);
        for _ in 0..20 {
            let u: Vec<f64> = (0..2).map(|_| 2.0 * rng.normal()).collect();
            let w: Vec<f64> = (0..2).map(|_| 2.0 * rng.normal()).collect();
            let (params, layer) = single_layer(&u, &w, rng.normal());
            let phi = [rng.normal(), rng.normal()];
            let (_, ld) = apply(&params, &layer, &phi);
            let h = 1e-6;
            let mut jac = [[0.0; 2]; 2];
            for j in 0..2 {
                let mut p = phi;
                p[j] += h;
                let (yp, _) = apply(&params, &layer, &p);
                p[j] -= 2.0 * h;
                let (ym, _) = apply(&params, &layer, &p);
                for i in 0..2 {
                    jac[i][j] = (yp[i] - ym[i]) / (2.0 * h);
                }
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            assert!((ld.exp() - det.abs()).abs() / det.abs() < 1e-4);
        }
    }

    #[test]
    fn identity_flow_samples_are_noise() {
        let (mut params, stack) = stack(3, 0, 1);
        for p in params.iter_mut() {
            p.value.fill(0.0);
        }
        // sigma = softplus(b) = 1  =>  b = ln(e - 1)
        set(
            &mut params,
            stack.base.sigma[2].bias,
            &[(1f64.exp() - 1.0).ln(); 3],
        );
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let xi = tape.leaf(Tensor::row(&[0.0; 3]));
        let mut rng = Rng::new(3);
        let draw = stack.sample(&mut tape, &bind, xi, 4, &mut rng).unwrap();
        for s in draw.samples(&tape) {
            for (p, e) in s.phi.iter().zip(&s.eps) {
                assert!((p - e).abs() < 1e-12);
            }
            let expected = -0.5 * s.eps.iter().map(|e| e * e).sum::<f64>() - 1.5 * (2.0 * PI).ln();
            assert!((s.log_q - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_zero_count() {
        let (params, stack) = stack(2, 3, 4);
        let run = || {
            let mut tape = Tape::new();
            let bind = tape.bind(&params);
            let xi = tape.leaf(Tensor::row(&[0.2, 0.1]));
            let mut rng = Rng::new(11);
            let draw = stack.sample(&mut tape, &bind, xi, 2, &mut rng).unwrap();
            draw.samples(&tape)
        };
        assert_eq!(run(), run());

        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let xi = tape.leaf(Tensor::row(&[0.2, 0.1]));
        let mut rng = Rng::new(11);
        assert!(matches!(
            stack.sample(&mut tape, &bind, xi, 0, &mut rng),
            Err(PflError::Argument(_))
        ));
    }

    #[test]
    fn log_q_gradients_pass_check() {
        let (mut params, stack) = stack(3, 2, 21);
        let xi_id = params.add("xi", Tensor::row(&[0.5, -0.3, 0.8]), true);
        let eps = Rng::new(2).normal_tensor(&[2, 3], 1.0);
        let report = check_gradients(&mut params, 1e-5, |tape, bind| {
            let draw = stack.sample_with_eps(tape, bind, bind[xi_id], eps.clone())?;
            let probe = tape.leaf(Tensor::matrix(2, 3, vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4])?);
            let pp = tape.mul(draw.phi, probe)?;
            let pp = tape.sum(pp);
            let lq = tape.sum(draw.log_q);
            tape.add(pp, lq)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }
}
