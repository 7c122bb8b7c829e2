//! Measurement routines shared by the integration tests and the acceptance
//! suite. Each returns the observed error so callers choose how to report.
#![allow(dead_code)]

use pfl_core::flow::{FlowStack, PlanarLayer};
use pfl_core::infer_eval::metrics::{auroc, average_precision, f1_max, pro, Grid};
use pfl_core::losses::{cls_loss, dice_loss, flow_reg, focal_loss, gaussian_elbo_reg, FOCAL_GAMMA};
use pfl_core::numcore::{check_gradients, Tape, Var};
use pfl_core::{
    run_inference, EnsembleMode, ParamSet, PflModel, Prediction, Regularizer, Rng, Tensor,
};

use crate::support::{
    brute_ap, brute_auroc, brute_f1, brute_pro, constrain, determinant, fd_jacobian,
    flow_log_density, random_features, small_config, square_mask, PlainPlanar,
};

// -------------------------------------------------------------- gradients

pub const GRAD_H: f64 = 1e-5;

fn sigmoid(tape: &mut Tape, x: Var) -> Var {
    let e = tape.exp(x);
    let d = tape.shift(e, 1.0);
    tape.div(e, d).unwrap()
}

/// Maximum relative gradient error for each checked objective.
pub fn gradient_checks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (regularizer, label) in [
        (Regularizer::Flow, true),
        (Regularizer::Flow, false),
        (Regularizer::Gaussian, true),
    ] {
        let mut config = small_config(4, 2, 2);
        config.regularizer = regularizer;
        let model = PflModel::new(config, 5).unwrap();
        let features = random_features(&config, 1);
        let mask = square_mask(label);
        let mut params = model.params.clone();
        let check = check_gradients(&mut params, GRAD_H, |tape, bind| {
            let mut rng = Rng::new(17);
            model
                .training_loss(tape, bind, &features, label, &mask, 1, &mut rng)
                .map(|(loss, _)| loss)
        })
        .unwrap();
        out.push((
            format!("model {regularizer:?}/{label} ({})", check.worst),
            check.max_rel_err,
        ));
    }

    let mut rng = Rng::new(3);
    let mut params = ParamSet::new();
    let logits = params.add("logits", rng.normal_tensor(&[36, 1], 1.5), true);
    let cls = params.add("cls", rng.normal_tensor(&[2, 2], 1.0), true);
    let mask = square_mask(true);
    let check = check_gradients(&mut params, GRAD_H, |tape, bind| {
        let prob = sigmoid(tape, bind[logits]);
        let focal = focal_loss(tape, prob, &mask, FOCAL_GAMMA)?;
        let dice = dice_loss(tape, &mask, prob)?;
        let rows: Vec<Var> = (0..2)
            .map(|r| {
                let row = tape.slice_rows(bind[cls], r, 1).unwrap();
                tape.softmax_rows(row)
            })
            .collect();
        let c = cls_loss(tape, &rows, &[true, false])?;
        let s = tape.add(focal, dice)?;
        tape.add(s, c)
    })
    .unwrap();
    out.push(("focal+dice+cls".into(), check.max_rel_err));

    for k in [0, 3] {
        let mut rng = Rng::new(8 + k as u64);
        let mut params = ParamSet::new();
        let stack = FlowStack::new(&mut params, "flow", 3, k, &mut rng);
        let xi = params.add("xi", rng.normal_tensor(&[1, 3], 1.0), true);
        let eps = Rng::new(1).normal_tensor(&[4, 3], 1.0);
        let check = check_gradients(&mut params, GRAD_H, |tape, bind| {
            let d = stack.sample_with_eps(tape, bind, bind[xi], eps.clone())?;
            let a = flow_reg(tape, &[&d])?;
            let b = gaussian_elbo_reg(tape, &[&d])?;
            tape.add(a, b)
        })
        .unwrap();
        out.push((format!("flow regularizers K={k}"), check.max_rel_err));
    }
    out
}

// ------------------------------------------------------------------- flow

const BINS: usize = 20;
/// Midpoint sub-cells per bin side for the oracle mass. The strong layers
/// fold the density into narrow ridges, so coarser rules bias the oracle.
const SUB: usize = 24;

pub fn randomized_stack(k: usize, seed: u64) -> (ParamSet, FlowStack) {
    let mut rng = Rng::new(seed);
    let mut params = ParamSet::new();
    let stack = FlowStack::new(&mut params, "flow", 2, k, &mut rng);
    // Strong layers so the density is far from Gaussian.
    for layer in &stack.layers {
        for (id, std) in [(layer.u, 1.2), (layer.w, 1.2), (layer.b, 0.8)] {
            let shape = params.value(id).shape().to_vec();
            params.get_mut(id).value = rng.normal_tensor(&shape, std);
        }
    }
    (params, stack)
}

fn plain_layers(params: &ParamSet, stack: &FlowStack) -> Vec<PlainPlanar> {
    stack
        .layers
        .iter()
        .map(|l| {
            let u = params.value(l.u).data();
            let w = params.value(l.w).data();
            PlainPlanar {
                u_hat: constrain(u, w),
                w: w.to_vec(),
                b: params.value(l.b).data()[0],
            }
        })
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q) as usize]
}

pub struct DensityCheck {
    /// Total variation between the sample histogram and the oracle density
    /// integrated over the same bins.
    pub tv: f64,
    /// Largest gap between the reported `log_q` and exact inversion.
    pub log_q_err: f64,
}

/// Samples `n` points from a randomized 2-D stack of `k` layers.
pub fn density_check(k: usize, seed: u64, n: usize) -> DensityCheck {
    let (params, stack) = randomized_stack(k, seed);
    let layers = plain_layers(&params, &stack);
    let mut rng = Rng::new(seed ^ 0xabc);
    let xi = rng.normal_tensor(&[1, 2], 1.0);

    let mut points = Vec::with_capacity(n);
    let (mut mu, mut sigma) = (vec![], vec![]);
    let chunk = 100_000;
    let mut checked = 0;
    let mut log_q_err = 0.0f64;
    while points.len() < n {
        let rows = chunk.min(n - points.len());
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let x = tape.leaf(xi.clone());
        let draw = stack.sample(&mut tape, &bind, x, rows, &mut rng).unwrap();
        mu = tape.value(draw.mu).data().to_vec();
        sigma = tape.value(draw.sigma).data().to_vec();
        let phi = tape.value(draw.phi);
        let log_q = tape.value(draw.log_q);
        for r in 0..rows {
            let p = [phi.at(r, 0), phi.at(r, 1)];
            if checked < 200 {
                let exact = flow_log_density(&mu, &sigma, &layers, &p);
                log_q_err = log_q_err.max((exact - log_q.data()[r]).abs());
                checked += 1;
            }
            points.push(p);
        }
    }

    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (x0, x1) = (quantile(&xs, 0.001), quantile(&xs, 0.999));
    let (y0, y1) = (quantile(&ys, 0.001), quantile(&ys, 0.999));
    let (dx, dy) = ((x1 - x0) / BINS as f64, (y1 - y0) / BINS as f64);

    let mut counts = vec![0usize; BINS * BINS];
    let mut outside = 0usize;
    for p in &points {
        let i = ((p[0] - x0) / dx).floor();
        let j = ((p[1] - y0) / dy).floor();
        if i < 0.0 || j < 0.0 || i >= BINS as f64 || j >= BINS as f64 {
            outside += 1;
        } else {
            counts[j as usize * BINS + i as usize] += 1;
        }
    }

    let mut tv = 0.0;
    let mut inside_mass = 0.0;
    let cell = dx * dy / (SUB * SUB) as f64;
    for j in 0..BINS {
        for i in 0..BINS {
            let mut mass = 0.0;
            for sj in 0..SUB {
                for si in 0..SUB {
                    let px = x0 + (i as f64 + (si as f64 + 0.5) / SUB as f64) * dx;
                    let py = y0 + (j as f64 + (sj as f64 + 0.5) / SUB as f64) * dy;
                    mass += flow_log_density(&mu, &sigma, &layers, &[px, py]).exp() * cell;
                }
            }
            inside_mass += mass;
            tv += (counts[j * BINS + i] as f64 / n as f64 - mass).abs();
        }
    }
    tv += (outside as f64 / n as f64 - (1.0 - inside_mass)).abs();
    DensityCheck {
        tv: tv / 2.0,
        log_q_err,
    }
}

/// Worst relative error between `exp(log_det)` and the finite-difference
/// Jacobian determinant over `trials` random single layers.
pub fn layer_log_det_error(trials: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let dim = 2 + trial % 5;
        let mut params = ParamSet::new();
        let layer = PlanarLayer::new(&mut params, "p", dim, &mut rng);
        for (id, std) in [(layer.u, 1.5), (layer.w, 1.5), (layer.b, 1.0)] {
            let shape = params.value(id).shape().to_vec();
            params.get_mut(id).value = rng.normal_tensor(&shape, std);
        }
        let z = rng.normal_tensor(&[1, dim], 1.0);
        let forward = |point: &[f64]| -> Vec<f64> {
            let mut tape = Tape::new();
            let bind = tape.bind(&params);
            let x = tape.leaf(Tensor::row(point));
            let y = layer.forward(&mut tape, &bind, x).unwrap();
            tape.value(y).data().to_vec()
        };
        let det = determinant(fd_jacobian(forward, z.data(), 1e-5)).abs();
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let x = tape.leaf(z.clone());
        let ld = layer.log_det(&mut tape, &bind, x).unwrap();
        let ours = tape.scalar(ld).exp();
        worst = worst.max((ours - det).abs() / det);
    }
    worst
}

/// Relative error of the summed log-det of a `k`-layer stack against the
/// Jacobian of the whole composition.
pub fn stack_log_det_error(k: usize) -> f64 {
    let (params, stack) = randomized_stack(k, 40 + k as u64);
    let mut rng = Rng::new(k as u64);
    let xi = rng.normal_tensor(&[1, 2], 1.0);
    let eps = rng.normal_tensor(&[1, 2], 1.0);
    // Φ_K as a function of Φ_0 = μ + σ ⊙ ε: differentiate through ε and
    // divide out the diagonal base scaling.
    let run = |e: &[f64]| {
        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let x = tape.leaf(xi.clone());
        let d = stack
            .sample_with_eps(&mut tape, &bind, x, Tensor::row(e))
            .unwrap();
        (
            tape.value(d.phi).data().to_vec(),
            tape.scalar(d.log_det_sum),
            tape.value(d.sigma).data().to_vec(),
        )
    };
    let (_, log_det, sigma) = run(eps.data());
    let det =
        determinant(fd_jacobian(|e| run(e).0, eps.data(), 1e-5)).abs() / (sigma[0] * sigma[1]);
    (log_det.exp() - det).abs() / det
}

// ------------------------------------------------------------------- ELBO

/// Pins the base network output to `(mu, sigma)` by zeroing the last layer
/// weights and setting its biases.
fn pin_base(params: &mut ParamSet, stack: &FlowStack, mu: &[f64], sigma: &[f64]) {
    let dim = mu.len();
    let last_mu = &stack.base.mu[2];
    let last_sigma = &stack.base.sigma[2];
    params.get_mut(last_mu.weight).value = Tensor::zeros(&[dim, dim]);
    params.get_mut(last_sigma.weight).value = Tensor::zeros(&[dim, dim]);
    params.get_mut(last_mu.bias).value = Tensor::row(mu);
    let inv: Vec<f64> = sigma.iter().map(|s| s.exp_m1().ln()).collect();
    params.get_mut(last_sigma.bias).value = Tensor::row(&inv);
}

pub struct ElboCheck {
    /// Largest Monte Carlo gap between the two regularizers.
    pub mc_gap: f64,
    /// Largest gap between the analytic regularizer and the closed form.
    pub closed_gap: f64,
}

/// `trials` random `(μ, σ)` without flow layers, `samples` draws each.
pub fn elbo_check(trials: usize, samples: usize) -> ElboCheck {
    let mut rng = Rng::new(2024);
    let (mut mc_gap, mut closed_gap) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let mut params = ParamSet::new();
        let stack = FlowStack::new(&mut params, "flow", 2, 0, &mut rng);
        let mu = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
        let sigma = [rng.uniform_in(0.5, 1.5), rng.uniform_in(0.5, 1.5)];
        pin_base(&mut params, &stack, &mu, &sigma);

        let mut tape = Tape::new();
        let bind = tape.bind(&params);
        let xi = tape.leaf(rng.normal_tensor(&[1, 2], 1.0));
        let draw = stack
            .sample(&mut tape, &bind, xi, samples, &mut rng)
            .unwrap();
        let mc = flow_reg(&mut tape, &[&draw]).unwrap();
        let kl = gaussian_elbo_reg(&mut tape, &[&draw]).unwrap();
        let (mc, kl) = (tape.scalar(mc), tape.scalar(kl));

        let closed: f64 = (0..2)
            .map(|i| 0.5 * (sigma[i] * sigma[i] + mu[i] * mu[i] - 1.0 - (sigma[i] * sigma[i]).ln()))
            .sum();
        closed_gap = closed_gap.max((kl - closed).abs());
        mc_gap = mc_gap.max((mc - kl).abs());
    }
    ElboCheck { mc_gap, closed_gap }
}

// ---------------------------------------------------------------- metrics

/// Worst gap between each metric and its brute-force oracle over `count`
/// random instances with at most 64 scores. Returns
/// `[auroc, ap, f1_max, pro]`.
pub fn metric_oracle_gaps(count: usize, seed: u64) -> [f64; 4] {
    let mut rng = Rng::new(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..count {
        let n = 2 + rng.below(63);
        // Coarse scores so ties are common; both classes present.
        let scores: Vec<f64> = (0..n).map(|_| rng.below(12) as f64 / 11.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        let i = rng.below(n);
        labels[i] = true;
        labels[(i + 1 + rng.below(n - 1)) % n] = false;
        worst[0] =
            worst[0].max((auroc(&scores, &labels).unwrap() - brute_auroc(&scores, &labels)).abs());
        worst[1] = worst[1]
            .max((average_precision(&scores, &labels).unwrap() - brute_ap(&scores, &labels)).abs());
        worst[2] =
            worst[2].max((f1_max(&scores, &labels).unwrap() - brute_f1(&scores, &labels)).abs());

        let (w, h) = (1 + rng.below(8), 1 + rng.below(8));
        let count = 1 + rng.below(3);
        let mut values = Vec::new();
        let mut masks = Vec::new();
        for _ in 0..count {
            values.push(
                (0..w * h)
                    .map(|_| rng.below(8) as f64 / 7.0)
                    .collect::<Vec<_>>(),
            );
            masks.push((0..w * h).map(|_| rng.uniform() < 0.3).collect::<Vec<_>>());
        }
        masks[0][0] = true;
        masks[count - 1][w * h - 1] = false;
        if w * h == 1 && count == 1 {
            continue;
        }
        let limit = rng.uniform_in(0.05, 1.0);
        let grids: Vec<Grid<f64>> = values
            .iter()
            .map(|v| Grid::new(w, h, v.clone()).unwrap())
            .collect();
        let mgrids: Vec<Grid<bool>> = masks
            .iter()
            .map(|m| Grid::new(w, h, m.clone()).unwrap())
            .collect();
        let plain: Vec<_> = values.iter().map(|v| (w, h, v.clone())).collect();
        let fast = pro(&grids, &mgrids, limit).unwrap();
        worst[3] = worst[3].max((fast - brute_pro(&plain, &masks, limit)).abs());
    }
    worst
}

/// Largest gap from the worked examples.
pub fn worked_example_gap() -> f64 {
    let a = auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    let f1 = f1_max(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    [(a - 0.75).abs(), (ap - 5.0 / 6.0).abs(), (f1 - 0.8).abs()]
        .into_iter()
        .fold(0.0, f64::max)
}

// --------------------------------------------------------------- ensemble

pub fn prediction_gap(a: &Prediction, b: &Prediction) -> f64 {
    let maps = a
        .map
        .iter()
        .zip(&b.map)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scores = [
        (a.score.text - b.score.text).abs(),
        (a.score.image - b.score.image).abs(),
        (a.score.total - b.score.total).abs(),
    ];
    scores.into_iter().fold(maps, f64::max)
}

/// Runs both ensemble modes on four random images and returns the largest
/// gap between them.
pub fn mode_gap(model: &PflModel, samples: usize, seed: u64) -> f64 {
    let images: Vec<_> = (0..4).map(|s| random_features(&model.config, s)).collect();
    let image = run_inference(model, &images, samples, EnsembleMode::Image, seed).unwrap();
    let text = run_inference(model, &images, samples, EnsembleMode::Text, seed).unwrap();
    image
        .iter()
        .zip(&text)
        .map(|(a, b)| prediction_gap(a, b))
        .fold(0.0, f64::max)
}

/// A single-bank model whose `σ` is about 2e-22 for every condition.
pub fn degenerate_model() -> PflModel {
    let mut model = PflModel::new(small_config(4, 1, 0), 3).unwrap();
    let last = &model.flow.base.sigma[2];
    let (w, b) = (last.weight, last.bias);
    model.params.get_mut(w).value = Tensor::zeros(&[4, 4]);
    model.params.get_mut(b).value = Tensor::full(&[1, 4], -50.0);
    model
}
