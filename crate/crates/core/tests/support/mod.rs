//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Nothing here calls into the metric or flow
//! code under test.
#![allow(dead_code)]

use pfl_core::align::MapGeometry;
use pfl_core::{ImageFeatures, ModelConfig, Regularizer, Rng, Tensor};

// ---------------------------------------------------------------- metrics

/// Pair counting over every (positive, negative) couple.
pub fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn distinct_desc(values: &[f64]) -> Vec<f64> {
    let mut t = values.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// Precision and recall recomputed from scratch at every threshold
/// `score >= t`.
fn pr_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    distinct_desc(scores)
        .into_iter()
        .map(|t| {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|(s, l)| **s >= t && **l)
                .count() as f64;
            let fp = scores
                .iter()
                .zip(labels)
                .filter(|(s, l)| **s >= t && !**l)
                .count() as f64;
            (tp / pos, tp / (tp + fp))
        })
        .collect()
}

pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (recall, precision) in pr_points(scores, labels) {
        ap += (recall - prev) * precision;
        prev = recall;
    }
    ap
}

pub fn brute_f1(scores: &[f64], labels: &[bool]) -> f64 {
    pr_points(scores, labels)
        .into_iter()
        .map(|(r, p)| {
            if r + p == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .fold(0.0, f64::max)
}

/// 8-connected flood fill with an explicit stack. Returns one pixel list per
/// component.
pub fn brute_components(width: usize, height: usize, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            comp.push(p);
            let (x, y) = ((p % width) as i64, (p / width) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let q = ny as usize * width + nx as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// PRO from its definition: at each distinct threshold `t` (pixels with
/// value `> t` are positive) recompute the global FPR and the mean
/// per-component overlap, then integrate the curve up to `limit` and hold
/// the last point flat.
pub fn brute_pro(maps: &[(usize, usize, Vec<f64>)], masks: &[Vec<bool>], limit: f64) -> f64 {
    let mut comps: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut normals = Vec::new();
    let mut all = Vec::new();
    for (i, ((w, h, map), mask)) in maps.iter().zip(masks).enumerate() {
        for c in brute_components(*w, *h, mask) {
            comps.push((i, c));
        }
        for (p, &m) in mask.iter().enumerate() {
            if !m {
                normals.push(map[p]);
            }
        }
        all.extend_from_slice(map);
    }
    let mut curve: Vec<(f64, f64)> = distinct_desc(&all)
        .into_iter()
        .map(|t| {
            let fpr = normals.iter().filter(|&&v| v > t).count() as f64 / normals.len() as f64;
            let overlap: f64 = comps
                .iter()
                .map(|(i, c)| {
                    c.iter().filter(|&&p| maps[*i].2[p] > t).count() as f64 / c.len() as f64
                })
                .sum::<f64>()
                / comps.len() as f64;
            (fpr, overlap)
        })
        .collect();
    curve.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    let mut x = 0.0;
    let mut y = curve[0].1;
    for &(nx, ny) in &curve[1..] {
        if x >= limit {
            break;
        }
        if nx <= limit {
            area += (nx - x) * (y + ny) / 2.0;
        } else {
            let yl = y + (ny - y) * (limit - x) / (nx - x);
            area += (limit - x) * (y + yl) / 2.0;
        }
        x = nx;
        y = ny;
    }
    if x < limit {
        area += (limit - x) * y;
    }
    area / limit
}

// ------------------------------------------------------------------- flow

/// One planar layer as plain numbers, already holding the constrained `û`.
#[derive(Debug, Clone)]
pub struct PlainPlanar {
    pub u_hat: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `û` from its definition with `m(a) = -1 + ln(1 + e^a)`.
pub fn constrain(u: &[f64], w: &[f64]) -> Vec<f64> {
    let uw = dot(u, w);
    let m = -1.0 + uw.exp().ln_1p();
    let w2 = dot(w, w);
    u.iter()
        .zip(w)
        .map(|(a, b)| a + (m - uw) * b / w2)
        .collect()
}

impl PlainPlanar {
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let t = (dot(&self.w, z) + self.b).tanh();
        z.iter().zip(&self.u_hat).map(|(a, u)| a + u * t).collect()
    }

    /// Inverse by bisection on the scalar `α = wᵀz`, which satisfies the
    /// strictly increasing equation `α + (wᵀû) tanh(α + b) = wᵀy`.
    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        let target = dot(&self.w, y);
        let wu = dot(&self.w, &self.u_hat);
        let g = |a: f64| a + wu * (a + self.b).tanh() - target;
        let span = wu.abs() + 1.0;
        let (mut lo, mut hi) = (target - span, target + span);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = (0.5 * (lo + hi) + self.b).tanh();
        y.iter().zip(&self.u_hat).map(|(a, u)| a - u * t).collect()
    }

    /// `|det ∂h/∂z|` by the matrix determinant lemma.
    pub fn abs_det(&self, z: &[f64]) -> f64 {
        let t = (dot(&self.w, z) + self.b).tanh();
        (1.0 + (1.0 - t * t) * dot(&self.u_hat, &self.w)).abs()
    }
}

/// Log-density of `y = h_K ∘ … ∘ h_1(μ + σ ⊙ ε)` by exact inversion.
pub fn flow_log_density(mu: &[f64], sigma: &[f64], layers: &[PlainPlanar], y: &[f64]) -> f64 {
    let mut z = y.to_vec();
    let mut log_det = 0.0;
    for layer in layers.iter().rev() {
        z = layer.invert(&z);
        log_det += layer.abs_det(&z).ln();
    }
    let mut lq0 = 0.0;
    for ((zi, m), s) in z.iter().zip(mu).zip(sigma) {
        let e = (zi - m) / s;
        lq0 += -0.5 * e * e - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    lq0 - log_det
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            let (top, bottom) = a.split_at_mut(r);
            for (x, y) in bottom[0][c..].iter_mut().zip(&top[c][c..]) {
                *x -= f * y;
            }
        }
    }
    det
}

/// Central-difference Jacobian of `f` at `z`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut jac = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let (fp, fm) = (f(&zp), f(&zm));
        for i in 0..n {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

// ------------------------------------------------------------------ model

pub fn small_config(dim: usize, banks: usize, flow_len: usize) -> ModelConfig {
    ModelConfig {
        dim,
        raw_dim: dim + 3,
        layers: 2,
        banks,
        context_len: 2,
        state_len: 2,
        flow_len,
        logit_scale: 100.0,
        regularizer: Regularizer::Flow,
    }
}

/// Random features on a 3x3 grid upsampled to 6x6.
pub fn random_features(config: &ModelConfig, seed: u64) -> ImageFeatures {
    let mut rng = Rng::new(seed);
    let geometry = MapGeometry {
        grid_h: 3,
        grid_w: 3,
        out_h: 6,
        out_w: 6,
    };
    ImageFeatures {
        x_cls: rng.normal_tensor(&[1, config.raw_dim], 1.0),
        layers: (0..config.layers)
            .map(|_| rng.normal_tensor(&[9, config.raw_dim], 1.0))
            .collect(),
        geometry,
        class_name: format!("class{}", seed % 3),
    }
}

/// A mask with one square anomaly in the lower right of a 6x6 map.
pub fn square_mask(anomalous: bool) -> Tensor {
    let mut m = vec![0.0; 36];
    if anomalous {
        for y in 3..5 {
            for x in 3..6 {
                m[y * 6 + x] = 1.0;
            }
        }
    }
    Tensor::new(vec![36, 1], m).unwrap()
}
