//! Ranking and segmentation metrics.

use crate::error::{PflError, Result};

/// Default integration limit of the per-region-overlap curve.
pub const DEFAULT_FPR_LIMIT: f64 = 0.3;

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(PflError::argument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(PflError::numeric(format!("non-finite score {bad}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

fn both_classes(pos: usize, neg: usize, metric: &str) -> Result<()> {
    if pos == 0 || neg == 0 {
        return Err(PflError::UndefinedMetric(format!(
            "{metric} needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok(())
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Cumulative `(tp, fp)` after each group of tied scores, in descending
/// score order.
fn threshold_sweep(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize)> {
    let idx = descending(scores);
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == v {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((tp, fp));
    }
    out
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    both_classes(pos, neg, "AUROC")?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        let tied_pos = idx[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid * tied_pos as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-wise average precision `Σ (R_k - R_{k-1}) P_k` over the descending
/// threshold sweep.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(PflError::UndefinedMetric(
            "AP needs at least one positive".into(),
        ));
    }
    let mut ap = 0.0;
    let mut prev_tp = 0;
    for (tp, fp) in threshold_sweep(scores, labels) {
        if tp > prev_tp {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (tp - prev_tp) as f64 / pos as f64 * precision;
            prev_tp = tp;
        }
    }
    Ok(ap)
}

/// Maximum F1 over thresholds placed at every distinct score.
pub fn f1_max(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    both_classes(pos, neg, "F1-max")?;
    let best = threshold_sweep(scores, labels)
        .into_iter()
        .map(|(tp, fp)| 2.0 * tp as f64 / (tp + fp + pos) as f64)
        .fold(0.0, f64::max);
    Ok(best)
}

/// A row-major map with its sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
}

impl<T> Grid<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return Err(PflError::argument(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            values,
        })
    }
}

/// Connected components of `true` pixels under 8-connectivity. Returns a
/// label per pixel (`usize::MAX` for background) and the component sizes.
pub fn connected_components(mask: &Grid<bool>) -> (Vec<usize>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.values[start] || labels[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        labels[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask.values[q] && labels[q] == usize::MAX {
                        labels[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Area under a piecewise-linear curve from `fpr = 0` to `limit`. Points
/// must be sorted by `fpr`; the last value is held flat up to `limit`.
pub fn area_to_limit(points: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if x0 >= limit {
            break;
        }
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
            area += (limit - x0) * (y0 + y) / 2.0;
        }
    }
    if let Some(&(x, y)) = points.last() {
        if x < limit {
            area += (limit - x) * y;
        }
    }
    area
}

/// Per-region overlap: mean coverage of ground-truth components against
/// global false-positive rate, integrated up to `fpr_limit` and divided by
/// it.
///
/// A pixel is predicted anomalous at threshold `t` when its value exceeds
/// `t`; `t` runs over every distinct map value, so the curve starts at
/// `(0, 0)` and the largest swept FPR is held flat to the limit.
pub fn pro(maps: &[Grid<f64>], masks: &[Grid<bool>], fpr_limit: f64) -> Result<f64> {
    if !(fpr_limit > 0.0 && fpr_limit <= 1.0) {
        return Err(PflError::argument(format!(
            "fpr limit {fpr_limit} outside (0, 1]"
        )));
    }
    if maps.len() != masks.len() {
        return Err(PflError::argument("maps and masks differ in count"));
    }
    // Per pixel: value, component weight (0 for normal pixels), normal flag.
    let mut pixels: Vec<(f64, f64, bool)> = Vec::new();
    let mut components = 0usize;
    let mut normals = 0usize;
    for (map, mask) in maps.iter().zip(masks) {
        if map.width != mask.width || map.height != mask.height {
            return Err(PflError::argument("map and mask sizes differ"));
        }
        let (labels, sizes) = connected_components(mask);
        for (&v, &label) in map.values.iter().zip(&labels) {
            if !v.is_finite() {
                return Err(PflError::numeric(format!("non-finite map value {v}")));
            }
            if label == usize::MAX {
                normals += 1;
                pixels.push((v, 0.0, true));
            } else {
                pixels.push((v, 1.0 / sizes[label] as f64, false));
            }
        }
        components += sizes.len();
    }
    if components == 0 {
        return Err(PflError::UndefinedMetric(
            "PRO needs at least one anomalous region".into(),
        ));
    }
    if normals == 0 {
        return Err(PflError::UndefinedMetric(
            "PRO needs at least one normal pixel".into(),
        ));
    }
    pixels.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut fp, mut overlap) = (0usize, 0.0f64);
    let mut i = 0;
    while i < pixels.len() {
        // Everything before index i is strictly above the current value.
        points.push((fp as f64 / normals as f64, overlap / components as f64));
        let v = pixels[i].0;
        while i < pixels.len() && pixels[i].0 == v {
            if pixels[i].2 {
                fp += 1;
            } else {
                overlap += pixels[i].1;
            }
            i += 1;
        }
    }
    Ok(area_to_limit(&points, fpr_limit) / fpr_limit)
}
