use std::collections::BTreeMap;
use std::fmt::Write;

use super::metrics::{auroc, average_precision, f1_max, pro, Grid};
use crate::error::Result;

/// Columns of the machine-readable metrics table.
pub const TSV_HEADER: &str =
    "category\timage_auroc\timage_f1max\timage_ap\tpixel_auroc\tpixel_pro\tpixel_ap";

/// One scored image with its ground truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub category: &'a str,
    pub label: bool,
    pub score: f64,
    pub map: &'a Grid<f64>,
    pub mask: &'a Grid<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMetrics {
    pub category: String,
    pub image_auroc: f64,
    pub image_f1max: f64,
    pub image_ap: f64,
    pub pixel_auroc: f64,
    pub pixel_pro: f64,
    pub pixel_ap: f64,
}

impl CategoryMetrics {
    fn values(&self) -> [f64; 6] {
        [
            self.image_auroc,
            self.image_f1max,
            self.image_ap,
            self.pixel_auroc,
            self.pixel_pro,
            self.pixel_ap,
        ]
    }

    fn compute(category: &str, items: &[EvalItem<'_>], fpr_limit: f64) -> Result<Self> {
        let scores: Vec<f64> = items.iter().map(|i| i.score).collect();
        let labels: Vec<bool> = items.iter().map(|i| i.label).collect();
        let mut pix_scores = Vec::new();
        let mut pix_labels = Vec::new();
        for it in items {
            pix_scores.extend_from_slice(&it.map.values);
            pix_labels.extend_from_slice(&it.mask.values);
        }
        let maps: Vec<Grid<f64>> = items.iter().map(|i| i.map.clone()).collect();
        let masks: Vec<Grid<bool>> = items.iter().map(|i| i.mask.clone()).collect();
        Ok(CategoryMetrics {
            category: category.to_string(),
            image_auroc: auroc(&scores, &labels)?,
            image_f1max: f1_max(&scores, &labels)?,
            image_ap: average_precision(&scores, &labels)?,
            pixel_auroc: auroc(&pix_scores, &pix_labels)?,
            pixel_pro: pro(&maps, &masks, fpr_limit)?,
            pixel_ap: average_precision(&pix_scores, &pix_labels)?,
        })
    }
}

/// Per-category metrics plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub fpr_limit: f64,
    pub categories: Vec<CategoryMetrics>,
    pub mean: CategoryMetrics,
}

/// Groups items by category (sorted by name) and computes every metric.
pub fn evaluate(items: &[EvalItem<'_>], fpr_limit: f64) -> Result<MetricsReport> {
    let mut groups: BTreeMap<&str, Vec<EvalItem<'_>>> = BTreeMap::new();
    for it in items {
        groups.entry(it.category).or_default().push(*it);
    }
    if groups.is_empty() {
        return Err(crate::PflError::UndefinedMetric(
            "no images to evaluate".into(),
        ));
    }
    let categories = groups
        .iter()
        .map(|(name, group)| CategoryMetrics::compute(name, group, fpr_limit))
        .collect::<Result<Vec<_>>>()?;
    let n = categories.len() as f64;
    let mut sums = [0.0; 6];
    for c in &categories {
        for (s, v) in sums.iter_mut().zip(c.values()) {
            *s += v;
        }
    }
    let m = sums.map(|s| s / n);
    let mean = CategoryMetrics {
        category: "mean".into(),
        image_auroc: m[0],
        image_f1max: m[1],
        image_ap: m[2],
        pixel_auroc: m[3],
        pixel_pro: m[4],
        pixel_ap: m[5],
    };
    Ok(MetricsReport {
        fpr_limit,
        categories,
        mean,
    })
}

impl MetricsReport {
    /// Tab-separated table: header, one row per category, then the mean row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for row in self.categories.iter().chain(std::iter::once(&self.mean)) {
            out.push_str(&row.category);
            for v in row.values() {
                write!(out, "\t{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Aligned human-readable report.
    pub fn to_text(&self) -> String {
        let width = self
            .categories
            .iter()
            .map(|c| c.category.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = String::new();
        writeln!(out, "PRO integrated to FPR {}", self.fpr_limit).unwrap();
        writeln!(
            out,
            "{:<width$}  {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
            "category", "img-auc", "img-f1", "img-ap", "pix-auc", "pix-pro", "pix-ap"
        )
        .unwrap();
        for row in self.categories.iter().chain(std::iter::once(&self.mean)) {
            let v = row.values().map(|x| x * 100.0);
            writeln!(
                out,
                "{:<width$}  {:>8.2} {:>8.2} {:>8.2} | {:>8.2} {:>8.2} {:>8.2}",
                row.category, v[0], v[1], v[2], v[3], v[4], v[5]
            )
            .unwrap();
        }
        out
    }
}
