mod support;

use pfl_core::infer_eval::metrics::{auroc, average_precision, f1_max, pro, Grid};
use proptest::prelude::*;
use support::{brute_ap, brute_auroc, brute_f1, brute_pro};

/// Scores drawn from a coarse grid so that ties are common.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=64)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0u32..12, n),
                prop::collection::vec(any::<bool>(), n),
                0usize..n,
                0usize..n,
            )
        })
        .prop_filter_map("need a second index", |(s, mut l, i, j)| {
            if i == j {
                return None;
            }
            // Force both classes.
            l[i] = true;
            l[j] = false;
            Some((s.into_iter().map(|v| v as f64 / 11.0).collect(), l))
        })
}

type MapSet = Vec<(usize, usize, Vec<f64>, Vec<bool>)>;

fn map_set() -> impl Strategy<Value = MapSet> {
    let one = (1usize..=6, 1usize..=6).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            prop::collection::vec((0u32..8).prop_map(|v| v as f64 / 7.0), w * h),
            prop::collection::vec(prop::bool::weighted(0.3), w * h),
        )
    });
    prop::collection::vec(one, 1..=3).prop_filter("needs both pixel classes", |set| {
        let any_pos = set.iter().any(|m| m.3.iter().any(|&v| v));
        let any_neg = set.iter().any(|m| m.3.iter().any(|&v| !v));
        any_pos && any_neg
    })
}

fn grids(set: &MapSet) -> (Vec<Grid<f64>>, Vec<Grid<bool>>) {
    set.iter()
        .map(|(w, h, v, m)| {
            (
                Grid::new(*w, *h, v.clone()).unwrap(),
                Grid::new(*w, *h, m.clone()).unwrap(),
            )
        })
        .unzip()
}

fn pro_oracle(set: &MapSet, limit: f64) -> f64 {
    let maps: Vec<_> = set.iter().map(|(w, h, v, _)| (*w, *h, v.clone())).collect();
    let masks: Vec<_> = set.iter().map(|m| m.3.clone()).collect();
    brute_pro(&maps, &masks, limit)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ranking_metrics_match_brute_force((scores, labels) in scored_labels()) {
        prop_assert!((auroc(&scores, &labels).unwrap() - brute_auroc(&scores, &labels)).abs() < 1e-9);
        prop_assert!((average_precision(&scores, &labels).unwrap() - brute_ap(&scores, &labels)).abs() < 1e-9);
        prop_assert!((f1_max(&scores, &labels).unwrap() - brute_f1(&scores, &labels)).abs() < 1e-9);
    }

    #[test]
    fn pro_matches_brute_force(set in map_set(), limit in 0.05f64..=1.0) {
        let (maps, masks) = grids(&set);
        let fast = pro(&maps, &masks, limit).unwrap();
        prop_assert!((fast - pro_oracle(&set, limit)).abs() < 1e-9, "{fast} vs {}", pro_oracle(&set, limit));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&fast));
    }

    #[test]
    fn ranking_metrics_ignore_increasing_transforms((scores, labels) in scored_labels()) {
        let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&moved, &labels).unwrap());
        prop_assert!((average_precision(&scores, &labels).unwrap()
            - average_precision(&moved, &labels).unwrap()).abs() < 1e-15);
        prop_assert_eq!(f1_max(&scores, &labels).unwrap(), f1_max(&moved, &labels).unwrap());
    }

    #[test]
    fn pro_grows_with_the_limit(set in map_set(), a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (maps, masks) = grids(&set);
        prop_assert!(pro(&maps, &masks, lo).unwrap() <= pro(&maps, &masks, hi).unwrap() + 1e-12);
    }
}

#[test]
fn worked_examples() {
    assert_eq!(
        auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
        0.75
    );
    let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert!((ap - 0.833333).abs() < 1e-6);
    let f1 = f1_max(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert!((f1 - 0.8).abs() < 1e-15);
}

#[test]
fn pro_toy_region() {
    // 4-pixel region; two of its pixels and one normal pixel light up.
    let mut mask = vec![false; 16];
    for p in [5, 6, 9, 10] {
        mask[p] = true;
    }
    let mut map = vec![0.0; 16];
    map[5] = 0.9;
    map[6] = 0.8;
    map[0] = 0.7;
    let set: MapSet = vec![(4, 4, map.clone(), mask.clone())];
    let (maps, masks) = grids(&set);
    let got = pro(&maps, &masks, 0.3).unwrap();
    assert!((got - pro_oracle(&set, 0.3)).abs() < 1e-9);
    // Overlap reaches 1/2 at zero FPR and stays there: the other two region
    // pixels sit at the minimum value and never exceed a threshold.
    assert!((got - 0.5).abs() < 1e-9, "{got}");
}
