use qvlab::algorithms::{quickval, CostModel, PartitionScheme};
use qvlab::coupling::conditioned_keys;
use qvlab::rng::stream;
use qvlab::stats::mean_se;
use qvlab::tree::{HoareReading, IntervalTree};

const N: usize = 20_000;
const REPS: u64 = 120;
const K: usize = 4;

/// Per-replicate `(comparisons, swaps) / n` over the first `K` levels, with
/// keys drawn so that those levels follow the midpoint tree.
fn first_levels(alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let tree = IntervalTree::midpoint(K);
    (0..REPS)
        .map(|r| {
            let keys = conditioned_keys(&tree, N, &mut stream(11, r));
            let prof = quickval(&keys, alpha, &CostModel::unit(), PartitionScheme::Hoare).unwrap();
            let head = &prof.per_level[..K];
            let c: u64 = head.iter().map(|l| l.comparisons).sum();
            let s: u64 = head.iter().map(|l| l.swaps).sum();
            (c as f64 / N as f64, s as f64 / N as f64)
        })
        .unzip()
}

#[test]
fn hoare_swaps_follow_hypergeometric_mean_reading() {
    let tree = IntervalTree::midpoint(K);
    for alpha in [0.3, 0.71] {
        let (comps, swaps) = first_levels(alpha);
        let (mc, _) = mean_se(&comps);
        let limit = tree.limit_comparisons(alpha).unwrap() - tree.lengths(alpha, K).unwrap()[K];
        assert!((mc - limit).abs() < 1e-3, "comparisons {mc} vs {limit}");

        let (ms, se) = mean_se(&swaps);
        let derived = tree.limit_swaps_hoare(alpha, HoareReading::HypergeometricMean).unwrap();
        let printed = tree.limit_swaps_hoare(alpha, HoareReading::Printed).unwrap();
        // O(1/n) bias from the pivot being excluded from each sublist.
        let tol = 4.0 * se + 4.0 * K as f64 / N as f64;
        assert!((ms - derived).abs() < tol, "alpha {alpha}: {ms} vs {derived} (tol {tol})");
        assert!((ms - printed).abs() > 100.0 * tol, "alpha {alpha}: printed {printed} too close to {ms}");
    }
}

#[test]
fn lomuto_swaps_match_left_child_lengths() {
    let tree = IntervalTree::midpoint(K);
    let alpha = 0.55;
    let vals: Vec<f64> = (0..REPS)
        .map(|r| {
            let keys = conditioned_keys(&tree, N, &mut stream(12, r));
            let prof = quickval(&keys, alpha, &CostModel::unit(), PartitionScheme::Lomuto).unwrap();
            prof.per_level[..K].iter().map(|l| l.swaps).sum::<u64>() as f64 / N as f64
        })
        .collect();
    let (m, se) = mean_se(&vals);
    let want = tree.limit_swaps_lomuto(alpha).unwrap();
    assert!((m - want).abs() < 4.0 * se + 1e-3, "{m} vs {want}");
}
