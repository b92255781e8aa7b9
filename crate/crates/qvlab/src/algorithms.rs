//! QuickVal and FIND with instrumented costs.
//!
//! Keys carry their original index. The pivot of every sublist is the member
//! with the smallest original index, so runs on prefixes of one key sequence
//! see the same pivots. Partitions permute a working copy and count the swaps
//! they actually perform.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{validate_keys, Path, TreeError};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("cost evaluated at equal keys u = v = {0}")]
    EqualKeys(f64),
    #[error("cost arguments ({u}, {v}) outside (0,1)")]
    OutOfRange { u: f64, v: f64 },
    #[error("cost at ({u}, {v}) is {value}, not a finite nonnegative number")]
    NonFinite { u: f64, v: f64, value: f64 },
}

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error(transparent)]
    Keys(#[from] TreeError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("rank {k} outside 0..={max} for {n} keys")]
    RankOutOfRange { k: usize, n: usize, max: usize },
}

/// Tail declaration `P(β(u,V) ≥ x) ≤ c·x^(−1/ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Tameness {
    Tame { c: f64, eps: f64 },
    Untamed,
}

#[derive(Clone)]
pub enum CostKind {
    Unit,
    BitComparisons,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::Unit => f.write_str("Unit"),
            CostKind::BitComparisons => f.write_str("BitComparisons"),
            CostKind::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CostModel {
    pub kind: CostKind,
    pub tameness: Tameness,
}

impl CostModel {
    pub fn unit() -> Self {
        CostModel { kind: CostKind::Unit, tameness: Tameness::Tame { c: 1.0, eps: 0.01 } }
    }

    /// Bit comparisons, declared ε-tame with ε = 0.2.
    pub fn bit_comparisons() -> Self {
        Self::bit_comparisons_with_eps(0.2)
    }

    /// Bit comparisons declared ε-tame with the smallest constant `c` for which
    /// `2^(1−x) ≤ c·x^(−1/ε)` holds at every integer `x ≥ 1`.
    pub fn bit_comparisons_with_eps(eps: f64) -> Self {
        assert!(eps > 0.0);
        let c = (1..=4096)
            .map(|x| {
                let x = x as f64;
                ((1.0 - x) * std::f64::consts::LN_2 + x.ln() / eps).exp()
            })
            .fold(1.0, f64::max);
        CostModel { kind: CostKind::BitComparisons, tameness: Tameness::Tame { c, eps } }
    }

    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, tameness: Tameness) -> Self {
        CostModel { kind: CostKind::Custom(Arc::new(f)), tameness }
    }

    /// Declared ε, if the model is tame.
    pub fn eps(&self) -> Option<f64> {
        match self.tameness {
            Tameness::Tame { eps, .. } => Some(eps),
            Tameness::Untamed => None,
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> Result<f64, CostError> {
        let value = match &self.kind {
            CostKind::Unit => 1.0,
            CostKind::BitComparisons => bit_cost(u, v)? as f64,
            CostKind::Custom(f) => f(u, v),
        };
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(CostError::NonFinite { u, v, value })
        }
    }
}

/// One plus the number of leading binary digits shared by `u` and `v`,
/// read exactly from the first 64 fractional bits and capped at 64.
pub fn bit_cost(u: f64, v: f64) -> Result<u32, CostError> {
    if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
        return Err(CostError::OutOfRange { u, v });
    }
    if u == v {
        return Err(CostError::EqualKeys(u));
    }
    let scale = 2f64.powi(64);
    let (a, b) = ((u * scale) as u64, (v * scale) as u64);
    if a == b {
        log::warn!("keys {u} and {v} share at least 64 leading bits; bit cost capped at 64");
        return Ok(64);
    }
    Ok((1 + (a ^ b).leading_zeros()).min(64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionScheme {
    Hoare,
    Lomuto,
    /// Stable split without any data movement; no swaps are counted.
    NoPartition,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelCost {
    pub comparisons: u64,
    pub swaps: u64,
    pub beta_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub n: usize,
    pub alpha: f64,
    pub scheme: PartitionScheme,
    pub per_level: Vec<LevelCost>,
    pub totals: LevelCost,
    /// `φ(α,0), φ(α,1), …`; recorded while the depth fits in a [`Path`].
    pub pivot_path: Vec<Path>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Tagged {
    v: f64,
    idx: usize,
}

/// Result of one partition step; the pivot itself is in neither list.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition<T> {
    pub below: Vec<T>,
    pub above: Vec<T>,
    pub swaps: u64,
}

/// Hoare's two-ended scan with `list[0]` as pivot. Repeatedly exchanges the
/// leftmost key above the pivot with the rightmost key below it while the
/// former sits left of the latter.
pub fn hoare_partition<T: Copy>(list: &[T], key: impl Fn(&T) -> f64) -> Partition<T> {
    let p = key(&list[0]);
    let mut arr = list[1..].to_vec();
    let n = arr.len();
    let (mut i, mut j) = (0usize, n);
    let mut swaps = 0;
    loop {
        while i < n && key(&arr[i]) < p {
            i += 1;
        }
        while j > 0 && key(&arr[j - 1]) > p {
            j -= 1;
        }
        if j > 0 && i < j - 1 {
            arr.swap(i, j - 1);
            swaps += 1;
            i += 1;
            j -= 1;
        } else {
            break;
        }
    }
    let m = arr.iter().filter(|x| key(x) < p).count();
    let above = arr.split_off(m);
    Partition { below: arr, above, swaps }
}

/// Lomuto's one-ended scheme with `list[0]` as pivot: every key below the
/// pivot is swapped into the growing prefix, then the pivot is swapped into
/// place. Self-swaps are counted, so `swaps = |below| + 1` always.
pub fn lomuto_partition<T: Copy>(list: &[T], key: impl Fn(&T) -> f64) -> Partition<T> {
    let p = key(&list[0]);
    let mut arr = list.to_vec();
    let mut i = 0;
    let mut swaps = 0;
    for j in 1..arr.len() {
        if key(&arr[j]) < p {
            i += 1;
            arr.swap(i, j);
            swaps += 1;
        }
    }
    arr.swap(0, i);
    swaps += 1;
    let above = arr.split_off(i + 1);
    arr.truncate(i);
    Partition { below: arr, above, swaps }
}

fn stable_split<T: Copy>(list: &[T], key: impl Fn(&T) -> f64) -> Partition<T> {
    let p = key(&list[0]);
    let (below, above) = list[1..].iter().partition(|x| key(x) < p);
    Partition { below, above, swaps: 0 }
}

fn split(list: &[Tagged], scheme: PartitionScheme) -> Partition<Tagged> {
    let key = |t: &Tagged| t.v;
    match scheme {
        PartitionScheme::Hoare => hoare_partition(list, key),
        PartitionScheme::Lomuto => lomuto_partition(list, key),
        PartitionScheme::NoPartition => stable_split(list, key),
    }
}

/// Moves the member with the smallest original index to the front, keeping
/// the relative order of the others.
fn pivot_first(list: &mut [Tagged]) {
    let pos = (0..list.len()).min_by_key(|&i| list[i].idx).expect("nonempty sublist");
    list[..=pos].rotate_right(1);
}

fn tag(keys: &[f64]) -> Vec<Tagged> {
    keys.iter().enumerate().map(|(idx, &v)| Tagged { v, idx }).collect()
}

/// Cost of QuickVal on `keys` descending toward `alpha`.
pub fn quickval(
    keys: &[f64],
    alpha: f64,
    cost: &CostModel,
    scheme: PartitionScheme,
) -> Result<CostProfile, AlgoError> {
    validate_keys(keys)?;
    let mut list = tag(keys);
    let mut path = Path::root();
    let mut per_level = Vec::new();
    let mut pivot_path = Vec::new();
    let mut recording = true;
    while !list.is_empty() {
        pivot_first(&mut list);
        let piv = list[0];
        let mut beta = Vec::with_capacity(list.len() - 1);
        for x in &list[1..] {
            beta.push(cost.eval(piv.v, x.v)?);
        }
        let part = split(&list, scheme);
        per_level.push(LevelCost {
            comparisons: (list.len() - 1) as u64,
            swaps: part.swaps,
            beta_cost: crate::stats::compensated_sum(beta),
        });
        if recording {
            pivot_path.push(path);
        }
        let right = alpha >= piv.v;
        list = if right { part.above } else { part.below };
        if path.depth() < Path::MAX_DEPTH {
            path = path.child(u8::from(right));
        } else {
            recording = false;
        }
    }
    let totals = LevelCost {
        comparisons: per_level.iter().map(|l| l.comparisons).sum(),
        swaps: per_level.iter().map(|l| l.swaps).sum(),
        beta_cost: crate::stats::compensated_sum(per_level.iter().map(|l| l.beta_cost)),
    };
    Ok(CostProfile { n: keys.len(), alpha, scheme, per_level, totals, pivot_path })
}

/// The sublist met at node `target` while running on `keys`.
#[derive(Clone, Debug, PartialEq)]
pub struct SublistTrace {
    /// Original index (0-based) of the pivot of `target`.
    pub pivot: usize,
    /// Original indices of the other members, in working-array order.
    pub order: Vec<usize>,
    /// Swaps performed by the partition at `target`.
    pub swaps: u64,
}

/// Runs the partitions along `target` and reports the sublist found there,
/// or `None` if the sublist is empty.
pub fn sublist_at(
    keys: &[f64],
    target: &Path,
    scheme: PartitionScheme,
) -> Result<Option<SublistTrace>, AlgoError> {
    validate_keys(keys)?;
    let mut list = tag(keys);
    for level in 0..=target.depth() {
        if list.is_empty() {
            return Ok(None);
        }
        pivot_first(&mut list);
        let part = split(&list, scheme);
        if level == target.depth() {
            return Ok(Some(SublistTrace {
                pivot: list[0].idx,
                order: list[1..].iter().map(|t| t.idx).collect(),
                swaps: part.swaps,
            }));
        }
        list = if target.bit(level) == 1 { part.above } else { part.below };
    }
    unreachable!("loop returns at the target level")
}

/// Cost of FIND for rank `k` with first-arrival pivots. On a pivot hit the
/// search continues in the upper sublist with rank 0, and rank 0 always
/// descends into the lower sublist, until at most one key remains. Rank
/// `n + 1` is read as `n`.
pub fn find_rank(keys: &[f64], k: usize, cost: &CostModel) -> Result<f64, AlgoError> {
    validate_keys(keys)?;
    let n = keys.len();
    if k > n + 1 {
        return Err(AlgoError::RankOutOfRange { k, n, max: n + 1 });
    }
    let mut k = if k == n + 1 && n > 0 { n } else { k };
    let mut list = tag(keys);
    let mut total = Vec::new();
    while list.len() >= 2 {
        let piv = list[0];
        for x in &list[1..] {
            total.push(cost.eval(piv.v, x.v)?);
        }
        let Partition { below, above, .. } = stable_split(&list, |t| t.v);
        let r = below.len() + 1;
        if k == 0 || k < r {
            list = below;
        } else if k > r {
            k -= r;
            list = above;
        } else {
            k = 0;
            list = above;
        }
    }
    Ok(crate::stats::compensated_sum(total))
}

/// [`find_rank`] with rank 0 read as rank 1.
pub fn find_rank_conventional(keys: &[f64], k: usize, cost: &CostModel) -> Result<f64, AlgoError> {
    find_rank(keys, k.max(1).min(keys.len().max(1)), cost)
}

/// Piecewise-linear `Λ_n` through `(0,0)`, `(k/(n+1), U_(k))`, `(1,1)` and its
/// inverse `F̃_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTransform {
    knots: Vec<f64>,
}

impl QuantileTransform {
    pub fn new(keys: &[f64]) -> Result<Self, AlgoError> {
        validate_keys(keys)?;
        let mut knots = Vec::with_capacity(keys.len() + 2);
        knots.push(0.0);
        knots.extend_from_slice(keys);
        knots[1..].sort_by(f64::total_cmp);
        knots.push(1.0);
        Ok(QuantileTransform { knots })
    }

    fn step(&self) -> f64 {
        1.0 / (self.knots.len() - 1) as f64
    }

    /// `Λ_n(t)`.
    pub fn lambda(&self, t: f64) -> f64 {
        let m = self.knots.len() - 1;
        let x = t.clamp(0.0, 1.0) * m as f64;
        let i = (x.floor() as usize).min(m - 1);
        let w = x - i as f64;
        self.knots[i] + w * (self.knots[i + 1] - self.knots[i])
    }

    /// `F̃_n(a) = Λ_n^{-1}(a)`.
    pub fn inverse(&self, a: f64) -> f64 {
        let a = a.clamp(0.0, 1.0);
        let m = self.knots.len() - 1;
        let i = self.knots.partition_point(|&y| y <= a).clamp(1, m) - 1;
        let w = (a - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
        ((i as f64 + w) / m as f64).min(1.0)
    }

    /// `sup_t |F̃_n(t) − t|`, attained at a knot.
    pub fn sup_deviation(&self) -> f64 {
        let h = self.step();
        self.knots.iter().enumerate().map(|(k, &y)| (k as f64 * h - y).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tree::IntervalTree;
    use proptest::prelude::*;

    const FIX1: [f64; 3] = [0.5, 0.25, 0.75];

    fn unit() -> CostModel {
        CostModel::unit()
    }

    #[test]
    fn quickval_on_fixture() {
        let prof = quickval(&FIX1, 0.3, &unit(), PartitionScheme::NoPartition).unwrap();
        let comps: Vec<u64> = prof.per_level.iter().map(|l| l.comparisons).collect();
        assert_eq!(comps, vec![2, 0]);
        assert_eq!(prof.totals.comparisons, 2);
        assert_eq!(prof.pivot_path[1].to_word(), "0");
        let single = quickval(&[0.4], 0.9, &unit(), PartitionScheme::Hoare).unwrap();
        assert_eq!(single.totals.comparisons, 0);
    }

    #[test]
    fn hoare_examples() {
        let prof = quickval(&[0.5, 0.8, 0.2], 0.9, &unit(), PartitionScheme::Hoare).unwrap();
        assert_eq!(prof.per_level[0].swaps, 1);
        let k = |x: &f64| *x;
        assert_eq!(hoare_partition(&[0.5, 0.8, 0.2], k).swaps, 1);
        assert_eq!(hoare_partition(&[0.5, 0.2, 0.8], k).swaps, 0);
        let p = hoare_partition(&[0.5, 0.9, 0.8, 0.1, 0.2, 0.7], k);
        assert_eq!((p.below.len(), p.swaps), (2, 2));
    }

    #[test]
    fn lomuto_examples() {
        let k = |x: &f64| *x;
        assert_eq!(lomuto_partition(&[0.5, 0.8, 0.2], k).swaps, 2);
        assert_eq!(lomuto_partition(&[0.5, 0.8, 0.9], k).swaps, 1);
        assert_eq!(lomuto_partition(&[0.5], k).swaps, 1);
    }

    #[test]
    fn bit_cost_examples() {
        assert_eq!(bit_cost(0.5, 0.25).unwrap(), 1);
        assert_eq!(bit_cost(0.75, 0.625).unwrap(), 2);
        assert!(matches!(bit_cost(0.3, 0.3), Err(CostError::EqualKeys(_))));
        let base = 2f64.powi(-10);
        assert_eq!(bit_cost(base, base + 2f64.powi(-60)).unwrap(), 60);
        assert_eq!(bit_cost(0.5, 0.5 + 2f64.powi(-53)).unwrap(), 53);
    }

    #[test]
    fn bit_cost_tail_is_geometric() {
        let mut r = rng::stream(11, 0);
        let n = 200_000;
        for &u in &[0.5, 0.123, 0.871] {
            let xs: Vec<u32> = (0..n).map(|_| bit_cost(u, rng::open01(&mut r)).unwrap()).collect();
            for x in 1..=8u32 {
                let frac = xs.iter().filter(|&&c| c >= x).count() as f64 / n as f64;
                let bound = 2f64.powi(1 - x as i32);
                let se = (bound / n as f64).sqrt();
                assert!(frac <= bound + 4.0 * se, "u={u} x={x} frac={frac}");
            }
        }
    }

    #[test]
    fn declared_tameness_covers_bit_cost() {
        let m = CostModel::bit_comparisons();
        let Tameness::Tame { c, eps } = m.tameness else { panic!() };
        assert_eq!(eps, 0.2);
        for x in 1..200 {
            let x = x as f64;
            assert!(2f64.powf(1.0 - x) <= c * x.powf(-1.0 / eps) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn custom_cost_rejects_non_finite() {
        let m = CostModel::custom(|u, v| 1.0 / (u - v).abs() - 1e300 * 1e300, Tameness::Untamed);
        assert!(matches!(m.eval(0.2, 0.3), Err(CostError::NonFinite { .. })));
    }

    #[test]
    fn find_rank_examples() {
        assert_eq!(find_rank(&FIX1, 2, &unit()).unwrap(), 2.0);
        assert_eq!(find_rank(&[0.3], 1, &unit()).unwrap(), 0.0);
        assert!(matches!(find_rank(&FIX1, 5, &unit()), Err(AlgoError::RankOutOfRange { .. })));
        assert_eq!(find_rank(&FIX1, 4, &unit()).unwrap(), find_rank(&FIX1, 3, &unit()).unwrap());
        // Rank 0 runs down the left spine; rank 1 may not.
        let keys = [0.5, 0.7, 0.9];
        assert_eq!(find_rank(&keys, 0, &unit()).unwrap(), 2.0);
        assert_eq!(find_rank_conventional(&keys, 0, &unit()).unwrap(), 3.0);
    }

    #[test]
    fn quantile_transform_examples() {
        let q = QuantileTransform::new(&FIX1).unwrap();
        assert_eq!(q.lambda(0.25), 0.25);
        assert_eq!(q.lambda(0.5), 0.5);
        assert_eq!(q.lambda(0.75), 0.75);
        let q1 = QuantileTransform::new(&[0.3]).unwrap();
        assert_eq!(q1.lambda(0.5), 0.3);
    }

    #[test]
    fn quantile_transform_approaches_identity() {
        let mut r = rng::stream(2, 0);
        let mut last = f64::INFINITY;
        for &n in &[100usize, 1_000, 10_000] {
            let q = QuantileTransform::new(&rng::uniform_keys(&mut r, n)).unwrap();
            let d = q.sup_deviation();
            assert!(d < 2.0 / (n as f64).sqrt(), "n={n} d={d}");
            assert!(d < last);
            last = d;
        }
    }

    proptest! {
        #[test]
        fn partitions_preserve_multisets(seed in 0u64..5_000, n in 1usize..40) {
            let keys = rng::uniform_keys(&mut rng::stream(seed, 0), n);
            let k = |x: &f64| *x;
            for part in [hoare_partition(&keys, k), lomuto_partition(&keys, k)] {
                prop_assert!(part.below.iter().all(|&x| x < keys[0]));
                prop_assert!(part.above.iter().all(|&x| x > keys[0]));
                let mut all: Vec<f64> = part.below.iter().chain(&part.above).copied().collect();
                all.push(keys[0]);
                all.sort_by(f64::total_cmp);
                let mut want = keys.clone();
                want.sort_by(f64::total_cmp);
                prop_assert_eq!(all, want);
            }
            let lo = lomuto_partition(&keys, k);
            prop_assert_eq!(lo.swaps, lo.below.len() as u64 + 1);
            let ho = hoare_partition(&keys, k);
            let m = ho.below.len();
            let misplaced = keys[1..=m].iter().filter(|&&x| x > keys[0]).count() as u64;
            prop_assert_eq!(ho.swaps, misplaced);
        }

        #[test]
        fn quickval_levels_match_tree_counts(seed in 0u64..5_000, n in 1usize..80, alpha in 0.0f64..1.0) {
            let keys = rng::uniform_keys(&mut rng::stream(seed, 1), n);
            let prof = quickval(&keys, alpha, &unit(), PartitionScheme::Hoare).unwrap();
            let depth = prof.per_level.len().min(crate::tree::MAX_TREE_DEPTH);
            let tree = IntervalTree::build(&keys, depth).unwrap();
            for (k, lvl) in prof.per_level.iter().enumerate().take(depth + 1) {
                let node = tree.node(&tree.path_of(alpha, k).unwrap()).unwrap();
                let tau = node.tau.unwrap();
                let direct = keys.iter().enumerate()
                    .filter(|&(i, &u)| i + 1 > tau && node.l < u && u < node.r).count() as u64;
                prop_assert_eq!(lvl.comparisons, direct);
                prop_assert_eq!(prof.pivot_path[k], tree.path_of(alpha, k).unwrap());
            }
            prop_assert_eq!(prof.totals.comparisons, prof.per_level.iter().map(|l| l.comparisons).sum::<u64>());
            prop_assert!((prof.totals.beta_cost - prof.totals.comparisons as f64).abs() < 1e-9);
        }

        #[test]
        fn bit_cost_symmetric(u in 1e-9f64..1.0, v in 1e-9f64..1.0) {
            prop_assume!(u != v && u < 1.0 && v < 1.0);
            let c = bit_cost(u, v).unwrap();
            prop_assert_eq!(c, bit_cost(v, u).unwrap());
            prop_assert!(c >= 1);
        }

        #[test]
        fn quantile_floor_identity(seed in 0u64..5_000, n in 1usize..50, alpha in 0.0f64..1.0) {
            let keys = rng::uniform_keys(&mut rng::stream(seed, 2), n);
            let q = QuantileTransform::new(&keys).unwrap();
            let count = keys.iter().filter(|&&u| u <= alpha).count();
            prop_assert_eq!(((n + 1) as f64 * q.inverse(alpha)).floor() as usize, count);
            let t = q.inverse(alpha);
            prop_assert!((q.lambda(t) - alpha).abs() < 1e-12);
        }
    }
}
