//! Perturbation coupling and residual processes.
//!
//! Every key `U_i` is re-drawn uniformly inside the interval of the node it
//! is inserted at, giving `Ũ_i`. Counts of `Ũ` per interval are binomial given
//! the tree, and they differ from the QuickVal comparison counts by at most
//! the number of pivots above the node.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::algorithms::{sublist_at, AlgoError, PartitionScheme};
use crate::cadlag::StepFunction;
use crate::rng;
use crate::tree::{IntervalTree, Path, TreeError};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("{keys} keys but {aux} auxiliary uniforms")]
    LengthMismatch { keys: usize, aux: usize },
    #[error("auxiliary uniform {index} = {value} is not inside [0,1)")]
    AuxOutOfRange { index: usize, value: f64 },
    #[error("key {index} is inserted below depth {}", Path::MAX_DEPTH)]
    TooDeep { index: usize },
    #[error("no node at level {level} on the path of {alpha}: interval below 2^-62 resolution")]
    InsufficientDepth { alpha: f64, level: usize },
    #[error("fixed tree lacks a pivot at level {level} (needs every level below {depth})")]
    IncompleteTree { level: usize, depth: usize },
    #[error("requested depth {requested} exceeds the tree depth {available}")]
    DepthBeyondTree { requested: usize, available: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Algo(#[from] AlgoError),
}

const NONE: u32 = u32::MAX;

/// Keys, their insertion nodes `φ_i` and perturbed values `Ũ_i`.
#[derive(Clone, Debug)]
pub struct PerturbedSample {
    pub keys: Vec<f64>,
    pub aux: Vec<f64>,
    pub nodes: Vec<Path>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub perturbed: Vec<f64>,
    children: Vec<[u32; 2]>,
    parent: Vec<u32>,
}

impl PerturbedSample {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Inserts the keys into a binary search tree, recording for each key its
/// insertion node and interval, then sets `Ũ_i = L_{φ_i} + I_{φ_i}·V_i`.
pub fn perturb(keys: &[f64], aux: &[f64]) -> Result<PerturbedSample, CouplingError> {
    if keys.len() != aux.len() {
        return Err(CouplingError::LengthMismatch { keys: keys.len(), aux: aux.len() });
    }
    crate::tree::validate_keys(keys)?;
    if let Some((i, &v)) = aux.iter().enumerate().find(|(_, v)| !(0.0..1.0).contains(*v)) {
        return Err(CouplingError::AuxOutOfRange { index: i + 1, value: v });
    }
    let n = keys.len();
    let mut children = vec![[NONE; 2]; n];
    let mut parent = vec![NONE; n];
    let mut nodes = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for (i, &u) in keys.iter().enumerate() {
        let (mut l, mut r) = (0.0, 1.0);
        let mut path = Path::root();
        if i > 0 {
            let mut v = 0usize;
            loop {
                if path.depth() == Path::MAX_DEPTH {
                    return Err(CouplingError::TooDeep { index: i + 1 });
                }
                let b = usize::from(u >= keys[v]);
                if b == 1 {
                    l = keys[v];
                } else {
                    r = keys[v];
                }
                path = path.child(b as u8);
                let c = children[v][b];
                if c == NONE {
                    children[v][b] = i as u32;
                    parent[i] = v as u32;
                    break;
                }
                v = c as usize;
            }
        }
        nodes.push(path);
        lower.push(l);
        upper.push(r);
    }
    let perturbed = (0..n).map(|i| lower[i] + (upper[i] - lower[i]) * aux[i]).collect();
    Ok(PerturbedSample { keys: keys.to_vec(), aux: aux.to_vec(), nodes, lower, upper, perturbed, children, parent })
}

/// `perturb` with auxiliary uniforms drawn from `rng`.
pub fn perturb_with<R: Rng + ?Sized>(keys: &[f64], rng: &mut R) -> Result<PerturbedSample, CouplingError> {
    let aux: Vec<f64> = (0..keys.len()).map(|_| rng.random::<f64>()).collect();
    perturb(keys, &aux)
}

/// Source of pivots for nodes that no key of the sample has reached yet.
#[derive(Clone, Copy, Debug)]
pub enum Completion<'t> {
    /// Uniform pivots derived from `(seed, node)` by a counter-based stream,
    /// so every query of the same node sees the same pivot.
    Hashed { seed: u64 },
    /// Pivots of a fixed tree the sample was conditioned on, hashed below it.
    Fixed { tree: &'t IntervalTree, seed: u64 },
}

impl Completion<'_> {
    fn pivot(&self, path: &Path, l: f64, r: f64) -> f64 {
        let seed = match *self {
            Completion::Fixed { tree, seed } => {
                if let Some(p) = tree.node(path).and_then(|n| n.pivot) {
                    return p;
                }
                seed
            }
            Completion::Hashed { seed } => seed,
        };
        let mut g = rng::stream(seed, path.heap_index() as u64);
        l + (r - l) * rng::open01(&mut g)
    }
}

/// Node of the (completed) tree as seen from a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelNode {
    pub path: Path,
    pub l: f64,
    pub r: f64,
    pub pivot: f64,
    /// `τ_φ` when it is at most `n`.
    pub tau: Option<usize>,
}

impl LevelNode {
    pub fn len(&self) -> f64 {
        self.r - self.l
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelCounts {
    /// `S_{φ,n}`: keys after `τ_φ` inside the interval.
    pub s: u64,
    /// `S̃_{φ,n}`: perturbed keys inside the interval.
    pub s_tilde: u64,
}

/// Read-only index over a sample: subtree sizes, sorted `Ũ` and completion.
pub struct CouplingView<'a> {
    sample: &'a PerturbedSample,
    completion: Completion<'a>,
    size: Vec<u32>,
    sorted: Vec<f64>,
}

impl<'a> CouplingView<'a> {
    pub fn new(sample: &'a PerturbedSample, completion: Completion<'a>) -> Self {
        let n = sample.len();
        let mut size = vec![1u32; n];
        for i in (1..n).rev() {
            let p = sample.parent[i] as usize;
            size[p] += size[i];
        }
        let mut sorted = sample.perturbed.clone();
        sorted.sort_by(f64::total_cmp);
        CouplingView { sample, completion, size, sorted }
    }

    pub fn n(&self) -> usize {
        self.sample.len()
    }

    pub fn sample(&self) -> &PerturbedSample {
        self.sample
    }

    pub fn root(&self) -> LevelNode {
        let path = Path::root();
        if self.n() > 0 {
            LevelNode { path, l: 0.0, r: 1.0, pivot: self.sample.keys[0], tau: Some(1) }
        } else {
            LevelNode { path, l: 0.0, r: 1.0, pivot: self.completion.pivot(&path, 0.0, 1.0), tau: None }
        }
    }

    /// Child `b` of `node`, or `None` below the representable depth.
    pub fn child(&self, node: &LevelNode, b: u8) -> Option<LevelNode> {
        if node.path.depth() >= Path::MAX_DEPTH - 1 {
            return None;
        }
        let (l, r) = if b == 1 { (node.pivot, node.r) } else { (node.l, node.pivot) };
        let path = node.path.child(b);
        let key = node
            .tau
            .map(|t| self.sample.children[t - 1][usize::from(b)])
            .filter(|&c| c != NONE);
        Some(match key {
            Some(c) => LevelNode { path, l, r, pivot: self.sample.keys[c as usize], tau: Some(c as usize + 1) },
            None => LevelNode { path, l, r, pivot: self.completion.pivot(&path, l, r), tau: None },
        })
    }

    /// `φ(α,0), …, φ(α,depth)`.
    pub fn walk(&self, alpha: f64, depth: usize) -> Result<Vec<LevelNode>, CouplingError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(TreeError::AlphaOutOfRange(alpha).into());
        }
        let mut out = Vec::with_capacity(depth + 1);
        let mut node = self.root();
        out.push(node);
        for level in 1..=depth {
            node = self
                .child(&node, u8::from(alpha >= node.pivot))
                .ok_or(CouplingError::InsufficientDepth { alpha, level })?;
            out.push(node);
        }
        Ok(out)
    }

    pub fn node_at(&self, path: &Path) -> Result<LevelNode, CouplingError> {
        let mut node = self.root();
        for i in 0..path.depth() {
            node = self
                .child(&node, path.bit(i))
                .ok_or(CouplingError::InsufficientDepth { alpha: node.l, level: i + 1 })?;
        }
        Ok(node)
    }

    pub fn s(&self, node: &LevelNode) -> u64 {
        node.tau.map_or(0, |t| u64::from(self.size[t - 1]) - 1)
    }

    pub fn s_tilde(&self, node: &LevelNode) -> u64 {
        let lo = self.sorted.partition_point(|&x| x < node.l);
        let hi = self.sorted.partition_point(|&x| x < node.r);
        (hi - lo) as u64
    }

    pub fn counts(&self, node: &LevelNode) -> LevelCounts {
        LevelCounts { s: self.s(node), s_tilde: self.s_tilde(node) }
    }

    /// `(S_{α,k,n}, S̃_{α,k,n})`.
    pub fn level_counts(&self, alpha: f64, k: usize) -> Result<LevelCounts, CouplingError> {
        let path = self.walk(alpha, k)?;
        Ok(self.counts(&path[k]))
    }

    /// All nodes of levels `0..=depth`, each level ordered left to right.
    pub fn levels(&self, depth: usize) -> Result<Vec<Vec<LevelNode>>, CouplingError> {
        let mut out = vec![vec![self.root()]];
        for level in 1..=depth {
            let prev = &out[level - 1];
            let mut next = Vec::with_capacity(prev.len() * 2);
            for node in prev {
                for b in 0..2 {
                    next.push(
                        self.child(node, b).ok_or(CouplingError::InsufficientDepth { alpha: node.l, level })?,
                    );
                }
            }
            out.push(next);
        }
        Ok(out)
    }
}

/// `(S_{α,k,n}, S̃_{α,k,n})` for a sample, completing unreached nodes by hashing.
pub fn level_counts(sample: &PerturbedSample, alpha: f64, k: usize, seed: u64) -> Result<LevelCounts, CouplingError> {
    CouplingView::new(sample, Completion::Hashed { seed }).level_counts(alpha, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapCounts {
    /// Hoare swaps at the node.
    pub k: u64,
    /// Perturbed analogue: `Ũ` above the pivot among the first `S̃_{φ0,n}`
    /// entries of the extended comparison order.
    pub k_tilde: u64,
}

/// `K_{φ,n}` and `K̃_{φ,n}`. The comparison order is the working order met by
/// Hoare's partition at `φ`; perturbed-only indices are appended in original
/// index order. Both are 0 when `τ_φ > n`.
pub fn swap_counts_perturbed(view: &CouplingView<'_>, path: &Path) -> Result<SwapCounts, CouplingError> {
    let node = view.node_at(path)?;
    if node.tau.is_none() {
        return Ok(SwapCounts { k: 0, k_tilde: 0 });
    }
    let sample = view.sample();
    let trace = sublist_at(&sample.keys, path, PartitionScheme::Hoare)?
        .expect("a populated node has a nonempty sublist");
    let mut order = trace.order.clone();
    let mut member = vec![false; sample.len()];
    for &i in &order {
        member[i] = true;
    }
    let inside = |x: f64| x >= node.l && x < node.r;
    order.extend((0..sample.len()).filter(|&i| !member[i] && inside(sample.perturbed[i])));
    let left = view.child(&node, 0).ok_or(CouplingError::InsufficientDepth { alpha: node.l, level: path.depth() + 1 })?;
    let first = view.s_tilde(&left) as usize;
    let k_tilde = order.iter().take(first).filter(|&&i| sample.perturbed[i] >= node.pivot).count() as u64;
    Ok(SwapCounts { k: trace.swaps, k_tilde })
}

/// `G_{·,k,n}` and `W_{·,k,n}` for `k ≤ K` as exact step functions, and their
/// sums `G^{≤K}_n`, `W^{≤K}_n`.
#[derive(Clone, Debug)]
pub struct ResidualProcess {
    pub n: usize,
    pub depth: usize,
    pub g_levels: Vec<StepFunction>,
    pub w_levels: Vec<StepFunction>,
    pub g: StepFunction,
    pub w: StepFunction,
}

/// Exact residual processes up to level `depth`.
pub fn residual_process(view: &CouplingView<'_>, depth: usize) -> Result<ResidualProcess, CouplingError> {
    let n = view.n();
    let nf = n as f64;
    let scale = nf.sqrt().max(1.0);
    let levels = view.levels(depth)?;
    let mut g_levels = Vec::with_capacity(depth + 1);
    let mut w_levels = Vec::with_capacity(depth + 1);
    for nodes in &levels {
        let mut g_cells = Vec::with_capacity(nodes.len());
        let mut w_cells = Vec::with_capacity(nodes.len());
        for node in nodes.iter().filter(|nd| nd.r > nd.l) {
            let c = view.counts(node);
            g_cells.push((node.l, (c.s as f64 - nf * node.len()) / scale));
            w_cells.push((node.l, (c.s_tilde as f64 - nf * node.len()) / scale));
        }
        g_levels.push(StepFunction::from_cells(&g_cells).expect("level cells tile [0,1)"));
        w_levels.push(StepFunction::from_cells(&w_cells).expect("level cells tile [0,1)"));
    }
    let sum = |fs: &[StepFunction]| fs[1..].iter().fold(fs[0].clone(), |acc, f| acc.add(f)).normalize();
    let g = sum(&g_levels);
    let w = sum(&w_levels);
    Ok(ResidualProcess { n, depth, g_levels, w_levels, g, w })
}

/// Interval length below which the tail of a path is dropped.
pub const TAIL_CUTOFF: f64 = 1e-13;

/// `G^{>K}_{α,n}` at each `α` of `grid`, descending the completed tree until
/// the interval is shorter than [`TAIL_CUTOFF`].
pub fn tail_on_grid(view: &CouplingView<'_>, depth: usize, grid: &[f64]) -> Result<Vec<f64>, CouplingError> {
    let nf = view.n() as f64;
    let scale = nf.sqrt().max(1.0);
    grid.iter()
        .map(|&alpha| {
            let path = view.walk(alpha, depth)?;
            let mut node = path[depth];
            let mut acc = 0.0;
            while let Some(next) = view.child(&node, u8::from(alpha >= node.pivot)) {
                node = next;
                acc += view.s(&node) as f64 - nf * node.len();
                if node.len() < TAIL_CUTOFF && node.tau.is_none() {
                    break;
                }
            }
            Ok(acc / scale)
        })
        .collect()
}

fn check_complete(tree: &IntervalTree, depth: usize) -> Result<(), CouplingError> {
    if depth > tree.depth() {
        return Err(CouplingError::DepthBeyondTree { requested: depth, available: tree.depth() });
    }
    for level in 0..depth {
        if tree.level_nodes(level).count() != 1 << level || tree.level_nodes(level).any(|(_, n)| n.pivot.is_none()) {
            return Err(CouplingError::IncompleteTree { level, depth });
        }
    }
    Ok(())
}

/// Keys `U_1, …, U_n` drawn conditionally on the pivots of `tree`: each key
/// starts as a uniform `W_i` and walks down the tree; if it reaches a node
/// whose pivot is fixed and that no earlier key reached, it becomes that
/// pivot, otherwise it keeps the value `W_i`.
pub fn conditioned_keys<R: Rng + ?Sized>(tree: &IntervalTree, n: usize, rng: &mut R) -> Vec<f64> {
    let mut reached = vec![false; 1 << (tree.depth() + 1)];
    (0..n)
        .map(|_| {
            let w = rng::open01(rng);
            let mut p = Path::root();
            loop {
                let Some(node) = tree.node(&p) else { return w };
                let Some(pivot) = node.pivot else { return w };
                let idx = p.heap_index();
                if !reached[idx] {
                    reached[idx] = true;
                    return pivot;
                }
                if p.depth() == tree.depth() {
                    return w;
                }
                p = p.child(u8::from(w >= pivot));
            }
        })
        .collect()
}

/// `G^{≤K}_n` on the `2^K` level-`K` cells of a fixed tree.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResidual {
    pub depth: usize,
    /// Value on the `j`-th level-`K` cell from the left.
    pub values: Vec<f64>,
}

impl CellResidual {
    pub fn at(&self, tree: &IntervalTree, alpha: f64) -> Result<f64, CouplingError> {
        let p = tree.path_of(alpha, self.depth)?;
        Ok(self.values[p.heap_index() - (1 << self.depth)])
    }
}

/// Samples `G^{≤K}_n` given the fixed tree, which must carry pivots on every
/// level below `depth`. Keys are simulated one by one (as in
/// [`conditioned_keys`]) until every node of levels `≤ depth` has been
/// reached; the remaining keys are uniform and are split down the tree by
/// binomial draws.
pub fn fixed_tree_residual<R: Rng + ?Sized>(
    tree: &IntervalTree,
    depth: usize,
    n: usize,
    rng: &mut R,
) -> Result<CellResidual, CouplingError> {
    check_complete(tree, depth)?;
    let size = 1usize << (depth + 1);
    let mut reached = vec![false; size];
    let mut s = vec![0u64; size];
    let mut pending = size - 1;
    let mut used = 0;
    while used < n && pending > 0 {
        used += 1;
        let w = rng::open01(rng);
        let mut p = Path::root();
        loop {
            let idx = p.heap_index();
            if !reached[idx] {
                reached[idx] = true;
                pending -= 1;
                break;
            }
            s[idx] += 1;
            if p.depth() == depth {
                break;
            }
            let pivot = tree.node(&p).and_then(|nd| nd.pivot).expect("checked complete");
            p = p.child(u8::from(w >= pivot));
        }
    }
    let mut counts = vec![0u64; size];
    counts[1] = (n - used) as u64;
    for idx in 1..(size >> 1) {
        let c = counts[idx];
        let p = Path::from_heap_index(idx);
        let node = tree.node(&p).expect("complete level");
        let left = tree.node(&p.child(0)).expect("complete level").len();
        let frac = (left / node.len()).clamp(0.0, 1.0);
        let k = if c == 0 { 0 } else { Binomial::new(c, frac).expect("probability in [0,1]").sample(rng) };
        counts[2 * idx] = k;
        counts[2 * idx + 1] = c - k;
    }
    let nf = n as f64;
    let scale = nf.sqrt().max(1.0);
    let mut contrib = vec![0.0; size];
    for idx in 1..size {
        let len = tree.node(&Path::from_heap_index(idx)).expect("complete level").len();
        contrib[idx] = ((s[idx] + counts[idx]) as f64 - nf * len) / scale;
    }
    let values = ((1 << depth)..size)
        .map(|leaf| {
            let mut idx = leaf;
            let mut acc = 0.0;
            while idx >= 1 {
                acc += contrib[idx];
                idx >>= 1;
            }
            acc
        })
        .collect();
    Ok(CellResidual { depth, values })
}

/// `E[G^{≤K}_n(α) | tree]` once every node of levels `≤ K` has been reached:
/// the key that becomes the pivot of `φ(α,j)` is uniform on `I_{α,j}` and
/// is missing from every deeper count, so
/// `E S_{α,k} = n I_{α,k} − Σ_{j≤k} I_{α,k}/I_{α,j}`.
pub fn finite_n_centering(tree: &IntervalTree, alpha: f64, depth: usize, n: usize) -> Result<f64, CouplingError> {
    let lens = tree.lengths(alpha, depth)?;
    let missing = (0..=depth).flat_map(|k| (0..=k).map(move |j| (k, j))).map(|(k, j)| lens[k] / lens[j]);
    Ok(-crate::stats::compensated_sum(missing) / (n as f64).sqrt().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::quickval;
    use crate::algorithms::CostModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sample(seed: u64, n: usize) -> PerturbedSample {
        let mut r = rng::stream(seed, 0);
        let keys = rng::uniform_keys(&mut r, n);
        perturb_with(&keys, &mut r).unwrap()
    }

    #[test]
    fn perturb_examples() {
        let s = perturb(&[0.5], &[0.3]).unwrap();
        assert_eq!(s.perturbed, vec![0.3]);
        let s = perturb(&[0.5, 0.25], &[0.9, 0.5]).unwrap();
        assert_eq!(s.nodes[1], "0".parse().unwrap());
        assert_eq!(s.perturbed[1], 0.25);
        assert!(matches!(perturb(&[0.5], &[]), Err(CouplingError::LengthMismatch { .. })));
        assert!(perturb(&[0.5], &[1.0]).is_err());
    }

    #[test]
    fn insertion_intervals_contain_both_values() {
        let s = sample(1, 2_000);
        for i in 0..s.len() {
            assert!(s.lower[i] <= s.keys[i] && s.keys[i] < s.upper[i]);
            assert!(s.lower[i] <= s.perturbed[i] && s.perturbed[i] < s.upper[i]);
        }
    }

    #[test]
    fn tau_of_insertion_node_is_own_index() {
        let s = sample(2, 500);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 0 });
        for i in 0..s.len() {
            assert_eq!(view.node_at(&s.nodes[i]).unwrap().tau, Some(i + 1));
        }
    }

    #[test]
    fn level_counts_match_quickval_comparisons() {
        let s = sample(3, 300);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 0 });
        for &alpha in &[0.0, 0.2, 0.5, 0.77, 1.0] {
            let prof = quickval(&s.keys, alpha, &CostModel::unit(), PartitionScheme::NoPartition).unwrap();
            for (k, lc) in prof.per_level.iter().enumerate() {
                assert_eq!(view.level_counts(alpha, k).unwrap().s, lc.comparisons, "alpha={alpha} k={k}");
            }
        }
    }

    #[test]
    fn count_is_zero_at_tau() {
        let s = sample(4, 200);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 0 });
        let last = s.nodes[199];
        let node = view.node_at(&last).unwrap();
        assert_eq!(node.tau, Some(200));
        assert_eq!(view.s(&node), 0);
    }

    #[test]
    fn unreached_nodes_have_zero_count_and_stable_pivots() {
        let s = sample(5, 50);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 9 });
        let deep = view.walk(0.123, 20).unwrap();
        let again = view.walk(0.123, 20).unwrap();
        assert_eq!(deep, again);
        let unreached = deep.iter().find(|nd| nd.tau.is_none()).expect("50 keys cannot reach depth 20");
        assert_eq!(view.s(unreached), 0);
    }

    #[test]
    fn root_residual_at_level_zero() {
        let s = sample(6, 400);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 0 });
        let rp = residual_process(&view, 0).unwrap();
        assert_abs_diff_eq!(rp.g.eval(0.4), -1.0 / 20.0, epsilon = 1e-15);
        assert!(rp.g.jumps().is_empty());
    }

    #[test]
    fn residual_jumps_are_upper_pivots() {
        let s = sample(7, 1_000);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 1 });
        let k = 5;
        let rp = residual_process(&view, k).unwrap();
        let levels = view.levels(k - 1).unwrap();
        let pivots: Vec<f64> = levels.iter().flatten().map(|nd| nd.pivot).collect();
        for j in rp.g.jumps() {
            assert!(pivots.contains(j), "jump {j} is not a pivot above level {k}");
        }
    }

    #[test]
    fn residual_matches_pointwise_definition() {
        let s = sample(8, 700);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 2 });
        let rp = residual_process(&view, 4).unwrap();
        for &alpha in &[0.05, 0.31, 0.5, 0.93] {
            let path = view.walk(alpha, 4).unwrap();
            let direct: f64 = path.iter().map(|nd| (view.s(nd) as f64 - 700.0 * nd.len()) / 700f64.sqrt()).sum();
            assert_abs_diff_eq!(rp.g.eval(alpha), direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn tail_plus_head_is_full_residual() {
        let s = sample(9, 2_000);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 3 });
        let grid = [0.1, 0.45, 0.8];
        let head = residual_process(&view, 3).unwrap();
        let t3 = tail_on_grid(&view, 3, &grid).unwrap();
        let t0 = tail_on_grid(&view, 0, &grid).unwrap();
        let root = residual_process(&view, 0).unwrap();
        for (i, &a) in grid.iter().enumerate() {
            assert_abs_diff_eq!(head.g.eval(a) + t3[i], root.g.eval(a) + t0[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn full_residual_uses_all_comparisons() {
        // Σ_k S_{α,k,n} over all levels is the QuickVal comparison count.
        let s = sample(10, 1_500);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 4 });
        let alpha = 0.6;
        let t = tail_on_grid(&view, 0, &[alpha]).unwrap()[0];
        let g0 = residual_process(&view, 0).unwrap().g.eval(alpha);
        let prof = quickval(&s.keys, alpha, &CostModel::unit(), PartitionScheme::NoPartition).unwrap();
        let path = view.walk(alpha, 60).unwrap();
        let limit: f64 = path.iter().map(|nd| nd.len()).sum();
        let direct = (prof.totals.comparisons as f64 - 1_500.0 * limit) / 1_500f64.sqrt();
        assert_abs_diff_eq!(g0 + t, direct, epsilon = 1e-6);
    }

    #[test]
    fn swap_counts_below_tau_are_zero() {
        let s = sample(11, 30);
        let view = CouplingView::new(&s, Completion::Hashed { seed: 0 });
        let p: Path = "0101010101".parse().unwrap();
        assert_eq!(swap_counts_perturbed(&view, &p).unwrap(), SwapCounts { k: 0, k_tilde: 0 });
    }

    #[test]
    fn conditioned_keys_respect_fixed_pivots() {
        let t = IntervalTree::midpoint(3);
        let mut r = rng::stream(12, 0);
        for _ in 0..50 {
            let keys = conditioned_keys(&t, 200, &mut r);
            let built = IntervalTree::build(&keys, 2).unwrap();
            for (p, nd) in built.nodes() {
                if p.depth() < 3 {
                    assert_eq!(nd.pivot, t.node(&p).unwrap().pivot);
                }
            }
        }
    }

    #[test]
    fn fixed_tree_residual_rejects_incomplete_trees() {
        let t = IntervalTree::midpoint(2);
        let mut r = rng::stream(13, 0);
        assert!(fixed_tree_residual(&t, 2, 100, &mut r).is_ok());
        assert!(matches!(fixed_tree_residual(&t, 3, 100, &mut r), Err(CouplingError::DepthBeyondTree { .. })));
        let sparse = IntervalTree::build(&[0.5], 2).unwrap();
        assert!(matches!(fixed_tree_residual(&sparse, 2, 100, &mut r), Err(CouplingError::IncompleteTree { .. })));
    }

    #[test]
    fn fixed_tree_residual_agrees_with_key_simulation_in_mean() {
        // Both routes estimate E[G^{≤2}_n(α) | tree]; compare sample means.
        let t = IntervalTree::midpoint(3);
        let (n, reps) = (300, 4_000);
        let mut r = rng::stream(14, 0);
        let mut fast = Vec::new();
        let mut slow = Vec::new();
        for _ in 0..reps {
            fast.push(fixed_tree_residual(&t, 2, n, &mut r).unwrap().at(&t, 0.3).unwrap());
            let keys = conditioned_keys(&t, n, &mut r);
            let s = perturb_with(&keys, &mut r).unwrap();
            let view = CouplingView::new(&s, Completion::Fixed { tree: &t, seed: 0 });
            slow.push(residual_process(&view, 2).unwrap().g.eval(0.3));
        }
        let (mf, sf) = crate::stats::mean_se(&fast);
        let (ms, ss) = crate::stats::mean_se(&slow);
        assert!((mf - ms).abs() < 4.0 * (sf * sf + ss * ss).sqrt(), "{mf} vs {ms}");
    }

    #[test]
    fn finite_n_centering_matches_simulated_mean() {
        let t = IntervalTree::midpoint(3);
        assert_abs_diff_eq!(finite_n_centering(&t, 0.3, 0, 100).unwrap(), -0.1, epsilon = 1e-15);
        // Lengths 1, 1/2, 1/4: 1 + (1/2 + 1) + (1/4 + 1/2 + 1) = 4.25.
        assert_abs_diff_eq!(finite_n_centering(&t, 0.3, 2, 100).unwrap(), -0.425, epsilon = 1e-12);
        let (n, reps) = (100, 40_000);
        let mut r = rng::stream(15, 0);
        let xs: Vec<f64> = (0..reps).map(|_| fixed_tree_residual(&t, 2, n, &mut r).unwrap().at(&t, 0.3).unwrap()).collect();
        let (m, se) = crate::stats::mean_se(&xs);
        assert!((m + 0.425).abs() < 4.0 * se, "{m} ± {se}");
    }

    proptest! {
        #[test]
        fn sandwich_holds_on_every_level(seed in 0u64..2_000, n in 1usize..400) {
            let s = sample(seed, n);
            let view = CouplingView::new(&s, Completion::Hashed { seed });
            for &alpha in &[0.0, 0.1, 0.37, 0.5, 0.81, 1.0] {
                for (k, node) in view.walk(alpha, 8).unwrap().iter().enumerate() {
                    let c = view.counts(node);
                    let mid = c.s_tilde.saturating_sub(1);
                    prop_assert!(c.s <= mid && mid <= c.s + k as u64, "k={} {:?}", k, c);
                }
            }
        }

        #[test]
        fn swap_sandwich(seed in 0u64..2_000, n in 2usize..200, word in "[01]{0,4}") {
            let s = sample(seed, n);
            let view = CouplingView::new(&s, Completion::Hashed { seed });
            let p: Path = if word.is_empty() { Path::root() } else { word.parse().unwrap() };
            let c = swap_counts_perturbed(&view, &p).unwrap();
            prop_assert!(c.k <= c.k_tilde && c.k_tilde <= c.k + p.depth() as u64 + 1, "{:?}", c);
        }

        #[test]
        fn g_minus_w_within_level_bound(seed in 0u64..2_000, n in 1usize..500, depth in 0usize..7) {
            let s = sample(seed, n);
            let view = CouplingView::new(&s, Completion::Hashed { seed });
            let rp = residual_process(&view, depth).unwrap();
            let gap = crate::cadlag::sup_dist(&rp.g, &rp.w);
            let bound = ((depth + 1) * (depth + 2)) as f64 / 2.0 / (n as f64).sqrt();
            prop_assert!(gap <= bound + 1e-12, "gap {} bound {}", gap, bound);
        }

        #[test]
        fn equal_arguments_equal_residuals(seed in 0u64..2_000, alpha in 0.0f64..=1.0) {
            let s = sample(seed, 100);
            let view = CouplingView::new(&s, Completion::Hashed { seed });
            let a = tail_on_grid(&view, 2, &[alpha, alpha]).unwrap();
            prop_assert_eq!(a[0], a[1]);
        }
    }
}
