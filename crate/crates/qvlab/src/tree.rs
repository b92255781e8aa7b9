//! The interval process generated by the pivot sequence, truncated at depth K.
//!
//! Node `φ` carries `[L_φ, R_φ)`, the index `τ_φ` of the first key that fell
//! strictly inside it and that key's value (the pivot). Children split the
//! interval at the pivot: `φ0 = [L_φ, pivot)`, `φ1 = [pivot, R_φ)`.
//!
//! Nodes are stored in heap order: the root has index 1 and `φb` sits at
//! `2·index(φ) + b`. A node exists iff its parent has a pivot.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{CostError, CostModel};
use crate::rng;
use crate::stats::compensated_sum;

/// Deepest truncation a tree may be built with (heap storage is `2^(K+1)`).
pub const MAX_TREE_DEPTH: usize = 24;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("keys {first} and {second} coincide (value {value})")]
    DuplicateKeys { first: usize, second: usize, value: f64 },
    #[error("key {index} = {value} is not inside (0,1)")]
    KeyOutOfRange { index: usize, value: f64 },
    #[error("insufficient depth: no pivot on the path of {alpha} before level {level}")]
    InsufficientDepth { alpha: f64, level: usize },
    #[error("level {level} exceeds the truncation depth {depth}")]
    LevelBeyondDepth { level: usize, depth: usize },
    #[error("truncation depth {0} exceeds {MAX_TREE_DEPTH}")]
    DepthTooLarge(usize),
    #[error("alpha {0} is not inside [0,1]")]
    AlphaOutOfRange(f64),
    #[error("invalid tree document: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A finite word over {0,1}; bit `i` is the `i`-th turn from the root.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Path {
    bits: u64,
    depth: u32,
}

impl Path {
    pub const MAX_DEPTH: usize = 63;

    pub fn root() -> Self {
        Path::default()
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    /// The word read as a binary number, first turn most significant.
    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn from_bits(bits: u64, depth: usize) -> Self {
        assert!(depth <= Self::MAX_DEPTH);
        let mask = if depth == 0 { 0 } else { u64::MAX >> (64 - depth) };
        Path { bits: bits & mask, depth: depth as u32 }
    }

    /// Turn `i` (0-based from the root).
    pub fn bit(&self, i: usize) -> u8 {
        assert!(i < self.depth());
        ((self.bits >> (self.depth() - 1 - i)) & 1) as u8
    }

    pub fn child(&self, b: u8) -> Self {
        assert!(self.depth() < Self::MAX_DEPTH);
        Path { bits: (self.bits << 1) | (b & 1) as u64, depth: self.depth + 1 }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.depth > 0).then(|| Path { bits: self.bits >> 1, depth: self.depth - 1 })
    }

    /// Prefix of length `len`.
    pub fn prefix(&self, len: usize) -> Self {
        assert!(len <= self.depth());
        Path { bits: self.bits >> (self.depth() - len), depth: len as u32 }
    }

    pub fn common_prefix_len(&self, other: &Path) -> usize {
        let d = self.depth().min(other.depth());
        let x = self.prefix(d).bits ^ other.prefix(d).bits;
        if x == 0 {
            d
        } else {
            d - (64 - x.leading_zeros() as usize)
        }
    }

    pub fn is_prefix_of(&self, other: &Path) -> bool {
        self.depth <= other.depth && other.prefix(self.depth()) == *self
    }

    pub fn heap_index(&self) -> usize {
        (1usize << self.depth) | self.bits as usize
    }

    pub fn from_heap_index(index: usize) -> Self {
        assert!(index >= 1);
        let depth = (usize::BITS - 1 - index.leading_zeros()) as usize;
        Path::from_bits((index ^ (1 << depth)) as u64, depth)
    }

    pub fn to_word(&self) -> String {
        (0..self.depth()).map(|i| if self.bit(i) == 1 { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.depth == 0 {
            f.write_str("ε")
        } else {
            f.write_str(&self.to_word())
        }
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Path({self})")
    }
}

impl Serialize for Path {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_word())
    }
}

impl<'de> Deserialize<'de> for Path {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Path {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s == "ε" {
            return Ok(Path::root());
        }
        if s.len() > Self::MAX_DEPTH {
            return Err(TreeError::Invalid(format!("path {s} too long")));
        }
        let mut p = Path::root();
        for c in s.chars() {
            p = match c {
                '0' => p.child(0),
                '1' => p.child(1),
                _ => return Err(TreeError::Invalid(format!("bad path character {c:?}"))),
            };
        }
        Ok(p)
    }
}

/// `[l, r)` plus the first key strictly inside it, if any.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalNode {
    pub l: f64,
    pub r: f64,
    pub tau: Option<usize>,
    pub pivot: Option<f64>,
}

impl IntervalNode {
    pub fn len(&self) -> f64 {
        self.r - self.l
    }

    pub fn contains(&self, x: f64) -> bool {
        self.l <= x && x < self.r
    }
}

/// Truncated junction depth: exact, or "the paths agree through depth K".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Junction {
    Exact(usize),
    AtLeast(usize),
}

impl Junction {
    /// `J ∧ K`.
    pub fn truncated(self) -> usize {
        match self {
            Junction::Exact(j) | Junction::AtLeast(j) => j,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Junction::Exact(_))
    }
}

/// Which reading of the Hoare swap limit to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HoareReading {
    /// `Σ_k I_{α,k+1}(I_{α,k+1} − I_{α,k}) / I_{α,k}`, the displayed summand
    /// with the unbound `I_α` read as `I_{α,k+1}`.
    Printed,
    /// `Σ_k I_{φ0} I_{φ1} / I_φ` along the path: the mean of the
    /// hypergeometric swap law per split.
    HypergeometricMean,
}

/// How `∫ β(pivot, v) dv` over an interval is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Quadrature {
    /// Composite midpoint rule with the given number of cells per interval.
    Midpoint { points: usize },
    /// Plain Monte Carlo; the standard error is reported.
    MonteCarlo { samples: usize, seed: u64 },
}

/// A numerical value with its standard error (zero for deterministic rules).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalTree {
    depth: usize,
    nodes: Vec<Option<IntervalNode>>,
    n_keys: usize,
}

fn check_keys(keys: &[f64]) -> Result<(), TreeError> {
    for (i, &u) in keys.iter().enumerate() {
        if !(u > 0.0 && u < 1.0) {
            return Err(TreeError::KeyOutOfRange { index: i + 1, value: u });
        }
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    for w in order.windows(2) {
        if keys[w[0]] == keys[w[1]] {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(TreeError::DuplicateKeys { first: a + 1, second: b + 1, value: keys[a] });
        }
    }
    Ok(())
}

/// Rejects keys outside (0,1) and names the first colliding index pair (1-based).
pub fn validate_keys(keys: &[f64]) -> Result<(), TreeError> {
    check_keys(keys)
}

impl IntervalTree {
    /// Interval tree of `keys` (inserted in order) truncated at `depth`.
    pub fn build(keys: &[f64], depth: usize) -> Result<Self, TreeError> {
        if depth > MAX_TREE_DEPTH {
            return Err(TreeError::DepthTooLarge(depth));
        }
        check_keys(keys)?;
        let mut nodes = vec![None; 1 << (depth + 1)];
        nodes[1] = Some(IntervalNode { l: 0.0, r: 1.0, tau: None, pivot: None });
        for (i, &u) in keys.iter().enumerate() {
            let mut idx = 1;
            let mut d = 0;
            loop {
                let node = nodes[idx].as_mut().expect("parent with pivot has children");
                match node.pivot {
                    None => {
                        node.pivot = Some(u);
                        node.tau = Some(i + 1);
                        let (l, r) = (node.l, node.r);
                        if d < depth {
                            nodes[2 * idx] = Some(IntervalNode { l, r: u, tau: None, pivot: None });
                            nodes[2 * idx + 1] =
                                Some(IntervalNode { l: u, r, tau: None, pivot: None });
                        }
                        break;
                    }
                    Some(p) => {
                        if d == depth {
                            break;
                        }
                        idx = 2 * idx + usize::from(u >= p);
                        d += 1;
                    }
                }
            }
        }
        Ok(IntervalTree { depth, nodes, n_keys: keys.len() })
    }

    /// Pivots for the first `levels` levels in breadth-first order.
    fn bfs_keys(levels: usize, mut pick: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
        let mut keys = Vec::with_capacity((1 << levels) - 1);
        let mut level = vec![(0.0, 1.0)];
        for d in 0..levels {
            let mut next = Vec::with_capacity(level.len() * 2);
            for &(l, r) in &level {
                let p = pick(l, r);
                keys.push(p);
                if d + 1 < levels {
                    next.push((l, p));
                    next.push((p, r));
                }
            }
            level = next;
        }
        keys
    }

    /// Tree whose pivots above level `depth` are interval midpoints; the
    /// deepest level is left without pivots. `midpoint(2)` is the three-key
    /// fixture `(0.5, 0.25, 0.75)`.
    pub fn midpoint(depth: usize) -> Self {
        let keys = Self::bfs_keys(depth, |l, r| 0.5 * (l + r));
        Self::build(&keys, depth).expect("dyadic midpoints are distinct")
    }

    /// A realization of the stick-breaking law: each pivot is uniform on its
    /// interval, which is the law of the first uniform key landing there.
    /// Every level, including the deepest, carries a pivot.
    pub fn random<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> Self {
        let keys = Self::bfs_keys(depth + 1, |l, r| loop {
            let p = l + (r - l) * rng::open01(rng);
            if p > l && p < r {
                break p;
            }
        });
        Self::build(&keys, depth).expect("continuous draws are distinct")
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Length of the key sequence the tree was built from.
    pub fn n_keys(&self) -> usize {
        self.n_keys
    }

    pub fn node(&self, path: &Path) -> Option<&IntervalNode> {
        if path.depth() > self.depth {
            return None;
        }
        self.nodes[path.heap_index()].as_ref()
    }

    /// All present nodes in breadth-first order.
    pub fn nodes(&self) -> impl Iterator<Item = (Path, &IntervalNode)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|n| (Path::from_heap_index(i), n)))
    }

    /// Present nodes at `level`, left to right.
    pub fn level_nodes(&self, level: usize) -> impl Iterator<Item = (Path, &IntervalNode)> + '_ {
        let range = if level <= self.depth { (1 << level)..(1 << (level + 1)) } else { 0..0 };
        range.filter_map(move |i| self.nodes[i].as_ref().map(|n| (Path::from_heap_index(i), n)))
    }

    /// Nodes that end the tree: depth K, or no pivot. They tile `[0,1)`.
    pub fn cells(&self) -> Vec<Path> {
        let mut out = Vec::new();
        let mut stack = vec![Path::root()];
        while let Some(p) = stack.pop() {
            let node = self.node(&p).expect("reachable node exists");
            if p.depth() == self.depth || node.pivot.is_none() {
                out.push(p);
            } else {
                stack.push(p.child(1));
                stack.push(p.child(0));
            }
        }
        out
    }

    /// Cell containing `x` and its path.
    pub fn locate(&self, x: f64) -> (Path, &IntervalNode) {
        let mut p = Path::root();
        loop {
            let node = self.node(&p).expect("descent stays inside the tree");
            match node.pivot {
                Some(piv) if p.depth() < self.depth => p = p.child(u8::from(x >= piv)),
                _ => return (p, node),
            }
        }
    }

    fn check_alpha(alpha: f64) -> Result<(), TreeError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(())
        } else {
            Err(TreeError::AlphaOutOfRange(alpha))
        }
    }

    /// `φ(α,k)`: go to `φ0` when `α` is below the pivot of `φ`, else `φ1`.
    pub fn path_of(&self, alpha: f64, k: usize) -> Result<Path, TreeError> {
        Self::check_alpha(alpha)?;
        if k > self.depth {
            return Err(TreeError::LevelBeyondDepth { level: k, depth: self.depth });
        }
        let mut p = Path::root();
        for level in 0..k {
            let node = self.node(&p).expect("child of a split node");
            let piv = node.pivot.ok_or(TreeError::InsufficientDepth { alpha, level: level + 1 })?;
            p = p.child(u8::from(alpha >= piv));
        }
        Ok(p)
    }

    /// Nodes `φ(α,0), …, φ(α,k)`.
    pub fn walk(&self, alpha: f64, k: usize) -> Result<Vec<(Path, IntervalNode)>, TreeError> {
        let last = self.path_of(alpha, k)?;
        Ok((0..=k)
            .map(|j| {
                let p = last.prefix(j);
                (p, *self.node(&p).expect("node on a resolved path"))
            })
            .collect())
    }

    /// `I_{α,0}, …, I_{α,k}`.
    pub fn lengths(&self, alpha: f64, k: usize) -> Result<Vec<f64>, TreeError> {
        Ok(self.walk(alpha, k)?.iter().map(|(_, n)| n.len()).collect())
    }

    /// Longest common prefix of the depth-K paths of `alpha` and `beta`.
    pub fn junction(&self, alpha: f64, beta: f64) -> Result<Junction, TreeError> {
        let a = self.path_of(alpha, self.depth)?;
        let b = self.path_of(beta, self.depth)?;
        let j = a.common_prefix_len(&b);
        Ok(if j >= self.depth { Junction::AtLeast(self.depth) } else { Junction::Exact(j) })
    }

    /// `S^{≤K}_α = Σ_{k≤K} I_{α,k}`.
    pub fn limit_comparisons(&self, alpha: f64) -> Result<f64, TreeError> {
        Ok(compensated_sum(self.lengths(alpha, self.depth)?))
    }

    /// Truncated Hoare swap limit over `k = 0 … K−1`.
    pub fn limit_swaps_hoare(&self, alpha: f64, reading: HoareReading) -> Result<f64, TreeError> {
        if self.depth == 0 {
            return Ok(0.0);
        }
        let path = self.walk(alpha, self.depth)?;
        let terms = (0..self.depth).map(|k| {
            let (p, node) = path[k];
            match reading {
                HoareReading::Printed => {
                    let next = path[k + 1].1.len();
                    next * (next - node.len()) / node.len()
                }
                HoareReading::HypergeometricMean => {
                    let i0 = self.node(&p.child(0)).expect("split node has children").len();
                    let i1 = self.node(&p.child(1)).expect("split node has children").len();
                    i0 * i1 / node.len()
                }
            }
        });
        Ok(compensated_sum(terms))
    }

    /// `Σ_{k<K} I_{φ(α,k)0}`.
    pub fn limit_swaps_lomuto(&self, alpha: f64) -> Result<f64, TreeError> {
        if self.depth == 0 {
            return Ok(0.0);
        }
        let path = self.walk(alpha, self.depth)?;
        Ok(compensated_sum((0..self.depth).map(|k| {
            self.node(&path[k].0.child(0)).expect("split node has children").len()
        })))
    }

    /// `Σ_k ∫_{L_{α,k}}^{R_{α,k}} β(U_{τ_{α,k}}, v) dv`, stopping at the first
    /// node on the path without a pivot.
    pub fn limit_beta(
        &self,
        alpha: f64,
        cost: &CostModel,
        quadrature: Quadrature,
    ) -> Result<Estimate, TreeError> {
        Self::check_alpha(alpha)?;
        let mut value = Vec::new();
        let mut var = 0.0;
        let mut p = Path::root();
        let mut mc = match quadrature {
            Quadrature::MonteCarlo { seed, .. } => Some(rng::stream(seed, 0)),
            Quadrature::Midpoint { .. } => None,
        };
        loop {
            let node = *self.node(&p).expect("node on the path");
            let Some(piv) = node.pivot else { break };
            let est = integrate(cost, piv, node.l, node.r, quadrature, mc.as_mut())?;
            value.push(est.value);
            var += est.se * est.se;
            if p.depth() == self.depth {
                break;
            }
            p = p.child(u8::from(alpha >= piv));
        }
        Ok(Estimate { value: compensated_sum(value), se: var.sqrt() })
    }

    /// `Σ_{|φ|=k} I_φ²`.
    pub fn interval_decay_stat(&self, k: usize) -> Result<f64, TreeError> {
        self.check_level_complete(k)?;
        Ok(compensated_sum(self.level_nodes(k).map(|(_, n)| n.len() * n.len())))
    }

    /// `Σ_{|φ|=k} I_φ`, which is 1 on every complete level.
    pub fn level_sum(&self, k: usize) -> Result<f64, TreeError> {
        self.check_level_complete(k)?;
        Ok(compensated_sum(self.level_nodes(k).map(|(_, n)| n.len())))
    }

    /// Largest interval at level `k`; bounds the truncation error of the tail.
    pub fn max_interval(&self, k: usize) -> Result<f64, TreeError> {
        self.check_level_complete(k)?;
        Ok(self.level_nodes(k).map(|(_, n)| n.len()).fold(0.0, f64::max))
    }

    fn check_level_complete(&self, k: usize) -> Result<(), TreeError> {
        if k > self.depth {
            return Err(TreeError::LevelBeyondDepth { level: k, depth: self.depth });
        }
        for i in (1 << k)..(1 << (k + 1)) {
            if self.nodes[i].is_none() {
                let p = Path::from_heap_index(i);
                let parent = p.parent().expect("level ≥ 1 when a node is missing");
                let node = self.node(&parent).copied();
                let alpha = node.map_or(0.0, |n| n.l);
                return Err(TreeError::InsufficientDepth { alpha, level: k });
            }
        }
        Ok(())
    }

    /// True when every node above depth K has a pivot.
    pub fn is_complete(&self) -> bool {
        (0..=self.depth).all(|k| self.check_level_complete(k).is_ok())
    }

    pub fn to_document(&self) -> TreeDocument {
        TreeDocument {
            depth: self.depth,
            nodes: self
                .nodes()
                .map(|(p, n)| NodeRecord { path: p.to_word(), l: n.l, r: n.r, tau: n.tau, pivot: n.pivot })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String, TreeError> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    /// Rebuilds a tree from its document, checking the structural invariants.
    pub fn from_document(doc: &TreeDocument) -> Result<Self, TreeError> {
        if doc.depth > MAX_TREE_DEPTH {
            return Err(TreeError::DepthTooLarge(doc.depth));
        }
        let mut nodes = vec![None; 1 << (doc.depth + 1)];
        let mut n_keys = 0;
        for rec in &doc.nodes {
            let p: Path = rec.path.parse()?;
            if p.depth() > doc.depth {
                return Err(TreeError::Invalid(format!("node {p} deeper than {}", doc.depth)));
            }
            nodes[p.heap_index()] = Some(IntervalNode { l: rec.l, r: rec.r, tau: rec.tau, pivot: rec.pivot });
            n_keys = n_keys.max(rec.tau.unwrap_or(0));
        }
        let tree = IntervalTree { depth: doc.depth, nodes, n_keys };
        tree.check_structure()?;
        Ok(tree)
    }

    fn check_structure(&self) -> Result<(), TreeError> {
        let bad = |msg: String| Err(TreeError::Invalid(msg));
        match self.nodes[1] {
            Some(n) if n.l == 0.0 && n.r == 1.0 => {}
            _ => return bad("root must be [0,1)".into()),
        }
        for (p, n) in self.nodes() {
            if !(n.l < n.r) {
                return bad(format!("node {p} has empty interval"));
            }
            if n.tau.is_some() != n.pivot.is_some() {
                return bad(format!("node {p} has tau without pivot or vice versa"));
            }
            if let Some(piv) = n.pivot {
                if !(n.l < piv && piv < n.r) {
                    return bad(format!("pivot of {p} outside its interval"));
                }
            }
            if let Some(parent) = p.parent() {
                let Some(pn) = self.node(&parent) else {
                    return bad(format!("node {p} has no parent"));
                };
                let Some(piv) = pn.pivot else {
                    return bad(format!("parent of {p} has no pivot"));
                };
                let (l, r) = if p.bit(p.depth() - 1) == 0 { (pn.l, piv) } else { (piv, pn.r) };
                if n.l != l || n.r != r {
                    return bad(format!("node {p} does not split its parent at the pivot"));
                }
                if let (Some(t), Some(pt)) = (n.tau, pn.tau) {
                    if t <= pt {
                        return bad(format!("tau of {p} precedes its parent's"));
                    }
                }
            }
            if p.depth() < self.depth && n.pivot.is_some() {
                if self.node(&p.child(0)).is_none() || self.node(&p.child(1)).is_none() {
                    return bad(format!("split node {p} lacks children"));
                }
            }
        }
        Ok(())
    }
}

fn integrate(
    cost: &CostModel,
    pivot: f64,
    l: f64,
    r: f64,
    quadrature: Quadrature,
    rng: Option<&mut rng::StreamRng>,
) -> Result<Estimate, CostError> {
    let width = r - l;
    match quadrature {
        Quadrature::Midpoint { points } => {
            let h = width / points as f64;
            let mut terms = Vec::with_capacity(points);
            for i in 0..points {
                let v = l + (i as f64 + 0.5) * h;
                if v == pivot {
                    continue;
                }
                terms.push(cost.eval(pivot, v)? * h);
            }
            Ok(Estimate { value: compensated_sum(terms), se: 0.0 })
        }
        Quadrature::MonteCarlo { samples, .. } => {
            let rng = rng.expect("Monte Carlo quadrature carries a stream");
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for i in 0..samples {
                let v = l + width * rng::open01(rng);
                let x = if v == pivot { 0.0 } else { cost.eval(pivot, v)? * width };
                let d = x - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (x - mean);
            }
            let var = if samples > 1 { m2 / (samples - 1) as f64 } else { 0.0 };
            Ok(Estimate { value: mean, se: (var / samples as f64).sqrt() })
        }
    }
}

/// Flat serialized form: `{depth, nodes: [{path, L, R, tau, pivot}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub depth: usize,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub path: String,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub tau: Option<usize>,
    pub pivot: Option<f64>,
}
