//! Gaussian limit families on a fixed tree and the limit processes built from
//! them, with their conditional covariance functions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{CostError, CostModel};
use crate::cadlag::StepFunction;
use crate::rng;
use crate::stats::{compensated_sum, cov_with_se, StatsError};
use crate::tree::{Estimate, IntervalNode, IntervalTree, Path, TreeError};

#[derive(Debug, Error)]
pub enum LimitError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cost model must be declared ε-tame with ε < 1/4, got {0:?}")]
    NotTame(Option<f64>),
    #[error("level {level} exceeds the tree depth {depth}")]
    Depth { level: usize, depth: usize },
    #[error("matrix is not positive semidefinite: eigenvalue {min} below -{threshold}")]
    NotPsd { min: f64, threshold: f64 },
    #[error("factorization produced non-finite entries (condition {condition:e})")]
    Factorization { condition: f64 },
    #[error("grid must be nonempty, strictly increasing and inside [0,1]")]
    BadGrid,
    #[error("need at least 30 Monte Carlo samples, got {0}")]
    TooFewSamples(usize),
}

/// `Z_φ` and `Y_φ` for every node of a tree, indexed by heap position.
#[derive(Clone, Debug)]
pub struct GaussianFamily<'t> {
    tree: &'t IntervalTree,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl<'t> GaussianFamily<'t> {
    pub fn tree(&self) -> &'t IntervalTree {
        self.tree
    }

    pub fn z(&self, p: &Path) -> Option<f64> {
        self.tree.node(p).map(|_| self.z[p.heap_index()])
    }

    pub fn y(&self, p: &Path) -> Option<f64> {
        self.tree.node(p).map(|_| self.y[p.heap_index()])
    }
}

/// Brownian bridge on the interval endpoints; `Z_φ = B(R_φ) − B(L_φ)`, and
/// independent standard normals `Y_φ`.
pub fn sample_family<'t, R: Rng + ?Sized>(tree: &'t IntervalTree, rng: &mut R) -> GaussianFamily<'t> {
    let mut points: Vec<f64> = tree.nodes().flat_map(|(_, n)| [n.l, n.r]).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut w = vec![0.0; points.len()];
    for i in 1..points.len() {
        let g: f64 = rng.sample(StandardNormal);
        w[i] = w[i - 1] + g * (points[i] - points[i - 1]).sqrt();
    }
    let w1 = *w.last().expect("0 and 1 are endpoints");
    let bridge: Vec<f64> = points.iter().zip(&w).map(|(&t, &x)| if t == 1.0 { 0.0 } else { x - t * w1 }).collect();
    let at = |t: f64| bridge[points.binary_search_by(|p| p.total_cmp(&t)).expect("endpoint listed")];
    let size = 1usize << (tree.depth() + 1);
    let mut z = vec![0.0; size];
    let mut y = vec![0.0; size];
    for (p, n) in tree.nodes() {
        let i = p.heap_index();
        z[i] = if p.depth() == 0 { 0.0 } else { at(n.r) - at(n.l) };
        y[i] = rng.sample(StandardNormal);
    }
    GaussianFamily { tree, z, y }
}

/// Step function on the leaves of `tree` whose value on a leaf is the sum of
/// `contrib` over the nodes of its path.
fn accumulate(tree: &IntervalTree, contrib: impl Fn(&Path, &IntervalNode) -> f64) -> StepFunction {
    let cells: Vec<(f64, f64)> = tree
        .cells()
        .iter()
        .filter_map(|leaf| {
            let node = tree.node(leaf).expect("leaf exists");
            if node.r <= node.l {
                return None;
            }
            let sum = compensated_sum((0..=leaf.depth()).map(|d| {
                let p = leaf.prefix(d);
                contrib(&p, tree.node(&p).expect("ancestor exists"))
            }));
            Some((node.l, sum))
        })
        .collect();
    StepFunction::from_cells(&cells).expect("leaves tile [0,1)")
}

fn split(tree: &IntervalTree, p: &Path) -> Option<(f64, f64, f64)> {
    let n = tree.node(p)?;
    n.pivot?;
    let i0 = tree.node(&p.child(0))?.len();
    let i1 = tree.node(&p.child(1))?.len();
    Some((n.len(), i0, i1))
}

/// `G^{≤K}_∞ = Σ_{|φ|≤K} Z_φ 1_{[L_φ,R_φ)}`.
pub fn sample_g_inf(fam: &GaussianFamily<'_>) -> StepFunction {
    accumulate(fam.tree, |p, _| fam.z[p.heap_index()])
}

/// Per-node contribution of the Hoare swap limit.
pub fn swap_contribution(fam: &GaussianFamily<'_>, p: &Path) -> Option<f64> {
    let (i, i0, i1) = split(fam.tree, p)?;
    let z = |q: Path| fam.z[q.heap_index()];
    Some(
        fam.y[p.heap_index()] * i0 * i1 / i.powf(1.5) + z(p.child(0)) * i1 / i + z(p.child(1)) * i0 / i
            - z(*p) * i0 * i1 / (i * i),
    )
}

/// Hoare swap limit, summed over split nodes `|φ| < K` on each path.
pub fn sample_g_swap(fam: &GaussianFamily<'_>) -> StepFunction {
    accumulate(fam.tree, |p, _| swap_contribution(fam, p).unwrap_or(0.0))
}

/// Lomuto swap limit `Σ_k Z_{φ(α,k)0}` over split nodes `|φ| < K`.
pub fn sample_g_lomuto(fam: &GaussianFamily<'_>) -> StepFunction {
    accumulate(fam.tree, |p, _| match split(fam.tree, p) {
        Some(_) => fam.z[p.child(0).heap_index()],
        None => 0.0,
    })
}

fn check_level(tree: &IntervalTree, k: usize) -> Result<(), LimitError> {
    if k > tree.depth() {
        return Err(LimitError::Depth { level: k, depth: tree.depth() });
    }
    Ok(())
}

/// Truncated conditional covariance of `G^{≤K}_∞` at `(α, β)`.
pub fn sigma_inf(tree: &IntervalTree, alpha: f64, beta: f64, k: usize) -> Result<f64, LimitError> {
    check_level(tree, k)?;
    let ia = tree.lengths(alpha, k)?;
    let ib = tree.lengths(beta, k)?;
    let pa = tree.path_of(alpha, k)?;
    let pb = tree.path_of(beta, k)?;
    let m = pa.common_prefix_len(&pb).min(k);
    let first = compensated_sum((0..=m).flat_map(|i| (0..=k).map(move |j| (i, j))).map(|(i, j)| ia[i.max(j)]));
    let middle = (1 + m) as f64 * compensated_sum(ib[(m + 1).min(k + 1)..].iter().copied());
    let sa = compensated_sum(ia.iter().copied());
    let sb = compensated_sum(ib.iter().copied());
    Ok(first + middle - sa * sb)
}

/// Covariance of `J(V,α)∧K` and `J(V,β)∧K` for uniform `V`, by Monte Carlo,
/// with a jackknife standard error.
pub fn sigma_via_j<R: Rng + ?Sized>(
    tree: &IntervalTree,
    alpha: f64,
    beta: f64,
    k: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate, LimitError> {
    check_level(tree, k)?;
    let pa = tree.path_of(alpha, k)?;
    let pb = tree.path_of(beta, k)?;
    let mut xa = Vec::with_capacity(samples);
    let mut xb = Vec::with_capacity(samples);
    for _ in 0..samples {
        let v = tree.path_of(rng.random::<f64>(), k)?;
        xa.push(v.common_prefix_len(&pa).min(k) as f64);
        xb.push(v.common_prefix_len(&pb).min(k) as f64);
    }
    let (value, se) = cov_with_se(&xa, &xb)?;
    Ok(Estimate { value, se })
}

/// `Cov(Z_φ, Z_ψ) = |[L_φ,R_φ) ∩ [L_ψ,R_ψ)| − I_φ I_ψ`.
pub fn z_covariance(tree: &IntervalTree, a: &Path, b: &Path) -> Option<f64> {
    let x = tree.node(a)?;
    let y = tree.node(b)?;
    let overlap = (x.r.min(y.r) - x.l.max(y.l)).max(0.0);
    Some(overlap - x.len() * y.len())
}

/// Variance of `Σ c_φ Z_φ + Σ d_φ Y_φ`.
pub fn linear_variance(tree: &IntervalTree, z_terms: &[(Path, f64)], y_terms: &[(Path, f64)]) -> f64 {
    let mut terms = Vec::with_capacity(z_terms.len() * z_terms.len() + y_terms.len());
    for (p, a) in z_terms {
        for (q, b) in z_terms {
            terms.push(a * b * z_covariance(tree, p, q).unwrap_or(0.0));
        }
    }
    terms.extend(y_terms.iter().map(|(_, d)| d * d));
    compensated_sum(terms)
}

/// Conditional variance of the truncated Hoare swap limit at `α`.
pub fn swap_variance(tree: &IntervalTree, alpha: f64) -> Result<f64, LimitError> {
    let leaf = tree.path_of(alpha, tree.depth()).or_else(|_| {
        let (p, _) = tree.locate(alpha);
        Ok::<_, TreeError>(p)
    })?;
    let mut z = Vec::new();
    let mut y = Vec::new();
    for d in 0..=leaf.depth() {
        let p = leaf.prefix(d);
        if let Some((i, i0, i1)) = split(tree, &p) {
            y.push((p, i0 * i1 / i.powf(1.5)));
            z.push((p.child(0), i1 / i));
            z.push((p.child(1), i0 / i));
            z.push((p, -i0 * i1 / (i * i)));
        }
    }
    Ok(linear_variance(tree, &z, &y))
}

/// Conditional variance of the truncated Lomuto swap limit at `α`.
pub fn lomuto_variance(tree: &IntervalTree, alpha: f64) -> f64 {
    let (leaf, _) = tree.locate(alpha);
    let z: Vec<(Path, f64)> = (0..=leaf.depth())
        .map(|d| leaf.prefix(d))
        .filter(|p| split(tree, p).is_some())
        .map(|p| (p.child(0), 1.0))
        .collect();
    linear_variance(tree, &z, &[])
}

/// Monte Carlo covariance matrix of `Σ_{k≤K} X^β_{α,k}` over a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaCovariance {
    pub grid: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub se: DMatrix<f64>,
    pub samples: usize,
    /// Eigenvalues in `[−threshold, 0)` were set to zero.
    pub clip_threshold: f64,
    pub clipped: usize,
}

fn check_grid(grid: &[f64]) -> Result<(), LimitError> {
    let ok = !grid.is_empty()
        && grid.iter().all(|a| (0.0..=1.0).contains(a))
        && grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(LimitError::BadGrid)
    }
}

/// Prefix sums of `β(U_{φ(V,k)}, V)` along the path of `V`, for `k ≤ K`.
fn cost_prefix(tree: &IntervalTree, cost: &CostModel, v: f64, k: usize, out: &mut Vec<f64>) -> Result<Path, LimitError> {
    out.clear();
    let mut p = Path::root();
    let mut acc = 0.0;
    for level in 0..=k {
        let node = tree.node(&p).expect("resolved path");
        let pivot = node.pivot.ok_or(TreeError::InsufficientDepth { alpha: v, level })?;
        acc += cost.eval(pivot, v)?;
        out.push(acc);
        if level < k {
            p = p.child(u8::from(v >= pivot));
        }
    }
    Ok(p)
}

/// Conditional covariance of `G^β_∞` on `grid`, truncated at level `K` of the
/// tree (which needs pivots through level `K`). The matrix is projected onto
/// the PSD cone: eigenvalues below `−1e−8·trace` are an error, those in
/// `[−1e−8·trace, 0)` are clipped.
pub fn beta_cov_matrix(
    tree: &IntervalTree,
    grid: &[f64],
    k: usize,
    cost: &CostModel,
    samples: usize,
    seed: u64,
) -> Result<BetaCovariance, LimitError> {
    match cost.eps() {
        Some(e) if e < 0.25 => {}
        other => return Err(LimitError::NotTame(other)),
    }
    check_grid(grid)?;
    check_level(tree, k)?;
    if samples < 30 {
        return Err(LimitError::TooFewSamples(samples));
    }
    let paths = grid.iter().map(|&a| tree.path_of(a, k)).collect::<Result<Vec<_>, _>>()?;
    let g = grid.len();
    let mut prefix = Vec::with_capacity(k + 1);
    let mut x = vec![0.0; g];
    let mut draw = |r: &mut rng::StreamRng, x: &mut [f64]| -> Result<(), LimitError> {
        let v = loop {
            let v = rng::open01(r);
            if tree.nodes().all(|(_, n)| n.pivot != Some(v)) {
                break v;
            }
        };
        let pv = cost_prefix(tree, cost, v, k, &mut prefix)?;
        for (xi, pa) in x.iter_mut().zip(&paths) {
            *xi = prefix[pv.common_prefix_len(pa).min(k)];
        }
        Ok(())
    };
    let mut r = rng::stream(seed, 0);
    let mut sums = vec![Vec::with_capacity(samples); g];
    for _ in 0..samples {
        draw(&mut r, &mut x)?;
        for (s, xi) in sums.iter_mut().zip(&x) {
            s.push(*xi);
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| compensated_sum(s.iter().copied()) / samples as f64).collect();
    drop(sums);
    let nf = samples as f64;
    let mut s1 = DMatrix::<f64>::zeros(g, g);
    let mut s2 = DMatrix::<f64>::zeros(g, g);
    let mut r = rng::stream(seed, 0);
    for _ in 0..samples {
        draw(&mut r, &mut x)?;
        for a in 0..g {
            let da = x[a] - mean[a];
            for b in a..g {
                let prod = da * (x[b] - mean[b]);
                s1[(a, b)] += prod;
                s2[(a, b)] += prod * prod;
            }
        }
    }
    let mut matrix = DMatrix::<f64>::zeros(g, g);
    let mut se = DMatrix::<f64>::zeros(g, g);
    for a in 0..g {
        for b in a..g {
            let m = s1[(a, b)] / nf;
            let var = (s2[(a, b)] / nf - m * m).max(0.0);
            matrix[(a, b)] = s1[(a, b)] / (nf - 1.0);
            matrix[(b, a)] = matrix[(a, b)];
            se[(a, b)] = (var / nf).sqrt();
            se[(b, a)] = se[(a, b)];
        }
    }
    let (matrix, clip_threshold, clipped) = clip_psd(matrix)?;
    Ok(BetaCovariance { grid: grid.to_vec(), matrix, se, samples, clip_threshold, clipped })
}

/// Projects a symmetric matrix onto the PSD cone when its negative
/// eigenvalues are within `1e−8·trace` of zero.
pub fn clip_psd(m: DMatrix<f64>) -> Result<(DMatrix<f64>, f64, usize), LimitError> {
    let threshold = 1e-8 * m.trace().abs();
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -threshold {
        return Err(LimitError::NotPsd { min, threshold });
    }
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    if clipped == 0 {
        return Ok((m, threshold, 0));
    }
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    Ok(((&rebuilt + rebuilt.transpose()) * 0.5, threshold, clipped))
}

/// One draw of `G^β_∞` on the grid of `cov`, via the symmetric square root of
/// the covariance matrix. The result is piecewise constant: the value at a
/// grid point holds until the next one, and the first value also covers
/// `[0, grid[0])`.
pub fn sample_g_beta<R: Rng + ?Sized>(cov: &BetaCovariance, rng: &mut R) -> Result<StepFunction, LimitError> {
    let g = cov.grid.len();
    let eig = SymmetricEigen::new(cov.matrix.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    let z = DVector::<f64>::from_fn(g, |_, _| rng.sample(StandardNormal));
    let x = factor * z;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LimitError::Factorization { condition: max / min.abs().max(f64::MIN_POSITIVE) });
    }
    let mut cells: Vec<(f64, f64)> = cov.grid.iter().copied().zip(x.iter().copied()).collect();
    cells[0].0 = 0.0;
    if cells.len() > 1 && cells[1].0 == 0.0 {
        cells.remove(0);
    }
    Ok(StepFunction::from_cells(&cells).expect("grid is increasing"))
}

/// `E[X^s]` for `X = 1_{[l,r)}(V)·β(u,V)` with `u` and `V` uniform, the
/// former on `[l,r)`. Only the conditional moment given `V ∈ [l,r)` is
/// simulated; it is then scaled by `r − l`.
pub fn beta_moment<R: Rng + ?Sized>(
    cost: &CostModel,
    l: f64,
    r: f64,
    s: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate, LimitError> {
    if samples < 30 {
        return Err(LimitError::TooFewSamples(samples));
    }
    let width = r - l;
    let mut xs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let u = l + width * rng.random::<f64>();
        let v = l + width * rng.random::<f64>();
        xs.push(cost.eval(u, v)?.powf(s));
    }
    let (m, se) = crate::stats::mean_se(&xs);
    Ok(Estimate { value: width * m, se: width * se })
}
