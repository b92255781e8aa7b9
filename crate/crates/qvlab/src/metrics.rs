//! The tree metrics `d₂` and `d_G` on [0,1] and Hölder diagnostics for
//! sampled limit paths.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cadlag::StepFunction;
use crate::stats::compensated_sum;
use crate::tree::{IntervalTree, Junction, Path, TreeError};

/// `¼ log₂(3/2)`, the d₂-Hölder threshold for the comparison limit.
pub fn d2_holder_threshold() -> f64 {
    0.25 * 1.5f64.log2()
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("all increments vanish; no exponent can be fitted")]
    Degenerate,
    #[error("level {level} exceeds the tree depth {depth}")]
    Depth { level: usize, depth: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub value: f64,
    /// The junction reached the truncation depth, so `value` is an upper bound
    /// (for `d₂`) or a truncated sum (for `d_G`).
    pub truncated: bool,
}

/// `d₂(α,β) = 2^{−J(α,β)}`, and 0 when `α = β`.
pub fn d2(tree: &IntervalTree, alpha: f64, beta: f64) -> Result<Distance, MetricError> {
    if alpha == beta {
        return Ok(Distance { value: 0.0, truncated: false });
    }
    Ok(match tree.junction(alpha, beta)? {
        Junction::Exact(j) => Distance { value: 2f64.powi(-(j as i32)), truncated: false },
        Junction::AtLeast(j) => Distance { value: 2f64.powi(-(j as i32)), truncated: true },
    })
}

fn dg_parts(tree: &IntervalTree, alpha: f64, beta: f64, k: usize) -> Result<(usize, Vec<f64>, Vec<f64>, bool), MetricError> {
    if k > tree.depth() {
        return Err(MetricError::Depth { level: k, depth: tree.depth() });
    }
    let ia = tree.lengths(alpha, k)?;
    let ib = tree.lengths(beta, k)?;
    let pa = tree.path_of(alpha, k)?;
    let pb = tree.path_of(beta, k)?;
    let j = pa.common_prefix_len(&pb);
    Ok((j.min(k), ia, ib, j >= k && alpha != beta))
}

/// `d_G` truncated at level `K`: the root of
/// `Σ_{J<k≤K} (2(k−J)−1)(I_{α,k}+I_{β,k}) − (Σ_{J<k≤K} (I_{α,k}−I_{β,k}))²`.
/// A negative value from rounding is clipped to 0.
pub fn dg(tree: &IntervalTree, alpha: f64, beta: f64, k: usize) -> Result<Distance, MetricError> {
    let (j, ia, ib, truncated) = dg_parts(tree, alpha, beta, k)?;
    let lin = compensated_sum(((j + 1)..=k).map(|i| (2 * (i - j) - 1) as f64 * (ia[i] + ib[i])));
    let diff = compensated_sum(((j + 1)..=k).map(|i| ia[i] - ib[i]));
    let sq = lin - diff * diff;
    Ok(Distance { value: sq.max(0.0).sqrt(), truncated })
}

/// `Σ_{J<k≤K} 2(2(k−J)−1)·min(I_{α,k}, I_{β,k})`, a lower bound for `d_G²`.
pub fn dg_lower_bound(tree: &IntervalTree, alpha: f64, beta: f64, k: usize) -> Result<f64, MetricError> {
    let (j, ia, ib, _) = dg_parts(tree, alpha, beta, k)?;
    Ok(compensated_sum(((j + 1)..=k).map(|i| 2.0 * (2 * (i - j) - 1) as f64 * ia[i].min(ib[i]))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    D2,
    Dg,
}

impl Metric {
    pub fn eval(self, tree: &IntervalTree, alpha: f64, beta: f64) -> Result<Distance, MetricError> {
        match self {
            Metric::D2 => d2(tree, alpha, beta),
            Metric::Dg => dg(tree, alpha, beta, tree.depth()),
        }
    }
}

/// Least-squares slope of `log|f(α)−f(β)|` on `log metric(α,β)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub slope: f64,
    /// 2.5% and 97.5% bootstrap quantiles of the slope.
    pub band: (f64, f64),
    pub pairs_used: usize,
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        f64::NAN
    }
}

/// Fits an empirical exponent over `pairs` uniform pairs. Pairs with a
/// truncated junction, zero distance or zero increment are dropped.
pub fn holder_estimate<R: Rng + ?Sized>(
    path: &StepFunction,
    metric: Metric,
    tree: &IntervalTree,
    pairs: usize,
    rng: &mut R,
) -> Result<HolderFit, MetricError> {
    let mut pts = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let d = metric.eval(tree, a, b)?;
        let inc = (path.eval(a) - path.eval(b)).abs();
        if !d.truncated && d.value > 0.0 && inc > 0.0 {
            pts.push((d.value.ln(), inc.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(MetricError::Degenerate);
    }
    let slope = ols_slope(&pts);
    if !slope.is_finite() {
        return Err(MetricError::Degenerate);
    }
    let mut boots: Vec<f64> = (0..200)
        .map(|_| {
            let resample: Vec<(f64, f64)> = (0..pts.len()).map(|_| *pts.choose(rng).expect("nonempty")).collect();
            ols_slope(&resample)
        })
        .filter(|s| s.is_finite())
        .collect();
    boots.sort_by(f64::total_cmp);
    let q = |p: f64| boots[((boots.len() - 1) as f64 * p).round() as usize];
    Ok(HolderFit { slope, band: (q(0.025), q(0.975)), pairs_used: pts.len() })
}

/// Pair of points with its distance and the increment of a path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub alpha: f64,
    pub beta: f64,
    pub junction: usize,
    pub distance: f64,
    pub increment: f64,
}

/// Increments of `path` over the given pairs, excluding pairs whose junction
/// reaches the truncation depth.
pub fn increments(
    path: &StepFunction,
    metric: Metric,
    tree: &IntervalTree,
    pairs: &[(f64, f64)],
) -> Result<Vec<Increment>, MetricError> {
    let mut out = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let junction = match tree.junction(a, b)? {
            Junction::Exact(j) => j,
            Junction::AtLeast(_) => continue,
        };
        let d = metric.eval(tree, a, b)?;
        out.push(Increment { alpha: a, beta: b, junction, distance: d.value, increment: (path.eval(a) - path.eval(b)).abs() });
    }
    Ok(out)
}

/// Outcome of a Hölder violation check at a fixed exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub exponent: f64,
    pub constant: f64,
    pub tested: usize,
    pub violations: usize,
    /// Largest `|Δf| / (C·d^γ)` over the tested pairs.
    pub worst_ratio: f64,
}

/// Fits `C` as `margin` times the largest ratio `|Δf|/d^γ` over `calibration`
/// (pairs with junction at most `coarse_depth`), then counts pairs of `test`
/// where `|Δf| > C·d^γ`.
pub fn holder_check(
    calibration: &[Increment],
    test: &[Increment],
    exponent: f64,
    coarse_depth: usize,
    margin: f64,
) -> HolderCheck {
    let ratio = |i: &Increment| if i.distance > 0.0 { i.increment / i.distance.powf(exponent) } else { 0.0 };
    let fitted = calibration.iter().filter(|i| i.junction <= coarse_depth).map(ratio).fold(0.0, f64::max);
    let constant = margin * fitted;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for i in test {
        let r = ratio(i);
        if constant > 0.0 {
            worst = worst.max(r / constant);
        } else if r > 0.0 {
            worst = f64::INFINITY;
        }
        if r > constant {
            violations += 1;
        }
    }
    HolderCheck { exponent, constant, tested: test.len(), violations, worst_ratio: worst }
}

/// Precomputed level-`K` cells of a tree, for evaluating metrics on many
/// pairs. Cell `i` is the `i`-th level-`K` interval from the left.
#[derive(Clone, Debug)]
pub struct CellTable {
    depth: usize,
    starts: Vec<f64>,
    paths: Vec<Path>,
    lengths: Vec<f64>,
}

impl CellTable {
    pub fn new(tree: &IntervalTree, depth: usize) -> Result<Self, MetricError> {
        let mut cells: Vec<(f64, Path)> = tree.level_nodes(depth).map(|(p, n)| (n.l, p)).collect();
        if cells.len() != 1 << depth {
            return Err(MetricError::Depth { level: depth, depth: tree.depth() });
        }
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut lengths = Vec::with_capacity(cells.len() * (depth + 1));
        for (_, p) in &cells {
            for k in 0..=depth {
                lengths.push(tree.node(&p.prefix(k)).expect("ancestor of a present node").len());
            }
        }
        Ok(CellTable {
            depth,
            starts: cells.iter().map(|c| c.0).collect(),
            paths: cells.into_iter().map(|c| c.1).collect(),
            lengths,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn cell_of(&self, x: f64) -> usize {
        self.starts.partition_point(|&s| s <= x).saturating_sub(1)
    }

    /// `I_{φ(cell,k)}` for `k ≤ K`.
    pub fn lengths(&self, cell: usize) -> &[f64] {
        &self.lengths[cell * (self.depth + 1)..(cell + 1) * (self.depth + 1)]
    }

    /// Junction depth, equal to `K` (truncated) inside one cell.
    pub fn junction(&self, a: usize, b: usize) -> usize {
        self.paths[a].common_prefix_len(&self.paths[b]).min(self.depth)
    }

    pub fn d2(&self, a: usize, b: usize) -> f64 {
        2f64.powi(-(self.junction(a, b) as i32))
    }

    /// `d_G²` truncated at `K`, clipped at 0.
    pub fn dg2(&self, a: usize, b: usize) -> f64 {
        let j = self.junction(a, b);
        let (ia, ib) = (self.lengths(a), self.lengths(b));
        let mut lin = 0.0;
        let mut diff = 0.0;
        for k in (j + 1)..=self.depth {
            lin += (2 * (k - j) - 1) as f64 * (ia[k] + ib[k]);
            diff += ia[k] - ib[k];
        }
        (lin - diff * diff).max(0.0)
    }

    pub fn dg2_lower_bound(&self, a: usize, b: usize) -> f64 {
        let j = self.junction(a, b);
        let (ia, ib) = (self.lengths(a), self.lengths(b));
        ((j + 1)..=self.depth).map(|k| 2.0 * (2 * (k - j) - 1) as f64 * ia[k].min(ib[k])).sum()
    }

    /// Value of a path on each cell (paths are constant on cells).
    pub fn values_of(&self, f: &StepFunction) -> Vec<f64> {
        self.starts.iter().map(|&s| f.eval(s)).collect()
    }
}

/// Pairs with their `d₂`, `d_G` and the lower bound for `d_G²`, plus an
/// optional Hölder fit of a path against `d_G`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub pairs: Vec<(f64, f64)>,
    pub d2: Vec<f64>,
    pub dg: Vec<f64>,
    pub lower_bounds: Vec<f64>,
    pub truncated: Vec<bool>,
    pub holder: Option<HolderFit>,
}

impl MetricReport {
    pub fn build<R: Rng + ?Sized>(
        tree: &IntervalTree,
        path: Option<&StepFunction>,
        pairs: usize,
        rng: &mut R,
    ) -> Result<Self, MetricError> {
        let k = tree.depth();
        let mut rep = MetricReport {
            pairs: Vec::with_capacity(pairs),
            d2: Vec::with_capacity(pairs),
            dg: Vec::with_capacity(pairs),
            lower_bounds: Vec::with_capacity(pairs),
            truncated: Vec::with_capacity(pairs),
            holder: None,
        };
        for _ in 0..pairs {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let x = d2(tree, a, b)?;
            rep.pairs.push((a, b));
            rep.d2.push(x.value);
            rep.dg.push(dg(tree, a, b, k)?.value);
            rep.lower_bounds.push(dg_lower_bound(tree, a, b, k)?);
            rep.truncated.push(x.truncated);
        }
        if let Some(f) = path {
            rep.holder = holder_estimate(f, Metric::Dg, tree, pairs, rng).ok();
        }
        Ok(rep)
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["alpha", "beta", "d2", "dg", "dg2_lower_bound", "truncated"])?;
        for i in 0..self.pairs.len() {
            w.write_record(&[
                self.pairs[i].0.to_string(),
                self.pairs[i].1.to_string(),
                self.d2[i].to_string(),
                self.dg[i].to_string(),
                self.lower_bounds[i].to_string(),
                self.truncated[i].to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
