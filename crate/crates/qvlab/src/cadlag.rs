//! Right-continuous step functions on [0,1]: evaluation, uniform and
//! Skorokhod distances, and the càdlàg modulus `w′`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("jump locations must be strictly increasing in (0,1], got {0:?}")]
    BadJumps(Vec<f64>),
    #[error("{values} values for {jumps} jumps; expected one more value than jumps")]
    Shape { jumps: usize, values: usize },
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("delta must lie in (0,1), got {0}")]
    BadDelta(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("csv must start at location 0")]
    CsvStart,
}

/// `values[0]` holds on `[0, jumps[0])`, `values[i]` on `[jumps[i-1], jumps[i])`,
/// and the last value also at `t = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    jumps: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    location: f64,
    value: f64,
}

impl StepFunction {
    pub fn new(jumps: Vec<f64>, values: Vec<f64>) -> Result<Self, StepError> {
        if values.len() != jumps.len() + 1 {
            return Err(StepError::Shape { jumps: jumps.len(), values: values.len() });
        }
        let ordered = jumps.windows(2).all(|w| w[0] < w[1]);
        let inside = jumps.iter().all(|&j| j > 0.0 && j <= 1.0);
        if !ordered || !inside {
            return Err(StepError::BadJumps(jumps));
        }
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(StepError::NonFinite(v));
        }
        Ok(StepFunction { jumps, values })
    }

    pub fn constant(c: f64) -> Self {
        StepFunction { jumps: vec![], values: vec![c] }
    }

    /// `c · 1_{[a,1]}`.
    pub fn indicator_from(a: f64, c: f64) -> Result<Self, StepError> {
        if a <= 0.0 {
            return Ok(Self::constant(c));
        }
        Self::new(vec![a], vec![0.0, c])
    }

    /// From cells `(start, value)` with strictly increasing starts, the first
    /// of which is 0.
    pub fn from_cells(cells: &[(f64, f64)]) -> Result<Self, StepError> {
        match cells.first() {
            Some(&(s, _)) if s == 0.0 => {}
            _ => return Err(StepError::CsvStart),
        }
        let jumps = cells[1..].iter().map(|c| c.0).collect();
        let values = cells.iter().map(|c| c.1).collect();
        Self::new(jumps, values)
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.jumps.partition_point(|&j| j <= t)]
    }

    /// Drops jumps between equal values.
    pub fn normalize(mut self) -> Self {
        let mut jumps = Vec::with_capacity(self.jumps.len());
        let mut values = vec![self.values[0]];
        for (j, v) in self.jumps.iter().zip(&self.values[1..]) {
            if *v != *values.last().expect("nonempty") {
                jumps.push(*j);
                values.push(*v);
            }
        }
        self.jumps = jumps;
        self.values = values;
        self
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise `op(self, other)` on the union of both jump sets.
    pub fn combine(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        let mut jumps = Vec::with_capacity(self.jumps.len() + other.jumps.len());
        let (mut i, mut j) = (0, 0);
        let mut values = vec![op(self.values[0], other.values[0])];
        while i < self.jumps.len() || j < other.jumps.len() {
            let a = self.jumps.get(i).copied().unwrap_or(f64::INFINITY);
            let b = other.jumps.get(j).copied().unwrap_or(f64::INFINITY);
            let t = a.min(b);
            if a == t {
                i += 1;
            }
            if b == t {
                j += 1;
            }
            jumps.push(t);
            values.push(op(self.values[i], other.values[j]));
        }
        StepFunction { jumps, values }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        StepFunction { jumps: self.jumps.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn to_csv(&self) -> Result<String, StepError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let starts = std::iter::once(0.0).chain(self.jumps.iter().copied());
        for (location, &value) in starts.zip(&self.values) {
            w.serialize(CsvRow { location, value })?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, StepError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let cells = r
            .deserialize::<CsvRow>()
            .map(|row| row.map(|c| (c.location, c.value)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_cells(&cells)
    }
}

pub fn sup_dist(f: &StepFunction, g: &StepFunction) -> f64 {
    f.sub(g).sup_norm()
}

/// Is there an increasing bijection `λ` with `‖λ − id‖ ≤ eps` and
/// `‖f∘λ − g‖ ≤ eps`? The f-jump at `a_i` is moved to time `c_i`; a sweep over
/// the merged event order keeps, per pair of passed jump counts, the earliest
/// time at which that pair can be current.
fn skorokhod_feasible(f: &StepFunction, g: &StepFunction, eps: f64) -> bool {
    let (a, fv) = (&f.jumps, &f.values);
    let (b, gv) = (&g.jumps, &g.values);
    let (p, q) = (a.len(), b.len());
    let close = |i: usize, j: usize| (fv[i] - gv[j]).abs() <= eps;
    if !close(0, 0) {
        return false;
    }
    let mut dp = vec![f64::INFINITY; (p + 1) * (q + 1)];
    let at = |i: usize, j: usize| i * (q + 1) + j;
    dp[at(0, 0)] = 0.0;
    for s in 0..=(p + q) {
        for i in s.saturating_sub(q)..=s.min(p) {
            let j = s - i;
            let t = dp[at(i, j)];
            if !t.is_finite() {
                continue;
            }
            let next_b = b.get(j).copied();
            if i < p {
                let ai = a[i];
                let c = if ai == 1.0 {
                    (j == q).then_some(1.0)
                } else {
                    let c = t.max(ai - eps);
                    (c <= (ai + eps).min(1.0) && next_b.is_none_or(|nb| c <= nb)).then_some(c)
                };
                if let Some(c) = c {
                    if close(i + 1, j) && c < dp[at(i + 1, j)] {
                        dp[at(i + 1, j)] = c;
                    }
                }
            }
            if let Some(bj) = next_b {
                if bj >= t && (bj < 1.0 || i == p) && close(i, j + 1) && bj < dp[at(i, j + 1)] {
                    dp[at(i, j + 1)] = bj;
                }
                if i < p {
                    let ai = a[i];
                    let both_end = ai == 1.0 && bj == 1.0;
                    let inner = ai < 1.0 && bj < 1.0 && (bj - ai).abs() <= eps;
                    if (both_end || inner) && bj >= t && close(i + 1, j + 1) && bj < dp[at(i + 1, j + 1)] {
                        dp[at(i + 1, j + 1)] = bj;
                    }
                }
            }
        }
    }
    dp[at(p, q)].is_finite()
}

/// Skorokhod J₁ distance to within `tol`, by bisection on the feasibility
/// check between 0 and the uniform distance.
pub fn skorokhod_dist(f: &StepFunction, g: &StepFunction, tol: f64) -> Result<f64, StepError> {
    if !(tol > 0.0) {
        return Err(StepError::BadTolerance(tol));
    }
    let (mut lo, mut hi) = (0.0, sup_dist(f, g));
    if skorokhod_feasible(f, g, 0.0) {
        return Ok(0.0);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if skorokhod_feasible(f, g, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Can `[0,1)` be cut into cells longer than `delta`, each with oscillation
/// at most `theta`? Breakpoints may fall anywhere, not only at jumps; for each
/// piece the earliest reachable cell start is kept.
fn modulus_feasible(starts: &[f64], osc: &[Vec<f64>], delta: f64, theta: f64) -> bool {
    let m = starts.len();
    let end = |q: usize| if q + 1 < m { starts[q + 1] } else { 1.0 };
    let mut earliest = vec![f64::INFINITY; m];
    earliest[0] = 0.0;
    for p in 0..m {
        let t = earliest[p];
        if !t.is_finite() {
            continue;
        }
        let breaker = (p + 1..m).find(|&q| osc[p][q] > theta);
        let lo = t + delta;
        match breaker {
            None if lo < 1.0 => return true,
            None => {}
            Some(q) => {
                let hi = starts[q];
                if lo >= hi {
                    continue;
                }
                for r in p..=q {
                    if end(r) > lo && starts[r] <= hi {
                        let s = lo.max(starts[r]);
                        if s < earliest[r] {
                            earliest[r] = s;
                        }
                    }
                }
            }
        }
    }
    false
}

/// `w′_f(δ)`: infimum over grids with cells longer than `δ` of the largest
/// oscillation of `f` over a cell `[t_{i−1}, t_i)`.
pub fn modulus(f: &StepFunction, delta: f64) -> Result<f64, StepError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(StepError::BadDelta(delta));
    }
    // A jump at 1 only changes the value at t = 1, which no cell contains.
    let inner = f.jumps.iter().take_while(|&&j| j < 1.0).count();
    let starts: Vec<f64> = std::iter::once(0.0).chain(f.jumps[..inner].iter().copied()).collect();
    let vals = &f.values[..=inner];
    let m = starts.len();
    let mut osc = vec![vec![0.0; m]; m];
    let mut candidates = vec![0.0];
    for p in 0..m {
        let (mut lo, mut hi) = (vals[p], vals[p]);
        for q in p..m {
            lo = lo.min(vals[q]);
            hi = hi.max(vals[q]);
            osc[p][q] = hi - lo;
            candidates.push(hi - lo);
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let idx = candidates.partition_point(|&th| !modulus_feasible(&starts, &osc, delta, th));
    Ok(candidates[idx.min(candidates.len() - 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn ind(a: f64) -> StepFunction {
        StepFunction::indicator_from(a, 1.0).unwrap()
    }

    fn random_step<R: Rng>(r: &mut R, max_jumps: usize) -> StepFunction {
        let k = r.random_range(0..=max_jumps);
        let mut jumps: Vec<f64> = (0..k).map(|_| (r.random_range(1..=20) as f64) / 20.0).collect();
        jumps.sort_by(f64::total_cmp);
        jumps.dedup();
        let values = (0..=jumps.len()).map(|_| r.random_range(-3..=3) as f64 / 2.0).collect();
        StepFunction::new(jumps, values).unwrap()
    }

    /// Skorokhod distance over piecewise-linear time changes through a grid
    /// of knot positions, minimized by brute force: an upper bound that is
    /// tight when the optimal jump images lie on the grid.
    fn brute_skorokhod_single_jump(f: &StepFunction, g: &StepFunction, steps: usize) -> f64 {
        assert_eq!(f.jumps().len(), 1);
        let a = f.jumps()[0];
        let mut best = f64::INFINITY;
        for s in 1..steps {
            let c = s as f64 / steps as f64;
            let shifted = StepFunction::new(vec![c], f.values().to_vec()).unwrap();
            best = best.min((c - a).abs().max(sup_dist(&shifted, g)));
        }
        best
    }

    #[test]
    fn eval_and_right_continuity() {
        let f = StepFunction::new(vec![0.3, 1.0], vec![0.0, 1.0, 5.0]).unwrap();
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(0.3), 1.0);
        assert_eq!(f.eval(0.999), 1.0);
        assert_eq!(f.eval(1.0), 5.0);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(StepFunction::new(vec![0.5, 0.5], vec![0.0; 3]).is_err());
        assert!(StepFunction::new(vec![0.0], vec![0.0; 2]).is_err());
        assert!(StepFunction::new(vec![0.5], vec![0.0]).is_err());
        assert!(StepFunction::new(vec![], vec![f64::NAN]).is_err());
    }

    #[test]
    fn sup_dist_examples() {
        let f = ind(0.3);
        assert_eq!(sup_dist(&f, &f), 0.0);
        assert_eq!(sup_dist(&ind(0.5), &StepFunction::constant(0.0)), 1.0);
        assert_eq!(sup_dist(&ind(0.3), &ind(0.35)), 1.0);
    }

    #[test]
    fn skorokhod_examples() {
        let f = ind(0.3);
        assert_eq!(skorokhod_dist(&f, &f, 1e-9).unwrap(), 0.0);
        assert_abs_diff_eq!(skorokhod_dist(&f, &ind(0.35), 1e-9).unwrap(), 0.05, epsilon = 1e-9);
        let twice = StepFunction::indicator_from(0.3, 2.0).unwrap();
        assert_abs_diff_eq!(skorokhod_dist(&f, &twice, 1e-9).unwrap(), 1.0, epsilon = 1e-9);
        assert!(skorokhod_dist(&f, &f, 0.0).is_err());
    }

    #[test]
    fn skorokhod_jump_at_one_cannot_move() {
        let f = StepFunction::new(vec![1.0], vec![0.0, 1.0]).unwrap();
        let g = StepFunction::constant(0.0);
        // The jump at 1 is pinned; only the value gap at t = 1 is left.
        assert_abs_diff_eq!(skorokhod_dist(&f, &g, 1e-9).unwrap(), 1.0, epsilon = 1e-9);
        let h = StepFunction::new(vec![0.9], vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(skorokhod_dist(&f, &h, 1e-9).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn skorokhod_value_and_time_tradeoff() {
        // Matching the jumps costs 0.2 in time; leaving them costs the value gap 0.1.
        let f = StepFunction::new(vec![0.3], vec![0.0, 0.1]).unwrap();
        let g = StepFunction::new(vec![0.5], vec![0.0, 0.1]).unwrap();
        assert_abs_diff_eq!(skorokhod_dist(&f, &g, 1e-9).unwrap(), 0.1, epsilon = 1e-9);
    }

    #[test]
    fn skorokhod_matches_brute_force_single_jumps() {
        let mut r = rng::stream(31, 0);
        for _ in 0..200 {
            let a = r.random_range(1..100) as f64 / 100.0;
            let b = r.random_range(1..100) as f64 / 100.0;
            let f = StepFunction::new(vec![a], vec![r.random_range(-4..=4) as f64 / 4.0, r.random_range(-4..=4) as f64 / 4.0]).unwrap();
            let g = StepFunction::new(vec![b], vec![r.random_range(-4..=4) as f64 / 4.0, r.random_range(-4..=4) as f64 / 4.0]).unwrap();
            let d = skorokhod_dist(&f, &g, 1e-9).unwrap();
            let brute = brute_skorokhod_single_jump(&f, &g, 2000);
            assert!((d - brute).abs() < 1e-3 + 1e-9, "f={f:?} g={g:?} d={d} brute={brute}");
        }
    }

    #[test]
    fn modulus_examples() {
        let f = ind(0.5);
        assert_eq!(modulus(&f, 0.2).unwrap(), 0.0);
        let two = StepFunction::new(vec![0.4, 0.45], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(modulus(&two, 0.1).unwrap(), 1.0);
        assert_eq!(modulus(&StepFunction::constant(3.0), 0.7).unwrap(), 0.0);
        assert!(modulus(&f, 1.0).is_err());
    }

    #[test]
    fn modulus_uses_breakpoints_between_jumps() {
        let f = StepFunction::new(vec![0.1, 0.9], vec![0.0, 1.0, 2.0]).unwrap();
        // Cells [0,0.5) and [0.5,1) are both longer than 0.3.
        assert_eq!(modulus(&f, 0.3).unwrap(), 1.0);
        assert_eq!(modulus(&f, 0.05).unwrap(), 0.0);
        assert_eq!(modulus(&f, 0.6).unwrap(), 2.0);
    }

    #[test]
    fn modulus_ignores_jump_at_one() {
        let f = StepFunction::new(vec![1.0], vec![0.0, 7.0]).unwrap();
        assert_eq!(modulus(&f, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let f = StepFunction::new(vec![0.25, 0.7], vec![1.5, -2.0, 0.125]).unwrap();
        assert_eq!(StepFunction::from_csv(&f.to_csv().unwrap()).unwrap(), f);
        let js = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<StepFunction>(&js).unwrap(), f);
    }

    #[test]
    fn normalize_merges_equal_neighbours() {
        let f = StepFunction::new(vec![0.2, 0.4, 0.6], vec![1.0, 1.0, 2.0, 2.0]).unwrap().normalize();
        assert_eq!(f.jumps(), &[0.4]);
        assert_eq!(f.values(), &[1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn skorokhod_below_uniform_and_symmetric(seed in 0u64..5_000) {
            let mut r = rng::stream(seed, 7);
            let f = random_step(&mut r, 5);
            let g = random_step(&mut r, 5);
            let d = skorokhod_dist(&f, &g, 1e-9).unwrap();
            prop_assert!(d <= sup_dist(&f, &g) + 1e-12);
            let e = skorokhod_dist(&g, &f, 1e-9).unwrap();
            prop_assert!((d - e).abs() <= 3e-9, "{} vs {}", d, e);
        }

        #[test]
        fn skorokhod_triangle(seed in 0u64..5_000) {
            let mut r = rng::stream(seed, 8);
            let (f, g, h) = (random_step(&mut r, 4), random_step(&mut r, 4), random_step(&mut r, 4));
            let d = |x: &StepFunction, y: &StepFunction| skorokhod_dist(x, y, 1e-9).unwrap();
            prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 3e-9);
        }

        #[test]
        fn modulus_monotone_in_delta(seed in 0u64..5_000, d1 in 0.01f64..0.99, d2 in 0.01f64..0.99) {
            let mut r = rng::stream(seed, 9);
            let f = random_step(&mut r, 6);
            let (lo, hi) = (d1.min(d2), d1.max(d2));
            prop_assert!(modulus(&f, lo).unwrap() <= modulus(&f, hi).unwrap());
        }

        #[test]
        fn modulus_vanishes_below_min_gap(seed in 0u64..5_000) {
            let mut r = rng::stream(seed, 10);
            let f = random_step(&mut r, 6);
            let inner: Vec<f64> = f.jumps().iter().copied().filter(|&j| j < 1.0).collect();
            let pts: Vec<f64> = std::iter::once(0.0).chain(inner).chain(std::iter::once(1.0)).collect();
            let gap = pts.windows(2).map(|w| w[1] - w[0]).fold(1.0, f64::min);
            prop_assert_eq!(modulus(&f, 0.99 * gap).unwrap(), 0.0);
        }

        #[test]
        fn combine_agrees_pointwise(seed in 0u64..5_000, t in 0.0f64..=1.0) {
            let mut r = rng::stream(seed, 11);
            let (f, g) = (random_step(&mut r, 5), random_step(&mut r, 5));
            prop_assert_eq!(f.sub(&g).eval(t), f.eval(t) - g.eval(t));
        }
    }
}
