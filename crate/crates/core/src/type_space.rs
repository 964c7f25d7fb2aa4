//! Equiprobable discretization of type intervals and the combinatorics of
//! index sums.
//!
//! Every player shares one grid `θ^1 < … < θ^N` with `P(θ^k) = k/N`, so the
//! discrete types are uniform over `{1..N}` and independent across players.
//! The law of the average type is then carried entirely by the index sum
//! `s = k_1 + … + k_n ∈ [n, nN]`, whose multiplicities `c_n(s)` come from
//! iterated discrete convolution (the "sum of n fair N-sided dice" table).
//!
//! Conventions used throughout the crate:
//! - type indices `k` in this module's API are 1-based (`1..=N`);
//! - sums `s` are actual index sums (`n..=nN`);
//! - tables over the average-type grid are stored by position `s - n`.

use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance for `cdf(lower) = 0` and `cdf(upper) = 1`.
const CDF_ENDPOINT_TOL: f64 = 1e-9;
/// Points in the monotonicity sweep run on construction.
const CDF_SWEEP_POINTS: usize = 1000;
/// Bisection iteration cap.
const MAX_BISECTION_ITERS: usize = 200;

pub type CdfFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Marginal distribution of a single player's type.
#[derive(Clone)]
pub enum Marginal {
    Uniform,
    Cdf(CdfFn),
}

/// A compact type interval `[lower, upper]` together with its marginal CDF.
#[derive(Clone)]
pub struct TypeInterval {
    lower: f64,
    upper: f64,
    marginal: Marginal,
}

impl fmt::Debug for TypeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.marginal {
            Marginal::Uniform => "uniform",
            Marginal::Cdf(_) => "cdf",
        };
        f.debug_struct("TypeInterval")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("marginal", &kind)
            .finish()
    }
}

impl TypeInterval {
    /// Uniform marginal on `[lower, upper]`.
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        check_bounds(lower, upper)?;
        Ok(TypeInterval { lower, upper, marginal: Marginal::Uniform })
    }

    /// Arbitrary marginal given by its CDF. The CDF must vanish at `lower`,
    /// reach one at `upper` and be non-decreasing on a dense sweep.
    pub fn with_cdf(lower: f64, upper: f64, cdf: CdfFn) -> Result<Self> {
        check_bounds(lower, upper)?;
        let at_lower = cdf(lower);
        let at_upper = cdf(upper);
        if at_lower.abs() > CDF_ENDPOINT_TOL || (at_upper - 1.0).abs() > CDF_ENDPOINT_TOL {
            return Err(Error::Model(format!(
                "cdf must be 0 at {lower} and 1 at {upper}, got {at_lower} and {at_upper}"
            )));
        }
        let mut prev = at_lower;
        for j in 1..=CDF_SWEEP_POINTS {
            let theta = lower + (upper - lower) * j as f64 / CDF_SWEEP_POINTS as f64;
            let value = cdf(theta);
            if !value.is_finite() || value < prev {
                return Err(Error::Model(format!("cdf is not non-decreasing near θ = {theta}")));
            }
            prev = value;
        }
        Ok(TypeInterval { lower, upper, marginal: Marginal::Cdf(cdf) })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn marginal(&self) -> &Marginal {
        &self.marginal
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        match &self.marginal {
            Marginal::Uniform => ((theta - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0),
            Marginal::Cdf(f) => f(theta),
        }
    }

    /// Equiprobable grid with `n_points` cells. Uniform marginals use the
    /// closed form; anything else goes through bisection at `tol`.
    pub fn grid(&self, n_points: usize, tol: f64) -> Result<TypeGrid> {
        match self.marginal {
            Marginal::Uniform => build_uniform_grid(self.lower, self.upper, n_points),
            Marginal::Cdf(_) => build_quantile_grid(self, n_points, tol),
        }
    }
}

fn check_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(Error::Config(format!("type interval needs lower < upper, got [{lower}, {upper}]")));
    }
    Ok(())
}

/// Shared discrete type grid `θ^1 < … < θ^N` with `θ^0 = lower`.
///
/// Point `θ^k` represents the half-open cell `(θ^{k-1}, θ^k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeGrid {
    lower: f64,
    upper: f64,
    points: Vec<f64>,
}

impl TypeGrid {
    /// Grid from explicit points; they must be strictly increasing inside `(lower, upper]`.
    pub fn new(lower: f64, upper: f64, points: Vec<f64>) -> Result<Self> {
        check_bounds(lower, upper)?;
        if points.is_empty() {
            return Err(Error::Config("type grid needs at least one point".into()));
        }
        let mut prev = lower;
        for &p in &points {
            if !(p > prev) {
                return Err(Error::Model(format!("grid points must increase strictly, {p} after {prev}")));
            }
            prev = p;
        }
        if prev > upper {
            return Err(Error::Model(format!("grid point {prev} above upper bound {upper}")));
        }
        Ok(TypeGrid { lower, upper, points })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Number of points `N`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points, 0-based: `points()[k - 1] = θ^k`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Largest cell width `max_k (θ^k - θ^{k-1})`.
    pub fn max_gap(&self) -> f64 {
        let mut prev = self.lower;
        let mut gap: f64 = 0.0;
        for &p in &self.points {
            gap = gap.max(p - prev);
            prev = p;
        }
        gap
    }

    /// 0-based row of the cell `(θ^{k-1}, θ^k]` containing `theta`.
    ///
    /// Cell boundaries are matched with a tolerance of `1e-9` of the interval
    /// width so that nested grids built independently line up.
    pub fn locate(&self, theta: f64) -> Result<usize> {
        let slack = 1e-9 * (self.upper - self.lower);
        if theta > self.upper + slack || theta < self.lower - slack {
            return Err(Error::Index(format!(
                "type {theta} outside [{}, {}]",
                self.lower, self.upper
            )));
        }
        let row = self.points.partition_point(|&p| p + slack < theta);
        Ok(row.min(self.points.len() - 1))
    }
}

/// Equiprobable grid for the uniform marginal: `θ^k = lower + k (upper - lower) / N`.
pub fn build_uniform_grid(lower: f64, upper: f64, n_points: usize) -> Result<TypeGrid> {
    check_bounds(lower, upper)?;
    if n_points == 0 {
        return Err(Error::Config("number of grid points must be at least 1".into()));
    }
    let width = upper - lower;
    let mut points: Vec<f64> =
        (1..=n_points).map(|k| lower + k as f64 * width / n_points as f64).collect();
    points[n_points - 1] = upper;
    TypeGrid::new(lower, upper, points)
}

/// Quantile grid: `θ^k` solves `cdf(θ) = k/N`, found by bisection to an
/// absolute bracket width of `tol`.
pub fn build_quantile_grid(interval: &TypeInterval, n_points: usize, tol: f64) -> Result<TypeGrid> {
    if n_points == 0 {
        return Err(Error::Config("number of grid points must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("bisection tolerance must be positive, got {tol}")));
    }
    let mut points = Vec::with_capacity(n_points);
    for k in 1..=n_points {
        let target = k as f64 / n_points as f64;
        points.push(invert_cdf(interval, target, tol)?);
    }
    TypeGrid::new(interval.lower, interval.upper, points)
}

/// Smallest `θ` (up to `tol`) with `cdf(θ) >= target`.
fn invert_cdf(interval: &TypeInterval, target: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (interval.lower, interval.upper);
    let (mut f_lo, mut f_hi) = (interval.cdf(lo), interval.cdf(hi));
    for _ in 0..MAX_BISECTION_ITERS {
        if hi - lo <= tol {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = interval.cdf(mid);
        if !f_mid.is_finite() || f_mid < f_lo || f_mid > f_hi {
            return Err(Error::Model(format!(
                "cdf is not monotone on [{lo}, {hi}]: cdf({mid}) = {f_mid}"
            )));
        }
        if f_mid >= target {
            hi = mid;
            f_hi = f_mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Err(Error::Numeric(format!(
        "bisection for quantile {target} did not reach tolerance {tol} in {MAX_BISECTION_ITERS} iterations"
    )))
}

/// Multiplicities `c_r(s)` of index sums of `r` independent draws from `{1..N}`,
/// for every `r ∈ [0, n]`.
///
/// Counts are exact integers held in `u128`; every addition is checked so an
/// overflow surfaces as [`Error::Overflow`] instead of wrapping.
#[derive(Debug, Clone)]
pub struct CountTable {
    n_players: usize,
    n_points: usize,
    /// `counts[r][s - r]` for `s ∈ [r, rN]`; `counts[0] = [1]` (the empty sum).
    counts: Vec<Vec<u128>>,
    counts_f64: Vec<Vec<f64>>,
}

/// Fills the table by iterated convolution `c_r(s) = Σ_{k=1..N} c_{r-1}(s - k)`.
pub fn sum_index_counts(n_players: usize, n_points: usize) -> Result<CountTable> {
    if n_players == 0 || n_points == 0 {
        return Err(Error::Config(format!(
            "count table needs n_players >= 1 and N >= 1, got ({n_players}, {n_points})"
        )));
    }
    let mut counts: Vec<Vec<u128>> = Vec::with_capacity(n_players + 1);
    counts.push(vec![1]);
    for r in 1..=n_players {
        let prev = &counts[r - 1];
        let len = r * (n_points - 1) + 1;
        let mut row = vec![0u128; len];
        // position p in row r is sum s = r + p; the previous row sits at s' = (r-1) + p'
        for (p_prev, &c) in prev.iter().enumerate() {
            for k in 0..n_points {
                let slot = &mut row[p_prev + k];
                *slot = slot.checked_add(c).ok_or_else(|| {
                    Error::Overflow(format!(
                        "c_{r} exceeds 128-bit range for N = {n_points}; reduce n or N"
                    ))
                })?;
            }
        }
        counts.push(row);
    }
    let counts_f64 = counts.iter().map(|row| row.iter().map(|&c| c as f64).collect()).collect();
    Ok(CountTable { n_players, n_points, counts, counts_f64 })
}

impl CountTable {
    pub fn n_players(&self) -> usize {
        self.n_players
    }

    /// Grid size `N`.
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Size `S = n (N - 1) + 1` of the average-type grid.
    pub fn n_sums(&self) -> usize {
        self.n_players * (self.n_points - 1) + 1
    }

    /// Size of the support of `c_r`.
    pub fn support_len(&self, r: usize) -> usize {
        r * (self.n_points - 1) + 1
    }

    /// Range of sums with positive count for `r` draws.
    pub fn support(&self, r: usize) -> RangeInclusive<usize> {
        r..=r * self.n_points
    }

    /// `c_r(s)`, zero outside the support.
    pub fn count(&self, r: usize, s: usize) -> u128 {
        if r > self.n_players || s < r || s > r * self.n_points {
            return 0;
        }
        self.counts[r][s - r]
    }

    /// The support of `c_r` as a slice indexed by `s - r`.
    pub fn row(&self, r: usize) -> &[u128] {
        &self.counts[r]
    }

    /// Floating-point copy of [`CountTable::row`].
    pub fn row_f64(&self, r: usize) -> &[f64] {
        &self.counts_f64[r]
    }

    /// `N^r`, when it fits.
    pub fn total(&self, r: usize) -> Option<u128> {
        (self.n_points as u128).checked_pow(r as u32)
    }

    /// Whether every count also fits a 64-bit integer.
    pub fn fits_u64(&self) -> bool {
        self.counts.iter().flatten().all(|&c| c <= u64::MAX as u128)
    }

    /// Probability of each index sum of `r` draws, by position `s - r`.
    pub fn sum_distribution(&self, r: usize) -> Vec<f64> {
        let total = (self.n_points as f64).powi(r as i32);
        self.counts_f64[r].iter().map(|&c| c / total).collect()
    }

    /// Law of the average type: entry `s - n` is `c_n(s) / N^n`.
    pub fn avg_type_distribution(&self) -> Vec<f64> {
        self.sum_distribution(self.n_players)
    }

    /// Law of the index sum given the own index `k` (1-based):
    /// entry `s - n` is `c_{n-1}(s - k) / N^{n-1}`.
    pub fn conditional_avg_given_own(&self, k: usize) -> Result<Vec<f64>> {
        if self.n_players < 2 {
            return Err(Error::Degenerate("a single player has no rivals to condition on".into()));
        }
        self.check_type_index(k)?;
        let n = self.n_players;
        let rivals = self.sum_distribution(n - 1);
        let mut out = vec![0.0; self.n_sums()];
        // rival sum r = s - k sits at position (s - k) - (n - 1) = (s - n) - (k - 1)
        for (q, &p) in rivals.iter().enumerate() {
            out[q + k - 1] = p;
        }
        Ok(out)
    }

    /// Law of the own index given the sum `s`: entry `k - 1` is
    /// `c_{n-1}(s - k) / c_n(s)`.
    pub fn conditional_own_given_avg(&self, s: usize) -> Result<Vec<f64>> {
        let n = self.n_players;
        if !self.support(n).contains(&s) {
            return Err(Error::Index(format!("sum {s} outside [{n}, {}]", n * self.n_points)));
        }
        let total = self.counts_f64[n][s - n];
        Ok((1..=self.n_points)
            .map(|k| if s >= k { self.count(n - 1, s - k) as f64 / total } else { 0.0 })
            .collect())
    }

    /// Average-type value attached to each sum: `E[(θ^{k_1} + … + θ^{k_n}) / n | s]`.
    ///
    /// For an affine grid this is exactly `lower + (s/n)·gap`.
    pub fn avg_type_points(&self, grid: &TypeGrid) -> Result<Vec<f64>> {
        if grid.len() != self.n_points {
            return Err(Error::Shape(format!("grid has {} points, table {}", grid.len(), self.n_points)));
        }
        let n = self.n_players;
        (n..=n * self.n_points)
            .map(|s| {
                let weights = self.conditional_own_given_avg(s)?;
                Ok(weights.iter().zip(grid.points()).map(|(w, t)| w * t).sum())
            })
            .collect()
    }

    fn check_type_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n_points {
            return Err(Error::Index(format!("type index {k} outside [1, {}]", self.n_points)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Exhaustive enumeration of all `N^r` index tuples, grouped by sum.
    fn enumerate_counts(r: usize, n_points: usize) -> Vec<u128> {
        let mut out = vec![0u128; r * (n_points - 1) + 1];
        let mut idx = vec![1usize; r];
        loop {
            let s: usize = idx.iter().sum();
            out[s - r] += 1;
            let mut pos = 0;
            loop {
                if pos == r {
                    return out;
                }
                idx[pos] += 1;
                if idx[pos] <= n_points {
                    break;
                }
                idx[pos] = 1;
                pos += 1;
            }
        }
    }

    #[test]
    fn uniform_grid_examples() {
        let g = build_uniform_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(g.points(), &[0.25, 0.5, 0.75, 1.0]);
        let g = build_uniform_grid(1.0, 2.0, 2).unwrap();
        assert_eq!(g.points(), &[1.5, 2.0]);
        let g = build_uniform_grid(1.0, 2.0, 50).unwrap();
        for (k, p) in g.points().iter().enumerate() {
            assert_abs_diff_eq!(*p, 1.0 + (k + 1) as f64 / 50.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn uniform_grid_rejects_bad_input() {
        assert!(matches!(build_uniform_grid(1.0, 1.0, 3), Err(Error::Config(_))));
        assert!(matches!(build_uniform_grid(0.0, 1.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn quantile_grid_matches_uniform() {
        let iv = TypeInterval::with_cdf(0.0, 1.0, Arc::new(|t: f64| t.clamp(0.0, 1.0))).unwrap();
        let g = build_quantile_grid(&iv, 4, 1e-12).unwrap();
        for (p, e) in g.points().iter().zip([0.25, 0.5, 0.75, 1.0]) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_grid_inverts_square_cdf() {
        let iv = TypeInterval::with_cdf(0.0, 1.0, Arc::new(|t: f64| t * t)).unwrap();
        let g = build_quantile_grid(&iv, 4, 1e-10).unwrap();
        let expected = [0.5, 0.5f64.sqrt(), 0.75f64.sqrt(), 1.0];
        for (p, e) in g.points().iter().zip(expected) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-10);
        }
        let g = build_quantile_grid(&iv, 2, 1e-10).unwrap();
        assert_abs_diff_eq!(g.points()[0], 0.5f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(g.points()[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn quantile_grid_error_paths() {
        // non-monotone inside (0.5, 0.75); built directly to bypass the construction sweep
        let dip: CdfFn = Arc::new(|t: f64| if t > 0.5 && t < 0.75 { 0.1 } else { t });
        let iv = TypeInterval { lower: 0.0, upper: 1.0, marginal: Marginal::Cdf(dip) };
        assert!(matches!(invert_cdf(&iv, 0.6, 1e-12), Err(Error::Model(_))));

        let linear = TypeInterval { lower: 0.0, upper: 1.0, marginal: Marginal::Cdf(Arc::new(|t: f64| t)) };
        assert!(matches!(build_quantile_grid(&linear, 4, 1e-300), Err(Error::Numeric(_))));
        assert!(matches!(build_quantile_grid(&linear, 4, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn interval_validation() {
        assert!(TypeInterval::with_cdf(0.0, 1.0, Arc::new(|t: f64| 0.5 * t)).is_err());
        assert!(TypeInterval::with_cdf(0.0, 1.0, Arc::new(|t: f64| (1.0 - t).max(t))).is_err());
        assert!(TypeInterval::uniform(2.0, 1.0).is_err());
    }

    #[test]
    fn count_examples() {
        let c = sum_index_counts(2, 2).unwrap();
        assert_eq!(c.row(2), &[1, 2, 1]);
        let c = sum_index_counts(3, 2).unwrap();
        assert_eq!(c.row(3), &[1, 3, 3, 1]);
        let c = sum_index_counts(3, 4).unwrap();
        assert_eq!(c.row(3), enumerate_counts(3, 4).as_slice());
        assert_eq!(c.row(3), &[1, 3, 6, 10, 12, 12, 10, 6, 3, 1]);
    }

    #[test]
    fn counts_match_enumeration_small() {
        for n in 1..=4 {
            for big_n in 1..=5 {
                let c = sum_index_counts(n, big_n).unwrap();
                for r in 1..=n {
                    assert_eq!(c.row(r), enumerate_counts(r, big_n).as_slice(), "r={r} N={big_n}");
                }
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let c = sum_index_counts(4, 1000).unwrap();
        assert!(c.fits_u64());
        assert!(matches!(sum_index_counts(40, 1000), Err(Error::Overflow(_))));
        assert!(matches!(sum_index_counts(0, 3), Err(Error::Config(_))));
    }

    #[test]
    fn distribution_examples() {
        let c = sum_index_counts(2, 2).unwrap();
        assert_eq!(c.avg_type_distribution(), vec![0.25, 0.5, 0.25]);
        let grid = build_uniform_grid(0.0, 1.0, 2).unwrap();
        let pts = c.avg_type_points(&grid).unwrap();
        assert_abs_diff_eq!(pts[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pts[1], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(pts[2], 1.0, epsilon = 1e-15);

        let c = sum_index_counts(1, 7).unwrap();
        assert!(c.avg_type_distribution().iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));

        let c = sum_index_counts(3, 4).unwrap();
        let expected = [1., 3., 6., 10., 12., 12., 10., 6., 3., 1.].map(|v| v / 64.0);
        assert_eq!(c.avg_type_distribution(), expected.to_vec());
    }

    #[test]
    fn conditional_examples() {
        let c = sum_index_counts(2, 2).unwrap();
        assert_eq!(c.conditional_avg_given_own(1).unwrap(), vec![0.5, 0.5, 0.0]);
        assert_eq!(c.conditional_avg_given_own(2).unwrap(), vec![0.0, 0.5, 0.5]);
        assert_eq!(c.conditional_own_given_avg(3).unwrap(), vec![0.5, 0.5]);
        assert_eq!(c.conditional_own_given_avg(2).unwrap(), vec![1.0, 0.0]);

        let c = sum_index_counts(3, 4).unwrap();
        let expected = [0., 1., 2., 3., 4., 3., 2., 1., 0., 0.].map(|v| v / 16.0);
        assert_eq!(c.conditional_avg_given_own(2).unwrap(), expected.to_vec());
        let expected = [4., 3., 2., 1.].map(|v| v / 10.0);
        assert_eq!(c.conditional_own_given_avg(6).unwrap(), expected.to_vec());
    }

    #[test]
    fn conditional_error_paths() {
        let c = sum_index_counts(1, 3).unwrap();
        assert!(matches!(c.conditional_avg_given_own(1), Err(Error::Degenerate(_))));
        let c = sum_index_counts(3, 4).unwrap();
        assert!(matches!(c.conditional_avg_given_own(0), Err(Error::Index(_))));
        assert!(matches!(c.conditional_avg_given_own(5), Err(Error::Index(_))));
        assert!(matches!(c.conditional_own_given_avg(2), Err(Error::Index(_))));
        assert!(matches!(c.conditional_own_given_avg(13), Err(Error::Index(_))));
    }

    #[test]
    fn locate_respects_half_open_cells() {
        let g = build_uniform_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(g.locate(0.25).unwrap(), 0);
        assert_eq!(g.locate(0.2500001).unwrap(), 1);
        assert_eq!(g.locate(1.0).unwrap(), 3);
        assert_eq!(g.locate(0.0).unwrap(), 0);
        assert!(g.locate(1.1).is_err());
        assert_abs_diff_eq!(g.max_gap(), 0.25, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn count_table_invariants(n in 1usize..6, big_n in 1usize..12) {
            let c = sum_index_counts(n, big_n).unwrap();
            for r in 1..=n {
                let total: u128 = c.row(r).iter().sum();
                prop_assert_eq!(total, (big_n as u128).pow(r as u32));
                let row = c.row(r);
                for p in 0..row.len() {
                    prop_assert_eq!(row[p], row[row.len() - 1 - p]);
                }
            }
            prop_assert!(c.row(1).iter().all(|&v| v == 1));
        }

        #[test]
        fn conditionals_normalize_and_satisfy_bayes(n in 2usize..5, big_n in 1usize..8) {
            let c = sum_index_counts(n, big_n).unwrap();
            let marginal = c.avg_type_distribution();
            prop_assert!((marginal.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let by_own: Vec<Vec<f64>> =
                (1..=big_n).map(|k| c.conditional_avg_given_own(k).unwrap()).collect();
            for row in &by_own {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            for s in n..=n * big_n {
                let own = c.conditional_own_given_avg(s).unwrap();
                prop_assert!((own.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for k in 1..=big_n {
                    let lhs = marginal[s - n] * own[k - 1];
                    let rhs = by_own[k - 1][s - n] / big_n as f64;
                    prop_assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn quantile_grid_hits_levels(power in 1.0f64..4.0, big_n in 1usize..40) {
            let tol = 1e-11;
            let iv = TypeInterval::with_cdf(0.0, 1.0, Arc::new(move |t: f64| t.clamp(0.0, 1.0).powf(power))).unwrap();
            let g = build_quantile_grid(&iv, big_n, tol).unwrap();
            for (k, &p) in g.points().iter().enumerate() {
                let err = iv.cdf(p) - (k + 1) as f64 / big_n as f64;
                // the density is at most `power`, so a bracket of width tol moves the cdf by power * tol
                prop_assert!(err.abs() <= 10.0 * power * tol, "k={} err={}", k + 1, err);
            }
        }
    }
}
