//! Linear aggregation maps over the average-type grid.
//!
//! With a shared grid and independent uniform indices, the aggregate at index
//! sum `s` is `E[(1/n) Σ_i σ_i(θ^{k_i}) | k_1 + … + k_n = s]`. Each player's
//! share `h_i(σ_i)` is the same linear map applied to its own table, so
//! `H(σ) = Σ_i h_i(σ_i)`.
//!
//! The module also carries the inverse bookkeeping a player needs to evaluate
//! its conditional expected cost from an aggregate table: removing its own
//! share and deconvolving what remains into the rivals' mean contribution
//! indexed by the rivals' own index sum.

use crate::error::{Error, Result};
use crate::game_model::ActionBox;
use crate::table::Table;
use crate::type_space::{CountTable, TypeGrid};

/// Largest `N^n` [`brute_force_aggregate`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Discrete strategy: row `k - 1` is the action taken at type `θ^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    values: Table,
}

impl Strategy {
    /// Checks every row against the box.
    pub fn new(values: Table, bx: &ActionBox) -> Result<Self> {
        if values.cols() != bx.dim() {
            return Err(Error::Shape(format!("strategy has {} columns, box dim {}", values.cols(), bx.dim())));
        }
        if let Some(k) = values.iter_rows().position(|row| !bx.contains(row)) {
            return Err(Error::Config(format!("strategy row {} = {:?} leaves the action box", k + 1, values.row(k))));
        }
        Ok(Strategy { values })
    }

    /// Wraps a table whose feasibility the caller guarantees (e.g. right after projection).
    pub fn from_projected(values: Table) -> Self {
        Strategy { values }
    }

    pub fn constant(n_points: usize, action: &[f64]) -> Self {
        let mut values = Table::zeros(n_points, action.len());
        for k in 0..n_points {
            values.row_mut(k).copy_from_slice(action);
        }
        Strategy { values }
    }

    /// Scalar strategy from one value per type.
    pub fn scalar(values: &[f64]) -> Self {
        Strategy { values: Table::column(values) }
    }

    pub fn table(&self) -> &Table {
        &self.values
    }

    pub fn into_table(self) -> Table {
        self.values
    }

    pub fn n_points(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Action at 0-based row `k`.
    pub fn action(&self, k: usize) -> &[f64] {
        self.values.row(k)
    }
}

/// Aggregate over the average-type grid; row `s - n` holds the value at index sum `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateFunction {
    values: Table,
}

impl AggregateFunction {
    pub fn new(values: Table) -> Self {
        AggregateFunction { values }
    }

    pub fn zeros(n_sums: usize, dim: usize) -> Self {
        AggregateFunction { values: Table::zeros(n_sums, dim) }
    }

    pub fn table(&self) -> &Table {
        &self.values
    }

    pub fn table_mut(&mut self) -> &mut Table {
        &mut self.values
    }

    pub fn into_table(self) -> Table {
        self.values
    }

    pub fn n_sums(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// `E[Σ_{draws} v(k_d) / r | sum of r draws = s]·r`, i.e. the conditional mean of
/// `v` at a single draw given the sum, for every `s ∈ [r, rN]`.
///
/// Row `j` of `values` is `v` at index `j + 1`; row `p` of the output is the
/// conditional mean at sum `r + p`.
pub(crate) fn conditional_mean_given_sum(values: &Table, counts: &CountTable, r: usize) -> Table {
    debug_assert!(r >= 1 && values.rows() == counts.n_points());
    let prev = counts.row_f64(r - 1);
    let total = counts.row_f64(r);
    let dim = values.cols();
    let mut out = Table::zeros(total.len(), dim);
    let mut acc = vec![0.0; total.len()];
    for col in 0..dim {
        acc.iter_mut().for_each(|a| *a = 0.0);
        // c_{r-1}(s - k) with s = r + p, k = j + 1 lives at position p - j
        for j in 0..values.rows() {
            let v = values[(j, col)];
            for (a, c) in acc[j..j + prev.len()].iter_mut().zip(prev) {
                *a += v * c;
            }
        }
        for (p, (a, c)) in acc.iter().zip(total).enumerate() {
            out[(p, col)] = a / c;
        }
    }
    out
}

fn check_strategy(strategy: &Strategy, counts: &CountTable) -> Result<()> {
    if strategy.n_points() != counts.n_points() {
        return Err(Error::Shape(format!(
            "strategy has {} rows, count table N = {}",
            strategy.n_points(),
            counts.n_points()
        )));
    }
    Ok(())
}

/// Player contribution `h_i(σ_i)`: at sum `s`, `(1/n) Σ_k σ(θ^k) P(own = k | s)`.
pub fn contribution(strategy: &Strategy, counts: &CountTable) -> Result<AggregateFunction> {
    check_strategy(strategy, counts)?;
    let n = counts.n_players();
    let mut out = conditional_mean_given_sum(strategy.table(), counts, n);
    out.scale(1.0 / n as f64);
    Ok(AggregateFunction::new(out))
}

/// Full aggregate `H(σ) = Σ_i h_i(σ_i)`.
pub fn full_aggregate(profile: &[Strategy], counts: &CountTable) -> Result<AggregateFunction> {
    let summed = sum_strategies(profile, counts, None)?;
    contribution(&Strategy::from_projected(summed), counts)
}

fn sum_strategies(profile: &[Strategy], counts: &CountTable, skip: Option<usize>) -> Result<Table> {
    if profile.len() != counts.n_players() {
        return Err(Error::Shape(format!("profile has {} strategies for {} players", profile.len(), counts.n_players())));
    }
    let dim = profile[0].dim();
    let mut summed = Table::zeros(counts.n_points(), dim);
    for (j, s) in profile.iter().enumerate() {
        check_strategy(s, counts)?;
        if s.dim() != dim {
            return Err(Error::Shape(format!("strategy {} has dim {}, expected {dim}", j + 1, s.dim())));
        }
        if Some(j) != skip {
            summed.axpy(1.0, s.table());
        }
    }
    Ok(summed)
}

/// Reference aggregate by enumerating all `N^n` index tuples.
pub fn brute_force_aggregate(profile: &[Strategy], grid: &TypeGrid) -> Result<AggregateFunction> {
    let n = profile.len();
    let big_n = grid.len();
    let tuples = (big_n as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if tuples > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "{big_n}^{n} tuples exceed the enumeration limit {BRUTE_FORCE_LIMIT}; use full_aggregate"
        )));
    }
    if n == 0 || profile.iter().any(|s| s.n_points() != big_n) {
        return Err(Error::Shape("profile does not match the grid".into()));
    }
    let dim = profile[0].dim();
    let n_sums = n * (big_n - 1) + 1;
    let mut acc = Table::zeros(n_sums, dim);
    let mut mass = vec![0.0f64; n_sums];
    let weight = 1.0 / tuples as f64;
    let mut idx = vec![0usize; n];
    'outer: loop {
        let pos: usize = idx.iter().sum();
        mass[pos] += weight;
        let row = acc.row_mut(pos);
        for (player, &k) in idx.iter().enumerate() {
            for (a, v) in row.iter_mut().zip(profile[player].action(k)) {
                *a += weight * v / n as f64;
            }
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < big_n {
                continue 'outer;
            }
            *slot = 0;
        }
        break;
    }
    for (p, m) in mass.iter().enumerate() {
        acc.row_mut(p).iter_mut().for_each(|a| *a /= m);
    }
    Ok(AggregateFunction::new(acc))
}

/// Rivals' mean contribution `M_i(r) = E[(1/n) Σ_{j≠i} σ_j(θ^{k_j}) | Σ_{j≠i} k_j = r]`,
/// computed directly from the profile. Row `r - (n - 1)` holds rival sum `r`.
pub fn rival_means(profile: &[Strategy], player: usize, counts: &CountTable) -> Result<Table> {
    let n = counts.n_players();
    if n < 2 {
        return Err(Error::Degenerate("a single player has no rivals".into()));
    }
    if player >= n {
        return Err(Error::Index(format!("player {} of {n}", player + 1)));
    }
    let summed = sum_strategies(profile, counts, Some(player))?;
    let mut out = conditional_mean_given_sum(&summed, counts, n - 1);
    out.scale(1.0 / n as f64);
    Ok(out)
}

/// Recovers [`rival_means`] for `own`'s player from an aggregate table alone.
///
/// Removing `h_i(own)` leaves `R(s) = Σ_k P(own = k | s) M(s − k)`; with
/// `Q(r) = c_{n−1}(r) M(r)` this reads `c_n(s) R(s) = Σ_{k=1..N} Q(s − k)`, a
/// moving sum that is inverted exactly by forward substitution from the lowest
/// sum and backward substitution from the highest, each used on the half of
/// the support where the counts it divides by are smallest. For tables that
/// are not of the form `H(σ)` (e.g. consensus estimates in transit) the result
/// is the rival table matching the extreme sums.
pub fn rival_means_from_aggregate(agg: &AggregateFunction, own: &Strategy, counts: &CountTable) -> Result<Table> {
    let n = counts.n_players();
    if n < 2 {
        return Err(Error::Degenerate("a single player has no rivals".into()));
    }
    if agg.n_sums() != counts.n_sums() || agg.dim() != own.dim() {
        return Err(Error::Shape(format!(
            "aggregate is {:?}, expected ({}, {})",
            agg.table().shape(),
            counts.n_sums(),
            own.dim()
        )));
    }
    let own_share = contribution(own, counts)?;
    let big_n = counts.n_points();
    let c_all = counts.row_f64(n);
    let c_rivals = counts.row_f64(n - 1);
    let len = c_rivals.len();
    let dim = own.dim();
    let mut out = Table::zeros(len, dim);
    let mut q = vec![0.0; len];
    let mut scaled = vec![0.0; c_all.len()];
    let split = len / 2;
    for col in 0..dim {
        for (p, slot) in scaled.iter_mut().enumerate() {
            *slot = c_all[p] * (agg.table()[(p, col)] - own_share.table()[(p, col)]);
        }
        // forward: scaled[ρ] = Σ_{j=0..N-1} q[ρ - j]
        for rho in 0..split {
            let window: f64 = (1..big_n.min(rho + 1)).map(|j| q[rho - j]).sum();
            q[rho] = scaled[rho] - window;
        }
        // backward: scaled[σ] = Σ_{j=0..N-1} q[σ - j], solved for q[σ - (N - 1)]
        for rho in (split..len).rev() {
            let sigma = rho + big_n - 1;
            let window: f64 = (rho + 1..=sigma.min(len - 1)).map(|t| q[t]).sum();
            q[rho] = scaled[sigma] - window;
        }
        for (rho, value) in q.iter().enumerate() {
            out[(rho, col)] = value / c_rivals[rho];
        }
    }
    Ok(out)
}

/// Conditional law of the index sum given own index `k`, together with the
/// aggregate each sum implies when the player's own action is pinned at row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalView {
    /// `P(s | own = k)` by position `s - n`.
    pub weights: Vec<f64>,
    /// `σ(θ^k)/n + M(s − k)` wherever the weight is positive, the raw aggregate elsewhere.
    pub values: Table,
}

impl ConditionalView {
    /// `Σ_s P(s | k) · value(s)`.
    pub fn expectation(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.cols()];
        for (w, row) in self.weights.iter().zip(self.values.iter_rows()) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        out
    }
}

/// Pairs the conditional weights for own index `k` (1-based) with the
/// own-pinned aggregate read off `agg`.
pub fn conditional_aggregate_view(
    agg: &AggregateFunction,
    own: &Strategy,
    k: usize,
    counts: &CountTable,
) -> Result<ConditionalView> {
    let weights = counts.conditional_avg_given_own(k)?;
    let rivals = rival_means_from_aggregate(agg, own, counts)?;
    let n = counts.n_players() as f64;
    let mut values = agg.table().clone();
    for rho in 0..rivals.rows() {
        let p = rho + k - 1;
        for (col, v) in values.row_mut(p).iter_mut().enumerate() {
            *v = own.action(k - 1)[col] / n + rivals[(rho, col)];
        }
    }
    Ok(ConditionalView { weights, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::type_space::{build_uniform_grid, sum_index_counts};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_strategy(rng: &mut ChaCha8Rng, n_points: usize, dim: usize) -> Strategy {
        Strategy::from_projected(Table::from_vec(n_points, dim, (0..n_points * dim).map(|_| rng.gen_range(-5.0..5.0)).collect()))
    }

    #[test]
    fn contribution_examples() {
        let c = sum_index_counts(2, 2).unwrap();
        let h = contribution(&Strategy::scalar(&[3.0, 3.0]), &c).unwrap();
        assert_eq!(h.table().as_slice(), &[1.5, 1.5, 1.5]);
        let (a, b) = (2.0, 6.0);
        let h = contribution(&Strategy::scalar(&[a, b]), &c).unwrap();
        assert_eq!(h.table().as_slice(), &[a / 2.0, (a + b) / 4.0, b / 2.0]);
        let h = contribution(&Strategy::scalar(&[0.0, 0.0]), &c).unwrap();
        assert_eq!(h.table().as_slice(), &[0.0; 3]);
        assert!(matches!(contribution(&Strategy::scalar(&[1.0]), &c), Err(Error::Shape(_))));
    }

    #[test]
    fn full_aggregate_examples() {
        let c = sum_index_counts(2, 2).unwrap();
        let grid = build_uniform_grid(0.0, 1.0, 2).unwrap();
        let profile = vec![Strategy::scalar(&[0.0, 2.0]), Strategy::scalar(&[0.0, 2.0])];
        let agg = full_aggregate(&profile, &c).unwrap();
        assert_eq!(agg.table().as_slice(), &[0.0, 1.0, 2.0]);
        let brute = brute_force_aggregate(&profile, &grid).unwrap();
        assert_eq!(brute.table().as_slice(), &[0.0, 1.0, 2.0]);

        let c = sum_index_counts(3, 4).unwrap();
        let profile = vec![Strategy::constant(4, &[6.0]), Strategy::constant(4, &[0.0]), Strategy::constant(4, &[0.0])];
        let agg = full_aggregate(&profile, &c).unwrap();
        assert!(agg.table().as_slice().iter().all(|v| (v - 2.0).abs() < 1e-15));
        let profile = vec![Strategy::constant(4, &[6.0]); 3];
        let agg = full_aggregate(&profile, &c).unwrap();
        assert!(agg.table().as_slice().iter().all(|v| (v - 6.0).abs() < 1e-14));
    }

    #[test]
    fn brute_force_guard() {
        let grid = build_uniform_grid(0.0, 1.0, 50).unwrap();
        let profile = vec![Strategy::constant(50, &[1.0]); 5];
        assert!(matches!(brute_force_aggregate(&profile, &grid), Err(Error::TooLarge(_))));
    }

    #[test]
    fn aggregate_matches_enumeration_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, big_n) in [(3, 4), (2, 5), (4, 3)] {
            let c = sum_index_counts(n, big_n).unwrap();
            let grid = build_uniform_grid(1.0, 2.0, big_n).unwrap();
            for _ in 0..20 {
                let profile: Vec<_> = (0..n).map(|_| random_strategy(&mut rng, big_n, 2)).collect();
                let fast = full_aggregate(&profile, &c).unwrap();
                let slow = brute_force_aggregate(&profile, &grid).unwrap();
                assert!(fast.table().sub(slow.table()).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn view_examples() {
        let c = sum_index_counts(2, 2).unwrap();
        let own = Strategy::scalar(&[0.0, 0.0]);
        let agg = AggregateFunction::new(Table::column(&[4.0, 4.0, 4.0]));
        let view = conditional_aggregate_view(&agg, &own, 1, &c).unwrap();
        assert_eq!(view.weights, vec![0.5, 0.5, 0.0]);
        assert_abs_diff_eq!(view.expectation()[0], 4.0, epsilon = 1e-14);
        assert!(conditional_aggregate_view(&agg, &own, 3, &c).is_err());
    }

    #[test]
    fn deconvolution_recovers_rival_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, big_n) in [(2, 1), (2, 6), (3, 4), (5, 10), (5, 50)] {
            let c = sum_index_counts(n, big_n).unwrap();
            let profile: Vec<_> = (0..n).map(|_| random_strategy(&mut rng, big_n, 1)).collect();
            let agg = full_aggregate(&profile, &c).unwrap();
            for i in 0..n {
                let direct = rival_means(&profile, i, &c).unwrap();
                let recovered = rival_means_from_aggregate(&agg, &profile[i], &c).unwrap();
                let err = direct.sub(&recovered).max_abs();
                assert!(err < 1e-9, "n={n} N={big_n} player={i} err={err:e}");
            }
        }
    }

    #[test]
    fn view_pins_own_action() {
        // own-pinned expectation = σ(k)/n + mean rival contribution
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = sum_index_counts(3, 4).unwrap();
        let profile: Vec<_> = (0..3).map(|_| random_strategy(&mut rng, 4, 1)).collect();
        let agg = full_aggregate(&profile, &c).unwrap();
        let rivals_mean: f64 = profile[1..].iter().map(|s| s.table().as_slice().iter().sum::<f64>() / 4.0).sum::<f64>() / 3.0;
        for k in 1..=4 {
            let view = conditional_aggregate_view(&agg, &profile[0], k, &c).unwrap();
            let expected = profile[0].action(k - 1)[0] / 3.0 + rivals_mean;
            assert_abs_diff_eq!(view.expectation()[0], expected, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn contribution_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = sum_index_counts(3, 5).unwrap();
            let s1 = random_strategy(&mut rng, 5, 2);
            let s2 = random_strategy(&mut rng, 5, 2);
            let mut combo = s1.table().clone();
            combo.scale(alpha);
            combo.axpy(beta, s2.table());
            let lhs = contribution(&Strategy::from_projected(combo), &c).unwrap();
            let mut rhs = contribution(&s1, &c).unwrap().into_table();
            rhs.scale(alpha);
            rhs.axpy(beta, contribution(&s2, &c).unwrap().table());
            prop_assert!(lhs.table().sub(&rhs).max_abs() < 1e-12);
        }

        #[test]
        fn aggregate_stays_in_hull(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = sum_index_counts(4, 5).unwrap();
            let profile: Vec<_> = (0..4)
                .map(|_| Strategy::scalar(&(0..5).map(|_| rng.gen_range(0.0..20.0)).collect::<Vec<_>>()))
                .collect();
            let agg = full_aggregate(&profile, &c).unwrap();
            prop_assert!(agg.table().as_slice().iter().all(|&v| (-1e-12..=20.0 + 1e-12).contains(&v)));
            let mut shuffled = profile.clone();
            shuffled.rotate_left(1 + (seed as usize % 3));
            let again = full_aggregate(&shuffled, &c).unwrap();
            prop_assert!(agg.table().sub(again.table()).max_abs() < 1e-12);
        }
    }
}
