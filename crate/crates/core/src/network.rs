//! Time-varying doubly stochastic communication weights.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::Table;

/// Row/column sum tolerance for emitted weight matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Undirected edge between 0-based nodes.
pub type Edge = (usize, usize);

/// Symmetric doubly stochastic `n × n` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: Table,
}

impl WeightMatrix {
    pub fn table(&self) -> &Table {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// Smallest strictly positive entry.
    pub fn min_positive(&self) -> f64 {
        self.w.as_slice().iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.w.iter_rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    /// Row and column sums, nonnegativity, positive diagonal and the `eta` floor.
    pub fn check(&self, eta: f64) -> std::result::Result<(), String> {
        let n = self.n();
        for i in 0..n {
            let row: f64 = self.w.row(i).iter().sum();
            let col: f64 = (0..n).map(|r| self.w[(r, i)]).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(format!("node {}: row sum {row}, column sum {col}", i + 1));
            }
            if self.w[(i, i)] <= 0.0 {
                return Err(format!("node {} has no self weight", i + 1));
            }
            for j in 0..n {
                let v = self.w[(i, j)];
                if v < 0.0 {
                    return Err(format!("negative entry ({}, {}) = {v}", i + 1, j + 1));
                }
                if v > 0.0 && v < eta {
                    return Err(format!("entry ({}, {}) = {v} below eta {eta}", i + 1, j + 1));
                }
            }
        }
        Ok(())
    }

    fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| (i + 1..n).filter(move |&j| self.w[(i, j)] > 0.0).map(move |j| (i, j)))
    }
}

/// Metropolis–Hastings weights on an undirected graph; self-loops are implicit.
pub fn metropolis_weights(n: usize, edges: &[Edge]) -> Result<WeightMatrix> {
    let mut set = BTreeSet::new();
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Index(format!("edge ({}, {}) outside {n} nodes", a + 1, b + 1)));
        }
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    let mut degree = vec![0usize; n];
    for &(a, b) in &set {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut w = Table::zeros(n, n);
    for &(a, b) in &set {
        let v = 1.0 / (1 + degree[a].max(degree[b])) as f64;
        w[(a, b)] = v;
        w[(b, a)] = v;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(WeightMatrix { w })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleMode {
    Complete,
    RingStatic,
    /// Path edge `e` (joining nodes `e`, `e + 1`) is active when `e ≡ t (mod period)`.
    RoundRobin { period: usize },
    /// Round-robin path backbone plus each remaining pair with probability `extra_edge_prob`.
    RandomGossip { period: usize, extra_edge_prob: f64 },
    /// Cycles through the given edge sets; no connectivity guarantee.
    Periodic(Vec<Vec<Edge>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    n: usize,
    mode: ScheduleMode,
    seed: u64,
    window: usize,
    eta: f64,
}

impl GraphSchedule {
    /// Window and η floor default to the mode's natural values (`period` and `1/n`).
    pub fn new(n: usize, mode: ScheduleMode, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("network needs at least 2 nodes, got {n}")));
        }
        let window = match &mode {
            ScheduleMode::Complete | ScheduleMode::RingStatic => 1,
            ScheduleMode::RoundRobin { period } | ScheduleMode::RandomGossip { period, .. } => {
                if *period == 0 {
                    return Err(Error::Config("round-robin period must be positive".into()));
                }
                *period
            }
            ScheduleMode::Periodic(sets) => {
                if sets.is_empty() {
                    return Err(Error::Config("periodic schedule needs at least one edge set".into()));
                }
                sets.len()
            }
        };
        if let ScheduleMode::RandomGossip { extra_edge_prob, .. } = &mode {
            if !(0.0..=1.0).contains(extra_edge_prob) {
                return Err(Error::Config(format!("extra_edge_prob {extra_edge_prob} outside [0, 1]")));
            }
        }
        Ok(GraphSchedule { n, mode, seed, window, eta: 1.0 / n as f64 })
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, ScheduleMode::Complete, 0)
    }

    pub fn ring(n: usize) -> Result<Self> {
        Self::new(n, ScheduleMode::RingStatic, 0)
    }

    /// One path edge per step, `n - 1` steps per sweep.
    pub fn round_robin(n: usize) -> Result<Self> {
        Self::new(n, ScheduleMode::RoundRobin { period: n.saturating_sub(1).max(1) }, 0)
    }

    pub fn with_window(mut self, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window B must be positive".into()));
        }
        self.window = window;
        Ok(self)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Config(format!("eta {eta} outside (0, 1]")));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> &ScheduleMode {
        &self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Active edges at step `t`.
    pub fn edges_at(&self, t: usize) -> Vec<Edge> {
        let n = self.n;
        let path_edges = |period: usize| -> Vec<Edge> { (0..n - 1).filter(|e| e % period == t % period).map(|e| (e, e + 1)).collect() };
        match &self.mode {
            ScheduleMode::Complete => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
            ScheduleMode::RingStatic => {
                let mut edges: Vec<Edge> = (0..n - 1).map(|i| (i, i + 1)).collect();
                if n > 2 {
                    edges.push((0, n - 1));
                }
                edges
            }
            ScheduleMode::RoundRobin { period } => path_edges(*period),
            ScheduleMode::RandomGossip { period, extra_edge_prob } => {
                let mut edges = path_edges(*period);
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(t as u64);
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.gen::<f64>() < *extra_edge_prob && !edges.contains(&(i, j)) {
                            edges.push((i, j));
                        }
                    }
                }
                edges
            }
            ScheduleMode::Periodic(sets) => sets[t % sets.len()].clone(),
        }
    }
}

/// `W(t)`; a pure function of `(schedule, t)`.
pub fn schedule_at(schedule: &GraphSchedule, t: usize) -> WeightMatrix {
    if schedule.mode == ScheduleMode::Complete {
        let n = schedule.n;
        return WeightMatrix { w: Table::filled(n, n, 1.0 / n as f64) };
    }
    metropolis_weights(schedule.n, &schedule.edges_at(t)).expect("schedule edges are in range")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub matrices_checked: usize,
    pub windows_checked: usize,
    /// Smallest positive weight seen.
    pub empirical_eta: f64,
}

/// Checks every `W(t)`, `t ≤ horizon`, and every window `[t, t + B]` inside the horizon.
pub fn validate_schedule(schedule: &GraphSchedule, horizon: usize) -> Result<ScheduleReport> {
    let b = schedule.window;
    if horizon < b {
        return Err(Error::Config(format!("horizon {horizon} shorter than window {b}")));
    }
    let n = schedule.n;
    let mats: Vec<WeightMatrix> = (0..=horizon).map(|t| schedule_at(schedule, t)).collect();
    let mut eta = f64::INFINITY;
    for (t, w) in mats.iter().enumerate() {
        w.check(schedule.eta).map_err(|e| Error::Validation(format!("W({t}): {e}")))?;
        eta = eta.min(w.min_positive());
    }
    let mut windows = 0;
    for t in 0..=horizon - b {
        let mut uf = UnionFind::new(n);
        for w in &mats[t..=t + b] {
            for (a, c) in w.edges() {
                uf.union(a, c);
            }
        }
        if uf.components() > 1 {
            let lonely: Vec<usize> = (0..n).filter(|&i| uf.size_of(i) < n).map(|i| i + 1).collect();
            return Err(Error::Validation(format!(
                "window [{t}, {}] is not connected (nodes outside the largest component among {lonely:?})",
                t + b
            )));
        }
        windows += 1;
    }
    Ok(ScheduleReport { matrices_checked: mats.len(), windows_checked: windows, empirical_eta: eta })
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        self.parent[x] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
            self.parent[small] = big;
            self.size[big] += self.size[small];
        }
    }

    fn components(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.find(i) == i).count()
    }

    fn size_of(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

pub(crate) fn matmul(a: &Table, b: &Table) -> Table {
    let (n, m, p) = (a.rows(), a.cols(), b.cols());
    let mut out = Table::zeros(n, p);
    for i in 0..n {
        for l in 0..m {
            let x = a[(i, l)];
            if x == 0.0 {
                continue;
            }
            for j in 0..p {
                out[(i, j)] += x * b[(l, j)];
            }
        }
    }
    out
}

/// `Φ(k, s) = W(k) W(k−1) ⋯ W(s)`.
pub fn transition_product(schedule: &GraphSchedule, s: usize, k: usize) -> Result<Table> {
    if s >= k {
        return Err(Error::Config(format!("transition product needs s < k, got s={s}, k={k}")));
    }
    let mut phi = schedule_at(schedule, s).w;
    for t in s + 1..=k {
        phi = matmul(schedule_at(schedule, t).table(), &phi);
    }
    Ok(phi)
}

/// `max_ij |Φ(k, s)_ij − 1/n|` for `k = s+1, …, horizon`.
pub fn mixing_diagnostic(schedule: &GraphSchedule, s: usize, horizon: usize) -> Result<Vec<f64>> {
    if horizon <= s {
        return Err(Error::Config(format!("horizon {horizon} must exceed s={s}")));
    }
    let target = 1.0 / schedule.n as f64;
    let mut phi = schedule_at(schedule, s).w;
    let mut out = Vec::with_capacity(horizon - s);
    for t in s + 1..=horizon {
        phi = matmul(schedule_at(schedule, t).table(), &phi);
        out.push(phi.as_slice().iter().map(|v| (v - target).abs()).fold(0.0, f64::max));
    }
    Ok(out)
}

/// Fitted `Γ β^{k−s}` envelope over a mixing sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricEnvelope {
    pub gamma: f64,
    pub beta: f64,
}

impl GeometricEnvelope {
    pub fn bound(&self, lag: usize) -> f64 {
        self.gamma * self.beta.powi(lag as i32)
    }
}

/// Deviations below this count as fully mixed.
pub const MIXED_FLOOR: f64 = 1e-15;

/// Least-squares fit of `log dev` against the lag over the second half of the
/// sequence above [`MIXED_FLOOR`], then the smallest `Γ` making the envelope
/// dominate every entry. `deviations[j]` is the lag `j + 1` value. Returns
/// `None` when the tail does not decay.
pub fn fit_geometric_envelope(deviations: &[f64]) -> Option<GeometricEnvelope> {
    let live: Vec<(f64, f64)> = deviations
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > MIXED_FLOOR)
        .map(|(j, &d)| ((j + 1) as f64, d.ln()))
        .collect();
    if live.is_empty() {
        return Some(GeometricEnvelope { gamma: MIXED_FLOOR, beta: 0.0 });
    }
    let tail = &live[live.len() / 2..];
    let beta = if tail.len() < 2 {
        0.5
    } else {
        let m = tail.len() as f64;
        let mx = tail.iter().map(|p| p.0).sum::<f64>() / m;
        let my = tail.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxy / sxx).exp()
    };
    if !(beta < 1.0 - 1e-9) {
        return None;
    }
    let beta = beta.max(f64::MIN_POSITIVE);
    let gamma = live.iter().map(|&(lag, ld)| (ld - lag * beta.ln()).exp()).fold(0.0, f64::max);
    Some(GeometricEnvelope { gamma, beta })
}
