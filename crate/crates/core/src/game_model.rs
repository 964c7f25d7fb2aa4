//! Game abstraction: action boxes, per-player cost models with analytic
//! partial gradients, and the Nash-Cournot benchmark family.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::type_space::{sum_index_counts, CountTable, TypeGrid, TypeInterval};

/// Step for the central finite differences used by [`validate_model`].
pub const FD_STEP: f64 = 1e-5;
/// Relative gradient error accepted by [`validate_model`].
pub const GRADIENT_REL_TOL: f64 = 1e-6;
/// Normalized monotonicity below this is reported as weak convexity.
pub const WEAK_CONVEXITY_TOL: f64 = 1e-6;

/// Nonempty compact box `[lo, hi] ⊂ R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ActionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Config(format!(
                "action box bounds need equal positive length, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (j, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::Config(format!("action box coordinate {j} needs lo < hi, got [{l}, {h}]")));
            }
        }
        Ok(ActionBox { lo, hi })
    }

    /// Scalar interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        ActionBox::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Euclidean projection, i.e. a componentwise clamp.
    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }
}

/// Per-player cost `f_i(x, agg, θ)` with its partial gradients.
///
/// `x` and `agg` have the action dimension `m`; `theta` is the player's own type.
pub trait CostModel: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn cost(&self, x: &[f64], agg: &[f64], theta: f64) -> f64;

    /// `∂f/∂x` written into `out`.
    fn grad_own(&self, x: &[f64], agg: &[f64], theta: f64, out: &mut [f64]);

    /// `∂f/∂agg` written into `out`.
    fn grad_agg(&self, x: &[f64], agg: &[f64], theta: f64, out: &mut [f64]);

    /// Whether both partial gradients are affine in `agg`. Expectations over
    /// the aggregate can then be evaluated at the mean aggregate.
    fn affine_in_aggregate(&self) -> bool {
        false
    }

    /// Minimizer over `bx` of `Σ_r w_r f(x, x/n + m_r, θ)` when it has a closed
    /// form that depends on the rivals only through `rival_mean = Σ_r w_r m_r`.
    fn best_response_closed_form(
        &self,
        _rival_mean: &[f64],
        _theta: f64,
        _n_players: usize,
        _bx: &ActionBox,
    ) -> Option<Vec<f64>> {
        None
    }
}

/// Sign applied to the linear price term of the Cournot cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceSign {
    Plus,
    Minus,
}

impl PriceSign {
    pub fn value(self) -> f64 {
        match self {
            PriceSign::Plus => 1.0,
            PriceSign::Minus => -1.0,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(PriceSign::Plus),
            -1 => Some(PriceSign::Minus),
            _ => None,
        }
    }
}

/// Parameters of the Nash-Cournot family
/// `f_i(x, agg, θ) = s·(agg + d − δ_i)·x + θ·x²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotParams {
    pub base_price: f64,
    pub offsets: Vec<f64>,
    pub sign: PriceSign,
}

impl CournotParams {
    /// Offsets `δ_i = step·(i − 1)` for `n` firms.
    pub fn linear_offsets(n: usize, base_price: f64, step: f64, sign: PriceSign) -> Self {
        CournotParams { base_price, offsets: (0..n).map(|i| step * i as f64).collect(), sign }
    }

    /// Five firms with `d = 1200`, `δ_i = 20(i − 1)` and a `+` sign.
    pub fn literal_benchmark() -> Self {
        CournotParams::linear_offsets(5, 1200.0, 20.0, PriceSign::Plus)
    }

    /// Cost model of firm `i` (1-based).
    pub fn firm(&self, i: usize) -> CournotFirm {
        CournotFirm { base_price: self.base_price, offset: self.offsets[i - 1], sign: self.sign }
    }
}

/// `s·(agg + d − δ_i)·x + θ·x²` for firm `i` (1-based).
pub fn cournot_cost(x: f64, agg: f64, theta: f64, params: &CournotParams, i: usize) -> f64 {
    params.sign.value() * (agg + params.base_price - params.offsets[i - 1]) * x + theta * x * x
}

/// Analytic partials `(∂f/∂x, ∂f/∂agg)` of [`cournot_cost`].
pub fn cournot_grads(x: f64, agg: f64, theta: f64, params: &CournotParams, i: usize) -> (f64, f64) {
    let s = params.sign.value();
    (s * (agg + params.base_price - params.offsets[i - 1]) + 2.0 * theta * x, s * x)
}

/// One Cournot firm as a scalar-action [`CostModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CournotFirm {
    pub base_price: f64,
    pub offset: f64,
    pub sign: PriceSign,
}

impl CostModel for CournotFirm {
    fn dim(&self) -> usize {
        1
    }

    fn cost(&self, x: &[f64], agg: &[f64], theta: f64) -> f64 {
        self.sign.value() * (agg[0] + self.base_price - self.offset) * x[0] + theta * x[0] * x[0]
    }

    fn grad_own(&self, x: &[f64], agg: &[f64], theta: f64, out: &mut [f64]) {
        out[0] = self.sign.value() * (agg[0] + self.base_price - self.offset) + 2.0 * theta * x[0];
    }

    fn grad_agg(&self, x: &[f64], _agg: &[f64], _theta: f64, out: &mut [f64]) {
        out[0] = self.sign.value() * x[0];
    }

    fn affine_in_aggregate(&self) -> bool {
        true
    }

    fn best_response_closed_form(
        &self,
        rival_mean: &[f64],
        theta: f64,
        n_players: usize,
        bx: &ActionBox,
    ) -> Option<Vec<f64>> {
        // E f(x, x/n + m, θ) = s(m + d − δ)x + (θ + s/n)x²
        let s = self.sign.value();
        let linear = s * (rival_mean[0] + self.base_price - self.offset);
        let curvature = theta + s / n_players as f64;
        let (lo, hi) = (bx.lo()[0], bx.hi()[0]);
        let x = if curvature > 0.0 {
            (-linear / (2.0 * curvature)).clamp(lo, hi)
        } else {
            // concave or linear: the minimum sits on an endpoint
            let value = |x: f64| linear * x + curvature * x * x;
            if value(lo) <= value(hi) { lo } else { hi }
        };
        Some(vec![x])
    }
}

/// An incomplete-information aggregative game restricted to independent,
/// identically discretized types.
#[derive(Debug, Clone)]
pub struct GameSpec {
    n_players: usize,
    boxes: Vec<ActionBox>,
    models: Vec<Arc<dyn CostModel>>,
    type_interval: TypeInterval,
    n_points: usize,
}

impl GameSpec {
    pub fn new(
        boxes: Vec<ActionBox>,
        models: Vec<Arc<dyn CostModel>>,
        type_interval: TypeInterval,
        n_points: usize,
    ) -> Result<Self> {
        let n_players = models.len();
        if n_players < 2 {
            return Err(Error::Config(format!("a game needs at least 2 players, got {n_players}")));
        }
        if n_points == 0 {
            return Err(Error::Config("discretization N must be at least 1".into()));
        }
        let boxes = match boxes.len() {
            1 => vec![boxes[0].clone(); n_players],
            len if len == n_players => boxes,
            len => {
                return Err(Error::Config(format!("expected 1 or {n_players} action boxes, got {len}")))
            }
        };
        let dim = boxes[0].dim();
        for (i, (b, m)) in boxes.iter().zip(&models).enumerate() {
            if b.dim() != dim || m.dim() != dim {
                return Err(Error::Shape(format!(
                    "player {} has box dim {} and model dim {}, expected {dim}",
                    i + 1,
                    b.dim(),
                    m.dim()
                )));
            }
        }
        Ok(GameSpec { n_players, boxes, models, type_interval, n_points })
    }

    /// Cournot game with a shared scalar box.
    pub fn cournot(params: &CournotParams, bx: ActionBox, type_interval: TypeInterval, n_points: usize) -> Result<Self> {
        let models: Vec<Arc<dyn CostModel>> = (1..=params.offsets.len())
            .map(|i| Arc::new(params.firm(i)) as Arc<dyn CostModel>)
            .collect();
        GameSpec::new(vec![bx], models, type_interval, n_points)
    }

    /// Same game at a different discretization.
    pub fn with_points(&self, n_points: usize) -> Result<Self> {
        GameSpec::new(self.boxes.clone(), self.models.clone(), self.type_interval.clone(), n_points)
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Action dimension `m`.
    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    /// Box of player `i` (0-based).
    pub fn action_box(&self, i: usize) -> &ActionBox {
        &self.boxes[i]
    }

    pub fn boxes(&self) -> &[ActionBox] {
        &self.boxes
    }

    /// Cost model of player `i` (0-based).
    pub fn model(&self, i: usize) -> &dyn CostModel {
        self.models[i].as_ref()
    }

    pub fn type_interval(&self) -> &TypeInterval {
        &self.type_interval
    }

    /// Shared equiprobable type grid.
    pub fn grid(&self) -> Result<TypeGrid> {
        self.type_interval.grid(self.n_points, 1e-13)
    }

    pub fn counts(&self) -> Result<CountTable> {
        sum_index_counts(self.n_players, self.n_points)
    }

    /// Componentwise hull of all boxes, where every aggregate of feasible
    /// strategies lives.
    pub fn aggregate_hull(&self) -> ActionBox {
        let dim = self.dim();
        let lo = (0..dim).map(|j| self.boxes.iter().map(|b| b.lo()[j]).fold(f64::INFINITY, f64::min)).collect();
        let hi = (0..dim).map(|j| self.boxes.iter().map(|b| b.hi()[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        ActionBox { lo, hi }
    }
}

/// A [`GameSpec`] together with its type grid and sum-count table.
#[derive(Debug, Clone)]
pub struct DiscreteGame {
    spec: GameSpec,
    grid: TypeGrid,
    counts: CountTable,
}

impl DiscreteGame {
    pub fn new(spec: GameSpec) -> Result<Self> {
        let grid = spec.grid()?;
        let counts = spec.counts()?;
        Ok(DiscreteGame { spec, grid, counts })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TypeGrid {
        &self.grid
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    pub fn n_players(&self) -> usize {
        self.spec.n_players
    }

    pub fn n_points(&self) -> usize {
        self.spec.n_points
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Grid point at 0-based row `k`.
    pub fn theta(&self, k: usize) -> f64 {
        self.grid.points()[k]
    }

    /// Same game at a different discretization.
    pub fn with_points(&self, n_points: usize) -> Result<Self> {
        DiscreteGame::new(self.spec.with_points(n_points)?)
    }
}

/// Outcome of the probe harness run by [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub probes: usize,
    pub max_rel_error_own: f64,
    pub max_rel_error_agg: f64,
    /// Smallest `⟨∇f(x) − ∇f(y), x − y⟩ / ‖x − y‖²` observed.
    pub min_monotonicity: f64,
    /// Set when the monotonicity minimum is below [`WEAK_CONVEXITY_TOL`].
    pub weak_convexity: bool,
}

/// Probes gradient consistency and strict convexity at random points inside
/// every player's box, the aggregate hull, and the type interval.
///
/// The first two probes per player pin the type to the interval endpoints.
pub fn validate_model(spec: &GameSpec, probes: usize, seed: u64) -> Result<ModelReport> {
    if probes == 0 {
        return Err(Error::Config("validate_model needs at least one probe".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hull = spec.aggregate_hull();
    let (t_lo, t_hi) = (spec.type_interval().lower(), spec.type_interval().upper());
    let dim = spec.dim();
    let mut report = ModelReport {
        probes,
        max_rel_error_own: 0.0,
        max_rel_error_agg: 0.0,
        min_monotonicity: f64::INFINITY,
        weak_convexity: false,
    };
    let mut g = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    for i in 0..spec.n_players() {
        let model = spec.model(i);
        let bx = spec.action_box(i);
        for p in 0..probes {
            let x = sample_box(&mut rng, bx);
            let y = sample_box(&mut rng, bx);
            let agg = sample_box(&mut rng, &hull);
            let theta = match p {
                0 => t_lo,
                1 => t_hi,
                _ => rng.gen_range(t_lo..=t_hi),
            };
            let at = || format!("player {} at x = {x:?}, agg = {agg:?}, θ = {theta}", i + 1);

            model.grad_own(&x, &agg, theta, &mut g);
            for j in 0..dim {
                let fd = central_difference(|v| {
                    let mut xs = x.clone();
                    xs[j] = v;
                    model.cost(&xs, &agg, theta)
                }, x[j]);
                let rel = (g[j] - fd).abs() / g[j].abs().max(1.0);
                report.max_rel_error_own = report.max_rel_error_own.max(rel);
                if !(rel <= GRADIENT_REL_TOL) {
                    return Err(Error::Validation(format!(
                        "own-action gradient off by relative {rel:.3e} in coordinate {j} for {}",
                        at()
                    )));
                }
            }

            model.grad_agg(&x, &agg, theta, &mut g);
            for j in 0..dim {
                let fd = central_difference(|v| {
                    let mut a = agg.clone();
                    a[j] = v;
                    model.cost(&x, &a, theta)
                }, agg[j]);
                let rel = (g[j] - fd).abs() / g[j].abs().max(1.0);
                report.max_rel_error_agg = report.max_rel_error_agg.max(rel);
                if !(rel <= GRADIENT_REL_TOL) {
                    return Err(Error::Validation(format!(
                        "aggregate gradient off by relative {rel:.3e} in coordinate {j} for {}",
                        at()
                    )));
                }
            }

            model.grad_own(&x, &agg, theta, &mut g);
            model.grad_own(&y, &agg, theta, &mut gy);
            let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist2 > 0.0 {
                let inner: f64 = (0..dim).map(|j| (g[j] - gy[j]) * (x[j] - y[j])).sum();
                let normalized = inner / dist2;
                report.min_monotonicity = report.min_monotonicity.min(normalized);
                if normalized < -WEAK_CONVEXITY_TOL {
                    return Err(Error::Validation(format!(
                        "cost is not convex in the own action: monotonicity {normalized:.3e} for {}",
                        at()
                    )));
                }
            }
        }
    }
    report.weak_convexity = report.min_monotonicity < WEAK_CONVEXITY_TOL;
    Ok(report)
}

fn sample_box(rng: &mut ChaCha8Rng, bx: &ActionBox) -> Vec<f64> {
    bx.lo().iter().zip(bx.hi()).map(|(&l, &h)| rng.gen_range(l..=h)).collect()
}

fn central_difference(f: impl Fn(f64) -> f64, at: f64) -> f64 {
    (f(at + FD_STEP) - f(at - FD_STEP)) / (2.0 * FD_STEP)
}
