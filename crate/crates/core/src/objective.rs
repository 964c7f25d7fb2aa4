//! Per-type conditional objective `φ(x) = Σ_r P(r) f(x, x/n + M(r), θ)` of one player.

use crate::aggregation::{rival_means, rival_means_from_aggregate, AggregateFunction, Strategy};
use crate::error::Result;
use crate::game_model::{CostModel, DiscreteGame};
use crate::table::Table;

/// Rivals' mean contribution `M(r)` with the law of the rival index sum.
#[derive(Debug, Clone)]
pub(crate) struct RivalTerms {
    pub weights: Vec<f64>,
    /// `None` when only the mean is known (affine models).
    pub values: Option<Table>,
    pub mean: Vec<f64>,
}

impl RivalTerms {
    fn from_table(values: Table, weights: Vec<f64>) -> Self {
        let mut mean = vec![0.0; values.cols()];
        for (w, row) in weights.iter().zip(values.iter_rows()) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += w * v;
            }
        }
        RivalTerms { weights, values: Some(values), mean }
    }

    /// Straight from the rivals' strategies.
    pub fn direct(game: &DiscreteGame, profile: &[Strategy], player: usize) -> Result<Self> {
        let counts = game.counts();
        let values = rival_means(profile, player, counts)?;
        Ok(Self::from_table(values, counts.sum_distribution(counts.n_players() - 1)))
    }

    /// Read off an aggregate table. Affine models only need the mean
    /// `E_s[agg(s)] − mean(own)/n`; others go through the deconvolution.
    pub fn from_aggregate(game: &DiscreteGame, agg: &AggregateFunction, own: &Strategy, player: usize) -> Result<Self> {
        let counts = game.counts();
        let n = counts.n_players();
        let weights = counts.sum_distribution(n - 1);
        if game.spec().model(player).affine_in_aggregate() {
            let law = counts.avg_type_distribution();
            let dim = agg.dim();
            let mut mean = vec![0.0; dim];
            for (w, row) in law.iter().zip(agg.table().iter_rows()) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += w * v;
                }
            }
            let scale = 1.0 / (n * own.n_points()) as f64;
            for row in own.table().iter_rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m -= scale * v;
                }
            }
            return Ok(RivalTerms { weights, values: None, mean });
        }
        let values = rival_means_from_aggregate(agg, own, counts)?;
        Ok(Self::from_table(values, weights))
    }
}

/// Reusable buffers for [`conditional_gradient`].
#[derive(Debug, Clone)]
pub(crate) struct GradScratch {
    agg: Vec<f64>,
    g_own: Vec<f64>,
    g_agg: Vec<f64>,
}

impl GradScratch {
    pub fn new(dim: usize) -> Self {
        GradScratch { agg: vec![0.0; dim], g_own: vec![0.0; dim], g_agg: vec![0.0; dim] }
    }
}

/// `φ'(x) = E_r[∂_x f + (χ/n) ∂_agg f]` at `agg = x/n + M(r)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conditional_gradient(
    model: &dyn CostModel,
    x: &[f64],
    rivals: &RivalTerms,
    theta: f64,
    n: usize,
    chain: bool,
    scratch: &mut GradScratch,
    out: &mut [f64],
) {
    let dim = x.len();
    let inv_n = 1.0 / n as f64;
    let GradScratch { agg, g_own, g_agg } = scratch;
    let mut eval = |m: &[f64], w: f64, out: &mut [f64]| {
        for j in 0..dim {
            agg[j] = x[j] * inv_n + m[j];
        }
        model.grad_own(x, agg, theta, g_own);
        if chain {
            model.grad_agg(x, agg, theta, g_agg);
        }
        for j in 0..dim {
            out[j] += w * (g_own[j] + if chain { inv_n * g_agg[j] } else { 0.0 });
        }
    };
    out.iter_mut().for_each(|o| *o = 0.0);
    match (&rivals.values, model.affine_in_aggregate()) {
        (Some(values), false) => {
            for (w, m) in rivals.weights.iter().zip(values.iter_rows()) {
                if *w > 0.0 {
                    eval(m, *w, out);
                }
            }
        }
        _ => eval(&rivals.mean, 1.0, out),
    }
}

/// `φ(x)`; needs the full rival table.
pub(crate) fn conditional_cost(model: &dyn CostModel, x: &[f64], rivals: &RivalTerms, theta: f64, n: usize) -> f64 {
    let values = rivals.values.as_ref().expect("conditional cost needs the rival table");
    let inv_n = 1.0 / n as f64;
    let mut agg = vec![0.0; x.len()];
    let mut total = 0.0;
    for (w, m) in rivals.weights.iter().zip(values.iter_rows()) {
        for j in 0..x.len() {
            agg[j] = x[j] * inv_n + m[j];
        }
        total += w * model.cost(x, &agg, theta);
    }
    total
}
