#![allow(dead_code)]

use std::sync::Arc;

use bayesagg_core::game_model::CournotFirm;
use bayesagg_core::*;

pub fn cournot_spec(n: usize, n_points: usize) -> GameSpec {
    let params = CournotParams::linear_offsets(n, 60.0, 20.0, PriceSign::Minus);
    GameSpec::cournot(
        &params,
        ActionBox::interval(0.0, 20.0).unwrap(),
        TypeInterval::uniform(1.0, 2.0).unwrap(),
        n_points,
    )
    .unwrap()
}

pub fn cournot(n: usize, n_points: usize) -> DiscreteGame {
    DiscreteGame::new(cournot_spec(n, n_points)).unwrap()
}

/// Cournot firm with the affine shortcut and closed form switched off.
#[derive(Debug)]
pub struct PlainCournot(pub CournotFirm);

impl CostModel for PlainCournot {
    fn dim(&self) -> usize {
        1
    }
    fn cost(&self, x: &[f64], agg: &[f64], theta: f64) -> f64 {
        self.0.cost(x, agg, theta)
    }
    fn grad_own(&self, x: &[f64], agg: &[f64], theta: f64, out: &mut [f64]) {
        self.0.grad_own(x, agg, theta, out)
    }
    fn grad_agg(&self, x: &[f64], agg: &[f64], theta: f64, out: &mut [f64]) {
        self.0.grad_agg(x, agg, theta, out)
    }
}

pub fn plain_cournot(n: usize, n_points: usize) -> DiscreteGame {
    let params = CournotParams::linear_offsets(n, 60.0, 20.0, PriceSign::Minus);
    let models: Vec<Arc<dyn CostModel>> =
        (1..=n).map(|i| Arc::new(PlainCournot(params.firm(i))) as Arc<dyn CostModel>).collect();
    let spec = GameSpec::new(
        vec![ActionBox::interval(0.0, 20.0).unwrap()],
        models,
        TypeInterval::uniform(1.0, 2.0).unwrap(),
        n_points,
    )
    .unwrap();
    DiscreteGame::new(spec).unwrap()
}

/// `f(x, a, θ) = θ x² + x (a + c)² / 10 − p x`, convex on the nonnegative box
/// and not affine in the aggregate.
#[derive(Debug)]
pub struct Congestion {
    pub c: f64,
    pub p: f64,
}

impl CostModel for Congestion {
    fn dim(&self) -> usize {
        1
    }
    fn cost(&self, x: &[f64], agg: &[f64], theta: f64) -> f64 {
        theta * x[0] * x[0] + x[0] * (agg[0] + self.c).powi(2) / 10.0 - self.p * x[0]
    }
    fn grad_own(&self, x: &[f64], agg: &[f64], theta: f64, out: &mut [f64]) {
        out[0] = 2.0 * theta * x[0] + (agg[0] + self.c).powi(2) / 10.0 - self.p;
    }
    fn grad_agg(&self, x: &[f64], agg: &[f64], _theta: f64, out: &mut [f64]) {
        out[0] = x[0] * (agg[0] + self.c) / 5.0;
    }
}

pub fn congestion(n: usize, n_points: usize) -> DiscreteGame {
    let models: Vec<Arc<dyn CostModel>> =
        (0..n).map(|i| Arc::new(Congestion { c: 2.0, p: 30.0 + 5.0 * i as f64 }) as Arc<dyn CostModel>).collect();
    let spec = GameSpec::new(
        vec![ActionBox::interval(0.0, 10.0).unwrap()],
        models,
        TypeInterval::uniform(1.0, 2.0).unwrap(),
        n_points,
    )
    .unwrap();
    DiscreteGame::new(spec).unwrap()
}
