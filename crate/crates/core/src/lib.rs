//! Discretized Bayesian aggregative games with continuous types: type grids,
//! aggregation over the average-type grid, consensus-based equilibrium
//! seeking, and centralized verification oracles.

pub mod aggregation;
pub mod error;
pub mod game_model;
pub mod network;
mod objective;
pub mod solver;
pub mod table;
pub mod type_space;
pub mod verification;

pub use aggregation::{AggregateFunction, Strategy};
pub use error::{Error, Result};
pub use game_model::{ActionBox, CostModel, CournotParams, DiscreteGame, GameSpec, PriceSign};
pub use network::{GraphSchedule, ScheduleMode, WeightMatrix};
pub use solver::{GradientScaling, InitRule, RunConfig, SolverOptions, SolverState, StepsizeSchedule, Trace};
pub use table::Table;
pub use type_space::{CountTable, TypeGrid, TypeInterval};
pub use verification::{BestResponseMethod, CentralOptions, CentralSolution, ExploitabilityReport};
