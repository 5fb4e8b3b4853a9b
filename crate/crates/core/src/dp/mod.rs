//! Grid dynamic programming, basic and level-set.

mod export;
mod grid;
mod power;
mod sweep;

pub use export::export_tables;
pub use grid::{AxisGrid, StateGrid};
pub use power::{discretize, solve, stage_count, DpConfig, DpSolution, PowerModel};
pub use sweep::{backward_sweep, rollout, DpVariant, PolicyTable, Rollout, StageModel, ValueTable};
