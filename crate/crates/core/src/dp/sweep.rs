use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::StateGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DpVariant {
    #[default]
    Basic,
    Levelset,
}

/// A discrete-time problem the grid DP can solve.
pub trait StageModel: Sync {
    fn stages(&self) -> usize;
    /// Candidate control vectors, in tie-breaking order.
    fn controls(&self) -> &[Vec<f64>];
    /// Successor of `x` under `u` at stage `k`.
    fn transition(&self, k: usize, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()>;
    /// Running cost plus penalty of stage `k`, already scaled by the step.
    fn stage_cost(&self, k: usize, x: &[f64], u: &[f64], next: &[f64]) -> f64;
    /// Final-state cost without any window penalty.
    fn final_cost(&self, x: &[f64]) -> f64;
    /// Signed distance to the terminal set, at most zero inside.
    fn terminal_level(&self, x: &[f64]) -> f64;
    /// Charge for leaving the terminal window or the state grid.
    fn my_inf(&self) -> f64;
}

/// Cost-to-go per stage over the state grid; level-set values for the level-set variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub grid: StateGrid,
    pub variant: DpVariant,
    pub j: Vec<Vec<f64>>,
    pub level: Option<Vec<Vec<f64>>>,
}

/// Minimising control index (into the model's control list) per stage and grid point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    pub index: Vec<Vec<u32>>,
}

impl ValueTable {
    /// Interpolated cost-to-go of stage `k` (basic variant): clamped onto the
    /// grid, plus `my_inf` when `x` lies outside it.
    pub fn cost_to_go(&self, k: usize, x: &[f64], my_inf: f64) -> f64 {
        let v = self.grid.interpolate(&self.j[k], x);
        if self.grid.contains(x) {
            v
        } else {
            v + my_inf
        }
    }

    /// Interpolated cost-to-go, clamped onto the grid.
    pub fn cost_to_go_clamped(&self, k: usize, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.j[k], x)
    }

    /// Clamped cost-to-go interpolated from backward-reachable corners (level <= 0) only.
    pub fn cost_to_go_reachable(&self, k: usize, x: &[f64]) -> f64 {
        match &self.level {
            Some(level) => {
                let lk = &level[k];
                self.grid.interpolate_where(&self.j[k], x, |i| lk[i] <= 0.0)
            }
            None => self.cost_to_go_clamped(k, x),
        }
    }

    /// Interpolated level value of stage `k`; off the grid the clamped value is
    /// raised to at least zero and increased by the distance to the grid.
    pub fn level_at(&self, k: usize, x: &[f64]) -> f64 {
        let table = &self.level.as_ref().expect("level-set table")[k];
        let v = self.grid.interpolate(table, x);
        let out = self.grid.outside_distance(x);
        if out > 0.0 {
            v.max(0.0) + out
        } else {
            v
        }
    }
}

fn grid_point_error(grid: &StateGrid, stage: usize, p: usize) -> Error {
    Error::DpNonFinite {
        stage,
        point: grid.point(p),
    }
}

/// Backward recursion over all stages. Points within a stage are processed in parallel.
pub fn backward_sweep<M: StageModel>(model: &M, grid: &StateGrid, variant: DpVariant) -> Result<(ValueTable, PolicyTable)> {
    let n = model.stages();
    let dim = grid.dim();
    let controls = model.controls();
    if controls.is_empty() {
        return Err(Error::Grid("control grid is empty".into()));
    }
    let mut j = vec![Vec::new(); n + 1];
    let mut level = vec![Vec::new(); n + 1];
    let mut policy = vec![Vec::new(); n];

    let terminal: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.point(p);
            (model.final_cost(&x), model.terminal_level(&x))
        })
        .collect();
    match variant {
        DpVariant::Basic => {
            j[n] = terminal
                .iter()
                .map(|(g, l)| if *l <= 0.0 { *g } else { g + model.my_inf() })
                .collect();
        }
        DpVariant::Levelset => {
            j[n] = terminal.iter().map(|(g, _)| *g).collect();
            level[n] = terminal.iter().map(|(_, l)| *l).collect();
        }
    }
    let mut table = ValueTable {
        grid: grid.clone(),
        variant,
        j,
        level: None,
    };
    if variant == DpVariant::Levelset {
        table.level = Some(level);
    }

    for k in (0..n).rev() {
        let results: Vec<Result<(f64, f64, u32)>> = (0..grid.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; dim], vec![0.0; dim]),
                |(x, next), p| {
                    grid.point_into(p, x);
                    let mut best = (f64::INFINITY, f64::INFINITY, 0u32);
                    let mut best_feasible: Option<(f64, u32)> = None;
                    for (ui, u) in controls.iter().enumerate() {
                        model.transition(k, x, u, next)?;
                        if next.iter().any(|v| !v.is_finite()) {
                            return Err(grid_point_error(grid, k, p));
                        }
                        let g = model.stage_cost(k, x, u, next);
                        match variant {
                            DpVariant::Basic => {
                                let c = g + table.cost_to_go(k + 1, next, model.my_inf());
                                if c < best.0 {
                                    best = (c, 0.0, ui as u32);
                                }
                            }
                            DpVariant::Levelset => {
                                let lv = table.level_at(k + 1, next);
                                let c = g + table.cost_to_go_reachable(k + 1, next);
                                if lv < best.1 {
                                    best = (c, lv, ui as u32);
                                }
                                if lv <= 0.0 && best_feasible.map_or(true, |(bc, _)| c < bc) {
                                    best_feasible = Some((c, ui as u32));
                                }
                            }
                        }
                    }
                    if let Some((c, ui)) = best_feasible {
                        best.0 = c;
                        best.2 = ui;
                    }
                    if best.0.is_nan() {
                        return Err(grid_point_error(grid, k, p));
                    }
                    Ok(best)
                },
            )
            .collect();
        let mut jk = Vec::with_capacity(grid.len());
        let mut lk = Vec::with_capacity(grid.len());
        let mut pk = Vec::with_capacity(grid.len());
        for r in results {
            let (c, l, ui) = r?;
            jk.push(c);
            lk.push(l);
            pk.push(ui);
        }
        table.j[k] = jk;
        if let Some(levels) = table.level.as_mut() {
            levels[k] = lk;
        }
        policy[k] = pk;
    }
    Ok((table, PolicyTable { index: policy }))
}

/// Result of a forward pass: `N + 1` states, `N` control indices and the accumulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub control_index: Vec<usize>,
    pub controls: Vec<Vec<f64>>,
    pub total: f64,
}

/// Forward pass from `x0`, re-optimising every stage against the interpolated tables.
pub fn rollout<M: StageModel>(model: &M, table: &ValueTable, x0: &[f64]) -> Result<Rollout> {
    let grid = &table.grid;
    for (axis, (a, v)) in grid.axes().iter().zip(x0).enumerate() {
        if !a.contains(*v) {
            return Err(Error::InitialOutsideGrid {
                axis,
                value: *v,
                lo: a.lo,
                hi: a.hi,
            });
        }
    }
    let n = model.stages();
    let controls = model.controls();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut states = vec![x.clone()];
    let mut chosen = Vec::with_capacity(n);
    let mut total = 0.0;
    for k in 0..n {
        // (feasible-first key, value, stage cost, control index)
        let mut best: Option<(bool, f64, f64, usize)> = None;
        for (ui, u) in controls.iter().enumerate() {
            model.transition(k, &x, u, &mut next)?;
            let g = model.stage_cost(k, &x, u, &next);
            let cand = match table.variant {
                DpVariant::Basic => (true, g + table.cost_to_go(k + 1, &next, model.my_inf()), g, ui),
                DpVariant::Levelset => {
                    let lv = table.level_at(k + 1, &next);
                    if lv <= 0.0 {
                        (true, g + table.cost_to_go_reachable(k + 1, &next), g, ui)
                    } else {
                        (false, lv, g, ui)
                    }
                }
            };
            let better = match best {
                None => true,
                Some(b) => (cand.0 && !b.0) || (cand.0 == b.0 && cand.1 < b.1),
            };
            if better {
                best = Some(cand);
            }
        }
        let (_, _, g, ui) = best.expect("non-empty control grid");
        model.transition(k, &x, &controls[ui], &mut next)?;
        if !grid.contains(&next) {
            return Err(Error::RolloutExit { stage: k });
        }
        total += g;
        x.copy_from_slice(&next);
        states.push(x.clone());
        chosen.push(ui);
    }
    let xn = states.last().expect("at least the initial state");
    total += model.final_cost(xn);
    if model.terminal_level(xn) > 0.0 {
        total += model.my_inf();
    }
    Ok(Rollout {
        states,
        controls: chosen.iter().map(|i| controls[*i].clone()).collect(),
        control_index: chosen,
        total,
    })
}
