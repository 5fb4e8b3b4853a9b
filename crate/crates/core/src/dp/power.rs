use serde::{Deserialize, Serialize};

use super::grid::{AxisGrid, StateGrid};
use super::sweep::{backward_sweep, rollout, DpVariant, PolicyTable, StageModel, ValueTable};
use crate::dynamics::{check_finite, rhs_into, Method};
use crate::error::{Error, Result};
use crate::limits::{terminal_level, PenaltyForm};
use crate::problem::ControlProblem;
use crate::trajectory::Trajectory;

/// Grid settings of a DP run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub ts: f64,
    pub t0: f64,
    pub t1: f64,
    /// One axis per flat state component.
    pub state_axes: Vec<AxisGrid>,
    /// One axis per storage bus.
    pub control_axes: Vec<AxisGrid>,
    pub my_inf: f64,
    pub variant: DpVariant,
}

impl DpConfig {
    pub fn stages(&self) -> Result<usize> {
        stage_count(self.t0, self.t1, self.ts)
    }

    /// Cartesian product of the control axes, last storage bus varying fastest.
    pub fn control_list(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &self.control_axes {
            let pts = axis.points();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    pts.iter().map(move |p| {
                        let mut v = prefix.clone();
                        v.push(*p);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

/// Number of whole steps of length `ts` in `[t0, t1]`.
pub fn stage_count(t0: f64, t1: f64, ts: f64) -> Result<usize> {
    let span = t1 - t0;
    if !(ts > 0.0) || !(span > 0.0) {
        return Err(Error::StageCount { span, ts });
    }
    let n = (span / ts).round();
    if n < 1.0 || (n * ts - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::StageCount { span, ts });
    }
    Ok(n as usize)
}

/// Check a DP configuration against the problem it is meant to solve.
pub fn discretize(
    problem: &ControlProblem,
    state_axes: Vec<AxisGrid>,
    control_counts: &[usize],
    variant: DpVariant,
) -> Result<DpConfig> {
    let t1 = problem.t0 + problem.stages as f64 * problem.ts;
    if state_axes.len() != problem.net.state_len() {
        return Err(Error::Grid(format!(
            "{} state axes for {} state components",
            state_axes.len(),
            problem.net.state_len()
        )));
    }
    if control_counts.len() != problem.n_storage() {
        return Err(Error::Grid(format!(
            "{} control axes for {} storage buses",
            control_counts.len(),
            problem.n_storage()
        )));
    }
    for a in &state_axes {
        a.validate()?;
    }
    for (axis, (a, v)) in state_axes.iter().zip(&problem.x0).enumerate() {
        if !a.contains(*v) {
            return Err(Error::InitialOutsideGrid {
                axis,
                value: *v,
                lo: a.lo,
                hi: a.hi,
            });
        }
    }
    let control_axes = problem
        .control_bounds
        .iter()
        .zip(control_counts)
        .map(|((lo, hi), n)| AxisGrid::new(*lo, *hi, *n))
        .collect::<Result<Vec<_>>>()?;
    let cfg = DpConfig {
        ts: problem.ts,
        t0: problem.t0,
        t1,
        state_axes,
        control_axes,
        my_inf: problem.weights.my_inf,
        variant,
    };
    cfg.stages()?;
    Ok(cfg)
}

/// The power-system problem seen through the DP interface: one Euler step per stage.
pub struct PowerModel<'a> {
    problem: &'a ControlProblem,
    controls: Vec<Vec<f64>>,
    my_inf: f64,
}

impl<'a> PowerModel<'a> {
    pub fn new(problem: &'a ControlProblem, cfg: &DpConfig) -> Self {
        PowerModel {
            problem,
            controls: cfg.control_list(),
            my_inf: cfg.my_inf,
        }
    }
}

impl StageModel for PowerModel<'_> {
    fn stages(&self) -> usize {
        self.problem.stages
    }

    fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    fn transition(&self, _k: usize, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        rhs_into(&self.problem.net, x, u, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + self.problem.ts * *o;
        }
        check_finite(&self.problem.net, out)
    }

    fn stage_cost(&self, _k: usize, x: &[f64], u: &[f64], next: &[f64]) -> f64 {
        let mut p = [0.0f64; 8];
        let mut heap;
        let p: &mut [f64] = if u.len() <= 8 {
            &mut p[..u.len()]
        } else {
            heap = vec![0.0; u.len()];
            &mut heap
        };
        self.problem.storage_power_into(x, next, u, p);
        let (g, pen) = self.problem.stage_terms(x, u, p, PenaltyForm::Indicator);
        g + pen
    }

    fn final_cost(&self, _x: &[f64]) -> f64 {
        self.problem.weights.final_state_cost
    }

    fn terminal_level(&self, x: &[f64]) -> f64 {
        terminal_level(&self.problem.net, x, &self.problem.freq)
    }

    fn my_inf(&self) -> f64 {
        self.my_inf
    }
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub config: DpConfig,
    pub values: ValueTable,
    pub policy: PolicyTable,
    /// Interpolated cost-to-go at the initial state.
    pub j0: f64,
    pub trajectory: Trajectory,
}

/// Backward sweep plus re-optimising rollout; the trajectory is priced by the shared evaluator.
pub fn solve(problem: &ControlProblem, cfg: &DpConfig) -> Result<DpSolution> {
    let n = cfg.stages()?;
    if n != problem.stages || (cfg.ts - problem.ts).abs() > 1e-12 {
        return Err(Error::Grid("DP horizon does not match the problem horizon".into()));
    }
    let grid = StateGrid::new(cfg.state_axes.clone())?;
    let model = PowerModel::new(problem, cfg);
    let (values, policy) = backward_sweep(&model, &grid, cfg.variant)?;
    let j0 = values.cost_to_go_reachable(0, &problem.x0);
    let roll = rollout(&model, &values, &problem.x0)?;
    let trajectory = problem.simulate(&roll.controls, Method::Euler, 1, PenaltyForm::Indicator)?;
    Ok(DpSolution {
        config: cfg.clone(),
        values,
        policy,
        j0,
        trajectory,
    })
}
