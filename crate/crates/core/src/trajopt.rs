//! Shooting-based trajectory optimisation over piecewise-constant inertia schedules.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Method;
use crate::error::{Error, Result};
use crate::limits::PenaltyForm;
use crate::problem::ControlProblem;
use crate::trajectory::Trajectory;

/// One inertia value per storage slot for every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub values: Vec<Vec<f64>>,
    pub bounds: Vec<(f64, f64)>,
}

impl ControlSchedule {
    pub fn new(values: Vec<Vec<f64>>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (k, u) in values.iter().enumerate() {
            if u.len() != bounds.len() {
                return Err(Error::Dimension(format!(
                    "stage {k} has {} values for {} storage buses",
                    u.len(),
                    bounds.len()
                )));
            }
            for (v, (lo, hi)) in u.iter().zip(&bounds) {
                if !(v >= lo && v <= hi) {
                    return Err(Error::scenario(
                        format!("schedule[{k}]"),
                        format!("inertia {v} outside [{lo}, {hi}]"),
                    ));
                }
            }
        }
        Ok(ControlSchedule { values, bounds })
    }

    pub fn constant(problem: &ControlProblem, m: &[f64]) -> Result<Self> {
        Self::new(vec![m.to_vec(); problem.stages], problem.control_bounds.clone())
    }

    /// Every entry clamped to its bounds.
    pub fn project(&self, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
        values
            .iter()
            .map(|u| u.iter().zip(&self.bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect())
            .collect()
    }

    fn with_values(&self, values: Vec<Vec<f64>>) -> Self {
        ControlSchedule {
            values,
            bounds: self.bounds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub growth: f64,
    /// Smallest step tried before the line search gives up.
    pub min_step: f64,
    /// Finite-difference step as a fraction of each control range.
    pub fd_relative_step: f64,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
    pub method: Method,
    pub substeps: usize,
    pub seed: u64,
    /// Also start from the constant schedules at the lower bound, the desired value and the upper bound.
    pub multi_start: bool,
    pub random_starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 200,
            initial_step: 1.0,
            shrink: 0.5,
            growth: 1.5,
            min_step: 1e-6,
            fd_relative_step: 1e-4,
            tolerance: 1e-9,
            method: Method::Rk4,
            substeps: 5,
            seed: 0,
            multi_start: false,
            random_starts: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.growth >= 1.0
            && self.min_step > 0.0
            && self.fd_relative_step > 0.0
            && self.tolerance > 0.0
            && self.substeps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::scenario(
                "optimizer",
                "steps and tolerances must be positive, shrink in (0,1), growth >= 1",
            ))
        }
    }
}

/// Objective and trajectory of a schedule.
pub fn evaluate(problem: &ControlProblem, schedule: &ControlSchedule, cfg: &OptimizerConfig) -> Result<(f64, Trajectory)> {
    let t = problem.simulate(&schedule.values, cfg.method, cfg.substeps, PenaltyForm::Hinge)?;
    Ok((t.breakdown.total, t))
}

fn objective(problem: &ControlProblem, values: &[Vec<f64>], cfg: &OptimizerConfig) -> Result<f64> {
    Ok(problem
        .simulate(values, cfg.method, cfg.substeps, PenaltyForm::Hinge)?
        .breakdown
        .total)
}

/// Central-difference sensitivities, one-sided where a bound is closer than `h`.
/// `h` is given per storage slot.
pub fn gradient(problem: &ControlProblem, schedule: &ControlSchedule, h: &[f64], cfg: &OptimizerConfig) -> Result<Vec<Vec<f64>>> {
    let ns = schedule.bounds.len();
    let n = schedule.values.len();
    let base = objective(problem, &schedule.values, cfg)?;
    let flat: Vec<f64> = (0..n * ns)
        .into_par_iter()
        .map(|c| {
            let (k, s) = (c / ns, c % ns);
            let (lo, hi) = schedule.bounds[s];
            let v = schedule.values[k][s];
            let mut vals = schedule.values.clone();
            let up = v + h[s] <= hi;
            let down = v - h[s] >= lo;
            let eval = |vals: &mut Vec<Vec<f64>>, x: f64| {
                vals[k][s] = x;
                objective(problem, vals, cfg)
            };
            match (up, down) {
                (true, true) => Ok((eval(&mut vals, v + h[s])? - eval(&mut vals, v - h[s])?) / (2.0 * h[s])),
                (true, false) => Ok((eval(&mut vals, v + h[s])? - base) / h[s]),
                (false, true) => Ok((base - eval(&mut vals, v - h[s])?) / h[s]),
                (false, false) => Ok(0.0),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(flat.chunks(ns).map(|c| c.to_vec()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub best: ControlSchedule,
    pub objective: f64,
    pub initial_objective: f64,
    pub history: Vec<HistoryEntry>,
    /// Final objective reached from each start, in start order.
    pub start_objectives: Vec<f64>,
}

/// Projected gradient descent with backtracking from a single start.
fn descend(problem: &ControlProblem, start: &ControlSchedule, cfg: &OptimizerConfig) -> Result<(ControlSchedule, f64, Vec<HistoryEntry>)> {
    let h: Vec<f64> = start.bounds.iter().map(|(lo, hi)| cfg.fd_relative_step * (hi - lo).max(1e-12)).collect();
    let mut x = start.with_values(start.project(&start.values));
    let mut f = objective(problem, &x.values, cfg).map_err(|e| wrap(0, e))?;
    let mut step = cfg.initial_step;
    let mut history = vec![HistoryEntry {
        iteration: 0,
        objective: f,
        step,
        gradient_norm: f64::NAN,
    }];
    for it in 1..=cfg.max_iterations {
        let mut g = gradient(problem, &x, &h, cfg).map_err(|e| wrap(it, e))?;
        // drop components that would push an entry through an active bound
        for (gk, uk) in g.iter_mut().zip(&x.values) {
            for ((gs, v), (lo, hi)) in gk.iter_mut().zip(uk).zip(&x.bounds) {
                if (*v <= *lo && *gs > 0.0) || (*v >= *hi && *gs < 0.0) {
                    *gs = 0.0;
                }
            }
        }
        let norm = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            history.push(HistoryEntry {
                iteration: it,
                objective: f,
                step,
                gradient_norm: norm,
            });
            break;
        }
        let mut accepted = None;
        while step >= cfg.min_step {
            let trial: Vec<Vec<f64>> = x
                .values
                .iter()
                .zip(&g)
                .map(|(u, gk)| u.iter().zip(gk).map(|(v, gs)| v - step * gs / norm).collect())
                .collect();
            let trial = x.project(&trial);
            let ft = objective(problem, &trial, cfg).map_err(|e| wrap(it, e))?;
            if ft < f {
                accepted = Some((trial, ft));
                break;
            }
            step *= cfg.shrink;
        }
        let Some((trial, ft)) = accepted else {
            history.push(HistoryEntry {
                iteration: it,
                objective: f,
                step,
                gradient_norm: norm,
            });
            break;
        };
        let decrease = f - ft;
        x = x.with_values(trial);
        f = ft;
        history.push(HistoryEntry {
            iteration: it,
            objective: f,
            step,
            gradient_norm: norm,
        });
        step *= cfg.growth;
        if decrease < cfg.tolerance {
            break;
        }
    }
    Ok((x, f, history))
}

fn wrap(iteration: usize, e: Error) -> Error {
    Error::Optimizer {
        iteration,
        source: Box::new(e),
    }
}

/// Optimise from `initial` and, if configured, from further constant and random starts.
/// The best result is returned; it is never worse than `initial`.
pub fn optimize(problem: &ControlProblem, initial: &ControlSchedule, cfg: &OptimizerConfig) -> Result<OptimizeResult> {
    cfg.validate()?;
    let initial_objective = objective(problem, &initial.values, cfg).map_err(|e| wrap(0, e))?;
    let mut starts = vec![initial.clone()];
    let bounds = &initial.bounds;
    if cfg.multi_start {
        let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        let desired: Vec<f64> = problem
            .weights
            .m_desired
            .iter()
            .zip(bounds)
            .map(|(m, (l, h))| m.clamp(*l, *h))
            .collect();
        for m in [lo, desired, hi] {
            starts.push(ControlSchedule::new(vec![m; initial.values.len()], bounds.clone())?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_starts {
        let values = (0..initial.values.len())
            .map(|_| bounds.iter().map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l }).collect())
            .collect();
        starts.push(ControlSchedule::new(values, bounds.clone())?);
    }
    let mut best: Option<(ControlSchedule, f64, Vec<HistoryEntry>)> = None;
    let mut start_objectives = Vec::with_capacity(starts.len());
    for s in &starts {
        let (x, f, hist) = descend(problem, s, cfg)?;
        start_objectives.push(f);
        if best.as_ref().map_or(true, |b| f < b.1) {
            best = Some((x, f, hist));
        }
    }
    let (mut x, mut f, history) = best.expect("at least one start");
    if f > initial_objective {
        x = initial.clone();
        f = initial_objective;
    }
    Ok(OptimizeResult {
        best: x,
        objective: f,
        initial_objective,
        history,
        start_objectives,
    })
}

pub fn write_history(history: &[HistoryEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "objective", "step", "gradient_norm"])?;
    for h in history {
        w.write_record([
            h.iteration.to_string(),
            format!("{:?}", h.objective),
            format!("{:?}", h.step),
            format!("{:?}", h.gradient_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}
