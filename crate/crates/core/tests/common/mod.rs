#![allow(dead_code)]

use std::path::PathBuf;

use inertia_core::dp::{backward_sweep, rollout, AxisGrid, DpVariant, StageModel, StateGrid};
use inertia_core::dynamics::{rhs_into, Method};
use inertia_core::equilibrium::{equilibrium_residual, solve_equilibrium, NewtonOptions};
use inertia_core::limits::{
    stage_penalty, FrequencyLimits, ObjectiveWeights, PenaltyForm, StorageLimits,
};
use inertia_core::network::{Bus, BusKind, Line, NetworkModel};
use inertia_core::problem::ControlProblem;
use inertia_core::trajopt::{gradient, ControlSchedule, OptimizerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Tiny DP instance on an integer grid: controls shift the state by whole
/// grid steps, costs are small integers, so every sum is exact.
#[derive(Debug, Clone)]
pub struct TableModel {
    pub grid: StateGrid,
    pub stages: usize,
    pub controls: Vec<Vec<f64>>,
    /// cost[k][point][control]
    pub cost: Vec<Vec<Vec<f64>>>,
    pub final_cost: Vec<f64>,
    pub terminal_ok: Vec<bool>,
    pub my_inf: f64,
}

impl TableModel {
    fn point_index(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = x.iter().map(|v| *v as usize).collect();
        self.grid.index(&idx)
    }

    fn control_index(&self, u: &[f64]) -> usize {
        self.controls.iter().position(|c| c == u).expect("known control")
    }
}

impl StageModel for TableModel {
    fn stages(&self) -> usize {
        self.stages
    }
    fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }
    fn transition(&self, _k: usize, x: &[f64], u: &[f64], out: &mut [f64]) -> inertia_core::Result<()> {
        for i in 0..x.len() {
            out[i] = x[i] + u[i];
        }
        Ok(())
    }
    fn stage_cost(&self, k: usize, x: &[f64], u: &[f64], _next: &[f64]) -> f64 {
        self.cost[k][self.point_index(x)][self.control_index(u)]
    }
    fn final_cost(&self, x: &[f64]) -> f64 {
        self.final_cost[self.point_index(x)]
    }
    fn terminal_level(&self, x: &[f64]) -> f64 {
        if self.terminal_ok[self.point_index(x)] {
            -1.0
        } else {
            1.0
        }
    }
    fn my_inf(&self) -> f64 {
        self.my_inf
    }
}

/// Up to 3 stages, up to 5 points per axis, up to 4 controls; the zero shift is
/// always available so staying on the grid is possible.
pub fn random_table_model(seed: u64) -> (TableModel, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..=2);
    let axes: Vec<AxisGrid> = (0..dim)
        .map(|_| {
            let n = rng.gen_range(2..=5);
            AxisGrid::new(0.0, (n - 1) as f64, n).unwrap()
        })
        .collect();
    let grid = StateGrid::new(axes).unwrap();
    let stages = rng.gen_range(1..=3);
    let n_controls = rng.gen_range(1..=4);
    let mut controls = vec![vec![0.0; dim]];
    while controls.len() < n_controls {
        let u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
        if !controls.contains(&u) {
            controls.push(u);
        }
    }
    let cost = (0..stages)
        .map(|_| {
            (0..grid.len())
                .map(|_| (0..controls.len()).map(|_| rng.gen_range(0..10) as f64).collect())
                .collect()
        })
        .collect();
    let final_cost = (0..grid.len()).map(|_| rng.gen_range(0..10) as f64).collect();
    let mut terminal_ok: Vec<bool> = (0..grid.len()).map(|_| rng.gen_bool(0.7)).collect();
    let start = rng.gen_range(0..grid.len());
    // standing still reaches a feasible end, so leaving the grid never pays
    terminal_ok[start] = true;
    let x0 = grid.point(start);
    (
        TableModel {
            grid,
            stages,
            controls,
            cost,
            final_cost,
            terminal_ok,
            my_inf: 1e6,
        },
        x0,
    )
}

/// Minimum over every control sequence that keeps the state on the grid,
/// summed back to front like the recursion does.
pub fn brute_force(m: &TableModel, x0: &[f64]) -> f64 {
    fn rec(m: &TableModel, k: usize, x: &[f64]) -> f64 {
        if k == m.stages {
            let i = m.point_index(x);
            return m.final_cost[i] + if m.terminal_ok[i] { 0.0 } else { m.my_inf };
        }
        let mut best = f64::INFINITY;
        for u in &m.controls {
            let next: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + b).collect();
            if !m.grid.contains(&next) {
                continue;
            }
            let c = m.stage_cost(k, x, u, &next) + rec(m, k + 1, &next);
            best = best.min(c);
        }
        best
    }
    rec(m, 0, x0)
}

/// DP value at `x0`, rollout total, and brute-force optimum of one instance.
pub fn dp_vs_enumeration(seed: u64) -> (f64, f64, f64) {
    let (m, x0) = random_table_model(seed);
    let (table, _) = backward_sweep(&m, &m.grid, DpVariant::Basic).unwrap();
    let j0 = table.cost_to_go(0, &x0, m.my_inf);
    let roll = rollout(&m, &table, &x0).unwrap();
    (j0, roll.total, brute_force(&m, &x0))
}

/// Connected network of 2..=8 buses with a balanced, transferable injection pattern.
pub fn random_network(seed: u64) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=8);
    let reference = rng.gen_range(1..=n);
    let mut buses = Vec::new();
    let mut total = 0.0;
    for id in 1..=n {
        if id == reference {
            continue;
        }
        let p = rng.gen_range(-0.3..0.3);
        total += p;
        let bus = match rng.gen_range(0..3) {
            0 => Bus::new(id, BusKind::Generator, Some(rng.gen_range(1.0..20.0)), rng.gen_range(0.1..4.0), p),
            1 => Bus::new(id, BusKind::Load, None, rng.gen_range(0.1..2.0), p),
            _ => Bus::new(id, BusKind::Storage, None, rng.gen_range(0.1..2.0), p),
        };
        buses.push(bus);
    }
    buses.push(Bus::new(reference, BusKind::Reference, None, 0.0, -total));
    let mut lines = Vec::new();
    // spanning tree, then a few extra lines
    for id in 2..=n {
        let to = rng.gen_range(1..id);
        lines.push(Line {
            from: id,
            to,
            b: rng.gen_range(2.0..10.0),
        });
    }
    for _ in 0..rng.gen_range(0..=n) {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        if a != b && !lines.iter().any(|l| (l.from, l.to) == (a, b) || (l.from, l.to) == (b, a)) {
            lines.push(Line {
                from: a,
                to: b,
                b: rng.gen_range(2.0..10.0),
            });
        }
    }
    NetworkModel::new(buses, lines, reference, 100.0).unwrap()
}

/// Largest of: equilibrium residual, |rhs| at the equilibrium, and the
/// imbalance of electrical power summed over all buses including the reference.
pub fn equilibrium_invariants(seed: u64) -> f64 {
    let net = random_network(seed);
    let state = solve_equilibrium(&net, &NewtonOptions::default()).unwrap();
    let residual = equilibrium_residual(&net, &state).unwrap();
    let x = state.to_flat();
    let mut dx = vec![0.0; x.len()];
    rhs_into(&net, &x, &vec![3.0; net.storage_buses().len()], &mut dx).unwrap();
    let drift = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pe = inertia_core::dynamics::net_electrical_power(&net, &state).unwrap();
    let balance = pe.iter().sum::<f64>().abs();
    residual.max(drift).max(balance)
}

pub fn two_bus_net() -> NetworkModel {
    NetworkModel::new(
        vec![
            Bus::new(1, BusKind::Storage, None, 1.0, 0.3),
            Bus::new(2, BusKind::Reference, None, 0.0, -0.3),
        ],
        vec![Line { from: 1, to: 2, b: 1.0 }],
        2,
        100.0,
    )
    .unwrap()
}

/// One-storage problem whose only cost is the inertia-deviation term.
pub fn quadratic_problem(a: f64, m_desired: f64, stages: usize) -> ControlProblem {
    let net = two_bus_net();
    let mut w = ObjectiveWeights::zeros(&net);
    w.a = vec![a];
    w.m_desired = vec![m_desired];
    ControlProblem::new(
        net.clone(),
        vec![0.0, 0.0],
        0.0,
        0.5,
        stages,
        FrequencyLimits::unbounded(&net),
        StorageLimits::unbounded(&net),
        w,
        vec![(1.0, 10.0)],
    )
    .unwrap()
}

/// Largest deviation of the finite-difference gradient from `2 a (M - M_d) Ts`
/// for relative step `rel`.
pub fn quadratic_gradient_error(rel: f64, seed: u64) -> f64 {
    let (a, md, n) = (3.0, 5.0, 8);
    let p = quadratic_problem(a, md, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(2.0..9.0)]).collect();
    let s = ControlSchedule::new(values.clone(), p.control_bounds.clone()).unwrap();
    let cfg = OptimizerConfig {
        method: Method::Euler,
        substeps: 1,
        ..OptimizerConfig::default()
    };
    let h = rel * 9.0;
    let g = gradient(&p, &s, &[h], &cfg).unwrap();
    g.iter()
        .zip(&values)
        .map(|(gk, uk)| (gk[0] - 2.0 * a * (uk[0] - md) * p.ts).abs())
        .fold(0.0, f64::max)
}

/// Penalty fuzzing: zero inside every limit, positive outside, non-decreasing in the violation.
/// Returns a description of the first failure.
pub fn penalty_fuzz(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = two_bus_net();
    let mut w = ObjectiveWeights::zeros(&net);
    w.d_upper = vec![rng.gen_range(0.1..1e5)];
    w.d_lower = vec![rng.gen_range(0.1..1e5)];
    w.my_inf = rng.gen_range(0.1..10.0);
    let omega_max = rng.gen_range(0.05..1.0);
    let freq = FrequencyLimits {
        omega_max: vec![omega_max],
        terminal_lo: -0.02,
        terminal_hi: 0.02,
        delta_final: None,
    };
    let mut st = StorageLimits::unbounded(&net);
    let p_max = rng.gen_range(0.0..1.0);
    let p_min = -rng.gen_range(0.0..1.0);
    st.p_max = vec![p_max];
    st.p_min = vec![p_min];
    for form in [PenaltyForm::Indicator, PenaltyForm::Hinge] {
        let inside_w = rng.gen_range(-omega_max..=omega_max);
        let inside_p = rng.gen_range(p_min..=p_max);
        let pen = |om: f64, p: f64| stage_penalty(&net, &[0.1, om], &[p], &freq, &st, &w, form);
        if pen(inside_w, inside_p) != 0.0 {
            return Err(format!("{form:?}: nonzero penalty inside limits"));
        }
        let e1 = rng.gen_range(1e-6..0.5);
        let e2 = e1 + rng.gen_range(1e-6..0.5);
        for (a, b) in [
            (pen(inside_w, p_max + e1), pen(inside_w, p_max + e2)),
            (pen(inside_w, p_min - e1), pen(inside_w, p_min - e2)),
            (pen(omega_max + e1, inside_p), pen(omega_max + e2, inside_p)),
            (pen(-omega_max - e1, inside_p), pen(-omega_max - e2, inside_p)),
        ] {
            if !(a > 0.0 && b >= a) {
                return Err(format!("{form:?}: penalty not sound/monotone ({a}, {b})"));
            }
        }
        // scaling a weight up never lowers the penalty
        let mut w2 = w.clone();
        w2.d_upper[0] *= 2.0;
        w2.my_inf *= 2.0;
        let before = pen(omega_max + e1, p_max + e1);
        let after = stage_penalty(&net, &[0.1, omega_max + e1], &[p_max + e1], &freq, &st, &w2, form);
        if after < before {
            return Err(format!("{form:?}: penalty decreased with larger weights"));
        }
    }
    Ok(())
}
