//! A fully specified optimal inertia problem shared by both solvers.

use crate::dynamics::{Method, Stepper};
use crate::error::{Error, Result};
use crate::limits::{
    energy_penalty, stage_cost, stage_penalty, terminal_cost, FrequencyLimits, ObjectiveWeights, PenaltyForm,
    StorageLimits,
};
use crate::metrics::energy_series;
use crate::network::NetworkModel;
use crate::trajectory::{CostBreakdown, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    /// Network with the disturbance already applied.
    pub net: NetworkModel,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub ts: f64,
    pub stages: usize,
    pub freq: FrequencyLimits,
    pub storage: StorageLimits,
    pub weights: ObjectiveWeights,
    /// Inertia bounds per storage slot.
    pub control_bounds: Vec<(f64, f64)>,
    storage_omega: Vec<usize>,
    storage_damping: Vec<f64>,
}

impl ControlProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: NetworkModel,
        x0: Vec<f64>,
        t0: f64,
        ts: f64,
        stages: usize,
        freq: FrequencyLimits,
        storage: StorageLimits,
        weights: ObjectiveWeights,
        control_bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if x0.len() != net.state_len() {
            return Err(Error::Dimension(format!(
                "initial state has {} entries, network needs {}",
                x0.len(),
                net.state_len()
            )));
        }
        if !(ts > 0.0) {
            return Err(Error::InvalidTimeStep(ts));
        }
        if stages == 0 {
            return Err(Error::scenario("horizon", "at least one stage is required"));
        }
        freq.validate(&net)?;
        storage.validate(&net)?;
        weights.validate(&net)?;
        if control_bounds.len() != net.storage_buses().len() {
            return Err(Error::Dimension(format!(
                "{} control bounds for {} storage buses",
                control_bounds.len(),
                net.storage_buses().len()
            )));
        }
        for (s, (lo, hi)) in control_bounds.iter().enumerate() {
            if !(*lo > 0.0 && lo <= hi) {
                return Err(Error::scenario(
                    format!("control_bounds[{}]", net.storage_buses()[s]),
                    "bounds must satisfy 0 < lo <= hi",
                ));
            }
        }
        let na = net.angle_buses().len();
        let mut storage_omega = Vec::new();
        let mut storage_damping = Vec::new();
        for id in net.storage_buses() {
            storage_omega.push(na + net.omega_slot(*id)?.expect("storage has a frequency state"));
            storage_damping.push(net.bus(*id)?.damping);
        }
        Ok(ControlProblem {
            net,
            x0,
            t0,
            ts,
            stages,
            freq,
            storage,
            weights,
            control_bounds,
            storage_omega,
            storage_damping,
        })
    }

    pub fn n_storage(&self) -> usize {
        self.control_bounds.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.stages).map(|k| self.t0 + k as f64 * self.ts).collect()
    }

    /// Advance `x` over one sample interval using `substeps` equal integration steps.
    pub fn advance(
        &self,
        stepper: &mut Stepper,
        x: &mut [f64],
        m_e: &[f64],
        method: Method,
        substeps: usize,
    ) -> Result<()> {
        let n = substeps.max(1);
        let h = self.ts / n as f64;
        for _ in 0..n {
            stepper.step(&self.net, x, m_e, h, method)?;
        }
        Ok(())
    }

    /// Storage terminal power over a sample interval, per storage slot.
    pub fn storage_power_into(&self, x: &[f64], x_next: &[f64], m_e: &[f64], out: &mut [f64]) {
        for s in 0..m_e.len() {
            let w = self.storage_omega[s];
            out[s] = self.storage.p_e[s] - m_e[s] * (x_next[w] - x[w]) / self.ts - self.storage_damping[s] * x[w];
        }
    }

    /// Running cost and constraint penalty of one stage, both already scaled by the step.
    pub fn stage_terms(&self, x: &[f64], m_e: &[f64], p_r: &[f64], form: PenaltyForm) -> (f64, f64) {
        let g = stage_cost(&self.net, x, m_e, &self.weights, self.ts);
        let p = stage_penalty(&self.net, x, p_r, &self.freq, &self.storage, &self.weights, form);
        (g, p * self.ts)
    }

    /// Constant final cost plus the terminal-window penalty.
    pub fn final_terms(&self, x: &[f64]) -> f64 {
        self.weights.final_state_cost + terminal_cost(&self.net, x, &self.freq, &self.weights)
    }

    /// Roll the schedule out from `x0` and price it.
    pub fn simulate(&self, schedule: &[Vec<f64>], method: Method, substeps: usize, form: PenaltyForm) -> Result<Trajectory> {
        if schedule.len() != self.stages {
            return Err(Error::Dimension(format!(
                "schedule has {} stages, horizon has {}",
                schedule.len(),
                self.stages
            )));
        }
        let ns = self.n_storage();
        let mut stepper = Stepper::new(self.x0.len());
        let mut states = Vec::with_capacity(self.stages + 1);
        let mut power = Vec::with_capacity(self.stages);
        states.push(self.x0.clone());
        let mut x = self.x0.clone();
        for u in schedule {
            if u.len() != ns {
                return Err(Error::Dimension(format!("{} inertia values for {ns} storage buses", u.len())));
            }
            let prev = x.clone();
            self.advance(&mut stepper, &mut x, u, method, substeps)?;
            let mut p = vec![0.0; ns];
            self.storage_power_into(&prev, &x, u, &mut p);
            power.push(p);
            states.push(x.clone());
        }
        let mut traj = Trajectory {
            dt: self.ts,
            times: self.times(),
            states,
            controls: schedule.to_vec(),
            storage_power: power,
            energy: Vec::new(),
            breakdown: CostBreakdown::default(),
        };
        self.price(&mut traj, form);
        Ok(traj)
    }

    /// Fill energy series and cost breakdown of a trajectory whose states, controls and power are set.
    pub fn price(&self, traj: &mut Trajectory, form: PenaltyForm) {
        let ns = self.n_storage();
        let n = traj.stages();
        let mut energy = vec![Vec::with_capacity(ns); n];
        for s in 0..ns {
            let series: Vec<f64> = traj.storage_power.iter().map(|p| p[s]).collect();
            for (k, e) in energy_series(&series, self.ts).into_iter().enumerate() {
                energy[k].push(e);
            }
        }
        let mut integral = 0.0;
        let mut penalty = 0.0;
        for k in 0..n {
            let (g, p) = self.stage_terms(&traj.states[k], &traj.controls[k], &traj.storage_power[k], form);
            integral += g;
            penalty += p;
        }
        if let Some(last) = energy.last() {
            penalty += energy_penalty(last, &self.storage, &self.weights);
        }
        let terminal = self.final_terms(&traj.states[n]);
        traj.energy = energy;
        traj.breakdown = CostBreakdown::new(integral, terminal, penalty);
    }
}
