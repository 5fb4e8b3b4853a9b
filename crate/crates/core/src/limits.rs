//! Constraint limits, objective weights and their cost/penalty encodings.
//!
//! Per-bus vectors follow the slot order of the network: `omega_max` and `b`
//! index frequency slots, `c` indexes angle slots, storage quantities index
//! storage slots.

use serde::{Deserialize, Serialize};

use crate::dynamics::flow_between;
use crate::error::{Error, Result};
use crate::network::NetworkModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLimits {
    pub omega_max: Vec<f64>,
    /// Window every frequency deviation must end in.
    pub terminal_lo: f64,
    pub terminal_hi: f64,
    /// Range every angle must end in, if any.
    pub delta_final: Option<(f64, f64)>,
}

impl FrequencyLimits {
    pub fn unbounded(net: &NetworkModel) -> Self {
        FrequencyLimits {
            omega_max: vec![f64::INFINITY; net.omega_buses().len()],
            terminal_lo: f64::NEG_INFINITY,
            terminal_hi: f64::INFINITY,
            delta_final: None,
        }
    }

    pub fn validate(&self, net: &NetworkModel) -> Result<()> {
        check_len("omega_max", self.omega_max.len(), net.omega_buses().len())?;
        if self.omega_max.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::scenario("limits.omega_max", "must be positive"));
        }
        if !(self.terminal_lo < self.terminal_hi) {
            return Err(Error::scenario("limits.terminal_window", "lower bound must be below upper bound"));
        }
        if let Some((lo, hi)) = self.delta_final {
            if !(lo < hi) {
                return Err(Error::scenario("limits.delta_final", "lower bound must be below upper bound"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageLimits {
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    /// Bounds on the cumulative energy change at the final stage.
    pub e_lo: Vec<f64>,
    pub e_hi: Vec<f64>,
    /// Baseline exchange P^e entering the terminal power.
    pub p_e: Vec<f64>,
}

impl StorageLimits {
    pub fn unbounded(net: &NetworkModel) -> Self {
        let n = net.storage_buses().len();
        StorageLimits {
            p_min: vec![f64::NEG_INFINITY; n],
            p_max: vec![f64::INFINITY; n],
            e_lo: vec![f64::NEG_INFINITY; n],
            e_hi: vec![f64::INFINITY; n],
            p_e: vec![0.0; n],
        }
    }

    pub fn validate(&self, net: &NetworkModel) -> Result<()> {
        let n = net.storage_buses().len();
        for (name, v) in [
            ("p_min", &self.p_min),
            ("p_max", &self.p_max),
            ("e_lo", &self.e_lo),
            ("e_hi", &self.e_hi),
            ("p_e", &self.p_e),
        ] {
            check_len(name, v.len(), n)?;
        }
        for s in 0..n {
            if !(self.p_min[s] < self.p_max[s]) {
                return Err(Error::scenario("limits.storage.p_max", "must exceed p_min"));
            }
            if !(self.e_lo[s] < self.e_hi[s]) {
                return Err(Error::scenario("limits.storage.e_hi", "must exceed e_lo"));
            }
        }
        Ok(())
    }
}

/// Penalised excess of a line flow over a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowObjective {
    pub from: usize,
    pub to: usize,
    pub threshold: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    /// Inertia-deviation weight per storage slot.
    pub a: Vec<f64>,
    pub m_desired: Vec<f64>,
    /// |omega| weight per frequency slot.
    pub b: Vec<f64>,
    /// delta^2 weight per angle slot.
    pub c: Vec<f64>,
    /// Weights on storage power above P^r_max and below P^r_min.
    pub d_upper: Vec<f64>,
    pub d_lower: Vec<f64>,
    /// Weight on the final energy change leaving its bounds.
    pub energy: Vec<f64>,
    /// Charged when the final state leaves its window or a frequency bound is broken.
    pub my_inf: f64,
    /// Constant final-stage cost.
    pub final_state_cost: f64,
    pub flow: Option<FlowObjective>,
}

impl ObjectiveWeights {
    pub fn zeros(net: &NetworkModel) -> Self {
        let ns = net.storage_buses().len();
        ObjectiveWeights {
            a: vec![0.0; ns],
            m_desired: vec![0.0; ns],
            b: vec![0.0; net.omega_buses().len()],
            c: vec![0.0; net.angle_buses().len()],
            d_upper: vec![0.0; ns],
            d_lower: vec![0.0; ns],
            energy: vec![0.0; ns],
            my_inf: 1.0,
            final_state_cost: 0.0,
            flow: None,
        }
    }

    pub fn validate(&self, net: &NetworkModel) -> Result<()> {
        let ns = net.storage_buses().len();
        check_len("a", self.a.len(), ns)?;
        check_len("m_desired", self.m_desired.len(), ns)?;
        check_len("b", self.b.len(), net.omega_buses().len())?;
        check_len("c", self.c.len(), net.angle_buses().len())?;
        check_len("d_upper", self.d_upper.len(), ns)?;
        check_len("d_lower", self.d_lower.len(), ns)?;
        check_len("energy", self.energy.len(), ns)?;
        let all = self
            .a
            .iter()
            .chain(&self.b)
            .chain(&self.c)
            .chain(&self.d_upper)
            .chain(&self.d_lower)
            .chain(&self.energy)
            .chain([&self.final_state_cost]);
        if all.into_iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::scenario("weights", "weights must be finite and non-negative"));
        }
        if !(self.my_inf > 0.0) {
            return Err(Error::scenario("weights.my_inf", "must be positive"));
        }
        if let Some(f) = &self.flow {
            net.find_line(f.from, f.to)?;
            if !(f.weight >= 0.0) {
                return Err(Error::scenario("weights.flow.weight", "must be non-negative"));
            }
        }
        Ok(())
    }
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{name} has {got} entries, expected {want}")));
    }
    Ok(())
}

/// How a broken frequency bound is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyForm {
    /// `my_inf` once if any bound is exceeded.
    Indicator,
    /// `my_inf` times the summed excess.
    Hinge,
}

/// Running cost rate times `dt` at flat state `x` under inertia `m_e`.
pub fn stage_cost(net: &NetworkModel, x: &[f64], m_e: &[f64], w: &ObjectiveWeights, dt: f64) -> f64 {
    let na = net.angle_buses().len();
    let mut g = 0.0;
    for s in 0..m_e.len() {
        let d = m_e[s] - w.m_desired[s];
        g += w.a[s] * d * d;
    }
    for (i, bw) in w.b.iter().enumerate() {
        g += bw * x[na + i].abs();
    }
    for (i, cw) in w.c.iter().enumerate() {
        g += cw * x[i] * x[i];
    }
    if let Some(f) = &w.flow {
        if let Ok(p) = flow_between(net, x, f.from, f.to) {
            g += f.weight * (p - f.threshold).max(0.0);
        }
    }
    dt * g
}

/// Constraint penalty for one stage given the storage power `p_r` over that stage.
pub fn stage_penalty(
    net: &NetworkModel,
    x: &[f64],
    p_r: &[f64],
    freq: &FrequencyLimits,
    storage: &StorageLimits,
    w: &ObjectiveWeights,
    form: PenaltyForm,
) -> f64 {
    let na = net.angle_buses().len();
    let mut pen = 0.0;
    for (s, p) in p_r.iter().enumerate() {
        pen += w.d_upper[s] * (p - storage.p_max[s]).max(0.0);
        pen += w.d_lower[s] * (storage.p_min[s] - p).max(0.0);
    }
    match form {
        PenaltyForm::Indicator => {
            if freq.omega_max.iter().enumerate().any(|(i, m)| x[na + i].abs() > *m) {
                pen += w.my_inf;
            }
        }
        PenaltyForm::Hinge => {
            for (i, m) in freq.omega_max.iter().enumerate() {
                pen += w.my_inf * (x[na + i].abs() - m).max(0.0);
            }
        }
    }
    pen
}

/// Penalty on the final cumulative energy change per storage slot.
pub fn energy_penalty(e_final: &[f64], storage: &StorageLimits, w: &ObjectiveWeights) -> f64 {
    e_final
        .iter()
        .enumerate()
        .map(|(s, e)| w.energy[s] * ((e - storage.e_hi[s]).max(0.0) + (storage.e_lo[s] - e).max(0.0)))
        .sum()
}

/// True when the final state lies inside the terminal window and final angle range.
pub fn terminal_feasible(net: &NetworkModel, x: &[f64], freq: &FrequencyLimits) -> bool {
    terminal_level(net, x, freq) <= 0.0
}

/// Signed box distance to the terminal set: largest bound violation, negative inside.
pub fn terminal_level(net: &NetworkModel, x: &[f64], freq: &FrequencyLimits) -> f64 {
    let na = net.angle_buses().len();
    let mut level = f64::NEG_INFINITY;
    for w in &x[na..] {
        level = level.max(freq.terminal_lo - w).max(w - freq.terminal_hi);
    }
    if let Some((lo, hi)) = freq.delta_final {
        for d in &x[..na] {
            level = level.max(lo - d).max(d - hi);
        }
    }
    level
}

/// `my_inf` if the final state leaves its window, otherwise zero.
pub fn terminal_cost(net: &NetworkModel, x: &[f64], freq: &FrequencyLimits, w: &ObjectiveWeights) -> f64 {
    if terminal_feasible(net, x, freq) {
        0.0
    } else {
        w.my_inf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Bus, BusKind, Line};

    fn two_bus() -> NetworkModel {
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

    fn window(net: &NetworkModel) -> FrequencyLimits {
        FrequencyLimits {
            omega_max: vec![0.5],
            terminal_lo: -0.02,
            terminal_hi: 0.02,
            ..FrequencyLimits::unbounded(net)
        }
    }

    #[test]
    fn stage_cost_examples() {
        let net = two_bus();
        let mut w = ObjectiveWeights::zeros(&net);
        assert_eq!(stage_cost(&net, &[0.2, 0.1], &[7.0], &w, 0.5), 0.0);
        w.b = vec![1.0];
        assert!((stage_cost(&net, &[0.2, 0.1], &[7.0], &w, 0.5) - 0.05).abs() < 1e-15);
        w.b = vec![0.0];
        w.a = vec![1e5];
        w.m_desired = vec![4.0];
        assert_eq!(stage_cost(&net, &[0.2, 0.1], &[4.0], &w, 0.5), 0.0);
        assert!((stage_cost(&net, &[0.2, 0.1], &[4.08], &w, 0.5) - 1e5 * 0.08 * 0.08 * 0.5).abs() < 1e-6);
    }

    #[test]
    fn flow_term_is_a_hinge() {
        let net = two_bus();
        let mut w = ObjectiveWeights::zeros(&net);
        w.flow = Some(FlowObjective {
            from: 1,
            to: 2,
            threshold: 0.2,
            weight: 1.0,
        });
        assert_eq!(stage_cost(&net, &[0.1, 0.0], &[4.0], &w, 1.0), 0.0);
        let want = 0.3f64.sin() - 0.2;
        assert!((stage_cost(&net, &[0.3, 0.0], &[4.0], &w, 1.0) - want).abs() < 1e-15);
    }

    #[test]
    fn stage_penalty_examples() {
        let net = two_bus();
        let freq = window(&net);
        let mut st = StorageLimits::unbounded(&net);
        st.p_max = vec![0.15];
        let mut w = ObjectiveWeights::zeros(&net);
        w.d_upper = vec![1e5];
        w.my_inf = 2.0;
        let x = [0.1, 0.0];
        assert_eq!(stage_penalty(&net, &x, &[0.1], &freq, &st, &w, PenaltyForm::Indicator), 0.0);
        let p = stage_penalty(&net, &x, &[0.2], &freq, &st, &w, PenaltyForm::Indicator);
        assert!((p - 5000.0).abs() < 1e-9);
        let fast = [0.1, 0.6];
        assert_eq!(stage_penalty(&net, &fast, &[0.1], &freq, &st, &w, PenaltyForm::Indicator), 2.0);
        let h = stage_penalty(&net, &fast, &[0.1], &freq, &st, &w, PenaltyForm::Hinge);
        assert!((h - 0.2).abs() < 1e-12);
    }

    #[test]
    fn terminal_cost_examples() {
        let net = two_bus();
        let mut freq = window(&net);
        let mut w = ObjectiveWeights::zeros(&net);
        w.my_inf = 2.0;
        assert_eq!(terminal_cost(&net, &[0.3, 0.0], &freq, &w), 0.0);
        assert_eq!(terminal_cost(&net, &[0.3, 0.05], &freq, &w), 2.0);
        freq.terminal_lo = -1.0;
        freq.terminal_hi = 1.0;
        assert_eq!(terminal_cost(&net, &[0.3, 0.05], &freq, &w), 0.0);
    }

    #[test]
    fn terminal_level_is_signed_box_distance() {
        let net = two_bus();
        let mut freq = window(&net);
        freq.delta_final = Some((0.0, 0.6));
        assert!((terminal_level(&net, &[0.3, 0.0], &freq) + 0.02).abs() < 1e-15);
        assert!((terminal_level(&net, &[0.3, 0.05], &freq) - 0.03).abs() < 1e-15);
        assert!((terminal_level(&net, &[0.7, 0.0], &freq) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn energy_penalty_charges_both_sides() {
        let net = two_bus();
        let mut st = StorageLimits::unbounded(&net);
        st.e_lo = vec![-1.0];
        st.e_hi = vec![1.0];
        let mut w = ObjectiveWeights::zeros(&net);
        w.energy = vec![10.0];
        assert_eq!(energy_penalty(&[0.5], &st, &w), 0.0);
        assert!((energy_penalty(&[1.5], &st, &w) - 5.0).abs() < 1e-12);
        assert!((energy_penalty(&[-1.25], &st, &w) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn validation_catches_bad_inputs() {
        let net = two_bus();
        let mut w = ObjectiveWeights::zeros(&net);
        w.b = vec![-1.0];
        assert!(w.validate(&net).is_err());
        let mut w = ObjectiveWeights::zeros(&net);
        w.flow = Some(FlowObjective {
            from: 1,
            to: 3,
            threshold: 0.0,
            weight: 1.0,
        });
        assert!(w.validate(&net).is_err());
        let mut f = window(&net);
        f.terminal_hi = -0.1;
        assert!(f.validate(&net).is_err());
    }
}
