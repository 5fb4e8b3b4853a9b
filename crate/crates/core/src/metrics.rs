use serde::{Deserialize, Serialize};

use crate::dynamics::flow_between;
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::trajectory::Trajectory;

/// `sum_k sum_i b_i |omega_i(k)| dt` over the stages `0..N` (final sample excluded).
pub fn freq_abs_integral(net: &NetworkModel, traj: &Trajectory, b: &[f64]) -> Result<f64> {
    if traj.stages() == 0 {
        return Err(Error::EmptyTrajectory);
    }
    if b.len() != net.omega_buses().len() {
        return Err(Error::Dimension(format!(
            "{} frequency weights for {} frequency states",
            b.len(),
            net.omega_buses().len()
        )));
    }
    let na = net.angle_buses().len();
    let mut total = 0.0;
    for x in &traj.states[..traj.stages()] {
        let mut s = 0.0;
        for (i, w) in b.iter().enumerate() {
            s += w * x[na + i].abs();
        }
        total += s * traj.dt;
    }
    Ok(total)
}

/// Running sums of `p * dt`.
pub fn energy_series(p: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v * dt;
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPeak {
    pub value: f64,
    pub time: f64,
}

/// Largest sampled flow from `from` to `to`; the earliest sample wins ties.
pub fn power_peak(net: &NetworkModel, traj: &Trajectory, from: usize, to: usize) -> Result<PowerPeak> {
    net.find_line(from, to)?;
    let mut best: Option<PowerPeak> = None;
    for (x, t) in traj.states.iter().zip(&traj.times) {
        let f = flow_between(net, x, from, to)?;
        if best.map_or(true, |b| f > b.value) {
            best = Some(PowerPeak { value: f, time: *t });
        }
    }
    best.ok_or(Error::EmptyTrajectory)
}

/// Largest value of a series with its time; the earliest sample wins ties.
pub fn series_peak(values: &[f64], times: &[f64]) -> Option<PowerPeak> {
    let mut best: Option<PowerPeak> = None;
    for (v, t) in values.iter().zip(times) {
        if best.map_or(true, |b| *v > b.value) {
            best = Some(PowerPeak { value: *v, time: *t });
        }
    }
    best
}
