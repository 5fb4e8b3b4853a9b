//! Swing dynamics of the reduced (reference-eliminated) system.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusKind, Line, NetworkModel};

/// Angles (rad) per angle slot and frequency deviations per frequency slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SystemState {
    pub fn zeros(net: &NetworkModel) -> Self {
        SystemState {
            delta: vec![0.0; net.angle_buses().len()],
            omega: vec![0.0; net.omega_buses().len()],
        }
    }

    pub fn from_flat(net: &NetworkModel, x: &[f64]) -> Result<Self> {
        let na = net.angle_buses().len();
        if x.len() != net.state_len() {
            return Err(Error::Dimension(format!(
                "flat state has {} entries, network needs {}",
                x.len(),
                net.state_len()
            )));
        }
        Ok(SystemState {
            delta: x[..na].to_vec(),
            omega: x[na..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.delta.len() + self.omega.len());
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.omega);
        v
    }

    pub fn check(&self, net: &NetworkModel) -> Result<()> {
        if self.delta.len() != net.angle_buses().len() || self.omega.len() != net.omega_buses().len() {
            return Err(Error::Dimension(format!(
                "state has {}+{} entries, network needs {}+{}",
                self.delta.len(),
                self.omega.len(),
                net.angle_buses().len(),
                net.omega_buses().len()
            )));
        }
        Ok(())
    }

    /// Angle of `bus`, zero for the reference bus.
    pub fn angle(&self, net: &NetworkModel, bus: usize) -> Result<f64> {
        Ok(net.angle_slot(bus)?.map_or(0.0, |s| self.delta[s]))
    }

    /// Frequency deviation of `bus`; `None` for buses without a frequency state.
    pub fn frequency(&self, net: &NetworkModel, bus: usize) -> Result<Option<f64>> {
        Ok(net.omega_slot(bus)?.map(|s| self.omega[s]))
    }
}

/// Virtual inertia (s) per storage bus, held in storage-slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    values: Vec<f64>,
}

impl ControlInput {
    pub fn new(net: &NetworkModel, values: Vec<f64>) -> Result<Self> {
        if values.len() != net.storage_buses().len() {
            return Err(Error::Dimension(format!(
                "{} inertia values for {} storage buses",
                values.len(),
                net.storage_buses().len()
            )));
        }
        Ok(ControlInput { values })
    }

    pub fn uniform(net: &NetworkModel, m_e: f64) -> Self {
        ControlInput {
            values: vec![m_e; net.storage_buses().len()],
        }
    }

    pub fn from_map(net: &NetworkModel, map: &BTreeMap<usize, f64>) -> Result<Self> {
        let values = net
            .storage_buses()
            .iter()
            .map(|id| map.get(id).copied().ok_or(Error::MissingControl(*id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlInput { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

/// Active power flow from `line.from` to `line.to`: `b * sin(delta_from - delta_to)`.
pub fn line_flow(net: &NetworkModel, state: &SystemState, line: &Line) -> Result<f64> {
    let di = state.angle(net, line.from)?;
    let dj = state.angle(net, line.to)?;
    Ok(line.b * (di - dj).sin())
}

/// Flow from `from` to `to` on the line joining them, evaluated on a flat state.
pub fn flow_between(net: &NetworkModel, x: &[f64], from: usize, to: usize) -> Result<f64> {
    let line = net.find_line(from, to)?;
    let di = net.angle_slot(from)?.map_or(0.0, |s| x[s]);
    let dj = net.angle_slot(to)?.map_or(0.0, |s| x[s]);
    Ok(line.b * (di - dj).sin())
}

/// Net electrical power leaving every bus, in bus order (reference bus included).
pub fn net_electrical_power(net: &NetworkModel, state: &SystemState) -> Result<Vec<f64>> {
    state.check(net)?;
    let mut out = vec![0.0; net.buses().len()];
    for line in net.lines() {
        let f = line_flow(net, state, line)?;
        out[net.position(line.from)?] += f;
        out[net.position(line.to)?] -= f;
    }
    Ok(out)
}

/// State derivative for inertia input `u`.
pub fn rhs(net: &NetworkModel, state: &SystemState, u: &ControlInput) -> Result<SystemState> {
    state.check(net)?;
    let x = state.to_flat();
    let mut dx = vec![0.0; x.len()];
    rhs_into(net, &x, u.values(), &mut dx)?;
    SystemState::from_flat(net, &dx)
}

/// Flat-vector form of [`rhs`]; `m_e` holds one inertia per storage slot.
pub fn rhs_into(net: &NetworkModel, x: &[f64], m_e: &[f64], out: &mut [f64]) -> Result<()> {
    let na = net.angle_buses().len();
    debug_assert_eq!(x.len(), net.state_len());
    debug_assert_eq!(out.len(), x.len());
    if m_e.len() != net.storage_buses().len() {
        return Err(Error::Dimension(format!(
            "{} inertia values for {} storage buses",
            m_e.len(),
            net.storage_buses().len()
        )));
    }
    // accumulate net electrical power per angle slot in out[..na]
    out[..na].iter_mut().for_each(|v| *v = 0.0);
    for l in net.line_slots() {
        let di = l.from.map_or(0.0, |s| x[s]);
        let dj = l.to.map_or(0.0, |s| x[s]);
        let f = l.b * (di - dj).sin();
        if let Some(s) = l.from {
            out[s] += f;
        }
        if let Some(s) = l.to {
            out[s] -= f;
        }
    }
    let mut storage = 0;
    let omega_slots = net.omega_slots_by_position();
    for (pos, bus) in net.buses().iter().enumerate() {
        let Some(a) = net.angle_slots_by_position()[pos] else {
            continue;
        };
        let pe = out[a];
        match bus.kind {
            BusKind::Load => {
                out[a] = (bus.injection - pe) / bus.damping;
            }
            BusKind::Generator | BusKind::Storage => {
                let m = if bus.kind == BusKind::Storage {
                    let m = m_e[storage];
                    storage += 1;
                    m
                } else {
                    bus.inertia.unwrap_or(0.0)
                };
                if !(m > 0.0) {
                    return Err(Error::NonPositiveParameter {
                        bus: bus.id,
                        what: "inertia",
                        value: m,
                    });
                }
                let w = na + omega_slots[pos].expect("second-order bus has a frequency slot");
                let omega = x[w];
                out[a] = omega;
                out[w] = (bus.injection - pe - bus.damping * omega) / m;
            }
            BusKind::Reference => unreachable!("reference bus has no angle slot"),
        }
    }
    Ok(())
}

/// Reusable buffers for fixed-step integration on flat states.
#[derive(Debug, Clone)]
pub struct Stepper {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Stepper {
    pub fn new(len: usize) -> Self {
        Stepper {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    /// Advance `x` in place by one step of length `dt`.
    pub fn step(&mut self, net: &NetworkModel, x: &mut [f64], m_e: &[f64], dt: f64, method: Method) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        match method {
            Method::Euler => {
                rhs_into(net, x, m_e, &mut self.k1)?;
                for (xi, ki) in x.iter_mut().zip(&self.k1) {
                    *xi += dt * ki;
                }
            }
            Method::Rk4 => {
                rhs_into(net, x, m_e, &mut self.k1)?;
                for i in 0..x.len() {
                    self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
                }
                rhs_into(net, &self.tmp, m_e, &mut self.k2)?;
                for i in 0..x.len() {
                    self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
                }
                rhs_into(net, &self.tmp, m_e, &mut self.k3)?;
                for i in 0..x.len() {
                    self.tmp[i] = x[i] + dt * self.k3[i];
                }
                rhs_into(net, &self.tmp, m_e, &mut self.k4)?;
                for i in 0..x.len() {
                    x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
                }
            }
        }
        check_finite(net, x)
    }
}

pub(crate) fn check_finite(net: &NetworkModel, x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        let na = net.angle_buses().len();
        let bus = if i < na {
            net.angle_buses()[i]
        } else {
            net.omega_buses()[i - na]
        };
        return Err(Error::NonFinite { bus });
    }
    Ok(())
}

/// One integration step of length `dt`.
pub fn step(net: &NetworkModel, state: &SystemState, u: &ControlInput, dt: f64, method: Method) -> Result<SystemState> {
    state.check(net)?;
    let mut x = state.to_flat();
    Stepper::new(x.len()).step(net, &mut x, u.values(), dt, method)?;
    SystemState::from_flat(net, &x)
}

/// Net terminal power of a storage unit over one sample interval:
/// `p_e - M_e (omega_{k+1} - omega_k) / dt - D_e omega_k`.
pub fn storage_terminal_power(omega_k: f64, omega_k1: f64, m_e: f64, d_e: f64, p_e: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    Ok(p_e - m_e * (omega_k1 - omega_k) / dt - d_e * omega_k)
}
