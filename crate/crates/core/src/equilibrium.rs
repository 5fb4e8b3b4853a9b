//! Power-flow equilibrium of the lossless network and susceptance calibration.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{net_electrical_power, SystemState};
use crate::error::{Error, Result};
use crate::network::{BusKind, NetworkModel};

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Starting angles per angle slot; zeros when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 50,
            tolerance: 1e-12,
            initial: None,
        }
    }
}

/// Injection mismatch `P0_i - sum_j b_ij sin(delta_i - delta_j)` per angle slot.
fn mismatch(net: &NetworkModel, delta: &[f64]) -> Vec<f64> {
    let mut f: Vec<f64> = net
        .angle_buses()
        .iter()
        .map(|id| net.bus(*id).expect("slot bus exists").injection)
        .collect();
    for l in net.line_slots() {
        let di = l.from.map_or(0.0, |s| delta[s]);
        let dj = l.to.map_or(0.0, |s| delta[s]);
        let p = l.b * (di - dj).sin();
        if let Some(s) = l.from {
            f[s] -= p;
        }
        if let Some(s) = l.to {
            f[s] += p;
        }
    }
    f
}

/// Jacobian of the mismatch with respect to the slot angles.
fn jacobian(net: &NetworkModel, delta: &[f64]) -> DMatrix<f64> {
    let n = delta.len();
    let mut j = DMatrix::zeros(n, n);
    for l in net.line_slots() {
        let di = l.from.map_or(0.0, |s| delta[s]);
        let dj = l.to.map_or(0.0, |s| delta[s]);
        let c = l.b * (di - dj).cos();
        if let Some(a) = l.from {
            j[(a, a)] -= c;
            if let Some(b) = l.to {
                j[(a, b)] += c;
            }
        }
        if let Some(b) = l.to {
            j[(b, b)] -= c;
            if let Some(a) = l.from {
                j[(b, a)] += c;
            }
        }
    }
    j
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration on the sine power-flow equations. Frequencies are zero.
pub fn solve_equilibrium(net: &NetworkModel, opts: &NewtonOptions) -> Result<SystemState> {
    let n = net.angle_buses().len();
    let imbalance = net.injection_mismatch();
    if imbalance.abs() > 1e-9 {
        return Err(Error::InvalidNetwork(format!(
            "injections do not balance (sum {imbalance:e})"
        )));
    }
    let mut delta = match &opts.initial {
        Some(v) if v.len() == n => v.clone(),
        Some(v) => {
            return Err(Error::Dimension(format!(
                "initial guess has {} angles, network needs {n}",
                v.len()
            )))
        }
        None => vec![0.0; n],
    };
    let mut f = mismatch(net, &delta);
    let mut res = inf_norm(&f);
    for _ in 0..opts.max_iterations {
        if res < opts.tolerance {
            break;
        }
        let j = jacobian(net, &delta);
        let Some(step) = j.lu().solve(&DVector::from_column_slice(&f)) else {
            break;
        };
        // J * step = f, and the Newton update is delta - step
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = delta.iter().zip(step.iter()).map(|(d, s)| d - alpha * s).collect();
            let ft = mismatch(net, &trial);
            let rt = inf_norm(&ft);
            if rt < res || alpha < 1e-6 {
                delta = trial;
                f = ft;
                res = rt;
                break;
            }
            alpha *= 0.5;
        }
    }
    if !(res < opts.tolerance.max(1e-10)) {
        return Err(Error::NoConvergence {
            iterations: opts.max_iterations,
            residual: res,
        });
    }
    Ok(SystemState {
        delta,
        omega: vec![0.0; net.omega_buses().len()],
    })
}

/// Largest absolute power mismatch `P0 - D*omega - sum b sin(...)` over non-reference buses,
/// combined with the largest absolute frequency deviation.
pub fn equilibrium_residual(net: &NetworkModel, state: &SystemState) -> Result<f64> {
    let pe = net_electrical_power(net, state)?;
    let mut r: f64 = 0.0;
    for (pos, bus) in net.buses().iter().enumerate() {
        if bus.kind == BusKind::Reference {
            continue;
        }
        let w = state.frequency(net, bus.id)?.unwrap_or(0.0);
        r = r.max((bus.injection - bus.damping * w - pe[pos]).abs());
        r = r.max(w.abs());
    }
    Ok(r)
}

/// Adjust line susceptances by the smallest relative change that makes `angles`
/// (per angle slot) an exact equilibrium of the current injections.
pub fn calibrate_susceptances(net: &NetworkModel, angles: &[f64]) -> Result<NetworkModel> {
    let n = net.angle_buses().len();
    if angles.len() != n {
        return Err(Error::Dimension(format!(
            "{} target angles for {n} angle slots",
            angles.len()
        )));
    }
    let m = net.line_slots().len();
    let mut a = DMatrix::zeros(n, m);
    for (c, l) in net.line_slots().iter().enumerate() {
        let di = l.from.map_or(0.0, |s| angles[s]);
        let dj = l.to.map_or(0.0, |s| angles[s]);
        let s = (di - dj).sin();
        if let Some(r) = l.from {
            a[(r, c)] += s;
        }
        if let Some(r) = l.to {
            a[(r, c)] -= s;
        }
    }
    let b0 = DVector::from_iterator(m, net.line_slots().iter().map(|l| l.b));
    let p = DVector::from_iterator(
        n,
        net.angle_buses().iter().map(|id| net.bus(*id).expect("slot bus exists").injection),
    );
    let w = DMatrix::from_diagonal(&b0.map(|b| b * b));
    let awat = &a * &w * a.transpose();
    let rhs = p - &a * &b0;
    let lambda = awat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidNetwork("target angles leave the susceptances undetermined".into()))?;
    let b = b0 + w * a.transpose() * lambda;
    if let Some(i) = b.iter().position(|v| !(*v > 0.0)) {
        let l = &net.lines()[i];
        return Err(Error::InvalidNetwork(format!(
            "calibration drives line {}-{} to non-positive susceptance {}",
            l.from, l.to, b[i]
        )));
    }
    net.with_susceptances(b.as_slice())
}
