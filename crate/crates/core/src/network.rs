//! Lossless structure-preserving network description.
//!
//! Buses are kept sorted by id. The reference bus is an infinite bus: it has
//! no state and contributes a zero angle to every line flow. Every other bus
//! owns an angle slot; generator and storage buses additionally own a
//! frequency slot. The flat state layout used throughout the crate is
//! `[delta_0 .. delta_{na-1}, omega_0 .. omega_{nw-1}]`, both in bus-id order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default system base in MVA.
pub const DEFAULT_BASE_MVA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    /// Second-order swing dynamics with fixed inertia (generators, motor loads).
    Generator,
    /// First-order dynamics driven by damping only.
    Load,
    /// Second-order virtual machine whose inertia is the control input.
    Storage,
    /// Infinite bus; angle and frequency frozen at zero.
    Reference,
}

impl BusKind {
    pub fn is_second_order(self) -> bool {
        matches!(self, BusKind::Generator | BusKind::Storage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Inertia in seconds. Required for generators, ignored otherwise.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    /// Damping in p.u.
    #[serde(rename = "D", default)]
    pub damping: f64,
    /// Net active power injection in p.u.
    #[serde(rename = "P0", default)]
    pub injection: f64,
}

impl Bus {
    pub fn new(id: usize, kind: BusKind, inertia: Option<f64>, damping: f64, injection: f64) -> Self {
        Bus {
            id,
            kind,
            inertia,
            damping,
            injection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Susceptance in p.u.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkSpec {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    reference_bus: usize,
    #[serde(default = "default_base")]
    base_mva: f64,
}

fn default_base() -> f64 {
    DEFAULT_BASE_MVA
}

/// Line with its endpoint angle slots resolved (`None` = reference bus).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LineSlots {
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpec", into = "NetworkSpec")]
pub struct NetworkModel {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    reference_bus: usize,
    base_mva: f64,
    // derived
    angle_slot: Vec<Option<usize>>,
    omega_slot: Vec<Option<usize>>,
    angle_buses: Vec<usize>,
    omega_buses: Vec<usize>,
    storage_buses: Vec<usize>,
    line_slots: Vec<LineSlots>,
}

impl TryFrom<NetworkSpec> for NetworkModel {
    type Error = Error;

    fn try_from(spec: NetworkSpec) -> Result<Self> {
        NetworkModel::new(spec.buses, spec.lines, spec.reference_bus, spec.base_mva)
    }
}

impl From<NetworkModel> for NetworkSpec {
    fn from(net: NetworkModel) -> Self {
        NetworkSpec {
            buses: net.buses,
            lines: net.lines,
            reference_bus: net.reference_bus,
            base_mva: net.base_mva,
        }
    }
}

impl NetworkModel {
    pub fn new(mut buses: Vec<Bus>, lines: Vec<Line>, reference_bus: usize, base_mva: f64) -> Result<Self> {
        buses.sort_by_key(|b| b.id);
        if buses.is_empty() {
            return Err(Error::InvalidNetwork("no buses".into()));
        }
        if !(base_mva > 0.0) {
            return Err(Error::InvalidNetwork(format!("base_mva must be positive (got {base_mva})")));
        }
        for w in buses.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::InvalidNetwork(format!("duplicate bus id {}", w[0].id)));
            }
        }
        let references: Vec<usize> = buses
            .iter()
            .filter(|b| b.kind == BusKind::Reference)
            .map(|b| b.id)
            .collect();
        if references != [reference_bus] {
            return Err(Error::InvalidNetwork(format!(
                "exactly one reference bus required and it must be bus {reference_bus}; found {references:?}"
            )));
        }
        for bus in &buses {
            if !bus.injection.is_finite() || !bus.damping.is_finite() {
                return Err(Error::InvalidNetwork(format!("non-finite parameter at bus {}", bus.id)));
            }
            match bus.kind {
                BusKind::Generator => match bus.inertia {
                    Some(m) if m > 0.0 => {}
                    other => {
                        return Err(Error::NonPositiveParameter {
                            bus: bus.id,
                            what: "inertia",
                            value: other.unwrap_or(0.0),
                        })
                    }
                },
                BusKind::Load if bus.damping <= 0.0 => {
                    return Err(Error::NonPositiveParameter {
                        bus: bus.id,
                        what: "damping",
                        value: bus.damping,
                    })
                }
                _ => {}
            }
            if bus.damping < 0.0 {
                return Err(Error::NonPositiveParameter {
                    bus: bus.id,
                    what: "damping",
                    value: bus.damping,
                });
            }
        }

        let position: BTreeMap<usize, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let mut pairs = BTreeSet::new();
        for line in &lines {
            for end in [line.from, line.to] {
                if !position.contains_key(&end) {
                    return Err(Error::UnknownBus(end));
                }
            }
            if line.from == line.to {
                return Err(Error::InvalidNetwork(format!("self-loop at bus {}", line.from)));
            }
            if !(line.b > 0.0) || !line.b.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "line {}-{} needs a positive susceptance (got {})",
                    line.from, line.to, line.b
                )));
            }
            if !pairs.insert((line.from.min(line.to), line.from.max(line.to))) {
                return Err(Error::InvalidNetwork(format!(
                    "more than one line between buses {} and {}",
                    line.from, line.to
                )));
            }
        }

        // connectivity via union-find
        let mut parent: Vec<usize> = (0..buses.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for line in &lines {
            let a = find(&mut parent, position[&line.from]);
            let b = find(&mut parent, position[&line.to]);
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        for i in 0..buses.len() {
            if find(&mut parent, i) != root {
                return Err(Error::InvalidNetwork(format!("bus {} is not connected", buses[i].id)));
            }
        }

        let mut angle_slot = vec![None; buses.len()];
        let mut omega_slot = vec![None; buses.len()];
        let mut angle_buses = Vec::new();
        let mut omega_buses = Vec::new();
        let mut storage_buses = Vec::new();
        for (i, bus) in buses.iter().enumerate() {
            if bus.kind == BusKind::Reference {
                continue;
            }
            angle_slot[i] = Some(angle_buses.len());
            angle_buses.push(bus.id);
            if bus.kind.is_second_order() {
                omega_slot[i] = Some(omega_buses.len());
                omega_buses.push(bus.id);
            }
            if bus.kind == BusKind::Storage {
                storage_buses.push(bus.id);
            }
        }
        let line_slots = lines
            .iter()
            .map(|l| LineSlots {
                from: angle_slot[position[&l.from]],
                to: angle_slot[position[&l.to]],
                b: l.b,
            })
            .collect();

        Ok(NetworkModel {
            buses,
            lines,
            reference_bus,
            base_mva,
            angle_slot,
            omega_slot,
            angle_buses,
            omega_buses,
            storage_buses,
            line_slots,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn reference_bus(&self) -> usize {
        self.reference_bus
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn bus(&self, id: usize) -> Result<&Bus> {
        self.position(id).map(|i| &self.buses[i])
    }

    pub(crate) fn position(&self, id: usize) -> Result<usize> {
        self.buses
            .binary_search_by_key(&id, |b| b.id)
            .map_err(|_| Error::UnknownBus(id))
    }

    /// Bus ids owning an angle state, in slot order.
    pub fn angle_buses(&self) -> &[usize] {
        &self.angle_buses
    }

    /// Bus ids owning a frequency state, in slot order.
    pub fn omega_buses(&self) -> &[usize] {
        &self.omega_buses
    }

    /// Storage bus ids, in control slot order.
    pub fn storage_buses(&self) -> &[usize] {
        &self.storage_buses
    }

    pub fn angle_slot(&self, id: usize) -> Result<Option<usize>> {
        self.position(id).map(|i| self.angle_slot[i])
    }

    pub fn omega_slot(&self, id: usize) -> Result<Option<usize>> {
        self.position(id).map(|i| self.omega_slot[i])
    }

    pub fn storage_slot(&self, id: usize) -> Result<usize> {
        self.storage_buses
            .iter()
            .position(|&s| s == id)
            .ok_or(Error::MissingControl(id))
    }

    /// Length of the flat state vector.
    pub fn state_len(&self) -> usize {
        self.angle_buses.len() + self.omega_buses.len()
    }

    pub(crate) fn line_slots(&self) -> &[LineSlots] {
        &self.line_slots
    }

    pub(crate) fn angle_slots_by_position(&self) -> &[Option<usize>] {
        &self.angle_slot
    }

    pub(crate) fn omega_slots_by_position(&self) -> &[Option<usize>] {
        &self.omega_slot
    }

    pub fn find_line(&self, from: usize, to: usize) -> Result<&Line> {
        self.lines
            .iter()
            .find(|l| (l.from == from && l.to == to) || (l.from == to && l.to == from))
            .ok_or(Error::UnknownLine { from, to })
    }

    /// Sum of all injections, including the reference bus.
    pub fn injection_mismatch(&self) -> f64 {
        self.buses.iter().map(|b| b.injection).sum()
    }

    /// Copy of the network with `delta` p.u. added to the injection of `bus`.
    pub fn with_injection_step(&self, bus: usize, delta: f64) -> Result<NetworkModel> {
        let mut out = self.clone();
        let i = out.position(bus)?;
        out.buses[i].injection += delta;
        Ok(out)
    }

    /// Copy of the network with every susceptance replaced, in line order.
    pub fn with_susceptances(&self, b: &[f64]) -> Result<NetworkModel> {
        if b.len() != self.lines.len() {
            return Err(Error::Dimension(format!(
                "{} susceptances for {} lines",
                b.len(),
                self.lines.len()
            )));
        }
        let lines = self
            .lines
            .iter()
            .zip(b)
            .map(|(l, &b)| Line { b, ..*l })
            .collect();
        NetworkModel::new(self.buses.clone(), lines, self.reference_bus, self.base_mva)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> NetworkModel {
        NetworkModel::new(
            vec![
                Bus::new(1, BusKind::Storage, None, 1.0, 0.0),
                Bus::new(2, BusKind::Reference, None, 0.0, 0.0),
            ],
            vec![Line { from: 1, to: 2, b: 1.0 }],
            2,
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn slots_follow_bus_order() {
        let net = two_bus();
        assert_eq!(net.angle_buses(), &[1]);
        assert_eq!(net.omega_buses(), &[1]);
        assert_eq!(net.storage_buses(), &[1]);
        assert_eq!(net.state_len(), 2);
        assert_eq!(net.angle_slot(2).unwrap(), None);
    }

    #[test]
    fn rejects_structural_errors() {
        let ref_bus = Bus::new(2, BusKind::Reference, None, 0.0, 0.0);
        let gen = Bus::new(1, BusKind::Generator, Some(5.0), 1.0, 0.0);
        let line = Line { from: 1, to: 2, b: 1.0 };

        let no_ref = NetworkModel::new(vec![gen.clone()], vec![], 1, 100.0);
        assert!(matches!(no_ref, Err(Error::InvalidNetwork(_))));

        let dangling = NetworkModel::new(
            vec![gen.clone(), ref_bus.clone()],
            vec![Line { from: 1, to: 7, b: 1.0 }],
            2,
            100.0,
        );
        assert!(matches!(dangling, Err(Error::UnknownBus(7))));

        let self_loop = NetworkModel::new(
            vec![gen.clone(), ref_bus.clone()],
            vec![line, Line { from: 1, to: 1, b: 1.0 }],
            2,
            100.0,
        );
        assert!(self_loop.is_err());

        let parallel = NetworkModel::new(
            vec![gen.clone(), ref_bus.clone()],
            vec![line, Line { from: 2, to: 1, b: 2.0 }],
            2,
            100.0,
        );
        assert!(parallel.is_err());

        let islanded = NetworkModel::new(
            vec![gen.clone(), ref_bus.clone(), Bus::new(3, BusKind::Load, None, 1.0, 0.0)],
            vec![line],
            2,
            100.0,
        );
        assert!(islanded.is_err());

        let massless = NetworkModel::new(
            vec![Bus::new(1, BusKind::Generator, None, 1.0, 0.0), ref_bus.clone()],
            vec![line],
            2,
            100.0,
        );
        assert!(matches!(massless, Err(Error::NonPositiveParameter { bus: 1, .. })));

        let undamped_load = NetworkModel::new(
            vec![Bus::new(1, BusKind::Load, None, 0.0, 0.0), ref_bus],
            vec![line],
            2,
            100.0,
        );
        assert!(matches!(undamped_load, Err(Error::NonPositiveParameter { what: "damping", .. })));
    }

    #[test]
    fn json_round_trip_keeps_field_names() {
        let net = two_bus();
        let text = serde_json::to_string(&net).unwrap();
        assert!(text.contains("\"P0\"") && text.contains("\"reference_bus\""));
        let back: NetworkModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn injection_step_only_touches_one_bus() {
        let net = two_bus().with_injection_step(1, 0.3).unwrap();
        assert_eq!(net.bus(1).unwrap().injection, 0.3);
        assert_eq!(net.bus(2).unwrap().injection, 0.0);
        assert!(matches!(net.with_injection_step(9, 1.0), Err(Error::UnknownBus(9))));
    }
}
