//! Scenario files: schema, loading, validation and compilation into a [`ControlProblem`].

mod run;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dp::{AxisGrid, DpVariant};
use crate::dynamics::Method;
use crate::equilibrium::{solve_equilibrium, NewtonOptions};
use crate::error::{Error, Result};
use crate::limits::{FlowObjective, FrequencyLimits, ObjectiveWeights, StorageLimits};
use crate::network::NetworkModel;
use crate::problem::ControlProblem;
use crate::trajopt::OptimizerConfig;

pub use run::{compare, run, Comparison, DpSummary, MetricDelta, OptimizerSummary, ReportMetrics, RunOptions, RunReport, Timings};

/// A value shared by every bus or given per bus id.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PerBus<T> {
    All(T),
    Each(BTreeMap<usize, T>),
}

// Untagged enums buffer map keys as strings, which breaks integer keys; dispatch by hand instead.
impl<'de, T: serde::de::DeserializeOwned> Deserialize<'de> for PerBus<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = Value::deserialize(d)?;
        if v.is_object() {
            serde_json::from_value(v).map(PerBus::Each).map_err(D::Error::custom)
        } else {
            serde_json::from_value(v).map(PerBus::All).map_err(D::Error::custom)
        }
    }
}

impl<T: Copy> PerBus<T> {
    /// One value per id in `ids`, falling back to `default` for ids missing from a map.
    /// Map keys outside `ids` are rejected.
    fn resolve(&self, ids: &[usize], default: Option<T>, path: &str) -> Result<Vec<T>> {
        match self {
            PerBus::All(v) => Ok(vec![*v; ids.len()]),
            PerBus::Each(map) => {
                if let Some(bad) = map.keys().find(|k| !ids.contains(k)) {
                    return Err(Error::scenario(
                        format!("{path}.{bad}"),
                        format!("bus {bad} is not one of {ids:?}"),
                    ));
                }
                ids.iter()
                    .map(|id| {
                        map.get(id)
                            .copied()
                            .or(default)
                            .ok_or_else(|| Error::scenario(path, format!("missing value for bus {id}")))
                    })
                    .collect()
            }
        }
    }
}

fn resolve_opt<T: Copy>(v: &Option<PerBus<T>>, ids: &[usize], default: T, path: &str) -> Result<Vec<T>> {
    match v {
        Some(p) => p.resolve(ids, Some(default), path),
        None => Ok(vec![default; ids.len()]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "dp-basic")]
    DpBasic,
    #[serde(rename = "dp-levelset")]
    DpLevelset,
    #[serde(rename = "traj-opt")]
    TrajOpt,
    #[serde(rename = "simulate-only")]
    SimulateOnly,
}

impl SolverKind {
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::DpBasic => "dp-basic",
            SolverKind::DpLevelset => "dp-levelset",
            SolverKind::TrajOpt => "traj-opt",
            SolverKind::SimulateOnly => "simulate-only",
        }
    }
}

/// Step change of injection at `bus`, applied at `t0` and held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub bus: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_mw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum InitialState {
    /// `"equilibrium"`: power-flow solution of the undisturbed network.
    Keyword(String),
    Explicit {
        delta: BTreeMap<usize, f64>,
        omega: BTreeMap<usize, f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitState {
    #[serde(default)]
    delta: BTreeMap<usize, f64>,
    #[serde(default)]
    omega: BTreeMap<usize, f64>,
}

impl<'de> Deserialize<'de> for InitialState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match Value::deserialize(d)? {
            Value::String(s) => Ok(InitialState::Keyword(s)),
            v @ Value::Object(_) => {
                let e: ExplicitState = serde_json::from_value(v).map_err(D::Error::custom)?;
                Ok(InitialState::Explicit {
                    delta: e.delta,
                    omega: e.omega,
                })
            }
            _ => Err(D::Error::custom("expected \"equilibrium\" or an object with delta/omega maps")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_desired: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_upper: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_lower: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<PerBus<f64>>,
    #[serde(default = "default_my_inf")]
    pub my_inf: f64,
    #[serde(default)]
    pub final_state_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowObjective>,
}

fn default_my_inf() -> f64 {
    1.0
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec {
            a: None,
            m_desired: None,
            b: None,
            c: None,
            d_upper: None,
            d_lower: None,
            energy: None,
            my_inf: default_my_inf(),
            final_state_cost: 0.0,
            flow: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageLimitsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_lo: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_hi: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_e: Option<PerBus<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<PerBus<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_final: Option<[f64; 2]>,
    #[serde(default)]
    pub storage: StorageLimitsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSpec {
    /// Axis per state component, keyed `delta_<bus>` / `omega_<bus>`.
    pub state_axes: BTreeMap<String, AxisGrid>,
    pub control_points: PerBus<usize>,
    #[serde(default)]
    pub export_tables: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// Constant inertia for simulation and as the optimiser's first start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<PerBus<f64>>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_method() -> Method {
    Method::Rk4
}

fn default_substeps() -> usize {
    5
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            inertia: None,
            method: default_method(),
            substeps: default_substeps(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    /// Extra line flows exported to the trajectory CSV.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flow_lines: Vec<[usize; 2]>,
    /// Line whose flow peak is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_line: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub network: NetworkModel,
    pub disturbance: Disturbance,
    pub horizon: Horizon,
    pub initial_state: InitialState,
    pub control_bounds: PerBus<[f64; 2]>,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default)]
    pub limits: LimitsSpec,
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpSpec>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub report: ReportSpec,
}

/// Replace `P0_mw` by `P0` on every bus using the network's base.
fn normalize_network(mut v: Value, path: &str) -> Result<Value> {
    let base = match v.get("base_mva") {
        None => crate::network::DEFAULT_BASE_MVA,
        Some(b) => b
            .as_f64()
            .ok_or_else(|| Error::scenario(format!("{path}.base_mva"), "expected a number"))?,
    };
    if let Some(buses) = v.get_mut("buses").and_then(Value::as_array_mut) {
        for (i, bus) in buses.iter_mut().enumerate() {
            let Some(obj) = bus.as_object_mut() else { continue };
            if let Some(mw) = obj.remove("P0_mw") {
                if obj.contains_key("P0") {
                    return Err(Error::scenario(
                        format!("{path}.buses[{i}]"),
                        "give either P0 or P0_mw, not both",
                    ));
                }
                let mw = mw
                    .as_f64()
                    .ok_or_else(|| Error::scenario(format!("{path}.buses[{i}].P0_mw"), "expected a number"))?;
                obj.insert("P0".into(), Value::from(mw / base));
            }
        }
    }
    Ok(v)
}

fn parse_json(text: &str, origin: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::scenario(origin, e.to_string()))
}

/// Read, resolve and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let origin = path.display().to_string();
    let mut v = parse_json(&text, &origin)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    if let Some(net) = v.get("network").cloned() {
        let resolved = match net {
            Value::String(rel) => {
                let p = dir.join(&rel);
                let t = std::fs::read_to_string(&p)
                    .map_err(|e| Error::scenario("network", format!("cannot read {}: {e}", p.display())))?;
                parse_json(&t, &p.display().to_string())?
            }
            other => other,
        };
        v["network"] = resolved;
    }
    scenario_from_value(v)
}

/// Parse and validate a scenario whose network is given inline.
pub fn scenario_from_value(mut v: Value) -> Result<Scenario> {
    if let Some(net) = v.get_mut("network") {
        if net.is_string() {
            return Err(Error::scenario("network", "a network path can only be resolved when loading from a file"));
        }
        *net = normalize_network(net.take(), "network")?;
    }
    let sc: Scenario = serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        Error::scenario(path, e.into_inner().to_string())
    })?;
    sc.validate()?;
    Ok(sc)
}

/// Write a scenario with its network inline.
pub fn write_scenario(sc: &Scenario, path: &Path) -> Result<()> {
    crate::trajectory::write_text(path, &(serde_json::to_string_pretty(sc)? + "\n"))
}

fn sha256_hex(v: &Value) -> String {
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

impl Scenario {
    /// Hash of every field that influences a solve.
    pub fn scenario_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("scenario serialises");
        let obj = v.as_object_mut().expect("object");
        for k in ["name", "description", "report"] {
            obj.remove(k);
        }
        sha256_hex(&v)
    }

    /// Hash of the physical case only: network, disturbance, horizon, initial state, bounds and limits.
    pub fn case_hash(&self) -> String {
        let v = serde_json::to_value(self).expect("scenario serialises");
        let keep = ["network", "disturbance", "horizon", "initial_state", "control_bounds", "limits"];
        let obj: serde_json::Map<String, Value> = v
            .as_object()
            .expect("object")
            .iter()
            .filter(|(k, _)| keep.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        sha256_hex(&Value::Object(obj))
    }

    pub fn disturbance_pu(&self) -> Result<f64> {
        match (self.disturbance.delta_p, self.disturbance.delta_mw) {
            (Some(p), None) => Ok(p),
            (None, Some(mw)) => Ok(mw / self.network.base_mva()),
            _ => Err(Error::scenario("disturbance", "give exactly one of delta_p and delta_mw")),
        }
    }

    pub fn stages(&self) -> Result<usize> {
        crate::dp::stage_count(self.horizon.t0, self.horizon.t1, self.horizon.ts)
    }

    pub fn validate(&self) -> Result<()> {
        let net = &self.network;
        if net.bus(self.disturbance.bus).is_err() {
            return Err(Error::scenario(
                "disturbance.bus",
                format!("bus {} does not exist", self.disturbance.bus),
            ));
        }
        self.disturbance_pu()?;
        self.stages()?;
        if net.storage_buses().is_empty() {
            return Err(Error::scenario("network", "at least one storage bus is required"));
        }
        self.control_bounds_vec()?;
        if let InitialState::Keyword(k) = &self.initial_state {
            if k != "equilibrium" {
                return Err(Error::scenario(
                    "initial_state",
                    format!("expected \"equilibrium\" or explicit angles, got {k:?}"),
                ));
            }
        }
        for [a, b] in self.report.flow_lines.iter().chain(&self.report.peak_line) {
            net.find_line(*a, *b)
                .map_err(|e| Error::scenario("report", e.to_string()))?;
        }
        self.optimizer.validate()?;
        if self.simulation.substeps == 0 {
            return Err(Error::scenario("simulation.substeps", "must be at least 1"));
        }
        let needs_inertia = matches!(self.solver, SolverKind::SimulateOnly | SolverKind::TrajOpt);
        if needs_inertia && self.simulation.inertia.is_none() {
            return Err(Error::scenario(
                "simulation.inertia",
                "required for simulate-only and traj-opt runs",
            ));
        }
        if matches!(self.solver, SolverKind::DpBasic | SolverKind::DpLevelset) && self.dp.is_none() {
            return Err(Error::scenario("dp", "required for DP solvers"));
        }
        // build everything once so that errors surface at load time
        let problem = self.problem()?;
        if let Some(dp) = &self.dp {
            if matches!(self.solver, SolverKind::DpBasic | SolverKind::DpLevelset) {
                self.dp_config(&problem, dp)?;
            }
        }
        Ok(())
    }

    fn control_bounds_vec(&self) -> Result<Vec<(f64, f64)>> {
        let v = self
            .control_bounds
            .resolve(self.network.storage_buses(), None, "control_bounds")?;
        Ok(v.into_iter().map(|[lo, hi]| (lo, hi)).collect())
    }

    /// Constant inertia per storage slot from the simulation section.
    pub fn simulation_inertia(&self) -> Result<Vec<f64>> {
        let spec = self
            .simulation
            .inertia
            .as_ref()
            .ok_or_else(|| Error::scenario("simulation.inertia", "not given"))?;
        let m = spec.resolve(self.network.storage_buses(), None, "simulation.inertia")?;
        for ((v, (lo, hi)), id) in m.iter().zip(self.control_bounds_vec()?).zip(self.network.storage_buses()) {
            if !(*v >= lo && *v <= hi) {
                return Err(Error::scenario(
                    format!("simulation.inertia.{id}"),
                    format!("{v} outside [{lo}, {hi}]"),
                ));
            }
        }
        Ok(m)
    }

    fn initial_state(&self) -> Result<Vec<f64>> {
        let net = &self.network;
        match &self.initial_state {
            InitialState::Keyword(_) => Ok(solve_equilibrium(net, &NewtonOptions::default())?.to_flat()),
            InitialState::Explicit { delta, omega } => {
                let na = net.angle_buses().len();
                let mut x = vec![0.0; net.state_len()];
                for (id, v) in delta {
                    let slot = net
                        .angle_slot(*id)
                        .ok()
                        .flatten()
                        .ok_or_else(|| Error::scenario(format!("initial_state.delta.{id}"), "no angle state at this bus"))?;
                    x[slot] = *v;
                }
                for (id, v) in omega {
                    let slot = net
                        .omega_slot(*id)
                        .ok()
                        .flatten()
                        .ok_or_else(|| Error::scenario(format!("initial_state.omega.{id}"), "no frequency state at this bus"))?;
                    x[na + slot] = *v;
                }
                Ok(x)
            }
        }
    }

    /// The disturbed network, initial state, limits and weights as one problem.
    pub fn problem(&self) -> Result<ControlProblem> {
        let net0 = &self.network;
        let x0 = self.initial_state()?;
        let net = net0.with_injection_step(self.disturbance.bus, self.disturbance_pu()?)?;
        let st = net.storage_buses().to_vec();
        let om = net.omega_buses().to_vec();
        let an = net.angle_buses().to_vec();
        let w = &self.weights;
        let weights = ObjectiveWeights {
            a: resolve_opt(&w.a, &st, 0.0, "weights.a")?,
            m_desired: resolve_opt(&w.m_desired, &st, 0.0, "weights.m_desired")?,
            b: resolve_opt(&w.b, &om, 0.0, "weights.b")?,
            c: resolve_opt(&w.c, &an, 0.0, "weights.c")?,
            d_upper: resolve_opt(&w.d_upper, &st, 0.0, "weights.d_upper")?,
            d_lower: resolve_opt(&w.d_lower, &st, 0.0, "weights.d_lower")?,
            energy: resolve_opt(&w.energy, &st, 0.0, "weights.energy")?,
            my_inf: w.my_inf,
            final_state_cost: w.final_state_cost,
            flow: w.flow.clone(),
        };
        let l = &self.limits;
        let (terminal_lo, terminal_hi) = match l.terminal_window {
            Some([lo, hi]) => (lo, hi),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let freq = FrequencyLimits {
            omega_max: resolve_opt(&l.omega_max, &om, f64::INFINITY, "limits.omega_max")?,
            terminal_lo,
            terminal_hi,
            delta_final: l.delta_final.map(|[a, b]| (a, b)),
        };
        let s = &l.storage;
        let storage = StorageLimits {
            p_min: resolve_opt(&s.p_min, &st, f64::NEG_INFINITY, "limits.storage.p_min")?,
            p_max: resolve_opt(&s.p_max, &st, f64::INFINITY, "limits.storage.p_max")?,
            e_lo: resolve_opt(&s.e_lo, &st, f64::NEG_INFINITY, "limits.storage.e_lo")?,
            e_hi: resolve_opt(&s.e_hi, &st, f64::INFINITY, "limits.storage.e_hi")?,
            p_e: resolve_opt(&s.p_e, &st, 0.0, "limits.storage.p_e")?,
        };
        ControlProblem::new(
            net,
            x0,
            self.horizon.t0,
            self.horizon.ts,
            self.stages()?,
            freq,
            storage,
            weights,
            self.control_bounds_vec()?,
        )
    }

    /// DP grids for `problem`, with the variant taken from the solver kind.
    pub fn dp_config(&self, problem: &ControlProblem, dp: &DpSpec) -> Result<crate::dp::DpConfig> {
        let net = &problem.net;
        let mut names: Vec<String> = net.angle_buses().iter().map(|id| format!("delta_{id}")).collect();
        names.extend(net.omega_buses().iter().map(|id| format!("omega_{id}")));
        if let Some(bad) = dp.state_axes.keys().find(|k| !names.contains(k)) {
            return Err(Error::scenario(format!("dp.state_axes.{bad}"), "no such state component"));
        }
        let axes = names
            .iter()
            .map(|n| {
                dp.state_axes
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::scenario(format!("dp.state_axes.{n}"), "missing axis"))
            })
            .collect::<Result<Vec<_>>>()?;
        let counts = dp
            .control_points
            .resolve(net.storage_buses(), None, "dp.control_points")?;
        let variant = match self.solver {
            SolverKind::DpLevelset => DpVariant::Levelset,
            _ => DpVariant::Basic,
        };
        crate::dp::discretize(problem, axes, &counts, variant)
    }

    /// Lines whose flows are exported: configured lines, the peak line and the flow-objective line.
    pub fn exported_flows(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.report.flow_lines.iter().map(|[a, b]| (*a, *b)).collect();
        if let Some([a, b]) = self.report.peak_line {
            out.push((a, b));
        }
        if let Some(f) = &self.weights.flow {
            out.push((f.from, f.to));
        }
        let mut seen = Vec::new();
        out.retain(|l| {
            let fresh = !seen.contains(l);
            seen.push(*l);
            fresh
        });
        out
    }
}
