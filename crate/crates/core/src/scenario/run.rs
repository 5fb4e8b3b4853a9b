use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Scenario, SolverKind};
use crate::dp::{self, DpVariant};
use crate::error::{Error, Result};
use crate::limits::PenaltyForm;
use crate::metrics::{freq_abs_integral, power_peak, series_peak, PowerPeak};
use crate::problem::ControlProblem;
use crate::trajectory::{write_text, CostBreakdown, Trajectory};
use crate::trajopt::{evaluate, optimize, write_history, ControlSchedule};

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Integration substeps per sample for simulation and optimisation rollouts.
    pub substeps: Option<usize>,
    /// Run this solver instead of the scenario's.
    pub solver: Option<SolverKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    /// Unit-weight sum of |omega| over all frequency states and stages, times the step.
    pub freq_abs_integral: f64,
    pub power_peak_value: Option<f64>,
    pub power_peak_time: Option<f64>,
    pub power_peak_line: Option<[usize; 2]>,
    pub energy_final: BTreeMap<usize, f64>,
    pub storage_power_first: BTreeMap<usize, f64>,
    pub storage_power_peak: BTreeMap<usize, PowerPeak>,
    pub terminal_omega: BTreeMap<usize, f64>,
    pub inertia_mean: BTreeMap<usize, f64>,
    pub inertia_final: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSummary {
    pub variant: DpVariant,
    pub j0: f64,
    pub stages: usize,
    pub grid_points: usize,
    pub controls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub start_objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub solver: SolverKind,
    pub scenario_hash: String,
    pub case_hash: String,
    pub seed: u64,
    pub metrics: ReportMetrics,
    pub breakdown: CostBreakdown,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSummary>,
    pub files: Vec<String>,
}

impl RunReport {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::scenario(path.display().to_string(), e.to_string()))
    }
}

struct Solved {
    trajectory: Trajectory,
    dp: Option<DpSummary>,
    optimizer: Option<OptimizerSummary>,
    history: Option<Vec<crate::trajopt::HistoryEntry>>,
    tables: Option<dp::ValueTable>,
}

fn solve(sc: &Scenario, problem: &ControlProblem, solver: SolverKind, opts: &RunOptions) -> Result<Solved> {
    let substeps = opts.substeps.unwrap_or(sc.simulation.substeps);
    match solver {
        SolverKind::SimulateOnly => {
            let m = sc.simulation_inertia()?;
            let schedule = vec![m; problem.stages];
            let trajectory = problem.simulate(&schedule, sc.simulation.method, substeps, PenaltyForm::Hinge)?;
            Ok(Solved {
                trajectory,
                dp: None,
                optimizer: None,
                history: None,
                tables: None,
            })
        }
        SolverKind::DpBasic | SolverKind::DpLevelset => {
            let spec = sc
                .dp
                .as_ref()
                .ok_or_else(|| Error::scenario("dp", "required for DP solvers"))?;
            let mut scenario = sc.clone();
            scenario.solver = solver;
            let cfg = scenario.dp_config(problem, spec)?;
            let sol = dp::solve(problem, &cfg)?;
            let summary = DpSummary {
                variant: cfg.variant,
                j0: sol.j0,
                stages: problem.stages,
                grid_points: sol.values.grid.len(),
                controls: cfg.control_list().len(),
            };
            Ok(Solved {
                trajectory: sol.trajectory,
                dp: Some(summary),
                optimizer: None,
                history: None,
                tables: spec.export_tables.then_some(sol.values),
            })
        }
        SolverKind::TrajOpt => {
            let mut cfg = sc.optimizer.clone();
            if let Some(s) = opts.seed {
                cfg.seed = s;
            }
            if let Some(n) = opts.substeps {
                cfg.substeps = n;
            }
            let initial = ControlSchedule::constant(problem, &sc.simulation_inertia()?)?;
            let res = optimize(problem, &initial, &cfg)?;
            let (_, trajectory) = evaluate(problem, &res.best, &cfg)?;
            let summary = OptimizerSummary {
                initial_objective: res.initial_objective,
                final_objective: res.objective,
                iterations: res.history.last().map_or(0, |h| h.iteration),
                start_objectives: res.start_objectives.clone(),
            };
            Ok(Solved {
                trajectory,
                dp: None,
                optimizer: Some(summary),
                history: Some(res.history),
                tables: None,
            })
        }
    }
}

/// Metrics of a trajectory as they appear in a report.
pub(crate) fn report_metrics(sc: &Scenario, problem: &ControlProblem, t: &Trajectory) -> Result<ReportMetrics> {
    let net = &problem.net;
    let unit = vec![1.0; net.omega_buses().len()];
    let freq = freq_abs_integral(net, t, &unit)?;
    let peak_line = sc.report.peak_line.or(sc.weights.flow.as_ref().map(|f| [f.from, f.to]));
    let peak = match peak_line {
        Some([a, b]) => Some(power_peak(net, t, a, b)?),
        None => None,
    };
    let na = net.angle_buses().len();
    let xn = t.final_state()?;
    let mut m = ReportMetrics {
        freq_abs_integral: freq,
        power_peak_value: peak.map(|p| p.value),
        power_peak_time: peak.map(|p| p.time),
        power_peak_line: peak_line,
        energy_final: BTreeMap::new(),
        storage_power_first: BTreeMap::new(),
        storage_power_peak: BTreeMap::new(),
        terminal_omega: BTreeMap::new(),
        inertia_mean: BTreeMap::new(),
        inertia_final: BTreeMap::new(),
    };
    for (i, id) in net.omega_buses().iter().enumerate() {
        m.terminal_omega.insert(*id, xn[na + i]);
    }
    for (s, id) in net.storage_buses().iter().enumerate() {
        let p: Vec<f64> = t.storage_power.iter().map(|v| v[s]).collect();
        m.storage_power_first.insert(*id, p[0]);
        // power over a stage is stamped at the stage's end sample
        if let Some(pk) = series_peak(&p, &t.times[1..]) {
            m.storage_power_peak.insert(*id, pk);
        }
        m.energy_final.insert(*id, t.energy.last().map_or(0.0, |e| e[s]));
        let u: Vec<f64> = t.controls.iter().map(|v| v[s]).collect();
        m.inertia_mean.insert(*id, u.iter().sum::<f64>() / u.len() as f64);
        m.inertia_final.insert(*id, *u.last().expect("at least one stage"));
    }
    Ok(m)
}

/// Removes the listed files unless disarmed.
struct Cleanup(Vec<PathBuf>);

impl Drop for Cleanup {
    fn drop(&mut self) {
        for p in &self.0 {
            if p.is_dir() {
                let _ = std::fs::remove_dir_all(p);
            } else {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Solve a scenario and write `trajectory.csv`, `report.json` and solver artifacts into `out_dir`.
pub fn run(sc: &Scenario, out_dir: &Path, opts: &RunOptions) -> Result<RunReport> {
    let setup = Instant::now();
    let solver = opts.solver.unwrap_or(sc.solver);
    let problem = sc.problem()?;
    let setup_seconds = setup.elapsed().as_secs_f64();
    let start = Instant::now();
    let solved = solve(sc, &problem, solver, opts)?;
    let solve_seconds = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(out_dir)?;
    let mut guard = Cleanup(Vec::new());
    let mut files = Vec::new();
    let mut emit = |name: &str, guard: &mut Cleanup| {
        let p = out_dir.join(name);
        guard.0.push(p.clone());
        files.push(name.to_string());
        p
    };
    let traj_path = emit("trajectory.csv", &mut guard);
    solved.trajectory.write_csv(&problem.net, &sc.exported_flows(), &traj_path)?;
    if let Some(h) = &solved.history {
        let p = emit("history.csv", &mut guard);
        write_history(h, &p)?;
    }
    if let Some(tables) = &solved.tables {
        let p = emit("dp_tables", &mut guard);
        dp::export_tables(tables, &p)?;
    }
    let report_path = emit("report.json", &mut guard);
    let report = RunReport {
        scenario: sc.name.clone(),
        solver,
        scenario_hash: sc.scenario_hash(),
        case_hash: sc.case_hash(),
        seed: opts.seed.unwrap_or(sc.optimizer.seed),
        metrics: report_metrics(sc, &problem, &solved.trajectory)?,
        breakdown: solved.trajectory.breakdown,
        timings: Timings {
            setup_seconds,
            solve_seconds,
        },
        dp: solved.dp,
        optimizer: solved.optimizer,
        files,
    };
    write_text(&report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    guard.0.clear();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `b - a`
    pub delta: f64,
    /// `"a"`, `"b"`, `"tie"`, or `"n/a"` for metrics without a preferred direction.
    pub better: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub case_hash: String,
    pub metrics: Vec<MetricDelta>,
}

fn row(metric: impl Into<String>, a: f64, b: f64, lower_is_better: bool) -> MetricDelta {
    let better = if !lower_is_better {
        "n/a"
    } else if a < b {
        "a"
    } else if b < a {
        "b"
    } else {
        "tie"
    };
    MetricDelta {
        metric: metric.into(),
        a,
        b,
        delta: b - a,
        better: better.into(),
    }
}

/// Side-by-side metrics of two runs of the same physical case.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    if a.case_hash != b.case_hash {
        return Err(Error::Incompatible(format!(
            "case hashes differ ({} vs {})",
            &a.case_hash[..12.min(a.case_hash.len())],
            &b.case_hash[..12.min(b.case_hash.len())]
        )));
    }
    let mut rows = vec![
        row("freq_abs_integral", a.metrics.freq_abs_integral, b.metrics.freq_abs_integral, true),
        row("objective_total", a.breakdown.total, b.breakdown.total, true),
        row("stage_integral", a.breakdown.stage_integral, b.breakdown.stage_integral, true),
        row("constraint_penalty", a.breakdown.constraint_penalty, b.breakdown.constraint_penalty, true),
    ];
    if let (Some(pa), Some(pb)) = (a.metrics.power_peak_value, b.metrics.power_peak_value) {
        rows.push(row("power_peak_value", pa, pb, true));
    }
    for (id, ea) in &a.metrics.energy_final {
        if let Some(eb) = b.metrics.energy_final.get(id) {
            rows.push(row(format!("energy_final.{id}"), *ea, *eb, false));
        }
    }
    for (id, pa) in &a.metrics.storage_power_peak {
        if let Some(pb) = b.metrics.storage_power_peak.get(id) {
            rows.push(row(format!("storage_power_peak.{id}"), pa.value, pb.value, true));
        }
    }
    let label = |r: &RunReport| format!("{} ({})", r.scenario, r.solver.as_str());
    Ok(Comparison {
        a: label(a),
        b: label(b),
        case_hash: a.case_hash.clone(),
        metrics: rows,
    })
}
