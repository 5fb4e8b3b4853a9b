//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs the shipped scenarios end to end and the property suites on fixed
//! seeds. Always exits 0; the verdicts are the output.

mod common;

use std::path::Path;
use std::time::Instant;

use common::{
    dp_vs_enumeration, equilibrium_invariants, penalty_fuzz, quadratic_gradient_error, scenario_dir,
};
use inertia_core::limits::{stage_cost, stage_penalty, PenaltyForm};
use inertia_core::scenario::{load_scenario, run, RunOptions, RunReport, SolverKind};
use inertia_core::trajectory::{CsvTable, Trajectory};
use inertia_core::trajopt::{evaluate, ControlSchedule, OptimizerConfig};

struct Run {
    report: RunReport,
    csv: CsvTable,
    seconds: f64,
}

fn solve(name: &str, solver: Option<SolverKind>, out: &Path) -> Run {
    let sc = load_scenario(&scenario_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let tag = solver.map_or("default", |s| s.as_str());
    let dir = out.join(format!("{}-{tag}", name.trim_end_matches(".json")));
    let start = Instant::now();
    let opts = RunOptions {
        solver,
        ..RunOptions::default()
    };
    let report = run(&sc, &dir, &opts).unwrap_or_else(|e| panic!("{name}: {e}"));
    let seconds = start.elapsed().as_secs_f64();
    let csv = CsvTable::read(&dir.join("trajectory.csv")).unwrap();
    Run { report, csv, seconds }
}

fn verdict(n: usize, ok: bool, detail: String) -> bool {
    println!("{} criterion {n}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn criterion_1(out: &Path) -> bool {
    let basic = solve("twobus.json", Some(SolverKind::DpBasic), out);
    let ls = solve("twobus.json", Some(SolverKind::DpLevelset), out);
    let (jb, jl) = (basic.report.breakdown.total, ls.report.breakdown.total);
    let secs = basic.seconds.max(ls.seconds);
    let ok = within(jb, 2.70, 2.81) && within(jl, 2.69, 2.80) && jl <= jb && secs <= 600.0;
    verdict(
        1,
        ok,
        format!("basic total {jb:.4} in [2.70,2.81], level-set total {jl:.4} in [2.69,2.80], level-set <= basic, slowest {secs:.1} s"),
    )
}

fn criterion_2(out: &Path) -> bool {
    let mut ok = true;
    let mut parts = Vec::new();
    for solver in [SolverKind::DpBasic, SolverKind::DpLevelset] {
        let r = solve("twobus_constant.json", Some(solver), out);
        let m = r.csv.column("M_e_1").unwrap();
        let pinned = m.iter().all(|v| *v == 4.0);
        let integral = r.report.metrics.freq_abs_integral;
        ok &= pinned && within(integral, 1.25, 1.31);
        parts.push(format!(
            "{}: inertia {} 4 s, integral {integral:.4}",
            solver.as_str(),
            if pinned { "always" } else { "not always" }
        ));
    }
    verdict(2, ok, format!("{} (band [1.25,1.31])", parts.join("; ")))
}

fn criterion_3(out: &Path) -> bool {
    let base = solve("twobus_constant.json", None, out);
    let first = base.report.metrics.storage_power_first[&1];
    let peak = base.report.metrics.storage_power_peak[&1];
    let ok_base = (first + 0.3).abs() <= 1e-12 && within(peak.value, 0.17, 0.21) && (peak.time - 7.0).abs() <= 1.0 + 1e-9;

    let capped = solve("twobus_power_cap.json", None, out);
    let cap_peak = capped.report.metrics.storage_power_peak[&1];
    let ok_cap = cap_peak.value <= 0.15 + 1e-6 && within(cap_peak.value, 0.11, 0.15);
    verdict(
        3,
        ok_base && ok_cap,
        format!(
            "unconstrained P_r first {first:.6}, max {:.4} at {} s; capped max {:.4} at {} s",
            peak.value, peak.time, cap_peak.value, cap_peak.time
        ),
    )
}

fn criterion_4(out: &Path) -> bool {
    let r = solve("twobus.json", None, out);
    let t = r.csv.column("t").unwrap();
    let m = r.csv.column("M_e_1").unwrap();
    let w = r.csv.column("omega_1").unwrap();
    let n = m.len();
    // stages whose whole interval lies in [0, 5] s
    let early: Vec<usize> = (0..n).filter(|k| t[k + 1] <= 5.0 + 1e-9).collect();
    let saturated = early.iter().all(|k| m[*k] == 10.0);
    let first_off = early.iter().find(|k| m[**k] != 10.0).map(|k| t[*k]);
    let crossings: Vec<usize> = (0..n).filter(|k| w[*k] * w[k + 1] < 0.0).collect();
    let interior: Vec<String> = crossings
        .iter()
        .filter(|k| m[**k] != 4.0 && m[**k] != 10.0)
        .map(|k| format!("{} s -> {}", t[*k], m[*k]))
        .collect();
    let terminal = w[n];
    let ok = saturated && interior.is_empty() && within(terminal, -0.02, 0.02);
    verdict(
        4,
        ok,
        format!(
            "M=10 on all stages in [0,5] s: {saturated}{}; boundary control at {} zero crossings, interior at [{}]; terminal omega {terminal:.5}",
            first_off.map_or(String::new(), |t| format!(" (first other value at {t} s)")),
            crossings.len() - interior.len(),
            interior.join(", ")
        ),
    )
}

fn criterion_5(base: &Run) -> bool {
    let m = &base.report.metrics;
    let integral = m.freq_abs_integral;
    let (peak, at) = (m.power_peak_value.unwrap(), m.power_peak_time.unwrap());
    let ok = (integral / 1.8157 - 1.0).abs() <= 0.10 && (peak / 1.7959 - 1.0).abs() <= 0.03 && (at - 9.0).abs() <= 1.0;
    verdict(
        5,
        ok,
        format!("integral {integral:.4} (1.8157 +/-10%), line 4-8 peak {peak:.4} at {at} s (1.7959 +/-3%, 9+/-1 s)"),
    )
}

fn criterion_6(out: &Path, base: &Run) -> bool {
    let r = solve("twelvebus_freq.json", None, out);
    let (b, o) = (base.report.metrics.freq_abs_integral, r.report.metrics.freq_abs_integral);
    let band = (o / 1.4975 - 1.0).abs() <= 0.15;
    verdict(
        6,
        o < b,
        format!(
            "optimised integral {o:.4} < base {b:.4}; soft band 1.4975 +/-15% {} ({:.1} s)",
            if band { "met" } else { "missed" },
            r.seconds
        ),
    )
}

fn criterion_7(out: &Path) -> bool {
    let base = solve("twelvebus_flow.json", Some(SolverKind::SimulateOnly), out);
    let r = solve("twelvebus_flow.json", None, out);
    let bp = base.report.metrics.power_peak_value.unwrap();
    let op = r.report.metrics.power_peak_value.unwrap();
    let means = &r.report.metrics.inertia_mean;
    let low = means.values().all(|m| *m <= 0.5);
    let band = (op / 1.7853 - 1.0).abs() <= 0.03;
    let list: Vec<String> = means.iter().map(|(id, m)| format!("{id}: {m:.2}")).collect();
    let finals: Vec<String> = r.report.metrics.inertia_final.iter().map(|(id, m)| format!("{id}: {m:.2}")).collect();
    verdict(
        7,
        op <= bp && low,
        format!(
            "optimised peak {op:.4} <= base {bp:.4}: {}; mean inertia [{}] (need <= 0.5 s), final [{}]; soft band 1.7853 +/-3% {} ({:.1} s)",
            op <= bp,
            list.join(", "),
            finals.join(", "),
            if band { "met" } else { "missed" },
            r.seconds
        ),
    )
}

fn consistency_gap() -> f64 {
    let sc = load_scenario(&scenario_dir().join("twelvebus.json")).unwrap();
    let mut p = sc.problem().unwrap();
    p.weights.c = vec![0.5; p.weights.c.len()];
    p.weights.a = vec![1.0; p.n_storage()];
    p.weights.m_desired = vec![6.0; p.n_storage()];
    let values: Vec<Vec<f64>> = (0..p.stages).map(|k| vec![4.0 + (k % 7) as f64; p.n_storage()]).collect();
    let s = ControlSchedule::new(values, p.control_bounds.clone()).unwrap();
    let (total, t): (f64, Trajectory) = evaluate(&p, &s, &OptimizerConfig::default()).unwrap();
    let mut sum = p.final_terms(t.states.last().unwrap());
    for k in 0..p.stages {
        sum += stage_cost(&p.net, &t.states[k], &s.values[k], &p.weights, p.ts);
        sum += p.ts * stage_penalty(&p.net, &t.states[k], &t.storage_power[k], &p.freq, &p.storage, &p.weights, PenaltyForm::Hinge);
    }
    (sum - total).abs()
}

fn determinism_holds(out: &Path) -> bool {
    let a = solve("twobus_power_cap.json", None, &out.join("det-a"));
    let b = solve("twobus_power_cap.json", None, &out.join("det-b"));
    a.csv.rows.iter().flatten().map(|v| v.map(f64::to_bits)).eq(b.csv.rows.iter().flatten().map(|v| v.map(f64::to_bits)))
        && a.report.breakdown.total.to_bits() == b.report.breakdown.total.to_bits()
}

fn criterion_8(out: &Path) -> bool {
    let dp_bad = (0..200u64)
        .filter(|s| {
            let (j0, total, oracle) = dp_vs_enumeration(*s);
            j0 != oracle || total != oracle
        })
        .count();
    let eq_worst = (0..100u64).map(equilibrium_invariants).fold(0.0, f64::max);
    let pen_bad = (0..200u64).filter(|s| penalty_fuzz(*s).is_err()).count();
    let gap = consistency_gap();
    let grad = (0..5u64).map(|s| quadratic_gradient_error(1e-3, s)).fold(0.0, f64::max);
    let det = determinism_holds(out);
    let ok = dp_bad == 0 && eq_worst < 1e-9 && pen_bad == 0 && gap <= 1e-10 && grad < 1e-8 && det;
    verdict(
        8,
        ok,
        format!(
            "DP vs enumeration {}/200 equal; equilibrium worst invariant {eq_worst:.1e} over 100 networks; penalty fuzz {}/200; evaluate vs stage_cost gap {gap:.1e}; quadratic gradient error {grad:.1e}; reruns bit-identical: {det}",
            200 - dp_bad,
            200 - pen_bad
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let out = tmp.path();
    let base = solve("twelvebus.json", None, out);
    let results = [
        criterion_1(out),
        criterion_2(out),
        criterion_3(out),
        criterion_4(out),
        criterion_5(&base),
        criterion_6(out, &base),
        criterion_7(out),
        criterion_8(out),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
}
