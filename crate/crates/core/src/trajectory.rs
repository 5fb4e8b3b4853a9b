use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub stage_integral: f64,
    pub terminal_penalty: f64,
    pub constraint_penalty: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(stage_integral: f64, terminal_penalty: f64, constraint_penalty: f64) -> Self {
        CostBreakdown {
            stage_integral,
            terminal_penalty,
            constraint_penalty,
            total: stage_integral + terminal_penalty + constraint_penalty,
        }
    }
}

/// Sampled rollout: `N + 1` states and `N` per-stage quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// Flat states (angles then frequencies).
    pub states: Vec<Vec<f64>>,
    /// Inertia per storage slot for each stage.
    pub controls: Vec<Vec<f64>>,
    /// Storage terminal power per storage slot for each stage.
    pub storage_power: Vec<Vec<f64>>,
    /// Cumulative energy change per storage slot after each stage.
    pub energy: Vec<Vec<f64>>,
    pub breakdown: CostBreakdown,
}

impl Trajectory {
    pub fn stages(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> Result<&[f64]> {
        self.states.last().map(|v| v.as_slice()).ok_or(Error::EmptyTrajectory)
    }

    /// Frequency series of one frequency slot over all samples.
    pub fn omega_series(&self, net: &NetworkModel, slot: usize) -> Vec<f64> {
        let na = net.angle_buses().len();
        self.states.iter().map(|x| x[na + slot]).collect()
    }

    /// Write a CSV with one row per sample. Per-stage columns are left empty on the last row.
    pub fn write_csv(&self, net: &NetworkModel, flows: &[(usize, usize)], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(net.angle_buses().iter().map(|id| format!("delta_{id}")));
        header.extend(net.omega_buses().iter().map(|id| format!("omega_{id}")));
        header.extend(net.storage_buses().iter().map(|id| format!("M_e_{id}")));
        header.extend(net.storage_buses().iter().map(|id| format!("P_r_{id}")));
        header.extend(net.storage_buses().iter().map(|id| format!("E_{id}")));
        header.extend(flows.iter().map(|(a, b)| format!("flow_{a}_{b}")));
        w.write_record(&header)?;
        for (k, x) in self.states.iter().enumerate() {
            let mut row = vec![fmt(self.times[k])];
            row.extend(x.iter().map(|v| fmt(*v)));
            for series in [&self.controls, &self.storage_power, &self.energy] {
                match series.get(k) {
                    Some(v) => row.extend(v.iter().map(|v| fmt(*v))),
                    None => row.extend(std::iter::repeat(String::new()).take(net.storage_buses().len())),
                }
            }
            for (a, b) in flows {
                row.push(fmt(crate::dynamics::flow_between(net, x, *a, *b)?));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal text that parses back to the same double.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Columns of a trajectory CSV, keyed by header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        s.parse::<f64>()
                            .map(Some)
                            .map_err(|e| Error::scenario(path.display().to_string(), e.to_string()))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }

    /// Non-empty values of the named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().filter_map(|r| r[i]).collect())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakdown_sums_components() {
        let b = CostBreakdown::new(0.75, 2.0, 0.0);
        assert_eq!(b.total, 2.75);
        assert_eq!(CostBreakdown::default().total, 0.0);
    }

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 1.7959] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }
}
