use std::path::Path;

use serde::Serialize;

use super::grid::AxisGrid;
use super::sweep::{DpVariant, ValueTable};
use crate::error::Result;
use crate::trajectory::write_text;

#[derive(Serialize)]
struct Manifest<'a> {
    layout: &'static str,
    variant: DpVariant,
    axes: &'a [AxisGrid],
    stages: usize,
    value_files: Vec<String>,
    level_files: Vec<String>,
}

/// Dump every stage table as a one-column CSV (row-major, last axis fastest) plus `manifest.json`.
pub fn export_tables(table: &ValueTable, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut value_files = Vec::new();
    let mut level_files = Vec::new();
    for (k, j) in table.j.iter().enumerate() {
        let name = format!("J_{k:04}.csv");
        write_column(&dir.join(&name), "J", j)?;
        value_files.push(name);
    }
    if let Some(levels) = &table.level {
        for (k, l) in levels.iter().enumerate() {
            let name = format!("I_{k:04}.csv");
            write_column(&dir.join(&name), "I", l)?;
            level_files.push(name);
        }
    }
    let manifest = Manifest {
        layout: "row-major, last axis varies fastest",
        variant: table.variant,
        axes: table.grid.axes(),
        stages: table.j.len() - 1,
        value_files,
        level_files,
    };
    write_text(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)
}

fn write_column(path: &Path, name: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([name])?;
    for v in values {
        w.write_record([format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(())
}
