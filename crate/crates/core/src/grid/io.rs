//! CSV (`x,value`) serialization with a JSON header sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Grid1D, GridFunction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub dx: f64,
}

impl From<&Grid1D> for GridHeader {
    fn from(g: &Grid1D) -> Self {
        GridHeader {
            x_min: g.x_min,
            x_max: g.x_max,
            n: g.n,
            dx: g.dx(),
        }
    }
}

/// `field.csv` -> `field.csv.json`.
pub fn header_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_csv<W: std::io::Write>(f: &GridFunction, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    for (j, v) in f.values.iter().enumerate() {
        w.write_record([format!("{:.17e}", f.grid.x(j)), format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the CSV and its header sidecar.
pub fn save(f: &GridFunction, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(f, std::io::BufWriter::new(file))?;
    let header = GridHeader::from(&f.grid);
    std::fs::write(header_path(path), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Reads a field; the grid comes from the sidecar if present, otherwise it is
/// inferred from the `x` column.
pub fn load(path: &Path) -> Result<GridFunction> {
    let mut r = csv::Reader::from_path(path)?;
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::config(format!("row {row}"), format!("missing column {name}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::config(format!("row {row}.{name}"), e.to_string()))
        };
        xs.push(parse(0, "x")?);
        vals.push(parse(1, "value")?);
    }
    let hp = header_path(path);
    let grid = if hp.exists() {
        let h: GridHeader = serde_json::from_str(&std::fs::read_to_string(hp)?)?;
        Grid1D::new(h.x_min, h.x_max, h.n)?
    } else {
        if xs.len() < 2 {
            return Err(Error::config("x", "need at least two rows to infer the grid"));
        }
        let dx = xs[1] - xs[0];
        Grid1D::new(xs[0], xs[0] + dx * xs.len() as f64, xs.len())?
    };
    for (j, x) in xs.iter().enumerate() {
        if (x - grid.x(j)).abs() > 1e-9 * grid.length().max(1.0) {
            return Err(Error::GridMismatch(format!("row {j}: x = {x} but grid has {}", grid.x(j))));
        }
    }
    GridFunction::new(grid, vals)
}
