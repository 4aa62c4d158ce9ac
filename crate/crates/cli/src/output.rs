//! Serialization of results: CSV profiles and curves, JSON documents, and
//! the reverse parsing used by `verify`.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! value parsed back from a file is bit-identical to the one written and
//! identical runs produce byte-identical files.

use std::fs;
use std::path::Path;

use steadypop::error::{Error, Result};
use steadypop::fixedpoint::SolvedProfile;
use steadypop::levelset::LevelCurve;
use steadypop::model::Density2D;
use steadypop::{Grid, GridFn, StructuredModel};

/// Node tolerance when matching CSV coordinates back to a grid.
const NODE_TOL: f64 = 1e-9;

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn curve_csv(curve: &LevelCurve) -> String {
    let mut out = String::from("theta,rho,e1,e2,sigma_residual\n");
    for s in curve.samples() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.theta, s.rho, s.point.e1, s.point.e2, s.sigma_residual
        ));
    }
    out
}

pub fn profile_csv(profile: &SolvedProfile) -> String {
    match profile {
        SolvedProfile::Line(p) => {
            let mut out = String::from("s,value\n");
            let grid = p.grid();
            for (i, v) in p.values().iter().enumerate() {
                out.push_str(&format!("{},{}\n", grid.node(i), v));
            }
            out
        }
        SolvedProfile::Square(d) => {
            let mut out = String::from("l,a,value\n");
            let lgrid = d.lgrid();
            let agrid = d.agrid();
            for i in 0..lgrid.n_nodes() {
                for k in 0..agrid.n_nodes() {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        lgrid.node(i),
                        agrid.node(k),
                        d.value(i, k)
                    ));
                }
            }
            out
        }
    }
}

fn parse_field(field: &str, line_no: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::Config(format!("profile CSV line {line_no}: bad number {field:?}"))
    })
}

/// Rebuilds a profile from its CSV text, keyed to the model's geometry.
pub fn profile_from_csv(text: &str, model: &StructuredModel) -> Result<SolvedProfile> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty profile CSV".into()))?
        .1
        .trim();
    let upper = model.domain_upper();
    match header {
        "s,value" => {
            let mut values = Vec::new();
            let mut coords = Vec::new();
            for (idx, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let (s, v) = line.split_once(',').ok_or_else(|| {
                    Error::Config(format!("profile CSV line {}: expected two fields", idx + 1))
                })?;
                coords.push(parse_field(s, idx + 1)?);
                values.push(parse_field(v, idx + 1)?);
            }
            if values.len() < 2 {
                return Err(Error::Config("profile CSV has no data rows".into()));
            }
            let grid = Grid::new(0.0, upper, values.len() - 1)?;
            for (i, s) in coords.iter().enumerate() {
                if (s - grid.node(i)).abs() > NODE_TOL * (1.0 + upper) {
                    return Err(Error::Config(format!(
                        "profile CSV row {i} coordinate {s} does not match the model grid"
                    )));
                }
            }
            Ok(SolvedProfile::Line(GridFn::new(grid, values)?))
        }
        "l,a,value" => {
            let mut rows: Vec<(f64, f64, f64)> = Vec::new();
            for (idx, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(Error::Config(format!(
                        "profile CSV line {}: expected three fields",
                        idx + 1
                    )));
                }
                rows.push((
                    parse_field(fields[0], idx + 1)?,
                    parse_field(fields[1], idx + 1)?,
                    parse_field(fields[2], idx + 1)?,
                ));
            }
            let count = rows.len();
            let n_nodes = (count as f64).sqrt().round() as usize;
            if n_nodes * n_nodes != count || n_nodes < 2 {
                return Err(Error::Config(format!(
                    "density CSV has {count} rows, which is not a square node count"
                )));
            }
            let grid = Grid::new(0.0, upper, n_nodes - 1)?;
            let mut values = Vec::with_capacity(count);
            for (r, (l, a, v)) in rows.iter().enumerate() {
                let i = r / n_nodes;
                let k = r % n_nodes;
                if (l - grid.node(i)).abs() > NODE_TOL * (1.0 + upper)
                    || (a - grid.node(k)).abs() > NODE_TOL * (1.0 + upper)
                {
                    return Err(Error::Config(format!(
                        "density CSV row {r} coordinates ({l}, {a}) do not match the model grid"
                    )));
                }
                values.push(*v);
            }
            Ok(SolvedProfile::Square(Density2D::new(grid, grid, values)?))
        }
        other => Err(Error::Config(format!(
            "unrecognized profile CSV header {other:?}"
        ))),
    }
}
