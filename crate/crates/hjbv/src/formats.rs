//! CSV formats for fields and path dumps.
//!
//! Floats are written in their shortest round-trip form, so a field written
//! and loaded again has bit-identical values.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use hjbv_core::hjb::{Grid1D, SpaceTimeField};
use hjbv_core::sde::{PathBatch, PathEnd};
use hjbv_core::Provenance;

use crate::config::num;
use crate::error::{Error, Result};

/// Writes `t,x,v,dvdx`, row-major by time level then node. Values are
/// multiplied by `sign` (pass the problem's report sign to get the original
/// sign of a maximization problem).
pub fn write_field_csv(path: &Path, field: &SpaceTimeField, sign: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x", "v", "dvdx"])?;
    let g = *field.grid();
    for j in 0..=g.nt {
        let t = num(field.time(j));
        let values = field.row(j);
        let grads = field.gradient_row(j);
        for i in 0..g.nx {
            w.write_record([
                &t,
                &num(g.x(i)),
                &num(sign * values[i]),
                &num(sign * grads[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a field written by [`write_field_csv`]. The grid is recovered from
/// the node layout; `sign` must match the one used when writing.
pub fn load_field_csv(path: &Path, sign: f64) -> Result<SpaceTimeField> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "x", "v", "dvdx"] {
        return Err(Error::Format(format!(
            "{}: expected header t,x,v,dvdx",
            path.display()
        )));
    }
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut row = [0.0; 4];
        for (k, slot) in row.iter_mut().enumerate() {
            let cell = rec.get(k).unwrap_or("");
            *slot = cell.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{}: row {}: `{cell}` is not a number",
                    path.display(),
                    idx + 2
                ))
            })?;
        }
        rows.push(row);
    }
    if rows.len() < 4 {
        return Err(Error::Format(format!(
            "{}: too few rows for a field",
            path.display()
        )));
    }
    let nx = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
    if nx < 2 || !rows.len().is_multiple_of(nx) {
        return Err(Error::Format(format!(
            "{}: {} rows do not form time levels of {nx} nodes",
            path.display(),
            rows.len()
        )));
    }
    let nt = rows.len() / nx - 1;
    let grid = Grid1D::new(rows[0][1], rows[nx - 1][1], nx, nt)?;
    let horizon = rows[rows.len() - 1][0];
    let values: Vec<f64> = rows.iter().map(|r| sign * r[2]).collect();
    let field = SpaceTimeField::from_values(grid, horizon, values, Provenance::Loaded)?;
    let scale = rows.iter().fold(1.0f64, |m, r| m.max(r[3].abs()));
    for (k, row) in rows.iter().enumerate() {
        let (j, i) = (k / nx, k % nx);
        let (t, x) = (field.time(j), grid.x(i));
        if (row[0] - t).abs() > 1e-12 * (1.0 + horizon)
            || (row[1] - x).abs() > 1e-12 * (1.0 + x.abs())
        {
            return Err(Error::Format(format!(
                "{}: row {} is off the uniform grid (t={}, x={})",
                path.display(),
                k + 2,
                row[0],
                row[1]
            )));
        }
        if (sign * row[3] - field.gradient_row(j)[i]).abs() > 1e-9 * scale {
            return Err(Error::Format(format!(
                "{}: row {}: dvdx does not match the differences of v",
                path.display(),
                k + 2
            )));
        }
    }
    Ok(field)
}

/// Writes `path,step,t,x1..xn,z1..zk,exited` for the first paths of a batch,
/// one row per retained step (every `stride`-th step plus the last state).
/// The last row of a path has empty control cells; `exited` is 1 on the exit
/// row of a path that left the domain, which holds the exit time and the exit
/// point on the boundary.
pub fn write_paths_csv(path: &Path, batch: &PathBatch, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header = String::from("path,step,t");
    for i in 1..=batch.state_dim {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=batch.control_dim {
        header.push_str(&format!(",z{i}"));
    }
    header.push_str(",exited\n");
    out.write_all(header.as_bytes())?;
    for p in 0..batch.n_paths() {
        let len = batch.len(p);
        let exit = batch.exit(p);
        for i in (0..len).filter(|i| i % stride == 0 || *i + 1 == len) {
            let last = i + 1 == len;
            let t = match exit {
                Some(e) if last => e.time,
                _ => batch.time(i),
            };
            let mut line = format!("{p},{i},{}", num(t));
            let state = match exit {
                Some(e) if last => e.state.as_slice(),
                _ => batch.state(p, i),
            };
            for x in state {
                line.push(',');
                line.push_str(&num(*x));
            }
            let has_control = i < batch.paths[p].controls.len() / batch.control_dim.max(1);
            for k in 0..batch.control_dim {
                line.push(',');
                if has_control {
                    line.push_str(&num(batch.control(p, i)[k]));
                }
            }
            let exited = last && matches!(batch.paths[p].end, PathEnd::Exited(_));
            line.push_str(if exited { ",1\n" } else { ",0\n" });
            out.write_all(line.as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}
