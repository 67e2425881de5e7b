//! Binary and CSV field dumps.
//!
//! Binary layout (all little endian):
//!
//! ```text
//! "CMAF"            4 bytes
//! version           u32
//! n                 u32
//! resolution[2n]    u32 (the axis parameter: points for periodic axes,
//!                   intervals for Dirichlet axes, 1 for frozen axes)
//! (lo, hi)[2n]      f64 pairs: period as (0, L) or the box bounds
//! kind[2n]          u32: 0 periodic, 1 Dirichlet, 2 frozen
//! values            f64, row-major, last real axis fastest
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Axis, AxisKind, Grid, GridError, ScalarField};
use crate::linalg::MAX_N;

pub const CMAF_MAGIC: &[u8; 4] = b"CMAF";
pub const CMAF_VERSION: u32 = 1;

pub fn write_bin_to(field: &ScalarField, w: &mut impl Write) -> Result<(), GridError> {
    let grid = field.grid();
    w.write_all(CMAF_MAGIC)?;
    w.write_all(&CMAF_VERSION.to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    for ax in grid.axes() {
        w.write_all(&(ax.res as u32).to_le_bytes())?;
    }
    for ax in grid.axes() {
        w.write_all(&ax.lo.to_le_bytes())?;
        w.write_all(&ax.hi.to_le_bytes())?;
    }
    for ax in grid.axes() {
        w.write_all(&ax.kind.code().to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_bin(field: &ScalarField, path: impl AsRef<Path>) -> Result<(), GridError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bin_to(field, &mut w)?;
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, GridError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, GridError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_bin_from(r: &mut impl Read) -> Result<ScalarField, GridError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CMAF_MAGIC {
        return Err(GridError::Format("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != CMAF_VERSION {
        return Err(GridError::Format(format!("unsupported version {version}")));
    }
    let n = read_u32(r)? as usize;
    if n == 0 || n > MAX_N {
        return Err(GridError::Format(format!("dimension {n}")));
    }
    let res = (0..2 * n).map(|_| read_u32(r).map(|x| x as usize)).collect::<Result<Vec<_>, _>>()?;
    let bounds = (0..2 * n)
        .map(|_| Ok((read_f64(r)?, read_f64(r)?)))
        .collect::<Result<Vec<_>, GridError>>()?;
    let kinds = (0..2 * n)
        .map(|_| {
            let c = read_u32(r)?;
            AxisKind::from_code(c).ok_or_else(|| GridError::Format(format!("axis kind {c}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let axes = (0..2 * n)
        .map(|a| Axis { kind: kinds[a], lo: bounds[a].0, hi: bounds[a].1, res: res[a] })
        .collect();
    let grid = Arc::new(Grid::new(n, axes)?);
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(read_f64(r)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(GridError::Format("trailing bytes after payload".into()));
    }
    ScalarField::new(grid, values)
}

pub fn read_bin(path: impl AsRef<Path>) -> Result<ScalarField, GridError> {
    read_bin_from(&mut BufReader::new(File::open(path)?))
}

/// One row per point: real coordinates then the value.
pub fn write_csv_to(field: &ScalarField, w: &mut impl Write) -> Result<(), GridError> {
    let grid = field.grid();
    let names: Vec<String> = (0..grid.n())
        .flat_map(|k| [format!("x{}", k + 1), format!("y{}", k + 1)])
        .collect();
    writeln!(w, "{},value", names.join(","))?;
    for (idx, v) in field.values().iter().enumerate() {
        for x in grid.coords(idx) {
            write!(w, "{x:.17e},")?;
        }
        writeln!(w, "{v:.17e}")?;
    }
    Ok(())
}

pub fn write_csv(field: &ScalarField, path: impl AsRef<Path>) -> Result<(), GridError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(field, &mut w)?;
    w.flush()?;
    Ok(())
}
