//! CSV and binary field files.
//!
//! CSV: a header row with index columns `i` (and `j` in 2D) followed by value
//! columns (`value`, or `value_1`, `value_2` for vectors), then one row per
//! node or cell.
//!
//! Binary, little-endian throughout:
//!
//! ```text
//! bytes 0..4   magic "FKFD"
//! byte  4      kind: 0 = node field, 1 = cell field
//! byte  5      ndim (1 or 2)
//! byte  6      components per entry (1 or 2)
//! byte  7      reserved, 0
//! then ndim × u64 extents, slowest axis first (x₂ before x₁)
//! then f64 values in row-major order (x₁ fastest, components innermost)
//! ```

use super::{DiscretizeError, Grid, ScalarField, VectorField};
use crate::vector::Vec2N;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const BINARY_MAGIC: [u8; 4] = *b"FKFD";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Node,
    Cell,
}

/// A field as stored on disk: extents per axis (x₁ first), components per
/// entry, and values with x₁ fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData {
    pub kind: FieldKind,
    pub extents: Vec<usize>,
    pub ncomp: usize,
    pub values: Vec<f64>,
}

fn io_err(e: impl std::fmt::Display) -> DiscretizeError {
    DiscretizeError::Io(e.to_string())
}

impl FieldData {
    pub fn from_scalar(u: &ScalarField) -> Self {
        let g = u.grid();
        Self { kind: FieldKind::Node, extents: vec![g.cells_per_axis() + 1; g.dim()], ncomp: 1, values: u.values().to_vec() }
    }

    pub fn from_vector(v: &VectorField) -> Self {
        let g = v.grid();
        let values = v.values().iter().flat_map(|x| x.as_slice().to_vec()).collect();
        Self { kind: FieldKind::Cell, extents: vec![g.cells_per_axis(); g.dim()], ncomp: g.dim(), values }
    }

    /// A scalar per cell, such as a residual field.
    pub fn from_cells(g: &Grid, values: Vec<f64>) -> Self {
        Self { kind: FieldKind::Cell, extents: vec![g.cells_per_axis(); g.dim()], ncomp: 1, values }
    }

    pub fn entries(&self) -> usize {
        self.extents.iter().product()
    }

    /// Interprets a node field as a [`ScalarField`] on the grid it implies.
    pub fn to_scalar(&self) -> Result<ScalarField, DiscretizeError> {
        if self.kind != FieldKind::Node || self.ncomp != 1 || self.extents.iter().any(|&e| e != self.extents[0]) {
            return Err(io_err("expected a square scalar node field"));
        }
        let g = Grid::new(self.extents.len(), self.extents[0].saturating_sub(1))?;
        ScalarField::new(g, self.values.clone())
    }

    /// Entries as vectors, one per node or cell.
    pub fn vectors(&self) -> Vec<Vec2N> {
        self.values.chunks(self.ncomp).map(Vec2N::from_slice).collect()
    }

    fn index_of(&self, entry: usize) -> Vec<usize> {
        let mut rest = entry;
        self.extents
            .iter()
            .map(|&e| {
                let i = rest % e;
                rest /= e;
                i
            })
            .collect()
    }

    fn validate(&self) -> Result<(), DiscretizeError> {
        if !(1..=2).contains(&self.extents.len()) || !(1..=2).contains(&self.ncomp) {
            return Err(io_err("fields have 1 or 2 axes and 1 or 2 components"));
        }
        if self.values.len() != self.entries() * self.ncomp {
            return Err(DiscretizeError::Shape {
                what: "field file".into(),
                expected: self.entries() * self.ncomp,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

const AXES: [&str; 2] = ["i", "j"];

pub fn write_csv(path: &Path, field: &FieldData) -> Result<(), DiscretizeError> {
    field.validate()?;
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header: Vec<String> = AXES[..field.extents.len()].iter().map(|s| s.to_string()).collect();
    if field.ncomp == 1 {
        header.push("value".into());
    } else {
        header.extend((1..=field.ncomp).map(|c| format!("value_{c}")));
    }
    w.write_record(&header).map_err(io_err)?;
    for e in 0..field.entries() {
        let mut row: Vec<String> = field.index_of(e).iter().map(|i| i.to_string()).collect();
        // shortest round-trip formatting keeps values bit-exact
        row.extend(field.values[e * field.ncomp..(e + 1) * field.ncomp].iter().map(|v| format!("{v:?}")));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a CSV field. Rows may come in any order but every index must
/// appear exactly once; extents are inferred from the largest index.
pub fn read_csv(path: &Path, kind: FieldKind) -> Result<FieldData, DiscretizeError> {
    let mut r = csv::Reader::from_path(path).map_err(io_err)?;
    let header = r.headers().map_err(io_err)?.clone();
    let ndim = header.iter().take_while(|h| AXES.contains(&h.trim())).count();
    let ncomp = header.len() - ndim;
    if ndim == 0 || ncomp == 0 {
        return Err(io_err(format!("{}: header needs index columns then value columns", path.display())));
    }
    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let at = |what: &str| format!("{}: row {}: {what}", path.display(), line + 2);
        let idx = (0..ndim)
            .map(|a| rec.get(a).unwrap_or("").trim().parse::<usize>().map_err(|_| io_err(at("bad index"))))
            .collect::<Result<Vec<_>, _>>()?;
        let vals = (ndim..ndim + ncomp)
            .map(|a| rec.get(a).unwrap_or("").trim().parse::<f64>().map_err(|_| io_err(at("bad value"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((idx, vals));
    }
    let extents: Vec<usize> = (0..ndim).map(|a| rows.iter().map(|(i, _)| i[a] + 1).max().unwrap_or(0)).collect();
    let entries: usize = extents.iter().product();
    let mut values = vec![f64::NAN; entries * ncomp];
    let mut seen = vec![false; entries];
    for (idx, vals) in rows {
        let mut e = 0;
        for a in (0..ndim).rev() {
            e = e * extents[a] + idx[a];
        }
        if std::mem::replace(&mut seen[e], true) {
            return Err(io_err(format!("{}: index {idx:?} appears twice", path.display())));
        }
        values[e * ncomp..(e + 1) * ncomp].copy_from_slice(&vals);
    }
    if let Some(e) = seen.iter().position(|s| !s) {
        return Err(io_err(format!("{}: entry {e} is missing", path.display())));
    }
    let field = FieldData { kind, extents, ncomp, values };
    field.validate()?;
    Ok(field)
}

pub fn write_binary(path: &Path, field: &FieldData) -> Result<(), DiscretizeError> {
    field.validate()?;
    let mut buf = Vec::with_capacity(8 + 8 * field.extents.len() + 8 * field.values.len());
    buf.extend_from_slice(&BINARY_MAGIC);
    buf.push(match field.kind {
        FieldKind::Node => 0,
        FieldKind::Cell => 1,
    });
    buf.push(field.extents.len() as u8);
    buf.push(field.ncomp as u8);
    buf.push(0);
    for &e in field.extents.iter().rev() {
        buf.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)
}

pub fn read_binary(path: &Path) -> Result<FieldData, DiscretizeError> {
    let mut buf = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(io_err)?;
    if buf.len() < 8 || buf[..4] != BINARY_MAGIC {
        return Err(io_err(format!("{}: not a field dump (bad magic)", path.display())));
    }
    let kind = match buf[4] {
        0 => FieldKind::Node,
        1 => FieldKind::Cell,
        k => return Err(io_err(format!("{}: unknown field kind {k}", path.display()))),
    };
    let (ndim, ncomp) = (buf[5] as usize, buf[6] as usize);
    let mut pos = 8;
    let mut take8 = |buf: &[u8]| -> Result<[u8; 8], DiscretizeError> {
        let chunk = buf.get(pos..pos + 8).ok_or_else(|| io_err(format!("{}: truncated", path.display())))?;
        pos += 8;
        Ok(chunk.try_into().expect("8 bytes"))
    };
    let mut extents = Vec::with_capacity(ndim);
    for _ in 0..ndim.min(2) {
        extents.push(u64::from_le_bytes(take8(&buf)?) as usize);
    }
    extents.reverse();
    let count: usize = extents.iter().product::<usize>() * ncomp;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(take8(&buf)?));
    }
    let field = FieldData { kind, extents, ncomp, values };
    field.validate()?;
    if pos != buf.len() {
        return Err(io_err(format!("{}: {} trailing bytes", path.display(), buf.len() - pos)));
    }
    Ok(field)
}
