//! Field import/export and small CSV/JSON writers.
//!
//! Text output uses ',' as separator, '.' as decimal mark and LF line ends. Floats are
//! written in shortest round-trip exponent form, so equal values give equal bytes.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

/// Header `x2,<x1 nodes>`, then one line per x₂ slice: x₂ followed by the row.
pub fn write_field_csv(f: &Field, mut out: impl Write) -> Result<()> {
    let g = f.grid;
    let mut s = String::from("x2");
    for i in 0..g.n1 {
        let _ = write!(s, ",{}", fmt_f64(g.x1(i)));
    }
    s.push('\n');
    for j in 0..g.rows() {
        s.push_str(&fmt_f64(g.x2(j)));
        for v in f.row(j) {
            s.push(',');
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`] onto `grid`; node coordinates must match.
pub fn read_field_csv(grid: GridSpec, mut input: impl Read) -> Result<Field> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
    if header.split(',').count() != grid.n1 + 1 {
        return format_err(format!("expected {} x1 columns", grid.n1));
    }
    let tol = 1e-12;
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for (j, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", j + 2))))
            .collect::<Result<_>>()?;
        if cells.len() != grid.n1 + 1 {
            return format_err(format!("line {}: expected {} cells", j + 2, grid.n1 + 1));
        }
        if j >= grid.rows() || (cells[0] - grid.x2(j)).abs() > tol {
            return format_err(format!("line {}: x2 = {} does not match the grid", j + 2, cells[0]));
        }
        values.extend_from_slice(&cells[1..]);
        rows += 1;
    }
    if rows != grid.rows() {
        return format_err(format!("expected {} rows, found {rows}", grid.rows()));
    }
    Field::from_values(grid, values)
}

/// 8-byte header (n1, number of x₂ slices, u32 little-endian), then the values as f64
/// little-endian, column-major in (x₁, x₂): x₁ varies fastest.
pub fn write_field_binary(f: &Field, mut out: impl Write) -> Result<()> {
    let g = f.grid;
    let (n1, rows) = (u32::try_from(g.n1), u32::try_from(g.rows()));
    let (Ok(n1), Ok(rows)) = (n1, rows) else {
        return format_err("grid too large for a 32-bit header");
    };
    let mut buf = Vec::with_capacity(8 + 8 * f.values.len());
    buf.extend_from_slice(&n1.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    for v in &f.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_field_binary(grid: GridSpec, mut input: impl Read) -> Result<Field> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < 8 {
        return format_err("truncated header");
    }
    let n1 = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    if n1 != grid.n1 || rows != grid.rows() {
        return format_err(format!("header {n1}×{rows} does not match grid {}×{}", grid.n1, grid.rows()));
    }
    if buf.len() != 8 + 8 * n1 * rows {
        return format_err(format!("expected {} bytes, found {}", 8 + 8 * n1 * rows, buf.len()));
    }
    let values = buf[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field::from_values(grid, values)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_f64(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(t) if t.contains([',', '"', '\n']) => format!("\"{}\"", t.replace('"', "\"\"")),
            Cell::Text(t) => t.clone(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Cell::Int(_) => "integer",
            Cell::Float(_) => "number",
            Cell::Bool(_) => "boolean",
            Cell::Text(_) => "string",
        }
    }
}

/// A CSV table with named columns.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// (column, type) pairs taken from the first row.
    pub fn column_types(&self) -> Vec<(String, &'static str)> {
        self.columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), self.rows.first().map_or("number", |r| r[i].type_name())))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field {
        Field::from_fn(GridSpec::half_plane(8, 4, 0.5).unwrap(), |x1, x2| (x1 * 7.0).sin() + x2 * 1e-9)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), f.grid.rows() + 1);
        let g = read_field_csv(f.grid, &buf[..]).unwrap();
        assert_eq!(g.values, f.values);
    }

    #[test]
    fn binary_layout() {
        let f = sample();
        let mut buf = Vec::new();
        write_field_binary(&f, &mut buf).unwrap();
        assert_eq!(&buf[0..4], &8u32.to_le_bytes());
        assert_eq!(&buf[4..8], &5u32.to_le_bytes());
        assert_eq!(buf.len(), 8 + 8 * 40);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), f.at(1, 0));
        let g = read_field_binary(f.grid, &buf[..]).unwrap();
        assert_eq!(g.values, f.values);
        assert!(read_field_binary(GridSpec::torus(8, 8).unwrap(), &buf[..]).is_err());
        assert!(read_field_binary(f.grid, &buf[..20]).is_err());
    }

    #[test]
    fn table_rendering() {
        let mut t = Table::new(&["iter", "d", "note"]);
        t.push(vec![1usize.into(), 0.25.into(), "a,b".into()]);
        t.push(vec![2usize.into(), 1e-300.into(), "plain".into()]);
        assert_eq!(t.to_csv(), "iter,d,note\n1,2.5e-1,\"a,b\"\n2,1e-300,plain\n");
        assert_eq!(t.column_types()[1], ("d".to_string(), "number"));
    }

    #[test]
    fn rejects_mismatched_csv() {
        let f = sample();
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        assert!(read_field_csv(GridSpec::half_plane(8, 4, 0.25).unwrap(), &buf[..]).is_err());
        assert!(read_field_csv(GridSpec::half_plane(4, 4, 0.5).unwrap(), &buf[..]).is_err());
    }
}
