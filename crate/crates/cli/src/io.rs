//! Snapshot and series file formats.
//!
//! Snapshot: `mesh torus <N>` or `mesh sphere <n_theta> <n_phi>`, then
//! `t <float>`, then one comma-separated line per grid row (x or φ fastest).
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use meanflow_core::diagnostics::CSV_COLUMNS;
use meanflow_core::mesh::{Field, MeshGeometry, MeshSpec};
use meanflow_core::DiagnosticsRecord;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn malformed(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        line,
        message: message.into(),
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

pub fn snapshot_to_string(t: f64, field: &Field) -> String {
    let mut out = String::new();
    match field.mesh() {
        MeshSpec::Torus { n } => writeln!(out, "mesh torus {n}"),
        MeshSpec::Sphere { n_theta, n_phi } => writeln!(out, "mesh sphere {n_theta} {n_phi}"),
    }
    .unwrap();
    writeln!(out, "t {}", format_float(t)).unwrap();
    let (_, cols) = field.mesh().grid_dims();
    for row in field.values().chunks(cols) {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_snapshot(text: &str) -> Result<(f64, Field), FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty snapshot"))?;
    let words: Vec<&str> = header.split_whitespace().collect();
    let dim = |w: &str| {
        w.parse::<usize>()
            .map_err(|_| malformed(1, format!("bad dimension `{w}`")))
    };
    let spec = match words.as_slice() {
        ["mesh", "torus", n] => MeshSpec::Torus { n: dim(n)? },
        ["mesh", "sphere", t, p] => MeshSpec::Sphere {
            n_theta: dim(t)?,
            n_phi: dim(p)?,
        },
        _ => return Err(malformed(1, format!("expected mesh header, found `{header}`"))),
    };
    let mesh = MeshGeometry::build(spec).map_err(|e| malformed(1, e.to_string()))?;
    let (ln, t_line) = lines.next().ok_or_else(|| malformed(2, "missing time line"))?;
    let t = t_line
        .strip_prefix("t ")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .ok_or_else(|| malformed(ln, format!("expected `t <float>`, found `{t_line}`")))?;
    let (rows, cols) = spec.grid_dims();
    let mut values = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for piece in line.split(',') {
            let v = piece
                .trim()
                .parse::<f64>()
                .map_err(|_| malformed(ln, format!("bad float `{}`", piece.trim())))?;
            values.push(v);
        }
        if values.len() - before != cols {
            return Err(malformed(
                ln,
                format!("expected {cols} values, found {}", values.len() - before),
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(malformed(0, format!("expected {rows} rows, found {seen_rows}")));
    }
    let field = Field::new(&mesh, values).map_err(|e| malformed(0, e.to_string()))?;
    Ok((t, field))
}

pub fn write_snapshot(path: &Path, t: f64, field: &Field) -> std::io::Result<()> {
    std::fs::write(path, snapshot_to_string(t, field))
}

pub fn read_snapshot(path: &Path) -> Result<(f64, Field), FormatError> {
    parse_snapshot(&std::fs::read_to_string(path)?)
}

pub fn series_to_string(series: &[DiagnosticsRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for record in series {
        let row: Vec<String> = record.to_row().iter().map(|&v| format_float(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_series(text: &str) -> Result<Vec<DiagnosticsRecord>, FormatError> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header != CSV_COLUMNS.join(",") {
        return Err(malformed(1, format!("unexpected header `{header}`")));
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let parsed: Result<Vec<f64>, _> = l.split(',').map(|p| p.trim().parse::<f64>()).collect();
            let parsed = parsed.map_err(|_| malformed(i + 1, "bad float"))?;
            let row: [f64; 12] = parsed
                .try_into()
                .map_err(|v: Vec<f64>| malformed(i + 1, format!("expected 12 columns, found {}", v.len())))?;
            Ok(DiagnosticsRecord::from_row(row))
        })
        .collect()
}

pub fn write_series(path: &Path, series: &[DiagnosticsRecord]) -> std::io::Result<()> {
    std::fs::write(path, series_to_string(series))
}

pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>, FormatError> {
    parse_series(&std::fs::read_to_string(path)?)
}
