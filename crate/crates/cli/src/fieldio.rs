//! Field tables: `schema_version,x,re,im`, one row per grid point, `x` in
//! the slow spatial variable on `[−L/2, L/2)`.

use std::path::Path;

use nlse_lab::field::{make_grid, WaveField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FIELD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    schema_version: u32,
    x: f64,
    re: f64,
    im: f64,
}

pub fn field_to_csv(u: &WaveField) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (x, v) in u.grid().x().iter().zip(u.values()) {
        w.serialize(Row {
            schema_version: FIELD_SCHEMA_VERSION,
            x: *x,
            re: v.re,
            im: v.im,
        })
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
}

pub fn field_from_csv(text: &str) -> CliResult<WaveField> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r
        .deserialize::<Row>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::usage(format!("field table: {e}")))?;
    if let Some(row) = rows.iter().find(|r| r.schema_version != FIELD_SCHEMA_VERSION) {
        return Err(CliError::usage(format!(
            "field table: schema_version {} not supported (expected {FIELD_SCHEMA_VERSION})",
            row.schema_version
        )));
    }
    if rows.len() < 2 {
        return Err(CliError::usage("field table: need at least two rows"));
    }
    let n = rows.len();
    let dx = rows[1].x - rows[0].x;
    let length = dx * n as f64;
    let grid = make_grid(n, length)?;
    let off_grid = grid
        .x()
        .iter()
        .zip(&rows)
        .any(|(x, r)| (x - r.x).abs() > 1e-9 * length.max(1.0));
    if off_grid {
        return Err(CliError::usage(
            "field table: x must be uniform on [-L/2, L/2) with L = n*dx",
        ));
    }
    let values = rows.iter().map(|r| Complex64::new(r.re, r.im)).collect();
    Ok(WaveField::new(&grid, values)?)
}

pub fn read_field(path: &Path) -> CliResult<WaveField> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    field_from_csv(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let g = make_grid(64, 12.0).unwrap();
        let u = WaveField::from_fn(&g, |x| Complex64::new((-x * x).exp(), 0.3 * x.sin())).unwrap();
        let back = field_from_csv(&field_to_csv(&u)).unwrap();
        assert_eq!(back.grid(), u.grid());
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn rejects_foreign_schema_and_bad_grids() {
        let g = make_grid(16, 4.0).unwrap();
        let text = field_to_csv(&WaveField::zeros(&g));
        assert!(field_from_csv(&text.replace("\n1,", "\n2,")).is_err());
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        assert!(field_from_csv(&lines.join("\n")).is_err());
        assert!(field_from_csv("schema_version,x,re,im\n").is_err());
    }
}
