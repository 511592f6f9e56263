//! Headerless CSV of reals, one matrix row per line.

use std::fmt::Write as _;
use std::io::Read;

use dropfact::DenseMatrix;

/// Parses a matrix; errors name the 1-based row and column of the first
/// field that fails.
pub fn parse_matrix<R: Read>(input: R) -> Result<DenseMatrix, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut data = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {}: {e}", r + 1))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if rows == 0 {
            cols = record.len();
        } else if record.len() != cols {
            return Err(format!(
                "row {}, column {}: expected {cols} fields, found {}",
                r + 1,
                cols.min(record.len()) + 1,
                record.len()
            ));
        }
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                format!("row {}, column {}: cannot parse {field:?} as a number", r + 1, c + 1)
            })?;
            if !value.is_finite() {
                return Err(format!("row {}, column {}: value {field:?} is not finite", r + 1, c + 1));
            }
            data.push(value);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err("input has no rows".into());
    }
    DenseMatrix::new(rows, cols, data).map_err(|e| e.to_string())
}

/// Shortest round-trip representation of every entry.
pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").expect("string write");
        }
        out.push('\n');
    }
    out
}
