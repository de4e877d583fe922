//! Plain matrix CSV: one row per line, comma separated, `#` comments
//! ignored, 17 significant digits on write.

use ndarray::Array2;
use std::path::Path;

use crate::error::{Error, Result};

pub fn matrix_to_csv(matrix: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("matrix CSV has no data rows".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("matrix CSV rows have unequal lengths".into()));
    }
    let mut a = Array2::zeros((rows.len(), cols));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[[i, j]] = *v;
        }
    }
    Ok(a)
}

pub fn write_matrix(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_csv(matrix))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    matrix_from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_exact() {
        let m = array![[1.0 / 3.0, -2.5e-17], [7.25, 0.1]];
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let text = "# a comment\n1.0,2.0\n\n3.0,4.0\n";
        let m = matrix_from_csv(text).unwrap();
        assert_eq!(m, array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matrix_from_csv("1.0,2.0\n3.0\n").is_err());
    }
}
