//! Plain-text matrix files and problem bundles.
//!
//! A matrix file holds `rows cols` on its first line followed by the entries
//! in row-major order, separated by whitespace. Vectors are single-column
//! matrices. A problem bundle is a directory containing the files `A`, `b`,
//! `B`, `d` and `sig`, the last holding `p q`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{IlseError, Result};
use crate::types::{IlseProblem, Matrix, SignatureMatrix, Vector};

pub fn format_matrix(mat: &Matrix) -> String {
    let mut out = format!("{} {}\n", mat.nrows(), mat.ncols());
    for i in 0..mat.nrows() {
        let row: Vec<String> = (0..mat.ncols()).map(|j| format!("{:e}", mat[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut tokens = text.split_whitespace();
    let mut dim = |name: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| IlseError::Parse(format!("missing {name} in header")))?
            .parse::<usize>()
            .map_err(|e| IlseError::Parse(format!("bad {name}: {e}")))
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let values = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| IlseError::Parse(format!("bad entry {t:?}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != rows * cols {
        return Err(IlseError::Parse(format!(
            "expected {} entries for a {rows} x {cols} matrix, found {}",
            rows * cols,
            values.len()
        )));
    }
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

pub fn parse_vector(text: &str) -> Result<Vector> {
    let mat = parse_matrix(text)?;
    if mat.ncols() != 1 && !mat.is_empty() {
        return Err(IlseError::Parse(format!(
            "expected a single-column matrix, found {} columns",
            mat.ncols()
        )));
    }
    Ok(Vector::from_column_slice(mat.as_slice()))
}

pub fn format_vector(v: &Vector) -> String {
    format_matrix(&Matrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&fs::read_to_string(path)?)
        .map_err(|e| IlseError::Parse(format!("{}: {e}", path.display())))
}

pub fn read_vector(path: &Path) -> Result<Vector> {
    parse_vector(&fs::read_to_string(path)?)
        .map_err(|e| IlseError::Parse(format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, mat: &Matrix) -> Result<()> {
    Ok(fs::write(path, format_matrix(mat))?)
}

pub fn write_vector(path: &Path, v: &Vector) -> Result<()> {
    Ok(fs::write(path, format_vector(v))?)
}

pub fn read_signature(path: &Path) -> Result<SignatureMatrix> {
    let text = fs::read_to_string(path)?;
    let nums: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| IlseError::Parse(format!("bad signature entry {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    match nums.as_slice() {
        [p, q] => Ok(SignatureMatrix::new(*p, *q)),
        _ => Err(IlseError::Parse(format!(
            "{}: expected `p q`, found {} values",
            path.display(),
            nums.len()
        ))),
    }
}

pub fn write_bundle(dir: &Path, problem: &IlseProblem) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("A"), &problem.a)?;
    write_vector(&dir.join("b"), &problem.b)?;
    write_matrix(&dir.join("B"), &problem.constraint)?;
    write_vector(&dir.join("d"), &problem.d)?;
    fs::write(dir.join("sig"), format!("{} {}\n", problem.sig.p, problem.sig.q))?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<IlseProblem> {
    IlseProblem::new(
        read_matrix(&dir.join("A"))?,
        read_vector(&dir.join("b"))?,
        read_matrix(&dir.join("B"))?,
        read_vector(&dir.join("d"))?,
        read_signature(&dir.join("sig"))?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_accepts_free_whitespace() {
        let m = parse_matrix("2 3\n1 2 3\n4\t5   6e-1\n").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 0.6]));
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(parse_matrix("2 2\n1 2 3\n").is_err());
        assert!(parse_matrix("2\n").is_err());
        assert!(parse_matrix("1 1\nx\n").is_err());
        assert!(parse_vector("1 2\n1 2\n").is_err());
    }

    #[test]
    fn format_is_exact() {
        let m = Matrix::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, 1e-300, 6.02e23]);
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
        let v = Vector::from_vec(vec![std::f64::consts::PI, -0.0]);
        assert_eq!(parse_vector(&format_vector(&v)).unwrap(), v);
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = IlseProblem::new(
            Matrix::from_row_slice(3, 2, &[1.0, 0.5, -2.0, 0.25, 3.0, 1.0]),
            Vector::from_vec(vec![1.0, 2.0, 3.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Vector::from_vec(vec![0.5]),
            SignatureMatrix::new(2, 1),
        )
        .unwrap();
        write_bundle(dir.path(), &p).unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap(), p);
    }
}
