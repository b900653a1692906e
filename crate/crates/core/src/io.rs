//! Plain-text matrix files.
//!
//! ```text
//! # optional comment lines
//! rows cols
//! a11 a12 ...
//! a21 a22 ...
//! ```
//!
//! Values are written with 17 significant digits so files round-trip
//! bit-exactly. A quadratic operator is its `n × n²` matrix preceded by the
//! comment `# quadop n=<n>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{EpqError, Result};
use crate::quadop::QuadOp;

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 25 + 16);
    writeln!(out, "{} {}", m.nrows(), m.ncols()).unwrap();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", m[(r, c)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> std::result::Result<DMatrix<f64>, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or("missing `rows cols` header")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("line {hline}: bad header `{header}`: {e}"))?;
    let [rows, cols] = dims[..] else {
        return Err(format!("line {hline}: header must be `rows cols`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    // rows of an `r × 0` matrix are empty lines, which are not kept
    let mut seen_rows = if cols == 0 { rows } else { 0 };
    for (lineno, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| format!("line {lineno}: bad number `{tok}`"))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(format!(
                "line {lineno}: expected {cols} values, found {}",
                data.len() - before
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(format!("expected {rows} rows, found {seen_rows}"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text).map_err(|message| EpqError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

/// Column vector as an `n × 1` matrix file.
pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 && m.nrows() != 1 {
        return Err(EpqError::Parse {
            path: path.to_path_buf(),
            message: format!("expected a vector, found {}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(DVector::from_iterator(m.len(), m.iter().copied()))
}

pub fn format_quadop(h: &QuadOp) -> String {
    format!("# quadop n={}\n{}", h.n(), format_matrix(h.entries()))
}

pub fn write_quadop(path: &Path, h: &QuadOp) -> Result<()> {
    fs::write(path, format_quadop(h))?;
    Ok(())
}

pub fn read_quadop(path: &Path) -> Result<QuadOp> {
    let m = read_matrix(path)?;
    QuadOp::new(m).map_err(|e| EpqError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadop_file_layout() {
        let mut h = QuadOp::zeros(2).unwrap();
        h.set(1, 0, 1, 0.1);
        let text = format_quadop(&h);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# quadop n=2"));
        assert_eq!(lines.next(), Some("2 4"));
        assert_eq!(
            lines.next(),
            Some("0.0000000000000000e0 0.0000000000000000e0 0.0000000000000000e0 1.0000000000000001e-1")
        );
        let back = QuadOp::new(parse_matrix(&text).unwrap()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn parse_errors() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2 2\n1 2\n").is_err());
        assert!(parse_matrix("1 2\n1 2 3\n").is_err());
        assert!(parse_matrix("1 1\nabc\n").is_err());
        assert!(parse_matrix("1\n1\n").is_err());
        assert_eq!(parse_matrix("0 3\n").unwrap().shape(), (0, 3));
    }

    #[test]
    fn quadop_shape_is_checked_on_read() {
        let dir = std::env::temp_dir().join(format!("epquad-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.txt");
        write_matrix(&path, &DMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(read_quadop(&path), Err(EpqError::Parse { .. })));
        fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #[test]
        fn text_format_round_trips_bit_exactly(
            rows in 0usize..5,
            cols in 0usize..5,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 25),
        ) {
            let m = DMatrix::from_fn(rows, cols, |r, c| seed[r * 5 + c]);
            let back = parse_matrix(&format_matrix(&m)).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
