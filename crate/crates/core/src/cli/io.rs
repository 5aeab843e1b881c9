use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const CSV_HEADER: &str = "# dimlift-csv v1";

/// Shortest decimal that parses back to the same `f64`; scientific notation
/// outside `[1e-5, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// CSV text with the version line, a column line and one line per row.
pub fn csv(columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    writeln!(s, "{}", columns.join(",")).unwrap();
    for r in rows {
        writeln!(s, "{}", r.join(",")).unwrap();
    }
    s
}

/// Parses the matrix text format: a `rows cols` line, then `rows` lines of
/// `cols` whitespace-separated numbers. Blank lines and `#` comments are
/// skipped.
pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let bad = |line: usize, msg: &str| Error::Parse(format!("line {line}: {msg}"));
    let (hl, head) = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<usize> = head
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(hl, "expected `rows cols`")))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(hl, "expected `rows cols`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, l) = lines.next().ok_or_else(|| Error::Parse(format!("expected {rows} rows")))?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(ln, &format!("not a number: {t}"))))
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(bad(ln, &format!("expected {cols} values, found {}", row.len())));
        }
        data.extend(row);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(bad(ln, "trailing data"));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut s = format!("{} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RngStream;

    #[test]
    fn floats_round_trip() {
        let mut rng = RngStream::new(1);
        for _ in 0..1000 {
            let x = rng.gaussian() * 10f64.powi(rng.below(40) as i32 - 20);
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(3.5e-17), "3.5e-17");
    }

    #[test]
    fn matrix_text_round_trip() {
        let m = Matrix::from_rows(&[vec![0.1, -2.5e-300], vec![3.0, 1.0 / 3.0]]).unwrap();
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
        let spaced = "# a comment\n2 1\n\n 1.5 \n-2\n";
        assert_eq!(parse_matrix(spaced).unwrap(), Matrix::column(&[1.5, -2.0]));
    }

    #[test]
    fn malformed_matrices_are_rejected() {
        for bad in ["", "2\n1\n", "1 2\n1\n", "2 1\n1\n", "1 1\nx\n", "1 1\n1\n2\n"] {
            assert!(matches!(parse_matrix(bad), Err(Error::Parse(_))), "{bad:?}");
        }
    }
}
