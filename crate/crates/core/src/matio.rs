//! CSV formats for matrices and feature columns.
//!
//! Square matrices use a `# n=N` header line followed by N comma-separated
//! rows printed at 5-digit fixed precision. Feature files are plain CSV
//! where each column is one feature vector; `#` lines are comments.

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn parse_err(line: usize, msg: impl Into<String>) -> MatIoError {
    MatIoError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Write an n-by-n matrix with the `# n=N` header at 5-digit precision.
pub fn write_square<W: Write>(
    mut w: W,
    n: usize,
    get: impl Fn(usize, usize) -> f64,
) -> io::Result<()> {
    writeln!(w, "# n={n}")?;
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.5}", get(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read a square matrix written by [`write_square`].
pub fn read_square<R: BufRead>(r: R) -> Result<(usize, Vec<Vec<f64>>), MatIoError> {
    let mut lines = r.lines().enumerate();
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty input"))
        .and_then(|(i, l)| Ok((i + 1, l?)))?;
    let n: usize = header
        .trim()
        .strip_prefix("# n=")
        .ok_or_else(|| parse_err(lineno, "expected '# n=<N>' header"))?
        .parse()
        .map_err(|_| parse_err(lineno, "bad matrix size in header"))?;
    if n == 0 {
        return Err(parse_err(lineno, "matrix size must be positive"));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("bad number {:?}", tok.trim())))
            })
            .collect::<Result<_, _>>()?;
        if row.len() != n {
            return Err(parse_err(
                lineno,
                format!("row has {} entries, expected {n}", row.len()),
            ));
        }
        rows.push(row);
        if rows.len() > n {
            return Err(parse_err(lineno, "more rows than the declared size"));
        }
    }
    if rows.len() != n {
        return Err(parse_err(
            0,
            format!("got {} rows, expected {n}", rows.len()),
        ));
    }
    Ok((n, rows))
}

/// Read plain CSV where each column is a feature vector. Returns the
/// columns. All rows must have the same width.
pub fn read_columns<R: BufRead>(r: R) -> Result<Vec<Vec<f64>>, MatIoError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("bad number {:?}", tok.trim())))
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    lineno,
                    format!("row has {} entries, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let cols = rows[0].len();
    Ok((0..cols)
        .map(|c| rows.iter().map(|r| r[c]).collect())
        .collect())
}

/// Write feature columns as plain CSV (rows are vector positions).
pub fn write_columns<W: Write>(mut w: W, columns: &[Vec<f64>]) -> io::Result<()> {
    if columns.is_empty() {
        return Ok(());
    }
    let len = columns[0].len();
    for r in 0..len {
        let row: Vec<String> = columns.iter().map(|c| format!("{:.6}", c[r])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
