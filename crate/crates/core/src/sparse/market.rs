//! Matrix Market coordinate files (`real symmetric` and `real general`).

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{CsrMatrix, SparseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    Symmetric,
    General,
}

fn parse_err(line: usize, msg: impl Into<String>) -> SparseError {
    SparseError::Parse { line, msg: msg.into() }
}

fn parse_header(line: &str) -> Result<Symmetry, SparseError> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(1, format!("unsupported object '{}'", tokens[1])));
    }
    match tokens[2].as_str() {
        "coordinate" => {}
        "array" => return Err(parse_err(1, "array format is not supported")),
        other => return Err(parse_err(1, format!("unknown format '{other}'"))),
    }
    match tokens[3].as_str() {
        "real" | "double" => {}
        other => return Err(parse_err(1, format!("field '{other}' is not real"))),
    }
    match tokens[4].as_str() {
        "symmetric" => Ok(Symmetry::Symmetric),
        "general" => Ok(Symmetry::General),
        other => Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    }
}

/// Reads a `coordinate real` Matrix Market stream into full symmetric storage.
///
/// Symmetric files must list the lower triangle only; it is mirrored. General
/// files must already be exactly symmetric. Duplicate entries are summed.
/// Missing diagonal entries are allowed here; see
/// [`CsrMatrix::check_positive_diagonal`].
pub fn read_matrix_market<R: Read>(source: R) -> Result<CsrMatrix, SparseError> {
    let reader = BufReader::new(source);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(parse_err(1, "empty input")),
    };
    let symmetry = parse_header(&header)?;

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "size line must be 'rows cols nnz'"));
                }
                let rows: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad row count"))?;
                let cols: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad column count"))?;
                let nnz: usize = fields[2].parse().map_err(|_| parse_err(lineno, "bad entry count"))?;
                if rows != cols || rows == 0 {
                    return Err(parse_err(lineno, format!("matrix must be square and nonempty, got {rows}x{cols}")));
                }
                size = Some((rows, nnz));
                triplets.reserve(if symmetry == Symmetry::Symmetric { 2 * nnz } else { nnz });
            }
            Some((n, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "entry must be 'row col value'"));
                }
                let i: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) out of range for order {n}")));
                }
                if !v.is_finite() {
                    return Err(parse_err(lineno, "non-finite value"));
                }
                let (i, j) = (i - 1, j - 1);
                match symmetry {
                    Symmetry::Symmetric => {
                        if j > i {
                            return Err(parse_err(lineno, "symmetric file lists an entry above the diagonal"));
                        }
                        triplets.push((i, j, v));
                        if i != j {
                            triplets.push((j, i, v));
                        }
                    }
                    Symmetry::General => triplets.push((i, j, v)),
                }
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    let listed = match symmetry {
        Symmetry::Symmetric => triplets.iter().filter(|(i, j, _)| i >= j).count(),
        Symmetry::General => triplets.len(),
    };
    if listed != nnz {
        return Err(parse_err(1, format!("size line promises {nnz} entries, found {listed}")));
    }
    let a = CsrMatrix::from_triplets(n, &triplets)?;
    if symmetry == Symmetry::General {
        a.check_symmetric()?;
    }
    Ok(a)
}

pub fn read_matrix_market_file(path: impl AsRef<Path>) -> Result<CsrMatrix, SparseError> {
    read_matrix_market(File::open(path)?)
}

/// Writes the lower triangle as a `coordinate real symmetric` file.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_matrix_market<W: Write>(a: &CsrMatrix, mut out: W) -> Result<(), SparseError> {
    let lower: Vec<(usize, usize, f64)> = a.triplets().into_iter().filter(|&(i, j, _)| j <= i).collect();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{} {} {}", a.n(), a.n(), lower.len())?;
    for (i, j, v) in lower {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}
