//! Sparse symmetric matrices in compressed-row form.

mod market;
mod rhs;

pub use market::{read_matrix_market, read_matrix_market_file, write_matrix_market};
pub use rhs::{read_rhs, RhsSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("matrix is not symmetric: entry ({row}, {col}) has no matching transpose")]
    Asymmetric { row: usize, col: usize },
    #[error("missing diagonal entry in row {0}")]
    MissingDiagonal(usize),
    #[error("nonpositive diagonal entry {value} in row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("matrix market line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("right-hand side: {0}")]
    Rhs(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Square sparse matrix in CSR form with sorted column indices per row.
///
/// Symmetric matrices are stored in full (both triangles), so `matvec`
/// never needs a transpose pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating the structural invariants.
    pub fn try_new(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if n == 0 {
            return Err(SparseError::InvalidStructure("order must be positive".into()));
        }
        if row_offsets.len() != n + 1 {
            return Err(SparseError::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets[n] != col_indices.len() {
            return Err(SparseError::InvalidStructure("row_offsets must start at 0 and end at nnz".into()));
        }
        if col_indices.len() != values.len() {
            return Err(SparseError::InvalidStructure("col_indices and values differ in length".into()));
        }
        for i in 0..n {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(SparseError::InvalidStructure(format!("row_offsets decreases at row {i}")));
            }
            let row = &col_indices[lo..hi];
            if row.iter().any(|&j| j >= n) {
                return Err(SparseError::InvalidStructure(format!("column index out of range in row {i}")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SparseError::InvalidStructure(format!(
                    "column indices not strictly increasing in row {i}"
                )));
            }
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(SparseError::NonFinite);
        }
        Ok(CsrMatrix { n, row_offsets, col_indices, values })
    }

    /// Assembles from 0-based triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        if n == 0 {
            return Err(SparseError::InvalidStructure("order must be positive".into()));
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        if let Some(&(i, j, _)) = sorted.iter().find(|&&(i, j, _)| i >= n || j >= n) {
            return Err(SparseError::InvalidStructure(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
        }
        // stable: duplicates accumulate in input order
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        CsrMatrix::try_new(n, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        CsrMatrix { n, row_offsets: (0..=n).collect(), col_indices: (0..n).collect(), values: diag.to_vec() }
    }

    /// Symmetric tridiagonal Toeplitz matrix `tridiag(off, diag, off)`.
    pub fn tridiagonal(n: usize, diag: f64, off: f64) -> Self {
        let mut t = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, off));
            }
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, off));
            }
        }
        CsrMatrix::from_triplets(n, &t).expect("tridiagonal pattern is valid")
    }

    /// Five-point Laplacian on a `side x side` grid with Dirichlet boundary.
    pub fn laplacian_2d(side: usize) -> Self {
        let n = side * side;
        let mut t = Vec::with_capacity(5 * n);
        for r in 0..side {
            for c in 0..side {
                let i = r * side + c;
                t.push((i, i, 4.0));
                if r > 0 {
                    t.push((i, i - side, -1.0));
                }
                if r + 1 < side {
                    t.push((i, i + side, -1.0));
                }
                if c > 0 {
                    t.push((i, i - 1, -1.0));
                }
                if c + 1 < side {
                    t.push((i, i + 1, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, &t).expect("grid pattern is valid")
    }

    /// Converts a dense row-major matrix, dropping exact zeros off the diagonal.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self, SparseError> {
        if dense.len() != n * n {
            return Err(SparseError::DimensionMismatch { expected: n * n, got: dense.len() });
        }
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = dense[i * n + j];
                if v != 0.0 || i == j {
                    t.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|p| vals[p])
    }

    /// Diagonal entries; missing entries read as zero.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i).unwrap_or(0.0)).collect()
    }

    /// Rows whose diagonal entry is not stored.
    pub fn missing_diagonal(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.get(i, i).is_none()).collect()
    }

    /// Fails unless every diagonal entry is stored and strictly positive.
    pub fn check_positive_diagonal(&self) -> Result<(), SparseError> {
        for i in 0..self.n {
            match self.get(i, i) {
                None => return Err(SparseError::MissingDiagonal(i)),
                Some(v) if v <= 0.0 => return Err(SparseError::NonPositiveDiagonal { row: i, value: v }),
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Exact structural and numerical symmetry.
    pub fn check_symmetric(&self) -> Result<(), SparseError> {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if self.get(j, i) != Some(v) {
                    return Err(SparseError::Asymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    /// `A + alpha I`; the diagonal pattern is added if absent.
    pub fn shifted(&self, alpha: f64) -> CsrMatrix {
        if alpha == 0.0 {
            return self.clone();
        }
        let mut t = self.triplets();
        t.extend((0..self.n).map(|i| (i, i, alpha)));
        CsrMatrix::from_triplets(self.n, &t).expect("shift keeps a valid pattern")
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            t.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        }
        t
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for (i, j, v) in self.triplets() {
            d[i * n + j] = v;
        }
        d
    }

    /// `out = A v`, summing each row in ascending column order.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), SparseError> {
        if v.len() != self.n {
            return Err(SparseError::DimensionMismatch { expected: self.n, got: v.len() });
        }
        if out.len() != self.n {
            return Err(SparseError::DimensionMismatch { expected: self.n, got: out.len() });
        }
        for (i, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut s = 0.0;
            for p in lo..hi {
                s += self.values[p] * v[self.col_indices[p]];
            }
            *o = s;
        }
        Ok(())
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    /// `Aᵀ v` by scattering rows; used to check symmetry of the operator.
    pub fn matvec_transpose(&self, v: &[f64]) -> Result<Vec<f64>, SparseError> {
        if v.len() != self.n {
            return Err(SparseError::DimensionMismatch { expected: self.n, got: v.len() });
        }
        let mut out = vec![0.0; self.n];
        for (i, vi) in v.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                out[j] += a * vi;
            }
        }
        Ok(out)
    }
}
