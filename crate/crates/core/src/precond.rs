//! Preconditioners `M = L Lᵀ` for PCG.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::sparse::{CsrMatrix, SparseError};

#[derive(Debug, Error)]
pub enum PrecondError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("incomplete Cholesky breakdown: pivot {pivot:e} in row {row}")]
    Breakdown { row: usize, pivot: f64 },
    #[error("dimension mismatch: preconditioner has order {expected}, vector has length {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    Identity,
    Jacobi,
    Ic0,
}

impl FromStr for PrecondKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "identity" => Ok(PrecondKind::Identity),
            "jacobi" => Ok(PrecondKind::Jacobi),
            "ic0" => Ok(PrecondKind::Ic0),
            other => Err(format!("unknown preconditioner '{other}' (none, jacobi, ic0)")),
        }
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecondKind::Identity => "none",
            PrecondKind::Jacobi => "jacobi",
            PrecondKind::Ic0 => "ic0",
        })
    }
}

/// Lower-triangular factor in CSR form; the diagonal is the last entry of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl LowerFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.values[self.row_offsets[i + 1] - 1]
    }

    /// Solves `L y = r` in place.
    pub fn forward_solve(&self, y: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let last = cols.len() - 1;
            let mut s = y[i];
            for p in 0..last {
                s -= vals[p] * y[cols[p]];
            }
            y[i] = s / vals[last];
        }
    }

    /// Solves `Lᵀ z = y` in place, sweeping rows of `L` from the bottom.
    pub fn backward_solve(&self, z: &mut [f64]) {
        for i in (0..self.n).rev() {
            let (cols, vals) = self.row(i);
            let last = cols.len() - 1;
            let zi = z[i] / vals[last];
            z[i] = zi;
            for p in 0..last {
                z[cols[p]] -= vals[p] * zi;
            }
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[i * n + j] = v;
            }
        }
        d
    }

    /// `(L Lᵀ)_{ij}` by merging rows `i` and `j`.
    pub fn product_entry(&self, i: usize, j: usize) -> f64 {
        let (ci, vi) = self.row(i);
        let (cj, vj) = self.row(j);
        let (mut p, mut q, mut s) = (0, 0, 0.0);
        while p < ci.len() && q < cj.len() {
            match ci[p].cmp(&cj[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    s += vi[p] * vj[q];
                    p += 1;
                    q += 1;
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    Identity { n: usize },
    Jacobi { diag_inv: Vec<f64> },
    Ic0 { factor: LowerFactor },
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Preconditioner::Identity { n }
    }

    pub fn build(kind: PrecondKind, a: &CsrMatrix, shift: f64) -> Result<Self, PrecondError> {
        match kind {
            PrecondKind::Identity => Ok(Preconditioner::identity(a.n())),
            PrecondKind::Jacobi => build_jacobi(a),
            PrecondKind::Ic0 => build_ic0(a, shift),
        }
    }

    pub fn kind(&self) -> PrecondKind {
        match self {
            Preconditioner::Identity { .. } => PrecondKind::Identity,
            Preconditioner::Jacobi { .. } => PrecondKind::Jacobi,
            Preconditioner::Ic0 { .. } => PrecondKind::Ic0,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Preconditioner::Identity { n } => *n,
            Preconditioner::Jacobi { diag_inv } => diag_inv.len(),
            Preconditioner::Ic0 { factor } => factor.n(),
        }
    }

    /// `z = M⁻¹ r`.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<(), PrecondError> {
        let n = self.n();
        if r.len() != n || z.len() != n {
            return Err(PrecondError::DimensionMismatch { expected: n, got: r.len().min(z.len()) });
        }
        match self {
            Preconditioner::Identity { .. } => z.copy_from_slice(r),
            Preconditioner::Jacobi { diag_inv } => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(diag_inv) {
                    *zi = ri * di;
                }
            }
            Preconditioner::Ic0 { factor } => {
                z.copy_from_slice(r);
                factor.forward_solve(z);
                factor.backward_solve(z);
            }
        }
        Ok(())
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>, PrecondError> {
        let mut z = vec![0.0; r.len()];
        self.apply_into(r, &mut z)?;
        Ok(z)
    }
}

pub fn build_jacobi(a: &CsrMatrix) -> Result<Preconditioner, PrecondError> {
    a.check_positive_diagonal()?;
    Ok(Preconditioner::Jacobi { diag_inv: a.diagonal().iter().map(|d| 1.0 / d).collect() })
}

/// Zero-fill incomplete Cholesky of `A + shift·I` on the lower pattern of `A`.
///
/// Fails with the offending row on a nonpositive pivot; no automatic shifting.
pub fn build_ic0(a: &CsrMatrix, shift: f64) -> Result<Preconditioner, PrecondError> {
    let a = if shift != 0.0 { a.shifted(shift) } else { a.clone() };
    a.check_positive_diagonal()?;
    let n = a.n();

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    row_offsets.push(0);

    for i in 0..n {
        let (cols, vals) = a.row(i);
        let start = col_indices.len();
        for (&j, &aij) in cols.iter().zip(vals) {
            if j > i {
                break;
            }
            // s = a_ij - sum_{k<j} l_ik l_jk over the shared pattern
            let mut s = aij;
            let row_i_cols = &col_indices[start..];
            let row_i_vals = &values[start..];
            let (jlo, jhi) = if j < i { (row_offsets[j], row_offsets[j + 1] - 1) } else { (0, 0) };
            if j < i {
                let (mut p, mut q) = (0, jlo);
                while p < row_i_cols.len() && q < jhi {
                    match row_i_cols[p].cmp(&col_indices[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            s -= row_i_vals[p] * values[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                let ljj = values[jhi];
                col_indices.push(j);
                values.push(s / ljj);
            } else {
                for v in row_i_vals {
                    s -= v * v;
                }
                if !(s > 0.0) || !s.is_finite() {
                    return Err(PrecondError::Breakdown { row: i, pivot: s });
                }
                col_indices.push(i);
                values.push(s.sqrt());
            }
        }
        row_offsets.push(col_indices.len());
    }

    Ok(Preconditioner::Ic0 { factor: LowerFactor { n, row_offsets, col_indices, values } })
}
