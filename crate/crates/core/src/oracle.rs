//! Ground truth for tests and experiments: dense solves, true A-norm errors,
//! ideal delays and extreme eigenvalues.
//!
//! Everything here is dense and `O(n³)`, guarded by a size cap (default
//! 5000, overridable through the `CGERR_ORACLE_CAP` environment variable).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::estimator::{ideal_ratio_check, AcceptedEstimate};
use crate::precond::Preconditioner;
use crate::sparse::CsrMatrix;
use crate::sum::{two_prod, CompensatedSum, DoubleWord};

pub const DEFAULT_CAP: usize = 5000;
pub const CAP_ENV: &str = "CGERR_ORACLE_CAP";

/// Iterations without a new minimum of `ε` that mark the ultimate level of
/// accuracy.
pub const PLATEAU_WINDOW: usize = 10;

/// Relative shift that turns the smallest eigenvalue into a safe node.
pub const MU_SAFETY: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("order {n} exceeds the oracle cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("matrix is not positive definite")]
    NotSpd,
    #[error("direct solve residual {rel:e} exceeds 1e-10")]
    Residual { rel: f64 },
    #[error("length {got} does not match order {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("estimate for iteration {k} has no matching true error")]
    Misaligned { k: usize },
}

/// Cap from `CGERR_ORACLE_CAP`, or [`DEFAULT_CAP`].
pub fn oracle_cap() -> usize {
    std::env::var(CAP_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_CAP)
}

fn check_cap(n: usize, cap: usize) -> Result<(), OracleError> {
    if n > cap {
        return Err(OracleError::TooLarge { n, cap });
    }
    Ok(())
}

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.n(), a.n(), &a.to_dense())
}

/// `Σ_j a_ij v_j` for row `i`, as a double-word value.
fn row_dot(a: &CsrMatrix, i: usize, v: &[f64]) -> DoubleWord {
    let (cols, vals) = a.row(i);
    let mut acc = CompensatedSum::new();
    for (&j, &aij) in cols.iter().zip(vals) {
        let (p, e) = two_prod(aij, v[j]);
        acc.add(p);
        acc.add(e);
    }
    acc.total()
}

/// Exact solution `x ≈ hi + lo` to about twice working precision.
#[derive(Debug, Clone)]
pub struct TrueSolution {
    pub hi: Vec<f64>,
    pub lo: Vec<f64>,
}

impl TrueSolution {
    pub fn x(&self) -> &[f64] {
        &self.hi
    }
}

/// Dense Cholesky solve of `A x = b` with iterative refinement on
/// double-word residuals.
pub fn refined_solve(a: &CsrMatrix, b: &[f64], cap: usize) -> Result<TrueSolution, OracleError> {
    let n = a.n();
    check_cap(n, cap)?;
    if b.len() != n {
        return Err(OracleError::DimensionMismatch { expected: n, got: b.len() });
    }
    let chol = Cholesky::new(dense(a)).ok_or(OracleError::NotSpd)?;
    let mut hi = chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec();
    let mut lo = vec![0.0; n];
    for _ in 0..4 {
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let ax = row_dot(a, i, &hi) + row_dot(a, i, &lo);
                (DoubleWord::new(b[i], 0.0) - ax).value()
            })
            .collect();
        let delta = chol.solve(&DVector::from_vec(r));
        for i in 0..n {
            let s = DoubleWord::new(hi[i], lo[i]).add_f64(delta[i]);
            hi[i] = s.hi;
            lo[i] = s.lo;
        }
    }
    let ax = a.matvec(&hi).expect("order checked");
    let bnorm = crate::vector::norm2(b);
    let res: f64 = ax.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt();
    let rel = if bnorm > 0.0 { res / bnorm } else { res };
    if !(rel <= 1e-10) {
        return Err(OracleError::Residual { rel });
    }
    Ok(TrueSolution { hi, lo })
}

/// `x = A⁻¹ b` by dense Cholesky; the relative residual must not exceed 1e-10.
pub fn direct_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, OracleError> {
    Ok(refined_solve(a, b, oracle_cap())?.hi)
}

/// `(x - x_k)ᵀ A (x - x_k)` with a single matvec in working precision.
pub fn true_error(a: &CsrMatrix, x_true: &[f64], x_k: &[f64]) -> f64 {
    let e: Vec<f64> = x_true.iter().zip(x_k).map(|(x, y)| x - y).collect();
    let ae = a.matvec(&e).expect("dimensions agree");
    crate::vector::dot(&e, &ae)
}

/// `(x - x_k)ᵀ A (x - x_k)` against a refined solution, with compensated
/// products, so that tiny errors keep their relative accuracy.
pub fn true_error_refined(a: &CsrMatrix, x: &TrueSolution, x_k: &[f64]) -> f64 {
    let e: Vec<f64> = (0..x_k.len()).map(|i| (x.hi[i] - x_k[i]) + x.lo[i]).collect();
    let mut acc = CompensatedSum::new();
    for i in 0..e.len() {
        let ae = row_dot(a, i, &e);
        let (p, err) = two_prod(e[i], ae.hi);
        acc.add(p);
        acc.add(err);
        acc.add(e[i] * ae.lo);
    }
    acc.value()
}

/// Records `ε_k` for successive iterates against a refined solution.
#[derive(Debug, Clone)]
pub struct TruthTracker<'a> {
    a: &'a CsrMatrix,
    x: TrueSolution,
    eps: Vec<f64>,
}

impl<'a> TruthTracker<'a> {
    pub fn new(a: &'a CsrMatrix, b: &[f64], cap: usize) -> Result<Self, OracleError> {
        Ok(Self { a, x: refined_solve(a, b, cap)?, eps: Vec::new() })
    }

    pub fn record(&mut self, x_k: &[f64]) -> f64 {
        let e = true_error_refined(self.a, &self.x, x_k);
        self.eps.push(e);
        e
    }

    pub fn solution(&self) -> &TrueSolution {
        &self.x
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn into_eps(self) -> Vec<f64> {
        self.eps
    }
}

/// First index of the finite-precision plateau: the first `k` such that
/// none of the next [`PLATEAU_WINDOW`] recorded errors is smaller than
/// `ε_k`. Returns `eps.len()` when the errors keep decreasing to the end.
pub fn ultimate_index(eps: &[f64]) -> usize {
    for k in 0..eps.len().saturating_sub(1) {
        let end = (k + PLATEAU_WINDOW).min(eps.len() - 1);
        if eps[k + 1..=end].iter().all(|&e| e >= eps[k]) {
            return k;
        }
    }
    eps.len()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `λ_min / (1 + 1e-4)`, a node safely below the spectrum.
    pub mu: f64,
}

impl Extremes {
    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Dense operator whose spectrum governs (P)CG: `A` itself, or
/// `L⁻¹ A L⁻ᵀ` for `M = L Lᵀ`.
pub fn preconditioned_operator(a: &CsrMatrix, precond: &Preconditioner) -> DMatrix<f64> {
    let mut op = dense(a);
    match precond {
        Preconditioner::Identity { .. } => {}
        Preconditioner::Jacobi { diag_inv } => {
            let s: Vec<f64> = diag_inv.iter().map(|d| d.sqrt()).collect();
            for i in 0..op.nrows() {
                for j in 0..op.ncols() {
                    op[(i, j)] *= s[i] * s[j];
                }
            }
        }
        Preconditioner::Ic0 { factor } => {
            let n = factor.n();
            let l = DMatrix::from_row_slice(n, n, &factor.to_dense());
            // L⁻¹ A, then (L⁻¹ (L⁻¹ A)ᵀ)ᵀ = L⁻¹ A L⁻ᵀ
            let left = l.solve_lower_triangular(&op).expect("nonzero diagonal");
            let both = l.solve_lower_triangular(&left.transpose()).expect("nonzero diagonal");
            op = both.transpose();
            op = (&op + op.transpose()) * 0.5;
        }
    }
    op
}

fn rayleigh(op: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut num = CompensatedSum::new();
    for i in 0..n {
        let mut row = CompensatedSum::new();
        for j in 0..n {
            let (p, e) = two_prod(op[(i, j)], v[j]);
            row.add(p);
            row.add(e);
        }
        let (p, e) = two_prod(v[i], row.value());
        num.add(p);
        num.add(e);
    }
    num.value() / crate::sum::dot_compensated(v, v)
}

/// Extreme eigenvalues of the (preconditioned) operator from a dense
/// symmetric eigensolver, sharpened by compensated Rayleigh quotients.
pub fn eig_extremes(a: &CsrMatrix, precond: &Preconditioner, cap: usize) -> Result<Extremes, OracleError> {
    check_cap(a.n(), cap)?;
    let op = preconditioned_operator(a, precond);
    let eig = SymmetricEigen::new(op.clone());
    let (imin, _) = eig.eigenvalues.argmin();
    let (imax, _) = eig.eigenvalues.argmax();
    let vmin: Vec<f64> = eig.eigenvectors.column(imin).iter().copied().collect();
    let vmax: Vec<f64> = eig.eigenvectors.column(imax).iter().copied().collect();
    let lambda_min = rayleigh(&op, &vmin);
    let lambda_max = rayleigh(&op, &vmax);
    if !(lambda_min > 0.0) {
        return Err(OracleError::NotSpd);
    }
    Ok(Extremes { lambda_min, lambda_max, mu: lambda_min / (1.0 + MU_SAFETY) })
}

/// True errors of a run with the plateau index and spectral extremes.
#[derive(Debug, Clone)]
pub struct TruthTrace {
    pub eps: Vec<f64>,
    pub eps_anorm: Vec<f64>,
    pub ultimate_index: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
}

impl TruthTrace {
    pub fn new(eps: Vec<f64>, extremes: Extremes) -> Self {
        Self {
            eps_anorm: eps.iter().map(|e| e.max(0.0).sqrt()).collect(),
            ultimate_index: ultimate_index(&eps),
            eps,
            lambda_min: extremes.lambda_min,
            lambda_max: extremes.lambda_max,
            kappa: extremes.kappa(),
        }
    }

    /// `ε_k` for `k` strictly before the plateau.
    pub fn eps_before_plateau(&self, k: usize) -> Option<f64> {
        (k < self.ultimate_index).then(|| self.eps[k])
    }

    /// Smallest `d` with `ε_{k+d+1} / ε_k <= τ`, using only errors before
    /// the plateau; `None` when no such `d` exists.
    pub fn ideal_delay(&self, k: usize, tau: f64) -> Option<usize> {
        ideal_delay(&self.eps, self.ultimate_index, k, tau)
    }
}

/// Ideal delay on a raw error sequence with a given plateau index.
pub fn ideal_delay(eps: &[f64], ultimate: usize, k: usize, tau: f64) -> Option<usize> {
    if k >= ultimate {
        return None;
    }
    (k + 1..ultimate.min(eps.len())).find(|&j| ideal_ratio_check(eps[k], eps[j], tau)).map(|j| j - k - 1)
}

/// Per-iteration comparison of accepted estimates with the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityRow {
    pub k: usize,
    pub d: usize,
    pub ideal_d: Option<usize>,
    pub eps: f64,
    /// `(ε_k - Δ_{k:k+d}) / ε_k`.
    pub rel_err_lower: f64,
    /// `(Δ_{k:k+d} / (1 - τ) - ε_k) / ε_k`.
    pub rel_err_upper: f64,
    /// `(Ω_{k:k+d} - ε_k) / ε_k`.
    pub rel_err_omega: Option<f64>,
    pub before_plateau: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualitySummary {
    pub rows: Vec<QualityRow>,
    /// Rows before the plateau with `ε_k > 0`.
    pub counted: usize,
    /// Fraction of counted rows with relative error at most `τ`.
    pub fraction_within_tau: f64,
    /// Fraction of counted rows whose estimate is within a factor 10 of `ε_k`.
    pub fraction_same_magnitude: f64,
    pub median_rel_err: f64,
    pub max_rel_err: f64,
    /// Fraction of rows with a defined ideal delay and `d̃ <= d <= d̃ + 5`.
    pub fraction_tracking: f64,
}

pub fn relative_error(eps: f64, estimate: f64) -> f64 {
    (eps - estimate) / eps
}

/// Compares estimates with `trace`; rows follow the estimates' order.
pub fn bound_quality(
    trace: &TruthTrace,
    accepted: &[AcceptedEstimate],
    tau: f64,
) -> Result<QualitySummary, OracleError> {
    let mut rows = Vec::with_capacity(accepted.len());
    for est in accepted {
        let eps = *trace.eps.get(est.k).ok_or(OracleError::Misaligned { k: est.k })?;
        rows.push(QualityRow {
            k: est.k,
            d: est.d_used,
            ideal_d: trace.ideal_delay(est.k, tau),
            eps,
            rel_err_lower: relative_error(eps, est.delta),
            rel_err_upper: (est.upper_heuristic - eps) / eps,
            rel_err_omega: est.omega.map(|w| (w - eps) / eps),
            before_plateau: est.k < trace.ultimate_index && eps > 0.0,
        });
    }
    let counted: Vec<&QualityRow> = rows.iter().filter(|r| r.before_plateau).collect();
    let frac = |pred: &dyn Fn(&QualityRow) -> bool, pool: &[&QualityRow]| {
        if pool.is_empty() {
            1.0
        } else {
            pool.iter().filter(|r| pred(r)).count() as f64 / pool.len() as f64
        }
    };
    let mut errs: Vec<f64> = counted.iter().map(|r| r.rel_err_lower).collect();
    errs.sort_by(f64::total_cmp);
    let tracked: Vec<&QualityRow> = counted.iter().copied().filter(|r| r.ideal_d.is_some()).collect();
    Ok(QualitySummary {
        counted: counted.len(),
        fraction_within_tau: frac(&|r| r.rel_err_lower <= tau, &counted),
        fraction_same_magnitude: frac(&|r| r.rel_err_lower <= 0.9, &counted),
        median_rel_err: errs.get(errs.len() / 2).copied().unwrap_or(0.0),
        max_rel_err: errs.last().copied().unwrap_or(0.0),
        fraction_tracking: frac(
            &|r| {
                let ideal = r.ideal_d.expect("filtered");
                ideal <= r.d && r.d <= ideal + 5
            },
            &tracked,
        ),
        rows,
    })
}
