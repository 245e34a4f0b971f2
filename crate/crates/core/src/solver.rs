//! Hestenes–Stiefel CG and PCG, exposed one iteration at a time.
//!
//! Each call to [`SolverState::step`] performs one update and returns the
//! coefficients of the iteration it just completed as an [`IterationEvent`].
//! The error estimator consumes that stream; it never touches the vectors.

use thiserror::Error;

use crate::precond::{PrecondError, Preconditioner};
use crate::sparse::{CsrMatrix, SparseError};
use crate::vector::{axpy, dot, norm2_sq, xpby};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: matrix order {expected}, vector length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("iteration {k}: pᵀAp = {value:e} is not positive (loss of positive definiteness)")]
    NonPositiveCurvature { k: usize, value: f64 },
    #[error("iteration {k}: zᵀr = {value:e} is not positive (preconditioner is not SPD)")]
    NonPositiveRz { k: usize, value: f64 },
    #[error("preconditioner: {0}")]
    Precond(String),
}

impl From<SparseError> for SolverError {
    fn from(e: SparseError) -> Self {
        match e {
            SparseError::DimensionMismatch { expected, got } => SolverError::DimensionMismatch { expected, got },
            other => SolverError::Precond(other.to_string()),
        }
    }
}

impl From<PrecondError> for SolverError {
    fn from(e: PrecondError) -> Self {
        match e {
            PrecondError::DimensionMismatch { expected, got } => SolverError::DimensionMismatch { expected, got },
            other => SolverError::Precond(other.to_string()),
        }
    }
}

/// Coefficients of iteration `k`, taken before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationEvent {
    pub k: usize,
    /// `γ_k = z_kᵀr_k / p_kᵀAp_k`
    pub gamma: f64,
    /// `z_kᵀr_k` (equals `‖r_k‖²` without preconditioning)
    pub rz: f64,
    /// `‖r_k‖²`
    pub rnorm2: f64,
    /// `‖p_k‖²`
    pub pnorm2: f64,
    /// `β_{k+1} = z_{k+1}ᵀr_{k+1} / z_kᵀr_k`
    pub beta_next: f64,
}

impl IterationEvent {
    /// The Hestenes–Stiefel term `γ_k · z_kᵀr_k`.
    pub fn term(&self) -> f64 {
        self.gamma * self.rz
    }
}

/// Iterate bundle of (P)CG. Vectors are for iteration `k`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: usize,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    /// `M⁻¹ r`; aliased to `r` (left empty) when the preconditioner is the identity.
    z: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub rz: f64,
    pub p_ap: f64,
    ap: Vec<f64>,
    identity: bool,
}

#[derive(Debug, Clone)]
pub enum Init {
    Ready(SolverState),
    /// `r_0 = 0`: `x0` already solves the system.
    AlreadyConverged,
}

impl SolverState {
    /// `r_0 = b - A x_0`, `z_0 = M⁻¹ r_0`, `p_0 = z_0`.
    pub fn init(a: &CsrMatrix, b: &[f64], x0: &[f64], precond: &Preconditioner) -> Result<Init, SolverError> {
        let n = a.n();
        for (len, _) in [(b.len(), "b"), (x0.len(), "x0")] {
            if len != n {
                return Err(SolverError::DimensionMismatch { expected: n, got: len });
            }
        }
        if precond.n() != n {
            return Err(SolverError::DimensionMismatch { expected: n, got: precond.n() });
        }
        if !crate::vector::all_finite(b) {
            return Err(SolverError::NonFinite("b"));
        }
        if !crate::vector::all_finite(x0) {
            return Err(SolverError::NonFinite("x0"));
        }
        let mut r = a.matvec(x0)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        if r.iter().all(|&v| v == 0.0) {
            return Ok(Init::AlreadyConverged);
        }
        let identity = matches!(precond, Preconditioner::Identity { .. });
        let (z, rz) = if identity {
            (Vec::new(), norm2_sq(&r))
        } else {
            let z = precond.apply(&r)?;
            let rz = dot(&z, &r);
            (z, rz)
        };
        if !(rz > 0.0) || !rz.is_finite() {
            return Err(SolverError::NonPositiveRz { k: 0, value: rz });
        }
        let p = if identity { r.clone() } else { z.clone() };
        Ok(Init::Ready(SolverState {
            k: 0,
            x: x0.to_vec(),
            r,
            p,
            z,
            gamma: f64::NAN,
            beta: f64::NAN,
            rz,
            p_ap: f64::NAN,
            ap: vec![0.0; n],
            identity,
        }))
    }

    /// Preconditioned residual `z_k`.
    pub fn z(&self) -> &[f64] {
        if self.identity {
            &self.r
        } else {
            &self.z
        }
    }

    /// One (P)CG iteration. On error the state is left unchanged except for
    /// the scratch product `A p_k`.
    pub fn step(&mut self, a: &CsrMatrix, precond: &Preconditioner) -> Result<IterationEvent, SolverError> {
        let k = self.k;
        a.matvec_into(&self.p, &mut self.ap)?;
        let p_ap = dot(&self.p, &self.ap);
        if !(p_ap > 0.0) || !p_ap.is_finite() {
            return Err(SolverError::NonPositiveCurvature { k, value: p_ap });
        }
        let rz = self.rz;
        let gamma = rz / p_ap;
        let rnorm2 = if self.identity { rz } else { norm2_sq(&self.r) };
        let pnorm2 = norm2_sq(&self.p);

        axpy(gamma, &self.p, &mut self.x);
        axpy(-gamma, &self.ap, &mut self.r);
        let rz_next = if self.identity {
            norm2_sq(&self.r)
        } else {
            precond.apply_into(&self.r, &mut self.z)?;
            dot(&self.z, &self.r)
        };
        let beta = rz_next / rz;
        if self.identity {
            xpby(&self.r, beta, &mut self.p);
        } else {
            xpby(&self.z, beta, &mut self.p);
        }

        self.gamma = gamma;
        self.beta = beta;
        self.p_ap = p_ap;
        self.rz = rz_next;
        self.k = k + 1;

        Ok(IterationEvent { k, gamma, rz, rnorm2, pnorm2, beta_next: beta })
    }
}

/// Observer decision after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Receives every iteration event together with the updated state
/// (`state.k == event.k + 1`).
pub trait IterationObserver {
    fn observe(&mut self, event: &IterationEvent, state: &SolverState) -> Flow;
}

impl<F: FnMut(&IterationEvent, &SolverState) -> Flow> IterationObserver for F {
    fn observe(&mut self, event: &IterationEvent, state: &SolverState) -> Flow {
        self(event, state)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Controls {
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// The observer asked to stop.
    Observer,
    /// `‖r‖² < (machine epsilon)² ‖b‖²`; also covers a zero initial residual.
    ResidualExhausted,
    MaxIter,
    Breakdown(SolverError),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Latest iterate `x_k`.
    pub x: Vec<f64>,
    /// Number of completed iterations.
    pub iterations: usize,
    pub reason: StopReason,
    /// Final state, absent when `x0` was already the solution.
    pub state: Option<SolverState>,
}

/// Drives (P)CG, forwarding each event to `observer`.
pub fn run(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    precond: &Preconditioner,
    controls: Controls,
    observer: &mut dyn IterationObserver,
) -> Result<RunOutcome, SolverError> {
    let mut state = match SolverState::init(a, b, x0, precond)? {
        Init::Ready(s) => s,
        Init::AlreadyConverged => {
            return Ok(RunOutcome { x: x0.to_vec(), iterations: 0, reason: StopReason::ResidualExhausted, state: None })
        }
    };
    let floor = f64::EPSILON * f64::EPSILON * norm2_sq(b);
    let reason = loop {
        if state.k >= controls.max_iter {
            break StopReason::MaxIter;
        }
        let event = match state.step(a, precond) {
            Ok(ev) => ev,
            Err(e) => break StopReason::Breakdown(e),
        };
        if observer.observe(&event, &state) == Flow::Stop {
            break StopReason::Observer;
        }
        if norm2_sq(&state.r) < floor || state.rz == 0.0 {
            break StopReason::ResidualExhausted;
        }
    };
    Ok(RunOutcome { x: state.x.clone(), iterations: state.k, reason, state: Some(state) })
}
