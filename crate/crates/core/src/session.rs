//! One instrumented solve: (P)CG, the error estimator, an optional
//! stopping policy and optional ground truth.

use crate::estimator::{stop_decision, ErrorEstimator, EstimatorConfig, EstimatorError, StopPolicy};
use crate::oracle::TruthTracker;
use crate::precond::Preconditioner;
use crate::solver::{self, Controls, Flow, IterationEvent, SolverError, SolverState, StopReason};
use crate::sparse::CsrMatrix;
use crate::vector::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub estimator: EstimatorConfig,
    pub stop: StopPolicy,
    pub max_iter: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { estimator: EstimatorConfig::default(), stop: StopPolicy::Never, max_iter: 10_000 }
    }
}

/// Why a session ended.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionEnd {
    /// The stopping policy was met.
    Estimate,
    /// The residual vanished to working precision (or `x_0` solved the system).
    ResidualExhausted,
    MaxIter,
    Breakdown(SolverError),
    /// A term was not positive, so no further estimates can be formed.
    EstimatorFailure(EstimatorError),
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub end: SessionEnd,
    pub iterations: usize,
    pub x: Vec<f64>,
    pub estimator: ErrorEstimator,
    /// Index into `estimator.accepted()` of the estimate that met the policy.
    pub stop_estimate: Option<usize>,
    /// Latest estimate of `‖x‖²_A`.
    pub xnorm_a: f64,
    /// True errors `ε_0, ε_1, ...` of the iterates, when tracked.
    pub eps: Option<Vec<f64>>,
}

/// Runs a session. With `truth`, `ε_k` is recorded for `x_0` and every
/// iterate.
pub fn run_session(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    precond: &Preconditioner,
    config: &SessionConfig,
    mut truth: Option<&mut TruthTracker<'_>>,
) -> Result<SessionResult, SessionError> {
    let mut estimator = ErrorEstimator::new(config.estimator.clone())?;
    if b.len() != a.n() {
        return Err(SolverError::DimensionMismatch { expected: a.n(), got: b.len() }.into());
    }
    let r0: Vec<f64> = {
        let ax0 = a.matvec(x0).map_err(SolverError::from)?;
        b.iter().zip(&ax0).map(|(bi, ai)| bi - ai).collect()
    };
    let offset = dot(b, x0) + dot(&r0, x0);
    if let Some(t) = truth.as_deref_mut() {
        t.record(x0);
    }

    let mut failure: Option<EstimatorError> = None;
    let mut stop_estimate = None;
    let mut xnorm_a = offset;
    let stop = config.stop;
    let mut observer = |event: &IterationEvent, state: &SolverState| -> Flow {
        if let Some(t) = truth.as_deref_mut() {
            t.record(&state.x);
        }
        if let Err(e) = estimator.observe(event) {
            failure = Some(e);
            return Flow::Stop;
        }
        xnorm_a = estimator.history().delta(0, event.k) + offset;
        if stop_decision(estimator.latest(), stop, xnorm_a) {
            stop_estimate = Some(estimator.accepted().len() - 1);
            return Flow::Stop;
        }
        Flow::Continue
    };
    let outcome = solver::run(a, b, x0, precond, Controls { max_iter: config.max_iter }, &mut observer)?;

    let end = match outcome.reason {
        StopReason::Observer => match failure {
            Some(e) => SessionEnd::EstimatorFailure(e),
            None => SessionEnd::Estimate,
        },
        StopReason::ResidualExhausted => {
            estimator.finalize_exhausted();
            SessionEnd::ResidualExhausted
        }
        StopReason::MaxIter => SessionEnd::MaxIter,
        StopReason::Breakdown(e) => SessionEnd::Breakdown(e),
    };
    Ok(SessionResult {
        end,
        iterations: outcome.iterations,
        x: outcome.x,
        estimator,
        stop_estimate,
        xnorm_a,
        eps: truth.map(|t| t.eps().to_vec()),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}
