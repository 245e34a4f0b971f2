//! Error estimation for CG and PCG in the energy norm.
//!
//! The squared A-norm error `ε_k = ‖x - x_k‖²_A` satisfies
//! `ε_k = Δ_{k:k+d} + ε_{k+d+1}` with `Δ_{k:k+d} = Σ_{j=k}^{k+d} γ_j z_jᵀr_j`,
//! so sums of future terms give lower bounds on past errors. The adaptive
//! controller picks the delay `d` per iteration so that the relative error
//! of the bound stays below `τ`.

mod adaptive;
mod history;
mod radau;
mod ritz;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::solver::IterationEvent;
use crate::vector::dot;

pub use adaptive::{heuristic_upper, ideal_ratio_check, AcceptedEstimate, AdaptiveState};
pub use history::TermHistory;
pub use radau::{gauss_radau_next, GaussRadauState};
pub use ritz::{RitzState, RitzTracker};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("term {k} is not positive ({term:e}); breakdown or loss of accuracy")]
    NonPositiveTerm { k: usize, term: f64 },
    #[error("window {a}..={b} out of range for {len} terms")]
    RangeOutOfBounds { a: usize, b: usize, len: usize },
    #[error(
        "Gauss-Radau recurrence failed at iteration {k} (value {value:e}); the node exceeds the smallest eigenvalue"
    )]
    RadauBreakdown { k: usize, value: f64 },
    #[error("expected iteration {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Accuracy tolerance `τ` in (0, 1).
    pub tau: f64,
    /// Tolerance for the start of the safety-factor window.
    pub window_tol: f64,
    /// Smallest delay at which estimates may be accepted.
    pub d_min: usize,
    /// Delay the first acceptance until `φ_d / Δ_{0:d} < τ`.
    pub initial_phase: bool,
    /// Gauss–Radau node; should not exceed the smallest eigenvalue of the
    /// (preconditioned) operator.
    pub mu: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { tau: 0.25, window_tol: 1e-4, d_min: 0, initial_phase: false, mu: None }
    }
}

/// Per-iteration quantities that do not depend on acceptance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSample {
    pub term: f64,
    pub mu_k: f64,
    pub phi_k: f64,
    pub omega_k: Option<f64>,
}

/// Drives all estimators from the stream of CG iteration events.
#[derive(Debug, Clone)]
pub struct ErrorEstimator {
    config: EstimatorConfig,
    history: TermHistory,
    control: AdaptiveState,
    in_initial_phase: bool,
    ritz: RitzTracker,
    radau: Option<GaussRadauState>,
    radau_error: Option<EstimatorError>,
    samples: Vec<IterationSample>,
    accepted: Vec<AcceptedEstimate>,
}

impl ErrorEstimator {
    pub fn new(config: EstimatorConfig) -> Result<Self, EstimatorError> {
        let control = AdaptiveState::new(config.tau, config.window_tol, config.d_min)?;
        let radau = config.mu.map(GaussRadauState::new).transpose()?;
        Ok(Self {
            in_initial_phase: config.initial_phase,
            config,
            history: TermHistory::new(),
            control,
            ritz: RitzTracker::default(),
            radau,
            radau_error: None,
            samples: Vec::new(),
            accepted: Vec::new(),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn history(&self) -> &TermHistory {
        &self.history
    }

    pub fn control(&self) -> &AdaptiveState {
        &self.control
    }

    pub fn samples(&self) -> &[IterationSample] {
        &self.samples
    }

    pub fn accepted(&self) -> &[AcceptedEstimate] {
        &self.accepted
    }

    pub fn latest(&self) -> Option<&AcceptedEstimate> {
        self.accepted.last()
    }

    pub fn in_initial_phase(&self) -> bool {
        self.in_initial_phase
    }

    /// The error that disabled the Gauss–Radau bounds, if any.
    pub fn radau_error(&self) -> Option<&EstimatorError> {
        self.radau_error.as_ref()
    }

    /// Consumes the event of iteration `ℓ` and returns the number of
    /// estimates accepted as a result (they are appended to `accepted()`).
    pub fn observe(&mut self, event: &IterationEvent) -> Result<usize, EstimatorError> {
        let ell = event.k;
        let term = self.history.push_term(event)?;
        let (mu_k, phi_k) = self.ritz.observe(event)?;
        let omega_k = self.observe_radau(event);
        self.samples.push(IterationSample { term, mu_k, phi_k, omega_k });

        let batch = if self.in_initial_phase {
            if self.control.initial_phase_step(&self.history, phi_k) {
                self.in_initial_phase = false;
            }
            Vec::new()
        } else if ell > 0 {
            self.control.adaptive_step(&self.history, ell)
        } else {
            Vec::new()
        };
        Ok(self.record(batch))
    }

    /// Accepts all pending iterations after the residual vanished.
    pub fn finalize_exhausted(&mut self) -> usize {
        self.in_initial_phase = false;
        let batch = self.control.finalize_exhausted(&self.history);
        self.record(batch)
    }

    fn observe_radau(&mut self, event: &IterationEvent) -> Option<f64> {
        let gr = self.radau.as_mut()?;
        match gr.observe(event) {
            Ok(w) => Some(w),
            Err(e) => {
                // on a recurrence failure ω_k itself was already recorded
                let w = gr.omega(event.k);
                self.radau_error = Some(e);
                self.radau = None;
                w
            }
        }
    }

    fn record(&mut self, batch: Vec<AcceptedEstimate>) -> usize {
        let count = batch.len();
        for mut est in batch {
            est.omega = self.omega_bound(est.k, est.d_used);
            self.accepted.push(est);
        }
        count
    }

    /// `Ω_{k:k+d}` from the recorded `ω` values, if available.
    pub fn omega_bound(&self, k: usize, d: usize) -> Option<f64> {
        let last = self.samples.get(k + d)?.omega_k?;
        if d == 0 {
            return Some(last);
        }
        Some(self.history.delta(k, k + d - 1) + last)
    }
}

/// Lower estimate of `‖x‖²_A` from `‖x‖²_A = ‖x - x_0‖²_A + bᵀx_0 + r_0ᵀx_0`,
/// with the first term replaced by `Δ_{0:ℓ}`. The raw value is returned even
/// when negative.
pub fn xnorm_a_estimate(h: &TermHistory, ell: usize, b: &[f64], x0: &[f64], r0: &[f64]) -> Result<f64, EstimatorError> {
    Ok(h.delta_range(0, ell)? + dot(b, x0) + dot(r0, x0))
}

/// When to stop iterating, judged on the latest accepted estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StopPolicy {
    /// Run until the residual vanishes or the iteration cap is reached.
    #[default]
    Never,
    /// Stop when `sqrt(Δ / (1 - τ)) <= threshold`.
    Absolute(f64),
    /// Stop when `(Δ / (1 - τ)) / ‖x‖²_A <= threshold²`.
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    Absolute,
    Relative,
}

impl FromStr for StopKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "absolute" => Ok(StopKind::Absolute),
            "relative" => Ok(StopKind::Relative),
            other => Err(format!("unknown stopping policy '{other}' (expected absolute or relative)")),
        }
    }
}

impl fmt::Display for StopKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopKind::Absolute => "absolute",
            StopKind::Relative => "relative",
        })
    }
}

impl StopPolicy {
    pub fn new(kind: StopKind, threshold: f64) -> Self {
        match kind {
            StopKind::Absolute => StopPolicy::Absolute(threshold),
            StopKind::Relative => StopPolicy::Relative(threshold),
        }
    }
}

/// Whether `est` meets the policy; `xnorm_a` is needed only for the
/// relative policy, and a nonpositive value never triggers a stop.
pub fn stop_decision(est: Option<&AcceptedEstimate>, policy: StopPolicy, xnorm_a: f64) -> bool {
    let Some(est) = est else {
        return false;
    };
    match policy {
        StopPolicy::Never => false,
        StopPolicy::Absolute(thr) => est.upper_heuristic.sqrt() <= thr,
        StopPolicy::Relative(thr) => xnorm_a > 0.0 && est.upper_heuristic / xnorm_a <= thr * thr,
    }
}
