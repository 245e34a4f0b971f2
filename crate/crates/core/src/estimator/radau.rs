//! Gauss–Radau upper bounds with a prescribed node `μ`.

use crate::solver::IterationEvent;

use super::history::TermHistory;
use super::EstimatorError;

/// Modified coefficient `γ_j^{(μ)}` and the bounds `ω_j = γ_j^{(μ)} z_jᵀr_j`.
#[derive(Debug, Clone)]
pub struct GaussRadauState {
    pub mu_fixed: f64,
    /// `γ_j^{(μ)}` for the next iteration to observe.
    pub gamma_mu: f64,
    omegas: Vec<f64>,
}

/// `γ_{j+1}^{(μ)} = (γ_j^{(μ)} - γ_j) / (μ (γ_j^{(μ)} - γ_j) + β_{j+1})`.
///
/// A nonpositive denominator or negative result means `μ` exceeds the
/// smallest eigenvalue (or rounding has taken over) and is reported as an
/// error for iteration `k`.
pub fn gauss_radau_next(mu: f64, gamma_mu: f64, gamma: f64, beta_next: f64, k: usize) -> Result<f64, EstimatorError> {
    let gap = gamma_mu - gamma;
    let denominator = mu * gap + beta_next;
    if denominator == 0.0 && gap == 0.0 {
        // exact node at termination: r = 0 and nothing left to bound
        return Ok(0.0);
    }
    if !(denominator > 0.0) {
        return Err(EstimatorError::RadauBreakdown { k, value: denominator });
    }
    let next = gap / denominator;
    if !(next >= 0.0) || !next.is_finite() {
        return Err(EstimatorError::RadauBreakdown { k, value: next });
    }
    Ok(next)
}

impl GaussRadauState {
    pub fn new(mu: f64) -> Result<Self, EstimatorError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(EstimatorError::InvalidConfig(format!("Gauss-Radau node must be positive, got {mu}")));
        }
        Ok(Self { mu_fixed: mu, gamma_mu: 1.0 / mu, omegas: Vec::new() })
    }

    /// Records `ω_k` for the event and advances the modified coefficient.
    pub fn observe(&mut self, event: &IterationEvent) -> Result<f64, EstimatorError> {
        if event.k != self.omegas.len() {
            return Err(EstimatorError::OutOfOrder { expected: self.omegas.len(), got: event.k });
        }
        let omega = self.gamma_mu * event.rz;
        self.omegas.push(omega);
        self.gamma_mu = gauss_radau_next(self.mu_fixed, self.gamma_mu, event.gamma, event.beta_next, event.k)?;
        Ok(omega)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn omega(&self, j: usize) -> Option<f64> {
        self.omegas.get(j).copied()
    }

    /// `Ω_{k:k+d} = Δ_{k:k+d-1} + ω_{k+d}`, or `ω_k` when `d = 0`.
    pub fn omega_bound(&self, h: &TermHistory, k: usize, d: usize) -> Option<f64> {
        let last = self.omega(k + d)?;
        if d == 0 {
            return Some(last);
        }
        Some(h.delta_range(k, k + d - 1).ok()? + last)
    }
}
