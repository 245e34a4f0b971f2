//! Incremental tracking of the smallest Ritz value from CG coefficients.

use crate::solver::IterationEvent;

use super::EstimatorError;

/// Scalar state of the incremental recurrences after iteration `k`.
///
/// `rho` is an incremental estimate of the largest eigenvalue of the inverse
/// Jacobi matrix from below, so `mu = 1 / rho` approximates the smallest
/// Ritz value from above.
#[derive(Debug, Clone, PartialEq)]
pub struct RitzState {
    pub k: usize,
    pub rho: f64,
    /// `τ_k` of the recurrences, unrelated to the accuracy tolerance.
    pub tau_inc: f64,
    pub sigma: f64,
    pub s: f64,
    pub c: f64,
    pub chi: f64,
    pub mu: f64,
    pub pi: f64,
    gamma_prev: f64,
    beta_pending: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl RitzState {
    /// Initial values from iteration 0: `ρ_0 = τ_0 = γ_0`, `σ_0 = s_0 = 0`,
    /// `c_0 = π_0 = 1`.
    pub fn start(event: &IterationEvent) -> Result<Self, EstimatorError> {
        if event.k != 0 {
            return Err(EstimatorError::OutOfOrder { expected: 0, got: event.k });
        }
        let rho = event.gamma;
        Ok(Self {
            k: 0,
            rho,
            tau_inc: rho,
            sigma: 0.0,
            s: 0.0,
            c: 1.0,
            chi: 0.0,
            mu: 1.0 / rho,
            pi: 1.0,
            gamma_prev: event.gamma,
            beta_pending: event.beta_next,
        })
    }

    /// Advances to iteration `k = self.k + 1` using `β_k` from the previous
    /// event and `γ_{k-1}`, `γ_k`.
    pub fn update(&mut self, event: &IterationEvent) -> Result<(), EstimatorError> {
        if event.k != self.k + 1 {
            return Err(EstimatorError::OutOfOrder { expected: self.k + 1, got: event.k });
        }
        let beta = self.beta_pending;
        let g_prev = self.gamma_prev;
        let g = event.gamma;

        let sigma = -(g * beta / g_prev).sqrt() * (self.s * self.sigma + self.c * self.tau_inc);
        let tau_inc = g * (beta * self.tau_inc / g_prev + 1.0);
        let gap = self.rho - tau_inc;
        let chi = (gap * gap + 4.0 * sigma * sigma).sqrt();
        let c2 = if chi == 0.0 { 0.5 } else { (0.5 * (1.0 - gap / chi)).clamp(0.0, 1.0) };
        let rho = self.rho + chi * c2;

        self.k = event.k;
        self.sigma = sigma;
        self.tau_inc = tau_inc;
        self.chi = chi;
        self.rho = rho;
        self.s = (1.0 - c2).sqrt();
        self.c = c2.sqrt() * sign(sigma);
        self.mu = 1.0 / rho;
        self.pi = self.pi / (self.pi + beta);
        self.gamma_prev = g;
        self.beta_pending = event.beta_next;
        Ok(())
    }

    /// `φ_k = (π_k / μ_k) · z_kᵀr_k` for the event of the current iteration.
    pub fn phi(&self, event: &IterationEvent) -> f64 {
        debug_assert_eq!(event.k, self.k);
        self.pi / self.mu * event.rz
    }
}

/// Ritz tracking over a whole run, starting or updating as events arrive.
#[derive(Debug, Clone, Default)]
pub struct RitzTracker {
    state: Option<RitzState>,
}

impl RitzTracker {
    /// Feeds one event and returns `(μ_k, φ_k)`.
    pub fn observe(&mut self, event: &IterationEvent) -> Result<(f64, f64), EstimatorError> {
        match &mut self.state {
            None => self.state = Some(RitzState::start(event)?),
            Some(st) => st.update(event)?,
        }
        let st = self.state.as_ref().expect("state set above");
        Ok((st.mu, st.phi(event)))
    }

    pub fn state(&self) -> Option<&RitzState> {
        self.state.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precond::Preconditioner;
    use crate::solver::{Init, SolverState};
    use crate::sparse::CsrMatrix;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn events(a: &CsrMatrix, b: &[f64], steps: usize) -> Vec<IterationEvent> {
        let m = Preconditioner::identity(a.n());
        let Init::Ready(mut st) = SolverState::init(a, b, &vec![0.0; a.n()], &m).unwrap() else {
            panic!("converged at start");
        };
        (0..steps).map(|_| st.step(a, &m).unwrap()).collect()
    }

    #[test]
    fn toy_system_values() {
        let a = CsrMatrix::from_diagonal(&[1.0, 3.0]);
        let ev = events(&a, &[1.0, 1.0], 2);
        let mut rs = RitzState::start(&ev[0]).unwrap();
        assert_eq!(rs.mu, 2.0);
        assert_eq!(rs.phi(&ev[0]), 1.0);
        rs.update(&ev[1]).unwrap();
        assert!((rs.mu - 1.0).abs() < 1e-14);
        assert!((rs.pi - 0.8).abs() < 1e-15);
        assert!((rs.phi(&ev[1]) - 0.4).abs() < 1e-14);
        assert!((rs.chi - 2.0 / 3.0).abs() < 1e-15);
        assert!((rs.tau_inc - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_gives_zero_phi() {
        let a = CsrMatrix::from_diagonal(&[2.0]);
        let ev = events(&a, &[1.0], 1);
        let rs = RitzState::start(&ev[0]).unwrap();
        let last = IterationEvent { rz: 0.0, ..ev[0] };
        assert_eq!(rs.phi(&last), 0.0);
    }

    #[test]
    fn bounds_smallest_ritz_value_from_above() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * i as f64 + 0.01 * (i * i) as f64).collect();
        let a = CsrMatrix::from_diagonal(&diag);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i % 7) as f64).collect();
        let ev = events(&a, &b, 12);
        let mut tr = RitzTracker::default();
        let mut prev_mu = f64::INFINITY;
        for k in 0..ev.len() {
            let (mu, _) = tr.observe(&ev[k]).unwrap();
            // Jacobi matrix of the Lanczos process from the CG coefficients
            let t = jacobi_matrix(&ev[..=k]);
            let lam = SymmetricEigen::new(t).eigenvalues.min();
            // an estimate from above, exact for the first two steps
            assert!(mu >= lam * (1.0 - 1e-12), "k={k} mu={mu} lam={lam}");
            if k <= 1 {
                assert!((mu - lam).abs() <= 1e-12 * lam);
            }
            assert!(mu <= prev_mu * (1.0 + 1e-14));
            prev_mu = mu;
        }
    }

    fn jacobi_matrix(ev: &[IterationEvent]) -> DMatrix<f64> {
        let n = ev.len();
        let mut t = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = 1.0 / ev[j].gamma;
            if j > 0 {
                diag += ev[j - 1].beta_next / ev[j - 1].gamma;
            }
            t[(j, j)] = diag;
            if j + 1 < n {
                let off = ev[j].beta_next.sqrt() / ev[j].gamma;
                t[(j, j + 1)] = off;
                t[(j + 1, j)] = off;
            }
        }
        t
    }
}
