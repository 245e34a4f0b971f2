//! Adaptive choice of the delay `d` and the optional initial phase.

use super::history::TermHistory;
use super::EstimatorError;

/// An error estimate for iteration `k` accepted after `d_used` extra steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedEstimate {
    pub k: usize,
    pub d_used: usize,
    /// `Δ_{k:k+d}`, the quantity tested against the accuracy requirement.
    pub delta: f64,
    /// `Δ_{k:k+d+1}`, the improved lower bound available at acceptance.
    pub delta_plus: f64,
    /// `Δ_{k:k+d} / (1 - τ)`.
    pub upper_heuristic: f64,
    /// `Ω_{k:k+d}` when a Gauss–Radau node is configured.
    pub omega: Option<f64>,
}

/// Controller state: `k` is the oldest iteration without an estimate and
/// `d` the current delay, so that `k + d = ℓ - 1` at outer iteration `ℓ`.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    pub k: usize,
    pub d: isize,
    pub tau: f64,
    pub window_tol: f64,
    pub d_min: usize,
    /// Safety factor from the most recent outer iteration.
    pub safety: f64,
    /// Window start from the most recent outer iteration.
    pub m: usize,
}

impl AdaptiveState {
    pub fn new(tau: f64, window_tol: f64, d_min: usize) -> Result<Self, EstimatorError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(EstimatorError::InvalidConfig(format!("tau must lie in (0, 1), got {tau}")));
        }
        if !(window_tol > 0.0 && window_tol < 1.0) {
            return Err(EstimatorError::InvalidConfig(format!(
                "window tolerance must lie in (0, 1), got {window_tol}"
            )));
        }
        Ok(Self { k: 0, d: 0, tau, window_tol, d_min, safety: 1.0, m: 0 })
    }

    /// One outer iteration `ℓ >= 1` of the adaptive loop; the term of
    /// iteration `ℓ` must already be in `h`. Returns the estimates accepted
    /// at this iteration, oldest first.
    pub fn adaptive_step(&mut self, h: &TermHistory, ell: usize) -> Vec<AcceptedEstimate> {
        assert!(ell >= 1 && ell < h.len(), "outer iteration {ell} without its term");
        debug_assert_eq!(self.k as isize + self.d, ell as isize - 1);
        let d = self.d as usize;
        self.m = h.find_window_start(self.k, ell, self.window_tol);
        self.safety = h.safety_factor(self.m, self.k, d);

        let newest = h.term(ell);
        let mut accepted = Vec::new();
        while self.d >= self.d_min as isize {
            let d = self.d as usize;
            let delta = h.delta(self.k, self.k + d);
            if !(self.safety * newest / delta <= self.tau) {
                break;
            }
            accepted.push(AcceptedEstimate {
                k: self.k,
                d_used: d,
                delta,
                delta_plus: h.delta(self.k, ell),
                upper_heuristic: heuristic_upper(delta, self.tau),
                omega: None,
            });
            self.k += 1;
            self.d -= 1;
        }
        self.d += 1;
        accepted
    }

    /// One step of the initial phase at `ℓ = d`. Returns `true` when
    /// `φ_d / Δ_{0:d} < τ`, which fixes `d_0 = d`; otherwise `d` grows.
    pub fn initial_phase_step(&mut self, h: &TermHistory, phi_d: f64) -> bool {
        debug_assert_eq!(self.k, 0);
        let d = self.d as usize;
        assert!(d < h.len(), "initial phase ahead of the term history");
        if phi_d / h.delta(0, d) < self.tau {
            true
        } else {
            self.d += 1;
            false
        }
    }

    /// Accepts every pending iteration once no further terms will arrive
    /// because the residual vanished: `ε_{last+1} = 0`, so `Δ_{k:last}` is
    /// exact up to rounding.
    pub fn finalize_exhausted(&mut self, h: &TermHistory) -> Vec<AcceptedEstimate> {
        let Some(last) = h.len().checked_sub(1) else {
            return Vec::new();
        };
        let mut accepted = Vec::new();
        while self.k <= last {
            let delta = h.delta(self.k, last);
            accepted.push(AcceptedEstimate {
                k: self.k,
                d_used: last - self.k,
                delta,
                delta_plus: delta,
                upper_heuristic: heuristic_upper(delta, self.tau),
                omega: None,
            });
            self.k += 1;
        }
        self.d = last as isize - self.k as isize + 1;
        accepted
    }
}

/// `Δ / (1 - τ)`, an upper estimate whenever the accuracy requirement holds.
pub fn heuristic_upper(delta: f64, tau: f64) -> f64 {
    delta / (1.0 - tau)
}

/// `ε_{k+d+1} / ε_k <= τ`, the predicate defining the ideal delay, evaluated
/// as `ε_{k+d+1} <= τ ε_k` to avoid a rounding division.
pub fn ideal_ratio_check(eps_k: f64, eps_kd1: f64, tau: f64) -> bool {
    eps_kd1 <= tau * eps_k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(terms: &[f64]) -> TermHistory {
        let mut h = TermHistory::new();
        for &t in terms {
            h.push(t).unwrap();
        }
        h
    }

    fn drive(st: &mut AdaptiveState, h: &TermHistory) -> Vec<Vec<AcceptedEstimate>> {
        (1..h.len()).map(|ell| st.adaptive_step(h, ell)).collect()
    }

    #[test]
    fn fast_stream_accepts_one_per_iteration() {
        let terms: Vec<f64> = (0..20).map(|j| 10f64.powi(-2 * j)).collect();
        let h = hist(&terms);
        let mut st = AdaptiveState::new(0.25, 1e-4, 0).unwrap();
        let batches = drive(&mut st, &h);
        for (i, batch) in batches.iter().enumerate() {
            assert_eq!(batch.len(), 1, "ell = {}", i + 1);
            assert_eq!(batch[0].k, i);
            assert_eq!(batch[0].d_used, 0);
        }
    }

    #[test]
    fn stagnating_stream_never_accepts() {
        let h = hist(&[1.0; 30]);
        let mut st = AdaptiveState::new(0.25, 1e-4, 0).unwrap();
        for ell in 1..30 {
            assert!(st.adaptive_step(&h, ell).is_empty());
            assert_eq!(st.k, 0);
            assert_eq!(st.d, ell as isize);
        }
    }

    #[test]
    fn loose_tolerance_accepts_at_d_min() {
        let terms: Vec<f64> = (0..10).map(|j| 0.3f64.powi(j)).collect();
        let h = hist(&terms);
        for d_min in [0usize, 2] {
            let mut st = AdaptiveState::new(0.999999, 1e-4, d_min).unwrap();
            let all: Vec<AcceptedEstimate> = drive(&mut st, &h).into_iter().flatten().collect();
            assert!(!all.is_empty());
            assert!(all.iter().all(|e| e.d_used == d_min));
            for (i, e) in all.iter().enumerate() {
                assert_eq!(e.k, i);
            }
        }
    }

    #[test]
    fn toy_system_needs_finalize() {
        // terms of CG on diag(1, 3) with b = (1, 1)
        let h = hist(&[1.0, 1.0 / 3.0]);
        let mut st = AdaptiveState::new(0.25, 1e-4, 0).unwrap();
        assert!(st.adaptive_step(&h, 1).is_empty());
        assert!((st.safety - 4.0 / 3.0).abs() < 1e-15);
        let fin = st.finalize_exhausted(&h);
        assert_eq!(fin.len(), 2);
        assert_eq!((fin[0].k, fin[0].d_used), (0, 1));
        assert!((fin[0].delta - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!((fin[1].k, fin[1].d_used), (1, 0));
        assert_eq!(st.k, 2);
    }

    #[test]
    fn accepted_records_are_consistent() {
        let terms: Vec<f64> = (0..40).map(|j| (0.7f64).powi(j) * (1.0 + 0.5 * ((j as f64) * 1.3).sin())).collect();
        let h = hist(&terms);
        let mut st = AdaptiveState::new(0.25, 1e-4, 0).unwrap();
        let all: Vec<AcceptedEstimate> = drive(&mut st, &h).into_iter().flatten().collect();
        for (i, e) in all.iter().enumerate() {
            assert_eq!(e.k, i);
            assert!(e.delta <= e.delta_plus);
            assert!(e.upper_heuristic > e.delta);
        }
    }

    #[test]
    fn initial_phase_ends_on_small_phi() {
        let h = hist(&[1.0, 0.5, 0.25, 0.125]);
        let mut st = AdaptiveState::new(0.25, 1e-4, 0).unwrap();
        // φ drops tenfold per step starting at 1: 1/1 fails, 0.1/1.5 passes
        assert!(!st.initial_phase_step(&h, 1.0));
        assert_eq!(st.d, 1);
        assert!(st.initial_phase_step(&h, 0.1));
        assert_eq!(st.d, 1);
    }

    #[test]
    fn ideal_ratio_examples() {
        assert!(ideal_ratio_check(4.0 / 3.0, 1.0 / 3.0, 0.25));
        assert!(!ideal_ratio_check(1.0, 1.0, 0.25));
        assert!(ideal_ratio_check(1.0, 0.0, 1e-9));
    }

    #[test]
    fn heuristic_upper_examples() {
        assert!((heuristic_upper(1.0, 0.25) - 4.0 / 3.0).abs() < 1e-16);
        assert_eq!(heuristic_upper(0.0, 0.25), 0.0);
    }

    #[test]
    fn rejects_bad_tau() {
        assert!(AdaptiveState::new(0.0, 1e-4, 0).is_err());
        assert!(AdaptiveState::new(1.0, 1e-4, 0).is_err());
        assert!(AdaptiveState::new(0.25, 0.0, 0).is_err());
    }
}
