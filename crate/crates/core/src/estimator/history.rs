//! History of Hestenes–Stiefel terms `γ_j z_jᵀr_j` and their window sums.

use super::EstimatorError;
use crate::solver::IterationEvent;
use crate::sum::DoubleWord;

/// Windows smaller than this fraction of the running total are summed from
/// block sums, since a double-word prefix difference keeps only about
/// `u² · prefix` absolute accuracy.
const CANCELLATION_GUARD: f64 = 1.0 / (1u64 << 50) as f64;

/// Terms, double-word prefix sums and sums of aligned power-of-two blocks.
///
/// `Δ_{a:b}` is answered in O(1) as a double-word prefix difference. When
/// that difference is tiny against the running total (CG terms routinely
/// span 30 decades), it is instead added up from at most `2 log₂ n` block
/// sums of positive terms, which has no cancellation at all.
#[derive(Debug, Clone, Default)]
pub struct TermHistory {
    terms: Vec<f64>,
    prefix: Vec<DoubleWord>,
    /// `blocks[j][i]` is the sum of terms `i·2^(j+1) .. (i+1)·2^(j+1)`.
    blocks: Vec<Vec<f64>>,
}

impl TermHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[f64] {
        &self.terms
    }

    pub fn term(&self, j: usize) -> f64 {
        self.terms[j]
    }

    /// Appends `γ_k · z_kᵀr_k` for the next iteration index.
    pub fn push_term(&mut self, event: &IterationEvent) -> Result<f64, EstimatorError> {
        if event.k != self.len() {
            return Err(EstimatorError::OutOfOrder { expected: self.len(), got: event.k });
        }
        let term = event.term();
        self.push(term)?;
        Ok(term)
    }

    /// Appends a raw term; it must be positive and finite.
    pub fn push(&mut self, term: f64) -> Result<(), EstimatorError> {
        if !(term > 0.0) || !term.is_finite() {
            return Err(EstimatorError::NonPositiveTerm { k: self.len(), term });
        }
        let last = self.prefix.last().copied().unwrap_or(DoubleWord::ZERO);
        self.terms.push(term);
        self.prefix.push(last.add_f64(term));
        self.complete_blocks();
        Ok(())
    }

    fn complete_blocks(&mut self) {
        let mut level = 0;
        loop {
            let row = if level == 0 { &self.terms } else { &self.blocks[level - 1] };
            let len = row.len();
            if len % 2 == 1 {
                return;
            }
            let pair = row[len - 2] + row[len - 1];
            if self.blocks.len() == level {
                self.blocks.push(Vec::new());
            }
            self.blocks[level].push(pair);
            level += 1;
        }
    }

    /// `Σ_{j=a}^{b} term_j` from block sums.
    fn block_sum(&self, a: usize, b: usize) -> f64 {
        let (mut lo, mut hi) = (a, b + 1);
        let mut sum = 0.0;
        let mut level = 0;
        while lo < hi {
            let row = if level == 0 { &self.terms } else { &self.blocks[level - 1] };
            if lo % 2 == 1 {
                sum += row[lo];
                lo += 1;
            }
            if hi % 2 == 1 {
                hi -= 1;
                sum += row[hi];
            }
            lo /= 2;
            hi /= 2;
            level += 1;
        }
        sum
    }

    /// `Δ_{a:b} = Σ_{j=a}^{b} term_j`.
    pub fn delta_range(&self, a: usize, b: usize) -> Result<f64, EstimatorError> {
        if a > b || b >= self.len() {
            return Err(EstimatorError::RangeOutOfBounds { a, b, len: self.len() });
        }
        Ok(self.delta(a, b))
    }

    #[inline]
    pub(crate) fn delta(&self, a: usize, b: usize) -> f64 {
        debug_assert!(a <= b && b < self.len());
        if a == b {
            return self.terms[a];
        }
        if a == 0 {
            return self.prefix[b].value();
        }
        let total = self.prefix[b].hi;
        let diff = (self.prefix[b] - self.prefix[a - 1]).value();
        if diff >= CANCELLATION_GUARD * total {
            diff
        } else {
            self.block_sum(a, b)
        }
    }

    /// Start `m` of the window used for the safety factor: the largest
    /// `ℓ < k` with `Δ_{k:end} / Δ_{ℓ:end} <= tol`, or 0 if none qualifies.
    ///
    /// The ratio grows with `ℓ`, so the admissible set is a prefix of
    /// `0..k` and binary search applies.
    pub fn find_window_start(&self, k: usize, end: usize, tol: f64) -> usize {
        assert!(end < self.len() && k <= end, "window end {end} not in history");
        if k == 0 {
            return 0;
        }
        let head = self.delta(k, end);
        let ok = |l: usize| head / self.delta(l, end) <= tol;
        if !ok(0) {
            return 0;
        }
        // invariant: ok(lo), !ok(hi)
        let (mut lo, mut hi) = (0usize, k);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Safety factor `S = max_{m <= ℓ <= k+d} Δ_{ℓ:k+d+1} / Δ_ℓ`.
    pub fn safety_factor(&self, m: usize, k: usize, d: usize) -> f64 {
        let end = k + d + 1;
        assert!(end < self.len() && m <= k + d, "safety window out of range");
        (m..=k + d).map(|l| self.delta(l, end) / self.terms[l]).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(terms: &[f64]) -> TermHistory {
        let mut h = TermHistory::new();
        for &t in terms {
            h.push(t).unwrap();
        }
        h
    }

    fn ev(k: usize, gamma: f64, rz: f64) -> IterationEvent {
        IterationEvent { k, gamma, rz, rnorm2: rz, pnorm2: 1.0, beta_next: 0.5 }
    }

    #[test]
    fn two_by_two_terms() {
        let mut h = TermHistory::new();
        assert_eq!(h.push_term(&ev(0, 0.5, 2.0)).unwrap(), 1.0);
        let t1 = h.push_term(&ev(1, 2.0 / 3.0, 0.5)).unwrap();
        assert!((t1 - 1.0 / 3.0).abs() < 1e-16);
        assert!((h.delta_range(0, 1).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.delta_range(0, 0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_nonpositive_term() {
        let mut h = TermHistory::new();
        assert!(matches!(h.push_term(&ev(0, 1.0, 0.0)), Err(EstimatorError::NonPositiveTerm { k: 0, .. })));
        assert!(h.push(f64::NAN).is_err());
        assert!(h.push(-1.0).is_err());
    }

    #[test]
    fn rejects_out_of_order_event() {
        let mut h = TermHistory::new();
        assert!(matches!(h.push_term(&ev(1, 1.0, 1.0)), Err(EstimatorError::OutOfOrder { expected: 0, got: 1 })));
    }

    #[test]
    fn single_term_range() {
        let h = hist(&[0.7]);
        assert_eq!(h.delta_range(0, 0).unwrap(), 0.7);
        assert!(h.delta_range(0, 1).is_err());
        assert!(h.delta_range(1, 0).is_err());
    }

    #[test]
    fn window_start_constant_terms() {
        let h = hist(&[1.0; 12]);
        assert_eq!(h.find_window_start(10, 11, 1e-4), 0);
        assert_eq!(h.find_window_start(0, 11, 1e-4), 0);
    }

    #[test]
    fn window_start_geometric_terms() {
        let terms: Vec<f64> = (0..8).map(|j| 10f64.powi(-j)).collect();
        let h = hist(&terms);
        // brute-force scan over all admissible ℓ
        let k = 6;
        let end = 7;
        let direct = |a: usize, b: usize| terms[a..=b].iter().sum::<f64>();
        let brute = (0..k).rev().find(|&l| direct(k, end) / direct(l, end) <= 1e-4).unwrap_or(0);
        assert_eq!(brute, 2);
        assert_eq!(h.find_window_start(k, end, 1e-4), 2);
    }

    #[test]
    fn safety_factor_closed_forms() {
        let h = hist(&[1.0; 4]);
        assert_eq!(h.safety_factor(0, 0, 0), 2.0);
        let g = hist(&[1.0, 0.1, 0.01, 0.001]);
        assert!((g.safety_factor(0, 0, 1) - 1.11).abs() < 1e-15);
        let tiny = hist(&[1.0, 1e-300]);
        assert_eq!(tiny.safety_factor(0, 0, 0), 1.0);
    }

    proptest! {
        #[test]
        fn window_sums_match_direct_summation(
            logs in prop::collection::vec(-12.0f64..0.0, 1..60),
            a in 0usize..60, len in 0usize..60,
        ) {
            let terms: Vec<f64> = logs.iter().map(|l| 10f64.powf(*l)).collect();
            let h = hist(&terms);
            let a = a % terms.len();
            let b = (a + len).min(terms.len() - 1);
            // reference in double-word arithmetic over exactly the window
            let reference: crate::sum::CompensatedSum = terms[a..=b].iter().copied().collect();
            let got = h.delta_range(a, b).unwrap();
            prop_assert!((got - reference.value()).abs() <= 1e-14 * reference.value());
            let naive: f64 = terms[a..=b].iter().sum();
            prop_assert!((got - naive).abs() <= 1e-14 * naive);
        }

        #[test]
        fn window_sums_survive_wide_dynamic_range(
            steps in prop::collection::vec(-3.0f64..0.5, 2..200),
            a in 0usize..200, len in 0usize..200,
        ) {
            // a stream falling through up to hundreds of decades, as CG terms do
            let mut level = 0.0;
            let terms: Vec<f64> = steps.iter().map(|s| { level += s; 10f64.powf(level.max(-290.0)) }).collect();
            let h = hist(&terms);
            let a = a % terms.len();
            let b = (a + len).min(terms.len() - 1);
            let naive: f64 = terms[a..=b].iter().sum();
            let got = h.delta_range(a, b).unwrap();
            prop_assert!((got - naive).abs() <= 1e-14 * naive, "{} vs {}", got, naive);
        }

        #[test]
        fn prefixes_strictly_increase(logs in prop::collection::vec(-14.0f64..2.0, 2..80)) {
            let terms: Vec<f64> = logs.iter().map(|l| 10f64.powf(*l)).collect();
            let h = hist(&terms);
            for b in 1..terms.len() {
                prop_assert!(h.delta_range(0, b).unwrap() > h.delta_range(0, b - 1).unwrap()
                    || (h.prefix[b] - h.prefix[b - 1]).value() > 0.0);
            }
        }

        #[test]
        fn window_start_matches_linear_scan(
            logs in prop::collection::vec(-3.0f64..0.0, 2..80),
            k in 0usize..80, tol_exp in -6.0f64..-1.0,
        ) {
            // log-decreasing stream with random per-step decay
            let mut level = 0.0;
            let terms: Vec<f64> = logs.iter().map(|l| { level += l; 10f64.powf(level) }).collect();
            let h = hist(&terms);
            let end = terms.len() - 1;
            let k = k % (end + 1);
            let tol = 10f64.powf(tol_exp);
            let scan = (0..k).rev().find(|&l| h.delta(k, end) / h.delta(l, end) <= tol).unwrap_or(0);
            prop_assert_eq!(h.find_window_start(k, end, tol), scan);
        }
    }
}
