//! Error-free transformations and a double-word accumulator.
//!
//! The accumulator keeps the running sum as an unevaluated pair `hi + lo`,
//! which is what lets the term history answer window sums by subtracting
//! prefixes without losing the small trailing terms.

/// Knuth's TwoSum: `a + b = s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// `a * b = p + e` exactly (barring underflow).
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

/// A double-word value `hi + lo` with `|lo| <= ulp(hi) / 2` after normalization.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleWord {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleWord {
    pub const ZERO: DoubleWord = DoubleWord { hi: 0.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        DoubleWord { hi, lo }
    }

    #[inline]
    pub fn add_f64(self, x: f64) -> Self {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = two_sum(s, e + self.lo);
        DoubleWord { hi, lo }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

impl std::ops::Add for DoubleWord {
    type Output = DoubleWord;

    #[inline]
    fn add(self, other: DoubleWord) -> DoubleWord {
        let (s, e) = two_sum(self.hi, other.hi);
        let (t, f) = two_sum(self.lo, other.lo);
        let (s, e) = two_sum(s, e + t);
        let (hi, lo) = two_sum(s, e + f);
        DoubleWord { hi, lo }
    }
}

impl std::ops::Neg for DoubleWord {
    type Output = DoubleWord;

    #[inline]
    fn neg(self) -> DoubleWord {
        DoubleWord { hi: -self.hi, lo: -self.lo }
    }
}

impl std::ops::Sub for DoubleWord {
    type Output = DoubleWord;

    #[inline]
    fn sub(self, other: DoubleWord) -> DoubleWord {
        self + -other
    }
}

/// Running compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    acc: DoubleWord,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        self.acc = self.acc.add_f64(x);
    }

    pub fn total(&self) -> DoubleWord {
        self.acc
    }

    pub fn value(&self) -> f64 {
        self.acc.value()
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Dot product accumulated in double-word arithmetic.
pub fn dot_compensated(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot_compensated: length mismatch");
    let mut acc = DoubleWord::ZERO;
    for (x, y) in a.iter().zip(b) {
        let (p, e) = two_prod(*x, *y);
        acc = acc + DoubleWord { hi: p, lo: e };
    }
    acc.value()
}
