//! Synthetic SPD test matrices with prescribed spectra.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sparse::{CsrMatrix, SparseError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spectrum: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Eigenvalue layouts.
#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    /// `λ_i = λ_min (λ_max / λ_min)^{i/(n-1)}`.
    Geometric { lambda_min: f64, lambda_max: f64, n: usize },
    /// `λ_i = λ_1 + (i-1)/(n-1) (λ_n - λ_1) ρ^{n-i}`: dense near `λ_1`,
    /// sparse near `λ_n`; known to delay CG in finite precision.
    Strakos { lambda_min: f64, lambda_max: f64, rho: f64, n: usize },
    /// `clusters` groups with geometrically spaced centers, each spread over
    /// a relative width `width` around its center.
    Clustered { lambda_min: f64, lambda_max: f64, clusters: usize, width: f64, n: usize },
    /// `plateaus` isolated eigenvalues at `λ_min · 10^{-j}` below a uniform
    /// bulk on `[λ_min, λ_max]`; each one costs CG a stretch of stagnation.
    Staircase { lambda_min: f64, lambda_max: f64, plateaus: usize, n: usize },
}

fn positive(name: &str, v: f64) -> Result<(), SynthError> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(SynthError::Invalid(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn ordered(lo: f64, hi: f64) -> Result<(), SynthError> {
    positive("lambda_min", lo)?;
    positive("lambda_max", hi)?;
    if lo > hi {
        return Err(SynthError::Invalid(format!("lambda_min {lo} exceeds lambda_max {hi}")));
    }
    Ok(())
}

fn frac(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

impl Spectrum {
    pub fn n(&self) -> usize {
        match *self {
            Spectrum::Geometric { n, .. }
            | Spectrum::Strakos { n, .. }
            | Spectrum::Clustered { n, .. }
            | Spectrum::Staircase { n, .. } => n,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, SynthError> {
        if self.n() == 0 {
            return Err(SynthError::Invalid("order must be positive".into()));
        }
        let mut ev = match *self {
            Spectrum::Geometric { lambda_min, lambda_max, n } => {
                ordered(lambda_min, lambda_max)?;
                let ratio = lambda_max / lambda_min;
                (0..n)
                    .map(|i| if i + 1 == n && n > 1 { lambda_max } else { lambda_min * ratio.powf(frac(i, n)) })
                    .collect::<Vec<_>>()
            }
            Spectrum::Strakos { lambda_min, lambda_max, rho, n } => {
                ordered(lambda_min, lambda_max)?;
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(SynthError::Invalid(format!("rho must lie in (0, 1], got {rho}")));
                }
                (0..n)
                    .map(|i| lambda_min + frac(i, n) * (lambda_max - lambda_min) * rho.powi((n - 1 - i) as i32))
                    .collect()
            }
            Spectrum::Clustered { lambda_min, lambda_max, clusters, width, n } => {
                ordered(lambda_min, lambda_max)?;
                if clusters == 0 || clusters > n {
                    return Err(SynthError::Invalid(format!("need 1..={n} clusters, got {clusters}")));
                }
                if !(0.0..1.0).contains(&width) {
                    return Err(SynthError::Invalid(format!("cluster width must lie in [0, 1), got {width}")));
                }
                let ratio = lambda_max / lambda_min;
                (0..n)
                    .map(|i| {
                        let c = i * clusters / n;
                        let first = (c * n).div_ceil(clusters);
                        let size = ((c + 1) * n).div_ceil(clusters) - first;
                        let center = lambda_min * ratio.powf(frac(c, clusters));
                        center * (1.0 + width * frac(i - first, size))
                    })
                    .collect()
            }
            Spectrum::Staircase { lambda_min, lambda_max, plateaus, n } => {
                ordered(lambda_min, lambda_max)?;
                if plateaus >= n {
                    return Err(SynthError::Invalid(format!("{plateaus} plateaus need more than {n} eigenvalues")));
                }
                let bulk = n - plateaus;
                let mut v: Vec<f64> = (1..=plateaus).map(|j| lambda_min * 10f64.powi(-(j as i32))).collect();
                v.extend((0..bulk).map(|i| lambda_min + frac(i, bulk) * (lambda_max - lambda_min)));
                v
            }
        };
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Spectrum::Geometric { lambda_min, lambda_max, n } => {
                write!(f, "geometric:{lambda_min:e}:{lambda_max:e}:{n}")
            }
            Spectrum::Strakos { lambda_min, lambda_max, rho, n } => {
                write!(f, "strakos:{lambda_min:e}:{lambda_max:e}:{rho}:{n}")
            }
            Spectrum::Clustered { lambda_min, lambda_max, clusters, width, n } => {
                write!(f, "clustered:{lambda_min:e}:{lambda_max:e}:{clusters}:{width}:{n}")
            }
            Spectrum::Staircase { lambda_min, lambda_max, plateaus, n } => {
                write!(f, "staircase:{lambda_min:e}:{lambda_max:e}:{plateaus}:{n}")
            }
        }
    }
}

/// Parses `kind:field:field:...`, e.g. `geometric:1:1e4:50`,
/// `strakos:0.1:100:0.9:48`, `clustered:1:1e3:5:0.01:100`,
/// `staircase:1:100:3:200`.
impl FromStr for Spectrum {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || SynthError::Invalid(format!("cannot parse spectrum '{s}'"));
        let real = |i: usize| parts.get(i).and_then(|p| p.parse::<f64>().ok()).ok_or_else(bad);
        let int = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        let arity = |want: usize| if parts.len() == want { Ok(()) } else { Err(bad()) };
        let spec = match parts[0] {
            "geometric" => {
                arity(4)?;
                Spectrum::Geometric { lambda_min: real(1)?, lambda_max: real(2)?, n: int(3)? }
            }
            "strakos" => {
                arity(5)?;
                Spectrum::Strakos { lambda_min: real(1)?, lambda_max: real(2)?, rho: real(3)?, n: int(4)? }
            }
            "clustered" => {
                arity(6)?;
                Spectrum::Clustered {
                    lambda_min: real(1)?,
                    lambda_max: real(2)?,
                    clusters: int(3)?,
                    width: real(4)?,
                    n: int(5)?,
                }
            }
            "staircase" => {
                arity(5)?;
                Spectrum::Staircase { lambda_min: real(1)?, lambda_max: real(2)?, plateaus: int(3)?, n: int(4)? }
            }
            _ => return Err(bad()),
        };
        spec.eigenvalues()?;
        Ok(spec)
    }
}

/// One plane rotation acting on coordinates `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Givens {
    pub i: usize,
    pub j: usize,
    pub c: f64,
    pub s: f64,
}

impl Givens {
    fn apply(&self, v: &mut [f64]) {
        let (a, b) = (v[self.i], v[self.j]);
        v[self.i] = self.c * a - self.s * b;
        v[self.j] = self.s * a + self.c * b;
    }
}

/// `A = Q diag(λ) Qᵀ` with `Q` a product of plane rotations.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub matrix: CsrMatrix,
    pub eigenvalues: Vec<f64>,
    pub rotations: Vec<Givens>,
}

impl Synthetic {
    /// `Q y`: maps coordinates in the eigenbasis to the matrix basis.
    pub fn from_eigenbasis(&self, y: &[f64]) -> Vec<f64> {
        let mut v = y.to_vec();
        for g in &self.rotations {
            g.apply(&mut v);
        }
        v
    }

    /// Unit vector with equal components in the eigenbasis.
    pub fn equal_eigen_rhs(&self) -> Vec<f64> {
        let n = self.eigenvalues.len();
        self.from_eigenbasis(&vec![1.0 / (n as f64).sqrt(); n])
    }
}

/// Diagonal matrix with the given spectrum, or an orthogonally similar one
/// when `rotations > 0` (random rotations from `ChaCha8Rng::seed_from_u64(seed)`).
pub fn generate(spectrum: &Spectrum, rotations: usize, seed: u64) -> Result<Synthetic, SynthError> {
    let eigenvalues = spectrum.eigenvalues()?;
    let n = eigenvalues.len();
    if rotations == 0 || n == 1 {
        return Ok(Synthetic { matrix: CsrMatrix::from_diagonal(&eigenvalues), eigenvalues, rotations: Vec::new() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dense = vec![0.0; n * n];
    for (i, &l) in eigenvalues.iter().enumerate() {
        dense[i * n + i] = l;
    }
    let mut applied = Vec::with_capacity(rotations);
    for _ in 0..rotations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let g = Givens { i, j, c: theta.cos(), s: theta.sin() };
        // A <- G A Gᵀ: rows i, j then columns i, j
        for col in 0..n {
            let (a, b) = (dense[i * n + col], dense[j * n + col]);
            dense[i * n + col] = g.c * a - g.s * b;
            dense[j * n + col] = g.s * a + g.c * b;
        }
        for row in 0..n {
            let (a, b) = (dense[row * n + i], dense[row * n + j]);
            dense[row * n + i] = g.c * a - g.s * b;
            dense[row * n + j] = g.s * a + g.c * b;
        }
        applied.push(g);
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (dense[i * n + j] + dense[j * n + i]);
            dense[i * n + j] = avg;
            dense[j * n + i] = avg;
        }
    }
    let matrix = CsrMatrix::from_dense(n, &dense)?;
    Ok(Synthetic { matrix, eigenvalues, rotations: applied })
}
