use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SparseError;

/// How the right-hand side `b` is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum RhsSpec {
    /// Constant vector scaled to unit 2-norm.
    Equal,
    /// Entries i.i.d. uniform on (-1, 1) from `ChaCha8Rng::seed_from_u64(seed)`,
    /// then scaled to unit 2-norm.
    UniformRandom,
    /// One real per line, used verbatim.
    File(PathBuf),
}

impl FromStr for RhsSpec {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "equal" => RhsSpec::Equal,
            "random" | "uniform-random" => RhsSpec::UniformRandom,
            path => RhsSpec::File(PathBuf::from(path)),
        })
    }
}

fn normalized(mut b: Vec<f64>) -> Result<Vec<f64>, SparseError> {
    let norm = crate::vector::norm2(&b);
    if norm == 0.0 {
        return Err(SparseError::Rhs("right-hand side is the zero vector".into()));
    }
    b.iter_mut().for_each(|v| *v /= norm);
    Ok(b)
}

/// Uniform (-1, 1) samples from the documented generator, not normalized.
pub(crate) fn uniform_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v != -1.0 {
                break v;
            }
        })
        .collect()
}

pub fn read_rhs(spec: &RhsSpec, n: usize, seed: u64) -> Result<Vec<f64>, SparseError> {
    match spec {
        RhsSpec::Equal => normalized(vec![1.0; n]),
        RhsSpec::UniformRandom => normalized(uniform_samples(n, seed)),
        RhsSpec::File(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut b = Vec::with_capacity(n);
            for (idx, line) in text.lines().enumerate() {
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                let v: f64 =
                    t.parse().map_err(|_| SparseError::Rhs(format!("line {}: '{t}' is not a real number", idx + 1)))?;
                if !v.is_finite() {
                    return Err(SparseError::Rhs(format!("line {}: non-finite value", idx + 1)));
                }
                b.push(v);
            }
            if b.len() != n {
                return Err(SparseError::Rhs(format!("file holds {} values, expected {n}", b.len())));
            }
            if b.iter().all(|&v| v == 0.0) {
                return Err(SparseError::Rhs("right-hand side is the zero vector".into()));
            }
            Ok(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn equal_is_unit_constant() {
        assert_eq!(read_rhs(&RhsSpec::Equal, 4, 0).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn random_is_deterministic_and_normalized() {
        let a = read_rhs(&RhsSpec::UniformRandom, 10, 42).unwrap();
        let b = read_rhs(&RhsSpec::UniformRandom, 10, 42).unwrap();
        assert_eq!(a, b);
        assert!((crate::vector::norm2(&a) - 1.0).abs() <= 1e-15);
        assert_ne!(a, read_rhs(&RhsSpec::UniformRandom, 10, 43).unwrap());
    }

    #[test]
    fn file_is_read_verbatim() {
        let mut f = tempfile_in_target("rhs_ok");
        writeln!(f.1, "1.5\n-2\n\n3e-1").unwrap();
        let b = read_rhs(&RhsSpec::File(f.0.clone()), 3, 0).unwrap();
        assert_eq!(b, vec![1.5, -2.0, 0.3]);
        assert!(read_rhs(&RhsSpec::File(f.0), 4, 0).is_err());
    }

    #[test]
    fn zero_file_is_rejected() {
        let mut f = tempfile_in_target("rhs_zero");
        writeln!(f.1, "0\n0").unwrap();
        assert!(read_rhs(&RhsSpec::File(f.0), 2, 0).is_err());
    }

    #[test]
    fn parse_spec() {
        assert_eq!("equal".parse::<RhsSpec>().unwrap(), RhsSpec::Equal);
        assert_eq!("random".parse::<RhsSpec>().unwrap(), RhsSpec::UniformRandom);
        assert_eq!("b.txt".parse::<RhsSpec>().unwrap(), RhsSpec::File("b.txt".into()));
    }

    fn tempfile_in_target(name: &str) -> (PathBuf, std::fs::File) {
        let dir = std::env::temp_dir().join(format!("cgerr-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let f = std::fs::File::create(&path).unwrap();
        (path, f)
    }
}
