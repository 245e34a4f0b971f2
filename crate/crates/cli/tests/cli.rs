use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cgerr::oracle::{ultimate_index, TruthTracker, DEFAULT_CAP};
use cgerr::sparse::{read_matrix_market_file, CsrMatrix};
use tempfile::TempDir;

fn cgerr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgerr")).args(args).env_remove("CGERR_ORACLE_CAP").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_mtx(dir: &TempDir, name: &str, n: usize, lower: &[(usize, usize, f64)]) -> PathBuf {
    let mut text = format!("%%MatrixMarket matrix coordinate real symmetric\n{n} {n} {}\n", lower.len());
    for (i, j, v) in lower {
        text += &format!("{} {} {v}\n", i + 1, j + 1);
    }
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn tridiag(dir: &TempDir, n: usize) -> PathBuf {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i + 1, i, -1.0));
        }
    }
    write_mtx(dir, "tridiag.mtx", n, &t)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header and rows of a CSV file, rows split into fields.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].clone()).collect()
}

fn reals(col: Vec<String>) -> Vec<f64> {
    col.iter().map(|v| v.parse().unwrap()).collect()
}

#[test]
fn solve_tridiagonal_jacobi_absolute_stop() {
    let dir = TempDir::new().unwrap();
    let m = tridiag(&dir, 100);
    let csv = dir.path().join("out.csv");
    let out = cgerr(&[
        "solve",
        "--matrix",
        s(&m),
        "--precond",
        "jacobi",
        "--tau",
        "0.25",
        "--stop",
        "absolute",
        "--threshold",
        "1e-8",
        "--output",
        s(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&csv);
    assert_eq!(
        header,
        ["k", "accepted_d", "delta", "delta_plus", "upper_heuristic", "omega", "mu_k", "phi_k", "stopped"]
    );
    let ks: Vec<usize> = column(&header, &rows, "k").iter().map(|k| k.parse().unwrap()).collect();
    assert!(ks.iter().enumerate().all(|(i, &k)| k == i), "one record per accepted k, in order");
    let plus = reals(column(&header, &rows, "delta_plus"));
    assert!(plus.windows(2).all(|w| w[1] <= w[0]));
    let upper = reals(column(&header, &rows, "upper_heuristic"));
    let stopped = column(&header, &rows, "stopped");
    assert_eq!(stopped.iter().filter(|v| *v == "true").count(), 1);
    assert_eq!(stopped.last().unwrap(), "true");
    assert!(upper.last().unwrap().sqrt() <= 1e-8);
    let err = stderr(&out);
    assert!(err.contains("stopping policy met"), "{err}");
}

#[test]
fn iteration_cap_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let m = tridiag(&dir, 100);
    let out = cgerr(&["solve", "--matrix", s(&m), "--max-iter", "3", "--output", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("iteration cap"));
}

#[test]
fn unreadable_matrix_exits_with_one() {
    let out = cgerr(&["solve", "--matrix", "/nonexistent/matrix.mtx"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/nonexistent/matrix.mtx"));
}

#[test]
fn invalid_configuration_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let m = tridiag(&dir, 10);
    for args in [
        vec!["--tau", "1.5"],
        vec!["--tau", "0"],
        vec!["--stop", "absolute"],
        vec!["--stop", "relative", "--threshold=-1"],
        vec!["--precond", "ilu"],
        vec!["--no-such-flag"],
        vec!["--mu", "-2"],
    ] {
        let mut full = vec!["solve", "--matrix", s(&m)];
        full.extend(args.iter().copied());
        let out = cgerr(&full);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn ic0_breakdown_exits_with_three() {
    let dir = TempDir::new().unwrap();
    // [[1, 2], [2, 1]] has a negative second pivot
    let m = write_mtx(&dir, "indef.mtx", 2, &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)]);
    let out = cgerr(&["solve", "--matrix", s(&m), "--precond", "ic0"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("row 1"));
}

#[test]
fn identical_configuration_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let m = tridiag(&dir, 60);
    let run = |seed: &str, name: &str| {
        let path = dir.path().join(name);
        let out = cgerr(&["solve", "--matrix", s(&m), "--rhs", "uniform-random", "--seed", seed, "--output", s(&path)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read(path).unwrap()
    };
    let a = run("7", "a.csv");
    assert_eq!(a, run("7", "b.csv"));
    assert_ne!(a, run("8", "c.csv"));
}

#[test]
fn jsonl_has_one_object_per_csv_row() {
    let dir = TempDir::new().unwrap();
    let m = tridiag(&dir, 40);
    let csv = dir.path().join("o.csv");
    let jsonl = dir.path().join("o.jsonl");
    assert_eq!(code(&cgerr(&["solve", "--matrix", s(&m), "--output", s(&csv)])), 0);
    assert_eq!(code(&cgerr(&["solve", "--matrix", s(&m), "--format", "jsonl", "--output", s(&jsonl)])), 0);
    let (_, rows) = read_csv(&csv);
    let text = std::fs::read_to_string(&jsonl).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), rows.len());
    for (i, line) in lines.iter().enumerate() {
        assert!(line.starts_with(&format!("{{\"k\":{i},")), "{line}");
        assert!(line.ends_with('}'));
    }
}

#[test]
fn records_go_to_stdout_by_default() {
    let dir = TempDir::new().unwrap();
    let m = tridiag(&dir, 10);
    let out = cgerr(&["solve", "--matrix", s(&m)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("k,accepted_d,delta,"));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows.len() >= 5, "{text}");
    assert!(rows[0].starts_with("0,"));
}

#[test]
fn compare_two_by_two() {
    let dir = TempDir::new().unwrap();
    let m = write_mtx(&dir, "diag.mtx", 2, &[(0, 0, 1.0), (1, 1, 3.0)]);
    let csv = dir.path().join("o.csv");
    let out = cgerr(&["compare", "--matrix", s(&m), "--output", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&csv);
    assert_eq!(header[9..], ["eps_true", "rel_err_lower", "tau", "ideal_d", "rel_err_upper", "rel_err_omega"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "1");
    let rel: f64 = rows[0][10].parse().unwrap();
    assert!(rel.abs() <= 1e-15, "{rel}");
    // b = (1, 1)/√2, so ε_0 = bᵀA⁻¹b = (1 + 1/3)/2
    let eps0: f64 = rows[0][9].parse().unwrap();
    assert!((eps0 - 2.0 / 3.0).abs() <= 1e-15, "{eps0}");
}

#[test]
fn compare_reports_quality_consistent_with_columns() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("g.mtx");
    let csv = dir.path().join("o.csv");
    let gen =
        cgerr(&["gen", "--spectrum", "geometric:1:1e2:200", "--rotations", "400", "--seed", "1", "--output", s(&m)]);
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    let out = cgerr(&["compare", "--matrix", s(&m), "--output", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let (header, rows) = read_csv(&csv);
    let eps = reals(column(&header, &rows, "eps_true"));
    let rel = reals(column(&header, &rows, "rel_err_lower"));
    let ult = ultimate_index(&eps);
    let counted: Vec<f64> = rel[..ult].to_vec();
    let within = counted.iter().filter(|&&r| r <= 0.25).count();
    let err = stderr(&out);
    let expected = format!(
        "{} estimates before the accuracy plateau: fraction within tau {:.3}",
        counted.len(),
        within as f64 / counted.len() as f64
    );
    assert!(err.contains(&expected), "{err}\nexpected: {expected}");
    // well above the attainable accuracy every estimate meets τ
    let floor = eps[ult..].iter().copied().fold(f64::INFINITY, f64::min);
    for k in 0..ult {
        if eps[k] > 1e3 * floor {
            assert!(rel[k] <= 0.25, "k={k} rel={}", rel[k]);
        }
    }
}

#[test]
fn compare_refuses_orders_above_the_cap() {
    let dir = TempDir::new().unwrap();
    let m = tridiag(&dir, 20);
    let out = Command::new(env!("CARGO_BIN_EXE_cgerr"))
        .args(["compare", "--matrix", s(&m)])
        .env("CGERR_ORACLE_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("cap"), "{}", stderr(&out));
}

#[test]
fn compare_handles_order_1083() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("big.mtx");
    assert_eq!(code(&cgerr(&["gen", "--spectrum", "geometric:1:1e3:1083", "--output", s(&m)])), 0);
    let out = cgerr(&["compare", "--matrix", s(&m), "--output", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

fn generate(dir: &TempDir, spec: &str, rotations: usize) -> CsrMatrix {
    let path = dir.path().join("gen.mtx");
    let out =
        cgerr(&["gen", "--spectrum", spec, "--rotations", &rotations.to_string(), "--seed", "3", "--output", s(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    read_matrix_market_file(&path).unwrap()
}

#[test]
fn gen_geometric_diagonal_has_exact_condition_number() {
    let dir = TempDir::new().unwrap();
    let a = generate(&dir, "geometric:1:1e4:50", 0);
    assert_eq!(a.n(), 50);
    assert_eq!(a.nnz(), 50);
    let d = a.diagonal();
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert_eq!(hi / lo, 1e4);
}

#[test]
fn gen_single_eigenvalue() {
    let dir = TempDir::new().unwrap();
    let a = generate(&dir, "geometric:2:2:1", 5);
    assert_eq!(a.n(), 1);
    assert_eq!(a.get(0, 0), Some(2.0));
}

#[test]
fn gen_rejects_invalid_spectra() {
    for spec in ["geometric:-1:10:5", "geometric:0:10:5", "staircase:1:100:2", "nonsense"] {
        let out = cgerr(&["gen", "--spectrum", spec]);
        assert_eq!(code(&out), 1, "{spec}");
    }
}

#[test]
fn gen_rotated_matrix_and_eigenbasis_rhs() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("rot.mtx");
    let rhs = dir.path().join("b.txt");
    let out = cgerr(&[
        "gen",
        "--spectrum",
        "geometric:1:10:30",
        "--rotations",
        "60",
        "--output",
        s(&m),
        "--rhs-output",
        s(&rhs),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let a = read_matrix_market_file(&m).unwrap();
    a.check_symmetric().unwrap();
    assert!(a.nnz() > 30);
    let b: Vec<f64> = std::fs::read_to_string(&rhs).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(b.len(), 30);
    // trace is invariant under rotation; ‖b‖ = 1
    let trace: f64 = a.diagonal().iter().sum();
    let expected: f64 = (0..30).map(|i| 10f64.powf(i as f64 / 29.0)).sum();
    assert!((trace - expected).abs() <= 1e-12 * expected);
    assert!((b.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() <= 1e-14);
    // the file-based right-hand side is accepted verbatim
    let solve = cgerr(&["solve", "--matrix", s(&m), "--rhs", s(&rhs), "--output", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&solve), 0, "{}", stderr(&solve));
}

/// True errors of plain CG on `A` with `b = 1/√n`, from the refined oracle.
fn cg_errors(a: &CsrMatrix, steps: usize) -> Vec<f64> {
    let n = a.n();
    let b = vec![1.0 / (n as f64).sqrt(); n];
    let mut truth = TruthTracker::new(a, &b, DEFAULT_CAP).unwrap();
    let (mut x, mut r, mut p) = (vec![0.0; n], b.clone(), b.clone());
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    truth.record(&x);
    for _ in 0..steps {
        let ap = a.matvec(&p).unwrap();
        let gamma = rr / p.iter().zip(&ap).map(|(u, v)| u * v).sum::<f64>();
        for i in 0..n {
            x[i] += gamma * p[i];
            r[i] -= gamma * ap[i];
        }
        let rr_next: f64 = r.iter().map(|v| v * v).sum();
        for i in 0..n {
            p[i] = r[i] + rr_next / rr * p[i];
        }
        rr = rr_next;
        truth.record(&x);
    }
    truth.into_eps()
}

/// Levels of the flat stretches (under 3% decrease over 8 steps) of a
/// strictly decreasing error curve, merged when within 10% of each other.
fn flat_levels(eps: &[f64]) -> Vec<f64> {
    const WIDTH: usize = 8;
    let mut levels: Vec<f64> = Vec::new();
    for k in 0..eps.len().saturating_sub(WIDTH) {
        if eps[k + WIDTH] / eps[k] > 0.97 && levels.last().is_none_or(|&l| eps[k] < 0.9 * l) {
            levels.push(eps[k]);
        }
    }
    levels
}

#[test]
fn gen_staircase_gives_staircase_convergence() {
    let dir = TempDir::new().unwrap();
    let curve = |spec: &str| {
        let eps = cg_errors(&generate(&dir, spec, 0), 300);
        let ult = ultimate_index(&eps);
        // stay well above the rounding floor, which sits near 1e-28 ε_0 here
        let top = eps[..ult].iter().position(|&e| e < 1e-20 * eps[0]).expect("reaches 1e-20 ε_0");
        assert!(eps[..top].windows(2).all(|w| w[1] < w[0]), "{spec}: strictly decreasing");
        eps[..top].to_vec()
    };
    let stairs = flat_levels(&curve("staircase:1:100:3:200"));
    assert!(stairs.len() >= 2, "{stairs:?}");
    assert!(flat_levels(&curve("geometric:1:1e3:200")).is_empty());
}
