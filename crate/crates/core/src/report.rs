//! Per-iteration records of a session and their CSV / JSON-lines forms.
//!
//! CSV columns, in order:
//!
//! `k, accepted_d, delta, delta_plus, upper_heuristic, omega, mu_k, phi_k, stopped`
//!
//! followed, when ground truth is available, by
//!
//! `eps_true, rel_err_lower, tau, ideal_d, rel_err_upper, rel_err_omega`.
//!
//! Reals use 17 significant digits; absent values are empty fields.

use std::io::{self, Write};

use serde::Serialize;

use crate::oracle::{ideal_delay, relative_error, ultimate_index};
use crate::session::SessionResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthColumns {
    pub eps_true: f64,
    pub rel_err_lower: f64,
    pub tau: f64,
    pub ideal_d: Option<usize>,
    pub rel_err_upper: f64,
    pub rel_err_omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub accepted_d: usize,
    pub delta: f64,
    pub delta_plus: f64,
    pub upper_heuristic: f64,
    pub omega: Option<f64>,
    pub mu_k: f64,
    pub phi_k: f64,
    pub stopped: bool,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthColumns>,
}

const BASE_COLUMNS: [&str; 9] =
    ["k", "accepted_d", "delta", "delta_plus", "upper_heuristic", "omega", "mu_k", "phi_k", "stopped"];
const TRUTH_COLUMNS: [&str; 6] = ["eps_true", "rel_err_lower", "tau", "ideal_d", "rel_err_upper", "rel_err_omega"];

/// One record per accepted estimate, ordered by `k`; truth columns are
/// filled when the session tracked true errors.
pub fn records(result: &SessionResult) -> Vec<IterationRecord> {
    let est = &result.estimator;
    let tau = est.config().tau;
    let ultimate = result.eps.as_deref().map(ultimate_index);
    est.accepted()
        .iter()
        .enumerate()
        .map(|(idx, a)| {
            let sample = est.samples()[a.k];
            let truth = result.eps.as_deref().and_then(|eps| {
                let e = *eps.get(a.k)?;
                Some(TruthColumns {
                    eps_true: e,
                    rel_err_lower: relative_error(e, a.delta),
                    tau,
                    ideal_d: ideal_delay(eps, ultimate.expect("set with eps"), a.k, tau),
                    rel_err_upper: (a.upper_heuristic - e) / e,
                    rel_err_omega: a.omega.map(|w| (w - e) / e),
                })
            });
            IterationRecord {
                k: a.k,
                accepted_d: a.d_used,
                delta: a.delta,
                delta_plus: a.delta_plus,
                upper_heuristic: a.upper_heuristic,
                omega: a.omega,
                mu_k: sample.mu_k,
                phi_k: sample.phi_k,
                stopped: result.stop_estimate == Some(idx),
                truth,
            }
        })
        .collect()
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// Writes a header and one line per record; truth columns appear when
/// `with_truth` is set.
pub fn write_csv<W: Write>(out: &mut W, records: &[IterationRecord], with_truth: bool) -> io::Result<()> {
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if with_truth {
        header.extend(TRUTH_COLUMNS);
    }
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut fields = vec![
            r.k.to_string(),
            r.accepted_d.to_string(),
            real(r.delta),
            real(r.delta_plus),
            real(r.upper_heuristic),
            opt_real(r.omega),
            real(r.mu_k),
            real(r.phi_k),
            r.stopped.to_string(),
        ];
        if with_truth {
            match &r.truth {
                Some(t) => fields.extend([
                    real(t.eps_true),
                    real(t.rel_err_lower),
                    real(t.tau),
                    t.ideal_d.map(|d| d.to_string()).unwrap_or_default(),
                    real(t.rel_err_upper),
                    opt_real(t.rel_err_omega),
                ]),
                None => fields.extend(std::iter::repeat_n(String::new(), TRUTH_COLUMNS.len())),
            }
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// One JSON object per line, keys as in the CSV header.
pub fn write_jsonl<W: Write>(out: &mut W, records: &[IterationRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
