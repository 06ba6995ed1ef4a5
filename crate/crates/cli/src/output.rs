//! Deterministic exports: every floating-point value is printed with 17
//! significant digits (`{:.16e}`), which round-trips IEEE-754 doubles
//! exactly and keeps repeated runs byte-identical.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use sdi_core::approximators::{IterationTrace, Method, RunOutcome};
use sdi_core::{GaussianMoment, GaussianNat};

use crate::CliResult;

/// 17-significant-digit rendering of one double.
pub fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

struct Fmt17;

impl serde_json::ser::Formatter for Fmt17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to JSON with 17-significant-digit floats.
pub fn to_json_17<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Fmt17);
    value
        .serialize(&mut ser)
        .expect("serialization of plain data cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = to_json_17(value);
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Run summary: converged flag, sweep count, final Gaussian in both
/// parameterizations.
#[derive(Serialize)]
pub struct RunSummary {
    pub method: String,
    pub converged: bool,
    pub sweeps: usize,
    pub moment: GaussianMoment,
    pub natural: GaussianNat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_reverse: Option<f64>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn from_outcome(method: Method, outcome: &RunOutcome) -> RunSummary {
        RunSummary {
            method: method.tag().to_string(),
            converged: outcome.trace.converged,
            sweeps: outcome.trace.sweeps,
            moment: outcome.approximation.clone(),
            natural: outcome.approximation.to_nat(),
            kl_reverse: outcome
                .trace
                .records
                .iter()
                .rev()
                .find_map(|r| r.kl_reverse),
            warnings: outcome.trace.warnings.clone(),
        }
    }
}

/// Final approximation in both parameterizations.
#[derive(Serialize)]
pub struct FinalApproximation {
    pub moment: GaussianMoment,
    pub natural: GaussianNat,
}

/// Trace CSV header for dimension `d`:
/// sweep, step, method, site, mu_*, sigma_*, e_grad_norm, damping,
/// kl_reverse, wall_ms.
pub fn trace_header(d: usize) -> String {
    let mut cols = vec![
        "sweep".to_string(),
        "step".into(),
        "method".into(),
        "site".into(),
    ];
    for i in 0..d {
        cols.push(format!("mu_{i}"));
    }
    for i in 0..d {
        for j in 0..d {
            cols.push(format!("sigma_{i}{j}"));
        }
    }
    cols.push("e_grad_norm".into());
    cols.push("damping".into());
    cols.push("kl_reverse".into());
    cols.push("wall_ms".into());
    cols.join(",")
}

pub fn write_trace_csv(path: &Path, trace: &IterationTrace, d: usize) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&trace_header(d));
    out.push('\n');
    for rec in &trace.records {
        let mut cols = vec![
            rec.sweep.to_string(),
            rec.step.to_string(),
            rec.method.tag().to_string(),
            rec.site.map(|s| s.to_string()).unwrap_or_default(),
        ];
        for i in 0..d {
            cols.push(f17(rec.global_mu[i]));
        }
        for i in 0..d {
            for j in 0..d {
                cols.push(f17(rec.global_sigma.get(i, j)));
            }
        }
        cols.push(f17(rec.e_grad_norm));
        cols.push(f17(rec.damping));
        cols.push(rec.kl_reverse.map(f17).unwrap_or_default());
        cols.push(f17(rec.wall_ms));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Generic rectangular CSV writer (header + prerendered rows).
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f17_round_trips() {
        for &x in &[
            0.1,
            -3.25e-7,
            123456.789,
            f64::MIN_POSITIVE,
            0.4700123896616182,
        ] {
            let s = f17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn json_floats_use_17_digits() {
        #[derive(Serialize)]
        struct T {
            v: f64,
        }
        let s = to_json_17(&T { v: 0.1 });
        assert_eq!(s, "{\"v\":1.0000000000000001e-1}");
    }
}
