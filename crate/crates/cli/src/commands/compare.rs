//! `sdi compare`: run several methods on one target, report final
//! moments, reverse KL, sweep counts and pairwise natural-parameter
//! distances as one rectangular CSV.

use sdi_core::approximators::run;
use sdi_core::divergence::kl_reverse;
use sdi_core::GaussianNat;

use crate::output::{f17, write_csv};
use crate::{exit_code, CliError, CliResult};

use super::Workspace;

pub fn cmd_compare(ws: &Workspace, methods_flag: Option<&str>) -> CliResult<u8> {
    let names: Vec<String> = match methods_flag {
        Some(raw) => raw.split(',').map(|s| s.trim().to_string()).collect(),
        None => ws.config.compare.methods.clone().ok_or_else(|| {
            CliError::Config("compare needs --methods or [compare] methods".into())
        })?,
    };
    if names.is_empty() {
        return Err(CliError::Config("compare needs at least one method".into()));
    }
    let schedule = ws.config.schedule()?.with_record_kl(false);
    let init = ws.config.initial_gaussian()?;
    let density = ws.model.density();
    let d = ws.model.dim();

    struct Row {
        name: String,
        converged: bool,
        sweeps: usize,
        kl: Option<f64>,
        mu: Vec<f64>,
        sigma: sdi_core::Matrix,
        nat: GaussianNat,
    }

    let mut rows = Vec::new();
    for name in &names {
        let method = ws.config.method_by_name(name)?;
        let outcome = run(method, &ws.model, init.as_ref(), &schedule, &ws.engine)?;
        let kl = kl_reverse(&outcome.approximation, &density, &ws.engine)
            .ok()
            .map(|r| r.value);
        rows.push(Row {
            name: name.clone(),
            converged: outcome.trace.converged,
            sweeps: outcome.trace.sweeps,
            kl,
            mu: outcome.approximation.mean().to_vec(),
            sigma: outcome.approximation.cov().clone(),
            nat: outcome.approximation.to_nat(),
        });
    }

    let mut header: Vec<String> = vec![
        "method".into(),
        "converged".into(),
        "sweeps".into(),
        "kl_reverse".into(),
    ];
    for i in 0..d {
        header.push(format!("mu_{i}"));
    }
    for i in 0..d {
        for j in 0..d {
            header.push(format!("sigma_{i}{j}"));
        }
    }
    for r in &rows {
        header.push(format!("dist_{}", r.name));
    }

    let mut csv_rows = Vec::new();
    for r in &rows {
        let mut cols = vec![
            r.name.clone(),
            r.converged.to_string(),
            r.sweeps.to_string(),
            r.kl.map(f17).unwrap_or_default(),
        ];
        for i in 0..d {
            cols.push(f17(r.mu[i]));
        }
        for i in 0..d {
            for j in 0..d {
                cols.push(f17(r.sigma.get(i, j)));
            }
        }
        for other in &rows {
            cols.push(f17(r.nat.max_param_distance(&other.nat)));
        }
        csv_rows.push(cols);
    }
    write_csv(&ws.outdir.join("comparison.csv"), &header, &csv_rows)?;

    Ok(if rows.iter().all(|r| r.converged) {
        exit_code::OK
    } else {
        exit_code::NOT_CONVERGED
    })
}
