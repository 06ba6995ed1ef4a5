//! `sdi sweep-alpha`: α-hybrid fixed points across an α grid, with the
//! distance to the reverse-KL (α → 1) fixed point and the α-divergence
//! at each fixed point.

use sdi_core::approximators::{run, Method};
use sdi_core::divergence::d_alpha;

use crate::output::{f17, write_csv};
use crate::{exit_code, CliError, CliResult};

use super::Workspace;

pub fn cmd_sweep_alpha(ws: &Workspace, alphas_flag: Option<&str>) -> CliResult<u8> {
    let alphas: Vec<f64> = match alphas_flag {
        Some(raw) => super::parse_list(raw, "alpha")?,
        None => ws.config.sweep_alpha.alphas.clone().ok_or_else(|| {
            CliError::Config("sweep-alpha needs --alphas or [sweep_alpha] alphas".into())
        })?,
    };
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(CliError::Config(
            "sweep-alpha values must lie strictly inside (0, 1)".into(),
        ));
    }
    let schedule = ws.config.schedule()?.with_record_kl(false);
    let init = ws.config.initial_gaussian()?;
    let density = ws.model.density();
    let d = ws.model.dim();

    let gvb = run(Method::Gvb, &ws.model, init.as_ref(), &schedule, &ws.engine)?;
    let gvb_nat = gvb.approximation.to_nat();

    let mut header: Vec<String> = vec!["alpha".into(), "converged".into(), "sweeps".into()];
    for i in 0..d {
        header.push(format!("mu_{i}"));
    }
    for i in 0..d {
        for j in 0..d {
            header.push(format!("sigma_{i}{j}"));
        }
    }
    header.push("dist_to_gvb".into());
    header.push("d_alpha".into());

    let mut all_converged = true;
    let mut rows = Vec::new();
    for &alpha in &alphas {
        let outcome = run(
            Method::Alpha(alpha),
            &ws.model,
            init.as_ref(),
            &schedule,
            &ws.engine,
        )?;
        all_converged &= outcome.trace.converged;
        let q = &outcome.approximation;
        let div = d_alpha(&density, q, alpha, &ws.engine).ok();
        let mut cols = vec![
            f17(alpha),
            outcome.trace.converged.to_string(),
            outcome.trace.sweeps.to_string(),
        ];
        for i in 0..d {
            cols.push(f17(q.mean()[i]));
        }
        for i in 0..d {
            for j in 0..d {
                cols.push(f17(q.cov().get(i, j)));
            }
        }
        cols.push(f17(q.to_nat().max_param_distance(&gvb_nat)));
        cols.push(div.map(|r| f17(r.value)).unwrap_or_default());
        rows.push(cols);
    }
    write_csv(&ws.outdir.join("sweep_alpha.csv"), &header, &rows)?;

    Ok(if all_converged {
        exit_code::OK
    } else {
        exit_code::NOT_CONVERGED
    })
}
