//! `sdi folk-theorem`: temper a factorized target by k ∈ {…}, run EP on
//! each, and report how both the EP-vs-GVB fixed-point distance and the
//! hybrid-vs-global KL collapse as sites weaken.

use sdi_core::approximators::{ep_build_hybrid, run, Method};
use sdi_core::divergence::kl_density_to_gaussian;
use sdi_core::target::{temper, TargetModel};

use crate::output::{f17, write_csv};
use crate::{exit_code, CliError, CliResult};

use super::Workspace;

pub fn cmd_folk_theorem(ws: &Workspace, k_flag: Option<&str>) -> CliResult<u8> {
    let ks: Vec<usize> =
        match k_flag {
            Some(raw) => super::parse_list(raw, "k")?,
            None => ws.config.folk_theorem.k.clone().ok_or_else(|| {
                CliError::Config("folk-theorem needs --k or [folk_theorem] k".into())
            })?,
        };
    if ks.contains(&0) {
        return Err(CliError::Config("temper factors must be at least 1".into()));
    }
    let base = ws
        .model
        .factorized()
        .ok_or_else(|| CliError::Config("folk-theorem needs a factorized target".into()))?;
    let schedule = ws.config.schedule()?.with_record_kl(false);
    let d = ws.model.dim();

    // Tempering leaves the total energy unchanged, so the reverse-KL
    // fixed point is computed once on the base target.
    let gvb = run(Method::Gvb, &ws.model, None, &schedule, &ws.engine)?;
    let gvb_nat = gvb.approximation.to_nat();

    let mut header: Vec<String> = vec!["k".into(), "n_sites".into(), "converged".into()];
    for i in 0..d {
        header.push(format!("ep_mu_{i}"));
    }
    for i in 0..d {
        for j in 0..d {
            header.push(format!("ep_sigma_{i}{j}"));
        }
    }
    for i in 0..d {
        header.push(format!("gvb_mu_{i}"));
    }
    for i in 0..d {
        for j in 0..d {
            header.push(format!("gvb_sigma_{i}{j}"));
        }
    }
    header.push("nat_distance".into());
    header.push("max_hybrid_kl".into());

    let mut all_converged = true;
    let mut rows = Vec::new();
    for &k in &ks {
        let tempered = temper(base, k)?;
        let model = TargetModel::Factorized(tempered.clone());
        let outcome = run(Method::EpClassical, &model, None, &schedule, &ws.engine)?;
        all_converged &= outcome.trace.converged;
        let q = &outcome.approximation;
        let sites = outcome.sites.as_ref().expect("EP returns sites");

        // how far each tilted distribution is from the global fit
        let mut max_kl = 0.0f64;
        for i in 0..tempered.n_sites() {
            let hybrid = ep_build_hybrid(i, sites, &tempered, &ws.engine)?;
            let (kl, _) = kl_density_to_gaussian(&hybrid, q, &ws.engine)?;
            max_kl = max_kl.max(kl);
        }

        let mut cols = vec![
            k.to_string(),
            tempered.n_sites().to_string(),
            outcome.trace.converged.to_string(),
        ];
        for i in 0..d {
            cols.push(f17(q.mean()[i]));
        }
        for i in 0..d {
            for j in 0..d {
                cols.push(f17(q.cov().get(i, j)));
            }
        }
        for i in 0..d {
            cols.push(f17(gvb.approximation.mean()[i]));
        }
        for i in 0..d {
            for j in 0..d {
                cols.push(f17(gvb.approximation.cov().get(i, j)));
            }
        }
        cols.push(f17(q.to_nat().max_param_distance(&gvb_nat)));
        cols.push(f17(max_kl));
        rows.push(cols);
    }
    write_csv(&ws.outdir.join("folk_theorem.csv"), &header, &rows)?;

    Ok(if all_converged {
        exit_code::OK
    } else {
        exit_code::NOT_CONVERGED
    })
}
