//! `sdi run`: one method on one target; writes trace.csv, summary.json
//! and final.json.

use sdi_core::approximators::run;

use crate::output::{write_json, write_trace_csv, FinalApproximation, RunSummary};
use crate::{exit_code, CliResult};

use super::Workspace;

pub fn cmd_run(ws: &Workspace) -> CliResult<u8> {
    let method = ws.config.method()?;
    let schedule = ws.config.schedule()?;
    let init = ws.config.initial_gaussian()?;
    let outcome = run(method, &ws.model, init.as_ref(), &schedule, &ws.engine)?;

    write_trace_csv(&ws.outdir.join("trace.csv"), &outcome.trace, ws.model.dim())?;
    write_json(
        &ws.outdir.join("summary.json"),
        &RunSummary::from_outcome(method, &outcome),
    )?;
    write_json(
        &ws.outdir.join("final.json"),
        &FinalApproximation {
            moment: outcome.approximation.clone(),
            natural: outcome.approximation.to_nat(),
        },
    )?;

    Ok(if outcome.trace.converged {
        exit_code::OK
    } else {
        exit_code::NOT_CONVERGED
    })
}
