//! Run driver: iterates any method to its fixed point, with damping,
//! convergence detection, and a full per-update trace.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::divergence;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianMoment, GaussianNat, Role};
use crate::linalg::{self, Matrix};
use crate::target::{TargetDensity, TargetModel};

use super::ep::{
    ep_update_classical_detailed, ep_update_smoothed_detailed, global_approximation, SiteUpdate,
};
use super::steps::{alpha_update, gvb_update, newton_update, ProposedUpdate};
use super::{Method, Schedule, Warnings};

/// Everything recorded about one committed update.
#[derive(Debug, Clone)]
pub struct UpdateRecord {
    /// 1-based sweep index.
    pub sweep: usize,
    /// 0-based global step counter.
    pub step: usize,
    pub method: Method,
    /// Site index for EP updates, absent for global methods.
    pub site: Option<usize>,
    /// The proposed update before damping. Satisfies `B = e_h` and
    /// `r = e_h·center − e_grad` exactly as stored.
    pub proposed: GaussianNat,
    /// Moment form of the proposal when its precision is positive
    /// definite (EP site proposals may be indefinite).
    pub proposed_moment: Option<GaussianMoment>,
    pub center: Vec<f64>,
    pub e_grad: Vec<f64>,
    pub e_h: Matrix,
    pub e_grad_norm: f64,
    pub damping: f64,
    /// Quadrature error estimate attached to the update's expectations.
    pub err_est: f64,
    /// Global approximation after committing this update.
    pub global_mu: Vec<f64>,
    pub global_sigma: Matrix,
    /// Reverse KL of the global approximation, recorded on the last
    /// update of a sweep when KL recording is enabled.
    pub kl_reverse: Option<f64>,
    /// Wall-clock milliseconds for this update (0 unless timing is
    /// enabled and the `std` feature is on).
    pub wall_ms: f64,
}

/// Per-run record of every update plus convergence metadata.
#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub records: Vec<UpdateRecord>,
    pub sweeps: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Result of a full run. `converged` lives on the trace; a run that hits
/// its sweep limit still returns its best approximation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub approximation: GaussianMoment,
    pub trace: IterationTrace,
    /// Final site approximations (EP methods only).
    pub sites: Option<Vec<GaussianNat>>,
}

#[cfg(feature = "std")]
fn clock_ms() -> f64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64() * 1e3)
        .unwrap_or(0.0)
}

#[cfg(not(feature = "std"))]
fn clock_ms() -> f64 {
    0.0
}

fn elapsed_ms(enabled: bool, start: f64) -> f64 {
    if enabled {
        clock_ms() - start
    } else {
        0.0
    }
}

/// Enforce positive definiteness of a proposed density update, flooring
/// the curvature spectrum at 1e-8 when regularization is on.
fn ensure_density(
    update: ProposedUpdate,
    regularize: bool,
    warnings: &mut Warnings,
    context: &str,
) -> Result<ProposedUpdate> {
    if update.nat.is_normalizable() {
        return Ok(update);
    }
    if !regularize {
        return Err(Error::IndefiniteCurvature);
    }
    warnings.push(format!("{context}: indefinite curvature floored at 1e-8"));
    let floored = linalg::floor_spd(&update.e_h, 1e-8);
    let nat = super::steps::complete_square(&update.center, &update.e_grad, &floored)?;
    Ok(ProposedUpdate {
        e_h: floored,
        nat,
        ..update
    })
}

fn record_kl(
    enabled: bool,
    q: &GaussianMoment,
    density: &TargetDensity,
    engine: &Engine,
    warnings: &mut Warnings,
) -> Option<f64> {
    if !enabled {
        return None;
    }
    match divergence::kl_reverse(q, density, engine) {
        Ok(report) => Some(report.value),
        Err(e) => {
            warnings.push(format!("kl recording failed: {e}"));
            None
        }
    }
}

/// Iterate `method` on `target` until the global natural parameters move
/// less than the schedule tolerance over a full sweep, or the sweep limit
/// is reached (in which case the best-so-far approximation is returned
/// with `trace.converged = false`).
pub fn run(
    method: Method,
    target: &TargetModel,
    init: Option<&GaussianMoment>,
    schedule: &Schedule,
    engine: &Engine,
) -> Result<RunOutcome> {
    match method {
        Method::EpClassical | Method::EpSmoothed => run_ep(method, target, init, schedule, engine),
        _ => run_global(method, target, init, schedule, engine),
    }
}

fn run_global(
    method: Method,
    target: &TargetModel,
    init: Option<&GaussianMoment>,
    schedule: &Schedule,
    engine: &Engine,
) -> Result<RunOutcome> {
    schedule.validate(1)?;
    let density = target.density();
    let d = density.dim();
    let mut q = match init {
        Some(q0) => q0.clone(),
        None => GaussianMoment::standard(d),
    };
    if q.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q.dim(),
        });
    }
    let mut trace = IterationTrace::default();
    for sweep in 1..=schedule.max_sweeps {
        let start = if schedule.record_timings {
            clock_ms()
        } else {
            0.0
        };
        let proposed = match method {
            Method::Laplace => newton_update(&q, &density)?,
            Method::Gvb => gvb_update(&q, &density, engine)?,
            Method::Alpha(alpha) => alpha_update(&q, &density, alpha, engine)?,
            _ => unreachable!("EP dispatched separately"),
        };
        let proposed = ensure_density(
            proposed,
            schedule.regularize,
            &mut trace.warnings,
            method.tag(),
        )?;
        let old_nat = q.to_nat();
        let damped = proposed.nat.blend(&old_nat, schedule.damping)?;
        let new_q = damped.to_moment().map_err(|_| Error::IndefiniteCurvature)?;
        let delta = damped.max_param_distance(&old_nat);
        let wall_ms = elapsed_ms(schedule.record_timings, start);
        let kl = record_kl(
            schedule.record_kl,
            &new_q,
            &density,
            engine,
            &mut trace.warnings,
        );
        trace.records.push(UpdateRecord {
            sweep,
            step: trace.records.len(),
            method,
            site: None,
            proposed_moment: proposed.nat.to_moment().ok(),
            proposed: proposed.nat,
            e_grad_norm: linalg::l2_norm(&proposed.e_grad),
            center: proposed.center,
            e_grad: proposed.e_grad,
            e_h: proposed.e_h,
            damping: schedule.damping,
            err_est: proposed.err_est,
            global_mu: new_q.mean().to_vec(),
            global_sigma: new_q.cov().clone(),
            kl_reverse: kl,
            wall_ms,
        });
        trace.sweeps = sweep;
        q = new_q;
        if delta < schedule.tolerance {
            trace.converged = true;
            break;
        }
    }
    Ok(RunOutcome {
        approximation: q,
        trace,
        sites: None,
    })
}

fn initial_sites(n: usize, d: usize, init: Option<&GaussianMoment>) -> Result<Vec<GaussianNat>> {
    // Distribute the initial global approximation (default N(0, 100·I))
    // evenly across the sites, so the first cavity is already
    // normalizable. EP updates replace sites outright, so nothing of this
    // initialization survives at a fixed point.
    let global = match init {
        Some(q0) => {
            if q0.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: q0.dim(),
                });
            }
            q0.clone()
        }
        None => GaussianMoment::new(alloc::vec![0.0; d], Matrix::identity(d).scaled(100.0))?,
    };
    let nat = global.to_nat();
    let share = 1.0 / n as f64;
    let site = GaussianNat::new(
        linalg::scale_vec(nat.r(), share),
        nat.b().scaled(share),
        Role::Site,
    )?;
    Ok(alloc::vec![site; n])
}

fn run_ep(
    method: Method,
    target: &TargetModel,
    init: Option<&GaussianMoment>,
    schedule: &Schedule,
    engine: &Engine,
) -> Result<RunOutcome> {
    let fact = target.factorized().ok_or(Error::InvalidArgument {
        what: "EP methods need a factorized target",
    })?;
    let density = target.density();
    let n = fact.n_sites();
    let d = fact.dim();
    schedule.validate(n)?;
    let mut sites = initial_sites(n, d, init)?;
    let mut trace = IterationTrace::default();
    let mut last_good_global: Option<GaussianMoment> = None;
    let subsets = schedule.sweep_subsets(n);
    for sweep in 1..=schedule.max_sweeps {
        let sweep_start = global_approximation(&sites)?;
        for subset in &subsets {
            // Frozen snapshot per subset: parallel-variant semantics.
            let snapshot = sites.clone();
            let mut staged: Vec<(usize, SiteUpdate)> = Vec::with_capacity(subset.len());
            let start = if schedule.record_timings {
                clock_ms()
            } else {
                0.0
            };
            for &i in subset {
                let update = match method {
                    Method::EpClassical => {
                        ep_update_classical_detailed(i, &snapshot, fact, engine)?
                    }
                    Method::EpSmoothed => ep_update_smoothed_detailed(i, &snapshot, fact, engine)?,
                    _ => unreachable!("global methods dispatched separately"),
                };
                staged.push((i, update));
            }
            let wall_each = elapsed_ms(schedule.record_timings, start) / subset.len().max(1) as f64;
            for (i, update) in staged {
                let damped = update
                    .nat
                    .blend(&sites[i], schedule.damping)?
                    .with_role(Role::Site);
                sites[i] = damped;
                let global_nat = global_approximation(&sites)?;
                let global_moment = match global_nat.to_moment() {
                    Ok(m) => {
                        last_good_global = Some(m.clone());
                        m
                    }
                    Err(_) => {
                        trace.warnings.push(format!(
                            "global approximation indefinite after site {i} in sweep {sweep}"
                        ));
                        last_good_global
                            .clone()
                            .ok_or(Error::CavityNotNormalizable { site: i })?
                    }
                };
                trace.records.push(UpdateRecord {
                    sweep,
                    step: trace.records.len(),
                    method,
                    site: Some(i),
                    proposed_moment: update.nat.to_moment().ok(),
                    proposed: update.nat,
                    e_grad_norm: linalg::l2_norm(&update.e_grad),
                    center: update.center,
                    e_grad: update.e_grad,
                    e_h: update.e_h,
                    damping: schedule.damping,
                    err_est: update.err_est,
                    global_mu: global_moment.mean().to_vec(),
                    global_sigma: global_moment.cov().clone(),
                    kl_reverse: None,
                    wall_ms: wall_each,
                });
            }
        }
        trace.sweeps = sweep;
        let sweep_end = global_approximation(&sites)?;
        if schedule.record_kl {
            if let Ok(q) = sweep_end.to_moment() {
                let kl = record_kl(true, &q, &density, engine, &mut trace.warnings);
                if let Some(last) = trace.records.last_mut() {
                    last.kl_reverse = kl;
                }
            }
        }
        if sweep_end.max_param_distance(&sweep_start) < schedule.tolerance {
            trace.converged = true;
            break;
        }
    }
    let approximation = global_approximation(&sites)?
        .to_moment()
        .map_err(|_| Error::IndefiniteCurvature)?;
    Ok(RunOutcome {
        approximation,
        trace,
        sites: Some(sites),
    })
}

/// Newton-iterate to the Laplace approximation: mean at the mode of the
/// target, precision its Hessian there. Errors with `MaxIterations` when
/// the schedule's sweep budget runs out first.
pub fn laplace(
    target: &TargetDensity,
    init: Option<&GaussianMoment>,
    schedule: &Schedule,
) -> Result<(GaussianMoment, IterationTrace)> {
    let engine = Engine::with_defaults();
    let outcome = run(
        Method::Laplace,
        &TargetModel::Density(target.clone()),
        init,
        schedule,
        &engine,
    )?;
    if !outcome.trace.converged {
        return Err(Error::MaxIterations {
            sweeps: outcome.trace.sweeps,
        });
    }
    Ok((outcome.approximation, outcome.trace))
}
