//! Divergence values and their gradients in the (μ, S) parameterization,
//! where S is the lower-triangular covariance square root fixed by the
//! Gaussian module.
//!
//! The α-divergence convention used throughout:
//!
//! ```text
//! D_α(p, q) = (1 − ∫ p^{1−α} q^α) / (α(1−α))
//! ```
//!
//! which recovers the squared Hellinger distance at α = ½, the two χ²
//! distances at α = −1 and α = 2, and the forward/reverse KL divergences
//! in the limits α → 0 and α → 1. (Other sources index this family
//! differently; this module fixes the convention above.)

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::engine::{Engine, EngineMode, UnnormalizedDensity};
use crate::error::{Error, Result};
use crate::gaussian::GaussianMoment;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::target::TargetDensity;

/// Which divergence a report describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceKind {
    Alpha(f64),
    KlForward,
    KlReverse,
}

/// A divergence value, optionally with gradients in (μ, S).
#[derive(Debug, Clone)]
pub struct DivergenceReport {
    pub kind: DivergenceKind,
    pub value: f64,
    /// ∇_μ of the divergence.
    pub grad_mu: Option<Vec<f64>>,
    /// ∇_S of the divergence, in the lower-triangular gauge (entries
    /// above the diagonal are zero and are not free parameters).
    pub grad_sqrt: Option<Matrix>,
    /// For the α-divergence gradients: the common positive prefactor
    /// `(∫p^{1−α}q^α)/α` linking them to the plain hybrid expectations.
    pub prefactor: Option<f64>,
    pub err_est: f64,
    /// False when the target's normalizer is unknown and the reported
    /// value is offset by the constant `ln Z_p`.
    pub normalized_target: bool,
}

fn mode(engine: &Engine) -> EngineMode {
    engine.config().mode
}

/// Newton-fit Gaussian at the target's mode; the quadrature proposal for
/// integrals under the target itself.
fn laplace_proposal(target: &TargetDensity) -> Result<GaussianMoment> {
    let d = target.dim();
    let mut x = alloc::vec![0.0; d];
    for _ in 0..100 {
        let g = target.grad_psi(&x);
        let h = target.hess_psi(&x).symmetrized();
        let h = match h.cholesky("newton curvature") {
            Ok(_) => h,
            Err(_) => linalg::floor_spd(&h, 1e-8),
        };
        let step = h.cholesky("floored curvature")?.solve(&g);
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi -= si;
        }
        if linalg::inf_norm(&step) < 1e-12 {
            break;
        }
    }
    let h = target.hess_psi(&x).symmetrized();
    let h = match h.cholesky("mode curvature") {
        Ok(_) => h,
        Err(_) => linalg::floor_spd(&h, 1e-8),
    };
    let cov = h.cholesky("mode curvature")?.inverse();
    GaussianMoment::new(x, cov)
}

/// `ln Z_p` of the target: exact when registered, otherwise integrated
/// under a Laplace-fit proposal. Returns (value, error estimate).
pub fn target_log_normalizer(target: &TargetDensity, engine: &Engine) -> Result<(f64, f64)> {
    if let Some(c) = target.log_normalizer() {
        return Ok((c, 0.0));
    }
    let proposal = engine.inflate(&laplace_proposal(target)?);
    let t = target.clone();
    let h = UnnormalizedDensity::new(
        target.dim(),
        Arc::new(move |theta: &[f64]| -t.psi(theta)),
        proposal,
    )?;
    engine.log_normalizer(&h, mode(engine), None)
}

/// Reverse KL divergence `KL(q, p) = E_q[ψ] − H(q) + ln Z_p`. When the
/// target's normalizer is unknown the `ln Z_p` term is dropped and the
/// report is flagged; minimizers are unaffected by the constant.
pub fn kl_reverse(
    q: &GaussianMoment,
    target: &TargetDensity,
    engine: &Engine,
) -> Result<DivergenceReport> {
    let scalar = |theta: &[f64]| target.psi(theta);
    let ex = engine.expect_under_gaussian(q, None, None, Some(&scalar), mode(engine))?;
    let e_psi = ex.e_scalar.expect("scalar integrand requested");
    let (log_z, normalized) = match target.log_normalizer() {
        Some(c) => (c, true),
        None => (0.0, false),
    };
    Ok(DivergenceReport {
        kind: DivergenceKind::KlReverse,
        value: e_psi - q.entropy() + log_z,
        grad_mu: None,
        grad_sqrt: None,
        prefactor: None,
        err_est: ex.err_est,
        normalized_target: normalized,
    })
}

/// Inverse of a lower-triangular matrix (by forward substitution).
fn lower_tri_inverse(l: &Matrix) -> Matrix {
    let n = l.n();
    let mut out = Matrix::zeros(n);
    let mut e = alloc::vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = linalg::forward_substitute(l, &e);
        for i in 0..n {
            out.set(i, j, col[i]);
        }
    }
    out
}

/// Reverse KL with its (μ, S) gradients:
/// `∇_μ = E_q[∇ψ]` and `∇_S = tril(E_q[Hψ]·S − S⁻ᵀ)`.
pub fn kl_gradients(
    q: &GaussianMoment,
    target: &TargetDensity,
    engine: &Engine,
) -> Result<DivergenceReport> {
    let grad = |theta: &[f64]| target.grad_psi(theta);
    let hess = |theta: &[f64]| target.hess_psi(theta);
    let scalar = |theta: &[f64]| target.psi(theta);
    let ex =
        engine.expect_under_gaussian(q, Some(&grad), Some(&hess), Some(&scalar), mode(engine))?;
    let e_grad = ex.e_grad.expect("gradient integrand requested");
    let e_hess = ex.e_hess.expect("hessian integrand requested");
    let e_psi = ex.e_scalar.expect("scalar integrand requested");
    let s = q.sqrt_factor();
    let s_inv_t = lower_tri_inverse(s).transpose();
    let grad_sqrt = e_hess.matmul(s).sub(&s_inv_t).lower_triangle();
    let (log_z, normalized) = match target.log_normalizer() {
        Some(c) => (c, true),
        None => (0.0, false),
    };
    Ok(DivergenceReport {
        kind: DivergenceKind::KlReverse,
        value: e_psi - q.entropy() + log_z,
        grad_mu: Some(e_grad),
        grad_sqrt: Some(grad_sqrt),
        prefactor: None,
        err_est: ex.err_est,
        normalized_target: normalized,
    })
}

/// The geometric-mixture integrand `p^{1−α} q^α` as an unnormalized
/// density, with `p` normalized through `ln Z_p`.
fn alpha_mixture(
    target: &TargetDensity,
    q: &GaussianMoment,
    alpha: f64,
    log_z_p: f64,
    proposal: GaussianMoment,
) -> Result<UnnormalizedDensity> {
    let t = target.clone();
    let qc = q.clone();
    UnnormalizedDensity::new(
        q.dim(),
        Arc::new(move |theta: &[f64]| {
            (1.0 - alpha) * (-t.psi(theta) - log_z_p) + alpha * qc.log_pdf(theta)
        }),
        proposal,
    )
}

/// α-divergence `D_α(p, q)` for α ∉ {0, 1}. Inside (0, 1) the mixture
/// integral always converges; outside, tail dominance is checked
/// numerically and failure reported as `DivergentIntegral`. Special
/// cases: α = ½ is the squared Hellinger distance, α = −1 and α = 2 the
/// χ² distances with respect to q and p.
pub fn d_alpha(
    target: &TargetDensity,
    q: &GaussianMoment,
    alpha: f64,
    engine: &Engine,
) -> Result<DivergenceReport> {
    if alpha == 0.0 || alpha == 1.0 {
        return Err(Error::InvalidArgument {
            what: "alpha must differ from 0 and 1 (use the KL limits instead)",
        });
    }
    let (log_z_p, zp_err) = target_log_normalizer(target, engine)?;
    let inside = alpha > 0.0 && alpha < 1.0;
    let proposal = if alpha < 0.0 {
        engine.inflate(&laplace_proposal(target)?)
    } else {
        engine.inflate(q)
    };
    let h = alpha_mixture(target, q, alpha, log_z_p, proposal)?;
    let strict = if inside { None } else { Some(alpha) };
    let (log_i, i_err) = engine.log_normalizer(&h, mode(engine), strict)?;
    let i_alpha = math::exp(log_i);
    let denom = alpha * (1.0 - alpha);
    let value = (1.0 - i_alpha) / denom;
    let err_est = i_alpha * (i_err + math::abs(1.0 - alpha) * zp_err) / math::abs(denom);
    Ok(DivergenceReport {
        kind: DivergenceKind::Alpha(alpha),
        value,
        grad_mu: None,
        grad_sqrt: None,
        prefactor: None,
        err_est,
        normalized_target: true,
    })
}

/// α-divergence gradients in (μ, S) for α ∈ (0, 1):
/// `∇_μ = (I_α/α)·E_h[∇ψ]` and
/// `∇_S = (I_α/α)·tril(E_h[|∇ψ⟩⟨θ−μ_q|]·S⁻ᵀ − diag(1/Sᵢᵢ))`,
/// with expectations under the hybrid `h ∝ p^{1−α} q^α`. The prefactor
/// `I_α/α` is reported separately; both gradients vanish exactly at the
/// hybrid critical points.
pub fn d_alpha_gradients(
    target: &TargetDensity,
    q: &GaussianMoment,
    alpha: f64,
    engine: &Engine,
) -> Result<DivergenceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument {
            what: "alpha-divergence gradients need alpha strictly inside (0, 1)",
        });
    }
    let (log_z_p, zp_err) = target_log_normalizer(target, engine)?;
    let h = alpha_mixture(target, q, alpha, log_z_p, engine.inflate(q))?;
    let grad = |theta: &[f64]| target.grad_psi(theta);
    let summary = engine.hybrid_moments(&h, &grad, mode(engine))?;
    let i_alpha = math::exp(summary.log_z);
    let prefactor = i_alpha / alpha;
    let grad_mu = linalg::scale_vec(&summary.e_grad, prefactor);
    // E_h[(θ−μ_q)·∇ψᵀ] from the μ_h-centered cross moment.
    let d = q.dim();
    let shift = linalg::sub_vec(&summary.mu_h, q.mean());
    let mut cross_q = summary.e_cross.clone();
    for i in 0..d {
        for j in 0..d {
            cross_q.add_at(i, j, shift[i] * summary.e_grad[j]);
        }
    }
    let s = q.sqrt_factor();
    let s_inv_t = lower_tri_inverse(s).transpose();
    let mut grad_sqrt = cross_q.transpose().matmul(&s_inv_t);
    for i in 0..d {
        grad_sqrt.add_at(i, i, -1.0 / s.get(i, i));
    }
    let grad_sqrt = grad_sqrt.lower_triangle().scaled(prefactor);
    let denom = alpha * (1.0 - alpha);
    let value = (1.0 - i_alpha) / denom;
    let err_est = (summary.err_est + (1.0 - alpha) * zp_err) * (1.0 + math::abs(prefactor))
        / math::abs(denom).min(1.0);
    Ok(DivergenceReport {
        kind: DivergenceKind::Alpha(alpha),
        value,
        grad_mu: Some(grad_mu),
        grad_sqrt: Some(grad_sqrt),
        prefactor: Some(prefactor),
        err_est,
        normalized_target: true,
    })
}

/// Forward KL divergence `KL(p, q) = E_p[log p − log q]`, with the
/// target's normalizer taken from the same integration pass (so built-in
/// and numerically-normalized targets are handled identically).
pub fn kl_forward(
    target: &TargetDensity,
    q: &GaussianMoment,
    engine: &Engine,
) -> Result<DivergenceReport> {
    let proposal = engine.inflate(&laplace_proposal(target)?);
    let t = target.clone();
    let h = UnnormalizedDensity::new(
        target.dim(),
        Arc::new(move |theta: &[f64]| -t.psi(theta)),
        proposal,
    )?;
    let qc = q.clone();
    let ts = target.clone();
    let scalar = move |theta: &[f64]| -ts.psi(theta) - qc.log_pdf(theta);
    let (e_s, log_z, err) = engine.scalar_expectation(&h, &scalar, mode(engine))?;
    Ok(DivergenceReport {
        kind: DivergenceKind::KlForward,
        value: e_s - log_z,
        grad_mu: None,
        grad_sqrt: None,
        prefactor: None,
        err_est: err,
        normalized_target: true,
    })
}

/// `KL(h/Z_h ‖ q)` of an unnormalized density against a Gaussian — the
/// diagnostic showing EP hybrids collapsing onto the global
/// approximation under tempering. Returns (value, error estimate).
pub fn kl_density_to_gaussian(
    h: &UnnormalizedDensity,
    q: &GaussianMoment,
    engine: &Engine,
) -> Result<(f64, f64)> {
    let hc = h.clone();
    let qc = q.clone();
    let scalar = move |theta: &[f64]| hc.log_density(theta) - qc.log_pdf(theta);
    let (e_s, log_z, err) = engine.scalar_expectation(h, &scalar, mode(engine))?;
    Ok((e_s - log_z, err))
}
