//! Single-step updates for the globally-smoothed methods.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::engine::{Engine, UnnormalizedDensity};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianMoment, GaussianNat, Role};
use crate::linalg::{self, Matrix};
use crate::target::TargetDensity;

/// Complete the square: the Gaussian `exp(−⟨e_grad, θ−μ⟩ − ½⟨θ−μ, e_h (θ−μ)⟩)`
/// in natural parameters, i.e. `B = EH`, `r = EH·μ − E∇`.
pub fn complete_square(center: &[f64], e_grad: &[f64], e_h: &Matrix) -> Result<GaussianNat> {
    let r = linalg::sub_vec(&e_h.matvec(center), e_grad);
    GaussianNat::new(r, e_h.clone(), Role::Density)
}

/// One proposed update, before damping, with what produced it.
#[derive(Debug, Clone)]
pub(crate) struct ProposedUpdate {
    pub center: Vec<f64>,
    pub e_grad: Vec<f64>,
    pub e_h: Matrix,
    pub nat: GaussianNat,
    pub err_est: f64,
}

impl ProposedUpdate {
    fn assemble(center: Vec<f64>, e_grad: Vec<f64>, e_h: Matrix, err_est: f64) -> Result<Self> {
        let nat = complete_square(&center, &e_grad, &e_h)?;
        Ok(ProposedUpdate {
            center,
            e_grad,
            e_h,
            nat,
            err_est,
        })
    }
}

pub(crate) fn newton_update(q: &GaussianMoment, target: &TargetDensity) -> Result<ProposedUpdate> {
    let mu = q.mean().to_vec();
    let grad = target.grad_psi(&mu);
    let hess = target.hess_psi(&mu).symmetrized();
    ProposedUpdate::assemble(mu, grad, hess, 0.0)
}

pub(crate) fn gvb_update(
    q: &GaussianMoment,
    target: &TargetDensity,
    engine: &Engine,
) -> Result<ProposedUpdate> {
    let grad = |theta: &[f64]| target.grad_psi(theta);
    let hess = |theta: &[f64]| target.hess_psi(theta);
    let ex =
        engine.expect_under_gaussian(q, Some(&grad), Some(&hess), None, engine.config().mode)?;
    let e_grad = ex.e_grad.expect("gradient integrand requested");
    let e_h = ex
        .e_hess
        .expect("hessian integrand requested")
        .symmetrized();
    ProposedUpdate::assemble(q.mean().to_vec(), e_grad, e_h, ex.err_est)
}

pub(crate) fn alpha_update(
    q: &GaussianMoment,
    target: &TargetDensity,
    alpha: f64,
    engine: &Engine,
) -> Result<ProposedUpdate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument {
            what: "alpha must lie strictly between 0 and 1",
        });
    }
    let h = alpha_hybrid(q, target, alpha, engine);
    let grad = |theta: &[f64]| target.grad_psi(theta);
    let summary = engine.hybrid_moments(&h, &grad, engine.config().mode)?;
    ProposedUpdate::assemble(summary.mu_h, summary.e_grad, summary.e_h, summary.err_est)
}

/// The geometric mixture `h ∝ q^α · p^{1−α}` with the engine's inflated
/// proposal attached.
pub fn alpha_hybrid(
    q: &GaussianMoment,
    target: &TargetDensity,
    alpha: f64,
    engine: &Engine,
) -> UnnormalizedDensity {
    let qc = q.clone();
    let tc = target.clone();
    let log_density =
        Arc::new(move |theta: &[f64]| alpha * qc.log_pdf(theta) - (1.0 - alpha) * tc.psi(theta));
    UnnormalizedDensity::new(q.dim(), log_density, engine.inflate(q))
        .expect("dimensions match by construction")
}

fn into_moment(update: ProposedUpdate) -> Result<GaussianMoment> {
    update
        .nat
        .to_moment()
        .map_err(|_| Error::IndefiniteCurvature)
}

/// Newton / Gaussian-iterating step: second-order expansion of ψ around
/// the current mean. The mean dynamics are exactly those of the classical
/// Newton recursion.
pub fn newton_step(q: &GaussianMoment, target: &TargetDensity) -> Result<GaussianMoment> {
    into_moment(newton_update(q, target)?)
}

/// Gaussian-smoothed step: Newton with ∇ψ/Hψ replaced by their
/// expectations under the current approximation. Fixed points minimize
/// the reverse KL divergence over Gaussians.
pub fn gvb_step(
    q: &GaussianMoment,
    target: &TargetDensity,
    engine: &Engine,
) -> Result<GaussianMoment> {
    into_moment(gvb_update(q, target, engine)?)
}

/// Hybrid-smoothed step: expectations under `h ∝ q^α p^{1−α}`, centered
/// at the hybrid mean, with the integration-by-parts curvature
/// `Cov_h⁻¹ E_h[|θ−μ_h⟩⟨∇ψ|]`. Fixed points are critical points of the
/// α-divergence.
pub fn alpha_step(
    q: &GaussianMoment,
    target: &TargetDensity,
    alpha: f64,
    engine: &Engine,
) -> Result<GaussianMoment> {
    into_moment(alpha_update(q, target, alpha, engine)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::make_gaussian_target;

    #[test]
    fn newton_is_exact_on_gaussian() {
        let t = make_gaussian_target(alloc::vec![0.0], Matrix::identity(1)).unwrap();
        let q = GaussianMoment::scalar(3.0, 4.0).unwrap();
        let next = newton_step(&q, &t).unwrap();
        assert!(next.mean()[0].abs() < 1e-12);
        assert!((next.cov().get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn newton_fixed_point_at_mode() {
        let t = crate::target::make_skew_target(2.0, 1.5);
        // run to the mode first
        let mut q = GaussianMoment::standard(1);
        for _ in 0..50 {
            q = newton_step(&q, &t).unwrap();
        }
        let next = newton_step(&q, &t).unwrap();
        assert!((next.mean()[0] - q.mean()[0]).abs() < 1e-14);
    }

    #[test]
    fn newton_rejects_concave_curvature() {
        use alloc::sync::Arc;
        let concave =
            crate::target::TargetDensity::from_psi(1, Arc::new(|t: &[f64]| -t[0] * t[0]), false);
        let q = GaussianMoment::standard(1);
        assert!(matches!(
            newton_step(&q, &concave),
            Err(Error::IndefiniteCurvature)
        ));
    }

    #[test]
    fn gvb_one_shot_on_gaussian() {
        let t = make_gaussian_target(
            alloc::vec![0.4, -0.2],
            Matrix::from_rows(&[alloc::vec![1.0, 0.3], alloc::vec![0.3, 0.7]]).unwrap(),
        )
        .unwrap();
        let q = GaussianMoment::standard(2);
        let engine = Engine::with_defaults();
        let next = gvb_step(&q, &t, &engine).unwrap();
        assert!((next.mean()[0] - 0.4).abs() < 1e-9);
        assert!((next.mean()[1] + 0.2).abs() < 1e-9);
        assert!(next.cov().sub(t.reference_moments().unwrap().1).max_abs() < 1e-9);
    }

    #[test]
    fn alpha_fixed_at_target() {
        let t = make_gaussian_target(
            alloc::vec![0.7],
            Matrix::from_rows(&[alloc::vec![0.5]]).unwrap(),
        )
        .unwrap();
        let q = GaussianMoment::scalar(0.7, 0.5).unwrap();
        let engine = Engine::with_defaults();
        for alpha in [0.25, 0.5, 0.9] {
            let next = alpha_step(&q, &t, alpha, &engine).unwrap();
            assert!((next.mean()[0] - 0.7).abs() < 1e-9, "alpha {alpha}");
            assert!((next.cov().get(0, 0) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_range_enforced() {
        let t = make_gaussian_target(alloc::vec![0.0], Matrix::identity(1)).unwrap();
        let q = GaussianMoment::standard(1);
        let engine = Engine::with_defaults();
        assert!(alpha_step(&q, &t, 1.0, &engine).is_err());
        assert!(alpha_step(&q, &t, 0.0, &engine).is_err());
    }
}
