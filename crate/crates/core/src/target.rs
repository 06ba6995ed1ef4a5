//! Target densities `p(θ) ∝ exp(−ψ(θ))` and factorized targets
//! `p = ∏ fᵢ` with per-site energies `φᵢ = −log fᵢ`, exposing value,
//! gradient and Hessian oracles for every registered model.
//!
//! Built-in models: exact Gaussians (the correctness oracle every
//! approximator must reproduce), a skewed 1-d convex energy, logistic
//! regression and probit regression factor models, and 1-d targets defined
//! by tabulated energies on a grid (cubic-spline interpolated).

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gaussian::GaussianNat;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::GaussianMoment;

pub type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type HessFn = dyn Fn(&[f64]) -> Matrix + Send + Sync;

/// A target density described by its energy ψ and derivative oracles.
///
/// `p(θ) = exp(−ψ(θ)) / Z_p`; `log_normalizer` is `ln Z_p` when known
/// (notably `Some(0.0)` for built-in Gaussians whose ψ includes the full
/// normalizer) and `None` for targets known only up to a constant.
#[derive(Clone)]
pub struct TargetDensity {
    d: usize,
    psi: Arc<ValueFn>,
    grad: Arc<GradFn>,
    hess: Arc<HessFn>,
    convex: bool,
    reference_moments: Option<(Vec<f64>, Matrix)>,
    log_normalizer: Option<f64>,
}

impl core::fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TargetDensity")
            .field("d", &self.d)
            .field("convex", &self.convex)
            .field("reference_moments", &self.reference_moments.is_some())
            .field("log_normalizer", &self.log_normalizer)
            .finish()
    }
}

impl TargetDensity {
    pub fn new(
        d: usize,
        psi: Arc<ValueFn>,
        grad: Arc<GradFn>,
        hess: Arc<HessFn>,
        convex: bool,
    ) -> Self {
        TargetDensity {
            d,
            psi,
            grad,
            hess,
            convex,
            reference_moments: None,
            log_normalizer: None,
        }
    }

    /// Register a target from its energy alone; gradient and Hessian fall
    /// back to central finite differences with step `1e-5·(1+|θᵢ|)`.
    pub fn from_psi(d: usize, psi: Arc<ValueFn>, convex: bool) -> Self {
        let grad_psi = Arc::clone(&psi);
        let grad: Arc<GradFn> = Arc::new(move |theta: &[f64]| fd_gradient(&*grad_psi, theta));
        let hess_grad = Arc::clone(&grad);
        let hess: Arc<HessFn> = Arc::new(move |theta: &[f64]| fd_jacobian(&*hess_grad, theta));
        TargetDensity::new(d, psi, grad, hess, convex)
    }

    pub fn with_reference_moments(mut self, mean: Vec<f64>, cov: Matrix) -> Self {
        self.reference_moments = Some((mean, cov));
        self
    }

    pub fn with_log_normalizer(mut self, log_z: f64) -> Self {
        self.log_normalizer = Some(log_z);
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn psi(&self, theta: &[f64]) -> f64 {
        (self.psi)(theta)
    }

    pub fn grad_psi(&self, theta: &[f64]) -> Vec<f64> {
        (self.grad)(theta)
    }

    pub fn hess_psi(&self, theta: &[f64]) -> Matrix {
        (self.hess)(theta)
    }

    pub fn convex(&self) -> bool {
        self.convex
    }

    pub fn reference_moments(&self) -> Option<(&[f64], &Matrix)> {
        self.reference_moments
            .as_ref()
            .map(|(m, c)| (m.as_slice(), c))
    }

    /// `ln Z_p` when the registered energy has a known normalizer.
    pub fn log_normalizer(&self) -> Option<f64> {
        self.log_normalizer
    }
}

/// One factor of a factorized target, with its own derivative oracles.
#[derive(Clone)]
pub struct Site {
    phi: Arc<ValueFn>,
    grad: Arc<GradFn>,
    hess: Arc<HessFn>,
}

impl Site {
    pub fn new(phi: Arc<ValueFn>, grad: Arc<GradFn>, hess: Arc<HessFn>) -> Self {
        Site { phi, grad, hess }
    }

    pub fn phi(&self, theta: &[f64]) -> f64 {
        (self.phi)(theta)
    }

    pub fn grad_phi(&self, theta: &[f64]) -> Vec<f64> {
        (self.grad)(theta)
    }

    pub fn hess_phi(&self, theta: &[f64]) -> Matrix {
        (self.hess)(theta)
    }
}

/// A target split into `n` additive site energies, `ψ = Σᵢ φᵢ`.
#[derive(Clone)]
pub struct FactorizedTarget {
    d: usize,
    sites: Vec<Site>,
    convex: bool,
    reference_moments: Option<(Vec<f64>, Matrix)>,
    log_normalizer: Option<f64>,
}

impl core::fmt::Debug for FactorizedTarget {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FactorizedTarget")
            .field("d", &self.d)
            .field("n_sites", &self.sites.len())
            .field("convex", &self.convex)
            .finish()
    }
}

impl FactorizedTarget {
    pub fn new(d: usize, sites: Vec<Site>, convex: bool) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidArgument {
                what: "factorized target needs at least one site",
            });
        }
        Ok(FactorizedTarget {
            d,
            sites,
            convex,
            reference_moments: None,
            log_normalizer: None,
        })
    }

    pub fn with_reference_moments(mut self, mean: Vec<f64>, cov: Matrix) -> Self {
        self.reference_moments = Some((mean, cov));
        self
    }

    pub fn with_log_normalizer(mut self, log_z: f64) -> Self {
        self.log_normalizer = Some(log_z);
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, i: usize) -> &Site {
        &self.sites[i]
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// The combined target ψ = Σ φᵢ as a single density.
    pub fn combined(&self) -> TargetDensity {
        let d = self.d;
        let sites = self.sites.clone();
        let psi_sites = sites.clone();
        let psi: Arc<ValueFn> =
            Arc::new(move |theta: &[f64]| psi_sites.iter().map(|s| s.phi(theta)).sum());
        let grad_sites = sites.clone();
        let grad: Arc<GradFn> = Arc::new(move |theta: &[f64]| {
            let mut g = vec![0.0; theta.len()];
            for s in &grad_sites {
                for (a, b) in g.iter_mut().zip(s.grad_phi(theta)) {
                    *a += b;
                }
            }
            g
        });
        let hess_sites = sites;
        let hess: Arc<HessFn> = Arc::new(move |theta: &[f64]| {
            let mut h = Matrix::zeros(theta.len());
            for s in &hess_sites {
                h = h.add(&s.hess_phi(theta));
            }
            h
        });
        let mut t = TargetDensity::new(d, psi, grad, hess, self.convex);
        t.reference_moments = self.reference_moments.clone();
        t.log_normalizer = self.log_normalizer;
        t
    }
}

/// Either view of a model, so drivers can accept both kinds.
#[derive(Debug, Clone)]
pub enum TargetModel {
    Density(TargetDensity),
    Factorized(FactorizedTarget),
}

impl TargetModel {
    pub fn dim(&self) -> usize {
        match self {
            TargetModel::Density(t) => t.dim(),
            TargetModel::Factorized(t) => t.dim(),
        }
    }

    pub fn density(&self) -> TargetDensity {
        match self {
            TargetModel::Density(t) => t.clone(),
            TargetModel::Factorized(t) => t.combined(),
        }
    }

    pub fn factorized(&self) -> Option<&FactorizedTarget> {
        match self {
            TargetModel::Density(_) => None,
            TargetModel::Factorized(t) => Some(t),
        }
    }
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + math::abs(x))
}

fn fd_gradient(f: &ValueFn, theta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let h = fd_step(theta[i]);
        probe[i] = theta[i] + h;
        let up = f(&probe);
        probe[i] = theta[i] - h;
        let dn = f(&probe);
        probe[i] = theta[i];
        out[i] = (up - dn) / (2.0 * h);
    }
    out
}

fn fd_jacobian(g: &GradFn, theta: &[f64]) -> Matrix {
    let d = theta.len();
    let mut m = Matrix::zeros(d);
    let mut probe = theta.to_vec();
    for j in 0..d {
        let h = fd_step(theta[j]);
        probe[j] = theta[j] + h;
        let up = g(&probe);
        probe[j] = theta[j] - h;
        let dn = g(&probe);
        probe[j] = theta[j];
        for i in 0..d {
            m.set(i, j, (up[i] - dn[i]) / (2.0 * h));
        }
    }
    m.symmetrized()
}

/// Exact Gaussian target N(μ, Σ). Its energy is the full negative log
/// density (normalizer included), so `log_normalizer = 0` and every
/// approximator in the crate must recover (μ, Σ) exactly.
pub fn make_gaussian_target(mu: Vec<f64>, sigma: Matrix) -> Result<TargetDensity> {
    let q = GaussianMoment::new(mu.clone(), sigma.clone())?;
    let precision = q.to_nat().b().clone();
    let d = q.dim();
    let psi_q = q.clone();
    let psi: Arc<ValueFn> = Arc::new(move |theta: &[f64]| -psi_q.log_pdf(theta));
    let grad_mu = mu.clone();
    let grad_b = precision.clone();
    let grad: Arc<GradFn> =
        Arc::new(move |theta: &[f64]| grad_b.matvec(&linalg::sub_vec(theta, &grad_mu)));
    let hess_b = precision;
    let hess: Arc<HessFn> = Arc::new(move |_theta: &[f64]| hess_b.clone());
    Ok(TargetDensity::new(d, psi, grad, hess, true)
        .with_reference_moments(mu, sigma)
        .with_log_normalizer(0.0))
}

/// Split an exact Gaussian target into `n` identical sites φᵢ = ψ/n.
pub fn split_gaussian_target(mu: Vec<f64>, sigma: Matrix, n: usize) -> Result<FactorizedTarget> {
    if n == 0 {
        return Err(Error::InvalidArgument {
            what: "site count must be at least 1",
        });
    }
    let t = make_gaussian_target(mu.clone(), sigma.clone())?;
    let scale = 1.0 / n as f64;
    let mut sites = Vec::with_capacity(n);
    for _ in 0..n {
        let pv = t.psi.clone();
        let gv = t.grad.clone();
        let hv = t.hess.clone();
        sites.push(Site::new(
            Arc::new(move |theta: &[f64]| scale * pv(theta)),
            Arc::new(move |theta: &[f64]| linalg::scale_vec(&gv(theta), scale)),
            Arc::new(move |theta: &[f64]| hv(theta).scaled(scale)),
        ));
    }
    Ok(FactorizedTarget::new(t.d, sites, true)?
        .with_reference_moments(mu, sigma)
        .with_log_normalizer(0.0))
}

/// Factorized target whose sites are explicit Gaussian factors
/// φᵢ(θ) = ½⟨θ, Bᵢ θ⟩ − ⟨rᵢ, θ⟩. Individual sites may be indefinite as
/// long as the sum is positive definite.
pub fn make_gaussian_site_target(site_params: Vec<GaussianNat>) -> Result<FactorizedTarget> {
    let d = site_params
        .first()
        .ok_or(Error::InvalidArgument {
            what: "at least one Gaussian site required",
        })?
        .dim();
    let mut total = GaussianNat::zero(d);
    for s in &site_params {
        total = total.multiply(s)?;
    }
    let global = total.to_moment()?; // rejects a non-PD sum
    let sites = site_params
        .into_iter()
        .map(|s| {
            let r = s.r().to_vec();
            let b = s.b().clone();
            let (rp, bp, bh) = (r.clone(), b.clone(), b.clone());
            Site::new(
                Arc::new(move |theta: &[f64]| {
                    0.5 * linalg::dot(theta, &bp.matvec(theta)) - linalg::dot(&rp, theta)
                }),
                Arc::new(move |theta: &[f64]| linalg::sub_vec(&b.matvec(theta), &r)),
                Arc::new(move |_theta: &[f64]| bh.clone()),
            )
        })
        .collect();
    // ∫ exp(−Σφᵢ) = exp(½⟨μ, B μ⟩) (2π)^{d/2} |Σ|^{1/2}
    let quad = 0.5 * linalg::dot(global.mean(), &total.b().matvec(global.mean()));
    let log_z = quad + 0.5 * d as f64 * math::LN_2PI + global.log_det_sqrt();
    Ok(FactorizedTarget::new(d, sites, true)?
        .with_reference_moments(global.mean().to_vec(), global.cov().clone())
        .with_log_normalizer(log_z))
}

/// Where the Gaussian prior of a regression target lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorPlacement {
    /// Each likelihood site absorbs λ/n of the prior precision — keeps
    /// the EP loop uniform.
    #[default]
    Spread,
    /// The prior is appended as one exact Gaussian site of its own.
    ExactSite,
}

/// Logistic-regression posterior energy split one site per observation,
/// with the Gaussian prior spread uniformly across sites:
/// φᵢ(θ) = log(1 + exp(−yᵢ⟨xᵢ, θ⟩)) + (λ/2n)‖θ‖².
pub fn make_logistic_regression_target(
    x_rows: &[Vec<f64>],
    y: &[f64],
    prior_precision: f64,
) -> Result<FactorizedTarget> {
    make_glm_target(
        x_rows,
        y,
        prior_precision,
        GlmLink::Logistic,
        PriorPlacement::Spread,
    )
}

/// Probit-regression posterior energy, one site per observation:
/// φᵢ(θ) = −log Φ(yᵢ⟨xᵢ, θ⟩) + (λ/2n)‖θ‖², with Φ evaluated through a
/// numerically stable complementary-error-function form.
pub fn make_probit_regression_target(
    x_rows: &[Vec<f64>],
    y: &[f64],
    prior_precision: f64,
) -> Result<FactorizedTarget> {
    make_glm_target(
        x_rows,
        y,
        prior_precision,
        GlmLink::Probit,
        PriorPlacement::Spread,
    )
}

/// Logistic-regression target with a chosen prior placement; the
/// combined energy is identical either way.
pub fn make_logistic_target_with_prior(
    x_rows: &[Vec<f64>],
    y: &[f64],
    prior_precision: f64,
    prior: PriorPlacement,
) -> Result<FactorizedTarget> {
    make_glm_target(x_rows, y, prior_precision, GlmLink::Logistic, prior)
}

/// Probit-regression target with a chosen prior placement.
pub fn make_probit_target_with_prior(
    x_rows: &[Vec<f64>],
    y: &[f64],
    prior_precision: f64,
    prior: PriorPlacement,
) -> Result<FactorizedTarget> {
    make_glm_target(x_rows, y, prior_precision, GlmLink::Probit, prior)
}

#[derive(Clone, Copy)]
enum GlmLink {
    Logistic,
    Probit,
}

fn make_glm_target(
    x_rows: &[Vec<f64>],
    y: &[f64],
    prior_precision: f64,
    link: GlmLink,
    prior: PriorPlacement,
) -> Result<FactorizedTarget> {
    if x_rows.is_empty() {
        return Err(Error::InvalidArgument {
            what: "design matrix needs at least one row",
        });
    }
    if x_rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x_rows.len(),
            got: y.len(),
        });
    }
    if prior_precision < 0.0 {
        return Err(Error::InvalidArgument {
            what: "prior precision must be nonnegative",
        });
    }
    let d = x_rows[0].len();
    let n = x_rows.len();
    let lam_n = match prior {
        PriorPlacement::Spread => prior_precision / n as f64,
        PriorPlacement::ExactSite => 0.0,
    };
    let mut sites = Vec::with_capacity(n + 1);
    for (i, (row, &label)) in x_rows.iter().zip(y).enumerate() {
        if label != 1.0 && label != -1.0 {
            return Err(Error::BadLabel {
                index: i,
                value: label,
            });
        }
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        let (xv, xg, xh) = (row.clone(), row.clone(), row.clone());
        let site = match link {
            GlmLink::Logistic => Site::new(
                Arc::new(move |theta: &[f64]| {
                    let z = label * linalg::dot(&xv, theta);
                    math::softplus(-z) + 0.5 * lam_n * linalg::dot(theta, theta)
                }),
                Arc::new(move |theta: &[f64]| {
                    let z = label * linalg::dot(&xg, theta);
                    let w = -label * math::sigmoid(-z);
                    xg.iter()
                        .zip(theta)
                        .map(|(x, t)| w * x + lam_n * t)
                        .collect()
                }),
                Arc::new(move |theta: &[f64]| {
                    let z = label * linalg::dot(&xh, theta);
                    let s = math::sigmoid(z);
                    let w = s * (1.0 - s);
                    let mut m = linalg::outer(&xh, &xh).scaled(w);
                    for k in 0..m.n() {
                        m.add_at(k, k, lam_n);
                    }
                    m
                }),
            ),
            GlmLink::Probit => Site::new(
                Arc::new(move |theta: &[f64]| {
                    let z = label * linalg::dot(&xv, theta);
                    -math::log_normal_cdf(z) + 0.5 * lam_n * linalg::dot(theta, theta)
                }),
                Arc::new(move |theta: &[f64]| {
                    let z = label * linalg::dot(&xg, theta);
                    let w = -label * math::normal_hazard(z);
                    xg.iter()
                        .zip(theta)
                        .map(|(x, t)| w * x + lam_n * t)
                        .collect()
                }),
                Arc::new(move |theta: &[f64]| {
                    let z = label * linalg::dot(&xh, theta);
                    let s = math::normal_hazard(z);
                    let w = s * (s + z);
                    let mut m = linalg::outer(&xh, &xh).scaled(w);
                    for k in 0..m.n() {
                        m.add_at(k, k, lam_n);
                    }
                    m
                }),
            ),
        };
        sites.push(site);
    }
    if prior == PriorPlacement::ExactSite {
        let lam = prior_precision;
        sites.push(Site::new(
            Arc::new(move |theta: &[f64]| 0.5 * lam * linalg::dot(theta, theta)),
            Arc::new(move |theta: &[f64]| linalg::scale_vec(theta, lam)),
            Arc::new(move |theta: &[f64]| Matrix::identity(theta.len()).scaled(lam)),
        ));
    }
    FactorizedTarget::new(d, sites, true)
}

/// Skewed convex 1-d energy ψ(θ) = θ²/2 + a·softplus(bθ), convex for
/// a ≥ 0. Exercises non-quadratic curvature with asymmetric tails.
pub fn make_skew_target(a: f64, b: f64) -> TargetDensity {
    let psi: Arc<ValueFn> =
        Arc::new(move |theta: &[f64]| 0.5 * theta[0] * theta[0] + a * math::softplus(b * theta[0]));
    let grad: Arc<GradFn> =
        Arc::new(move |theta: &[f64]| vec![theta[0] + a * b * math::sigmoid(b * theta[0])]);
    let hess: Arc<HessFn> = Arc::new(move |theta: &[f64]| {
        let s = math::sigmoid(b * theta[0]);
        let mut m = Matrix::zeros(1);
        m.set(0, 0, 1.0 + a * b * b * s * (1.0 - s));
        m
    });
    TargetDensity::new(1, psi, grad, hess, a >= 0.0)
}

/// 1-d target from tabulated energies on a strictly increasing grid,
/// interpolated by a natural cubic spline and continued along the
/// boundary tangents beyond the grid ends.
pub fn make_grid_target(xs: &[f64], psi_vals: &[f64]) -> Result<TargetDensity> {
    if xs.len() != psi_vals.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: psi_vals.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::InvalidArgument {
            what: "grid target needs at least 4 points",
        });
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument {
            what: "grid abscissae must be strictly increasing",
        });
    }
    let spline = Arc::new(CubicSpline::fit(xs, psi_vals));
    let (sv, sg, sh) = (spline.clone(), spline.clone(), spline);
    Ok(TargetDensity::new(
        1,
        Arc::new(move |theta: &[f64]| sv.eval(theta[0]).0),
        Arc::new(move |theta: &[f64]| vec![sg.eval(theta[0]).1]),
        Arc::new(move |theta: &[f64]| {
            let mut m = Matrix::zeros(1);
            m.set(0, 0, sh.eval(theta[0]).2);
            m
        }),
        false,
    ))
}

/// Natural cubic spline with value/derivative/second-derivative
/// evaluation; quadratic extension outside the knot range.
struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m2: Vec<f64>, // second derivatives at the knots
}

impl CubicSpline {
    fn fit(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        // Thomas algorithm on the natural-spline tridiagonal system.
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            sub[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            sup[i] = h1 / 6.0;
            rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        }
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m2 = vec![0.0; n];
        for i in (1..n - 1).rev() {
            m2[i] = (rhs[i] - sup[i] * m2[i + 1]) / diag[i];
        }
        CubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m2,
        }
    }

    /// (value, first derivative, second derivative) at x. Outside the knot
    /// range the natural spline continues along its boundary tangent.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.xs.len();
        if x < self.xs[0] {
            let (v, d, _) = self.segment(0, self.xs[0]);
            let dx = x - self.xs[0];
            return (v + d * dx, d, 0.0);
        }
        if x > self.xs[n - 1] {
            let (v, d, _) = self.segment(n - 2, self.xs[n - 1]);
            let dx = x - self.xs[n - 1];
            return (v + d * dx, d, 0.0);
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.segment(lo, x)
    }

    fn segment(&self, lo: usize, x: f64) -> (f64, f64, f64) {
        let hi = lo + 1;
        let h = self.xs[hi] - self.xs[lo];
        let a = (self.xs[hi] - x) / h;
        let b = (x - self.xs[lo]) / h;
        let val = a * self.ys[lo]
            + b * self.ys[hi]
            + ((a * a * a - a) * self.m2[lo] + (b * b * b - b) * self.m2[hi]) * h * h / 6.0;
        let der = (self.ys[hi] - self.ys[lo]) / h
            + ((3.0 * b * b - 1.0) * self.m2[hi] - (3.0 * a * a - 1.0) * self.m2[lo]) * h / 6.0;
        let der2 = a * self.m2[lo] + b * self.m2[hi];
        (val, der, der2)
    }
}

/// Replace every site φᵢ by `k` copies of φᵢ/k; the total energy is
/// unchanged while each site's contribution becomes negligible as `k`
/// grows — the regime where EP collapses onto the reverse-KL solution.
pub fn temper(target: &FactorizedTarget, k: usize) -> Result<FactorizedTarget> {
    if k == 0 {
        return Err(Error::InvalidArgument {
            what: "temper factor must be at least 1",
        });
    }
    if k == 1 {
        return Ok(target.clone());
    }
    let scale = 1.0 / k as f64;
    let mut sites = Vec::with_capacity(target.n_sites() * k);
    for site in target.sites() {
        for _ in 0..k {
            let (pv, gv, hv) = (site.phi.clone(), site.grad.clone(), site.hess.clone());
            sites.push(Site::new(
                Arc::new(move |theta: &[f64]| scale * pv(theta)),
                Arc::new(move |theta: &[f64]| linalg::scale_vec(&gv(theta), scale)),
                Arc::new(move |theta: &[f64]| hv(theta).scaled(scale)),
            ));
        }
    }
    let mut out = FactorizedTarget::new(target.d, sites, target.convex)?;
    out.reference_moments = target.reference_moments.clone();
    out.log_normalizer = target.log_normalizer;
    Ok(out)
}

/// Fixed design for the 1-d logistic test model.
pub fn logistic_1d_design() -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = vec![-2.0, -1.2, -0.7, -0.3, 0.4, 0.9, 1.4, 2.1];
    let y = vec![-1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
    (x.into_iter().map(|v| vec![v]).collect(), y)
}

fn logistic_2d_design() -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = vec![
        vec![1.0, 0.5],
        vec![-0.6, 1.2],
        vec![0.8, -0.9],
        vec![-1.3, -0.4],
        vec![0.3, 1.0],
        vec![1.7, 0.2],
        vec![-0.5, -1.1],
        vec![0.9, 1.3],
    ];
    let y = vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
    (x, y)
}

fn probit_1d_design() -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = vec![-1.5, -0.8, -0.2, 0.5, 1.1, 1.8];
    let y = vec![-1.0, 1.0, -1.0, 1.0, 1.0, -1.0];
    (x.into_iter().map(|v| vec![v]).collect(), y)
}

/// The built-in model registry used by the verification battery and the
/// randomized test suites. All entries are convex.
pub fn builtin_targets() -> Vec<(String, TargetModel)> {
    let mut out = Vec::new();
    out.push((
        String::from("gaussian-1d"),
        TargetModel::Density(
            make_gaussian_target(vec![0.3], Matrix::from_rows(&[vec![0.64]]).unwrap()).unwrap(),
        ),
    ));
    out.push((
        String::from("gaussian-2d"),
        TargetModel::Density(
            make_gaussian_target(
                vec![0.5, -0.3],
                Matrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 0.8]]).unwrap(),
            )
            .unwrap(),
        ),
    ));
    out.push((
        String::from("skew-1d"),
        TargetModel::Density(make_skew_target(2.0, 1.5)),
    ));
    let (x1, y1) = logistic_1d_design();
    out.push((
        String::from("logistic-1d"),
        TargetModel::Factorized(make_logistic_regression_target(&x1, &y1, 1.0).unwrap()),
    ));
    let (x2, y2) = logistic_2d_design();
    out.push((
        String::from("logistic-2d"),
        TargetModel::Factorized(make_logistic_regression_target(&x2, &y2, 1.0).unwrap()),
    ));
    let (xp, yp) = probit_1d_design();
    out.push((
        String::from("probit-1d"),
        TargetModel::Factorized(make_probit_regression_target(&xp, &yp, 1.0).unwrap()),
    ));
    out
}
