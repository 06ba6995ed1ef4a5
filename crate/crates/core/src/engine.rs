//! Deterministic expectation engine.
//!
//! Computes means, covariances and the smoothed-gradient quantities
//! `E[∇φ]`, `E[Hφ]`, `E[|θ−μ⟩⟨∇φ|]` under Gaussian and (unnormalized)
//! hybrid distributions, with a two-resolution error estimate per call.
//!
//! Backends:
//! - `Grid1d`: composite trapezoid on `mean ± 10·std` of the proposal.
//!   For densities that have decayed to numerical zero at the window ends
//!   this rule is spectrally accurate.
//! - `GhImportance`: tensorized Gauss–Hermite in the proposal frame with
//!   the importance correction `h / proposal` (dimensions 2..=4).
//! - `MonteCarlo`: self-normalized importance sampling on a shifted Halton
//!   sequence pushed through the inverse normal CDF; fully determined by
//!   the configured seed.
//!
//! Every reduction runs in a fixed order, so results are bit-reproducible
//! in all three modes.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gaussian::GaussianMoment;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::target::ValueFn;

/// Quadrature backend selector. `Auto` picks `Grid1d` for d = 1,
/// `GhImportance` for d in 2..=4 and `MonteCarlo` above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EngineMode {
    #[default]
    Auto,
    Grid1d,
    GhImportance,
    MonteCarlo,
}

/// Engine configuration; see module docs for the backend semantics.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: EngineMode,
    /// Trapezoid nodes for `Grid1d` (forced odd so the half-resolution
    /// pass keeps both endpoints).
    pub grid_nodes: usize,
    /// Gauss–Hermite order per axis for `GhImportance`.
    pub gh_order: usize,
    /// Draw count for `MonteCarlo`.
    pub mc_draws: usize,
    /// Seed for the Monte-Carlo sequence shift.
    pub mc_seed: u64,
    /// Covariance inflation applied when a caller requests an inflated
    /// proposal for hybrid integration.
    pub inflation: f64,
    /// Hard cap on nodes per integration call.
    pub node_budget: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: EngineMode::Auto,
            grid_nodes: 4097,
            gh_order: 32,
            mc_draws: 1 << 16,
            mc_seed: 0,
            inflation: 2.0,
            node_budget: 1 << 21,
        }
    }
}

/// An unnormalized density together with the Gaussian proposal that
/// places quadrature mass for it.
#[derive(Clone)]
pub struct UnnormalizedDensity {
    d: usize,
    log_density: Arc<ValueFn>,
    proposal: GaussianMoment,
}

impl core::fmt::Debug for UnnormalizedDensity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("UnnormalizedDensity")
            .field("d", &self.d)
            .field("proposal", &self.proposal)
            .finish()
    }
}

impl UnnormalizedDensity {
    pub fn new(d: usize, log_density: Arc<ValueFn>, proposal: GaussianMoment) -> Result<Self> {
        if proposal.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: proposal.dim(),
            });
        }
        Ok(UnnormalizedDensity {
            d,
            log_density,
            proposal,
        })
    }

    /// A Gaussian wrapped as an unnormalized density (its own proposal).
    pub fn from_gaussian(q: &GaussianMoment) -> Self {
        let qc = q.clone();
        UnnormalizedDensity {
            d: q.dim(),
            log_density: Arc::new(move |theta: &[f64]| qc.log_pdf(theta)),
            proposal: q.clone(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        (self.log_density)(theta)
    }

    pub fn proposal(&self) -> &GaussianMoment {
        &self.proposal
    }

    fn with_proposal(&self, proposal: GaussianMoment) -> UnnormalizedDensity {
        UnnormalizedDensity {
            d: self.d,
            log_density: Arc::clone(&self.log_density),
            proposal,
        }
    }
}

/// Everything an update step consumes about one (hybrid) distribution.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    /// Mean under the self-normalized density.
    pub mu_h: Vec<f64>,
    /// Covariance under the self-normalized density (symmetrized).
    pub cov_h: Matrix,
    /// `E[∇φ(θ)]` for the supplied site/target energy gradient.
    pub e_grad: Vec<f64>,
    /// `E[|θ−μ_h⟩⟨∇φ(θ)|]`.
    pub e_cross: Matrix,
    /// `Cov⁻¹ · e_cross`, symmetrized — the curvature entering the
    /// smoothed updates.
    pub e_h: Matrix,
    /// Log normalizer of the unnormalized density.
    pub log_z: f64,
    /// Two-resolution accuracy estimate (see `Engine` docs).
    pub err_est: f64,
}

/// Expectations of the supplied integrands under a distribution.
#[derive(Debug, Clone)]
pub struct Expectations {
    pub e_grad: Option<Vec<f64>>,
    pub e_hess: Option<Matrix>,
    pub e_scalar: Option<f64>,
    pub log_z: f64,
    pub err_est: f64,
}

/// Gauss–Hermite rule rotated for N(0, 1): `E[f] = Σ wᵢ f(zᵢ)`,
/// `Σ wᵢ = 1`.
#[derive(Debug, Clone)]
struct GhRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GhRule {
    /// Golub–Welsch: eigen-decompose the Jacobi matrix of the Hermite
    /// recurrence; nodes are eigenvalues, weights the squared first
    /// eigenvector components.
    fn new(order: usize) -> GhRule {
        let mut j = Matrix::zeros(order);
        for k in 0..order.saturating_sub(1) {
            let v = math::sqrt((k + 1) as f64 / 2.0);
            j.set(k, k + 1, v);
            j.set(k + 1, k, v);
        }
        let (vals, vecs) = linalg::sym_eigh(&j);
        let nodes: Vec<f64> = vals.iter().map(|x| x * core::f64::consts::SQRT_2).collect();
        let weights: Vec<f64> = (0..order)
            .map(|i| vecs.get(0, i) * vecs.get(0, i))
            .collect();
        GhRule { nodes, weights }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }
}

struct Integrands<'a> {
    grad: Option<&'a (dyn Fn(&[f64]) -> Vec<f64> + 'a)>,
    hess: Option<&'a (dyn Fn(&[f64]) -> Matrix + 'a)>,
    scalar: Option<&'a (dyn Fn(&[f64]) -> f64 + 'a)>,
}

impl<'a> Integrands<'a> {
    fn none() -> Self {
        Integrands {
            grad: None,
            hess: None,
            scalar: None,
        }
    }
}

/// Accumulators in proposal-centered coordinates, summed in node order.
struct Accum {
    z: f64,
    t1: Vec<f64>,
    t2: Matrix,
    g1: Option<Vec<f64>>,
    gx: Option<Matrix>,
    hh: Option<Matrix>,
    sc: Option<f64>,
}

impl Accum {
    fn new(d: usize, ints: &Integrands) -> Accum {
        Accum {
            z: 0.0,
            t1: vec![0.0; d],
            t2: Matrix::zeros(d),
            g1: ints.grad.map(|_| vec![0.0; d]),
            gx: ints.grad.map(|_| Matrix::zeros(d)),
            hh: ints.hess.map(|_| Matrix::zeros(d)),
            sc: ints.scalar.map(|_| 0.0),
        }
    }

    fn add(&mut self, w: f64, centered: &[f64], theta: &[f64], ints: &Integrands) {
        if w == 0.0 {
            return;
        }
        let d = centered.len();
        self.z += w;
        for i in 0..d {
            self.t1[i] += w * centered[i];
            for j in 0..d {
                self.t2.add_at(i, j, w * centered[i] * centered[j]);
            }
        }
        if let Some(grad) = ints.grad {
            let g = grad(theta);
            let g1 = self.g1.as_mut().unwrap();
            let gx = self.gx.as_mut().unwrap();
            for i in 0..d {
                g1[i] += w * g[i];
                for j in 0..d {
                    gx.add_at(i, j, w * centered[i] * g[j]);
                }
            }
        }
        if let Some(hess) = ints.hess {
            let h = hess(theta);
            let hh = self.hh.as_mut().unwrap();
            for i in 0..d {
                for j in 0..d {
                    hh.add_at(i, j, w * h.get(i, j));
                }
            }
        }
        if let Some(scalar) = ints.scalar {
            *self.sc.as_mut().unwrap() += w * scalar(theta);
        }
    }
}

/// Raw normalized moments from one integration pass.
#[derive(Debug, Clone)]
struct RawMoments {
    log_z: f64,
    mu: Vec<f64>,
    cov: Matrix,
    e_grad: Option<Vec<f64>>,
    /// `E[|θ−μ⟩⟨∇φ|]`, centered at the computed mean.
    cross: Option<Matrix>,
    e_hess: Option<Matrix>,
    e_scalar: Option<f64>,
}

impl RawMoments {
    fn from_accum(acc: Accum, center: &[f64], log_scale: f64) -> Result<RawMoments> {
        let z = acc.z;
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DegenerateMass);
        }
        let d = center.len();
        let shift: Vec<f64> = acc.t1.iter().map(|v| v / z).collect();
        let mu = linalg::add_vec(center, &shift);
        let mut cov = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                cov.set(i, j, acc.t2.get(i, j) / z - shift[i] * shift[j]);
            }
        }
        let cov = cov.symmetrized();
        let e_grad = acc.g1.map(|g| linalg::scale_vec(&g, 1.0 / z));
        let cross = match (&acc.gx, &e_grad) {
            (Some(gx), Some(eg)) => {
                let mut c = Matrix::zeros(d);
                for i in 0..d {
                    for j in 0..d {
                        c.set(i, j, gx.get(i, j) / z - shift[i] * eg[j]);
                    }
                }
                Some(c)
            }
            _ => None,
        };
        let e_hess = acc.hh.map(|h| h.scaled(1.0 / z));
        let e_scalar = acc.sc.map(|s| s / z);
        Ok(RawMoments {
            log_z: log_scale + math::ln(z),
            mu,
            cov,
            e_grad,
            cross,
            e_hess,
            e_scalar,
        })
    }

    fn max_component(&self) -> f64 {
        let mut m = math::abs(self.log_z).max(linalg::inf_norm(&self.mu));
        m = m.max(self.cov.max_abs());
        if let Some(g) = &self.e_grad {
            m = m.max(linalg::inf_norm(g));
        }
        if let Some(c) = &self.cross {
            m = m.max(c.max_abs());
        }
        if let Some(h) = &self.e_hess {
            m = m.max(h.max_abs());
        }
        if let Some(s) = self.e_scalar {
            m = m.max(math::abs(s));
        }
        m
    }

    fn max_difference(&self, other: &RawMoments) -> f64 {
        let mut m = math::abs(self.log_z - other.log_z);
        m = m.max(linalg::inf_norm(&linalg::sub_vec(&self.mu, &other.mu)));
        m = m.max(self.cov.sub(&other.cov).max_abs());
        if let (Some(a), Some(b)) = (&self.e_grad, &other.e_grad) {
            m = m.max(linalg::inf_norm(&linalg::sub_vec(a, b)));
        }
        if let (Some(a), Some(b)) = (&self.cross, &other.cross) {
            m = m.max(a.sub(b).max_abs());
        }
        if let (Some(a), Some(b)) = (&self.e_hess, &other.e_hess) {
            m = m.max(a.sub(b).max_abs());
        }
        if let (Some(a), Some(b)) = (self.e_scalar, other.e_scalar) {
            m = m.max(math::abs(a - b));
        }
        m
    }
}

/// How far from the proposal mean the deterministic windows extend, in
/// proposal standard deviations.
const WINDOW_SIGMAS: f64 = 10.0;

/// The expectation engine. Holds the configuration and the prebuilt
/// Gauss–Hermite rules for the configured order and its half-resolution
/// companion.
pub struct Engine {
    cfg: EngineConfig,
    gh_fine: GhRule,
    gh_coarse: GhRule,
}

impl Engine {
    pub fn new(mut cfg: EngineConfig) -> Result<Engine> {
        if cfg.gh_order == 0 {
            return Err(Error::InvalidArgument {
                what: "gh_order must be at least 1",
            });
        }
        if cfg.grid_nodes < 3 {
            return Err(Error::InvalidArgument {
                what: "grid_nodes must be at least 3",
            });
        }
        if cfg.mc_draws < 2 {
            return Err(Error::InvalidArgument {
                what: "mc_draws must be at least 2",
            });
        }
        if !(cfg.inflation > 0.0) {
            return Err(Error::InvalidArgument {
                what: "inflation must be positive",
            });
        }
        if cfg.grid_nodes % 2 == 0 {
            cfg.grid_nodes += 1; // keep the half-resolution endpoints aligned
        }
        let gh_fine = GhRule::new(cfg.gh_order);
        let gh_coarse = GhRule::new((cfg.gh_order / 2).max(1));
        Ok(Engine {
            cfg,
            gh_fine,
            gh_coarse,
        })
    }

    pub fn with_defaults() -> Engine {
        Engine::new(EngineConfig::default()).expect("default engine config is valid")
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// The configured proposal inflation applied to a Gaussian.
    pub fn inflate(&self, q: &GaussianMoment) -> GaussianMoment {
        q.inflate(self.cfg.inflation)
    }

    fn resolve_mode(&self, d: usize, mode: EngineMode) -> Result<EngineMode> {
        let resolved = match mode {
            EngineMode::Auto => {
                if d == 1 {
                    EngineMode::Grid1d
                } else if d <= 4 {
                    EngineMode::GhImportance
                } else {
                    EngineMode::MonteCarlo
                }
            }
            explicit => explicit,
        };
        if resolved == EngineMode::Grid1d && d != 1 {
            return Err(Error::InvalidArgument {
                what: "grid1d mode requires a one-dimensional density",
            });
        }
        Ok(resolved)
    }

    /// Tensorized Gauss–Hermite expectation `E_q[f]` of a vector-valued
    /// function; exact for per-axis polynomial degree ≤ 2·order−1.
    pub fn gauss_hermite_expect(
        &self,
        q: &GaussianMoment,
        f: &dyn Fn(&[f64]) -> Vec<f64>,
        order: usize,
    ) -> Result<Vec<f64>> {
        if order == 0 {
            return Err(Error::InvalidArgument {
                what: "quadrature order must be at least 1",
            });
        }
        let d = q.dim();
        let needed = checked_tensor_size(order, d, self.cfg.node_budget)?;
        let _ = needed;
        let rule = GhRule::new(order);
        let mut out: Option<Vec<f64>> = None;
        let mut idx = vec![0usize; d];
        let mut z = vec![0.0; d];
        let mut theta = vec![0.0; d];
        loop {
            let mut w = 1.0;
            for k in 0..d {
                w *= rule.weights[idx[k]];
                z[k] = rule.nodes[idx[k]];
            }
            q.push_forward(&z, &mut theta);
            let val = f(&theta);
            match &mut out {
                None => out = Some(linalg::scale_vec(&val, w)),
                Some(acc) => {
                    for (a, v) in acc.iter_mut().zip(val) {
                        *a += w * v;
                    }
                }
            }
            if !advance(&mut idx, rule.len()) {
                break;
            }
        }
        Ok(out.unwrap_or_default())
    }

    /// All moment-summary fields of an unnormalized density, with
    /// `E[∇φ]`-type quantities taken for the supplied energy gradient
    /// (one site's or the full target's, depending on the caller).
    pub fn hybrid_moments(
        &self,
        h: &UnnormalizedDensity,
        phi_grad: &dyn Fn(&[f64]) -> Vec<f64>,
        mode: EngineMode,
    ) -> Result<MomentSummary> {
        let ints = Integrands {
            grad: Some(phi_grad),
            hess: None,
            scalar: None,
        };
        let (raw, err) = self.integrate(h, &ints, mode)?;
        let cov = raw.cov.clone();
        let chol = cov
            .cholesky("hybrid covariance")
            .map_err(|_| Error::DegenerateMass)?;
        let cross = raw.cross.clone().expect("grad integrand present");
        let e_h = chol.solve_matrix(&cross).symmetrized();
        Ok(MomentSummary {
            mu_h: raw.mu,
            cov_h: cov,
            e_grad: raw.e_grad.expect("grad integrand present"),
            e_cross: cross,
            e_h,
            log_z: raw.log_z,
            err_est: err,
        })
    }

    /// Mean/covariance/normalizer of an unnormalized density, without
    /// smoothed-gradient integrands (the classical moment-matching path).
    pub fn density_moments(
        &self,
        h: &UnnormalizedDensity,
        mode: EngineMode,
    ) -> Result<(Vec<f64>, Matrix, f64, f64)> {
        let (raw, err) = self.integrate(h, &Integrands::none(), mode)?;
        Ok((raw.mu, raw.cov, raw.log_z, err))
    }

    /// Residuals of the two integration-by-parts identities for a density
    /// with fast-decaying tails: `E[∇ψ] = 0` and `E[|θ−v⟩⟨∇ψ|] = I` for
    /// any `v`, where `∇ψ` is the gradient of the full energy of `h`.
    pub fn stein_residuals(
        &self,
        h: &UnnormalizedDensity,
        full_grad: &dyn Fn(&[f64]) -> Vec<f64>,
        v: &[f64],
        mode: EngineMode,
    ) -> Result<(Vec<f64>, Matrix)> {
        let summary = self.hybrid_moments(h, full_grad, mode)?;
        let d = h.dim();
        let shift = linalg::sub_vec(&summary.mu_h, v);
        let mut second = summary.e_cross.clone();
        for i in 0..d {
            for j in 0..d {
                second.add_at(i, j, shift[i] * summary.e_grad[j]);
            }
            second.add_at(i, i, -1.0);
        }
        Ok((summary.e_grad, second))
    }

    /// Expectations of gradient/Hessian/scalar integrands under a proper
    /// Gaussian (used by the Gaussian-smoothed update and the divergence
    /// computations).
    pub fn expect_under_gaussian(
        &self,
        q: &GaussianMoment,
        grad: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
        hess: Option<&dyn Fn(&[f64]) -> Matrix>,
        scalar: Option<&dyn Fn(&[f64]) -> f64>,
        mode: EngineMode,
    ) -> Result<Expectations> {
        let h = UnnormalizedDensity::from_gaussian(q);
        let ints = Integrands { grad, hess, scalar };
        let (raw, err) = self.integrate(&h, &ints, mode)?;
        Ok(Expectations {
            e_grad: raw.e_grad,
            e_hess: raw.e_hess,
            e_scalar: raw.e_scalar,
            log_z: raw.log_z,
            err_est: err,
        })
    }

    /// `(E_h[s], log Z_h, err)` for a scalar integrand under an
    /// unnormalized density.
    pub fn scalar_expectation(
        &self,
        h: &UnnormalizedDensity,
        scalar: &dyn Fn(&[f64]) -> f64,
        mode: EngineMode,
    ) -> Result<(f64, f64, f64)> {
        let ints = Integrands {
            grad: None,
            hess: None,
            scalar: Some(scalar),
        };
        let (raw, err) = self.integrate(h, &ints, mode)?;
        Ok((
            raw.e_scalar.expect("scalar integrand present"),
            raw.log_z,
            err,
        ))
    }

    /// Log normalizer of an unnormalized density plus its error estimate,
    /// with a mass check near the window boundary: when `strict_tails` is
    /// set, non-negligible boundary mass is reported as a divergent
    /// integral (used by the α-divergence for α outside (0,1)).
    pub fn log_normalizer(
        &self,
        h: &UnnormalizedDensity,
        mode: EngineMode,
        strict_tails: Option<f64>,
    ) -> Result<(f64, f64)> {
        if let Some(alpha) = strict_tails {
            self.check_tail_decay(h, alpha)?;
        }
        let (raw, err) = self.integrate(h, &Integrands::none(), mode)?;
        Ok((raw.log_z, err))
    }

    fn check_tail_decay(&self, h: &UnnormalizedDensity, alpha: f64) -> Result<()> {
        // Probe the proposal frame near the window boundary — along every
        // axis and every diagonal corner direction — the integrand must
        // have fallen far below its central value everywhere.
        let d = h.dim();
        let center = h.log_density(h.proposal().mean());
        let mut z = vec![0.0; d];
        let mut theta = vec![0.0; d];
        let mut probe = |z: &[f64]| -> Result<()> {
            h.proposal().push_forward(z, &mut theta);
            let ld = h.log_density(&theta);
            if !(ld < center - 30.0) {
                return Err(Error::DivergentIntegral { alpha });
            }
            Ok(())
        };
        for axis in 0..d {
            for sign in [-1.0, 1.0] {
                for dist in [0.8 * WINDOW_SIGMAS, WINDOW_SIGMAS] {
                    z[axis] = sign * dist;
                    probe(&z)?;
                }
                z[axis] = 0.0;
            }
        }
        if d > 1 && d <= 4 {
            let scale = WINDOW_SIGMAS / math::sqrt(d as f64);
            for corner in 0..(1usize << d) {
                for (axis, slot) in z.iter_mut().enumerate() {
                    *slot = if corner & (1 << axis) != 0 {
                        scale
                    } else {
                        -scale
                    };
                }
                probe(&z)?;
            }
            z.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    }

    fn integrate_once(
        &self,
        h: &UnnormalizedDensity,
        ints: &Integrands,
        mode: EngineMode,
        fine: bool,
    ) -> Result<RawMoments> {
        match mode {
            EngineMode::Grid1d => {
                let n = if fine {
                    self.cfg.grid_nodes
                } else {
                    self.cfg.grid_nodes / 2 + 1
                };
                self.grid_pass(h, ints, n)
            }
            EngineMode::GhImportance => {
                let rule = if fine { &self.gh_fine } else { &self.gh_coarse };
                self.gh_pass(h, ints, rule)
            }
            EngineMode::MonteCarlo => {
                let n = if fine {
                    self.cfg.mc_draws
                } else {
                    self.cfg.mc_draws / 2
                };
                self.mc_pass(h, ints, n)
            }
            EngineMode::Auto => unreachable!("mode resolved before dispatch"),
        }
    }

    /// Newton fit of mode and curvature of an unnormalized density from
    /// finite-difference derivatives; the robust re-proposal when the
    /// supplied proposal turns out not to cover the mass.
    fn newton_refit(&self, h: &UnnormalizedDensity, start: &[f64]) -> Option<GaussianMoment> {
        let d = h.dim();
        let energy = |theta: &[f64]| -h.log_density(theta);
        let mut x: Vec<f64> = start.to_vec();
        if x.iter().any(|v| !v.is_finite()) {
            x = h.proposal().mean().to_vec();
        }
        let fd_grad = |x: &[f64]| -> Option<Vec<f64>> {
            let mut g = vec![0.0; d];
            let mut probe = x.to_vec();
            for i in 0..d {
                let step = 1e-5 * (1.0 + math::abs(x[i]));
                probe[i] = x[i] + step;
                let up = energy(&probe);
                probe[i] = x[i] - step;
                let dn = energy(&probe);
                probe[i] = x[i];
                if !up.is_finite() || !dn.is_finite() {
                    return None;
                }
                g[i] = (up - dn) / (2.0 * step);
            }
            Some(g)
        };
        let fd_hess = |x: &[f64]| -> Option<Matrix> {
            let mut m = Matrix::zeros(d);
            let mut probe = x.to_vec();
            for j in 0..d {
                let step = 1e-4 * (1.0 + math::abs(x[j]));
                probe[j] = x[j] + step;
                let up = fd_grad(&probe)?;
                probe[j] = x[j] - step;
                let dn = fd_grad(&probe)?;
                probe[j] = x[j];
                for i in 0..d {
                    m.set(i, j, (up[i] - dn[i]) / (2.0 * step));
                }
            }
            Some(m.symmetrized())
        };
        let step_cap = 10.0
            * (0..d)
                .map(|i| math::sqrt(h.proposal().cov().get(i, i)))
                .fold(0.0f64, f64::max);
        for _ in 0..40 {
            let g = fd_grad(&x)?;
            let hess = fd_hess(&x)?;
            let spd = match hess.cholesky("refit curvature") {
                Ok(_) => hess,
                Err(_) => linalg::floor_spd(&hess, 1e-8),
            };
            let mut step = spd.cholesky("refit curvature").ok()?.solve(&g);
            let norm = linalg::inf_norm(&step);
            if norm > step_cap {
                step = linalg::scale_vec(&step, step_cap / norm);
            }
            for (xi, si) in x.iter_mut().zip(&step) {
                *xi -= si;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return None;
            }
            if norm < 1e-9 {
                break;
            }
        }
        let hess = fd_hess(&x)?;
        let spd = match hess.cholesky("refit curvature") {
            Ok(_) => hess,
            Err(_) => linalg::floor_spd(&hess, 1e-8),
        };
        let cov = spd.cholesky("refit curvature").ok()?.inverse();
        GaussianMoment::new(x, cov).ok()
    }

    /// Does the proposal place its mass where the integrated moments say
    /// the density's mass is? (Axis-wise mean shift within half a
    /// proposal sigma, variance ratio within [0.4, 2.5] of the inflated
    /// estimate.)
    fn proposal_matched(&self, raw: &RawMoments, proposal: &GaussianMoment) -> bool {
        let d = proposal.dim();
        for i in 0..d {
            let prop_var = proposal.cov().get(i, i);
            let est_var = raw.cov.get(i, i);
            if !(est_var > 0.0) {
                return false;
            }
            if math::abs(raw.mu[i] - proposal.mean()[i]) > 0.5 * math::sqrt(prop_var) {
                return false;
            }
            let ratio = prop_var / (self.cfg.inflation * est_var);
            if !(0.4..=2.5).contains(&ratio) {
                return false;
            }
        }
        true
    }

    fn integrate(
        &self,
        h: &UnnormalizedDensity,
        ints: &Integrands,
        mode: EngineMode,
    ) -> Result<(RawMoments, f64)> {
        let mode = self.resolve_mode(h.dim(), mode)?;
        let evals = match mode {
            EngineMode::Grid1d => {
                let n = self.cfg.grid_nodes;
                if n > self.cfg.node_budget {
                    return Err(Error::BudgetExceeded {
                        needed: n,
                        cap: self.cfg.node_budget,
                    });
                }
                n + n / 2 + 1
            }
            EngineMode::GhImportance => {
                let d = h.dim();
                checked_tensor_size(self.gh_fine.len(), d, self.cfg.node_budget)?
                    + checked_tensor_size(self.gh_coarse.len(), d, self.cfg.node_budget)?
            }
            EngineMode::MonteCarlo => {
                let n = self.cfg.mc_draws;
                if n > self.cfg.node_budget {
                    return Err(Error::BudgetExceeded {
                        needed: n,
                        cap: self.cfg.node_budget,
                    });
                }
                n + n / 2
            }
            EngineMode::Auto => unreachable!("mode resolved above"),
        };

        // A poorly placed proposal (e.g. the very wide global fit that
        // seeds the first EP sweep) starves the rule of useful nodes.
        // When the half-resolution pass says the mass sits elsewhere,
        // Newton-refit the proposal to the density's own mode and
        // curvature, then fine-tune by moment re-centering. All
        // deterministic, and free in the already-matched case since the
        // half-resolution pass doubles as the error estimate.
        let mut current = h.clone();
        let mut coarse = self.integrate_once(&current, ints, mode, false)?;
        if !self.proposal_matched(&coarse, current.proposal()) {
            if let Some(fit) = self.newton_refit(&current, &coarse.mu) {
                current = current.with_proposal(fit.inflate(self.cfg.inflation));
                coarse = self.integrate_once(&current, ints, mode, false)?;
            }
            for _round in 0..3 {
                if self.proposal_matched(&coarse, current.proposal()) {
                    break;
                }
                let Ok(centered) = GaussianMoment::new(coarse.mu.clone(), coarse.cov.clone())
                else {
                    break;
                };
                current = current.with_proposal(centered.inflate(self.cfg.inflation));
                coarse = self.integrate_once(&current, ints, mode, false)?;
            }
        }
        let fine = self.integrate_once(&current, ints, mode, true)?;
        let scale = fine.max_component();
        let floor = evals as f64 * f64::EPSILON * (1.0 + scale);
        let err = fine.max_difference(&coarse).max(floor);
        Ok((fine, err))
    }

    /// Composite trapezoid over `proposal mean ± 10σ` (1-d only).
    fn grid_pass(
        &self,
        h: &UnnormalizedDensity,
        ints: &Integrands,
        n: usize,
    ) -> Result<RawMoments> {
        let m = h.proposal().mean()[0];
        let s = math::sqrt(h.proposal().cov().get(0, 0));
        let lo = m - WINDOW_SIGMAS * s;
        let dx = 2.0 * WINDOW_SIGMAS * s / (n - 1) as f64;
        let mut lw = vec![0.0f64; n];
        let mut max_lw = f64::NEG_INFINITY;
        let mut theta = [0.0f64];
        for (i, slot) in lw.iter_mut().enumerate() {
            theta[0] = lo + dx * i as f64;
            let ld = h.log_density(&theta);
            if ld.is_nan() || ld == f64::INFINITY {
                return Err(Error::DegenerateMass);
            }
            *slot = ld;
            if ld > max_lw {
                max_lw = ld;
            }
        }
        if !max_lw.is_finite() {
            return Err(Error::DegenerateMass);
        }
        let mut acc = Accum::new(1, ints);
        let mut centered = [0.0f64];
        for i in 0..n {
            let trapez = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let w = trapez * dx * math::exp(lw[i] - max_lw);
            theta[0] = lo + dx * i as f64;
            centered[0] = theta[0] - m;
            acc.add(w, &centered, &theta, ints);
        }
        RawMoments::from_accum(acc, &[m], max_lw)
    }

    /// Tensorized Gauss–Hermite with importance correction `h/proposal`.
    fn gh_pass(
        &self,
        h: &UnnormalizedDensity,
        ints: &Integrands,
        rule: &GhRule,
    ) -> Result<RawMoments> {
        let d = h.dim();
        let prop = h.proposal();
        let total = rule.len().pow(d as u32);
        let mut lw = vec![0.0f64; total];
        let mut base = vec![0.0f64; total];
        let mut max_lw = f64::NEG_INFINITY;
        let mut idx = vec![0usize; d];
        let mut z = vec![0.0; d];
        let mut theta = vec![0.0; d];
        for flat in 0..total {
            let mut w = 1.0;
            for k in 0..d {
                w *= rule.weights[idx[k]];
                z[k] = rule.nodes[idx[k]];
            }
            prop.push_forward(&z, &mut theta);
            let ld = h.log_density(&theta);
            if ld.is_nan() || ld == f64::INFINITY {
                return Err(Error::DegenerateMass);
            }
            let ratio = ld - prop.log_pdf(&theta);
            lw[flat] = ratio;
            base[flat] = w;
            if ratio > max_lw && w > 0.0 {
                max_lw = ratio;
            }
            advance(&mut idx, rule.len());
        }
        if !max_lw.is_finite() {
            return Err(Error::DegenerateMass);
        }
        let mut acc = Accum::new(d, ints);
        let mut centered = vec![0.0; d];
        idx.iter_mut().for_each(|v| *v = 0);
        for flat in 0..total {
            for k in 0..d {
                z[k] = rule.nodes[idx[k]];
            }
            prop.push_forward(&z, &mut theta);
            let w = base[flat] * math::exp(lw[flat] - max_lw);
            for k in 0..d {
                centered[k] = theta[k] - prop.mean()[k];
            }
            acc.add(w, &centered, &theta, ints);
            advance(&mut idx, rule.len());
        }
        RawMoments::from_accum(acc, prop.mean(), max_lw)
    }

    /// Self-normalized importance sampling on a seed-shifted Halton
    /// sequence pushed through the inverse normal CDF.
    fn mc_pass(&self, h: &UnnormalizedDensity, ints: &Integrands, n: usize) -> Result<RawMoments> {
        const BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
        let d = h.dim();
        if d > BASES.len() {
            return Err(Error::InvalidArgument {
                what: "monte-carlo mode supports at most 8 dimensions",
            });
        }
        let prop = h.proposal();
        let mut rng = math::SplitMix64(self.cfg.mc_seed ^ 0x5dee_ce66_d154_21c5);
        let shifts: Vec<f64> = (0..d).map(|_| rng.next_f64()).collect();
        let mut lw = vec![0.0f64; n];
        let mut max_lw = f64::NEG_INFINITY;
        let mut z = vec![0.0; d];
        let mut theta = vec![0.0; d];
        let mut thetas = vec![0.0f64; n * d];
        for j in 0..n {
            for k in 0..d {
                let mut u = halton((j + 1) as u64, BASES[k]) + shifts[k];
                if u >= 1.0 {
                    u -= 1.0;
                }
                let u = u.clamp(1e-12, 1.0 - 1e-12);
                z[k] = math::inverse_normal_cdf(u);
            }
            prop.push_forward(&z, &mut theta);
            thetas[j * d..(j + 1) * d].copy_from_slice(&theta);
            let ld = h.log_density(&theta);
            if ld.is_nan() || ld == f64::INFINITY {
                return Err(Error::DegenerateMass);
            }
            let ratio = ld - prop.log_pdf(&theta);
            lw[j] = ratio;
            if ratio > max_lw {
                max_lw = ratio;
            }
        }
        if !max_lw.is_finite() {
            return Err(Error::DegenerateMass);
        }
        let mut acc = Accum::new(d, ints);
        let mut centered = vec![0.0; d];
        let inv_n = 1.0 / n as f64;
        for j in 0..n {
            let theta = &thetas[j * d..(j + 1) * d];
            let w = inv_n * math::exp(lw[j] - max_lw);
            for k in 0..d {
                centered[k] = theta[k] - prop.mean()[k];
            }
            acc.add(w, &centered, theta, ints);
        }
        RawMoments::from_accum(acc, prop.mean(), max_lw)
    }
}

fn checked_tensor_size(order: usize, d: usize, cap: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..d {
        total = total.saturating_mul(order);
        if total > cap {
            return Err(Error::BudgetExceeded { needed: total, cap });
        }
    }
    Ok(total)
}

/// Odometer increment over a `len`-ary counter; false when it wraps.
fn advance(idx: &mut [usize], len: usize) -> bool {
    for slot in idx.iter_mut() {
        *slot += 1;
        if *slot < len {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Radical-inverse (van der Corput) value of `i` in the given base.
fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianMoment;

    fn std_normal() -> GaussianMoment {
        GaussianMoment::standard(1)
    }

    #[test]
    fn gh_rule_order_3_is_classic() {
        let rule = GhRule::new(3);
        // nodes √2·{−√(3/2), 0, √(3/2)} = {−√3, 0, √3}; weights {1/6, 2/3, 1/6}
        assert!((rule.nodes[0] + 3.0f64.sqrt()).abs() < 1e-12);
        assert!(rule.nodes[1].abs() < 1e-12);
        assert!((rule.weights[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((rule.weights[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gh_expect_exact_on_polynomials() {
        let engine = Engine::with_defaults();
        let q = std_normal();
        // order 2 integrates θ² exactly
        let v = engine
            .gauss_hermite_expect(&q, &|t: &[f64]| vec![t[0] * t[0]], 2)
            .unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14);
        // any order ≥ 1 reproduces the mean
        let q2 = GaussianMoment::scalar(2.5, 3.0).unwrap();
        for order in [1usize, 2, 5] {
            let v = engine
                .gauss_hermite_expect(&q2, &|t: &[f64]| vec![t[0]], order)
                .unwrap();
            assert!((v[0] - 2.5).abs() < 1e-12, "order {order}");
        }
        // fourth moment of N(0,1) with order 3
        let v = engine
            .gauss_hermite_expect(&q, &|t: &[f64]| vec![t[0].powi(4)], 3)
            .unwrap();
        assert!((v[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gh_budget_enforced() {
        let engine = Engine::with_defaults();
        let q = GaussianMoment::standard(4);
        let err = engine
            .gauss_hermite_expect(&q, &|_t: &[f64]| vec![1.0], 64)
            .unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn hybrid_moments_of_standard_normal() {
        let engine = Engine::with_defaults();
        let q = std_normal();
        let h = UnnormalizedDensity::from_gaussian(&q);
        let s = engine
            .hybrid_moments(&h, &|t: &[f64]| vec![t[0]], EngineMode::Auto)
            .unwrap();
        assert!(s.mu_h[0].abs() < 1e-9);
        assert!((s.cov_h.get(0, 0) - 1.0).abs() < 1e-9);
        assert!(s.e_grad[0].abs() < 1e-9);
        // ∇ψ = θ for the standard normal ⇒ e_h = 1
        assert!((s.e_h.get(0, 0) - 1.0).abs() < 1e-9);
        assert!(s.log_z.abs() < 1e-9);
        assert!(s.err_est < 1e-7);
    }

    #[test]
    fn stein_residuals_vanish_for_any_v() {
        let engine = Engine::with_defaults();
        let q = std_normal();
        let h = UnnormalizedDensity::from_gaussian(&q);
        for v in [0.0, 5.0] {
            let (r1, r2) = engine
                .stein_residuals(&h, &|t: &[f64]| vec![t[0]], &[v], EngineMode::Auto)
                .unwrap();
            assert!(r1[0].abs() < 1e-9, "v={v}");
            assert!(r2.max_abs() < 1e-9, "v={v}");
        }
    }

    #[test]
    fn mc_mode_is_reproducible_and_sane() {
        let engine = Engine::new(EngineConfig {
            mode: EngineMode::MonteCarlo,
            mc_draws: 1 << 14,
            mc_seed: 7,
            ..EngineConfig::default()
        })
        .unwrap();
        let q = GaussianMoment::scalar(0.7, 2.0).unwrap();
        let h = UnnormalizedDensity::from_gaussian(&q);
        let a = engine
            .hybrid_moments(&h, &|t: &[f64]| vec![t[0]], EngineMode::MonteCarlo)
            .unwrap();
        let b = engine
            .hybrid_moments(&h, &|t: &[f64]| vec![t[0]], EngineMode::MonteCarlo)
            .unwrap();
        assert_eq!(a.mu_h[0].to_bits(), b.mu_h[0].to_bits());
        assert_eq!(a.cov_h.get(0, 0).to_bits(), b.cov_h.get(0, 0).to_bits());
        assert!((a.mu_h[0] - 0.7).abs() < 0.02);
        assert!((a.cov_h.get(0, 0) - 2.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_mass_detected() {
        let engine = Engine::with_defaults();
        let q = std_normal();
        let h =
            UnnormalizedDensity::new(1, alloc::sync::Arc::new(|_t: &[f64]| f64::NEG_INFINITY), q)
                .unwrap();
        let err = engine
            .hybrid_moments(&h, &|t: &[f64]| vec![t[0]], EngineMode::Auto)
            .unwrap_err();
        assert_eq!(err, Error::DegenerateMass);
    }

    #[test]
    fn grid_requires_one_dimension() {
        let engine = Engine::with_defaults();
        let q = GaussianMoment::standard(2);
        let h = UnnormalizedDensity::from_gaussian(&q);
        let err = engine
            .hybrid_moments(&h, &|t: &[f64]| t.to_vec(), EngineMode::Grid1d)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument { .. }));
    }
}
