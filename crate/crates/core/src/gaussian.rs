//! Exact algebra on multivariate Gaussians in natural and moment
//! parameterizations.
//!
//! The natural form stores the coefficients of the log-density
//! `log q(θ) = const + ⟨r, θ⟩ − ½⟨θ, B θ⟩`, so products and quotients of
//! Gaussians add and subtract `(r, B)`. The moment form stores `(μ, Σ)`
//! together with the lower-triangular square root `S` (positive diagonal,
//! `S Sᵀ = Σ`), which fixes the square-root parameterization used by the
//! divergence gradients to a unique representative.
//!
//! All values are immutable after construction and safe to share across
//! threads; every operation is a pure function.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::math;

/// How a natural-parameter Gaussian is being used.
///
/// A `Density` must have positive-definite precision; a `Site` is one
/// factor approximation inside an EP product and may legitimately carry an
/// indefinite (e.g. negative) precision as long as the full product stays
/// normalizable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Role {
    #[default]
    Density,
    Site,
}

#[derive(Serialize, Deserialize)]
struct NatRepr {
    r: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

/// Gaussian in natural parameters `(r, B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NatRepr", into = "NatRepr")]
pub struct GaussianNat {
    r: Vec<f64>,
    b: Matrix,
    role: Role,
}

impl TryFrom<NatRepr> for GaussianNat {
    type Error = Error;
    fn try_from(repr: NatRepr) -> Result<Self> {
        let b = Matrix::from_rows(&repr.b)?;
        GaussianNat::new(repr.r, b, Role::Density)
    }
}

impl From<GaussianNat> for NatRepr {
    fn from(g: GaussianNat) -> Self {
        NatRepr {
            r: g.r,
            b: g.b.to_rows(),
        }
    }
}

impl GaussianNat {
    /// Build from natural parameters. `B` is symmetrized on construction
    /// (quadrature-estimated matrices carry asymmetric noise).
    pub fn new(r: Vec<f64>, b: Matrix, role: Role) -> Result<Self> {
        if b.n() != r.len() {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                got: b.n(),
            });
        }
        if !b.is_finite() || r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "non-finite natural parameters",
            });
        }
        Ok(GaussianNat {
            r,
            b: b.symmetrized(),
            role,
        })
    }

    /// The multiplicative identity site: r = 0, B = 0.
    pub fn zero(d: usize) -> Self {
        GaussianNat {
            r: vec![0.0; d],
            b: Matrix::zeros(d),
            role: Role::Site,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Product of two Gaussian factors: natural parameters add.
    pub fn multiply(&self, other: &GaussianNat) -> Result<GaussianNat> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let role = if self.role == Role::Density && other.role == Role::Density {
            Role::Density
        } else {
            Role::Site
        };
        Ok(GaussianNat {
            r: linalg::add_vec(&self.r, &other.r),
            b: self.b.add(&other.b),
            role,
        })
    }

    /// Quotient of two Gaussian factors: natural parameters subtract. The
    /// result is flagged as a site term since its precision may be
    /// indefinite.
    pub fn divide(&self, other: &GaussianNat) -> Result<GaussianNat> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(GaussianNat {
            r: linalg::sub_vec(&self.r, &other.r),
            b: self.b.sub(&other.b),
            role: Role::Site,
        })
    }

    /// Convert to moment parameters: `Σ = B⁻¹`, `μ = B⁻¹ r`.
    pub fn to_moment(&self) -> Result<GaussianMoment> {
        let chol = self.b.cholesky("precision B")?;
        let mu = chol.solve(&self.r);
        let sigma = chol.inverse();
        GaussianMoment::new(mu, sigma)
    }

    /// True when the precision is positive definite (i.e. usable as a
    /// normalizable density).
    pub fn is_normalizable(&self) -> bool {
        self.b.cholesky("precision B").is_ok()
    }

    /// Convex blend in natural parameters: `(1−λ)·self + λ·other`,
    /// the damping rule of the iterative drivers.
    pub fn blend(&self, other: &GaussianNat, lambda: f64) -> Result<GaussianNat> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let r = self
            .r
            .iter()
            .zip(&other.r)
            .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
            .collect();
        let b = self.b.scaled(1.0 - lambda).add(&other.b.scaled(lambda));
        Ok(GaussianNat {
            r,
            b,
            role: self.role,
        })
    }

    /// Largest absolute difference across the stacked natural parameters.
    pub fn max_param_distance(&self, other: &GaussianNat) -> f64 {
        let dr = linalg::inf_norm(&linalg::sub_vec(&self.r, &other.r));
        let db = self.b.sub(&other.b).max_abs();
        dr.max(db)
    }
}

#[derive(Serialize, Deserialize)]
struct MomentRepr {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

/// Gaussian in moment parameters `(μ, Σ)` with cached lower-triangular
/// square root `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentRepr", into = "MomentRepr")]
pub struct GaussianMoment {
    mu: Vec<f64>,
    sigma: Matrix,
    sqrt: Matrix,
}

impl TryFrom<MomentRepr> for GaussianMoment {
    type Error = Error;
    fn try_from(repr: MomentRepr) -> Result<Self> {
        let sigma = Matrix::from_rows(&repr.sigma)?;
        GaussianMoment::new(repr.mu, sigma)
    }
}

impl From<GaussianMoment> for MomentRepr {
    fn from(g: GaussianMoment) -> Self {
        MomentRepr {
            mu: g.mu,
            sigma: g.sigma.to_rows(),
        }
    }
}

impl GaussianMoment {
    /// Build from mean and covariance. Σ is symmetrized, then factored;
    /// a failed factorization rejects the covariance as not positive
    /// definite.
    pub fn new(mu: Vec<f64>, sigma: Matrix) -> Result<Self> {
        if sigma.n() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: sigma.n(),
            });
        }
        if !sigma.is_finite() || mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "non-finite moment parameters",
            });
        }
        let sigma = sigma.symmetrized();
        let sqrt = sigma.cholesky("covariance sigma")?.into_factor();
        Ok(GaussianMoment { mu, sigma, sqrt })
    }

    /// Standard normal N(0, I_d).
    pub fn standard(d: usize) -> Self {
        GaussianMoment {
            mu: vec![0.0; d],
            sigma: Matrix::identity(d),
            sqrt: Matrix::identity(d),
        }
    }

    /// 1-d convenience constructor from (mean, variance).
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        GaussianMoment::new(vec![mean], Matrix::from_rows(&[vec![variance]])?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn cov(&self) -> &Matrix {
        &self.sigma
    }

    /// Lower-triangular factor with positive diagonal, `S Sᵀ = Σ`.
    pub fn sqrt_factor(&self) -> &Matrix {
        &self.sqrt
    }

    /// Convert to natural parameters: `B = Σ⁻¹`, `r = Σ⁻¹ μ`. Infallible
    /// because Σ was validated positive definite on construction.
    pub fn to_nat(&self) -> GaussianNat {
        let chol = crate::linalg::Cholesky::from_factor(self.sqrt.clone());
        let b = chol.inverse();
        let r = chol.solve(&self.mu);
        GaussianNat {
            r,
            b: b.symmetrized(),
            role: Role::Density,
        }
    }

    /// Exact log density at `theta`, including the normalizer.
    pub fn log_pdf(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        let centered = linalg::sub_vec(theta, &self.mu);
        let z = linalg::forward_substitute(&self.sqrt, &centered);
        let quad = linalg::dot(&z, &z);
        -0.5 * (self.dim() as f64) * math::LN_2PI - self.log_det_sqrt() - 0.5 * quad
    }

    /// Differential entropy `½ d ln(2πe) + ln|S|`.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 * (math::LN_2PI + 1.0) + self.log_det_sqrt()
    }

    /// log |det S| = ½ log |det Σ|.
    pub fn log_det_sqrt(&self) -> f64 {
        (0..self.dim()).map(|i| math::ln(self.sqrt.get(i, i))).sum()
    }

    /// Same mean, covariance scaled by `factor` (> 0). Used to build
    /// inflated quadrature proposals.
    pub fn inflate(&self, factor: f64) -> GaussianMoment {
        let sigma = self.sigma.scaled(factor);
        let sqrt = self.sqrt.scaled(math::sqrt(factor));
        GaussianMoment {
            mu: self.mu.clone(),
            sigma,
            sqrt,
        }
    }

    /// μ + S·z, mapping a standard-normal point into this Gaussian.
    pub fn push_forward(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut v = self.mu[i];
            for j in 0..=i {
                v += self.sqrt.get(i, j) * z[j];
            }
            out[i] = v;
        }
    }
}
