use core::fmt;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A matrix required to be positive definite failed its Cholesky
    /// factorization (a pivot was ≤ 0 or not finite).
    NotPositiveDefinite { what: &'static str },
    /// Vector/matrix dimensions do not agree.
    DimensionMismatch { expected: usize, got: usize },
    /// A classification label was not ±1.
    BadLabel { index: usize, value: f64 },
    /// A quadrature request exceeds the configured node budget.
    BudgetExceeded { needed: usize, cap: usize },
    /// The normalizer estimate of an unnormalized density underflowed or
    /// produced no usable mass.
    DegenerateMass,
    /// A curvature matrix used to form a density-role Gaussian is not
    /// positive definite and regularization is off.
    IndefiniteCurvature,
    /// The cavity product of the other site approximations is not a
    /// normalizable Gaussian.
    CavityNotNormalizable { site: usize },
    /// The iteration hit its sweep limit before reaching tolerance.
    MaxIterations { sweeps: usize },
    /// The α-divergence integrand grows without bound on the integration
    /// window (tail dominance fails for α outside (0,1)).
    DivergentIntegral { alpha: f64 },
    /// Misuse of an operation (bad parameter range, incompatible target…).
    InvalidArgument { what: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPositiveDefinite { what } => {
                write!(f, "matrix is not positive definite: {what}")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::BadLabel { index, value } => {
                write!(f, "label at index {index} must be +1 or -1, got {value}")
            }
            Error::BudgetExceeded { needed, cap } => {
                write!(f, "quadrature budget exceeded: {needed} nodes > cap {cap}")
            }
            Error::DegenerateMass => write!(f, "density mass degenerate under the proposal"),
            Error::IndefiniteCurvature => write!(f, "curvature matrix is not positive definite"),
            Error::CavityNotNormalizable { site } => {
                write!(f, "cavity for site {site} is not normalizable")
            }
            Error::MaxIterations { sweeps } => {
                write!(f, "no convergence after {sweeps} sweeps")
            }
            Error::DivergentIntegral { alpha } => {
                write!(f, "alpha-divergence integral diverges for alpha = {alpha}")
            }
            Error::InvalidArgument { what } => write!(f, "invalid argument: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
