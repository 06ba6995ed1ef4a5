//! Gaussian approximate inference as smoothed gradient descent.
//!
//! This crate implements a family of fixed-point iterations that all share
//! one update skeleton: pick a centering mean `μ`, a smoothed gradient `E∇`
//! and a smoothed curvature `EH`, and form the next Gaussian approximation
//!
//! ```text
//! q_new(θ) ∝ exp( −⟨E∇, θ−μ⟩ − ½⟨θ−μ, EH (θ−μ)⟩ )
//! ```
//!
//! Instantiating the three ingredients with point evaluations gives the
//! Newton / Laplace iteration; with expectations under the current Gaussian
//! it gives Gaussian Variational Bayes (reverse-KL minimization); with
//! expectations under a geometric `p`/`q` mixture it minimizes the
//! α-divergence; and with expectations under the site-wise tilted
//! distributions it reproduces Expectation Propagation exactly, in both its
//! classical moment-matching form and the equivalent smoothed-gradient form.
//!
//! The crate is `no_std`-compatible (`alloc` required); the `std` feature
//! only adds wall-clock timing of iteration records.
//!
//! Modules:
//! - [`gaussian`]: exact algebra on multivariate Gaussians in natural and
//!   moment parameterizations.
//! - [`target`]: target densities `p(θ) = exp(−ψ(θ))` with gradient/Hessian
//!   oracles, and factorized targets for EP.
//! - [`engine`]: deterministic quadrature / quasi-Monte-Carlo engine for
//!   means, covariances and smoothed-gradient expectations under Gaussian
//!   and hybrid distributions.
//! - [`approximators`]: the iterative algorithms and the run driver.
//! - [`divergence`]: KL and α-divergence values and their (μ, S) gradients.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]
// Index-pair loops mirror the matrix formulas; NaN-rejecting negated
// comparisons are deliberate in the validation paths.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

extern crate alloc;

pub mod approximators;
pub mod divergence;
pub mod engine;
mod error;
pub mod gaussian;
pub mod linalg;
mod math;
pub mod target;

pub use error::{Error, Result};
pub use gaussian::{GaussianMoment, GaussianNat, Role};
pub use linalg::Matrix;
