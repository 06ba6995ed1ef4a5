//! The iterative Gaussian approximation algorithms.
//!
//! All of them share one update skeleton — pick a centering mean, a
//! smoothed gradient `E∇` and a smoothed curvature `EH`, then form
//! `exp(−⟨E∇, θ−μ⟩ − ½⟨θ−μ, EH (θ−μ)⟩)`:
//!
//! | method         | smoothing kernel          | E∇            | EH                                  |
//! |----------------|---------------------------|---------------|-------------------------------------|
//! | `newton`       | point mass at μ_q         | ∇ψ(μ)         | Hψ(μ)                               |
//! | `gvb`          | current Gaussian q        | E_q[∇ψ]       | E_q\[Hψ\]                             |
//! | `alpha(α)`     | hybrid q^α p^{1−α}        | E_h[∇ψ]       | Cov_h⁻¹ E_h[\|θ−μ_h⟩⟨∇ψ\|]          |
//! | `ep_smoothed`  | site hybrid fᵢ·cavity     | E_h[∇φᵢ]      | Cov_h⁻¹ E_h[\|θ−μ_h⟩⟨∇φᵢ\|]         |
//!
//! `ep_classical` is the moment-matching formulation of the same site
//! update; the two produce identical natural parameters up to quadrature
//! error, which the test suites verify as a dual-path equivalence.

mod driver;
mod ep;
mod steps;

pub use driver::{laplace, run, IterationTrace, RunOutcome, UpdateRecord};
pub use ep::{ep_build_hybrid, ep_update_classical, ep_update_smoothed, global_approximation};
pub use steps::{alpha_hybrid, alpha_step, complete_square, gvb_step, newton_step};

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Which algorithm a driver run executes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Laplace,
    Gvb,
    Alpha(f64),
    EpClassical,
    EpSmoothed,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Laplace => "laplace",
            Method::Gvb => "gvb",
            Method::Alpha(_) => "alpha",
            Method::EpClassical => "ep_classical",
            Method::EpSmoothed => "ep_smoothed",
        }
    }

    pub fn is_ep(&self) -> bool {
        matches!(self, Method::EpClassical | Method::EpSmoothed)
    }
}

/// Which sites get updated together within one sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleKind {
    /// One site at a time, ascending, committed immediately.
    Sequential,
    /// All sites from a frozen snapshot, committed after the sweep.
    Parallel,
    /// Explicit subsets, processed in order each sweep; indices within a
    /// subset are handled in ascending order from a frozen snapshot.
    Custom(Vec<Vec<usize>>),
}

/// Iteration controls shared by all methods.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub max_sweeps: usize,
    /// λ in `q_new = (1−λ)·q_proposed + λ·q_old` (natural parameters).
    pub damping: f64,
    /// Convergence threshold on the largest absolute change of the global
    /// natural parameters over one full sweep.
    pub tolerance: f64,
    /// Floor indefinite curvature at 1e-8 (with a trace warning) instead
    /// of aborting; site updates are never floored.
    pub regularize: bool,
    /// Record reverse KL of the global approximation after each sweep.
    pub record_kl: bool,
    /// Record wall-clock time per update (needs `std`; off by default so
    /// exported traces stay byte-reproducible).
    pub record_timings: bool,
}

impl Schedule {
    /// Sequential schedule, no damping.
    pub fn sequential() -> Schedule {
        Schedule {
            kind: ScheduleKind::Sequential,
            max_sweeps: 200,
            damping: 0.0,
            tolerance: 1e-8,
            regularize: true,
            record_kl: false,
            record_timings: false,
        }
    }

    /// Parallel schedule with the λ = 0.5 damping that keeps parallel EP
    /// from oscillating.
    pub fn parallel() -> Schedule {
        Schedule {
            damping: 0.5,
            kind: ScheduleKind::Parallel,
            ..Schedule::sequential()
        }
    }

    pub fn with_damping(mut self, damping: f64) -> Schedule {
        self.damping = damping;
        self
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Schedule {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Schedule {
        self.tolerance = tolerance;
        self
    }

    pub fn with_record_kl(mut self, record_kl: bool) -> Schedule {
        self.record_kl = record_kl;
        self
    }

    pub fn with_record_timings(mut self, record_timings: bool) -> Schedule {
        self.record_timings = record_timings;
        self
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidArgument {
                what: "damping must lie in [0, 1)",
            });
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument {
                what: "max_sweeps must be at least 1",
            });
        }
        if let ScheduleKind::Custom(subsets) = &self.kind {
            let mut seen = alloc::vec![false; n_sites];
            for subset in subsets {
                for &i in subset {
                    if i >= n_sites {
                        return Err(Error::InvalidArgument {
                            what: "custom schedule index out of range",
                        });
                    }
                    seen[i] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::InvalidArgument {
                    what: "custom schedule must cover every site index",
                });
            }
        }
        Ok(())
    }

    /// The subsets processed by one sweep, ascending within each subset.
    pub(crate) fn sweep_subsets(&self, n_sites: usize) -> Vec<Vec<usize>> {
        match &self.kind {
            ScheduleKind::Sequential => (0..n_sites).map(|i| alloc::vec![i]).collect(),
            ScheduleKind::Parallel => alloc::vec![(0..n_sites).collect()],
            ScheduleKind::Custom(subsets) => subsets
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    s.sort_unstable();
                    s.dedup();
                    s
                })
                .collect(),
        }
    }
}

pub(crate) type Warnings = Vec<String>;
