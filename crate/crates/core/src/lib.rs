//! Coupling resonance functions of finite-dimensional self-adjoint pairs.
//!
//! For a Hermitian `H₀` and a factorised perturbation `V = F*JF`, the
//! transfer family `M(z) = F(H₀ − z)⁻¹F*J` is holomorphic off the spectrum of
//! `H₀`; its eigenvalues `σ_j(z)` give the coupling resonances
//! `r_j(z) = −1/σ_j(z)`, the couplings `r` for which `z` is an eigenvalue of
//! `H₀ + rV`. Taken over all `z` these form a multi-valued holomorphic
//! function. The crate evaluates it, checks the identities it satisfies,
//! continues its branches along paths, measures monodromy around branch
//! points, and classifies how branches behave as `z` approaches a point.
//!
//! Modules, bottom up:
//!
//! - [`numerics`]: eigensolvers, singular values, resolvent solves
//! - [`problem`]: the pair `(H₀, F, J)`, seeded ensembles, JSON files
//! - [`resonance`]: `M(z)`, `σ_j`, `r_j`, shift/trace/Weyl identities
//! - [`continuation`]: branch tracking, monodromy, branch points, divergence
//! - [`scan`]: grid scans, zero isolation, absorbing-point sweeps
//! - [`cli`]: the `resatlas` command line

pub mod assignment;
pub mod cli;
pub mod continuation;
pub mod error;
pub mod numerics;
pub mod problem;
pub mod resonance;
pub mod scan;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use numerics::ComplexMatrix;
pub use problem::{build_ensemble, EnsembleKind, EnsembleSpec, ResonanceProblem};
