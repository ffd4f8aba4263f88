//! Numerical complex Monge-Ampère measures of maxima of smooth
//! (pluri)subharmonic functions.
//!
//! The envelope `u = max(u_1, …, u_m)` stratifies its domain by active sets
//! `J`; on each smooth stratum the measure `(dd^c u)^n` is an explicit form
//! wedged with the current of integration over the stratum. This crate
//! evaluates that stratified representation by Monte-Carlo quadrature on the
//! strata, and cross-checks it against two independent constructions: the
//! direct Hessian-determinant measure of a log-sum-exp smoothing of `u`
//! (extrapolated in the smoothing width), and the inductive pairing
//! `⟨(dd^c u)^{n+1}, φ⟩ = ∫ u · dd^c φ ∧ (dd^c u)^n`.
//!
//! Modules:
//! * [`forms`] — pointwise exterior algebra in the dz/dz̄ basis;
//! * [`scene`] — the competing smooth functions, envelopes, polyhedra;
//! * [`strata`] — stratum detection, projection, oriented frames, sampling;
//! * [`ma`] — stratified densities and pairings, equilibrium measures;
//! * [`oracle`] — the smoothing and inductive cross-checks;
//! * [`verify`] — randomized identity suites used by tests and the CLI.

pub mod forms;
pub mod ma;
pub mod oracle;
pub mod scene;
pub mod strata;
pub mod verify;

pub use forms::{DerivativeJet, DifferentialForm};
pub use ma::{PairingResult, TestFunction};
pub use scene::{DomainBox, PolyhedronSpec, Scene, SmoothPiece};
pub use strata::{ActiveSet, SamplingPlan, StratumSample};
