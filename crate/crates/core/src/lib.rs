//! Simulation and numerical analysis of the generalized random cherry tree.
//!
//! The graph starts from a single edge. At each step an edge is picked with
//! probability proportional to its weight `1 + b + c·ξ`, then either deleted
//! or made to grow a litter of cherries and semi-cherries. Embedding the
//! process in continuous time turns the edges into a Crump–Mode–Jagers
//! branching population, which is what [`analytic`] and [`genfun`] solve.
//!
//! - [`model`]: parameters, offspring laws, generating functions.
//! - [`numerics`]: singular-endpoint quadrature and bracketing root finding.
//! - [`analytic`]: survival function, Malthusian parameters, asymptotic ratios.
//! - [`genfun`]: offspring and degree generating functions, extinction and
//!   isolation probabilities.
//! - [`oracle`]: brute-force recursion and single-edge Monte Carlo used to
//!   cross-check the formulas.
//! - [`sim`]: event-driven simulator of the full graph process.
//! - [`montecarlo`]: replicated campaigns with reproducible seeding.

pub mod analytic;
pub mod genfun;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod oracle;
pub mod sim;

pub use analytic::AnalyticSummary;
pub use model::{Litter, ModelParams, OffspringDist};
