//! Sparse regression through conic relaxations of the l0-penalized least
//! squares problem
//!
//! ```text
//! min_b 1/2 |Xb - y|^2 + 1/2 mu |b|^2 + lambda |b|_0
//! ```
//!
//! The crate provides perspective (MCP / reverse Huber) relaxations, the
//! optimal-perspective semidefinite relaxation with dual certificates,
//! Goemans-Williamson style rounding, exact solvers for small `p`, and a
//! benchmark harness for relative-gap experiments.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases at the crate
//! root fix the scalar to `f64`, which is what the solver tolerances assume.

pub mod bench;
pub mod error;
pub mod exact;
pub mod instance;
pub mod numerics;
pub mod penalties;
pub mod perspective;
mod prox_grad;
pub mod rounding;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use prox_grad::ProxGradConfig;
pub use scalar::Real;

pub type ProblemInstance = instance::ProblemInstance<f64>;
pub type GramCache = instance::GramCache<f64>;
pub type FitResult = instance::FitResult<f64>;
pub type SymMatrix = numerics::SymMatrix<f64>;
pub type PerspectiveParams = perspective::PerspectiveParams<f64>;
pub type PrSolution = perspective::PrSolution<f64>;
pub type SdpProblem = sdp::SdpProblem<f64>;
pub type SdpPrimal = sdp::SdpPrimal<f64>;
pub type DualCertificate = sdp::DualCertificate<f64>;
pub type SdpSolution = sdp::SdpSolution<f64>;
pub type RoundingResult = rounding::RoundingResult<f64>;
pub type BnbResult = exact::BnbResult<f64>;
