//! Numerical laboratory for interacting-particle diffusions of Dyson type.
//!
//! The crate simulates the finite particle system
//! `dX_i = dB_i + beta * phi_i(X) dt` (pairwise `1/(x_i - x_j)` repulsion,
//! `beta >= 1`) and its reduction to the gap process `Y_a = X_{a+1/2} - X_{a-1/2}`,
//! indexed by half-integers. On top of the integrators it provides the
//! constructions that make the infinite-volume theory testable at desk scale:
//! monotone iteration ladders, coupled comparison runs, nested-window
//! convergence experiments, boundary diagnostics, and independent oracles
//! (matrix-model eigenvalue dynamics, Bessel running-max moments, a bulk
//! spectral sampler).
//!
//! Everything is driven by counter-based Gaussian noise streams keyed by
//! `(seed, particle index, step)`, so distinct systems can share increments
//! exactly and every experiment replays bit-identically at any thread count.

pub mod cli;
pub mod configspace;
pub mod convergence;
pub mod interaction;
pub mod iteration;
pub mod oracles;
pub mod sde;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum DysonError {
    /// A configuration violated a structural invariant (ordering, positivity, ranges).
    #[error("invalid configuration: {0}")]
    Config(String),
    /// The requested window does not contain a required index.
    #[error("window does not contain required index {0}")]
    AnchorMissing(i64),
    /// A gap map with an infinite entry cannot be inverted to particle positions.
    #[error("gap configuration contains an infinite gap; not invertible")]
    NotInvertible,
    /// An operation needed indices outside the stored window.
    #[error("index range out of window: {0}")]
    OutOfWindow(String),
    /// Drift evaluation at a zero gap.
    #[error("singular drift: gap at key {0} is zero")]
    SingularDrift(i64),
    /// The integrator could not restore validity within the substep budget.
    #[error("integrator unstable at step {step}: {detail}")]
    Stability { step: u64, detail: String },
    /// An invariant that the construction guarantees was violated beyond tolerance.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    /// A mesoscopic partition cell came out empty; a larger scale parameter is needed.
    #[error("degenerate partition cell at b={b}; increase k (was {k})")]
    IncreaseK { b: i64, k: u32 },
    /// The sampler cannot cover the requested window at this size.
    #[error("sample too small for requested window: {0}")]
    Coverage(String),
    /// Run-spec validation failures; every offending field is listed.
    #[error("invalid run spec: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DysonError>;
