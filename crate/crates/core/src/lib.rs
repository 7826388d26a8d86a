//! Sparse Johnson-Lindenstrauss projections and the tools to study how well
//! they preserve norms of vectors with a bounded l-infinity to l2 ratio:
//! samplers, an exact enumeration oracle, Monte Carlo estimators with
//! confidence intervals, and closed-form threshold and moment formulas.

pub mod bounds;
pub mod constants;
pub mod error;
pub mod monte_carlo;
pub mod numeric;
pub mod oracle;
pub mod sampler;
pub mod seed;
pub mod types;

pub use constants::BoundConstants;
pub use error::{Result, SjlError};
pub use seed::Seed;
pub use types::{
    basis_vector, flat_vector, hard_vector, make_unit_vector, Entry, Flavor, Method,
    MomentEstimate, SjlMatrix, SjlParams, UnitVector,
};
