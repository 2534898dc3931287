//! Membership curve fitting and embedding optimization.

pub mod curve;
pub mod gradient;
pub mod optimize;

pub use curve::{fit_phi, phi, psi, CurveParams};
pub use gradient::{attractive_gradient, repulsive_gradient};
pub use optimize::{cross_entropy, default_n_epochs, optimize_embedding, NonEdgeTerm, OptimizerConfig};
