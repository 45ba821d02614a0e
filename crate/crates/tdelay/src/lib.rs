//! Time delays and sojourn times in one-dimensional and radial scattering.

pub mod model;
pub mod numeric;
pub mod classical;
pub mod stationary;

pub use model::*;
pub mod sojourn;
pub mod dynamics;
pub mod floquet;
