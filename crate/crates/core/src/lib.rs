//! Numerical toolkit for isoperimetric problems in Gaussian measures
//! perturbed by a concave function of one coordinate, on slabs, half-spaces
//! and the whole space.

pub mod error;
pub mod geometry;
pub mod optimize;
pub mod profiles;
pub mod quadrature;
pub mod special;
pub mod spectrum;
pub mod transport;
pub mod weights;

pub use error::{Error, Result};
pub use weights::{Density, QuadratureSpec, Slab, Weight1D};
