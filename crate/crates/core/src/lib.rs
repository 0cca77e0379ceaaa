//! Numerical spectral geometry on planar polygonal domains.
//!
//! The crate builds P1 finite-element realisations of the Dirichlet, Neumann
//! and Robin Laplacians, constructs operators intertwining them (the
//! seven-triangle transplantation, the eigenbasis intertwiner, reflection and
//! copy operators), and analyses a given operator: is it
//! disjointness-preserving, can it be factored as `Uf(y) = h(y) f(tau(y))`,
//! is `tau` a local isometry, and are the two domains congruent.

pub mod congruence;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod opanalysis;
pub mod pipeline;
pub mod sparse;
pub mod transplant;

pub use error::{DrumError, Result};
