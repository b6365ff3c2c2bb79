//! Dimension theory toolkit for self-conformal iterated function systems:
//! symbolic coding, conformal maps and their distortion, Gibbs measures,
//! the rotation cocycle, and entropy-dimension estimators for projections.

pub mod cloud;
pub mod conformal;
pub mod dimension;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod gibbs;
pub mod rng;
pub mod symbolic;

pub use num_complex::Complex64;
pub use conformal::{ConformalSystem, Family, SimilarityMap};
pub use error::{Error, Result};
pub use geometry::{Ball, Rotation};
pub use symbolic::{Alphabet, InfiniteWord, RefinedAlphabet, Symbol, Word};
