//! Exponentially small separatrix splitting in the area-preserving Henon family.

pub mod error;
pub mod maps;
pub mod numerics;
pub mod diffeq;
pub mod homoclinic;
pub mod inner;
pub mod manifolds;
pub mod outer;
pub mod sweep_fit;

pub use error::{Error, Result};
