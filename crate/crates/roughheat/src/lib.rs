//! Spectral laboratory for a quasilinear parabolic equation with rough forcing,
//! ∂₂U − a(U)∂₁²U + U = f, on the space-time torus and the half-plane.

pub mod error;
pub mod experiments;
pub mod fft;
pub mod fit;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod par;
pub mod products;
pub mod noise;
pub mod norms;
pub mod refsol;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{DomainKind, Field, GridSpec, Point};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
