//! Exact desk-scale simulation of renormalization-group quantum circuits that
//! recognize 1D symmetry-protected-topological (SPT) and symmetry-breaking
//! phases of finite Abelian groups.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! group  ->  projective  ->  mps  ->  circuit  ->  recognize
//!   |            |                       |
//!   +-- flow (classical majority-vote renormalization)
//!   +-- ssb (symmetry-breaking recognizer)
//!   +-- nonmnc (central-extension reduction to the MNC pipeline)
//! ```
//!
//! All expectation values are computed exactly: dense statevectors where the
//! Hilbert space fits, transfer matrices and blocked tensor contraction where
//! it does not. Every randomized routine takes an explicit seed.

pub mod blocked;
pub mod circuit;
pub mod error;
pub mod flow;
pub mod group;
pub mod lanczos;
pub mod mps;
pub mod nonmnc;
pub mod projective;
pub mod recognize;
pub mod selftest;
pub mod ssb;
pub mod tensor;

pub use error::{CoreError, Result};
pub use group::{FactorSet, FiniteAbelianGroup, GroupElement, Phase};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
