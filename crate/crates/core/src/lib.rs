//! Simulation and verification toolkit for the myopic self-avoiding walk
//! (MSAW) on lattice tori.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the component formulas
#![allow(clippy::needless_range_loop, clippy::manual_checked_ops)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod field;
pub mod fock;
pub mod gibbs;
pub mod harness;
pub mod lattice;
pub mod poly;
pub mod quadrature;
pub mod rate;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use field::{FieldTag, TorusField};
pub use lattice::{SpectralCache, Torus};
pub use rate::{validate, RateSpec};
