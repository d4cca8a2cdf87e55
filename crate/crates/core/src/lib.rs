//! Periodic spring lattices whose cells carry rigid units joined at nodes.
//!
//! The crate builds Kagome and Rotating Squares style lattices, evaluates
//! their cell-averaged spring energies with an orientation penalty, and
//! supplies the planar geometry, mechanism constructions, cell solvers and
//! soft-mode tools used to study their macroscopic response.
//!
//! It is `no_std` with `alloc`; all transcendental functions go through
//! [`libm`]. File formats and the command line live in a separate crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod cellsolver;
pub mod energy;
mod error;
pub mod geometry;
pub mod lattice;
pub mod linalg;
pub mod math;
pub mod mechanisms;
pub mod optim;
pub mod softmodes;

pub use error::{Error, Result};
pub use lattice::{LatticeSpec, NodalField, NodeRef, PeriodicDeformation, Supercell};
pub use linalg::{Mat2, Vec2};
