//! Verification workbench for a single quantized cavity mode coupled to a
//! movable mirror on a spring.
//!
//! Two independent routes to the same physics are kept side by side: truncated
//! Fock-space diagonalization (the oracle) and closed-form weak-coupling
//! results backed by an exact rational residue calculus. The CLI assembles
//! both into machine-readable reports so any drift between the routes is
//! visible instead of averaged away.

pub mod cli;
pub mod dynamics;
pub mod fockspace;
pub mod model;
pub mod perturb;
pub mod report;
pub mod residues;
pub mod spectra;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
