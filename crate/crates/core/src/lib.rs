//! Numerical laboratory for random walks conditioned to stay nonnegative,
//! their stable limit laws, and branching processes in random environment.

pub mod bpre;
pub mod error;
pub mod harness;
pub mod interp;
pub mod limits;
pub mod quad;
pub mod rng;
pub mod stable;
pub mod walk;

pub use error::{Error, Result};
