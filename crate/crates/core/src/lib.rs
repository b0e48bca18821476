//! Equivalent partial differential equations of multi-relaxation-time lattice
//! Boltzmann schemes, to fourth order in the time step, with two independent
//! cross-checks: an exact dispersion expansion of the one-step amplification
//! matrix, and direct simulation on periodic grids.
//!
//! The pipeline is [`scheme::LatticeScheme`] → [`diffop::build_lambda`] →
//! [`expansion::expand`] → [`expansion::assemble_pde`], verified by
//! [`dispersion`] and [`simulator`].

pub mod diffop;
pub mod dispersion;
pub mod error;
pub mod exec;
pub mod expansion;
pub mod matrix;
pub mod number;
pub mod render;
pub mod scheme;
pub mod scheme_file;
pub mod simulator;

pub use error::{Error, Result};
pub use scheme::LatticeScheme;
