//! Exact commutative algebra of constant-coefficient differential operators.

mod lambda;
mod opmatrix;
mod poly;
mod serial;

pub use lambda::{apply_planewave, block_powers, block_split, build_lambda, build_lambda_with_cap, lift, BlockPowers, Blocks};
pub use opmatrix::PolyMatrix;
pub use poly::{MultiIndex, Poly, DEFAULT_DEGREE_CAP};
pub use serial::{DiffPolyJson, OpMatrixJson, TermJson};

use crate::number::Rational;

pub type DiffPoly = Poly<Rational>;
pub type OpMatrix = PolyMatrix<Rational>;
