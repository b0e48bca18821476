//! The momentum-velocity operator `Λ = M·diag(Σ_α v_j^α ∂_α)·M⁻¹` and its
//! block decomposition conforming to the conserved / nonconserved split.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::number::{imag_unit, to_gauss, GaussRational, Rational};
use crate::scheme::LatticeScheme;

use super::poly::{MultiIndex, Poly, DEFAULT_DEGREE_CAP};
use super::{DiffPoly, OpMatrix};

pub fn build_lambda(scheme: &LatticeScheme) -> Result<OpMatrix> {
    build_lambda_with_cap(scheme, DEFAULT_DEGREE_CAP)
}

pub fn build_lambda_with_cap(scheme: &LatticeScheme, cap: u32) -> Result<OpMatrix> {
    let (q, d) = (scheme.q(), scheme.dim);
    let m = &scheme.moment_matrix;
    let m_inv = scheme.inverse_moment_matrix()?;
    let velocities: Vec<Vec<Rational>> = (0..q).map(|j| scheme.velocity(j)).collect();
    Ok(OpMatrix::from_fn(q, q, d, cap, |k, l| {
        let mut entry = DiffPoly::zero(d, cap);
        for axis in 0..d {
            let c = velocities.iter().enumerate().fold(Rational::zero(), |acc, (j, v)| {
                acc + &m[(k, j)] * &v[axis] * &m_inv[(j, l)]
            });
            entry.add_term(MultiIndex::unit(d, axis), c);
        }
        entry
    }))
}

/// `Λ = [[A, B], [C, D]]` with `A` of size `n_c × n_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Blocks {
    pub a: OpMatrix,
    pub b: OpMatrix,
    pub c: OpMatrix,
    pub d: OpMatrix,
}

impl Blocks {
    pub fn assemble(&self) -> OpMatrix {
        OpMatrix::from_blocks(&self.a, &self.b, &self.c, &self.d)
    }
}

pub fn block_split(op: &OpMatrix, n_c: usize) -> Result<Blocks> {
    let q = op.rows();
    if op.cols() != q {
        return Err(Error::Dimension(format!("block split of a {}x{} operator", op.rows(), op.cols())));
    }
    if n_c == 0 || n_c > q {
        return Err(Error::ConservedCount { n_c, q });
    }
    Ok(Blocks {
        a: op.submatrix(0..n_c, 0..n_c),
        b: op.submatrix(0..n_c, n_c..q),
        c: op.submatrix(n_c..q, 0..n_c),
        d: op.submatrix(n_c..q, n_c..q),
    })
}

/// Blocks of `Λⁿ` for `n = 1..=up_to`, built by the recurrences
/// `A_{n+1} = A_n A + B_n C`, `B_{n+1} = A_n B + B_n D`,
/// `C_{n+1} = C_n A + D_n C`, `D_{n+1} = C_n B + D_n D`.
#[derive(Clone, Debug)]
pub struct BlockPowers {
    levels: Vec<Blocks>,
}

impl BlockPowers {
    /// Blocks of `Λⁿ`; `n` starts at 1.
    pub fn level(&self, n: usize) -> &Blocks {
        &self.levels[n - 1]
    }

    pub fn max_level(&self) -> usize {
        self.levels.len()
    }
}

pub fn block_powers(op: &OpMatrix, n_c: usize, up_to: usize) -> Result<BlockPowers> {
    let base = block_split(op, n_c)?;
    let mut levels = vec![base.clone()];
    for _ in 1..up_to {
        let prev = levels.last().unwrap();
        let next = Blocks {
            a: &prev.a * &base.a + &prev.b * &base.c,
            b: &prev.a * &base.b + &prev.b * &base.d,
            c: &prev.c * &base.a + &prev.d * &base.c,
            d: &prev.c * &base.b + &prev.d * &base.d,
        };
        levels.push(next);
    }
    Ok(BlockPowers { levels })
}

/// Plane-wave symbol: substitutes `∂_α ↦ i·k_α`.
pub fn apply_planewave(op: &OpMatrix, k: &[GaussRational]) -> Matrix<GaussRational> {
    let point: Vec<GaussRational> = k.iter().map(|x| imag_unit() * x.clone()).collect();
    let lifted = op.map(lift);
    lifted.evaluate(&point)
}

/// Rational operator polynomial viewed over the Gaussian rationals.
pub fn lift(p: &DiffPoly) -> Poly<GaussRational> {
    p.map_coeffs(|_, c| to_gauss(c))
}
