//! Seeded random rational schemes for property tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use lbm_ce::matrix::Matrix;
use lbm_ce::number::{int, rat, Rational};
use lbm_ce::LatticeScheme;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `p/q` with `|p| <= num`, `1 <= q <= den`.
pub fn small_rational(rng: &mut impl Rng, num: i64, den: i64) -> Rational {
    rat(rng.random_range(-num..=num), rng.random_range(1..=den))
}

pub fn rational_vector(rng: &mut impl Rng, len: usize) -> Vec<Rational> {
    (0..len).map(|_| small_rational(rng, 9, 7)).collect()
}

/// Rate `k/10` with `k` in `5..=19`.
pub fn stable_rate(rng: &mut impl Rng) -> Rational {
    rat(rng.random_range(5..=19), 10)
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub dim: usize,
    pub q: usize,
    pub conserved: usize,
}

impl Shape {
    pub const fn new(dim: usize, q: usize, conserved: usize) -> Self {
        Self { dim, q, conserved }
    }
}

/// Distinct integer velocities, the rest vector first.
fn velocities(rng: &mut impl Rng, dim: usize, q: usize) -> Vec<Vec<Rational>> {
    let reach: i64 = if dim == 1 { 3 } else { 1 };
    let mut pool: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..dim {
        pool = pool
            .into_iter()
            .flat_map(|p| (-reach..=reach).map(move |c| [p.clone(), vec![c]].concat()))
            .collect();
    }
    pool.retain(|v| v.iter().any(|&c| c != 0));
    assert!(pool.len() + 1 >= q, "not enough distinct velocities for q = {q} in {dim}-d");
    pool.shuffle(rng);
    std::iter::once(vec![0; dim])
        .chain(pool.into_iter().take(q - 1))
        .map(|v| v.into_iter().map(int).collect())
        .collect()
}

/// Invertible integer moment matrix; row 0 is all ones when `mass_row`.
fn moment_matrix(rng: &mut impl Rng, q: usize, mass_row: bool) -> Matrix<Rational> {
    loop {
        let m = Matrix::from_fn(q, q, |i, _| {
            if i == 0 && mass_row {
                int(1)
            } else {
                int(rng.random_range(-2..=2))
            }
        });
        if !m.determinant().is_zero() {
            return m;
        }
    }
}

/// Random valid scheme with stable rates, zero offset and unit base state.
pub fn random_scheme(rng: &mut impl Rng, shape: Shape) -> LatticeScheme {
    random_scheme_with(rng, shape, true)
}

pub fn random_scheme_with(rng: &mut impl Rng, shape: Shape, mass_row: bool) -> LatticeScheme {
    let Shape { dim, q, conserved } = shape;
    let n_y = q - conserved;
    let lambda = [int(1), rat(1, 2), int(2)][rng.random_range(0..3)].clone();
    let velocities = velocities(rng, dim, q);
    let moment_matrix = moment_matrix(rng, q, mass_row);
    let equilibrium_jacobian = Matrix::from_fn(n_y, conserved, |_, _| small_rational(rng, 3, 4));
    let rates = (0..n_y).map(|_| stable_rate(rng)).collect();
    LatticeScheme {
        name: format!("random-d{dim}q{q}c{conserved}"),
        dim,
        lambda,
        velocities,
        moment_matrix,
        conserved,
        equilibrium_jacobian,
        equilibrium_offset: vec![Rational::zero(); n_y],
        rates,
        base_state: vec![int(1); conserved],
        parameters: BTreeMap::new(),
        moment_names: (0..q).map(|k| format!("m{k}")).collect(),
    }
    .checked()
    .expect("generator produces valid schemes")
}

/// Shapes cycled through by the batch generator.
pub const SHAPES: [Shape; 6] = [
    Shape::new(1, 3, 1),
    Shape::new(1, 4, 1),
    Shape::new(1, 5, 2),
    Shape::new(2, 4, 1),
    Shape::new(2, 5, 1),
    Shape::new(2, 6, 2),
];

pub fn random_batch(seed: u64, count: usize) -> Vec<LatticeScheme> {
    let mut r = rng(seed);
    (0..count).map(|i| random_scheme(&mut r, SHAPES[i % SHAPES.len()])).collect()
}
