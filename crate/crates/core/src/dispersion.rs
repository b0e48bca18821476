//! Dispersion oracle: the one-step amplification matrix of a scheme, the
//! logarithm of its slow invariant-subspace restriction as a series in the
//! wavevector, and comparison against the expansion engine.
//!
//! A Fourier mode `m̂ e^{i k·x}` is mapped by one step to `G(k) m̂` with
//!
//! ```text
//! G(k) = M diag(e^{−i v_j·k}) M⁻¹ K,    K = [[I, 0], [S E, I − S]]
//! ```
//!
//! (lattice units, `Δt = 1`). The conserved moments evolve on the invariant
//! subspace `[I; X(k)]` through `G_red(k) = G_WW + G_WY X`, and the engine
//! predicts `ln G_red(k) = −Σ_j Γ_j(ik) + O(|k|⁵)`.
//!
//! The exact path works in Gaussian rationals: the streaming exponential is
//! truncated at degree 4, `X` and `G_red` follow from a degree-by-degree
//! recursion, and `ln(I + N)` is a finite series. The numeric path evaluates
//! `G` in double precision at complex wavevectors `t θ` with `t` on a circle,
//! extracts directional Taylor coefficients by a discrete Cauchy integral and
//! fits the multivariate coefficients by least squares.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::diffop::{MultiIndex, OpMatrix, Poly, PolyMatrix};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::expansion::ExpansionResult;
use crate::matrix::Matrix;
use crate::number::{format_rational, gauss, imag_unit, parse_rational, rat, to_f64, to_gauss, GaussRational, Rational};
use crate::scheme::LatticeScheme;

pub const SERIES_DEGREE: u32 = 4;

pub type KSeries = Poly<GaussRational>;
pub type SeriesMatrix = PolyMatrix<GaussRational>;

/// `G(k)` truncated at total degree 4 in `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplificationSeries {
    pub dim: usize,
    pub conserved: usize,
    pub matrix: SeriesMatrix,
}

impl AmplificationSeries {
    pub fn at_zero(&self) -> Matrix<GaussRational> {
        self.matrix.evaluate(&vec![GaussRational::zero(); self.dim])
    }
}

/// `Σ_{n≤4} (−i λ c_j·k)ⁿ / n!`.
fn streaming_symbol(scheme: &LatticeScheme, j: usize) -> KSeries {
    let d = scheme.dim;
    let v = scheme.velocity(j);
    let lin = KSeries::from_terms(
        d,
        SERIES_DEGREE,
        (0..d).map(|a| (MultiIndex::unit(d, a), gauss(Rational::zero(), -&v[a]))),
    );
    let mut term = KSeries::constant(d, SERIES_DEGREE, GaussRational::one());
    let mut out = term.clone();
    for n in 1..=SERIES_DEGREE {
        term = (&term * &lin).scale(&to_gauss(&rat(1, n as i64)));
        out = &out + &term;
    }
    out
}

pub fn amplification_series(scheme: &LatticeScheme) -> Result<AmplificationSeries> {
    let scheme = scheme.clone().checked()?;
    let (q, d) = (scheme.q(), scheme.dim);
    let m = scheme.moment_matrix.map(to_gauss);
    let minv_k = scheme.inverse_moment_matrix()?.mul(&scheme.relaxation_matrix()).map(to_gauss);
    let symbols: Vec<KSeries> = (0..q).map(|j| streaming_symbol(&scheme, j)).collect();
    let matrix = SeriesMatrix::from_fn(q, q, d, SERIES_DEGREE, |r, c| {
        let mut acc = KSeries::zero(d, SERIES_DEGREE);
        for (j, s) in symbols.iter().enumerate() {
            let w = &m[(r, j)] * &minv_k[(j, c)];
            if !w.is_zero() {
                acc = &acc + &s.scale(&w);
            }
        }
        acc
    });
    Ok(AmplificationSeries { dim: d, conserved: scheme.conserved, matrix })
}

/// Degree-≤4 series of `ln G_red(k)`, an `n_c × n_c` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionSeries {
    pub dim: usize,
    pub conserved: usize,
    pub log: SeriesMatrix,
}

impl DispersionSeries {
    pub fn entry(&self, row: usize, col: usize) -> &KSeries {
        self.log.get(row, col)
    }

    /// Scalar coefficient for one conserved moment.
    pub fn coefficient(&self, beta: &MultiIndex) -> GaussRational {
        self.log.get(0, 0).coeff(beta)
    }

    pub fn to_json(&self) -> DispersionJson {
        series_json(&self.log, self.dim, self.conserved)
    }
}

fn vstack(top: &SeriesMatrix, bottom: &SeriesMatrix) -> SeriesMatrix {
    let r = top.rows();
    SeriesMatrix::from_fn(r + bottom.rows(), top.cols(), top.dim(), top.cap(), |i, j| {
        if i < r {
            top.get(i, j).clone()
        } else {
            bottom.get(i - r, j).clone()
        }
    })
}

/// Slow invariant-subspace recursion followed by the matrix logarithm.
pub fn slow_log_series(ampl: &AmplificationSeries) -> Result<DispersionSeries> {
    let (d, n_c) = (ampl.dim, ampl.conserved);
    let q = ampl.matrix.rows();
    let p = q - n_c;
    let g0 = ampl.at_zero();
    let top_ok = (0..n_c).all(|i| {
        (0..q).all(|j| if i == j { g0[(i, j)].is_one() } else { g0[(i, j)].is_zero() })
    });
    if !top_ok {
        return Err(Error::Unsupported("relaxation does not preserve the conserved moments".into()));
    }
    let k_yy = g0.submatrix(n_c..q, n_c..q);
    let k_yw = g0.submatrix(n_c..q, 0..n_c);
    let a_inv = Matrix::identity(p)
        .sub(&k_yy)
        .inverse()
        .ok_or_else(|| Error::DegenerateSlowEigenvalue("eigenvalue 1 of K is not simple on the conserved block".into()))?;
    let a_inv = SeriesMatrix::from_scalar(&a_inv, d, SERIES_DEGREE);

    let cap = SERIES_DEGREE;
    let g: Vec<SeriesMatrix> = (0..=cap).map(|n| ampl.matrix.homogeneous_part(n)).collect();
    let x0 = SeriesMatrix::from_scalar(&a_inv_mul(&Matrix::identity(p).sub(&k_yy), &k_yw)?, d, cap);
    let mut r: Vec<SeriesMatrix> = vec![vstack(&SeriesMatrix::identity(n_c, d, cap), &x0)];
    let mut mred: Vec<SeriesMatrix> = vec![SeriesMatrix::identity(n_c, d, cap)];
    for n in 1..=cap as usize {
        let mut rhs = SeriesMatrix::zeros(q, n_c, d, cap);
        for a in 1..=n {
            rhs = &rhs + &(&g[a] * &r[n - a]);
        }
        for b in 1..n {
            rhs = &rhs - &(&r[b] * &mred[n - b]);
        }
        let m_n = rhs.submatrix(0..n_c, 0..n_c);
        let x_n = &a_inv * &(&rhs.submatrix(n_c..q, 0..n_c) - &(&x0 * &m_n));
        r.push(vstack(&SeriesMatrix::zeros(n_c, n_c, d, cap), &x_n));
        mred.push(m_n);
    }

    let n_mat = mred[1..].iter().fold(SeriesMatrix::zeros(n_c, n_c, d, cap), |acc, m| &acc + m);
    let mut log = SeriesMatrix::zeros(n_c, n_c, d, cap);
    let mut power = SeriesMatrix::identity(n_c, d, cap);
    for n in 1..=cap as i64 {
        power = &power * &n_mat;
        let sign = if n % 2 == 1 { 1 } else { -1 };
        log = &log + &power.scale(&to_gauss(&rat(sign, n)));
    }
    Ok(DispersionSeries { dim: d, conserved: n_c, log })
}

/// `a⁻¹ b` for constant matrices.
fn a_inv_mul(a: &Matrix<GaussRational>, b: &Matrix<GaussRational>) -> Result<Matrix<GaussRational>> {
    let inv = a.inverse().ok_or_else(|| Error::DegenerateSlowEigenvalue("singular slow-subspace system".into()))?;
    Ok(inv.mul(b))
}

/// `∂^β ↦ i^{|β|} k^β`.
pub fn symbol(op: &OpMatrix) -> SeriesMatrix {
    let i = imag_unit();
    op.map(|p| {
        p.map_coeffs(|beta, c| {
            let mut z = to_gauss(c);
            for _ in 0..beta.degree() {
                z *= &i;
            }
            z
        })
        .with_cap(SERIES_DEGREE)
    })
}

/// `−Σ_j Γ_j(ik)`.
pub fn engine_series(result: &ExpansionResult) -> SeriesMatrix {
    let n_c = result.conserved;
    result
        .gamma
        .iter()
        .fold(SeriesMatrix::zeros(n_c, n_c, result.dim, SERIES_DEGREE), |acc, g| &acc - &symbol(g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub row: usize,
    pub col: usize,
    pub beta: MultiIndex,
    pub oracle: GaussRational,
    pub engine: GaussRational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleComparison {
    pub mismatches: Vec<Mismatch>,
}

impl OracleComparison {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }

    /// Lowest degree, then graded-lex order, then entry.
    pub fn first_mismatch(&self) -> Option<&Mismatch> {
        self.mismatches.first()
    }
}

/// Coefficients of total degree `≤ max_degree`.
pub fn compare(oracle: &DispersionSeries, engine: &SeriesMatrix, max_degree: u32) -> OracleComparison {
    let mut mismatches = Vec::new();
    for degree in 0..=max_degree.min(SERIES_DEGREE) {
        for beta in MultiIndex::all_of_degree(oracle.dim, degree) {
            for row in 0..oracle.conserved {
                for col in 0..oracle.conserved {
                    let (o, e) = (oracle.log.get(row, col).coeff(&beta), engine.get(row, col).coeff(&beta));
                    if o != e {
                        mismatches.push(Mismatch { row, col, beta: beta.clone(), oracle: o, engine: e });
                    }
                }
            }
        }
    }
    OracleComparison { mismatches }
}

/// Exact oracle against the engine up to the expansion order.
pub fn exact_check(scheme: &LatticeScheme, result: &ExpansionResult) -> Result<OracleComparison> {
    let oracle = slow_log_series(&amplification_series(scheme)?)?;
    Ok(compare(&oracle, &engine_series(result), result.order as u32))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesTermJson {
    pub beta: Vec<u8>,
    pub re: String,
    pub im: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesEntryJson {
    pub row: usize,
    pub col: usize,
    pub terms: Vec<SeriesTermJson>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispersionJson {
    pub dim: usize,
    pub conserved: usize,
    pub entries: Vec<SeriesEntryJson>,
}

pub fn series_json(m: &SeriesMatrix, dim: usize, conserved: usize) -> DispersionJson {
    let entries = m
        .entries()
        .map(|((row, col), p)| SeriesEntryJson {
            row,
            col,
            terms: p
                .terms()
                .map(|(b, c)| SeriesTermJson {
                    beta: b.exponents().to_vec(),
                    re: format_rational(&c.re),
                    im: format_rational(&c.im),
                })
                .collect(),
        })
        .collect();
    DispersionJson { dim, conserved, entries }
}

impl TryFrom<&DispersionJson> for DispersionSeries {
    type Error = Error;

    fn try_from(j: &DispersionJson) -> Result<Self> {
        let mut log = SeriesMatrix::zeros(j.conserved, j.conserved, j.dim, SERIES_DEGREE);
        for e in &j.entries {
            if e.row >= j.conserved || e.col >= j.conserved {
                return Err(Error::Dimension(format!("entry ({}, {}) outside {c}×{c}", e.row, e.col, c = j.conserved)));
            }
            let mut p = KSeries::zero(j.dim, SERIES_DEGREE);
            for t in &e.terms {
                if t.beta.len() != j.dim {
                    return Err(Error::Dimension(format!("multi-index {:?} in dimension {}", t.beta, j.dim)));
                }
                p.add_term(MultiIndex::new(t.beta.clone()), gauss(parse_rational(&t.re)?, parse_rational(&t.im)?));
            }
            log.set(e.row, e.col, p);
        }
        Ok(Self { dim: j.dim, conserved: j.conserved, log })
    }
}

/// Complex wavevectors `t θ`, `t = radius · e^{2πi m/points}`, for each
/// real unit direction `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct KSampling {
    pub radius: f64,
    pub points: usize,
    pub directions: Vec<Vec<f64>>,
}

impl KSampling {
    pub const STANDARD_RADIUS: f64 = 0.25;
    const PROBE_TARGET: f64 = 0.2;

    pub fn standard(dim: usize) -> Self {
        Self::with_radius(dim, Self::STANDARD_RADIUS)
    }

    /// Radius chosen so that `‖G_red − I‖ ≈ PROBE_TARGET` on the sampled
    /// circle, starting from the standard radius over the lattice speed.
    pub fn for_scheme(scheme: &LatticeScheme) -> Self {
        let speed = scheme
            .velocities
            .iter()
            .flatten()
            .map(|c| to_f64(&(c * &scheme.lambda)).abs())
            .fold(1.0, f64::max);
        let mut sampling = Self::with_radius(scheme.dim, Self::STANDARD_RADIUS / speed);
        if let Ok(fs) = FloatScheme::new(scheme) {
            let mut worst = 0.0f64;
            for theta in &sampling.directions {
                for quarter in 0..4 {
                    let t = Complex64::from_polar(sampling.radius, PI / 2.0 * quarter as f64);
                    let k: Vec<Complex64> = theta.iter().map(|&a| t * a).collect();
                    let norm = match slow_restriction(&fs.amplification(&k), fs.conserved) {
                        Ok((mred, _)) => (mred - DMatrix::identity(fs.conserved, fs.conserved)).norm(),
                        Err(_) => f64::INFINITY,
                    };
                    worst = worst.max(norm);
                }
            }
            if worst > Self::PROBE_TARGET {
                // ‖G_red − I‖ grows linearly in the radius for small radii.
                let shrink = if worst.is_finite() { Self::PROBE_TARGET / worst } else { 0.25 };
                sampling.radius *= shrink;
            }
        }
        sampling
    }

    pub fn with_radius(dim: usize, radius: f64) -> Self {
        Self { radius, points: 32, directions: default_directions(dim) }
    }

    pub fn len(&self) -> usize {
        self.points * self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Enough distinct directions to separate every homogeneous polynomial of
/// degree ≤ 4.
pub fn default_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => vec![],
        1 => vec![vec![1.0]],
        2 => (0..12).map(|m| {
            let a = PI * m as f64 / 12.0;
            vec![a.cos(), a.sin()]
        })
        .collect(),
        _ => {
            // Primitive integer vectors in {−2..2}^d with a positive leading entry.
            let mut out = Vec::new();
            let total = 5usize.pow(dim as u32);
            for code in 0..total {
                let v: Vec<i64> = (0..dim).map(|a| (code / 5usize.pow(a as u32) % 5) as i64 - 2).collect();
                let lead = v.iter().find(|&&x| x != 0);
                if lead.is_none_or(|&x| x < 0) {
                    continue;
                }
                let g = v.iter().fold(0i64, |g, &x| num_integer::gcd(g, x.abs()));
                if g != 1 {
                    continue;
                }
                let norm = (v.iter().map(|x| (x * x) as f64).sum::<f64>()).sqrt();
                out.push(v.iter().map(|&x| x as f64 / norm).collect());
            }
            out
        }
    }
}

/// Scheme data in double precision.
#[derive(Clone, Debug)]
pub struct FloatScheme {
    pub q: usize,
    pub dim: usize,
    pub conserved: usize,
    pub m: DMatrix<f64>,
    pub minv: DMatrix<f64>,
    pub relax: DMatrix<f64>,
    /// Physical velocities `λ c_j`.
    pub velocities: Vec<Vec<f64>>,
}

impl FloatScheme {
    pub fn new(scheme: &LatticeScheme) -> Result<Self> {
        let q = scheme.q();
        let to = |m: &Matrix<Rational>| DMatrix::from_fn(m.rows(), m.cols(), |i, j| to_f64(&m[(i, j)]));
        Ok(Self {
            q,
            dim: scheme.dim,
            conserved: scheme.conserved,
            m: to(&scheme.moment_matrix),
            minv: to(&scheme.inverse_moment_matrix()?),
            relax: to(&scheme.relaxation_matrix()),
            velocities: (0..q).map(|j| scheme.velocity(j).iter().map(to_f64).collect()).collect(),
        })
    }

    /// `G(k)` for a complex wavevector.
    pub fn amplification(&self, k: &[Complex64]) -> DMatrix<Complex64> {
        let phase: Vec<Complex64> = self
            .velocities
            .iter()
            .map(|v| {
                let vk: Complex64 = v.iter().zip(k).map(|(a, b)| b * a).sum();
                (-Complex64::i() * vk).exp()
            })
            .collect();
        let mut left = self.m.map(Complex64::from);
        for (j, p) in phase.iter().enumerate() {
            for r in 0..self.q {
                left[(r, j)] *= p;
            }
        }
        left * (&self.minv * &self.relax).map(Complex64::from)
    }
}

/// `G_red` and the smallest singular value of the Sylvester operator
/// `X ↦ X G_red − G_YY X` (small values flag near-degenerate slow and fast
/// eigenvalues).
pub fn slow_restriction(g: &DMatrix<Complex64>, n_c: usize) -> Result<(DMatrix<Complex64>, f64)> {
    let q = g.nrows();
    let p = q - n_c;
    let g11 = g.view((0, 0), (n_c, n_c)).into_owned();
    let g12 = g.view((0, n_c), (n_c, p)).into_owned();
    let g21 = g.view((n_c, 0), (p, n_c)).into_owned();
    let g22 = g.view((n_c, n_c), (p, p)).into_owned();
    let mut x = DMatrix::<Complex64>::zeros(p, n_c);
    let rhs = DVector::from_column_slice(g21.as_slice());
    for _ in 0..200 {
        let mred = &g11 + &g12 * &x;
        let op = sylvester_operator(&mred, &g22);
        let sol = op
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateSlowEigenvalue("singular Sylvester operator".into()))?;
        let x_new = DMatrix::from_column_slice(p, n_c, sol.as_slice());
        let delta = (&x_new - &x).norm();
        x = x_new;
        if delta <= 1e-15 * (1.0 + x.norm()) {
            let mred = &g11 + &g12 * &x;
            let sep = sylvester_operator(&mred, &g22).singular_values().min();
            return Ok((mred, sep));
        }
    }
    Err(Error::DegenerateSlowEigenvalue("slow-subspace iteration did not converge".into()))
}

/// Column-major matrix of `X ↦ X A − B X`.
fn sylvester_operator(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (n, p) = (a.nrows(), b.nrows());
    let mut op = DMatrix::<Complex64>::zeros(n * p, n * p);
    for j in 0..n {
        for i in 0..p {
            let row = j * p + i;
            for l in 0..n {
                op[(row, l * p + i)] += a[(l, j)];
            }
            for l in 0..p {
                op[(row, j * p + l)] -= b[(i, l)];
            }
        }
    }
    op
}

/// Principal logarithm by the Mercator series; needs `‖A − I‖ < 1/2`.
pub fn matrix_log(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let x = a - DMatrix::<Complex64>::identity(n, n);
    let norm = x.norm();
    if norm >= 0.5 {
        return Err(Error::Unsupported(format!("sample radius too large: ‖G_red − I‖ = {norm:.3}")));
    }
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    let mut power = DMatrix::<Complex64>::identity(n, n);
    for k in 1..200 {
        power = &power * &x;
        let term = &power * Complex64::from(if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64);
        out += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    Ok(out)
}

/// Fitted degree-1..4 coefficients of `ln G_red(k)`.
#[derive(Clone, Debug)]
pub struct NumericSeries {
    pub dim: usize,
    pub conserved: usize,
    /// `[row][col]` maps multi-index to coefficient.
    pub coefficients: Vec<Vec<BTreeMap<MultiIndex, Complex64>>>,
    pub condition: f64,
    pub fit_residual: f64,
    pub min_separation: f64,
    pub samples: usize,
}

impl NumericSeries {
    pub fn coefficient(&self, row: usize, col: usize, beta: &MultiIndex) -> Complex64 {
        self.coefficients[row][col].get(beta).copied().unwrap_or_default()
    }

    /// Largest coefficient deviation from an exact series.
    pub fn max_deviation(&self, exact: &SeriesMatrix) -> f64 {
        self.max_deviation_up_to(exact, SERIES_DEGREE)
    }

    pub fn max_deviation_up_to(&self, exact: &SeriesMatrix, max_degree: u32) -> f64 {
        let mut worst = 0.0f64;
        for row in 0..self.conserved {
            for col in 0..self.conserved {
                for degree in 1..=max_degree.min(SERIES_DEGREE) {
                    for beta in MultiIndex::all_of_degree(self.dim, degree) {
                        let c = exact.get(row, col).coeff(&beta);
                        let z = Complex64::new(to_f64(&c.re), to_f64(&c.im));
                        worst = worst.max((self.coefficient(row, col, &beta) - z).norm());
                    }
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.coefficients.iter().flatten().flat_map(|m| m.values()).fold(0.0, |a, z| a.max(z.norm()))
    }
}

pub const MAX_CONDITION: f64 = 1e8;

pub fn slow_subspace_series_numeric(
    scheme: &LatticeScheme,
    sampling: &KSampling,
    exec: Execution,
) -> Result<NumericSeries> {
    let fs = FloatScheme::new(&scheme.clone().checked()?)?;
    let (d, n_c) = (fs.dim, fs.conserved);
    let np = sampling.points;
    if np <= 2 * SERIES_DEGREE as usize || sampling.directions.is_empty() {
        return Err(Error::Unsupported("too few k samples".into()));
    }
    // Directional Taylor coefficients c_n(θ) for n = 1..4, per entry.
    let per_direction = exec.map(&sampling.directions, |theta| -> Result<(Vec<DMatrix<Complex64>>, f64)> {
        let mut logs = Vec::with_capacity(np);
        let mut sep = f64::INFINITY;
        for m in 0..np {
            let t = Complex64::from_polar(sampling.radius, 2.0 * PI * m as f64 / np as f64);
            let k: Vec<Complex64> = theta.iter().map(|&a| t * a).collect();
            let (mred, s) = slow_restriction(&fs.amplification(&k), n_c)?;
            sep = sep.min(s);
            logs.push(matrix_log(&mred)?);
        }
        let coeffs = (1..=SERIES_DEGREE as usize)
            .map(|n| {
                let mut acc = DMatrix::<Complex64>::zeros(n_c, n_c);
                for (m, l) in logs.iter().enumerate() {
                    let w = Complex64::from_polar(1.0, -2.0 * PI * (n * m) as f64 / np as f64);
                    acc += l * w;
                }
                acc / Complex64::from(np as f64 * sampling.radius.powi(n as i32))
            })
            .collect();
        Ok((coeffs, sep))
    });
    let per_direction: Vec<(Vec<DMatrix<Complex64>>, f64)> = per_direction.into_iter().collect::<Result<_>>()?;
    let min_separation = per_direction.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);

    let mut coefficients = vec![vec![BTreeMap::new(); n_c]; n_c];
    let (mut condition, mut fit_residual) = (1.0f64, 0.0f64);
    for n in 1..=SERIES_DEGREE {
        let betas = MultiIndex::all_of_degree(d, n);
        let design = DMatrix::from_fn(sampling.directions.len(), betas.len(), |l, b| {
            betas[b]
                .exponents()
                .iter()
                .zip(&sampling.directions[l])
                .map(|(&e, &x)| x.powi(e as i32))
                .product::<f64>()
        });
        if design.nrows() < design.ncols() {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        let svd = design.clone().svd(true, true);
        let sv = &svd.singular_values;
        let cond = sv.max() / sv.min();
        condition = condition.max(cond);
        if !cond.is_finite() || cond > MAX_CONDITION {
            return Err(Error::IllConditioned(cond));
        }
        for (row, row_coeffs) in coefficients.iter_mut().enumerate() {
            for (col, entry) in row_coeffs.iter_mut().enumerate() {
                let b = DVector::from_fn(sampling.directions.len(), |l, _| per_direction[l].0[n as usize - 1][(row, col)]);
                let (re, im) = (b.map(|z| z.re), b.map(|z| z.im));
                let solve = |rhs: &DVector<f64>| svd.solve(rhs, 1e-14).expect("SVD has both factors");
                let (cre, cim) = (solve(&re), solve(&im));
                fit_residual = fit_residual.max((&design * &cre - &re).amax()).max((&design * &cim - &im).amax());
                for (i, beta) in betas.iter().enumerate() {
                    entry.insert(beta.clone(), Complex64::new(cre[i], cim[i]));
                }
            }
        }
    }
    Ok(NumericSeries {
        dim: d,
        conserved: n_c,
        coefficients,
        condition,
        fit_residual,
        min_separation,
        samples: sampling.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::expand;
    use crate::number::int;
    use crate::scheme::{builtin, builtin_d2q9, d2q9_reference_rates};

    fn d1q1(lambda: Rational) -> LatticeScheme {
        LatticeScheme {
            name: "d1q1".into(),
            dim: 1,
            lambda,
            velocities: vec![vec![int(1)]],
            moment_matrix: Matrix::identity(1),
            conserved: 1,
            equilibrium_jacobian: Matrix::zeros(0, 1),
            equilibrium_offset: vec![],
            rates: vec![],
            base_state: vec![int(1)],
            parameters: Default::default(),
            moment_names: vec!["ρ".into()],
        }
    }

    fn k1(n: u8) -> MultiIndex {
        MultiIndex::new(vec![n])
    }

    #[test]
    fn amplification_at_zero_is_relaxation() {
        let s = builtin("d2q9-oblique").unwrap();
        let a = amplification_series(&s).unwrap();
        assert_eq!(a.at_zero(), s.relaxation_matrix().map(to_gauss));
        let expected_trace = s.rates.iter().fold(int(1), |acc, r| acc + int(1) - r);
        assert_eq!(a.at_zero().trace(), to_gauss(&expected_trace));
    }

    #[test]
    fn single_velocity_exponential() {
        let l = rat(3, 2);
        let a = amplification_series(&d1q1(l.clone())).unwrap();
        let p = a.matrix.get(0, 0);
        let g = |re: Rational, im: Rational| gauss(re, im);
        assert_eq!(p.coeff(&k1(0)), g(int(1), int(0)));
        assert_eq!(p.coeff(&k1(1)), g(int(0), -l.clone()));
        assert_eq!(p.coeff(&k1(2)), g(-&l * &l / int(2), int(0)));
        assert_eq!(p.coeff(&k1(3)), g(int(0), &l * &l * &l / int(6)));
        assert_eq!(p.coeff(&k1(4)), g(&l * &l * &l * &l / int(24), int(0)));
    }

    #[test]
    fn single_velocity_log_is_pure_advection() {
        let l = rat(3, 2);
        let log = slow_log_series(&amplification_series(&d1q1(l.clone())).unwrap()).unwrap();
        let expected = KSeries::monomial(1, 4, k1(1), gauss(int(0), -l));
        assert_eq!(log.entry(0, 0), &expected);
    }

    #[test]
    fn diffusion_second_order_coefficient() {
        let s = builtin("d2q9-diffusion").unwrap();
        let log = slow_log_series(&amplification_series(&s).unwrap()).unwrap();
        let c = to_gauss(&rat(-5, 18));
        assert_eq!(log.coefficient(&MultiIndex::new(vec![2, 0])), c);
        assert_eq!(log.coefficient(&MultiIndex::new(vec![0, 2])), c);
        assert!(log.coefficient(&MultiIndex::new(vec![1, 1])).is_zero());
    }

    #[test]
    fn oracle_matches_engine_on_builtins() {
        for name in ["d2q9-advection", "d2q9-oblique", "d1q3-advection", "d1q3-acoustics"] {
            let s = builtin(name).unwrap();
            let cmp = exact_check(&s, &expand(&s, 4).unwrap()).unwrap();
            assert!(cmp.matches(), "{name}: {:?}", cmp.first_mismatch());
        }
    }

    #[test]
    fn corrupted_engine_reports_first_mismatch() {
        let s = builtin("d2q9-advection").unwrap();
        let mut r = expand(&s, 4).unwrap();
        let mut g3 = r.gamma[2].get(0, 0).clone();
        g3.add_term(MultiIndex::new(vec![2, 1]), rat(1, 7));
        r.gamma[2].set(0, 0, g3);
        let cmp = exact_check(&s, &r).unwrap();
        let first = cmp.first_mismatch().unwrap();
        assert_eq!(first.beta, MultiIndex::new(vec![2, 1]));
        assert_eq!(cmp.mismatches.len(), 1);
    }

    #[test]
    fn degenerate_rate_is_reported() {
        let mut s = builtin("d1q3-advection").unwrap();
        s.rates[1] = int(0);
        let a = amplification_series(&s);
        // Validation rejects s = 0 before the oracle sees it.
        assert!(a.is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = builtin("d2q9-oblique").unwrap();
        let log = slow_log_series(&amplification_series(&s).unwrap()).unwrap();
        let text = serde_json::to_string(&log.to_json()).unwrap();
        let back = DispersionSeries::try_from(&serde_json::from_str::<DispersionJson>(&text).unwrap()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn conjugation_symmetry() {
        let s = builtin("d2q9-oblique").unwrap();
        let log = slow_log_series(&amplification_series(&s).unwrap()).unwrap();
        for (beta, c) in log.entry(0, 0).terms() {
            if beta.degree() % 2 == 0 {
                assert!(c.im.is_zero());
            } else {
                assert!(c.re.is_zero());
            }
        }
    }

    #[test]
    fn numeric_matches_exact_scalar() {
        let s = builtin("d2q9-oblique").unwrap();
        let exact = slow_log_series(&amplification_series(&s).unwrap()).unwrap();
        let num = slow_subspace_series_numeric(&s, &KSampling::standard(2), Execution::default()).unwrap();
        assert!(num.max_deviation(&exact.log) < 1e-10, "{}", num.max_deviation(&exact.log));
        assert!(num.condition < 10.0);
    }

    #[test]
    fn numeric_small_radius_second_order() {
        let s = builtin("d2q9-advection").unwrap();
        let exact = slow_log_series(&amplification_series(&s).unwrap()).unwrap();
        let num = slow_subspace_series_numeric(&s, &KSampling::with_radius(2, 1e-2), Execution::default()).unwrap();
        for beta in MultiIndex::all_of_degree(2, 2) {
            let c = exact.coefficient(&beta);
            let z = Complex64::new(to_f64(&c.re), to_f64(&c.im));
            assert!((num.coefficient(0, 0, &beta) - z).norm() < 1e-8);
        }
    }

    #[test]
    fn numeric_two_conserved_moments() {
        let s = builtin("d1q3-acoustics").unwrap();
        let exact = slow_log_series(&amplification_series(&s).unwrap()).unwrap();
        let num = slow_subspace_series_numeric(&s, &KSampling::standard(1), Execution::Sequential).unwrap();
        assert!(num.max_deviation(&exact.log) < 1e-10, "{}", num.max_deviation(&exact.log));
    }

    #[test]
    fn numeric_zero_velocity() {
        let mut s = builtin_d2q9(int(1), rat(1, 10), int(0), int(1), d2q9_reference_rates()).unwrap();
        for v in &mut s.velocities {
            v.iter_mut().for_each(|c| *c = int(0));
        }
        let num = slow_subspace_series_numeric(&s, &KSampling::standard(2), Execution::default()).unwrap();
        assert!(num.max_abs() < 1e-12);
    }

    #[test]
    fn direction_sets_are_rich_enough() {
        for d in 1..=4 {
            let dirs = default_directions(d);
            let needed = MultiIndex::all_of_degree(d, 4).len();
            assert!(d == 1 || dirs.len() >= needed, "d={d}");
        }
    }

    #[test]
    fn sampling_radius_scales_with_lattice_speed() {
        let s = builtin("d2q9-advection").unwrap();
        assert_eq!(KSampling::for_scheme(&s).radius, KSampling::STANDARD_RADIUS);
        let mut fast = builtin("d1q3-advection").unwrap();
        fast.lambda = int(2);
        fast.velocities = vec![vec![int(0)], vec![int(3)], vec![int(-1)]];
        assert!(KSampling::for_scheme(&fast).radius <= KSampling::STANDARD_RADIUS / 6.0);
    }

}
