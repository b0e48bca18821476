//! Declarative description of a multi-relaxation-time lattice Boltzmann
//! scheme, validation, and the built-in schemes.
//!
//! All data is exact. Velocities are stored in units of the lattice speed
//! `λ = Δx/Δt`, so the physical velocity of population `j` is `λ·c_j`. The
//! equilibrium is kept as a frozen linearization `Φ(W) ≈ E·W + offset` at the
//! base state `W₀`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::number::{format_rational, int, rat, Rational};

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeScheme {
    pub name: String,
    pub dim: usize,
    pub lambda: Rational,
    /// One row of `dim` rationals per population, in units of `lambda`.
    pub velocities: Vec<Vec<Rational>>,
    pub moment_matrix: Matrix<Rational>,
    pub conserved: usize,
    /// `dΦ(W₀)`, shape `(q − n_c) × n_c`.
    pub equilibrium_jacobian: Matrix<Rational>,
    /// `Φ(W₀) − E·W₀`.
    pub equilibrium_offset: Vec<Rational>,
    pub rates: Vec<Rational>,
    pub base_state: Vec<Rational>,
    /// Reporting only; `E` is already evaluated.
    pub parameters: BTreeMap<String, Rational>,
    pub moment_names: Vec<String>,
}

/// Conserved / nonconserved partition of the moment rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MomentSplit {
    pub w_indices: Range<usize>,
    pub y_indices: Range<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    fn error(&mut self, message: impl Into<String>) {
        self.issues.push(Issue { severity: Severity::Error, message: message.into() });
    }

    fn warn(&mut self, message: impl Into<String>) {
        self.issues.push(Issue { severity: Severity::Warning, message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        for issue in &self.issues {
            let tag = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{tag}: {}", issue.message)?;
        }
        Ok(())
    }
}

impl LatticeScheme {
    pub fn q(&self) -> usize {
        self.velocities.len()
    }

    pub fn split(&self) -> MomentSplit {
        MomentSplit { w_indices: 0..self.conserved, y_indices: self.conserved..self.q() }
    }

    /// Physical velocity `λ·c_j`.
    pub fn velocity(&self, j: usize) -> Vec<Rational> {
        self.velocities[j].iter().map(|c| c * &self.lambda).collect()
    }

    pub fn moment_name(&self, k: usize) -> String {
        self.moment_names.get(k).cloned().unwrap_or_else(|| format!("m{k}"))
    }

    /// Checks every structural invariant. Never fails; problems are listed.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let q = self.q();
        let d = self.dim;
        if d == 0 {
            report.error("dimension must be positive");
        }
        if q == 0 {
            report.error("at least one velocity is required");
            return report;
        }
        if !self.lambda.is_positive() {
            report.error(format!("lambda must be positive, got {}", format_rational(&self.lambda)));
        }
        for (j, v) in self.velocities.iter().enumerate() {
            if v.len() != d {
                report.error(format!("velocity {j} has {} components, expected {d}", v.len()));
            }
        }
        let m = &self.moment_matrix;
        let square = m.rows() == q && m.cols() == q;
        if !square {
            report.error(format!("moment matrix is {}x{}, expected {q}x{q}", m.rows(), m.cols()));
        }
        let n_c = self.conserved;
        if n_c == 0 || n_c > q {
            report.error(format!("conserved = {n_c} out of range (need 1 <= n_c <= q = {q})"));
            return report;
        }
        let n_y = q - n_c;
        let e = &self.equilibrium_jacobian;
        if e.rows() != n_y || e.cols() != n_c {
            report.error(format!(
                "equilibrium_jacobian is {}x{}, expected {n_y}x{n_c}",
                e.rows(),
                e.cols()
            ));
        }
        if self.equilibrium_offset.len() != n_y {
            report.error(format!(
                "equilibrium_offset has {} entries, expected {n_y}",
                self.equilibrium_offset.len()
            ));
        }
        if self.base_state.len() != n_c {
            report.error(format!("base_state has {} entries, expected {n_c}", self.base_state.len()));
        }
        if self.rates.len() != n_y {
            report.error(format!("rates has {} entries, expected {n_y}", self.rates.len()));
        }
        for (k, s) in self.rates.iter().enumerate() {
            let name = self.moment_name(n_c + k);
            if !s.is_positive() {
                report.error(format!("rate for {name} must be positive, got {}", format_rational(s)));
            } else if *s >= int(2) {
                report.warn(format!(
                    "rate for {name} = {} outside (0,2): scheme may be unstable",
                    format_rational(s)
                ));
            }
        }
        if square && m.determinant().is_zero() {
            report.error("moment matrix M singular");
        }
        report
    }

    /// Returns the scheme if it has no validation errors.
    pub fn checked(self) -> Result<Self> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidScheme(report.errors().map(|i| i.message.clone()).collect()))
        }
    }

    pub fn inverse_moment_matrix(&self) -> Result<Matrix<Rational>> {
        self.moment_matrix.inverse().ok_or(Error::SingularMatrix)
    }

    /// `m = M f`.
    pub fn moments_of(&self, f: &[Rational]) -> Result<Vec<Rational>> {
        self.expect_len("particle vector", f.len())?;
        Ok(self.moment_matrix.mul_vec(f))
    }

    /// `f = M⁻¹ m`.
    pub fn particles_of(&self, m: &[Rational]) -> Result<Vec<Rational>> {
        self.expect_len("moment vector", m.len())?;
        Ok(self.inverse_moment_matrix()?.mul_vec(m))
    }

    /// Linearized `Φ(W) = E·W + offset`.
    pub fn equilibrium(&self, w: &[Rational]) -> Result<Vec<Rational>> {
        if w.len() != self.conserved {
            return Err(Error::Dimension(format!(
                "conserved vector has {} entries, expected {}",
                w.len(),
                self.conserved
            )));
        }
        Ok(self
            .equilibrium_jacobian
            .mul_vec(w)
            .into_iter()
            .zip(&self.equilibrium_offset)
            .map(|(a, b)| a + b)
            .collect())
    }

    /// Moment-space relaxation `W* = W`, `Y* = Y + S (Φ(W) − Y)`.
    pub fn relax(&self, m: &[Rational]) -> Result<Vec<Rational>> {
        self.expect_len("moment vector", m.len())?;
        let n_c = self.conserved;
        let eq = self.equilibrium(&m[..n_c])?;
        let mut out = m.to_vec();
        for (k, (y, s)) in m[n_c..].iter().zip(&self.rates).enumerate() {
            out[n_c + k] = y + s * (&eq[k] - y);
        }
        Ok(out)
    }

    /// Linear part of the relaxation in moment space,
    /// `K = [[I, 0], [S·E, I − S]]`.
    pub fn relaxation_matrix(&self) -> Matrix<Rational> {
        let (q, n_c) = (self.q(), self.conserved);
        Matrix::from_fn(q, q, |i, j| match (i < n_c, j < n_c) {
            (true, true) => if i == j { Rational::one() } else { Rational::zero() },
            (true, false) => Rational::zero(),
            (false, true) => &self.rates[i - n_c] * &self.equilibrium_jacobian[(i - n_c, j)],
            (false, false) => {
                if i == j {
                    Rational::one() - &self.rates[i - n_c]
                } else {
                    Rational::zero()
                }
            }
        })
    }

    pub fn rates_all_equal(&self) -> bool {
        self.rates.windows(2).all(|w| w[0] == w[1])
    }

    fn expect_len(&self, what: &str, len: usize) -> Result<()> {
        if len == self.q() {
            Ok(())
        } else {
            Err(Error::Dimension(format!("{what} has {len} entries, expected {}", self.q())))
        }
    }
}

fn int_rows(rows: &[&[i64]]) -> Vec<Vec<Rational>> {
    rows.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect()
}

pub const D2Q9_VELOCITIES: [[i64; 2]; 9] =
    [[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1], [1, 1], [-1, 1], [-1, -1], [1, -1]];

/// Moment rows for `(ρ, Jx, Jy, ε, XX, XY, qx, qy, h)` at `λ = 1`; row `k`
/// scales with `λ^deg(k)`.
const D2Q9_MOMENTS: [[i64; 9]; 9] = [
    [1, 1, 1, 1, 1, 1, 1, 1, 1],
    [0, 1, 0, -1, 0, 1, -1, -1, 1],
    [0, 0, 1, 0, -1, 1, 1, -1, -1],
    [-4, -1, -1, -1, -1, 2, 2, 2, 2],
    [0, 1, -1, 1, -1, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 1, -1, 1, -1],
    [0, -2, 0, 2, 0, 1, -1, -1, 1],
    [0, 0, -2, 0, 2, 1, 1, -1, -1],
    [4, -2, -2, -2, -2, 1, 1, 1, 1],
];
const D2Q9_MOMENT_DEGREES: [u32; 9] = [0, 1, 1, 2, 2, 2, 3, 3, 4];

pub const D2Q9_MOMENT_NAMES: [&str; 9] = ["ρ", "jx", "jy", "ε", "xx", "xy", "qx", "qy", "h"];

/// D2Q9 advection-diffusion for one conserved density with
/// `Φ(ρ) = (ρu, ρv, αλ²ρ, ρ(u²−v²), ρuv, 0, 0, 0)`.
///
/// `rates` are `(s_jx, s_jy, s_ε, s_xx, s_xy, s_qx, s_qy, s_h)`.
pub fn builtin_d2q9(
    lambda: Rational,
    u: Rational,
    v: Rational,
    alpha: Rational,
    rates: [Rational; 8],
) -> Result<LatticeScheme> {
    let moment_matrix = Matrix::from_fn(9, 9, |i, j| {
        int(D2Q9_MOMENTS[i][j]) * num_traits::pow(lambda.clone(), D2Q9_MOMENT_DEGREES[i] as usize)
    });
    let jac = vec![
        u.clone(),
        v.clone(),
        &alpha * &lambda * &lambda,
        &u * &u - &v * &v,
        &u * &v,
        Rational::zero(),
        Rational::zero(),
        Rational::zero(),
    ];
    let parameters = BTreeMap::from([
        ("u".to_string(), u),
        ("v".to_string(), v),
        ("alpha".to_string(), alpha),
    ]);
    LatticeScheme {
        name: "d2q9".to_string(),
        dim: 2,
        lambda,
        velocities: D2Q9_VELOCITIES.iter().map(|c| c.iter().map(|&x| int(x)).collect()).collect(),
        moment_matrix,
        conserved: 1,
        equilibrium_jacobian: Matrix::from_rows(jac.into_iter().map(|x| vec![x]).collect()),
        equilibrium_offset: vec![Rational::zero(); 8],
        rates: rates.to_vec(),
        base_state: vec![Rational::one()],
        parameters,
        moment_names: D2Q9_MOMENT_NAMES.iter().map(|s| s.to_string()).collect(),
    }
    .checked()
}

/// Relaxation rates used by the built-in D2Q9 bindings:
/// `s_j = 6/5, s_ε = 7/5, s_x = 8/5, s_q = 9/5, s_h = 1`.
pub fn d2q9_reference_rates() -> [Rational; 8] {
    [rat(6, 5), rat(6, 5), rat(7, 5), rat(8, 5), rat(8, 5), rat(9, 5), rat(9, 5), int(1)]
}

/// D1Q3 scalar advection-diffusion: moments `(ρ, J, e)`,
/// `Φ(ρ) = (uρ, βλ²ρ)`.
pub fn builtin_d1q3(lambda: Rational, u: Rational, beta: Rational, rates: [Rational; 2]) -> Result<LatticeScheme> {
    let l2 = &lambda * &lambda;
    let moment_matrix = Matrix::from_rows(vec![
        vec![int(1), int(1), int(1)],
        vec![int(0), lambda.clone(), -lambda.clone()],
        vec![int(0), l2.clone(), l2.clone()],
    ]);
    LatticeScheme {
        name: "d1q3".to_string(),
        dim: 1,
        velocities: int_rows(&[&[0], &[1], &[-1]]),
        moment_matrix,
        conserved: 1,
        equilibrium_jacobian: Matrix::from_rows(vec![vec![u.clone()], vec![&beta * &l2]]),
        equilibrium_offset: vec![Rational::zero(); 2],
        rates: rates.to_vec(),
        base_state: vec![Rational::one()],
        parameters: BTreeMap::from([("u".to_string(), u), ("beta".to_string(), beta)]),
        moment_names: vec!["ρ".into(), "j".into(), "e".into()],
        lambda,
    }
    .checked()
}

/// D1Q3 isothermal acoustics with conserved `(ρ, J)` and
/// `e^eq = J²/ρ + c²ρ`, linearized at `(ρ, J) = (1, u₀)`.
pub fn builtin_d1q3_acoustics(lambda: Rational, sound_speed_sq: Rational, u0: Rational, rate: Rational) -> Result<LatticeScheme> {
    let l2 = &lambda * &lambda;
    let moment_matrix = Matrix::from_rows(vec![
        vec![int(1), int(1), int(1)],
        vec![int(0), lambda.clone(), -lambda.clone()],
        vec![int(0), l2.clone(), l2],
    ]);
    let jac = Matrix::from_rows(vec![vec![&sound_speed_sq - &u0 * &u0, int(2) * &u0]]);
    let base = vec![int(1), u0.clone()];
    let phi0 = &u0 * &u0 + &sound_speed_sq;
    let offset = vec![phi0 - jac.mul_vec(&base)[0].clone()];
    LatticeScheme {
        name: "d1q3-acoustics".to_string(),
        dim: 1,
        velocities: int_rows(&[&[0], &[1], &[-1]]),
        moment_matrix,
        conserved: 2,
        equilibrium_jacobian: jac,
        equilibrium_offset: offset,
        rates: vec![rate],
        base_state: base,
        parameters: BTreeMap::from([("c2".to_string(), sound_speed_sq), ("u0".to_string(), u0)]),
        moment_names: vec!["ρ".into(), "j".into(), "e".into()],
        lambda,
    }
    .checked()
}

/// Names and one-line descriptions of the built-in schemes.
pub const BUILTIN_SCHEMES: [(&str, &str); 5] = [
    ("d2q9-advection", "D2Q9 advection-diffusion, λ=1, u=1/10, v=0, α=1, s=(6/5,6/5,7/5,8/5,8/5,9/5,9/5,1)"),
    ("d2q9-diffusion", "D2Q9 advection-diffusion at rest, λ=1, u=v=0, α=1, same rates"),
    ("d2q9-oblique", "D2Q9 advection-diffusion, λ=1, u=1/10, v=1/20, α=-1/2, same rates"),
    ("d1q3-advection", "D1Q3 scalar advection-diffusion, λ=1, u=1/5, β=1/2, s=(7/5, 6/5)"),
    ("d1q3-acoustics", "D1Q3 linear acoustics (ρ, j conserved), λ=1, c²=1/3, u₀=1/10, s=3/2"),
];

pub fn builtin(name: &str) -> Option<LatticeScheme> {
    let mut scheme = match name {
        "d2q9-advection" => builtin_d2q9(int(1), rat(1, 10), int(0), int(1), d2q9_reference_rates()),
        "d2q9-diffusion" => builtin_d2q9(int(1), int(0), int(0), int(1), d2q9_reference_rates()),
        "d2q9-oblique" => builtin_d2q9(int(1), rat(1, 10), rat(1, 20), rat(-1, 2), d2q9_reference_rates()),
        "d1q3-advection" => builtin_d1q3(int(1), rat(1, 5), rat(1, 2), [rat(7, 5), rat(6, 5)]),
        "d1q3-acoustics" => builtin_d1q3_acoustics(int(1), rat(1, 3), rat(1, 10), rat(3, 2)),
        _ => return None,
    }
    .expect("built-in schemes are valid");
    scheme.name = name.to_string();
    Some(scheme)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_scheme() -> LatticeScheme {
        builtin("d2q9-advection").unwrap()
    }

    #[test]
    fn d2q9_energy_row_matches_table() {
        let s = reference_scheme();
        let row: Vec<_> = s.moment_matrix.row(3).to_vec();
        let expected: Vec<_> = [-4, -1, -1, -1, -1, 2, 2, 2, 2].iter().map(|&x| int(x)).collect();
        assert_eq!(row, expected);
    }

    #[test]
    fn d2q9_rows_scale_with_lambda() {
        let l = rat(3, 2);
        let s = builtin_d2q9(l.clone(), int(0), int(0), int(0), d2q9_reference_rates()).unwrap();
        assert_eq!(s.moment_matrix[(8, 0)], int(4) * &l * &l * &l * &l);
        assert_eq!(s.moment_matrix[(6, 1)], int(-2) * &l * &l * &l);
        assert_eq!(s.moment_matrix[(3, 0)], int(-4) * &l * &l);
    }

    #[test]
    fn d2q9_rest_particle_at_alpha_zero() {
        let s = builtin_d2q9(int(1), int(0), int(0), int(0), d2q9_reference_rates()).unwrap();
        let mut m = vec![int(1)];
        m.extend(s.equilibrium(&[int(1)]).unwrap());
        let f = s.particles_of(&m).unwrap();
        assert_eq!(f[0], rat(1, 9));
        assert!(s.equilibrium_jacobian.is_zero());
    }

    #[test]
    fn d2q9_equilibrium_particles_match_closed_form() {
        let (l, u, v, a) = (rat(2, 1), rat(1, 10), rat(-1, 20), rat(1, 3));
        let s = builtin_d2q9(l.clone(), u.clone(), v.clone(), a.clone(), d2q9_reference_rates()).unwrap();
        let mut m = vec![int(1)];
        m.extend(s.equilibrium(&[int(1)]).unwrap());
        let f = s.particles_of(&m).unwrap();
        let n9 = rat(1, 9);
        let uv2 = (&u * &u - &v * &v) / (int(4) * &l * &l);
        let uv = &u * &v / (int(4) * &l * &l);
        let sl = int(6) * &l;
        let expected = [
            &n9 - &a / int(9),
            &n9 - &a / int(36) + &u / &sl + &uv2,
            &n9 - &a / int(36) + &v / &sl - &uv2,
            &n9 - &a / int(36) - &u / &sl + &uv2,
            &n9 - &a / int(36) - &v / &sl - &uv2,
            &n9 + &a / int(18) + (&u + &v) / &sl + &uv,
            // Diagonal particles alternate the sign of the uv term so that
            // the xy moment λ²(f5 − f6 + f7 − f8) equals uv.
            &n9 + &a / int(18) - (&u - &v) / &sl - &uv,
            &n9 + &a / int(18) - (&u + &v) / &sl + &uv,
            &n9 + &a / int(18) + (&u - &v) / &sl - &uv,
        ];
        assert_eq!(f, expected.to_vec());
    }

    #[test]
    fn equilibrium_moments_of_equilibrium_particles() {
        let s = reference_scheme();
        let mut m = vec![int(1)];
        m.extend(s.equilibrium(&[int(1)]).unwrap());
        let f = s.particles_of(&m).unwrap();
        let back = s.moments_of(&f).unwrap();
        let expected = [int(1), rat(1, 10), int(0), int(1), rat(1, 100), int(0), int(0), int(0), int(0)];
        assert_eq!(back, expected.to_vec());
    }

    #[test]
    fn zero_particles_have_zero_moments() {
        let s = reference_scheme();
        assert!(s.moments_of(&vec![int(0); 9]).unwrap().iter().all(Zero::is_zero));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let s = reference_scheme();
        assert!(matches!(s.moments_of(&[int(1)]), Err(Error::Dimension(_))));
        assert!(matches!(s.particles_of(&vec![int(1); 10]), Err(Error::Dimension(_))));
    }

    #[test]
    fn builtin_is_valid() {
        for (name, _) in BUILTIN_SCHEMES {
            let report = builtin(name).unwrap().validate();
            assert!(report.issues.is_empty(), "{name}: {report}");
        }
    }

    #[test]
    fn duplicated_rows_are_singular() {
        let mut s = reference_scheme();
        s.moment_matrix = Matrix::from_fn(9, 9, |i, j| {
            let i = if i == 2 { 1 } else { i };
            s.moment_matrix[(i, j)].clone()
        });
        let report = s.validate();
        assert!(!report.is_valid());
        assert!(report.errors().any(|i| i.message.contains("M singular")));
    }

    #[test]
    fn rate_above_two_is_a_warning() {
        let mut s = reference_scheme();
        s.rates[2] = rat(5, 2);
        let report = s.validate();
        assert!(report.is_valid());
        assert!(report.warnings().any(|i| i.message.contains("outside (0,2)")));
    }

    #[test]
    fn non_positive_rate_is_rejected() {
        let mut rates = d2q9_reference_rates();
        rates[4] = int(0);
        assert!(matches!(
            builtin_d2q9(int(1), int(0), int(0), int(1), rates.clone()),
            Err(Error::InvalidScheme(_))
        ));
        rates[4] = rat(-1, 2);
        assert!(builtin_d2q9(int(1), int(0), int(0), int(1), rates).is_err());
    }

    #[test]
    fn equal_rates_reduce_to_single_relaxation_time() {
        let s = builtin_d2q9(int(1), rat(1, 10), int(0), int(1), std::array::from_fn(|_| rat(4, 3))).unwrap();
        assert!(s.rates_all_equal());
        let tau_over_tau0 = Rational::one() / &s.rates[0];
        assert_eq!(tau_over_tau0, rat(3, 4));
    }

    #[test]
    fn relaxation_fixes_equilibrium() {
        let s = builtin("d1q3-acoustics").unwrap();
        let w = vec![rat(3, 2), rat(-1, 7)];
        let mut m = w.clone();
        m.extend(s.equilibrium(&w).unwrap());
        assert_eq!(s.relax(&m).unwrap(), m);
    }

    #[test]
    fn acoustics_offset_reproduces_base_equilibrium() {
        let s = builtin("d1q3-acoustics").unwrap();
        let phi0 = s.equilibrium(&s.base_state).unwrap();
        assert_eq!(phi0, vec![rat(1, 100) + rat(1, 3)]);
    }

    #[test]
    fn relaxation_matrix_blocks() {
        let s = reference_scheme();
        let k = s.relaxation_matrix();
        assert_eq!(k[(0, 0)], int(1));
        assert!((1..9).all(|j| k[(0, j)].is_zero()));
        assert_eq!(k[(1, 0)], rat(6, 5) * rat(1, 10));
        assert_eq!(k[(8, 8)], int(0));
        assert_eq!(k[(3, 3)], rat(-2, 5));
    }
}
