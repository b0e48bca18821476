//! Recursive fourth-order expansion of the conserved-moment dynamics.
//!
//! For a scheme with moments `m = (W, Y)`, relaxation `Y* = Y + S (Φ(W) − Y)`
//! and momentum-velocity operator `Λ = [[A, B], [C, D]]`, the conserved
//! moments follow
//!
//! ```text
//! ∂t W + Γ₁ W + Δt Γ₂ W + Δt² Γ₃ W + Δt³ Γ₄ W = O(Δt⁴)
//! Y = Φ(W) + S⁻¹ (Δt Ψ₁ + Δt² Ψ₂ + Δt³ Ψ₃) W + O(Δt⁴)
//! ```
//!
//! with `Σ = S⁻¹ − I/2` and
//!
//! ```text
//! Γ₁ = A + B E
//! Ψ₁ = E Γ₁ − (C + D E)
//! Γ₂ = B Σ Ψ₁
//! Ψ₂ = Σ Ψ₁ Γ₁ + E Γ₂ − D Σ Ψ₁
//! Γ₃ = B Σ Ψ₂ − ⅙ B Ψ₁ Γ₁ + 1/12 B₂ Ψ₁
//! Ψ₃ = Σ Ψ₁ Γ₂ + E Γ₃ − D Σ Ψ₂ + Σ Ψ₂ Γ₁ + ⅙ D Ψ₁ Γ₁ − 1/12 D₂ Ψ₁ − 1/12 Ψ₁ Γ₁ Γ₁
//! Γ₄ = B Σ Ψ₃ + ¼ B₂ Ψ₂ + ⅙ B D₂ Σ Ψ₁ − ⅙ A B Ψ₂ − ⅙ B E Γ₁ Γ₂
//!      − ⅙ B E Γ₂ Γ₁ − ⅙ B Σ Ψ₁ Γ₁ Γ₁
//! ```
//!
//! where `B₂`, `D₂` are blocks of `Λ²` and `E = dΦ(W₀)`.
//!
//! # Validity domain
//!
//! The equilibrium enters only through its frozen Jacobian `E`, so every
//! Fréchet derivative `dX.Γ` becomes the composition `X Γ` of constant
//! coefficient operator matrices. The result is exact for equilibria linear
//! in `W` and is the linearized equivalent equation otherwise. Time is in
//! lattice units (`Δt = 1`); powers of `Δt` are tracked by [`EquivalentPDE`].

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::diffop::{block_powers, build_lambda_with_cap, DiffPoly, MultiIndex, OpMatrix, DEFAULT_DEGREE_CAP};
use crate::error::{Error, Result};
use crate::number::{rat, serde_rational, Rational};
use crate::scheme::LatticeScheme;

pub const MAX_ORDER: usize = 4;

/// Diagonal of `Σ = S⁻¹ − I/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct HenonMatrix {
    diag: Vec<Rational>,
}

impl HenonMatrix {
    pub fn from_rates(rates: &[Rational]) -> Result<Self> {
        let half = rat(1, 2);
        let diag = rates
            .iter()
            .map(|s| {
                if s.is_zero() {
                    Err(Error::InvalidScheme(vec!["relaxation rate 0 has no Hénon parameter".into()]))
                } else {
                    Ok(Rational::one() / s - &half)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { diag })
    }

    pub fn diagonal(&self) -> &[Rational] {
        &self.diag
    }

    pub fn as_operator(&self, dim: usize, cap: u32) -> OpMatrix {
        let n = self.diag.len();
        OpMatrix::from_fn(n, n, dim, cap, |i, j| {
            if i == j {
                DiffPoly::constant(dim, cap, self.diag[i].clone())
            } else {
                DiffPoly::zero(dim, cap)
            }
        })
    }
}

/// `Γ₁ … Γ_order` (each `n_c × n_c`) and `Ψ₁ … Ψ_{order−1}` (each
/// `(q − n_c) × n_c`).
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionResult {
    pub order: usize,
    pub conserved: usize,
    pub dim: usize,
    pub gamma: Vec<OpMatrix>,
    pub psi: Vec<OpMatrix>,
}

impl ExpansionResult {
    /// `Γ_j`, one-based.
    pub fn gamma(&self, j: usize) -> &OpMatrix {
        &self.gamma[j - 1]
    }

    /// `Ψ_j`, one-based.
    pub fn psi(&self, j: usize) -> &OpMatrix {
        &self.psi[j - 1]
    }

    /// Every monomial of `Γ_j` and `Ψ_j` has spatial degree exactly `j`.
    pub fn is_graded(&self) -> bool {
        self.gamma.iter().enumerate().all(|(i, g)| g.is_homogeneous(i as u32 + 1))
            && self.psi.iter().enumerate().all(|(i, p)| p.is_homogeneous(i as u32 + 1))
    }
}

pub fn expand(scheme: &LatticeScheme, order: usize) -> Result<ExpansionResult> {
    expand_with_cap(scheme, order, DEFAULT_DEGREE_CAP)
}

pub fn expand_with_cap(scheme: &LatticeScheme, order: usize, cap: u32) -> Result<ExpansionResult> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Order(order));
    }
    let report = scheme.validate();
    if !report.is_valid() {
        return Err(Error::InvalidScheme(report.errors().map(|i| i.message.clone()).collect()));
    }
    let (d, n_c) = (scheme.dim, scheme.conserved);
    let lambda = build_lambda_with_cap(scheme, cap)?;
    let powers = block_powers(&lambda, n_c, 2)?;
    let (l1, l2) = (powers.level(1), powers.level(2));
    let (a, b, c, dd) = (&l1.a, &l1.b, &l1.c, &l1.d);
    let (b2, d2) = (&l2.b, &l2.d);
    let e = OpMatrix::from_scalar(&scheme.equilibrium_jacobian, d, cap);
    let sigma = HenonMatrix::from_rates(&scheme.rates)?.as_operator(d, cap);
    let frac = |n: i64, m: i64| rat(n, m);

    let mut gamma = Vec::with_capacity(order);
    let mut psi = Vec::with_capacity(order - 1);

    let g1 = a + &(b * &e);
    gamma.push(g1.clone());
    if order >= 2 {
        let p1 = &(&e * &g1) - &(c + &(dd * &e));
        let g2 = b * &(&sigma * &p1);
        psi.push(p1);
        gamma.push(g2);
    }
    if order >= 3 {
        let (p1, g2) = (&psi[0], &gamma[1]);
        let sp1 = &sigma * p1;
        let p1g1 = p1 * &g1;
        let p2 = &(&(&sigma * &p1g1) + &(&e * g2)) - &(dd * &sp1);
        let g3 = &(&(b * &(&sigma * &p2)) - &(b * &p1g1).scale(&frac(1, 6))) + &(b2 * p1).scale(&frac(1, 12));
        psi.push(p2);
        gamma.push(g3);
    }
    if order >= 4 {
        let (p1, p2, g2, g3) = (&psi[0], &psi[1], &gamma[1], &gamma[2]);
        let sp1 = &sigma * p1;
        let p1g1 = p1 * &g1;
        let p1g1g1 = &p1g1 * &g1;
        let p3_terms = [
            &sigma * &(p1 * g2),
            &e * g3,
            -(dd * &(&sigma * p2)),
            &sigma * &(p2 * &g1),
            (dd * &p1g1).scale(&frac(1, 6)),
            (d2 * p1).scale(&frac(-1, 12)),
            p1g1g1.scale(&frac(-1, 12)),
        ];
        let p3 = sum(p3_terms);
        let g4_terms = [
            b * &(&sigma * &p3),
            (b2 * p2).scale(&frac(1, 4)),
            (b * &(d2 * &sp1)).scale(&frac(1, 6)),
            (&(a * b) * p2).scale(&frac(-1, 6)),
            (b * &(&e * &(&g1 * g2))).scale(&frac(-1, 6)),
            (b * &(&e * &(g2 * &g1))).scale(&frac(-1, 6)),
            (b * &(&sigma * &p1g1g1)).scale(&frac(-1, 6)),
        ];
        let g4 = sum(g4_terms);
        psi.push(p3);
        gamma.push(g4);
    }

    if gamma.iter().chain(&psi).any(OpMatrix::is_truncated) {
        return Err(Error::Truncation { cap, order });
    }
    Ok(ExpansionResult { order, conserved: n_c, dim: d, gamma, psi })
}

/// Left-to-right sum.
fn sum<const N: usize>(terms: [OpMatrix; N]) -> OpMatrix {
    let mut iter = terms.into_iter();
    let first = iter.next().expect("non-empty sum");
    iter.fold(first, |acc, t| &acc + &t)
}

/// One term `coef · Δt^dt_order · ∂^beta W_source` of the right-hand side of
/// `∂t W_field = …`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdeTerm {
    pub dt_order: u32,
    pub beta: MultiIndex,
    pub source: usize,
    #[serde(with = "serde_rational")]
    pub coef: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdeEquation {
    pub field: usize,
    pub name: String,
    pub terms: Vec<PdeTerm>,
}

/// `∂t W = −Σ_j Δt^{j−1} Γ_j W + O(Δt^order)`, one equation per conserved
/// moment. Terms are sorted by Δt order, then graded-lex multi-index, then
/// source moment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalentPDE {
    pub order: usize,
    pub dim: usize,
    pub fields: Vec<String>,
    pub equations: Vec<PdeEquation>,
}

impl EquivalentPDE {
    /// Right-hand-side operator coupling `field` to `source` at `Δt^dt_order`.
    pub fn operator(&self, dt_order: u32, field: usize, source: usize) -> DiffPoly {
        DiffPoly::from_terms(
            self.dim,
            DEFAULT_DEGREE_CAP,
            self.equations[field]
                .terms
                .iter()
                .filter(|t| t.dt_order == dt_order && t.source == source)
                .map(|t| (t.beta.clone(), t.coef.clone())),
        )
    }

    /// Terms at `Δt^{j−1}` have spatial degree `j`.
    pub fn is_graded(&self) -> bool {
        self.equations.iter().flat_map(|e| &e.terms).all(|t| t.beta.degree() == t.dt_order + 1)
    }
}

pub fn assemble_pde(result: &ExpansionResult, scheme: &LatticeScheme) -> EquivalentPDE {
    let n_c = result.conserved;
    let fields: Vec<String> = (0..n_c).map(|k| scheme.moment_name(k)).collect();
    let equations = (0..n_c)
        .map(|field| {
            let mut terms: Vec<PdeTerm> = Vec::new();
            for (j, g) in result.gamma.iter().enumerate() {
                for source in 0..n_c {
                    for (beta, c) in g.get(field, source).terms() {
                        terms.push(PdeTerm {
                            dt_order: j as u32,
                            beta: beta.clone(),
                            source,
                            coef: -c.clone(),
                        });
                    }
                }
            }
            terms.sort_by(|x, y| {
                x.dt_order.cmp(&y.dt_order).then_with(|| x.beta.cmp(&y.beta)).then(x.source.cmp(&y.source))
            });
            PdeEquation { field, name: fields[field].clone(), terms }
        })
        .collect();
    EquivalentPDE { order: result.order, dim: result.dim, fields, equations }
}

/// Second-order coefficient check against the single-relaxation-time form
/// `Γ₂ = −σ ∂α∂β [Σ_j v_j^α v_j^β f_j^eq − u^α u^β ρ]`, `σ = 1/s − 1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BgkComparison {
    pub sigma: Rational,
    pub engine: DiffPoly,
    pub bgk: DiffPoly,
}

impl BgkComparison {
    pub fn matches(&self) -> bool {
        self.engine == self.bgk
    }
}

pub fn bgk_reduce_check(scheme: &LatticeScheme) -> Result<BgkComparison> {
    if !scheme.rates_all_equal() {
        return Err(Error::UnequalRates);
    }
    if scheme.conserved != 1 {
        return Err(Error::Unsupported("BGK comparison needs exactly one conserved moment".into()));
    }
    if !scheme.moment_matrix.row(0).iter().all(One::is_one) {
        return Err(Error::Unsupported("BGK comparison needs the conserved moment to be Σ f_j".into()));
    }
    let d = scheme.dim;
    let s = scheme.rates.first().cloned().ok_or(Error::UnequalRates)?;
    let sigma = Rational::one() / &s - rat(1, 2);

    let mut m_eq = vec![Rational::one()];
    m_eq.extend((0..scheme.q() - 1).map(|k| scheme.equilibrium_jacobian[(k, 0)].clone()));
    let f_eq = scheme.particles_of(&m_eq)?;
    let velocities: Vec<Vec<Rational>> = (0..scheme.q()).map(|j| scheme.velocity(j)).collect();
    let first = |a: usize| -> Rational {
        velocities.iter().zip(&f_eq).fold(Rational::zero(), |acc, (v, f)| acc + &v[a] * f)
    };
    let u: Vec<Rational> = (0..d).map(first).collect();

    let mut bgk = DiffPoly::zero(d, DEFAULT_DEGREE_CAP);
    for a in 0..d {
        for b in 0..d {
            let pi = velocities.iter().zip(&f_eq).fold(Rational::zero(), |acc, (v, f)| acc + &v[a] * &v[b] * f);
            let mut beta = vec![0u8; d];
            beta[a] += 1;
            beta[b] += 1;
            bgk.add_term(MultiIndex::new(beta), -&sigma * (pi - &u[a] * &u[b]));
        }
    }
    let engine = expand(scheme, 2)?.gamma(2).get(0, 0).clone();
    Ok(BgkComparison { sigma, engine, bgk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::number::int;
    use crate::scheme::{builtin, builtin_d2q9, d2q9_reference_rates};

    fn d2q9(u: Rational, v: Rational, alpha: Rational) -> LatticeScheme {
        builtin_d2q9(int(1), u, v, alpha, d2q9_reference_rates()).unwrap()
    }

    #[test]
    fn henon_parameters() {
        let h = HenonMatrix::from_rates(&[int(1), int(2), rat(6, 5)]).unwrap();
        assert_eq!(h.diagonal(), &[rat(1, 2), int(0), rat(1, 3)]);
        assert!(HenonMatrix::from_rates(&[int(0)]).is_err());
    }

    #[test]
    fn first_order_is_advection() {
        let (u, v) = (rat(1, 10), rat(-3, 20));
        let r = expand(&d2q9(u.clone(), v.clone(), int(1)), 1).unwrap();
        let expected = &DiffPoly::partial(2, 4, 0).scale(&u) + &DiffPoly::partial(2, 4, 1).scale(&v);
        assert_eq!(r.gamma(1).get(0, 0), &expected);
        assert!(r.psi.is_empty());
    }

    #[test]
    fn results_are_graded() {
        let r = expand(&d2q9(rat(1, 10), rat(1, 20), rat(-1, 2)), 4).unwrap();
        assert!(r.is_graded());
        assert_eq!(r.gamma.len(), 4);
        assert_eq!(r.psi.len(), 3);
        assert_eq!(r.psi(3).rows(), 8);
    }

    #[test]
    fn order_out_of_range() {
        let s = d2q9(int(0), int(0), int(1));
        assert!(matches!(expand(&s, 0), Err(Error::Order(0))));
        assert!(matches!(expand(&s, 5), Err(Error::Order(5))));
    }

    #[test]
    fn low_cap_is_reported() {
        let s = d2q9(rat(1, 10), int(0), int(1));
        assert!(matches!(expand_with_cap(&s, 4, 3), Err(Error::Truncation { cap: 3, order: 4 })));
        assert!(expand_with_cap(&s, 3, 3).is_ok());
    }

    #[test]
    fn zero_velocity_scheme_has_trivial_expansion() {
        let mut s = d2q9(rat(1, 10), int(0), int(1));
        for v in &mut s.velocities {
            v.iter_mut().for_each(|c| *c = int(0));
        }
        // M stays invertible; only the streaming is switched off.
        let r = expand(&s, 4).unwrap();
        assert!(r.gamma.iter().chain(&r.psi).all(OpMatrix::is_zero));
    }

    #[test]
    fn pde_at_rest_is_pure_diffusion_at_second_order() {
        let s = builtin("d2q9-diffusion").unwrap();
        let pde = assemble_pde(&expand(&s, 2).unwrap(), &s);
        assert!(pde.is_graded());
        // ∂t ρ = Δt σ_j (2/3 + α/6) λ² Δρ with σ_j = 1/3, α = 1.
        let expected = DiffPoly::laplacian(2, 4).scale(&(rat(1, 3) * rat(5, 6)));
        assert_eq!(pde.operator(1, 0, 0), expected);
        assert!(pde.operator(0, 0, 0).is_zero());
    }

    #[test]
    fn first_order_only_gives_advection_equation() {
        let s = builtin("d2q9-advection").unwrap();
        let pde = assemble_pde(&expand(&s, 1).unwrap(), &s);
        assert_eq!(pde.equations[0].terms.len(), 1);
        let t = &pde.equations[0].terms[0];
        assert_eq!((t.dt_order, t.coef.clone()), (0, rat(-1, 10)));
    }

    #[test]
    fn pde_terms_sorted() {
        let s = builtin("d2q9-oblique").unwrap();
        let pde = assemble_pde(&expand(&s, 4).unwrap(), &s);
        let terms = &pde.equations[0].terms;
        assert!(terms.windows(2).all(|w| (w[0].dt_order, &w[0].beta) < (w[1].dt_order, &w[1].beta)));
    }

    #[test]
    fn bgk_requires_equal_rates() {
        let s = builtin("d2q9-advection").unwrap();
        assert!(matches!(bgk_reduce_check(&s), Err(Error::UnequalRates)));
    }

    #[test]
    fn bgk_at_s_two_vanishes() {
        let s = builtin_d2q9(int(1), rat(1, 10), int(0), int(1), std::array::from_fn(|_| int(2))).unwrap();
        let cmp = bgk_reduce_check(&s).unwrap();
        assert!(cmp.sigma.is_zero());
        assert!(cmp.engine.is_zero());
        assert!(cmp.matches());
    }
}
