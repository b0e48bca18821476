use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::number::Coeff;

/// Exponent vector of a monomial `∂₁^β₁ ⋯ ∂_d^β_d`.
///
/// Ordered graded-lexicographically: lower total degree first, then larger
/// exponent on earlier axes first (`∂x² < ∂x∂y < ∂y²`).
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u8>);

impl MultiIndex {
    pub fn new(exponents: Vec<u8>) -> Self {
        Self(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        Self(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| u32::from(e)).sum()
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All multi-indices of total degree `degree` in `dim` variables, in
    /// graded-lex order.
    pub fn all_of_degree(dim: usize, degree: u32) -> Vec<Self> {
        fn rec(dim: usize, left: u32, prefix: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == dim {
                prefix.push(left as u8);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for e in (0..=left).rev() {
                prefix.push(e as u8);
                rec(dim, left - e, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if dim == 0 {
            return out;
        }
        rec(dim, degree, &mut Vec::with_capacity(dim), &mut out);
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

pub const DEFAULT_DEGREE_CAP: u32 = 4;

/// Commutative polynomial in `∂₁ … ∂_d` with a hard total-degree cap.
///
/// Products that would exceed the cap drop the offending terms and set the
/// truncation flag, which is sticky through further arithmetic.
#[derive(Clone)]
pub struct Poly<C> {
    dim: usize,
    cap: u32,
    terms: BTreeMap<MultiIndex, C>,
    truncated: bool,
}

impl<C: Coeff> Poly<C> {
    pub fn zero(dim: usize, cap: u32) -> Self {
        Self { dim, cap, terms: BTreeMap::new(), truncated: false }
    }

    pub fn constant(dim: usize, cap: u32, c: C) -> Self {
        Self::monomial(dim, cap, MultiIndex::zero(dim), c)
    }

    pub fn monomial(dim: usize, cap: u32, beta: MultiIndex, c: C) -> Self {
        assert_eq!(beta.dim(), dim, "multi-index dimension mismatch");
        let mut p = Self::zero(dim, cap);
        p.add_term(beta, c);
        p
    }

    /// `∂_axis`.
    pub fn partial(dim: usize, cap: u32, axis: usize) -> Self {
        Self::monomial(dim, cap, MultiIndex::unit(dim, axis), C::one())
    }

    /// `∂₁² + ⋯ + ∂_d²`.
    pub fn laplacian(dim: usize, cap: u32) -> Self {
        let mut p = Self::zero(dim, cap);
        for axis in 0..dim {
            let mut e = vec![0; dim];
            e[axis] = 2;
            p.add_term(MultiIndex::new(e), C::one());
        }
        p
    }

    pub fn from_terms(dim: usize, cap: u32, terms: impl IntoIterator<Item = (MultiIndex, C)>) -> Self {
        let mut p = Self::zero(dim, cap);
        for (beta, c) in terms {
            assert_eq!(beta.dim(), dim, "multi-index dimension mismatch");
            p.add_term(beta, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, beta: &MultiIndex) -> C {
        self.terms.get(beta).cloned().unwrap_or_else(C::zero)
    }

    /// Highest total degree of a stored term; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::degree).max()
    }

    pub fn is_homogeneous(&self, degree: u32) -> bool {
        self.terms.keys().all(|b| b.degree() == degree)
    }

    pub fn homogeneous_part(&self, degree: u32) -> Self {
        Self {
            dim: self.dim,
            cap: self.cap,
            terms: self
                .terms
                .iter()
                .filter(|(b, _)| b.degree() == degree)
                .map(|(b, c)| (b.clone(), c.clone()))
                .collect(),
            truncated: self.truncated,
        }
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        let before = self.terms.len();
        self.terms.retain(|b, _| b.degree() <= cap);
        self.truncated |= self.terms.len() != before;
        self.cap = cap;
        self
    }

    pub fn add_term(&mut self, beta: MultiIndex, c: C) {
        if c.is_zero() {
            return;
        }
        if beta.degree() > self.cap {
            self.truncated = true;
            return;
        }
        match self.terms.entry(beta) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero() {
            return Self { truncated: self.truncated, ..Self::zero(self.dim, self.cap) };
        }
        Self {
            dim: self.dim,
            cap: self.cap,
            terms: self.terms.iter().map(|(b, x)| (b.clone(), x.clone() * c.clone())).collect(),
            truncated: self.truncated,
        }
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&MultiIndex, &C) -> D) -> Poly<D> {
        let mut out = Poly::zero(self.dim, self.cap);
        out.truncated = self.truncated;
        for (b, c) in &self.terms {
            out.add_term(b.clone(), f(b, c));
        }
        out
    }

    /// Substitutes `∂_α ↦ point[α]`.
    pub fn evaluate(&self, point: &[C]) -> C {
        assert_eq!(point.len(), self.dim, "evaluation point dimension mismatch");
        self.terms.iter().fold(C::zero(), |acc, (beta, c)| {
            let mono = beta
                .exponents()
                .iter()
                .zip(point)
                .fold(C::one(), |m, (&e, x)| (0..e).fold(m, |m, _| m * x.clone()));
            acc + c.clone() * mono
        })
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(self.dim, self.cap, C::one()), |acc, _| &acc * self)
    }

    fn check_compatible(&self, other: &Self) {
        assert_eq!(self.dim, other.dim, "polynomial dimension mismatch");
    }
}

impl<C: Coeff> PartialEq for Poly<C> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.terms == other.terms
    }
}

impl<C: Coeff> fmt::Debug for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (b, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c:?}·∂{b:?}")?;
        }
        if self.truncated {
            write!(f, " (truncated)")?;
        }
        Ok(())
    }
}

impl<C: Coeff> Add for &Poly<C> {
    type Output = Poly<C>;

    fn add(self, rhs: &Poly<C>) -> Poly<C> {
        self.check_compatible(rhs);
        let mut out = self.clone();
        out.cap = self.cap.min(rhs.cap);
        out.truncated |= rhs.truncated;
        for (b, c) in &rhs.terms {
            out.add_term(b.clone(), c.clone());
        }
        if out.cap < self.cap {
            let cap = out.cap;
            out = out.with_cap(cap);
        }
        out
    }
}

impl<C: Coeff> Sub for &Poly<C> {
    type Output = Poly<C>;

    fn sub(self, rhs: &Poly<C>) -> Poly<C> {
        self + &(-rhs)
    }
}

impl<C: Coeff> Neg for &Poly<C> {
    type Output = Poly<C>;

    fn neg(self) -> Poly<C> {
        Poly {
            dim: self.dim,
            cap: self.cap,
            terms: self.terms.iter().map(|(b, c)| (b.clone(), -c.clone())).collect(),
            truncated: self.truncated,
        }
    }
}

impl<C: Coeff> Mul for &Poly<C> {
    type Output = Poly<C>;

    fn mul(self, rhs: &Poly<C>) -> Poly<C> {
        self.check_compatible(rhs);
        let mut out = Poly::zero(self.dim, self.cap.min(rhs.cap));
        out.truncated = self.truncated || rhs.truncated;
        for (ba, ca) in &self.terms {
            for (bb, cb) in &rhs.terms {
                out.add_term(ba.plus(bb), ca.clone() * cb.clone());
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($($tr:ident $method:ident),*) => {$(
        impl<C: Coeff> $tr for Poly<C> {
            type Output = Poly<C>;
            fn $method(self, rhs: Poly<C>) -> Poly<C> {
                (&self).$method(&rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul);

impl<C: Coeff> Neg for Poly<C> {
    type Output = Poly<C>;

    fn neg(self) -> Poly<C> {
        -&self
    }
}
