use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::matrix::Matrix;
use crate::number::Coeff;

use super::poly::Poly;

/// Matrix whose entries are differential-operator polynomials.
#[derive(Clone)]
pub struct PolyMatrix<C> {
    rows: usize,
    cols: usize,
    dim: usize,
    cap: u32,
    entries: Vec<Poly<C>>,
}

impl<C: Coeff> PartialEq for PolyMatrix<C> {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.dim == other.dim && self.entries == other.entries
    }
}

impl<C: Coeff> PolyMatrix<C> {
    pub fn zeros(rows: usize, cols: usize, dim: usize, cap: u32) -> Self {
        Self { rows, cols, dim, cap, entries: vec![Poly::zero(dim, cap); rows * cols] }
    }

    pub fn identity(n: usize, dim: usize, cap: u32) -> Self {
        let mut m = Self::zeros(n, n, dim, cap);
        for i in 0..n {
            m.set(i, i, Poly::constant(dim, cap, C::one()));
        }
        m
    }

    /// Lifts a scalar matrix to degree-0 operators.
    pub fn from_scalar(m: &Matrix<C>, dim: usize, cap: u32) -> Self {
        Self::from_fn(m.rows(), m.cols(), dim, cap, |i, j| Poly::constant(dim, cap, m[(i, j)].clone()))
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        dim: usize,
        cap: u32,
        mut f: impl FnMut(usize, usize) -> Poly<C>,
    ) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let p = f(i, j);
                assert_eq!(p.dim(), dim, "entry dimension mismatch");
                entries.push(p);
            }
        }
        Self { rows, cols, dim, cap, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn get(&self, i: usize, j: usize) -> &Poly<C> {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Poly<C>) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        self.entries[i * self.cols + j] = p;
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &Poly<C>)> {
        let cols = self.cols;
        self.entries.iter().enumerate().map(move |(n, p)| ((n / cols, n % cols), p))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Poly::is_zero)
    }

    pub fn is_truncated(&self) -> bool {
        self.entries.iter().any(Poly::is_truncated)
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.entries.iter().filter_map(Poly::degree).max()
    }

    /// True when every stored monomial has total degree exactly `degree`.
    pub fn is_homogeneous(&self, degree: u32) -> bool {
        self.entries.iter().all(|p| p.is_homogeneous(degree))
    }

    pub fn homogeneous_part(&self, degree: u32) -> Self {
        self.map(|p| p.homogeneous_part(degree))
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&Poly<C>) -> Poly<D>) -> PolyMatrix<D> {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            dim: self.dim,
            cap: self.cap,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, c: &C) -> Self {
        self.map(|p| p.scale(c))
    }

    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        assert!(rows.end <= self.rows && cols.end <= self.cols, "submatrix out of bounds");
        Self::from_fn(rows.len(), cols.len(), self.dim, self.cap, |i, j| {
            self.get(rows.start + i, cols.start + j).clone()
        })
    }

    /// Assembles `[[a, b], [c, d]]`.
    pub fn from_blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        assert!(a.rows == b.rows && c.rows == d.rows && a.cols == c.cols && b.cols == d.cols);
        let (top, left) = (a.rows, a.cols);
        Self::from_fn(top + c.rows, left + b.cols, a.dim, a.cap, |i, j| {
            match (i < top, j < left) {
                (true, true) => a.get(i, j),
                (true, false) => b.get(i, j - left),
                (false, true) => c.get(i - top, j),
                (false, false) => d.get(i - top, j - left),
            }
            .clone()
        })
    }

    pub fn pow(&self, n: u32) -> Self {
        assert_eq!(self.rows, self.cols, "power of a non-square operator matrix");
        (0..n).fold(Self::identity(self.rows, self.dim, self.cap), |acc, _| &acc * self)
    }

    pub fn evaluate(&self, point: &[C]) -> Matrix<C> {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).evaluate(point))
    }
}

impl<C: Coeff> fmt::Debug for PolyMatrix<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "PolyMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<_> = (0..self.cols).map(|j| format!("{:?}", self.get(i, j))).collect();
            writeln!(f, "  {}", row.join(" | "))?;
        }
        write!(f, "]")
    }
}

impl<C: Coeff> Mul for &PolyMatrix<C> {
    type Output = PolyMatrix<C>;

    fn mul(self, rhs: &PolyMatrix<C>) -> PolyMatrix<C> {
        assert_eq!(self.cols, rhs.rows, "operator matrix product shape mismatch");
        assert_eq!(self.dim, rhs.dim, "operator matrix dimension mismatch");
        let cap = self.cap.min(rhs.cap);
        PolyMatrix::from_fn(self.rows, rhs.cols, self.dim, cap, |i, j| {
            let mut acc = Poly::zero(self.dim, cap);
            for k in 0..self.cols {
                let (a, b) = (self.get(i, k), rhs.get(k, j));
                if (a.is_zero() || b.is_zero()) && !a.is_truncated() && !b.is_truncated() {
                    continue;
                }
                acc = &acc + &(a * b);
            }
            acc
        })
    }
}

impl<C: Coeff> Add for &PolyMatrix<C> {
    type Output = PolyMatrix<C>;

    fn add(self, rhs: &PolyMatrix<C>) -> PolyMatrix<C> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "operator matrix sum shape mismatch");
        PolyMatrix::from_fn(self.rows, self.cols, self.dim, self.cap.min(rhs.cap), |i, j| {
            self.get(i, j) + rhs.get(i, j)
        })
    }
}

impl<C: Coeff> Sub for &PolyMatrix<C> {
    type Output = PolyMatrix<C>;

    fn sub(self, rhs: &PolyMatrix<C>) -> PolyMatrix<C> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "operator matrix difference shape mismatch");
        PolyMatrix::from_fn(self.rows, self.cols, self.dim, self.cap.min(rhs.cap), |i, j| {
            self.get(i, j) - rhs.get(i, j)
        })
    }
}

impl<C: Coeff> Neg for &PolyMatrix<C> {
    type Output = PolyMatrix<C>;

    fn neg(self) -> PolyMatrix<C> {
        self.map(|p| -p)
    }
}

macro_rules! forward_owned {
    ($($tr:ident $method:ident),*) => {$(
        impl<C: Coeff> $tr for PolyMatrix<C> {
            type Output = PolyMatrix<C>;
            fn $method(self, rhs: PolyMatrix<C>) -> PolyMatrix<C> {
                (&self).$method(&rhs)
            }
        }
        impl<C: Coeff> $tr<&PolyMatrix<C>> for PolyMatrix<C> {
            type Output = PolyMatrix<C>;
            fn $method(self, rhs: &PolyMatrix<C>) -> PolyMatrix<C> {
                (&self).$method(rhs)
            }
        }
        impl<C: Coeff> $tr<PolyMatrix<C>> for &PolyMatrix<C> {
            type Output = PolyMatrix<C>;
            fn $method(self, rhs: PolyMatrix<C>) -> PolyMatrix<C> {
                self.$method(&rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul);

impl<C: Coeff> Neg for PolyMatrix<C> {
    type Output = PolyMatrix<C>;

    fn neg(self) -> PolyMatrix<C> {
        -&self
    }
}
