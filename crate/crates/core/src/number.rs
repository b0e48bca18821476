//! Exact scalar types shared by the symbolic and oracle paths.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Complex number with exact rational parts.
pub type GaussRational = Complex<BigRational>;

/// Scalar ring usable as a polynomial or matrix coefficient.
pub trait Coeff:
    Num + Clone + PartialEq + fmt::Debug + std::ops::Neg<Output = Self> + Send + Sync
{
}

impl<T> Coeff for T where
    T: Num + Clone + PartialEq + fmt::Debug + std::ops::Neg<Output = T> + Send + Sync
{
}

pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn gauss(re: Rational, im: Rational) -> GaussRational {
    Complex::new(re, im)
}

pub fn imag_unit() -> GaussRational {
    Complex::new(Rational::zero(), Rational::one())
}

pub fn to_gauss(r: &Rational) -> GaussRational {
    Complex::new(r.clone(), Rational::zero())
}

/// Parses `p`, `-p`, `+p`, `p/q` or `-p/q` with decimal integers.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let bad = || Error::ParseRational(text.to_string());
    let s = text.trim();
    let (numer, denom) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (s, None),
    };
    let parse_int = |t: &str, allow_sign: bool| -> Result<BigInt> {
        let digits = match t.strip_prefix(['+', '-']) {
            Some(rest) if allow_sign => rest,
            Some(_) => return Err(bad()),
            None => t,
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        BigInt::from_str(t.strip_prefix('+').unwrap_or(t)).map_err(|_| bad())
    };
    let n = parse_int(numer, true)?;
    let d = match denom {
        Some(d) => parse_int(d, false)?,
        None => BigInt::one(),
    };
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(n, d))
}

/// `p/q` in lowest terms, or `p` for integers.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fallback for magnitudes outside the fast path.
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn abs(r: &Rational) -> Rational {
    r.abs()
}

/// Exact conversion of a finite `f64` (used only to seed exact samples).
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn factorial(n: u32) -> Rational {
    (1..=n as i64).fold(Rational::one(), |acc, k| acc * int(k))
}


/// `a`, `bi`, `a + bi` or `a - bi` with rational parts.
pub fn format_gauss(z: &GaussRational) -> String {
    let (re, im) = (&z.re, &z.im);
    let unit = |r: &Rational| if r.is_one() { "i".to_string() } else { format!("{}i", format_rational(r)) };
    match (re.is_zero(), im.is_zero()) {
        (_, true) => format_rational(re),
        (true, false) if im.is_negative() => format!("-{}", unit(&-im)),
        (true, false) => unit(im),
        (false, false) if im.is_negative() => format!("{} - {}", format_rational(re), unit(&-im)),
        (false, false) => format!("{} + {}", format_rational(re), unit(im)),
    }
}

/// Serde adapter writing rationals as `"p/q"` strings.
pub mod serde_rational {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(de::Error::custom)
    }
}
