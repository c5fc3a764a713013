//! Exact rational helpers shared by the expansion and sampling code.

use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Canonical arbitrary-precision rational (gcd 1, positive denominator).
pub type Rational = BigRational;

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` or an integer literal.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::domain(format!("cannot parse rational {s:?}"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
            let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
            if q.is_zero() {
                return Err(Error::domain("zero denominator"));
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(BigInt::from_str(s).map_err(|_| bad())?)),
    }
}

/// `p/q` text form; integers print without a denominator.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn ceil_int(r: &Rational) -> BigInt {
    r.ceil().to_integer()
}

pub fn floor_int(r: &Rational) -> BigInt {
    r.floor().to_integer()
}

/// `n / d` in lowest terms for `d != 0`. One Euclid step precedes the
/// binary gcd, which is quadratic when either side is much shorter.
pub fn reduce(n: BigInt, d: BigInt) -> Rational {
    assert!(!d.is_zero(), "zero denominator");
    let (n, d) = if d.is_negative() { (-n, -d) } else { (n, d) };
    let (a, b) = if n.bits() >= d.bits() { (n.abs(), d.clone()) } else { (d.clone(), n.abs()) };
    let g = if b.is_zero() { a } else { (a % &b).gcd(&b) };
    if g.is_one() {
        Rational::new_raw(n, d)
    } else {
        Rational::new_raw(n / &g, d / g)
    }
}

/// Nearest-f64 conversion that survives numerators and denominators far
/// outside the f64 range.
pub fn to_f64(r: &Rational) -> f64 {
    quotient_f64(r.numer(), r.denom())
}

/// `n / d` for a positive `d`, without reducing the fraction first.
pub fn quotient_f64(n: &BigInt, d: &BigInt) -> f64 {
    if n.is_zero() {
        return 0.0;
    }
    if let (Some(nf), Some(df)) = (n.to_f64(), d.to_f64()) {
        if nf.abs() < 9.0e15 && df < 9.0e15 {
            return nf / df;
        }
    }
    let nb = n.bits() as i64;
    let db = d.bits() as i64;
    // keep ~64 significant bits in the integer quotient
    let shift = 64 - (nb - db);
    let q = if shift >= 0 {
        (n << shift as usize) / d
    } else {
        n / (d << (-shift) as usize)
    };
    ldexp(q.to_f64().unwrap_or(f64::NAN), -shift)
}

/// `x * 2^e` without intermediate overflow.
pub fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Natural log of a positive big integer.
pub fn ln_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (n >> shift as usize).to_f64().unwrap_or(f64::NAN);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// A positive dyadic rational `mant / 2^shift`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dyadic {
    pub mant: u128,
    pub shift: u32,
}

impl Dyadic {
    pub fn new(mant: u128, shift: u32) -> Self {
        debug_assert!(mant > 0);
        let tz = mant.trailing_zeros().min(shift);
        Dyadic {
            mant: mant >> tz,
            shift: shift - tz,
        }
    }

    /// Exact dyadic value of a positive finite f64.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::domain(format!("dyadic from non-positive or non-finite {x}")));
        }
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        if e >= 0 {
            Ok(Dyadic::new((mant as u128) << e, 0))
        } else {
            Ok(Dyadic::new(mant as u128, (-e) as u32))
        }
    }

    pub fn to_f64(self) -> f64 {
        if self.shift <= 1022 {
            // exact power of two
            self.mant as f64 * f64::from_bits(((1023 - self.shift) as u64) << 52)
        } else {
            ldexp(self.mant as f64, -(self.shift as i64))
        }
    }

    pub fn to_rational(self) -> Rational {
        let num = BigInt::from_biguint(Sign::Plus, BigUint::from(self.mant));
        let den = BigInt::one() << self.shift as usize;
        Rational::new(num, den)
    }

    pub fn le_one(self) -> bool {
        self.shift >= 128 || self.mant <= (1u128 << self.shift)
    }
}

/// Bit length of a non-negative integer.
pub fn bits(n: &BigInt) -> u64 {
    n.bits()
}

pub fn is_integer(r: &Rational) -> bool {
    r.denom().is_one()
}

pub fn gcd_reduce(n: BigInt, d: BigInt) -> Rational {
    let g = n.gcd(&d);
    if g.is_one() {
        Rational::new_raw(n, d)
    } else {
        Rational::new_raw(n / &g, d / g)
    }
}

pub fn is_positive(r: &Rational) -> bool {
    r.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rational("2/5").unwrap(), ratio(2, 5));
        assert_eq!(parse_rational(" 4/10 ").unwrap(), ratio(2, 5));
        assert_eq!(parse_rational("7").unwrap(), int(7));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
        assert_eq!(format_rational(&ratio(6, 4)), "3/2");
        assert_eq!(format_rational(&int(3)), "3");
    }

    #[test]
    fn dyadic_roundtrip() {
        for &x in &[1.0, 0.5, 0.3, 1e-300, 5e-324, 0.999999999] {
            let d = Dyadic::from_f64(x).unwrap();
            assert_eq!(d.to_f64(), x);
            assert_eq!(to_f64(&d.to_rational()), x);
        }
        assert!(Dyadic::from_f64(0.0).is_err());
        assert!(Dyadic::from_f64(1.0).unwrap().le_one());
        assert!(!Dyadic::from_f64(1.5).unwrap().le_one());
    }

    #[test]
    fn big_conversions() {
        let huge = Rational::new(BigInt::one() << 3000usize, (BigInt::one() << 2999usize) * 3);
        assert!((to_f64(&huge) - 2.0 / 3.0).abs() < 1e-15);
        let n = BigInt::one() << 5000usize;
        assert!((ln_bigint(&n) - 5000.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }
}
