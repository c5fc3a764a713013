//! Classical Lüroth, Engel and Sylvester expansions over exact rationals.
//!
//! Digits use the cell convention `x in [1/d, 1/(d-1))`, i.e. `d = ceil(1/x)`,
//! so `x = 1/m` terminates with the single digit `m`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Default Sylvester digit cap; digits roughly square each step.
pub const SYLVESTER_CAP_BITS: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Luroth,
    Engel,
    Sylvester,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Luroth, Scheme::Engel, Scheme::Sylvester];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Luroth => "luroth",
            Scheme::Engel => "engel",
            Scheme::Sylvester => "sylvester",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "luroth" => Ok(Scheme::Luroth),
            "engel" => Ok(Scheme::Engel),
            "sylvester" => Ok(Scheme::Sylvester),
            other => Err(Error::domain(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigitSequence {
    pub scheme: Scheme,
    pub digits: Vec<BigInt>,
    /// The exact remainder reached zero.
    pub terminated: bool,
}

/// Expands `x` in `(0, 1)` into at most `max_digits` digits.
pub fn expand(x: &Rational, scheme: Scheme, max_digits: usize) -> Result<DigitSequence> {
    let cap = match scheme {
        Scheme::Sylvester => Some(SYLVESTER_CAP_BITS),
        _ => None,
    };
    expand_capped(x, scheme, max_digits, cap)
}

/// As [`expand`], stopping before any digit longer than `cap_bits` bits.
pub fn expand_capped(
    x: &Rational,
    scheme: Scheme,
    max_digits: usize,
    cap_bits: Option<u64>,
) -> Result<DigitSequence> {
    if !(x.is_positive() && *x < Rational::one()) {
        return Err(Error::domain(format!("x = {x} must lie in (0, 1)")));
    }
    if max_digits == 0 {
        return Err(Error::domain("max_digits must be positive"));
    }
    let mut p = x.numer().clone();
    let mut q = x.denom().clone();
    let mut digits = Vec::with_capacity(max_digits.min(1024));
    let mut terminated = false;
    while digits.len() < max_digits {
        let d = Integer::div_ceil(&q, &p);
        if cap_bits.is_some_and(|c| d.bits() > c) {
            break;
        }
        let (np, nq) = match scheme {
            Scheme::Luroth => {
                let dm1 = &d - 1u32;
                (&d * &dm1 * &p - &dm1 * &q, q)
            }
            Scheme::Engel => (&d * &p - &q, q),
            Scheme::Sylvester => (&d * &p - &q, &d * &q),
        };
        debug_assert!(!np.is_negative() && np < nq);
        digits.push(d);
        if np.is_zero() {
            terminated = true;
            break;
        }
        let g = np.gcd(&nq);
        p = np / &g;
        q = nq / g;
    }
    Ok(DigitSequence {
        scheme,
        digits,
        terminated,
    })
}

/// Exact partial sum of the first `n` terms of the scheme's series.
pub fn reconstruct(seq: &DigitSequence, n: usize) -> Result<Rational> {
    if seq.digits.is_empty() {
        return Err(Error::domain("empty digit sequence"));
    }
    if n > seq.digits.len() {
        return Err(Error::domain(format!(
            "requested {n} terms of a {}-digit sequence",
            seq.digits.len()
        )));
    }
    let mut sum = Rational::zero();
    let mut prefix = BigInt::one();
    for d in &seq.digits[..n] {
        match seq.scheme {
            Scheme::Luroth => {
                sum += Rational::new(BigInt::one(), &prefix * d);
                prefix *= d * (d - 1u32);
            }
            Scheme::Engel => {
                prefix *= d;
                sum += Rational::new(BigInt::one(), prefix.clone());
            }
            Scheme::Sylvester => sum += Rational::new(BigInt::one(), d.clone()),
        }
    }
    Ok(sum)
}

/// Chain digits `B_k = d_k - 1`, checked against the preset digit constraint.
pub fn to_framework_digits(seq: &DigitSequence) -> Result<Vec<BigInt>> {
    let b: Vec<BigInt> = seq.digits.iter().map(|d| d - 1u32).collect();
    for (k, bk) in b.iter().enumerate() {
        if *bk < BigInt::one() {
            return Err(Error::Internal(format!("{} digit {k} below 1", seq.scheme)));
        }
    }
    for (k, w) in b.windows(2).enumerate() {
        let floor = match seq.scheme {
            Scheme::Luroth => BigInt::one(),
            Scheme::Engel => w[0].clone(),
            Scheme::Sylvester => &w[0] * (&w[0] + 1u32),
        };
        if w[1] < floor {
            return Err(Error::Internal(format!(
                "{} chain digit {} = {} violates constraint >= {}",
                seq.scheme,
                k + 1,
                w[1],
                floor
            )));
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn digits(seq: &DigitSequence) -> Vec<i64> {
        seq.digits.iter().map(|d| i64::try_from(d).unwrap()).collect()
    }

    #[test]
    fn two_fifths() {
        let x = ratio(2, 5);
        let l = expand(&x, Scheme::Luroth, 5).unwrap();
        assert_eq!(digits(&l), vec![3; 5]);
        assert!(!l.terminated);
        let e = expand(&x, Scheme::Engel, 5).unwrap();
        assert_eq!(digits(&e), vec![3, 5]);
        assert!(e.terminated);
        let s = expand(&x, Scheme::Sylvester, 5).unwrap();
        assert_eq!(digits(&s), vec![3, 15]);
        assert!(s.terminated);
    }

    #[test]
    fn reconstruct_examples() {
        let x = ratio(2, 5);
        let e = expand(&x, Scheme::Engel, 5).unwrap();
        assert_eq!(reconstruct(&e, 2).unwrap(), x);
        let s = expand(&x, Scheme::Sylvester, 5).unwrap();
        assert_eq!(reconstruct(&s, 2).unwrap(), x);
        let l = expand(&x, Scheme::Luroth, 2).unwrap();
        assert_eq!(reconstruct(&l, 2).unwrap(), ratio(7, 18));
        let empty = DigitSequence {
            scheme: Scheme::Engel,
            digits: vec![],
            terminated: false,
        };
        assert!(reconstruct(&empty, 0).is_err());
        assert!(reconstruct(&e, 3).is_err());
    }

    #[test]
    fn bridge_examples() {
        let x = ratio(2, 5);
        let l = expand(&x, Scheme::Luroth, 3).unwrap();
        assert_eq!(to_framework_digits(&l).unwrap(), vec![BigInt::from(2); 3]);
        let e = expand(&x, Scheme::Engel, 5).unwrap();
        assert_eq!(to_framework_digits(&e).unwrap(), vec![BigInt::from(2), BigInt::from(4)]);
        let s = expand(&x, Scheme::Sylvester, 5).unwrap();
        assert_eq!(to_framework_digits(&s).unwrap(), vec![BigInt::from(2), BigInt::from(14)]);
        let bad = DigitSequence {
            scheme: Scheme::Engel,
            digits: vec![BigInt::from(5), BigInt::from(3)],
            terminated: false,
        };
        assert!(matches!(to_framework_digits(&bad), Err(Error::Internal(_))));
    }

    #[test]
    fn unit_fractions_terminate() {
        let e = expand(&ratio(1, 2), Scheme::Engel, 5).unwrap();
        assert_eq!(digits(&e), vec![2]);
        assert!(e.terminated);
        let l = expand(&ratio(1, 7), Scheme::Luroth, 5).unwrap();
        assert_eq!(digits(&l), vec![7]);
        assert!(l.terminated);
    }

    #[test]
    fn domain_errors() {
        assert!(expand(&int(0), Scheme::Engel, 3).is_err());
        assert!(expand(&int(1), Scheme::Engel, 3).is_err());
        assert!(expand(&ratio(3, 2), Scheme::Engel, 3).is_err());
        assert!(expand(&ratio(1, 3), Scheme::Engel, 0).is_err());
    }

    #[test]
    fn sylvester_cap() {
        let x = Rational::new(BigInt::one(), BigInt::one() << 40usize) + ratio(1, 3);
        let x = x - Rational::new(BigInt::one(), (BigInt::one() << 40usize) + 1u32);
        let s = expand_capped(&x, Scheme::Sylvester, 100, Some(64)).unwrap();
        assert!(s.digits.iter().all(|d| d.bits() <= 64));
        assert!(!s.terminated);
    }
}
