use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::rational::ln_bigint;

/// One chain digit `B_n`.
///
/// Digits that fit a machine word are kept inline; larger ones are exact big
/// integers. `Log` holds `ln B_n` and only appears in fast mode once digits
/// outgrow the exact-arithmetic threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Digit {
    Small(u64),
    Big(BigInt),
    Log(f64),
}

impl Digit {
    pub fn from_bigint(n: BigInt) -> Self {
        match n.to_u64() {
            Some(v) => Digit::Small(v),
            None => Digit::Big(n),
        }
    }

    pub fn from_u128(n: u128) -> Self {
        match u64::try_from(n) {
            Ok(v) => Digit::Small(v),
            Err(_) => Digit::Big(BigInt::from(n)),
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Digit::Log(_))
    }

    pub fn to_bigint(&self) -> Option<BigInt> {
        match self {
            Digit::Small(v) => Some(BigInt::from(*v)),
            Digit::Big(b) => Some(b.clone()),
            Digit::Log(_) => None,
        }
    }

    pub fn ln(&self) -> f64 {
        match self {
            Digit::Small(v) => (*v as f64).ln(),
            Digit::Big(b) => ln_bigint(b),
            Digit::Log(l) => *l,
        }
    }

    /// Bit length (estimated from the logarithm in log form).
    pub fn bits(&self) -> u64 {
        match self {
            Digit::Small(v) => 64 - v.leading_zeros() as u64,
            Digit::Big(b) => b.bits(),
            Digit::Log(l) => (l / std::f64::consts::LN_2).floor() as u64 + 1,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Digit::Small(v) => *v as f64,
            Digit::Big(b) => b.to_f64().unwrap_or(f64::INFINITY),
            Digit::Log(l) => l.exp(),
        }
    }
}

impl From<u64> for Digit {
    fn from(v: u64) -> Self {
        Digit::Small(v)
    }
}

impl fmt::Display for Digit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Digit::Small(v) => write!(f, "{v}"),
            Digit::Big(b) => write!(f, "{b}"),
            Digit::Log(l) => write!(f, "e^{l:.17e}"),
        }
    }
}
