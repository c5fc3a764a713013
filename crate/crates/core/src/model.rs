//! Model definition: distribution families `F`, digit weights `phi`, the
//! history term `q`, the cell function `delta` and grid checkers for the
//! regularity conditions on `F`.
//!
//! `delta(h, k, q) = phi(h)(1 + q) / (k + phi(h) q)`, so that
//! `R_n = 1 / delta(B_n, B_{n+1}, Q_n)`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::digit::Digit;
use crate::error::{Error, Result};
use crate::rational::{ceil_int, reduce, to_f64, Rational};

/// Label attached to every grid-based condition report.
pub const HEURISTIC_LABEL: &str = "heuristic at horizon";

/// A distribution function on `[0, 1]` with `F(0) = 0`, `F(1) = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionFamily {
    Uniform,
    /// `F(x) = x^alpha`.
    Power { alpha: f64 },
    /// `F(x) = x^alpha (c0 + c1 x) / (c0 + c1)`.
    PerturbedPower { alpha: f64, coeffs: [f64; 2] },
}

impl DistributionFamily {
    pub fn power(alpha: f64) -> Result<Self> {
        let f = DistributionFamily::Power { alpha };
        f.validate()?;
        Ok(f)
    }

    pub fn perturbed(alpha: f64, c0: f64, c1: f64) -> Result<Self> {
        let f = DistributionFamily::PerturbedPower {
            alpha,
            coeffs: [c0, c1],
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let alpha = self.alpha();
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
        }
        if let DistributionFamily::PerturbedPower { coeffs: [c0, c1], .. } = *self {
            if !(c0.is_finite() && c1.is_finite()) || c0 + c1 <= 0.0 {
                return Err(Error::domain("perturbed-power coefficients must have c0 + c1 > 0"));
            }
            // F'(x) = x^(alpha-1) (alpha c0 + (alpha+1) c1 x) / (c0 + c1) >= 0 on [0, 1]
            if c0 < 0.0 || alpha * c0 + (alpha + 1.0) * c1 < 0.0 {
                return Err(Error::domain("perturbed-power coefficients make F decreasing"));
            }
        }
        Ok(())
    }

    /// Tail exponent of the family.
    pub fn alpha(&self) -> f64 {
        match *self {
            DistributionFamily::Uniform => 1.0,
            DistributionFamily::Power { alpha } | DistributionFamily::PerturbedPower { alpha, .. } => alpha,
        }
    }

    /// `F(x) = sum_i w_i x^{e_i}` on `[0, 1]`.
    pub fn power_terms(&self) -> Vec<(f64, f64)> {
        match *self {
            DistributionFamily::Uniform => vec![(1.0, 1.0)],
            DistributionFamily::Power { alpha } => vec![(1.0, alpha)],
            DistributionFamily::PerturbedPower { alpha, coeffs: [c0, c1] } => {
                let s = c0 + c1;
                vec![(c0 / s, alpha), (c1 / s, alpha + 1.0)]
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match *self {
            DistributionFamily::Uniform => x,
            DistributionFamily::Power { alpha } => pow(x, alpha),
            DistributionFamily::PerturbedPower { alpha, coeffs: [c0, c1] } => {
                pow(x, alpha) * (c0 + c1 * x) / (c0 + c1)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match *self {
            DistributionFamily::Uniform => 1.0,
            DistributionFamily::Power { alpha } => alpha * pow(x, alpha - 1.0),
            DistributionFamily::PerturbedPower { alpha, coeffs: [c0, c1] } => {
                pow(x, alpha - 1.0) * (alpha * c0 + (alpha + 1.0) * c1 * x) / (c0 + c1)
            }
        }
    }

    /// `F^{-1}(u)` for `u` in `[0, 1]`.
    pub fn inv_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        match *self {
            DistributionFamily::Uniform => u,
            DistributionFamily::Power { alpha } => pow(u, 1.0 / alpha),
            DistributionFamily::PerturbedPower { .. } => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                loop {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if (self.cdf(lo) - u).abs() < (self.cdf(hi) - u).abs() {
                    lo
                } else {
                    hi
                }
            }
        }
    }

    /// Exact `F(x)` for rational `x`, available when the exponent is an
    /// integer.
    pub fn cdf_exact(&self, x: &Rational) -> Option<Rational> {
        if !x.is_positive() {
            return Some(Rational::zero());
        }
        if *x >= Rational::one() {
            return Some(Rational::one());
        }
        let alpha = self.alpha();
        if alpha.fract() != 0.0 || alpha > 64.0 {
            return None;
        }
        let xa = num_traits::pow(x.clone(), alpha as usize);
        match *self {
            DistributionFamily::Uniform | DistributionFamily::Power { .. } => Some(xa),
            DistributionFamily::PerturbedPower { coeffs: [c0, c1], .. } => {
                let c0 = BigRational::from_float(c0)?;
                let c1 = BigRational::from_float(c1)?;
                let s = &c0 + &c1;
                Some(xa * (c0 + c1 * x) / s)
            }
        }
    }

    /// Checks `F(0) = 0`, `F(1) = 1`, monotonicity on a `points`-grid and
    /// `F(F^{-1}(u)) = u` within `1e-12`.
    pub fn check_invariants(&self, points: usize) -> Result<()> {
        self.validate()?;
        if self.cdf(0.0) != 0.0 || self.cdf(1.0) != 1.0 {
            return Err(Error::Internal("F(0) != 0 or F(1) != 1".into()));
        }
        let mut prev = 0.0;
        for i in 0..=points {
            let x = i as f64 / points as f64;
            let v = self.cdf(x);
            if v < prev {
                return Err(Error::Internal(format!("F decreasing at x = {x}")));
            }
            prev = v;
        }
        for i in 1..points {
            let u = i as f64 / points as f64;
            let back = self.cdf(self.inv_cdf(u));
            if (back - u).abs() > 1e-12 {
                return Err(Error::Internal(format!("F(F^-1({u})) = {back}")));
            }
        }
        Ok(())
    }
}

fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

/// The digit weight `phi`, a positive function on the positive integers.
///
/// Presets are polynomials: Lüroth `1`, Engel `h`, Sylvester `h(h+1)`. A
/// table overrides the polynomial at listed points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    /// Coefficients `c_0, c_1, ...` of `sum c_i h^i`.
    pub coeffs: Vec<Rational>,
    #[serde(default)]
    pub table: BTreeMap<u64, Rational>,
    #[serde(skip)]
    int_coeffs: Option<Vec<u128>>,
}

impl Phi {
    pub fn polynomial(coeffs: Vec<Rational>) -> Result<Self> {
        Self::with_table(coeffs, BTreeMap::new())
    }

    pub fn with_table(coeffs: Vec<Rational>, table: BTreeMap<u64, Rational>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        let phi = Phi {
            int_coeffs: int_coeffs(&coeffs),
            coeffs,
            table,
        };
        phi.validate()?;
        Ok(phi)
    }

    pub fn luroth() -> Self {
        Self::polynomial(vec![Rational::one()]).expect("preset")
    }

    pub fn engel() -> Self {
        Self::polynomial(vec![Rational::zero(), Rational::one()]).expect("preset")
    }

    pub fn sylvester() -> Self {
        Self::polynomial(vec![Rational::zero(), Rational::one(), Rational::one()]).expect("preset")
    }

    /// Rebuilds cached data after deserialization.
    pub fn rehydrate(mut self) -> Result<Self> {
        self.int_coeffs = int_coeffs(&self.coeffs);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let lead = self
            .coeffs
            .last()
            .ok_or_else(|| Error::domain("phi needs at least one coefficient"))?;
        if !lead.is_positive() {
            return Err(Error::domain("phi leading coefficient must be positive"));
        }
        for (h, v) in &self.table {
            if *h == 0 || !v.is_positive() {
                return Err(Error::domain(format!("phi table entry {h} -> {v} invalid")));
            }
        }
        if self.coeffs.iter().all(|c| !c.is_negative()) {
            return Ok(());
        }
        // Cauchy root bound: beyond it the leading term dominates.
        let bound = self
            .coeffs
            .iter()
            .map(|c| to_f64(&(c / lead)).abs())
            .fold(0.0, f64::max)
            + 1.0;
        let upto = bound.ceil().min(1e7) as u64;
        for h in 1..=upto.max(1) {
            if !self.eval_poly(&BigInt::from(h)).is_positive() {
                return Err(Error::domain(format!("phi({h}) is not positive")));
            }
        }
        Ok(())
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_one() && self.table.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn eval_poly(&self, h: &BigInt) -> Rational {
        // Horner over the common denominator; rational steps would run a
        // gcd against a huge numerator at every coefficient.
        let den = self.coeffs.iter().fold(BigInt::one(), |l, c| l.lcm(c.denom()));
        let mut acc = BigInt::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * h + c.numer() * (&den / c.denom());
        }
        if den.is_one() {
            Rational::from_integer(acc)
        } else {
            reduce(acc, den)
        }
    }

    pub fn eval(&self, h: &BigInt) -> Rational {
        if let Some(v) = h.to_u64().and_then(|k| self.table.get(&k)) {
            return v.clone();
        }
        self.eval_poly(h)
    }

    /// Integer fast path: `Some(phi(h))` when the polynomial has non-negative
    /// integer coefficients, `h` has no table entry and the value fits.
    pub fn eval_u128(&self, h: u64) -> Option<u128> {
        let ic = self.int_coeffs.as_ref()?;
        if self.table.contains_key(&h) {
            return None;
        }
        let mut acc: u128 = 0;
        for c in ic.iter().rev() {
            acc = acc.checked_mul(h as u128)?.checked_add(*c)?;
        }
        Some(acc)
    }

    /// `ln phi(h)` from `ln h`; used once digits are only tracked in log form.
    pub fn ln_eval(&self, ln_h: f64) -> f64 {
        let d = self.degree() as f64;
        let lead = to_f64(&self.coeffs[self.degree()]);
        let mut rest = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            rest += to_f64(c) * ((i as f64 - d) * ln_h).exp();
        }
        if rest > 0.0 {
            d * ln_h + rest.ln()
        } else {
            d * ln_h + lead.ln()
        }
    }

    pub fn eval_digit(&self, h: &Digit) -> PhiValue {
        match h {
            Digit::Small(v) => match self.eval_u128(*v) {
                Some(x) => PhiValue::Int(x),
                None => PhiValue::Exact(self.eval(&BigInt::from(*v))),
            },
            Digit::Big(b) => PhiValue::Exact(self.eval(b)),
            Digit::Log(l) => PhiValue::Ln(self.ln_eval(*l)),
        }
    }
}

fn int_coeffs(coeffs: &[Rational]) -> Option<Vec<u128>> {
    coeffs
        .iter()
        .map(|c| {
            if c.is_integer() && !c.is_negative() {
                c.to_integer().to_u128()
            } else {
                None
            }
        })
        .collect()
}

/// Value of `phi(B_n)` in the cheapest faithful representation.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiValue {
    Int(u128),
    Exact(Rational),
    /// Natural log of the value.
    Ln(f64),
}

impl PhiValue {
    pub fn to_rational(&self) -> Option<Rational> {
        match self {
            PhiValue::Int(v) => Some(Rational::from_integer(BigInt::from(*v))),
            PhiValue::Exact(r) => Some(r.clone()),
            PhiValue::Ln(_) => None,
        }
    }

    pub fn ln(&self) -> f64 {
        match self {
            PhiValue::Int(v) => (*v as f64).ln(),
            PhiValue::Exact(r) => ln_rational(r),
            PhiValue::Ln(l) => *l,
        }
    }
}

fn ln_rational(r: &Rational) -> f64 {
    crate::rational::ln_bigint(r.numer()) - crate::rational::ln_bigint(r.denom())
}

/// The history term `q_n(B_1, ..., B_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QSpec {
    Constant { value: Rational },
    /// `q_n = c / B_n`.
    LastDigitReciprocal { c: Rational },
}

impl QSpec {
    pub fn zero() -> Self {
        QSpec::Constant { value: Rational::zero() }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match self {
            QSpec::Constant { value } => value,
            QSpec::LastDigitReciprocal { c } => c,
        };
        if v.is_negative() {
            return Err(Error::domain("q must be non-negative"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            QSpec::Constant { value } => value.is_zero(),
            QSpec::LastDigitReciprocal { c } => c.is_zero(),
        }
    }

    /// Integer fast path.
    pub fn int_value(&self) -> Option<u128> {
        match self {
            QSpec::Constant { value } if value.is_integer() => value.to_integer().to_u128(),
            QSpec::LastDigitReciprocal { c } if c.is_zero() => Some(0),
            _ => None,
        }
    }

    pub fn eval(&self, last: &Digit) -> QValue {
        match self {
            QSpec::Constant { value } => QValue::Exact(value.clone()),
            QSpec::LastDigitReciprocal { c } => match last.to_bigint() {
                Some(b) => QValue::Exact(reduce(c.numer().clone(), c.denom() * b)),
                None => QValue::Approx(to_f64(c) * (-last.ln()).exp()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QValue {
    Exact(Rational),
    Approx(f64),
}

impl QValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            QValue::Exact(r) => to_f64(r),
            QValue::Approx(v) => *v,
        }
    }
}

/// Distribution family per transition index (stationary by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FSpec {
    Stationary(DistributionFamily),
    /// Entry `i` is used for index `i + 1`; the last entry repeats.
    PerIndex(Vec<DistributionFamily>),
}

impl FSpec {
    pub fn at(&self, n: usize) -> &DistributionFamily {
        match self {
            FSpec::Stationary(f) => f,
            FSpec::PerIndex(v) => &v[(n.max(1) - 1).min(v.len() - 1)],
        }
    }

    pub fn stationary(&self) -> Option<&DistributionFamily> {
        match self {
            FSpec::Stationary(f) => Some(f),
            FSpec::PerIndex(v) if v.iter().all(|f| *f == v[0]) => Some(&v[0]),
            FSpec::PerIndex(_) => None,
        }
    }

    pub fn families(&self) -> Vec<&DistributionFamily> {
        match self {
            FSpec::Stationary(f) => vec![f],
            FSpec::PerIndex(v) => v.iter().collect(),
        }
    }
}

/// How `B_1` is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum B1Init {
    /// Conditional law with phi-value 1 and q-value 0:
    /// `P(B_1 = k) = F(1/k) - F(1/(k+1))`.
    Default,
    Fixed(u64),
}

/// A full Oppenheim-type model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub phi: Phi,
    pub q: QSpec,
    pub f: FSpec,
    pub alpha_meta: Option<f64>,
    pub l_meta: Option<f64>,
    pub b1: B1Init,
}

impl ModelSpec {
    fn preset(name: &str, phi: Phi) -> Self {
        ModelSpec {
            name: name.to_string(),
            phi,
            q: QSpec::zero(),
            f: FSpec::Stationary(DistributionFamily::Uniform),
            alpha_meta: Some(1.0),
            l_meta: Some(1.0),
            b1: B1Init::Default,
        }
    }

    pub fn luroth() -> Self {
        Self::preset("luroth", Phi::luroth())
    }

    pub fn engel() -> Self {
        Self::preset("engel", Phi::engel())
    }

    pub fn sylvester() -> Self {
        Self::preset("sylvester", Phi::sylvester())
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "luroth" => Ok(Self::luroth()),
            "engel" => Ok(Self::engel()),
            "sylvester" => Ok(Self::sylvester()),
            other => Err(Error::config(format!("unknown model preset {other:?}"))),
        }
    }

    /// Lüroth-type weights (`phi = 1`, `q = 0`) with a custom stationary `F`.
    pub fn iid_with(name: &str, f: DistributionFamily) -> Self {
        let alpha = f.alpha();
        let l = f.power_terms()[0].0;
        ModelSpec {
            name: name.to_string(),
            phi: Phi::luroth(),
            q: QSpec::zero(),
            f: FSpec::Stationary(f),
            alpha_meta: Some(alpha),
            l_meta: Some(l),
            b1: B1Init::Default,
        }
    }

    /// With `phi = 1` and `q = 0` every `R_n = B_{n+1}` is an independent draw
    /// of the same law; returns that `F` when the model has this structure.
    pub fn iid_family(&self) -> Option<&DistributionFamily> {
        if self.phi.is_one() && self.q.is_zero() {
            self.f.stationary()
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.q.validate()?;
        if let FSpec::PerIndex(v) = &self.f {
            if v.is_empty() {
                return Err(Error::config("per-index F list is empty"));
            }
        }
        for f in self.f.families() {
            f.validate()?;
        }
        if let B1Init::Fixed(0) = self.b1 {
            return Err(Error::config("B_1 must be at least 1"));
        }
        if let (Some(alpha), Some(l)) = (self.alpha_meta, self.l_meta) {
            let grid = zero_grid(1e-9, 16);
            for f in self.f.families() {
                let rep = check_cond2f(f, alpha, &grid)?;
                if !rep.pass || (rep.l_hat - l).abs() > 1e-3 * l.abs().max(1e-12) {
                    return Err(Error::config(format!(
                        "declared (alpha, L) = ({alpha}, {l}) inconsistent with F: estimated L = {}",
                        rep.l_hat
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `delta(phi, k, q) = phi (1 + q) / (k + phi q)`.
pub fn delta(phi: &Rational, k: &BigInt, q: &Rational) -> Result<Rational> {
    check_cell_args(phi, k, q)?;
    let k = Rational::from_integer(k.clone());
    Ok(phi * (Rational::one() + q) / (k + phi * q))
}

/// `R = (b_next + phi q) / (phi (1 + q)) = 1 / delta(phi, b_next, q)`.
pub fn r_from_digits(b_next: &BigInt, phi: &Rational, q: &Rational) -> Result<Rational> {
    check_cell_args(phi, b_next, q)?;
    let b = Rational::from_integer(b_next.clone());
    Ok((b + phi * q) / (phi * (Rational::one() + q)))
}

fn check_cell_args(phi: &Rational, k: &BigInt, q: &Rational) -> Result<()> {
    if !phi.is_positive() {
        return Err(Error::domain(format!("phi must be positive, got {phi}")));
    }
    if q.is_negative() {
        return Err(Error::domain(format!("q must be non-negative, got {q}")));
    }
    let kmin = ceil_int(phi);
    if *k < kmin {
        return Err(Error::domain(format!("digit {k} below minimal digit {kmin}")));
    }
    Ok(())
}

/// Decreasing log-spaced grid from 1 down to `min_x` with `per_decade` points
/// per decade.
pub fn zero_grid(min_x: f64, per_decade: usize) -> Vec<f64> {
    let decades = -min_x.log10();
    let n = (decades * per_decade as f64).round() as usize;
    (0..=n)
        .map(|i| 10f64.powf(-(i as f64) / per_decade as f64))
        .collect()
}

/// Ascending grid on `[0, 1]`: 0, a geometric run from `1e-12` to `1e-4`
/// and `10^4` uniform steps above.
pub fn lipschitz_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    for i in 0..(8 * 16) {
        g.push(10f64.powf(-12.0 + i as f64 / 16.0));
    }
    let steps = 10_000;
    for i in 0..=steps {
        let x = 1e-4 + (1.0 - 1e-4) * i as f64 / steps as f64;
        g.push(x);
    }
    g
}

/// Outcome of the power-law checks at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTailReport {
    pub l_hat: f64,
    pub pass: bool,
    pub degenerate: bool,
    pub label: String,
}

fn validate_zero_grid(x_grid: &[f64]) -> Result<(f64, f64)> {
    if x_grid.len() < 2 {
        return Err(Error::config("grid needs at least two points"));
    }
    if x_grid.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::config("grid must lie in (0, 1]"));
    }
    let min = x_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x_grid.iter().copied().fold(0.0, f64::max);
    if min > 1e-6 {
        return Err(Error::config(format!("grid must reach 1e-6, smallest point is {min}")));
    }
    let decades = (max / min).log10();
    if ((x_grid.len() - 1) as f64) < 16.0 * decades - 1e-9 {
        return Err(Error::config("grid too coarse: fewer than 16 points per decade"));
    }
    Ok((min, max))
}

/// `limsup_{x -> 0} F(x) / x^alpha` estimated on a grid towards zero.
///
/// `l_hat` is the maximum of the ratio over the last decade of the grid;
/// the check passes when the ratio varies by less than `1e-3` (relative)
/// there. A ratio collapsing to zero is reported as `l_hat = 0`, passing
/// and flagged degenerate.
pub fn check_cond2f(f: &DistributionFamily, alpha: f64, x_grid: &[f64]) -> Result<PowerTailReport> {
    let (min, _) = validate_zero_grid(x_grid)?;
    let ratio = |x: f64| f.cdf(x) / x.powf(alpha);
    let whole_max = x_grid.iter().map(|&x| ratio(x)).fold(0.0, f64::max);
    let tail: Vec<f64> = x_grid
        .iter()
        .filter(|&&x| x <= 10.0 * min)
        .map(|&x| ratio(x))
        .collect();
    let tmax = tail.iter().copied().fold(0.0, f64::max);
    let tmin = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let label = HEURISTIC_LABEL.to_string();
    if tmax.is_finite() && tmax <= 1e-4 * whole_max {
        return Ok(PowerTailReport {
            l_hat: 0.0,
            pass: true,
            degenerate: true,
            label,
        });
    }
    let pass = tmax.is_finite() && tmax > 0.0 && (tmax - tmin) / tmax < 1e-3;
    Ok(PowerTailReport {
        l_hat: tmax,
        pass,
        degenerate: false,
        label,
    })
}

/// `lim_{x -> 0+} F(x) / x^alpha = L > 0`, estimated as the ratio at the
/// smallest grid point; converges when the ratio's deviation from it over the
/// last decade stays below `1e-3` (relative) and shrinks towards zero.
pub fn check_uniform_power_limit(
    f: &DistributionFamily,
    alpha: f64,
    x_grid: &[f64],
) -> Result<PowerTailReport> {
    let (min, _) = validate_zero_grid(x_grid)?;
    let ratio = |x: f64| f.cdf(x) / x.powf(alpha);
    let l_hat = ratio(min);
    let mut tail: Vec<(f64, f64)> = x_grid
        .iter()
        .filter(|&&x| x <= 10.0 * min)
        .map(|&x| (x, (ratio(x) - l_hat).abs()))
        .collect();
    tail.sort_by(|a, b| b.0.total_cmp(&a.0));
    let scale = l_hat.abs().max(f64::MIN_POSITIVE);
    let small = tail.iter().all(|&(_, d)| d / scale < 1e-3);
    let shrinking = tail
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-15 * scale);
    Ok(PowerTailReport {
        l_hat,
        pass: l_hat.is_finite() && l_hat > 0.0 && small && shrinking,
        degenerate: false,
        label: HEURISTIC_LABEL.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub m_hat: f64,
    pub bounded: bool,
    pub label: String,
}

/// Largest difference quotient over adjacent grid pairs. `bounded` fails
/// when the quotients over the smallest decade near zero exceed those seen
/// elsewhere, i.e. they grow as the spacing shrinks.
pub fn check_lipschitz(f: &DistributionFamily, grid: &[f64]) -> Result<LipschitzReport> {
    if grid.len() < 10_001 {
        return Err(Error::config("Lipschitz grid needs at least 10^4 adjacent pairs"));
    }
    if grid.iter().any(|&x| !(0.0..=1.0).contains(&x)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("Lipschitz grid must be strictly increasing in [0, 1]"));
    }
    let quotients: Vec<(f64, f64)> = grid
        .windows(2)
        .map(|w| (0.5 * (w[0] + w[1]), (f.cdf(w[1]) - f.cdf(w[0])) / (w[1] - w[0])))
        .collect();
    let m_hat = quotients.iter().map(|q| q.1).fold(0.0, f64::max);
    let smallest_mid = quotients[0].0;
    let near = quotients
        .iter()
        .filter(|q| q.0 <= 10.0 * smallest_mid)
        .map(|q| q.1)
        .fold(0.0, f64::max);
    let far = quotients
        .iter()
        .filter(|q| q.0 > 10.0 * smallest_mid)
        .map(|q| q.1)
        .fold(0.0, f64::max);
    Ok(LipschitzReport {
        m_hat,
        bounded: m_hat.is_finite() && near <= far * (1.0 + 1e-9),
        label: HEURISTIC_LABEL.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn delta_examples() {
        assert_eq!(delta(&int(1), &BigInt::from(4), &int(0)).unwrap(), ratio(1, 4));
        assert_eq!(delta(&int(3), &BigInt::from(6), &int(0)).unwrap(), ratio(1, 2));
        assert_eq!(delta(&int(2), &BigInt::from(4), &int(1)).unwrap(), ratio(2, 3));
        // k = phi gives the whole cell
        assert_eq!(delta(&int(5), &BigInt::from(5), &ratio(7, 3)).unwrap(), int(1));
    }

    #[test]
    fn delta_domain_errors() {
        assert!(matches!(delta(&int(3), &BigInt::from(2), &int(0)), Err(Error::Domain(_))));
        assert!(matches!(delta(&int(0), &BigInt::from(2), &int(0)), Err(Error::Domain(_))));
        assert!(matches!(delta(&int(-1), &BigInt::from(2), &int(0)), Err(Error::Domain(_))));
        // non-integer phi: minimal digit is the ceiling
        assert!(delta(&ratio(5, 2), &BigInt::from(2), &int(0)).is_err());
        assert!(delta(&ratio(5, 2), &BigInt::from(3), &int(0)).is_ok());
    }

    #[test]
    fn r_examples() {
        assert_eq!(r_from_digits(&BigInt::from(7), &int(1), &int(0)).unwrap(), int(7));
        assert_eq!(r_from_digits(&BigInt::from(6), &int(3), &int(0)).unwrap(), int(2));
        assert_eq!(r_from_digits(&BigInt::from(4), &int(2), &int(1)).unwrap(), ratio(3, 2));
        assert!(r_from_digits(&BigInt::from(1), &int(2), &int(1)).is_err());
    }

    #[test]
    fn families_basic() {
        let u = DistributionFamily::Uniform;
        assert_eq!(u.cdf(0.3), 0.3);
        let p = DistributionFamily::power(2.0).unwrap();
        assert_eq!(p.cdf(0.5), 0.25);
        assert_eq!(p.inv_cdf(0.25), 0.5);
        let pp = DistributionFamily::perturbed(1.0, 1.0, 1.0).unwrap();
        assert!((pp.cdf(0.5) - 0.375).abs() < 1e-15);
        for f in [u, p, pp, DistributionFamily::power(0.5).unwrap()] {
            f.check_invariants(10_000).unwrap();
        }
        assert!(DistributionFamily::power(0.0).is_err());
        assert!(DistributionFamily::perturbed(1.0, -1.0, 3.0).is_err());
        assert!(DistributionFamily::perturbed(1.0, 1.0, -0.9).is_err());
    }

    #[test]
    fn cdf_exact_matches() {
        let pp = DistributionFamily::perturbed(2.0, 1.0, 3.0).unwrap();
        let x = ratio(1, 3);
        let e = pp.cdf_exact(&x).unwrap();
        assert!((to_f64(&e) - pp.cdf(1.0 / 3.0)).abs() < 1e-15);
        assert!(DistributionFamily::power(0.5).unwrap().cdf_exact(&x).is_none());
    }

    #[test]
    fn phi_presets() {
        let h = BigInt::from(5);
        assert_eq!(Phi::luroth().eval(&h), int(1));
        assert_eq!(Phi::engel().eval(&h), int(5));
        assert_eq!(Phi::sylvester().eval(&h), int(30));
        assert_eq!(Phi::sylvester().eval_u128(5), Some(30));
        assert!((Phi::sylvester().ln_eval(5f64.ln()) - 30f64.ln()).abs() < 1e-12);
        let mut table = BTreeMap::new();
        table.insert(2, ratio(7, 2));
        let t = Phi::with_table(vec![int(1)], table).unwrap();
        assert_eq!(t.eval(&BigInt::from(2)), ratio(7, 2));
        assert_eq!(t.eval_u128(2), None);
        assert!(Phi::polynomial(vec![int(-1)]).is_err());
        assert!(Phi::polynomial(vec![int(-3), int(1)]).is_err());
        assert!(Phi::polynomial(vec![int(-1), int(0), int(1)]).is_err());
        assert!(Phi::polynomial(vec![int(-1), int(2)]).is_ok());
    }

    #[test]
    fn cond2f_examples() {
        let grid = zero_grid(1e-6, 16);
        let r = check_cond2f(&DistributionFamily::Uniform, 1.0, &grid).unwrap();
        assert_eq!(r.l_hat, 1.0);
        assert!(r.pass && !r.degenerate);
        let p2 = DistributionFamily::power(2.0).unwrap();
        let r = check_cond2f(&p2, 2.0, &grid).unwrap();
        assert!((r.l_hat - 1.0).abs() < 1e-12 && r.pass);
        let r = check_cond2f(&p2, 1.0, &grid).unwrap();
        assert_eq!(r.l_hat, 0.0);
        assert!(r.pass && r.degenerate);
        let r = check_cond2f(&DistributionFamily::Uniform, 2.0, &grid).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn cond2f_grid_validation() {
        assert!(check_cond2f(&DistributionFamily::Uniform, 1.0, &zero_grid(1e-5, 16)).is_err());
        assert!(check_cond2f(&DistributionFamily::Uniform, 1.0, &zero_grid(1e-6, 8)).is_err());
        assert!(check_cond2f(&DistributionFamily::Uniform, 1.0, &[0.0, 1e-7]).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let g = lipschitz_grid();
        let r = check_lipschitz(&DistributionFamily::Uniform, &g).unwrap();
        assert_eq!(r.m_hat, 1.0);
        assert!(r.bounded);
        let r = check_lipschitz(&DistributionFamily::power(2.0).unwrap(), &g).unwrap();
        assert!((r.m_hat - 2.0).abs() < 1e-3 && r.bounded);
        let r = check_lipschitz(&DistributionFamily::power(0.5).unwrap(), &g).unwrap();
        assert!(!r.bounded);
        assert!(check_lipschitz(&DistributionFamily::Uniform, &[0.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn power_limit_examples() {
        let grid = zero_grid(1e-9, 16);
        let r = check_uniform_power_limit(&DistributionFamily::Uniform, 1.0, &grid).unwrap();
        assert_eq!(r.l_hat, 1.0);
        assert!(r.pass);
        let r = check_uniform_power_limit(&DistributionFamily::power(2.0).unwrap(), 2.0, &grid).unwrap();
        assert!((r.l_hat - 1.0).abs() < 1e-12 && r.pass);
        // F(x) = x (1 + x) / 2, F'(0) = 1/2
        let pp = DistributionFamily::perturbed(1.0, 1.0, 1.0).unwrap();
        let r = check_uniform_power_limit(&pp, 1.0, &grid).unwrap();
        assert!((r.l_hat - 0.5).abs() < 1e-8 && r.pass);
        let c = check_cond2f(&pp, 1.0, &grid).unwrap();
        assert!((c.l_hat - r.l_hat).abs() < 1e-6);
        let r = check_uniform_power_limit(&DistributionFamily::power(2.0).unwrap(), 1.0, &grid).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn model_validation() {
        ModelSpec::luroth().validate().unwrap();
        ModelSpec::engel().validate().unwrap();
        ModelSpec::sylvester().validate().unwrap();
        let mut m = ModelSpec::luroth();
        m.l_meta = Some(2.0);
        assert!(matches!(m.validate(), Err(Error::Config(_))));
        let m = ModelSpec::iid_with("p2", DistributionFamily::power(2.0).unwrap());
        m.validate().unwrap();
        assert!(m.iid_family().is_some());
        assert!(ModelSpec::engel().iid_family().is_none());
        assert!(ModelSpec::by_name("nope").is_err());
    }
}
