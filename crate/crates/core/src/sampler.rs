//! Chain sampling by inverse transform of the conditional digit law.
//!
//! Given `B_n = h`, draw `V = F^{-1}(u)` and take the unique `k` with
//! `delta(phi, k+1, q) < V <= delta(phi, k, q)`, which is
//! `k = floor(phi (1+q) / V - phi q)` clamped below at `ceil(phi)`.
//! `V` is always an exact dyadic, so exact and fast mode draw identical
//! digits as long as they stay below the fast-mode log threshold.

use std::borrow::Cow;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digit::Digit;
use crate::error::{Error, Result};
use crate::expansion::{expand, to_framework_digits, Scheme};
use crate::model::{B1Init, DistributionFamily, ModelSpec, PhiValue, QSpec, QValue};
use crate::rational::{ceil_int, floor_int, quotient_f64, reduce, to_f64, Dyadic, Rational};
use crate::rng::{check_bits, uniform_dyadic, RngStreamKey};

/// Exact-mode digits longer than this abort the trajectory.
pub const EXACT_CAP_BITS: u64 = 1_000_000;
/// Fast mode keeps only `ln B_n` once a digit is longer than this.
pub const LOG_THRESHOLD_BITS: u64 = 512;
pub const DEFAULT_V_BITS: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Fast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub mode: Mode,
    /// Precision of the uniform draw `u = m / 2^bits`.
    pub v_bits: u32,
}

impl SamplerOptions {
    pub fn new(mode: Mode) -> Self {
        SamplerOptions {
            mode,
            v_bits: DEFAULT_V_BITS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RSeries {
    Exact(Vec<Rational>),
    Fast(Vec<f64>),
}

impl RSeries {
    pub fn len(&self) -> usize {
        match self {
            RSeries::Exact(v) => v.len(),
            RSeries::Fast(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            RSeries::Exact(v) => to_f64(&v[i]),
            RSeries::Fast(v) => v[i],
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get_f64(i)).collect()
    }
}

/// One sampled chain: `b[i]` is `B_{i+1}` and `r[i]` is `R_{i+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub model_name: String,
    pub key: RngStreamKey,
    pub mode: Mode,
    pub b: Vec<Digit>,
    pub r: RSeries,
}

impl Trajectory {
    /// `R_j` for `j >= 1`.
    pub fn r_at(&self, j: usize) -> f64 {
        self.r.get_f64(j - 1)
    }

    /// Checks the digit constraint and, in exact mode, `R_j` against the
    /// digits it was computed from.
    pub fn check_constraints(&self, model: &ModelSpec) -> Result<()> {
        if self.r.len() + 1 != self.b.len() {
            return Err(Error::Internal("R list length mismatch".into()));
        }
        if let Some(b1) = self.b.first().and_then(Digit::to_bigint) {
            if b1 < BigInt::one() {
                return Err(Error::Internal("B_1 below 1".into()));
            }
        }
        for j in 0..self.r.len() {
            let (Some(h), Some(k)) = (self.b[j].to_bigint(), self.b[j + 1].to_bigint()) else {
                continue;
            };
            let phi = model.phi.eval(&h);
            if k < ceil_int(&phi) {
                return Err(Error::Internal(format!("B_{} = {k} below ceil(phi({h}))", j + 2)));
            }
            if let RSeries::Exact(rs) = &self.r {
                let q = match model.q.eval(&self.b[j]) {
                    QValue::Exact(q) => q,
                    QValue::Approx(_) => continue,
                };
                let want = crate::model::r_from_digits(&k, &phi, &q)?;
                if rs[j] != want {
                    return Err(Error::Internal(format!("R_{} = {} != {want}", j + 1, rs[j])));
                }
            }
        }
        Ok(())
    }
}

/// `k = max(ceil(phi), floor(phi (1+q) / v - phi q))` for exact inputs.
pub fn sample_digit(phi: &Rational, q: &Rational, v: &Rational) -> Result<BigInt> {
    if !phi.is_positive() {
        return Err(Error::domain(format!("phi must be positive, got {phi}")));
    }
    if q.is_negative() {
        return Err(Error::domain(format!("q must be non-negative, got {q}")));
    }
    if !v.is_positive() || *v > Rational::one() {
        return Err(Error::domain(format!("V = {v} outside (0, 1]")));
    }
    let k = floor_int(&(phi * (Rational::one() + q) / v - phi * q));
    Ok(k.max(ceil_int(phi)))
}

struct VDraw {
    dy: Dyadic,
    f: f64,
}

fn draw_v(rng: &mut ChaCha8Rng, bits: u32, f: &DistributionFamily) -> VDraw {
    let u = uniform_dyadic(rng, bits);
    if let DistributionFamily::Uniform = f {
        return VDraw { dy: u, f: u.to_f64() };
    }
    let v = f.inv_cdf(u.to_f64()).max(f64::from_bits(1));
    VDraw {
        dy: Dyadic::from_f64(v).expect("positive finite"),
        f: v,
    }
}

fn bits_u128(x: u128) -> u32 {
    128 - x.leading_zeros()
}

/// `floor(num / m)` with `num < 2^127`, avoiding a full 128-bit division
/// when the quotient is small.
fn div_floor_u128(num: u128, m: u128, estimate: f64) -> u128 {
    if num >> 64 == 0 && m >> 64 == 0 {
        return ((num as u64) / (m as u64)) as u128;
    }
    if estimate.is_finite() && estimate < 4.5e15 {
        let mut k = estimate as u128;
        let over = |k: u128| k.checked_mul(m).is_none_or(|p| p > num);
        while k > 0 && over(k) {
            k -= 1;
        }
        while !over(k + 1) {
            k += 1;
        }
        return k;
    }
    num / m
}

fn big_from_u128(x: u128) -> BigInt {
    BigInt::from(x)
}

fn dyadic_parts(v: Dyadic) -> (BigInt, usize) {
    (BigInt::from_biguint(Sign::Plus, v.mant.into()), v.shift as usize)
}

/// Raw next digit and its ratio in the cheapest faithful representation.
enum Next {
    Exact { k: BigInt, r: Option<Rational>, rf: f64 },
    Small { k: u128, rf: f64, num: u128, den: u128 },
    Log { ln_k: f64, rf: f64 },
}

fn next_digit(phi: &PhiValue, q_int: Option<u128>, q: &QValue, v: &VDraw, want_exact_r: bool) -> Next {
    if let (PhiValue::Int(a), Some(qi)) = (phi, q_int) {
        if let (Some(big_a), Some(c)) = (a.checked_mul(qi + 1), a.checked_mul(qi)) {
            if bits_u128(big_a) + v.dy.shift <= 127 {
                let num = big_a << v.dy.shift;
                let k0 = div_floor_u128(num, v.dy.mant, big_a as f64 / v.f);
                let k = k0 - c;
                let rnum = k0;
                let rf = if rnum < (1 << 53) && big_a < (1 << 53) {
                    rnum as f64 / big_a as f64
                } else {
                    to_f64(&Rational::new(big_from_u128(rnum), big_from_u128(big_a)))
                };
                return Next::Small { k, rf, num: rnum, den: big_a };
            }
        }
    }
    let q_exact = match q {
        QValue::Exact(r) => Some(r),
        QValue::Approx(_) => None,
    };
    match (phi.to_rational(), q_exact) {
        (Some(phi_r), Some(q_r)) => {
            // Raw numerators and denominators only: rational arithmetic would
            // run a gcd on every intermediate, which dominates for huge phi.
            let (m, s) = dyadic_parts(v.dy);
            let (pn, pd) = (phi_r.numer(), phi_r.denom());
            let (qn, qd) = (q_r.numer(), q_r.denom());
            // phi (1+q) / V - phi q = pn ((qd + qn) 2^s - qn m) / (pd qd m)
            let top = pn * ((qd + qn) << s) - pn * qn * &m;
            let k = Integer::div_floor(&top, &(pd * qd * &m));
            let k = if pd.is_one() { k } else { k.max(Integer::div_ceil(pn, pd)) };
            // R = (k + phi q) / (phi (1 + q)) = (k pd qd + pn qn) / (pn (qd + qn))
            let num_unreduced = &k * pd * qd + pn * qn;
            let den_unreduced = pn * (qd + qn);
            let rf = quotient_f64(&num_unreduced, &den_unreduced);
            let r = (want_exact_r && k.bits() <= EXACT_CAP_BITS).then(|| reduce(num_unreduced, den_unreduced));
            Next::Exact { k, r, rf }
        }
        _ => {
            let qf = q.to_f64();
            let ln_k = phi.ln() + ((1.0 + qf) / v.f - qf).ln();
            Next::Log { ln_k, rf: 1.0 / v.f }
        }
    }
}

/// Streaming sampler over one chain; holds the current digit `B_n`.
pub struct Stepper<'a> {
    model: &'a ModelSpec,
    opts: SamplerOptions,
    rng: ChaCha8Rng,
    q_int: Option<u128>,
    q_const: Option<QValue>,
    cur: Digit,
    index: usize,
    last_v: Option<Dyadic>,
}

/// Output of one transition `B_n -> B_{n+1}`: `R_n` in float and, in exact
/// mode, as a rational.
pub struct StepOut {
    pub r: f64,
    pub r_exact: Option<Rational>,
}

impl<'a> Stepper<'a> {
    /// Draws `B_1` according to the model's initializer.
    pub fn new(model: &'a ModelSpec, key: RngStreamKey, opts: SamplerOptions) -> Result<Self> {
        check_bits(opts.v_bits)?;
        let mut rng = key.rng();
        let mut last_v = None;
        let cur = match model.b1 {
            B1Init::Fixed(h) => Digit::Small(h),
            B1Init::Default => {
                let v = draw_v(&mut rng, opts.v_bits, model.f.at(0));
                last_v = Some(v.dy);
                match next_digit(&PhiValue::Int(1), Some(0), &QValue::Exact(Rational::zero()), &v, false) {
                    Next::Small { k, .. } => Digit::from_u128(k),
                    Next::Exact { k, .. } => Digit::from_bigint(k),
                    Next::Log { ln_k, .. } => Digit::Log(ln_k),
                }
            }
        };
        let mut s = Stepper {
            model,
            opts,
            rng,
            q_int: model.q.int_value(),
            q_const: match &model.q {
                QSpec::Constant { value } => Some(QValue::Exact(value.clone())),
                QSpec::LastDigitReciprocal { .. } => None,
            },
            cur,
            index: 1,
            last_v,
        };
        let first = std::mem::replace(&mut s.cur, Digit::Small(0));
        s.cur = s.settle(first)?;
        Ok(s)
    }

    fn settle(&self, d: Digit) -> Result<Digit> {
        let bits = d.bits();
        match (self.opts.mode, &d) {
            (Mode::Fast, Digit::Big(_)) if bits > LOG_THRESHOLD_BITS => Ok(Digit::Log(d.ln())),
            (Mode::Exact, _) if bits > EXACT_CAP_BITS => Err(Error::CappedTrajectory {
                prefix: Box::new(Trajectory {
                    model_name: self.model.name.clone(),
                    key: RngStreamKey::new(0, 0),
                    mode: Mode::Exact,
                    b: vec![],
                    r: RSeries::Exact(vec![]),
                }),
                cap_bits: EXACT_CAP_BITS,
            }),
            _ => Ok(d),
        }
    }

    pub fn current(&self) -> &Digit {
        &self.cur
    }

    /// Index `n` of the current digit `B_n`.
    pub fn index(&self) -> usize {
        self.index
    }

    /// The dyadic `V` behind the most recent digit.
    pub fn last_v(&self) -> Option<Dyadic> {
        self.last_v
    }

    fn q_value(&self) -> Cow<'_, QValue> {
        match &self.q_const {
            Some(q) => Cow::Borrowed(q),
            None => Cow::Owned(self.model.q.eval(&self.cur)),
        }
    }

    /// `1 / (phi(B_n) (1 + Q_n))` for the current digit.
    pub fn inv_weight(&self) -> f64 {
        let phi = self.model.phi.eval_digit(&self.cur);
        if let (PhiValue::Int(a), Some(q)) = (&phi, self.q_int) {
            return 1.0 / (*a as f64 * (1.0 + q as f64));
        }
        let q = self.q_value();
        match (phi.to_rational(), q.as_ref()) {
            (Some(p), QValue::Exact(q)) => quotient_f64(&(p.denom() * q.denom()), &(p.numer() * (q.denom() + q.numer()))),
            _ => (-(phi.ln()) - (1.0 + q.to_f64()).ln()).exp(),
        }
    }

    /// Draws `B_{n+1}` and returns `R_n`.
    pub fn step(&mut self) -> Result<StepOut> {
        let phi = self.model.phi.eval_digit(&self.cur);
        let f = self.model.f.at(self.index);
        let v = draw_v(&mut self.rng, self.opts.v_bits, f);
        self.last_v = Some(v.dy);
        let q = self.q_value();
        let exact = self.opts.mode == Mode::Exact;
        let (digit, out) = match next_digit(&phi, self.q_int, &q, &v, exact) {
            Next::Small { k, rf, num, den } => {
                let r_exact = exact.then(|| reduce(big_from_u128(num), big_from_u128(den)));
                (Digit::from_u128(k), StepOut { r: rf, r_exact })
            }
            Next::Exact { k, r, rf } => {
                if exact && r.is_none() {
                    // only reachable past the exact cap; settle reports it
                    self.settle(Digit::from_bigint(k))?;
                    return Err(Error::Internal("exact ratio missing below the cap".into()));
                }
                (Digit::from_bigint(k), StepOut { r: rf, r_exact: r })
            }
            Next::Log { ln_k, rf } => {
                if exact {
                    return Err(Error::Internal("log-form digit in exact mode".into()));
                }
                (Digit::Log(ln_k), StepOut { r: rf, r_exact: None })
            }
        };
        self.cur = self.settle(digit)?;
        self.index += 1;
        Ok(out)
    }
}

/// Samples `B_1..B_n` and `R_1..R_{n-1}` with 64-bit uniform draws.
pub fn sample_trajectory(model: &ModelSpec, n: usize, key: RngStreamKey, mode: Mode) -> Result<Trajectory> {
    sample_trajectory_with(model, n, key, SamplerOptions::new(mode))
}

pub fn sample_trajectory_with(
    model: &ModelSpec,
    n: usize,
    key: RngStreamKey,
    opts: SamplerOptions,
) -> Result<Trajectory> {
    if n < 2 {
        return Err(Error::domain("trajectory length must be at least 2"));
    }
    let mut traj = Trajectory {
        model_name: model.name.clone(),
        key,
        mode: opts.mode,
        b: Vec::with_capacity(n),
        r: match opts.mode {
            Mode::Exact => RSeries::Exact(Vec::with_capacity(n - 1)),
            Mode::Fast => RSeries::Fast(Vec::with_capacity(n - 1)),
        },
    };
    let mut st = match Stepper::new(model, key, opts) {
        Ok(s) => s,
        Err(e) => return Err(attach_prefix(e, traj)),
    };
    traj.b.push(st.current().clone());
    for _ in 1..n {
        match st.step() {
            Ok(out) => {
                match (&mut traj.r, out.r_exact) {
                    (RSeries::Exact(v), Some(r)) => v.push(r),
                    (RSeries::Fast(v), _) => v.push(out.r),
                    (RSeries::Exact(_), None) => return Err(Error::Internal("missing exact ratio".into())),
                }
                traj.b.push(st.current().clone());
            }
            Err(e) => return Err(attach_prefix(e, traj)),
        }
    }
    Ok(traj)
}

fn attach_prefix(e: Error, traj: Trajectory) -> Error {
    match e {
        Error::CappedTrajectory { cap_bits, .. } => Error::CappedTrajectory {
            prefix: Box::new(traj),
            cap_bits,
        },
        other => other,
    }
}

/// Independent oracle for the presets: expands a uniform 128-bit dyadic `x`
/// and bridges its digits with `B = d - 1`.
pub fn sample_x_expansion(scheme: Scheme, key: RngStreamKey, n: usize) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::domain("trajectory length must be positive"));
    }
    let mut rng = key.rng();
    let x = uniform_dyadic(&mut rng, 128).to_rational();
    let seq = expand(&x, scheme, n)?;
    if seq.digits.len() < n {
        return Err(Error::ShortTrajectory {
            got: seq.digits.len(),
            wanted: n,
        });
    }
    let b = to_framework_digits(&seq)?;
    let model = ModelSpec::by_name(scheme.name())?;
    let r = b
        .windows(2)
        .map(|w| Rational::from_integer(w[1].clone()) / model.phi.eval(&w[0]))
        .collect();
    Ok(Trajectory {
        model_name: scheme.name().to_string(),
        key,
        mode: Mode::Exact,
        b: b.into_iter().map(Digit::from_bigint).collect(),
        r: RSeries::Exact(r),
    })
}

/// First digit of [`sample_x_expansion`] and the digit after it, without
/// building a trajectory.
pub fn expansion_pair(scheme: Scheme, key: RngStreamKey) -> Result<(u64, u64)> {
    let t = sample_x_expansion(scheme, key, 2)?;
    let get = |d: &Digit| match d {
        Digit::Small(v) => *v,
        _ => u64::MAX,
    };
    Ok((get(&t.b[0]), get(&t.b[1])))
}

/// `R` values as f64 for `j = 1..=n-1` regardless of mode.
pub fn ratios_f64(t: &Trajectory) -> Vec<f64> {
    t.r.to_f64_vec()
}

/// Digit as `u64`, saturating for digits that do not fit.
pub fn digit_u64(d: &Digit) -> u64 {
    match d {
        Digit::Small(v) => *v,
        Digit::Big(b) => b.to_u64().unwrap_or(u64::MAX),
        Digit::Log(_) => u64::MAX,
    }
}
