//! Weight schemes, truncation, the weighted-sum statistics of the weak and
//! strong laws, hypothesis validators and convergence diagnostics.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{IidDigitLaw, YModel};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, HEURISTIC_LABEL};
use crate::rng::RngStreamKey;
use crate::sampler::{SamplerOptions, Stepper, Trajectory};
use crate::stats::{wilson, Moments};

/// Stream namespace for auxiliary Monte-Carlo centering replications.
pub const CENTERING_NAMESPACE: u64 = 0xC3;

/// `n^s (ln n)^r`, with the convention that `(ln n)^0 = 1` at `n = 1`.
fn pow_log(n: f64, s: f64, r: f64) -> f64 {
    let lp = if r == 0.0 { 1.0 } else { n.ln().powf(r) };
    n.powf(s) * lp
}

/// `a_j = j^{-u} (ln j)^v` and `b_n = n^s (ln n)^r` with exponent `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub u: f64,
    pub v: f64,
    pub s: f64,
    pub r: f64,
    pub p: f64,
    /// First summation index. At least 2 whenever a log factor would vanish
    /// at `j = 1`; 1 is allowed for pure powers.
    pub j0: usize,
}

impl WeightScheme {
    pub fn new(u: f64, v: f64, s: f64, r: f64, p: f64, j0: usize) -> Result<Self> {
        let w = WeightScheme { u, v, s, r, p, j0 };
        w.validate()?;
        Ok(w)
    }

    /// The strong-law instance `a_j = (ln j)^{beta-p} / j`, `b_j = (ln j)^beta`.
    pub fn strong_law(beta: f64, p: f64) -> Result<Self> {
        Self::new(1.0, beta - p, 0.0, beta, p, 2)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("u", self.u), ("v", self.v), ("s", self.s), ("r", self.r), ("p", self.p)] {
            if !x.is_finite() {
                return Err(Error::config(format!("weight parameter {name} must be finite")));
            }
        }
        if self.p < 1.0 {
            return Err(Error::config(format!("p must be >= 1, got {}", self.p)));
        }
        if self.j0 == 0 || (self.j0 < 2 && self.v != 0.0) {
            return Err(Error::config("start index must be >= 2 when a_j carries a log factor (>= 1 otherwise)"));
        }
        if self.nondecreasing_from().is_none() {
            return Err(Error::config("b_n is eventually decreasing"));
        }
        Ok(())
    }

    pub fn a(&self, j: usize) -> f64 {
        pow_log(j as f64, -self.u, self.v)
    }

    pub fn b(&self, n: usize) -> f64 {
        pow_log(n as f64, self.s, self.r)
    }

    /// `b_n^p`.
    pub fn b_pow(&self, n: usize) -> f64 {
        self.b(n).powf(self.p)
    }

    /// First `n` beyond which `b_n` is nondecreasing, if any.
    pub fn nondecreasing_from(&self) -> Option<u64> {
        // d/dn ln b_n = (s + r / ln n) / n
        let (s, r) = (self.s, self.r);
        if s > 0.0 && r >= 0.0 || s == 0.0 && r >= 0.0 {
            Some(2)
        } else if s > 0.0 {
            Some(((-r / s).exp().ceil() as u64).max(2))
        } else {
            None
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "a_j = j^-{} log^{} j, b_n = n^{} log^{} n, p = {}, j from {}",
            self.u, self.v, self.s, self.r, self.p, self.j0
        )
    }
}

/// `rho(n) = n^e (ln n)^l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoFamily {
    pub e: f64,
    pub l: f64,
}

impl RhoFamily {
    pub fn identity() -> Self {
        RhoFamily { e: 1.0, l: 0.0 }
    }

    pub fn eval(&self, n: usize) -> f64 {
        pow_log(n as f64, self.e, self.l)
    }

    /// Closed-form test of `sum 1/rho(n)^2 < inf`.
    pub fn summable(&self) -> bool {
        self.e > 0.5 || (self.e == 0.5 && self.l > 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoCheck {
    pub partial_sum: f64,
    /// Contribution of the last decade `(N/10, N]`.
    pub last_decade: f64,
    pub closed_form_summable: bool,
    pub pass: bool,
    pub label: String,
}

/// Partial sums of `1/rho(n)^2` from `n = 2` to `horizon`; passes when the
/// last decade adds less than `1e-2` of the total and the closed-form test
/// agrees.
pub fn check_rho(rho: &RhoFamily, horizon: usize) -> Result<RhoCheck> {
    if horizon < 1000 {
        return Err(Error::config("rho check needs a horizon of at least 1000"));
    }
    let mut total = 0.0;
    let mut last = 0.0;
    for n in 2..=horizon {
        let t = rho.eval(n).powi(-2);
        total += t;
        if n > horizon / 10 {
            last += t;
        }
    }
    let ok = last < 1e-2 * total;
    Ok(RhoCheck {
        partial_sum: total,
        last_decade: last,
        closed_form_summable: rho.summable(),
        pass: ok && rho.summable(),
        label: HEURISTIC_LABEL.to_string(),
    })
}

/// `c_{nj} = scale * n^{-n_exp} (ln n)^{-n_log_exp} j^{-j_exp}` for
/// `1 <= j <= m_n`, `m_n = floor(n^m_exp)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangularArray {
    pub scale: f64,
    pub n_exp: f64,
    pub n_log_exp: f64,
    pub j_exp: f64,
    pub m_exp: f64,
    pub description: String,
}

impl TriangularArray {
    pub fn new(scale: f64, n_exp: f64, n_log_exp: f64, j_exp: f64, m_exp: f64, horizon: usize) -> Result<Self> {
        let arr = TriangularArray {
            scale,
            n_exp,
            n_log_exp,
            j_exp,
            m_exp,
            description: format!(
                "c_nj = {scale} n^-{n_exp} log^-{n_log_exp} n j^-{j_exp}, m_n = n^{m_exp}"
            ),
        };
        let worst = arr.max_abs(horizon)?;
        if worst > 1.0 {
            return Err(Error::Hypothesis(format!("|c_nj| reaches {worst} > 1 below n = {horizon}")));
        }
        Ok(arr)
    }

    pub fn m(&self, n: usize) -> usize {
        ((n as f64).powf(self.m_exp) + 1e-9).floor() as usize
    }

    pub fn c(&self, n: usize, j: usize) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        self.scale * pow_log(n as f64, -self.n_exp, -self.n_log_exp) * (j as f64).powf(-self.j_exp)
    }

    /// `max |c_{nj}|` over `2 <= n <= horizon`; `c` is monotone in `j`, so
    /// only the ends of each row are inspected.
    pub fn max_abs(&self, horizon: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for n in 2..=horizon {
            let m = self.m(n);
            if m == 0 {
                continue;
            }
            let v = self.c(n, 1).abs().max(self.c(n, m).abs());
            if !v.is_finite() {
                return Err(Error::config(format!("c_nj not finite at n = {n}")));
            }
            worst = worst.max(v);
        }
        Ok(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremId {
    Lemma3,
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    Thm5,
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemma3" => Ok(TheoremId::Lemma3),
            "thm1" => Ok(TheoremId::Thm1),
            "thm2" => Ok(TheoremId::Thm2),
            "thm3" => Ok(TheoremId::Thm3),
            "thm4" => Ok(TheoremId::Thm4),
            "thm5" => Ok(TheoremId::Thm5),
            other => Err(Error::config(format!("unknown theorem id {other:?}"))),
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TheoremId::Lemma3 => "lemma3",
            TheoremId::Thm1 => "thm1",
            TheoremId::Thm2 => "thm2",
            TheoremId::Thm3 => "thm3",
            TheoremId::Thm4 => "thm4",
            TheoremId::Thm5 => "thm5",
        };
        f.write_str(s)
    }
}

/// `min(r, cap)`.
pub fn truncate_r(r: f64, cap: f64) -> f64 {
    r.min(cap)
}

/// Read access to `R_1, R_2, ...`.
pub trait Ratios {
    /// Number of available ratios.
    fn len(&self) -> usize;
    /// `R_j`, `j >= 1`.
    fn ratio(&self, j: usize) -> f64;
}

impl Ratios for Trajectory {
    fn len(&self) -> usize {
        self.r.len()
    }

    fn ratio(&self, j: usize) -> f64 {
        self.r_at(j)
    }
}

impl Ratios for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn ratio(&self, j: usize) -> f64 {
        self[j - 1]
    }
}

impl Ratios for Vec<f64> {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn ratio(&self, j: usize) -> f64 {
        self[j - 1]
    }
}

fn check_len<R: Ratios + ?Sized>(traj: &R, n: usize, j0: usize) -> Result<()> {
    if n == 0 || n < j0 {
        return Err(Error::domain(format!("n = {n} leaves an empty sum (start index {j0})")));
    }
    if traj.len() < n {
        return Err(Error::domain(format!("need R_1..R_{n}, trajectory has {}", traj.len())));
    }
    Ok(())
}

fn centered_sum<R: Ratios + ?Sized>(traj: &R, w: &WeightScheme, n: usize, centering: &[f64]) -> Result<f64> {
    check_len(traj, n, w.j0)?;
    if centering.len() < n {
        return Err(Error::config(format!("centering has {} values, need {n}", centering.len())));
    }
    Ok((w.j0..=n).map(|j| w.a(j) * (traj.ratio(j) - centering[j - 1])).sum())
}

/// `b_n^{-p} sum_{j=j0}^n a_j (R_j - E R_{nj})`; `centering[j-1]` holds
/// `E R_{nj}` for this `n`.
pub fn stat_thm1<R: Ratios + ?Sized>(traj: &R, w: &WeightScheme, n: usize, centering: &[f64]) -> Result<f64> {
    Ok(centered_sum(traj, w, n, centering)? / w.b_pow(n))
}

/// `b_n^{-p} sum_{j=j0}^n a_j R_j`.
pub fn stat_thm2<R: Ratios + ?Sized>(traj: &R, w: &WeightScheme, n: usize) -> Result<f64> {
    check_len(traj, n, w.j0)?;
    let s: f64 = (w.j0..=n).map(|j| w.a(j) * traj.ratio(j)).sum();
    Ok(s / w.b_pow(n))
}

/// `b_n^{-1} sum_{j=j0}^n a_j (R_j - E R_{nj})`.
pub fn stat_thm3<R: Ratios + ?Sized>(traj: &R, w: &WeightScheme, n: usize, centering: &[f64]) -> Result<f64> {
    Ok(centered_sum(traj, w, n, centering)? / w.b(n))
}

/// `sum_{j=1}^{m_n} c_{nj} (R_j - E(R_j I(|c_{nj} R_j| <= 1)))`;
/// `centering[j-1]` holds the expectation for this `n`.
pub fn stat_thm4<R: Ratios + ?Sized>(traj: &R, arr: &TriangularArray, n: usize, centering: &[f64]) -> Result<f64> {
    let m = arr.m(n);
    if m == 0 {
        return Ok(0.0);
    }
    check_len(traj, m, 1)?;
    if centering.len() < m {
        return Err(Error::config(format!("centering has {} values, need {m}", centering.len())));
    }
    let mut s = 0.0;
    for j in 1..=m {
        let c = arr.c(n, j);
        if c.abs() > 1.0 {
            return Err(Error::Hypothesis(format!("|c_({n},{j})| = {} > 1", c.abs())));
        }
        s += c * (traj.ratio(j) - centering[j - 1]);
    }
    Ok(s)
}

fn check_thm5(beta: f64, p: f64) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::Hypothesis(format!("beta must be > 0, got {beta}")));
    }
    if !(p >= 2.0) {
        return Err(Error::Hypothesis(format!("p must be >= 2, got {p}")));
    }
    Ok(())
}

/// `(rho(n) ln^beta n)^{-1} sum_{j=2}^n ln^{beta-p} j / j * R_j`.
pub fn stat_thm5<R: Ratios + ?Sized>(traj: &R, beta: f64, p: f64, rho: &RhoFamily, n: usize) -> Result<f64> {
    check_thm5(beta, p)?;
    check_len(traj, n, 2)?;
    let s: f64 = (2..=n)
        .map(|j| (j as f64).ln().powf(beta - p) / j as f64 * traj.ratio(j))
        .sum();
    Ok(s / (rho.eval(n) * (n as f64).ln().powf(beta)))
}

/// Exact centering `E R_{nj} = E min(R_j, b_n/a_j)` for models with i.i.d.
/// ratios.
pub fn iid_truncation_centering(law: &IidDigitLaw, w: &WeightScheme, n: usize) -> Vec<f64> {
    let bn = w.b(n);
    (1..=n).map(|j| law.trunc_mean(bn / w.a(j))).collect()
}

/// Exact centering `E(R_j I(|c_{nj} R_j| <= 1))` for i.i.d. ratios.
pub fn iid_array_centering(law: &IidDigitLaw, arr: &TriangularArray, n: usize) -> Vec<f64> {
    (1..=arr.m(n))
        .map(|j| {
            let c = arr.c(n, j).abs();
            if c == 0.0 {
                law.lower_mean(f64::INFINITY)
            } else {
                law.lower_mean(1.0 / c)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Hypothesis validators

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionTrend {
    pub name: String,
    pub n: Vec<u64>,
    pub values: Vec<f64>,
    pub monotone_tail: bool,
    pub final_value: f64,
    pub rule: String,
    pub pass: bool,
    /// Asymptotic order from the closed form, when the weights allow it.
    pub rate: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub theorem: TheoremId,
    pub conditions: Vec<ConditionTrend>,
    pub pass: bool,
    pub label: String,
}

/// Weights handed to [`validate_weights`].
#[derive(Clone, Copy, Debug)]
pub enum Weights<'a> {
    Scheme(&'a WeightScheme),
    Array(&'a TriangularArray),
    StrongLaw { beta: f64, p: f64, rho: &'a RhoFamily },
}

/// Log-spaced integer grid from `lo` to `hi` inclusive.
pub fn log_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let (a, b) = ((lo as f64).log10(), (hi as f64).log10());
    let steps = ((b - a) * per_decade as f64).round().max(1.0) as usize;
    let mut g: Vec<u64> = (0..=steps)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / steps as f64).round() as u64)
        .collect();
    g.dedup();
    if let Some(last) = g.last_mut() {
        *last = hi;
    }
    g
}

/// Order `n^a ln^b n` of a sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Order {
    n: f64,
    log: f64,
    loglog: bool,
}

impl Order {
    fn constant() -> Self {
        Order { n: 0.0, log: 0.0, loglog: false }
    }

    /// `sum_{j<=n} j^{-x} ln^y j`.
    fn sum_of(x: f64, y: f64) -> Self {
        if x < 1.0 {
            Order { n: 1.0 - x, log: y, loglog: false }
        } else if x == 1.0 && y > -1.0 {
            Order { n: 0.0, log: y + 1.0, loglog: false }
        } else if x == 1.0 && y == -1.0 {
            Order { n: 0.0, log: 0.0, loglog: true }
        } else {
            Order::constant()
        }
    }

    fn times(self, n: f64, log: f64) -> Self {
        Order { n: self.n + n, log: self.log + log, loglog: self.loglog }
    }

    fn to_zero(self) -> bool {
        self.n < 0.0 || (self.n == 0.0 && self.log < 0.0)
    }

    fn bounded(self) -> bool {
        self.to_zero() || (self.n == 0.0 && self.log == 0.0 && !self.loglog)
    }

    fn describe(self) -> String {
        let mut s = format!("~ n^{} log^{} n", fmt_num(self.n), fmt_num(self.log));
        if self.loglog {
            s.push_str(" log log n");
        }
        let verdict = if self.to_zero() {
            "-> 0"
        } else if self.bounded() {
            "bounded"
        } else {
            "diverges"
        };
        format!("{s} ({verdict})")
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn decreasing_trend(name: &str, n: Vec<u64>, values: Vec<f64>, rate: Option<String>) -> ConditionTrend {
    let last_n = *n.last().unwrap_or(&1) as f64;
    let cut = last_n / 10f64.sqrt();
    let tail: Vec<f64> = n
        .iter()
        .zip(&values)
        .filter(|(k, _)| **k as f64 >= cut)
        .map(|(_, v)| *v)
        .collect();
    let monotone_tail = tail.len() >= 2 && tail.windows(2).all(|w| w[1] < w[0]);
    let first = values.first().copied().unwrap_or(f64::NAN);
    let final_value = values.last().copied().unwrap_or(f64::NAN);
    let pass = monotone_tail && final_value < 0.5 * first;
    ConditionTrend {
        name: name.to_string(),
        n,
        values,
        monotone_tail,
        final_value,
        rule: "strictly decreasing over the last half-decade and final value below 0.5 x first grid value".into(),
        pass,
        rate,
    }
}

fn bounded_trend(name: &str, n: Vec<u64>, values: Vec<f64>, rate: Option<String>) -> ConditionTrend {
    let half = values.len() / 2;
    let first_max = values[..half.max(1)].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last_max = values[half..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let final_value = values.last().copied().unwrap_or(f64::NAN);
    ConditionTrend {
        name: name.to_string(),
        n,
        values,
        monotone_tail: last_max <= first_max,
        final_value,
        rule: "max over the second half of the grid at most 1.1 x max over the first half".into(),
        pass: final_value.is_finite() && last_max <= 1.1 * first_max,
        rate,
    }
}

/// Finite-horizon trend checks of the asymptotic weight conditions of each
/// theorem. `y` supplies `H` for the triangular-array conditions.
pub fn validate_weights(
    w: Weights<'_>,
    alpha: f64,
    theorem: TheoremId,
    horizon: u64,
    grid: Option<&[u64]>,
    y: Option<&YModel>,
) -> Result<TrendReport> {
    if horizon < 1000 {
        return Err(Error::config("validation horizon must be at least 1000"));
    }
    let grid: Vec<u64> = match grid {
        Some(g) => {
            if g.is_empty() || g.windows(2).any(|w| w[1] <= w[0]) || g[0] < 2 {
                return Err(Error::config("validation grid must be increasing and start at 2 or more"));
            }
            g.to_vec()
        }
        None => log_grid(10, horizon, 16),
    };
    let mut conditions = Vec::new();
    match (theorem, w) {
        (TheoremId::Lemma3 | TheoremId::Thm1 | TheoremId::Thm2 | TheoremId::Thm3, Weights::Scheme(ws)) => {
            let alpha = if theorem == TheoremId::Thm2 { 1.0 } else { alpha };
            conditions.push(sum_condition(ws, alpha, &grid));
            match theorem {
                TheoremId::Thm1 | TheoremId::Thm2 => {
                    if ws.p <= 1.0 {
                        return Err(Error::Hypothesis(format!("p must exceed 1, got {}", ws.p)));
                    }
                    let vals = grid.iter().map(|&n| n as f64 / ws.b(n as usize).powf(ws.p - 1.0)).collect();
                    let rate = Order { n: 1.0, log: 0.0, loglog: false }.times(-ws.s * (ws.p - 1.0), -ws.r * (ws.p - 1.0));
                    conditions.push(decreasing_trend("n / b_n^(p-1)", grid.clone(), vals, Some(rate.describe())));
                }
                TheoremId::Thm3 => {
                    let e = alpha.min(1.0);
                    let mut cum = 0.0;
                    let mut vals = Vec::with_capacity(grid.len());
                    let mut j = ws.j0;
                    for &n in &grid {
                        while j <= n as usize {
                            cum += ws.a(j).powf(e);
                            j += 1;
                        }
                        vals.push(n as f64 * cum / ws.b(n as usize).powf(e));
                    }
                    let rate = Order::sum_of(ws.u * e, ws.v * e).times(1.0 - ws.s * e, -ws.r * e);
                    conditions.push(decreasing_trend("n sum (a_j/b_n)^(alpha^1)", grid.clone(), vals, Some(rate.describe())));
                }
                _ => {}
            }
        }
        (TheoremId::Thm4, Weights::Array(arr)) => {
            let y = y.ok_or_else(|| Error::config("the triangular-array conditions need the model's F"))?;
            let mut a_vals = Vec::new();
            let mut b_vals = Vec::new();
            let mut c_vals = Vec::new();
            for &n in &grid {
                let n = n as usize;
                let m = arr.m(n);
                let (mut mx, mut sq, mut h) = (0.0f64, 0.0, 0.0);
                for j in 1..=m {
                    let c = arr.c(n, j).abs();
                    mx = mx.max(c);
                    sq += c * c;
                    if c > 0.0 {
                        h += c * y.h(1.0 / c)?;
                    }
                    if arr.j_exp == 0.0 {
                        // row is constant in j
                        let k = m as f64;
                        sq *= k;
                        h *= k;
                        break;
                    }
                }
                a_vals.push(mx);
                b_vals.push(m as f64 * sq);
                c_vals.push(m as f64 * h);
            }
            let a_pass = a_vals.iter().all(|&v| v <= 1.0);
            let final_a = *a_vals.last().unwrap_or(&0.0);
            conditions.push(ConditionTrend {
                name: "(a) max |c_nj|".into(),
                n: grid.clone(),
                values: a_vals,
                monotone_tail: true,
                final_value: final_a,
                rule: "at most 1 at every grid point".into(),
                pass: a_pass,
                rate: None,
            });
            let all_zero = b_vals.iter().all(|&v| v == 0.0);
            let mut b = decreasing_trend("(b) m_n sum c_nj^2", grid.clone(), b_vals, None);
            if all_zero {
                b.pass = true;
                b.rule.push_str(" (identically zero passes)");
            }
            conditions.push(b);
            conditions.push(bounded_trend("(c) m_n sum |c_nj| H(1/|c_nj|)", grid.clone(), c_vals, None));
        }
        (TheoremId::Thm5, Weights::StrongLaw { beta, p, rho }) => {
            check_thm5(beta, p)?;
            let rc = check_rho(rho, horizon as usize)?;
            conditions.push(ConditionTrend {
                name: "sum 1/rho(n)^2 partial sums".into(),
                n: vec![horizon],
                values: vec![rc.partial_sum],
                monotone_tail: true,
                final_value: rc.last_decade,
                rule: "last decade adds < 1e-2 of the partial sum and the closed form converges".into(),
                pass: rc.pass,
                rate: Some(if rc.closed_form_summable { "summable".into() } else { "not summable".into() }),
            });
        }
        (t, _) => {
            return Err(Error::config(format!("weights do not match the shape expected by {t}")));
        }
    }
    let pass = conditions.iter().all(|c| c.pass);
    Ok(TrendReport {
        theorem,
        conditions,
        pass,
        label: HEURISTIC_LABEL.to_string(),
    })
}

fn sum_condition(ws: &WeightScheme, alpha: f64, grid: &[u64]) -> ConditionTrend {
    let mut cum = 0.0;
    let mut j = ws.j0;
    let mut vals = Vec::with_capacity(grid.len());
    for &n in grid {
        while j <= n as usize {
            cum += ws.a(j).powf(alpha);
            j += 1;
        }
        vals.push(cum / ws.b(n as usize).powf(alpha));
    }
    let rate = Order::sum_of(ws.u * alpha, ws.v * alpha).times(-ws.s * alpha, -ws.r * alpha);
    decreasing_trend("sum a_j^alpha / b_n^alpha", grid.to_vec(), vals, Some(rate.describe()))
}

// ---------------------------------------------------------------------------
// Series runs and diagnostics

/// Which statistic a series tracks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatSpec {
    Thm1 { w: WeightScheme },
    Thm2 { w: WeightScheme },
    Thm3 { w: WeightScheme },
    Thm4 { arr: TriangularArray },
    Thm5 { beta: f64, p: f64, rho: RhoFamily },
}

impl StatSpec {
    pub fn theorem(&self) -> TheoremId {
        match self {
            StatSpec::Thm1 { .. } => TheoremId::Thm1,
            StatSpec::Thm2 { .. } => TheoremId::Thm2,
            StatSpec::Thm3 { .. } => TheoremId::Thm3,
            StatSpec::Thm4 { .. } => TheoremId::Thm4,
            StatSpec::Thm5 { .. } => TheoremId::Thm5,
        }
    }

    /// Trajectory length needed to evaluate the statistic at `n`.
    fn needed(&self, n: usize) -> usize {
        match self {
            StatSpec::Thm4 { arr } => arr.m(n),
            _ => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CenteringProvenance {
    None,
    Exact,
    MonteCarlo { replications: u64, max_se: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticSeries {
    pub theorem: TheoremId,
    pub n_grid: Vec<u64>,
    /// `values[rep][g]`.
    pub values: Vec<Vec<f64>>,
    pub epsilons: Vec<f64>,
    pub centering: CenteringProvenance,
    /// Standard error of the centering term on the statistic scale, per
    /// grid point (zero unless Monte-Carlo centering is used).
    pub centering_se: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SeriesConfig {
    pub spec: StatSpec,
    pub n_grid: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    pub opts: SamplerOptions,
    pub epsilons: Vec<f64>,
    /// Auxiliary replications for Monte-Carlo centering.
    pub centering_replications: u64,
}

/// Per-grid-point linear functionals of one trajectory.
struct Plan<'a> {
    spec: &'a StatSpec,
    grid: Vec<usize>,
    max_len: usize,
}

impl Plan<'_> {
    /// Weight of `R_j` in the raw sum at grid point `g`.
    fn weight(&self, g: usize, j: usize) -> f64 {
        let n = self.grid[g];
        match self.spec {
            StatSpec::Thm1 { w } | StatSpec::Thm2 { w } | StatSpec::Thm3 { w } => {
                if j >= w.j0 && j <= n {
                    w.a(j)
                } else {
                    0.0
                }
            }
            StatSpec::Thm4 { arr } => {
                if j <= arr.m(n) {
                    arr.c(n, j)
                } else {
                    0.0
                }
            }
            StatSpec::Thm5 { beta, p, .. } => {
                if j >= 2 && j <= n {
                    (j as f64).ln().powf(beta - p) / j as f64
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether the weight at `g` depends on `n` only through the range.
    fn cumulative(&self) -> bool {
        !matches!(self.spec, StatSpec::Thm4 { .. })
    }

    /// Contribution of `R_j = r` to the centering term at `g`.
    fn centering_term(&self, g: usize, j: usize, r: f64) -> f64 {
        let n = self.grid[g];
        match self.spec {
            StatSpec::Thm1 { w } | StatSpec::Thm3 { w } => {
                if j >= w.j0 && j <= n {
                    w.a(j) * r.min(w.b(n) / w.a(j))
                } else {
                    0.0
                }
            }
            StatSpec::Thm4 { arr } => {
                if j > arr.m(n) {
                    return 0.0;
                }
                let c = arr.c(n, j);
                if (c * r).abs() <= 1.0 {
                    c * r
                } else {
                    0.0
                }
            }
            StatSpec::Thm2 { .. } | StatSpec::Thm5 { .. } => 0.0,
        }
    }

    fn needs_centering(&self) -> bool {
        matches!(self.spec, StatSpec::Thm1 { .. } | StatSpec::Thm3 { .. } | StatSpec::Thm4 { .. })
    }

    fn norm(&self, g: usize) -> f64 {
        let n = self.grid[g];
        match self.spec {
            StatSpec::Thm1 { w } | StatSpec::Thm2 { w } => w.b_pow(n),
            StatSpec::Thm3 { w } => w.b(n),
            StatSpec::Thm4 { .. } => 1.0,
            StatSpec::Thm5 { beta, rho, .. } => rho.eval(n) * (n as f64).ln().powf(*beta),
        }
    }

    fn exact_centering(&self, g: usize, law: &IidDigitLaw) -> f64 {
        let n = self.grid[g];
        match self.spec {
            StatSpec::Thm1 { w } | StatSpec::Thm3 { w } => {
                let bn = w.b(n);
                (w.j0..=n).map(|j| w.a(j) * law.trunc_mean(bn / w.a(j))).sum()
            }
            StatSpec::Thm4 { arr } => {
                let c = iid_array_centering(law, arr, n);
                c.iter().enumerate().map(|(i, e)| arr.c(n, i + 1) * e).sum()
            }
            _ => 0.0,
        }
    }

    /// Runs one trajectory, returning a value per grid point from `f`.
    fn run<F>(&self, model: &ModelSpec, key: RngStreamKey, opts: SamplerOptions, f: F) -> Result<Vec<f64>>
    where
        F: Fn(usize, usize, f64) -> f64,
    {
        let gcount = self.grid.len();
        let mut acc = vec![0.0; gcount];
        let mut st = Stepper::new(model, key, opts)?;
        if self.cumulative() {
            let mut running = 0.0;
            let mut next = 0;
            for j in 1..=self.max_len {
                let r = st.step()?.r;
                running += f(gcount - 1, j, r);
                while next < gcount && self.grid[next] == j {
                    acc[next] = running;
                    next += 1;
                }
            }
        } else {
            for j in 1..=self.max_len {
                let r = st.step()?.r;
                for (g, a) in acc.iter_mut().enumerate() {
                    *a += f(g, j, r);
                }
            }
        }
        Ok(acc)
    }
}

/// Samples `replications` independent trajectories (stream id = replication
/// index) and evaluates the statistic on the grid.
pub fn run_series(model: &ModelSpec, cfg: &SeriesConfig) -> Result<StatisticSeries> {
    if cfg.n_grid.is_empty() || cfg.n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("n grid must be non-empty and strictly increasing"));
    }
    if let StatSpec::Thm5 { beta, p, .. } = &cfg.spec {
        check_thm5(*beta, *p)?;
    }
    let grid: Vec<usize> = cfg.n_grid.iter().map(|&n| n as usize).collect();
    if grid[0] < 2 {
        return Err(Error::config("n grid must start at 2 or more"));
    }
    let spec = &cfg.spec;
    let plan = Plan {
        spec,
        max_len: grid.iter().map(|&n| spec.needed(n)).max().unwrap_or(0).max(1),
        grid: grid.clone(),
    };
    let gcount = grid.len();
    let (centering, centering_se, provenance) = if !plan.needs_centering() {
        (vec![0.0; gcount], vec![0.0; gcount], CenteringProvenance::None)
    } else if let Some(f) = model.iid_family() {
        let law = IidDigitLaw::new(f.clone());
        let c = (0..gcount).map(|g| plan.exact_centering(g, &law)).collect();
        (c, vec![0.0; gcount], CenteringProvenance::Exact)
    } else {
        let reps = cfg.centering_replications.max(2);
        let base = RngStreamKey::new(cfg.seed, 0).namespaced(CENTERING_NAMESPACE);
        let rows: Vec<Result<Vec<f64>>> = (0..reps)
            .into_par_iter()
            .map(|s| plan.run(model, base.with_stream(s), cfg.opts, |g, j, r| plan.centering_term(g, j, r)))
            .collect();
        let mut moments = vec![Moments::default(); gcount];
        for row in rows {
            for (m, v) in moments.iter_mut().zip(row?) {
                m.push(v);
            }
        }
        let c: Vec<f64> = moments.iter().map(|m| m.mean).collect();
        let se: Vec<f64> = moments.iter().enumerate().map(|(g, m)| m.se() / plan.norm(g)).collect();
        let max_se = se.iter().copied().fold(0.0, f64::max);
        (c, se, CenteringProvenance::MonteCarlo { replications: reps, max_se })
    };
    let base = RngStreamKey::new(cfg.seed, 0);
    let rows: Vec<Result<Vec<f64>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|s| {
            let raw = plan.run(model, base.with_stream(s), cfg.opts, |g, j, r| plan.weight(g, j) * r)?;
            Ok(raw
                .iter()
                .enumerate()
                .map(|(g, x)| (x - centering[g]) / plan.norm(g))
                .collect())
        })
        .collect();
    let values = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(StatisticSeries {
        theorem: spec.theorem(),
        n_grid: cfg.n_grid.clone(),
        values,
        epsilons: cfg.epsilons.clone(),
        centering: provenance,
        centering_se,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbRow {
    pub n: u64,
    pub eps: f64,
    /// Threshold actually applied (inflated by 3 SE of Monte-Carlo centering).
    pub eps_effective: f64,
    pub exceed: u64,
    pub replications: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    pub rows: Vec<ProbRow>,
    pub warning: Option<String>,
}

fn power_warning(reps: usize) -> Option<String> {
    (reps < 100).then(|| format!("only {reps} replications; at least 100 are needed for reliable exceedance rates"))
}

/// `p_hat_n(eps)`: fraction of replications with `|T_n| > eps`, with 95%
/// Wilson intervals.
pub fn prob_convergence_diag(series: &StatisticSeries, eps: &[f64]) -> ProbTable {
    let reps = series.values.len();
    let mut rows = Vec::new();
    for &e in eps {
        for (g, &n) in series.n_grid.iter().enumerate() {
            let eff = e + 3.0 * series.centering_se.get(g).copied().unwrap_or(0.0);
            let k = series.values.iter().filter(|v| v[g].abs() > eff).count() as u64;
            let (lo, hi) = wilson(k, reps as u64, 0.95);
            rows.push(ProbRow {
                n,
                eps: e,
                eps_effective: eff,
                exceed: k,
                replications: reps as u64,
                p_hat: if reps == 0 { 0.0 } else { k as f64 / reps as f64 },
                ci_lo: lo,
                ci_hi: hi,
            });
        }
    }
    ProbTable {
        rows,
        warning: power_warning(reps),
    }
}

/// Fraction of trajectories with `sup_{k >= n, k in grid} |S_k| > eps`.
pub fn as_convergence_diag(series: &StatisticSeries, eps: &[f64]) -> ProbTable {
    let reps = series.values.len();
    let gcount = series.n_grid.len();
    let tail_sup: Vec<Vec<f64>> = series
        .values
        .iter()
        .map(|v| {
            let mut s = vec![0.0; gcount];
            let mut m: f64 = 0.0;
            for g in (0..gcount).rev() {
                m = m.max(v[g].abs());
                s[g] = m;
            }
            s
        })
        .collect();
    let mut rows = Vec::new();
    for &e in eps {
        for (g, &n) in series.n_grid.iter().enumerate() {
            let eff = e + 3.0 * series.centering_se[g..].iter().copied().fold(0.0, f64::max);
            let k = tail_sup.iter().filter(|s| s[g] > eff).count() as u64;
            let (lo, hi) = wilson(k, reps as u64, 0.95);
            rows.push(ProbRow {
                n,
                eps: e,
                eps_effective: eff,
                exceed: k,
                replications: reps as u64,
                p_hat: if reps == 0 { 0.0 } else { k as f64 / reps as f64 },
                ci_lo: lo,
                ci_hi: hi,
            });
        }
    }
    ProbTable {
        rows,
        warning: power_warning(reps),
    }
}

/// `p_hat` values for one `eps`, in grid order.
pub fn p_hat_column(table: &ProbTable, eps: f64) -> Vec<f64> {
    table.rows.iter().filter(|r| r.eps == eps).map(|r| r.p_hat).collect()
}

pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistributionFamily;
    use crate::sampler::Mode;

    fn scheme(u: f64, v: f64, s: f64, r: f64, p: f64, j0: usize) -> WeightScheme {
        WeightScheme::new(u, v, s, r, p, j0).unwrap()
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate_r(7.0, 5.0), 5.0);
        assert_eq!(truncate_r(1.2, 5.0), 1.2);
        assert_eq!(truncate_r(5.0, 5.0), 5.0);
    }

    #[test]
    fn scheme_validation() {
        assert!(WeightScheme::new(1.0, 1.0, 1.0, 0.0, 2.0, 1).is_err());
        assert!(WeightScheme::new(1.0, 0.0, 1.0, 0.0, 0.5, 1).is_err());
        assert!(WeightScheme::new(1.0, 0.0, -1.0, 0.0, 1.0, 1).is_err());
        assert_eq!(scheme(1.0, 0.0, 1.0, -2.0, 1.0, 1).nondecreasing_from(), Some(8));
    }

    #[test]
    fn thm_statistics_basics() {
        let w = scheme(1.0, 0.0, 1.0, 1.0, 2.0, 2);
        let r = vec![3.0, 5.0, 2.0, 9.0];
        assert_eq!(stat_thm1(&r, &w, 4, &r).unwrap(), 0.0);
        assert_eq!(stat_thm3(&r, &w, 4, &r).unwrap(), 0.0);
        let one = scheme(0.0, 0.0, 0.0, 0.0, 1.0, 2);
        assert_eq!(stat_thm1(&r, &one, 2, &[0.0, 4.0]).unwrap(), 1.0);
        assert_eq!(stat_thm3(&r, &one, 2, &[0.0, 4.5]).unwrap(), 0.5);
        assert!(stat_thm1(&r, &w, 4, &[0.0; 3]).is_err());
        assert!(stat_thm2(&r, &w, 0).is_err());
        assert!(stat_thm2(&r, &w, 5).is_err());
    }

    #[test]
    fn thm2_harmonic_normalization() {
        // a_j = 1/j, b_n^p = H_n, R_j = 1 -> 1
        let n = 1000;
        let h: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
        let w = WeightScheme { u: 1.0, v: 0.0, s: 0.0, r: 0.0, p: 1.0, j0: 1 };
        let ones = vec![1.0; n];
        assert!((stat_thm2(&ones, &w, n).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn thm5_examples() {
        let rho = RhoFamily::identity();
        let ones = vec![1.0; 10_000];
        let direct: f64 = (2..=10_000).map(|j| 1.0 / (j as f64 * (j as f64).ln())).sum::<f64>()
            / (10_000.0 * 10_000f64.ln());
        assert!((stat_thm5(&ones, 1.0, 2.0, &rho, 10_000).unwrap() - direct).abs() < 1e-15);
        let r = vec![1.0, 7.0];
        let want = 7.0 * 2f64.ln().powi(-1) / (2.0 * 2.0 * 2f64.ln());
        assert!((stat_thm5(&r, 1.0, 2.0, &rho, 2).unwrap() - want).abs() < 1e-15);
        let rho2 = RhoFamily { e: 1.0, l: 0.0 };
        let half = stat_thm5(&r, 1.0, 2.0, &RhoFamily { e: 1.0, l: 0.0 }, 2).unwrap();
        assert_eq!(half, stat_thm5(&r, 1.0, 2.0, &rho2, 2).unwrap());
        assert!(matches!(stat_thm5(&r, 1.0, 1.5, &rho, 2), Err(Error::Hypothesis(_))));
        assert!(matches!(stat_thm5(&r, 0.0, 2.0, &rho, 2), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn thm4_zero_and_violation() {
        let zero = TriangularArray::new(0.0, 0.0, 0.0, 0.0, 1.0, 1000).unwrap();
        let r = vec![4.0; 10];
        assert_eq!(stat_thm4(&r, &zero, 10, &[0.0; 10]).unwrap(), 0.0);
        assert!(matches!(TriangularArray::new(2.0, 0.0, 0.0, 0.0, 1.0, 1000), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn validate_examples() {
        let w = scheme(1.0, 0.0, 0.0, 2.0, 1.0, 1);
        let rep = validate_weights(Weights::Scheme(&w), 1.0, TheoremId::Lemma3, 10_000, None, None).unwrap();
        let c = &rep.conditions[0];
        assert!((c.final_value - 0.1154).abs() < 5e-4, "{}", c.final_value);
        assert!(rep.pass);
        assert!(c.rate.as_deref().unwrap().contains("log^-1"));

        let w = scheme(1.0, 0.0, 1.0, 1.0, 2.0, 1);
        let rep = validate_weights(Weights::Scheme(&w), 1.0, TheoremId::Thm1, 10_000, None, None).unwrap();
        assert!((rep.conditions[1].final_value - 0.1086).abs() < 1e-4);
        assert!(rep.pass);

        let w = scheme(1.0, 0.0, 0.5, 0.0, 2.0, 1);
        let rep = validate_weights(Weights::Scheme(&w), 1.0, TheoremId::Lemma3, 10_000, None, None).unwrap();
        assert!((rep.conditions[0].final_value - 0.0979).abs() < 1e-4);
        let rep = validate_weights(Weights::Scheme(&w), 1.0, TheoremId::Thm1, 10_000, None, None).unwrap();
        assert!(!rep.pass);
        assert!(!rep.conditions[1].pass);

        assert!("thm9".parse::<TheoremId>().is_err());
        assert!(validate_weights(Weights::Scheme(&w), 1.0, TheoremId::Lemma3, 100, None, None).is_err());
    }

    #[test]
    fn validate_arrays() {
        let y = YModel::new(DistributionFamily::Uniform);
        let arr = TriangularArray::new(1.0, 2.0, 2.0, 0.0, 1.0, 10_000).unwrap();
        let grid = log_grid(100, 10_000, 8);
        let rep = validate_weights(Weights::Array(&arr), 1.0, TheoremId::Thm4, 10_000, Some(&grid), Some(&y)).unwrap();
        assert!(rep.pass, "{rep:?}");
        let y2 = YModel::new(DistributionFamily::power(2.0).unwrap());
        let arr2 = TriangularArray::new(1.0, 2.0, 0.0, 0.0, 1.0, 10_000).unwrap();
        let rep = validate_weights(Weights::Array(&arr2), 2.0, TheoremId::Thm4, 10_000, Some(&grid), Some(&y2)).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.conditions[2].values.iter().all(|&v| v <= 2.0));
    }

    #[test]
    fn rho_checks() {
        assert!(check_rho(&RhoFamily::identity(), 10_000).unwrap().pass);
        assert!(!check_rho(&RhoFamily { e: 0.5, l: 0.0 }, 10_000).unwrap().pass);
    }

    #[test]
    fn diagnostics_trivial_series() {
        let s = StatisticSeries {
            theorem: TheoremId::Thm2,
            n_grid: vec![10, 100],
            values: vec![vec![0.0, 0.0]; 100],
            epsilons: vec![0.5],
            centering: CenteringProvenance::None,
            centering_se: vec![0.0; 2],
        };
        let t = prob_convergence_diag(&s, &[0.5]);
        assert!(t.rows.iter().all(|r| r.p_hat == 0.0));
        assert!(t.warning.is_none());
        let ones = StatisticSeries { values: vec![vec![1.0, 1.0]; 50], ..s };
        let t = prob_convergence_diag(&ones, &[0.5]);
        assert!(t.rows.iter().all(|r| r.p_hat == 1.0));
        assert!(t.warning.is_some());
        let a = as_convergence_diag(&ones, &[0.5]);
        assert!(a.rows.iter().all(|r| r.p_hat == 1.0));
    }

    #[test]
    fn series_matches_direct_statistics() {
        let model = ModelSpec::luroth();
        let w = scheme(1.0, 0.0, 1.0, 1.0, 2.0, 1);
        let cfg = SeriesConfig {
            spec: StatSpec::Thm1 { w: w.clone() },
            n_grid: vec![10, 50],
            replications: 3,
            seed: 17,
            opts: SamplerOptions::new(Mode::Fast),
            epsilons: vec![0.1],
            centering_replications: 0,
        };
        let s = run_series(&model, &cfg).unwrap();
        assert_eq!(s.centering, CenteringProvenance::Exact);
        let law = IidDigitLaw::luroth();
        for rep in 0..3 {
            let t = crate::sampler::sample_trajectory(&model, 51, RngStreamKey::new(17, rep), Mode::Fast).unwrap();
            for (g, &n) in [10usize, 50].iter().enumerate() {
                let c = iid_truncation_centering(&law, &w, n);
                let want = stat_thm1(&t, &w, n, &c).unwrap();
                assert!((s.values[rep as usize][g] - want).abs() < 1e-12 * want.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn series_mc_centering_for_dependent_model() {
        let model = ModelSpec::engel();
        let w = scheme(1.0, 0.0, 1.0, 1.0, 2.0, 1);
        let cfg = SeriesConfig {
            spec: StatSpec::Thm3 { w },
            n_grid: vec![20, 40],
            replications: 10,
            seed: 3,
            opts: SamplerOptions::new(Mode::Fast),
            epsilons: vec![0.1],
            centering_replications: 50,
        };
        let s = run_series(&model, &cfg).unwrap();
        assert!(matches!(s.centering, CenteringProvenance::MonteCarlo { replications: 50, .. }));
        assert!(s.centering_se.iter().all(|&x| x > 0.0));
    }
}
