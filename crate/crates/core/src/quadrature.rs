//! Adaptive Simpson quadrature with Richardson extrapolation.

use crate::error::{Error, Result};

pub const ABS_TOL: f64 = 1e-10;
pub const MAX_PANELS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    /// Sum of the per-panel error estimates.
    pub error: f64,
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// `int_a^b f` to absolute tolerance [`ABS_TOL`].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<Quad> {
    integrate_tol(f, a, b, ABS_TOL)
}

pub fn integrate_tol<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0, panels: 0 });
    }
    if b < a {
        let q = integrate_tol(f, b, a, tol)?;
        return Ok(Quad { value: -q.value, ..q });
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let mut stack = vec![Panel {
        a,
        b,
        fa,
        fm,
        fb,
        whole: simpson(a, b, fa, fm, fb),
        tol,
        depth: 0,
    }];
    let mut value = 0.0;
    let mut error = 0.0;
    let mut panels = 1usize;
    // Sum accepted panels smallest-interval-last for a deterministic order.
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let diff = left + right - p.whole;
        let est = diff.abs() / 15.0;
        if !est.is_finite() {
            return Err(Error::Numeric {
                message: format!("non-finite integrand on [{}, {}]", p.a, p.b),
                residual: f64::INFINITY,
            });
        }
        if est <= p.tol || p.depth >= 60 {
            value += left + right + diff / 15.0;
            error += est;
            continue;
        }
        panels += 1;
        if panels > MAX_PANELS {
            return Err(Error::Numeric {
                message: format!("quadrature on [{a}, {b}] exceeded {MAX_PANELS} panels"),
                residual: error + est,
            });
        }
        stack.push(Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
            tol: 0.5 * p.tol,
            depth: p.depth + 1,
        });
        stack.push(Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
            tol: 0.5 * p.tol,
            depth: p.depth + 1,
        });
    }
    if error > tol.max(1e-12 * value.abs()) * 10.0 {
        return Err(Error::Numeric {
            message: format!("quadrature on [{a}, {b}] did not reach tolerance {tol:e}"),
            residual: error,
        });
    }
    Ok(Quad { value, error, panels })
}

/// Left and right Riemann sums on `n` equal panels; for a monotone `f` they
/// bracket the integral.
pub fn monotone_bracket<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> (f64, f64) {
    let h = (b - a) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(a + h * i as f64)).collect();
    let left: f64 = vals[..n].iter().sum::<f64>() * h;
    let right: f64 = vals[1..].iter().sum::<f64>() * h;
    (left.min(right), left.max(right))
}
