//! Known values and closed forms checked against sums and integrals computed
//! here, independently of the library's own formulas.

use num_bigint::BigInt;
use opplab_core::analytic::{harmonic, luroth_er_trunc, luroth_er_trunc_f64, power_sum, IidDigitLaw, YModel};
use opplab_core::expansion::{expand, Scheme};
use opplab_core::law::WeightScheme;
use opplab_core::model::DistributionFamily;
use opplab_core::quadrature::integrate;
use opplab_core::verify::{c_l_prime, d_l_prime};
use opplab_core::Rational;

fn digits(x: (i64, i64), scheme: Scheme) -> Vec<i64> {
    let x = Rational::new(BigInt::from(x.0), BigInt::from(x.1));
    let seq = expand(&x, scheme, 100).unwrap();
    assert!(seq.terminated);
    seq.digits.iter().map(|d| i64::try_from(d).unwrap()).collect()
}

#[test]
fn small_expansions_by_hand() {
    assert_eq!(digits((2, 5), Scheme::Sylvester), [3, 15]);
    assert_eq!(digits((2, 5), Scheme::Engel), [3, 5]);
    assert_eq!(digits((1, 2), Scheme::Luroth), [2]);
    // 1/3 + 1/(3*2*4) = 3/8
    assert_eq!(digits((3, 8), Scheme::Luroth), [3, 4]);
}

#[test]
fn lemma_constants() {
    assert!((c_l_prime(2.0, 1.0, 1.1) - 5.4).abs() < 1e-12);
    assert!((d_l_prime(1.1) - 4.3).abs() < 1e-12);
}

#[test]
fn luroth_digit_law_by_direct_summation() {
    let law = IidDigitLaw::luroth();
    let pmf = |k: u64| 1.0 / (k as f64 * (k as f64 + 1.0));
    assert!((law.tail(2.0) - 1.0 / 3.0).abs() < 1e-15);
    for c in [1.0, 2.5, 10.0, 137.3, 5000.0] {
        let m = c as u64;
        let direct_tail: f64 = 1.0 - (1..=m).map(pmf).sum::<f64>();
        let mean: f64 = (1..=m).map(|k| k as f64 * pmf(k)).sum::<f64>() + c * direct_tail;
        let second: f64 = (1..=m).map(|k| (k * k) as f64 * pmf(k)).sum::<f64>() + c * c * direct_tail;
        assert!((law.trunc_mean(c) - mean).abs() < 1e-9, "mean at {c}");
        assert!((luroth_er_trunc_f64(c).unwrap() - mean).abs() < 1e-9, "f64 mean at {c}");
        assert!((law.trunc_moment(2.0, c).unwrap() - second).abs() < 1e-6 * second, "second at {c}");
        assert!((law.trunc_moment(1.5, c).unwrap()
            - ((1..=m).map(|k| (k as f64).powf(1.5) * pmf(k)).sum::<f64>() + c.powf(1.5) * direct_tail))
            .abs()
            < 1e-8 * second);
    }
    // second truncated moment grows like 2c - ln c
    let c = 1e5;
    let second = law.trunc_moment(2.0, c).unwrap();
    assert!((second - (2.0 * c - c.ln())).abs() < 2.0, "{second}");
}

#[test]
fn exact_truncated_mean_matches_float() {
    let t = Rational::new(BigInt::from(73), BigInt::from(4));
    let exact = luroth_er_trunc(&t).unwrap();
    let approx = luroth_er_trunc_f64(73.0 / 4.0).unwrap();
    let num: f64 = exact.numer().to_string().parse().unwrap();
    let den: f64 = exact.denom().to_string().parse().unwrap();
    assert!((num / den - approx).abs() < 1e-12);
}

#[test]
fn power_sums_against_direct_summation() {
    for (m, s) in [(10.0, 1.0), (1e5, -1.0), (12345.0, -2.0), (3e4, 0.5), (777.0, 2.0)] {
        let direct: f64 = (1..=m as u64).map(|k| (k as f64).powf(s)).sum();
        assert!((power_sum(m, s) - direct).abs() < 1e-9 * direct.abs().max(1.0), "m={m} s={s}");
    }
    assert!((harmonic(1e4) - 9.787_606_036_044_348).abs() < 1e-10);
}

#[test]
fn tail_sum_proxy_value() {
    // sum_{j <= n} 1/(j ln^2 n) at n = 10^4
    let w = WeightScheme::new(1.0, 0.0, 0.0, 2.0, 1.0, 1).unwrap();
    let n = 10_000;
    let proxy: f64 = (1..=n).map(|j| w.a(j) / w.b(n)).sum();
    let direct: f64 = (1..=n).map(|j| 1.0 / j as f64).sum::<f64>() / (n as f64).ln().powi(2);
    assert!((proxy - direct).abs() < 1e-12);
    assert!((direct - 0.1154).abs() < 1e-3, "{direct}");
}

#[test]
fn dominating_law_moments_by_quadrature() {
    let families = [
        DistributionFamily::Uniform,
        DistributionFamily::Power { alpha: 2.0 },
        DistributionFamily::Power { alpha: 0.7 },
        DistributionFamily::PerturbedPower { alpha: 1.5, coeffs: [1.0, 1.0] },
    ];
    for f in families {
        let y = YModel::new(f.clone());
        for (q, t) in [(0.5, 10.0), (1.0, 2.0), (2.0, 1e3), (1.5, 50.0)] {
            // Y = 1/U: E(Y^q I(Y <= t)) = int_{1/t}^1 u^{-q} F'(u) du
            let want = integrate(|u| u.powf(-q) * f.pdf(u), 1.0 / t, 1.0).unwrap().value;
            let got = y.trunc_moment(q, t).unwrap();
            assert!((got - want).abs() < 1e-8 * (1.0 + want.abs()), "{f:?} q={q} t={t}: {got} vs {want}");
        }
        assert!((y.tail(4.0).unwrap() - f.cdf(0.25)).abs() < 1e-15);
    }
}
