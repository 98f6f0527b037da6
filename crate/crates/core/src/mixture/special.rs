//! Special functions needed by the mixture likelihood equations.

use crate::{Error, Result};

/// Lanczos g = 7, n = 9 coefficients.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Asymptotic tail of the digamma series, valid for large arguments:
/// `ln x - 1/(2x) - sum B_2n / (2n x^2n)`.
fn digamma_asymptotic(x: f64) -> f64 {
    let inv2 = 1.0 / (x * x);
    // Bernoulli coefficients B_2n / 2n for n = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    x.ln() - 0.5 / x - series
}

/// Digamma via upward recurrence to x >= 6 followed by the asymptotic
/// series; absolute error below 1e-10 on the positive axis.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma needs x > 0, got {x}")));
    }
    let mut shift = 0.0;
    let mut x = x;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    Ok(shift + digamma_asymptotic(x))
}

/// Trigamma (derivative of digamma), same recurrence/series scheme.
pub(crate) fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("trigamma needs x > 0, got {x}")));
    }
    let mut shift = 0.0;
    let mut x = x;
    while x < 6.0 {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x^2) + sum B_2n / x^{2n+1}
    let series = inv
        * (1.0
            + inv * 0.5
            + inv2
                * (1.0 / 6.0
                    - inv2
                        * (1.0 / 30.0
                            - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0)))));
    Ok(shift + series)
}
