//! Component densities: gamma, beta, and their product for the joint model.

use super::special::ln_gamma;
use super::{ComponentParams, Observation};

/// Whether an observation lies in the open support of the component.
pub fn in_support(params: &ComponentParams, x: Observation) -> bool {
    match (params, x) {
        (ComponentParams::Gamma { .. }, Observation::Scalar(v)) => v > 0.0 && v.is_finite(),
        (ComponentParams::Beta { .. }, Observation::Scalar(v)) => v > 0.0 && v < 1.0,
        (
            ComponentParams::Joint { .. },
            Observation::Pair {
                spectrum,
                uncertainty,
            },
        ) => spectrum > 0.0 && spectrum < 1.0 && uncertainty > 0.0 && uncertainty.is_finite(),
        _ => false,
    }
}

fn gamma_ln_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
}

fn beta_ln_pdf(alpha: f64, beta: f64, x: f64) -> f64 {
    ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta)
        + (alpha - 1.0) * x.ln()
        + (beta - 1.0) * (1.0 - x).ln()
}

/// Log density; `None` outside the support (a zero-density boundary flag).
pub fn component_ln_pdf(params: &ComponentParams, x: Observation) -> Option<f64> {
    if !in_support(params, x) {
        return None;
    }
    Some(match (params, x) {
        (&ComponentParams::Gamma { shape, rate }, Observation::Scalar(v)) => {
            gamma_ln_pdf(shape, rate, v)
        }
        (&ComponentParams::Beta { alpha, beta }, Observation::Scalar(v)) => {
            beta_ln_pdf(alpha, beta, v)
        }
        (
            &ComponentParams::Joint {
                beta_alpha,
                beta_beta,
                gamma_shape,
                gamma_rate,
            },
            Observation::Pair {
                spectrum,
                uncertainty,
            },
        ) => {
            // conditional independence within the component
            beta_ln_pdf(beta_alpha, beta_beta, spectrum)
                + gamma_ln_pdf(gamma_shape, gamma_rate, uncertainty)
        }
        _ => unreachable!("in_support filtered kind mismatches"),
    })
}

/// Density value; zero outside the support.
pub fn component_pdf(params: &ComponentParams, x: Observation) -> f64 {
    component_ln_pdf(params, x).map_or(0.0, f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_exponential_case() {
        let p = ComponentParams::Gamma {
            shape: 1.0,
            rate: 1.0,
        };
        assert_relative_eq!(
            component_pdf(&p, Observation::Scalar(2.0)),
            (-2.0f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gamma_hand_value() {
        let p = ComponentParams::Gamma {
            shape: 2.0,
            rate: 3.0,
        };
        // b^a x^{a-1} e^{-bx} / Gamma(a) = 9 e^{-3}
        assert_relative_eq!(
            component_pdf(&p, Observation::Scalar(1.0)),
            9.0 * (-3.0f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn beta_hand_value() {
        let p = ComponentParams::Beta {
            alpha: 2.0,
            beta: 2.0,
        };
        // Gamma(4)/(Gamma(2)Gamma(2)) * 0.25 = 1.5
        assert_relative_eq!(
            component_pdf(&p, Observation::Scalar(0.5)),
            1.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn joint_is_product_of_marginals() {
        let joint = ComponentParams::Joint {
            beta_alpha: 2.0,
            beta_beta: 5.0,
            gamma_shape: 3.0,
            gamma_rate: 1.5,
        };
        let beta = ComponentParams::Beta {
            alpha: 2.0,
            beta: 5.0,
        };
        let gamma = ComponentParams::Gamma {
            shape: 3.0,
            rate: 1.5,
        };
        let x = Observation::Pair {
            spectrum: 0.3,
            uncertainty: 2.2,
        };
        assert_relative_eq!(
            component_pdf(&joint, x),
            component_pdf(&beta, Observation::Scalar(0.3))
                * component_pdf(&gamma, Observation::Scalar(2.2)),
            epsilon = 1e-12
        );
    }

    #[test]
    fn out_of_support_is_zero() {
        let beta = ComponentParams::Beta {
            alpha: 2.0,
            beta: 2.0,
        };
        assert_eq!(component_pdf(&beta, Observation::Scalar(0.0)), 0.0);
        assert_eq!(component_pdf(&beta, Observation::Scalar(1.0)), 0.0);
        assert_eq!(component_pdf(&beta, Observation::Scalar(-0.2)), 0.0);
        let gamma = ComponentParams::Gamma {
            shape: 2.0,
            rate: 1.0,
        };
        assert_eq!(component_pdf(&gamma, Observation::Scalar(0.0)), 0.0);
        assert!(!in_support(&gamma, Observation::Scalar(0.0)));
        // kind mismatch is also out of support
        assert_eq!(
            component_pdf(
                &gamma,
                Observation::Pair {
                    spectrum: 0.5,
                    uncertainty: 1.0
                }
            ),
            0.0
        );
    }

    /// Quadrature oracle: densities integrate to one. Adaptive Simpson on
    /// the support with tail truncation for the gamma.
    #[test]
    fn densities_integrate_to_one() {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for i in 1..n {
                let x = a + i as f64 * h;
                acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        }
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let shape = rng.random_range(1.0..8.0);
            let rate = rng.random_range(0.2..5.0);
            let g = ComponentParams::Gamma { shape, rate };
            let upper = (shape + 40.0 * shape.sqrt()) / rate;
            let integral = simpson(
                &|x| component_pdf(&g, Observation::Scalar(x)),
                1e-12,
                upper,
                20_000,
            );
            assert!(
                (integral - 1.0).abs() < 1e-3,
                "gamma({shape},{rate}) integrates to {integral}"
            );

            let alpha = rng.random_range(1.0..8.0);
            let beta = rng.random_range(1.0..8.0);
            let b = ComponentParams::Beta { alpha, beta };
            let integral = simpson(
                &|x| component_pdf(&b, Observation::Scalar(x)),
                1e-12,
                1.0 - 1e-12,
                20_000,
            );
            assert!(
                (integral - 1.0).abs() < 1e-3,
                "beta({alpha},{beta}) integrates to {integral}"
            );
        }
    }
}
