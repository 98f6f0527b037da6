//! Two-component gamma, beta and joint beta-gamma mixtures with EM fitting
//! and the reliable-component posterior.
//!
//! The reliable component models the certain (low uncertainty) or localized
//! (low spectrum distance) part of a category's samples; keeping points
//! whose reliable posterior exceeds one half turns predictions into pseudo
//! labels.

mod em;
mod pdf;
mod special;

pub use em::{fit_mixture_em, EmConfig};
pub use pdf::{component_ln_pdf, component_pdf, in_support};
pub use special::{digamma, ln_gamma};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default EM iteration count.
pub const DEFAULT_EM_ITERATIONS: usize = 50;

/// Samples at the beta support boundaries are clamped inward by this much
/// before fitting.
pub const BETA_BOUNDARY_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureKind {
    Gamma,
    Beta,
    Joint,
}

/// One observation: a scalar for the gamma/beta models, a
/// (spectrum, uncertainty) pair for the joint model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Scalar(f64),
    /// `spectrum` in (0,1) feeds the beta factor, `uncertainty` > 0 the
    /// gamma factor.
    Pair { spectrum: f64, uncertainty: f64 },
}

/// Parameters of a single mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComponentParams {
    Gamma {
        shape: f64,
        rate: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    Joint {
        beta_alpha: f64,
        beta_beta: f64,
        gamma_shape: f64,
        gamma_rate: f64,
    },
}

impl ComponentParams {
    pub fn kind(&self) -> MixtureKind {
        match self {
            ComponentParams::Gamma { .. } => MixtureKind::Gamma,
            ComponentParams::Beta { .. } => MixtureKind::Beta,
            ComponentParams::Joint { .. } => MixtureKind::Joint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = match *self {
            ComponentParams::Gamma { shape, rate } => vec![shape, rate],
            ComponentParams::Beta { alpha, beta } => vec![alpha, beta],
            ComponentParams::Joint {
                beta_alpha,
                beta_beta,
                gamma_shape,
                gamma_rate,
            } => vec![beta_alpha, beta_beta, gamma_shape, gamma_rate],
        };
        if all.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "component parameters must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// Mean of the distribution (for the joint kind, the pair of means is
    /// reduced per coordinate elsewhere; this returns the gamma mean for
    /// ordering convenience).
    pub(crate) fn gamma_mean(&self) -> Option<f64> {
        match *self {
            ComponentParams::Gamma { shape, rate } => Some(shape / rate),
            ComponentParams::Joint {
                gamma_shape,
                gamma_rate,
                ..
            } => Some(gamma_shape / gamma_rate),
            ComponentParams::Beta { .. } => None,
        }
    }

    pub(crate) fn beta_mean(&self) -> Option<f64> {
        match *self {
            ComponentParams::Beta { alpha, beta } => Some(alpha / (alpha + beta)),
            ComponentParams::Joint {
                beta_alpha,
                beta_beta,
                ..
            } => Some(beta_alpha / (beta_alpha + beta_beta)),
            ComponentParams::Gamma { .. } => None,
        }
    }
}

/// A two-component mixture; component order is (reliable, unreliable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: [f64; 2],
    pub reliable: ComponentParams,
    pub unreliable: ComponentParams,
}

impl MixtureModel {
    pub fn new(
        weights: [f64; 2],
        reliable: ComponentParams,
        unreliable: ComponentParams,
    ) -> Result<Self> {
        let model = MixtureModel {
            weights,
            reliable,
            unreliable,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn kind(&self) -> MixtureKind {
        self.reliable.kind()
    }

    pub fn validate(&self) -> Result<()> {
        self.reliable.validate()?;
        self.unreliable.validate()?;
        if self.reliable.kind() != self.unreliable.kind() {
            return Err(Error::InvalidArgument(
                "mixture components have different kinds".into(),
            ));
        }
        let [w1, w2] = self.weights;
        if !(w1 >= 0.0 && w2 >= 0.0 && (w1 + w2 - 1.0).abs() < 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "weights ({w1}, {w2}) are not on the simplex"
            )));
        }
        Ok(())
    }
}

/// Per-iteration log-likelihoods of an EM fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub log_likelihood_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Posterior responsibilities `(r1, r2)` of the two components for one
/// observation; errors when both densities vanish (out of support).
pub fn responsibilities(model: &MixtureModel, x: Observation) -> Result<(f64, f64)> {
    model.validate()?;
    let l1 = component_ln_pdf(&model.reliable, x);
    let l2 = component_ln_pdf(&model.unreliable, x);
    match (l1, l2) {
        (None, None) => Err(Error::Domain(format!(
            "observation {x:?} has zero density under both components"
        ))),
        (Some(l1), None) => {
            if model.weights[0] > 0.0 && l1.is_finite() {
                Ok((1.0, 0.0))
            } else {
                Err(Error::Domain("zero total density".into()))
            }
        }
        (None, Some(l2)) => {
            if model.weights[1] > 0.0 && l2.is_finite() {
                Ok((0.0, 1.0))
            } else {
                Err(Error::Domain("zero total density".into()))
            }
        }
        (Some(l1), Some(l2)) => {
            let a = model.weights[0].ln() + l1;
            let b = model.weights[1].ln() + l2;
            let m = a.max(b);
            if !m.is_finite() {
                return Err(Error::Domain("zero total density".into()));
            }
            let ea = (a - m).exp();
            let eb = (b - m).exp();
            Ok((ea / (ea + eb), eb / (ea + eb)))
        }
    }
}

/// Posterior probability of the reliable component.
pub fn reliable_posterior(model: &MixtureModel, x: Observation) -> Result<f64> {
    responsibilities(model, x).map(|(r1, _)| r1)
}

/// Order fitted components so the reliable one comes first: lower mean for
/// gamma (certain) and beta (localized); for the joint kind the gamma mean
/// decides, with the beta mean as tie-break.
pub fn order_components(
    weights: [f64; 2],
    a: ComponentParams,
    b: ComponentParams,
) -> ([f64; 2], ComponentParams, ComponentParams) {
    let key = |c: &ComponentParams| -> (f64, f64) {
        match c.kind() {
            MixtureKind::Gamma => (c.gamma_mean().unwrap(), 0.0),
            MixtureKind::Beta => (c.beta_mean().unwrap(), 0.0),
            MixtureKind::Joint => (c.gamma_mean().unwrap(), c.beta_mean().unwrap()),
        }
    };
    let (ka, kb) = (key(&a), key(&b));
    if kb < ka {
        ([weights[1], weights[0]], b, a)
    } else {
        (weights, a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma(shape: f64, rate: f64) -> ComponentParams {
        ComponentParams::Gamma { shape, rate }
    }

    #[test]
    fn identical_components_split_evenly() {
        let model = MixtureModel::new([0.5, 0.5], gamma(2.0, 3.0), gamma(2.0, 3.0)).unwrap();
        for x in [0.1, 1.0, 7.5] {
            let (r1, r2) = responsibilities(&model, Observation::Scalar(x)).unwrap();
            assert!((r1 - 0.5).abs() < 1e-12);
            assert!((r1 + r2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn responsibilities_follow_weights_when_densities_match() {
        let model = MixtureModel::new([0.9, 0.1], gamma(2.0, 3.0), gamma(2.0, 3.0)).unwrap();
        let (r1, r2) = responsibilities(&model, Observation::Scalar(1.0)).unwrap();
        assert!((r1 - 0.9).abs() < 1e-12);
        assert!((r2 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_follow_density_ratio() {
        // construct components whose densities at x=1 are exactly in a 4:1
        // ratio: exponential(1) vs exponential(1) scaled... use two
        // exponentials with rates chosen so p1/p2 = 4 at x = ln(4)/(b2-b1)
        let b1 = 1.0;
        let b2 = 2.0;
        let x = (2.0f64 / 1.0).ln() / (b2 - b1) + 0.0;
        // p1 = e^{-x}, p2 = 2 e^{-2x}; at x = ln 2: p1 = 0.5, p2 = 0.5 -> even
        let model = MixtureModel::new([0.5, 0.5], gamma(1.0, b1), gamma(1.0, b2)).unwrap();
        let (r1, r2) = responsibilities(&model, Observation::Scalar(x)).unwrap();
        assert!((r1 - 0.5).abs() < 1e-12, "r1 = {r1}");
        assert!((r2 - 0.5).abs() < 1e-12);
        // away from the crossing, the lighter tail wins
        let (far, _) = responsibilities(&model, Observation::Scalar(5.0)).unwrap();
        assert!(far > 0.9);
    }

    #[test]
    fn out_of_support_observation_errors() {
        let model = MixtureModel::new(
            [0.5, 0.5],
            ComponentParams::Beta {
                alpha: 2.0,
                beta: 2.0,
            },
            ComponentParams::Beta {
                alpha: 3.0,
                beta: 1.5,
            },
        )
        .unwrap();
        assert!(responsibilities(&model, Observation::Scalar(1.5)).is_err());
        assert!(responsibilities(&model, Observation::Scalar(0.0)).is_err());
    }

    #[test]
    fn component_relabeling_flips_posteriors() {
        let a = gamma(2.0, 8.0);
        let b = gamma(6.0, 1.0);
        let m1 = MixtureModel::new([0.3, 0.7], a, b).unwrap();
        let m2 = MixtureModel::new([0.7, 0.3], b, a).unwrap();
        for x in [0.05, 0.5, 2.0, 9.0] {
            let p1 = reliable_posterior(&m1, Observation::Scalar(x)).unwrap();
            let p2 = reliable_posterior(&m2, Observation::Scalar(x)).unwrap();
            assert!((p1 + p2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ordering_picks_lower_mean_as_reliable() {
        let low = gamma(2.0, 8.0); // mean 0.25
        let high = gamma(6.0, 1.0); // mean 6
        let (w, reliable, unreliable) = order_components([0.4, 0.6], high, low);
        assert_eq!(w, [0.6, 0.4]);
        assert_eq!(reliable, low);
        assert_eq!(unreliable, high);

        let (w2, r2, _) = order_components([0.4, 0.6], low, high);
        assert_eq!(w2, [0.4, 0.6]);
        assert_eq!(r2, low);
    }
}
