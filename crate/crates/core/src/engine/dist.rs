use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::{Error, Result};

/// Service-time distribution, parameters in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ServiceDist {
    Exponential { mean_s: f64 },
    Lognormal { median_s: f64, sigma: f64 },
    Deterministic { value_s: f64 },
}

impl ServiceDist {
    pub fn exponential_rate(rate: f64) -> Self {
        ServiceDist::Exponential { mean_s: 1.0 / rate }
    }

    pub fn exponential_mean(mean_s: f64) -> Self {
        ServiceDist::Exponential { mean_s }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |reason: &str| Err(Error::config(path, reason));
        match *self {
            ServiceDist::Exponential { mean_s } => {
                if !(mean_s.is_finite() && mean_s > 0.0) {
                    return bad("exponential mean must be positive (rate > 0)");
                }
            }
            ServiceDist::Lognormal { median_s, sigma } => {
                if !(median_s.is_finite() && median_s > 0.0) {
                    return bad("lognormal median must be positive");
                }
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return bad("lognormal sigma must be >= 0");
                }
            }
            ServiceDist::Deterministic { value_s } => {
                if !(value_s.is_finite() && value_s >= 0.0) {
                    return bad("deterministic value must be >= 0");
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ServiceDist::Exponential { mean_s } => mean_s,
            ServiceDist::Lognormal { median_s, sigma } => median_s * (0.5 * sigma * sigma).exp(),
            ServiceDist::Deterministic { value_s } => value_s,
        }
    }

    /// Scale the distribution so its mean is multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            ServiceDist::Exponential { mean_s } => ServiceDist::Exponential { mean_s: mean_s * factor },
            ServiceDist::Lognormal { median_s, sigma } => ServiceDist::Lognormal { median_s: median_s * factor, sigma },
            ServiceDist::Deterministic { value_s } => ServiceDist::Deterministic { value_s: value_s * factor },
        }
    }

    /// Parameters are assumed validated.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            ServiceDist::Exponential { mean_s } => {
                let d = Exp::new(1.0 / mean_s).expect("validated rate");
                d.sample(rng)
            }
            ServiceDist::Lognormal { median_s, sigma } => {
                let d = LogNormal::new(median_s.ln(), sigma).expect("validated lognormal");
                d.sample(rng)
            }
            ServiceDist::Deterministic { value_s } => value_s,
        }
    }
}
