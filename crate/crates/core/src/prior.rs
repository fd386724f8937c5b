//! Priors over log-scale parameters and over the initial species state.
//!
//! All parameter densities are defined directly over the log-scale
//! coordinates the samplers move in, so no Jacobian terms appear anywhere.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpeciesState;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorComponent {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
    PointMass { value: f64 },
}

impl PriorComponent {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            PriorComponent::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorComponent::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            PriorComponent::PointMass { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorComponent::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            PriorComponent::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            PriorComponent::PointMass { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PriorComponent::Uniform { lo, hi } => 0.5 * (lo + hi),
            PriorComponent::Gaussian { mean, .. } => mean,
            PriorComponent::PointMass { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PriorComponent::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            PriorComponent::Gaussian { sd, .. } => sd * sd,
            PriorComponent::PointMass { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorComponent::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            PriorComponent::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            PriorComponent::PointMass { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid prior component {self:?}")))
        }
    }
}

/// Independent product prior over a log-parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPrior {
    pub components: Vec<PriorComponent>,
}

impl ParameterPrior {
    pub fn new(components: Vec<PriorComponent>) -> Result<Self> {
        for c in &components {
            c.validate()?;
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut acc = 0.0;
        for (c, &xi) in self.components.iter().zip(x) {
            acc += c.log_density(xi);
            if acc == f64::NEG_INFINITY {
                break;
            }
        }
        acc
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        self.log_density(x) > f64::NEG_INFINITY
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }
}

/// Prior on the initial species counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StatePrior {
    Point {
        state: SpeciesState,
    },
    /// Independent Poisson counts per species.
    Poisson {
        means: Vec<f64>,
    },
}

impl StatePrior {
    pub fn point(counts: Vec<i64>) -> Result<Self> {
        Ok(StatePrior::Point {
            state: SpeciesState::new(counts)?,
        })
    }

    pub fn num_species(&self) -> usize {
        match self {
            StatePrior::Point { state } => state.len(),
            StatePrior::Poisson { means } => means.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        match self {
            StatePrior::Point { state } => state.0.clone(),
            StatePrior::Poisson { means } => means
                .iter()
                .map(|&m| {
                    if m > 0.0 {
                        Poisson::new(m).expect("positive Poisson mean").sample(rng) as i64
                    } else {
                        0
                    }
                })
                .collect(),
        }
    }

    pub fn log_pmf(&self, x: &[i64]) -> f64 {
        match self {
            StatePrior::Point { state } => {
                if state.counts() == x {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            StatePrior::Poisson { means } => means
                .iter()
                .zip(x)
                .map(|(&m, &k)| {
                    if k < 0 {
                        f64::NEG_INFINITY
                    } else if m == 0.0 {
                        if k == 0 {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        k as f64 * m.ln() - m - ln_factorial(k as u64)
                    }
                })
                .sum(),
        }
    }
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}
