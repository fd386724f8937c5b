//! Gaussian observation model and observed datasets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::network::SpeciesState;
use crate::model::simulate::Trajectory;

/// Measurement noise standard deviation, or a marker that it is inferred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSd {
    Known(f64),
    Unknown,
}

impl Serialize for NoiseSd {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NoiseSd::Known(v) => s.serialize_f64(*v),
            NoiseSd::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for NoiseSd {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(NoiseSd::Known(v)),
            Raw::Str(s) if s == "unknown" => Ok(NoiseSd::Unknown),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unknown\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub sigma: NoiseSd,
    pub observed: Vec<bool>,
}

impl ObservationModel {
    pub fn new(sigma: NoiseSd, observed: Vec<bool>) -> Result<Self> {
        if !observed.iter().any(|&o| o) {
            return Err(Error::Invalid("at least one species must be observed".into()));
        }
        if let NoiseSd::Known(s) = sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Invalid(format!("noise sd {s} must be positive")));
            }
        }
        Ok(Self { sigma, observed })
    }

    pub fn fully_observed(sigma: f64, u: usize) -> Result<Self> {
        Self::new(NoiseSd::Known(sigma), vec![true; u])
    }

    pub fn known_sigma(&self) -> Option<f64> {
        match self.sigma {
            NoiseSd::Known(s) => Some(s),
            NoiseSd::Unknown => None,
        }
    }

    /// Emits one noisy row for latent state `x` using noise sd `sigma`.
    pub fn emit<R: Rng + ?Sized>(&self, x: &[i64], sigma: f64, rng: &mut R) -> Vec<Option<f64>> {
        x.iter()
            .zip(&self.observed)
            .map(|(&c, &seen)| {
                seen.then(|| {
                    let z: f64 = StandardNormal.sample(rng);
                    c as f64 + sigma * z
                })
            })
            .collect()
    }
}

/// Noisy discrete-time observations. Each row has one entry per species,
/// `None` where the species is unobserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedDataset {
    pub times: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
    pub model: ObservationModel,
}

impl ObservedDataset {
    pub fn new(times: Vec<f64>, values: Vec<Vec<Option<f64>>>, model: ObservationModel) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Invalid("dataset needs at least one observation time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Invalid(
                "observation times must be nonnegative and strictly increasing".into(),
            ));
        }
        if values.len() != times.len() {
            return Err(Error::Shape(format!("{} rows for {} times", values.len(), times.len())));
        }
        let u = model.observed.len();
        for (k, row) in values.iter().enumerate() {
            if row.len() != u {
                return Err(Error::Shape(format!("row {k} has width {}, expected {u}", row.len())));
            }
            for (j, v) in row.iter().enumerate() {
                if v.is_some() != model.observed[j] {
                    return Err(Error::Shape(format!(
                        "row {k} species {j}: presence does not match the observation mask"
                    )));
                }
            }
        }
        Ok(Self { times, values, model })
    }

    pub fn num_times(&self) -> usize {
        self.times.len()
    }

    pub fn num_species(&self) -> usize {
        self.model.observed.len()
    }

    /// The same values with a different mask; unmasked entries are dropped.
    pub fn with_mask(&self, observed: Vec<bool>) -> Result<Self> {
        let model = ObservationModel::new(self.model.sigma, observed)?;
        let values = self
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&model.observed)
                    .map(|(v, &o)| if o { *v } else { None })
                    .collect()
            })
            .collect();
        Self::new(self.times.clone(), values, model)
    }

    pub fn with_sigma(&self, sigma: NoiseSd) -> Result<Self> {
        let model = ObservationModel::new(sigma, self.model.observed.clone())?;
        Ok(Self {
            times: self.times.clone(),
            values: self.values.clone(),
            model,
        })
    }
}

/// Corrupts latent states with Gaussian noise of sd `sigma`.
pub fn observe_states<R: Rng + ?Sized>(
    states: &[SpeciesState],
    times: &[f64],
    model: &ObservationModel,
    sigma: f64,
    rng: &mut R,
) -> Result<ObservedDataset> {
    if states.len() != times.len() {
        return Err(Error::Shape(format!(
            "{} states for {} times",
            states.len(),
            times.len()
        )));
    }
    let values = states.iter().map(|x| model.emit(x.counts(), sigma, rng)).collect();
    ObservedDataset::new(times.to_vec(), values, model.clone())
}

/// Observes `traj` at `times` under `model`, which must carry a known sigma.
pub fn observe_dataset<R: Rng + ?Sized>(
    traj: &Trajectory,
    times: &[f64],
    model: &ObservationModel,
    rng: &mut R,
) -> Result<ObservedDataset> {
    let sigma = model
        .known_sigma()
        .ok_or_else(|| Error::Invalid("data generation needs a known noise sd".into()))?;
    let states = traj.states_at(times)?;
    observe_states(&states, times, model, sigma, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::BudgetLedger;
    use crate::model::network::{build_network, RateParameters};
    use crate::model::simulate::simulate_direct;
    use crate::rng::seeded;

    fn lv_path() -> Trajectory {
        let net = build_network(
            &[vec![1, 0], vec![1, 1], vec![0, 1]],
            &[vec![2, 0], vec![0, 2], vec![0, 0]],
            &["prey", "predator"],
        )
        .unwrap();
        simulate_direct(
            &net,
            &RateParameters::new(vec![1.0, 0.005, 0.6]).unwrap(),
            &SpeciesState(vec![50, 100]),
            10.0,
            &mut seeded(11),
            &BudgetLedger::unlimited(),
        )
        .unwrap()
    }

    #[test]
    fn vanishing_noise_reproduces_states() {
        let traj = lv_path();
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        let model = ObservationModel::fully_observed(1e-12, 2).unwrap();
        let data = observe_dataset(&traj, &times, &model, &mut seeded(1)).unwrap();
        for (row, x) in data.values.iter().zip(traj.states_at(&times).unwrap()) {
            for (v, c) in row.iter().zip(x.counts()) {
                assert!((v.unwrap() - *c as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_species_are_missing() {
        let traj = lv_path();
        let times = [0.0, 2.0, 4.0];
        let model = ObservationModel::new(NoiseSd::Known(10.0), vec![true, false]).unwrap();
        let data = observe_dataset(&traj, &times, &model, &mut seeded(1)).unwrap();
        assert!(data.values.iter().all(|r| r[0].is_some() && r[1].is_none()));
    }

    #[test]
    fn gaussian_noise_mean() {
        let model = ObservationModel::fully_observed(10.0, 1).unwrap();
        let mut rng = seeded(5);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| model.emit(&[50], 10.0, &mut rng)[0].unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 50.0).abs() < 3.0 * 10.0 / 100.0, "mean {mean}");
    }

    #[test]
    fn times_out_of_range() {
        let traj = lv_path();
        let model = ObservationModel::fully_observed(1.0, 2).unwrap();
        assert!(matches!(
            observe_dataset(&traj, &[0.0, 11.0], &model, &mut seeded(1)),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn model_validation() {
        assert!(ObservationModel::new(NoiseSd::Known(1.0), vec![false, false]).is_err());
        assert!(ObservationModel::new(NoiseSd::Known(0.0), vec![true]).is_err());
        assert!(ObservationModel::new(NoiseSd::Unknown, vec![true]).is_ok());
    }

    #[test]
    fn noise_sd_serde() {
        let s = serde_json::to_string(&NoiseSd::Unknown).unwrap();
        assert_eq!(s, "\"unknown\"");
        let k: NoiseSd = serde_json::from_str("2.5").unwrap();
        assert_eq!(k, NoiseSd::Known(2.5));
        assert!(serde_json::from_str::<NoiseSd>("\"huge\"").is_err());
    }
}
