use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_network, ModelDefinition, NoiseSd, ObservedDataset, RateParameters, ReactionNetwork, SimulationLimits,
    SpeciesState,
};
use crate::prior::{ParameterPrior, PriorComponent, StatePrior};
use crate::problem::InferenceProblem;

/// A network with data-generating values and default priors.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinModel {
    pub name: String,
    pub network: ReactionNetwork,
    pub theta: RateParameters,
    pub x0: SpeciesState,
    pub state_prior: StatePrior,
    /// Priors on log θ_i.
    pub rate_prior: Vec<PriorComponent>,
    /// Prior on log σ when σ is inferred.
    pub sigma_prior: PriorComponent,
    /// σ used to generate data.
    pub sigma: f64,
    pub limits: SimulationLimits,
}

impl BuiltinModel {
    pub fn parameter_prior(&self, infer_sigma: bool) -> ParameterPrior {
        let mut components = self.rate_prior.clone();
        if infer_sigma {
            components.push(self.sigma_prior);
        }
        ParameterPrior { components }
    }

    /// True log-parameter vector, with log σ appended when inferred.
    pub fn true_log_params(&self, infer_sigma: bool) -> Vec<f64> {
        let mut v = self.theta.to_log();
        if infer_sigma {
            v.push(self.sigma.ln());
        }
        v
    }

    pub fn problem(&self, dataset: ObservedDataset) -> Result<InferenceProblem> {
        let infer_sigma = dataset.model.sigma == NoiseSd::Unknown;
        InferenceProblem::new(
            self.network.clone(),
            dataset,
            self.state_prior.clone(),
            self.parameter_prior(infer_sigma),
            self.limits,
        )
    }
}

/// Lotka–Volterra predator–prey: prey birth, predation, predator death.
pub fn builtin_lotka_volterra() -> BuiltinModel {
    let network = build_network(
        &[vec![1, 0], vec![1, 1], vec![0, 1]],
        &[vec![2, 0], vec![0, 2], vec![0, 0]],
        &["prey", "predator"],
    )
    .expect("static network");
    BuiltinModel {
        name: "lv".into(),
        network,
        theta: RateParameters::new(vec![1.0, 0.005, 0.6]).expect("static rates"),
        x0: SpeciesState(vec![50, 100]),
        state_prior: StatePrior::Poisson {
            means: vec![50.0, 100.0],
        },
        rate_prior: vec![PriorComponent::Uniform { lo: -6.0, hi: 2.0 }; 3],
        sigma_prior: PriorComponent::Uniform {
            lo: 0.5f64.ln(),
            hi: 50f64.ln(),
        },
        sigma: 2.3f64.exp(),
        // prior draws reach explosive growth; paths near the data stay below 2000
        limits: SimulationLimits {
            max_events: 1_000_000,
            max_count: 20_000,
        },
    }
}

/// Schlögl system: 2X₁+X₂ ⇌ 3X₁, X₃ ⇌ X₁.
pub fn builtin_schlogl() -> BuiltinModel {
    let network = build_network(
        &[vec![2, 1, 0], vec![3, 0, 0], vec![0, 0, 1], vec![1, 0, 0]],
        &[vec![3, 0, 0], vec![2, 1, 0], vec![1, 0, 0], vec![0, 0, 1]],
        &["X1", "X2", "X3"],
    )
    .expect("static network");
    let theta = RateParameters::new(vec![3e-7, 1e-4, 7.73e-4, 3.276]).expect("static rates");
    let rate_prior = theta
        .to_log()
        .into_iter()
        .map(|mean| PriorComponent::Gaussian { mean, sd: 0.5 })
        .collect();
    let x0 = SpeciesState(vec![250, 100_000, 200_000]);
    BuiltinModel {
        name: "schlogl".into(),
        network,
        theta,
        state_prior: StatePrior::Point { state: x0.clone() },
        x0,
        rate_prior,
        sigma_prior: PriorComponent::Uniform { lo: -1.0, hi: 3.0 },
        sigma: 1.0,
        limits: SimulationLimits {
            max_events: 50_000_000,
            max_count: 10_000_000,
        },
    }
}

/// Pure death X → ∅ from 20 molecules; small enough for the exact oracle.
pub fn builtin_pure_death() -> BuiltinModel {
    let network = build_network(&[vec![1]], &[vec![0]], &["X"]).expect("static network");
    let x0 = SpeciesState(vec![20]);
    BuiltinModel {
        name: "pure-death".into(),
        network,
        theta: RateParameters::new(vec![0.5]).expect("static rates"),
        state_prior: StatePrior::Point { state: x0.clone() },
        x0,
        rate_prior: vec![PriorComponent::Uniform { lo: -3.0, hi: 1.0 }],
        sigma_prior: PriorComponent::Uniform { lo: -2.0, hi: 3.0 },
        sigma: 2.0,
        limits: SimulationLimits::default(),
    }
}

/// Immigration–death ∅ → X → ∅, a second oracle-sized network.
pub fn builtin_immigration_death() -> BuiltinModel {
    let network = build_network(&[vec![0], vec![1]], &[vec![1], vec![0]], &["X"]).expect("static network");
    let x0 = SpeciesState(vec![5]);
    BuiltinModel {
        name: "immigration-death".into(),
        network,
        theta: RateParameters::new(vec![10.0, 1.0]).expect("static rates"),
        state_prior: StatePrior::Point { state: x0.clone() },
        x0,
        rate_prior: vec![PriorComponent::Uniform { lo: -3.0, hi: 4.0 }; 2],
        sigma_prior: PriorComponent::Uniform { lo: -2.0, hi: 3.0 },
        sigma: 1.0,
        limits: SimulationLimits {
            max_events: 1_000_000,
            max_count: 10_000,
        },
    }
}

/// Looks up a builtin by name (`lv`, `schlogl`, `pure-death`,
/// `immigration-death`).
pub fn builtin(name: &str) -> Option<BuiltinModel> {
    match name {
        "lv" | "lotka-volterra" => Some(builtin_lotka_volterra()),
        "schlogl" => Some(builtin_schlogl()),
        "pure-death" | "death" => Some(builtin_pure_death()),
        "immigration-death" => Some(builtin_immigration_death()),
        _ => None,
    }
}

/// A model file: the reaction definition plus the values a builtin carries.
/// `rate_prior` may be omitted for simulation but inference needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub definition: ModelDefinition,
    pub theta: Vec<f64>,
    pub x0: Vec<i64>,
    #[serde(default)]
    pub state_prior: Option<StatePrior>,
    #[serde(default)]
    pub rate_prior: Vec<PriorComponent>,
    #[serde(default)]
    pub sigma_prior: Option<PriorComponent>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub limits: Option<SimulationLimits>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<BuiltinModel> {
        let network = self.definition.to_network()?;
        let theta = RateParameters::new(self.theta)?;
        if theta.len() != network.num_reactions() {
            return Err(Error::Shape(format!(
                "{} rates for {} reactions",
                theta.len(),
                network.num_reactions()
            )));
        }
        let x0 = SpeciesState::new(self.x0)?;
        if x0.len() != network.num_species() {
            return Err(Error::Shape(format!(
                "x0 has {} entries for {} species",
                x0.len(),
                network.num_species()
            )));
        }
        if !self.rate_prior.is_empty() && self.rate_prior.len() != theta.len() {
            return Err(Error::Shape(format!(
                "{} prior components for {} rates",
                self.rate_prior.len(),
                theta.len()
            )));
        }
        let state_prior = match self.state_prior {
            Some(p) => p,
            None => StatePrior::Point { state: x0.clone() },
        };
        Ok(BuiltinModel {
            name: self.name.unwrap_or_else(|| "custom".into()),
            network,
            theta,
            x0,
            state_prior,
            rate_prior: self.rate_prior,
            sigma_prior: self.sigma_prior.unwrap_or(PriorComponent::Uniform {
                lo: 0.1f64.ln(),
                hi: 100f64.ln(),
            }),
            sigma: self.sigma.unwrap_or(1.0),
            limits: self.limits.unwrap_or_default(),
        })
    }
}

/// Resolves `builtin:<name>` or a path to a [`ModelFile`] in JSON.
pub fn load_model(spec: &str) -> Result<BuiltinModel> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin(name).ok_or_else(|| Error::Invalid(format!("unknown builtin model '{name}'")));
    }
    let text = std::fs::read_to_string(Path::new(spec))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    file.into_model()
}
