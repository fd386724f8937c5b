use crate::error::{Error, Result};
use crate::model::{NoiseSd, ObservedDataset, RateParameters, ReactionNetwork, SimulationLimits};
use crate::prior::{ParameterPrior, StatePrior};

/// Everything a sampler needs: model, data and priors.
///
/// Samplers work on a log-parameter vector `[log θ_1, …, log θ_v]`, extended
/// with `log σ` when the dataset's noise sd is unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceProblem {
    pub network: ReactionNetwork,
    pub dataset: ObservedDataset,
    pub state_prior: StatePrior,
    pub prior: ParameterPrior,
    pub limits: SimulationLimits,
}

impl InferenceProblem {
    pub fn new(
        network: ReactionNetwork,
        dataset: ObservedDataset,
        state_prior: StatePrior,
        prior: ParameterPrior,
        limits: SimulationLimits,
    ) -> Result<Self> {
        let u = network.num_species();
        if dataset.num_species() != u || state_prior.num_species() != u {
            return Err(Error::Shape(format!(
                "network has {u} species, dataset {}, state prior {}",
                dataset.num_species(),
                state_prior.num_species()
            )));
        }
        let problem = Self {
            network,
            dataset,
            state_prior,
            prior,
            limits,
        };
        if problem.prior.dim() != problem.dim() {
            return Err(Error::Shape(format!(
                "prior has {} components, problem has {} parameters",
                problem.prior.dim(),
                problem.dim()
            )));
        }
        Ok(problem)
    }

    pub fn infers_sigma(&self) -> bool {
        self.dataset.model.sigma == NoiseSd::Unknown
    }

    pub fn dim(&self) -> usize {
        self.network.num_reactions() + usize::from(self.infers_sigma())
    }

    /// Rates and noise sd encoded by a log-parameter vector.
    pub fn unpack(&self, log_params: &[f64]) -> Result<(RateParameters, f64)> {
        if log_params.len() != self.dim() {
            return Err(Error::Shape(format!(
                "{} parameters given, problem has {}",
                log_params.len(),
                self.dim()
            )));
        }
        let v = self.network.num_reactions();
        let theta = RateParameters::from_log(&log_params[..v])?;
        let sigma = match self.dataset.model.sigma {
            NoiseSd::Known(s) => s,
            NoiseSd::Unknown => log_params[v].exp(),
        };
        Ok((theta, sigma))
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.network.num_reactions())
            .map(|i| format!("log_theta_{i}"))
            .collect();
        if self.infers_sigma() {
            names.push("log_sigma".into());
        }
        names
    }

    pub fn with_dataset(&self, dataset: ObservedDataset, prior: ParameterPrior) -> Result<Self> {
        Self::new(
            self.network.clone(),
            dataset,
            self.state_prior.clone(),
            prior,
            self.limits,
        )
    }
}
