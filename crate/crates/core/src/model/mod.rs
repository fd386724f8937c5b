//! Reaction networks, exact simulation and the observation model.

pub mod network;
pub mod observe;
pub mod simulate;

pub use network::{build_network, Hazards, ModelDefinition, RateParameters, ReactionNetwork, SpeciesState};
pub use observe::{observe_dataset, observe_states, NoiseSd, ObservationModel, ObservedDataset};
pub use simulate::{
    realisation_count, simulate_at_times, simulate_direct, simulate_direct_with_limits, Event, SimulationLimits,
    Trajectory,
};
