//! Propagation of a transmissive attack over an exposure stream.

mod attack;
mod exposure;
mod monte_carlo;
mod scenario;
mod trial;

pub use attack::{AttackConfig, PatchConfig, SeedRule, TargetRule};
pub use exposure::{Channel, ExposureEvent, ExposureStream};
pub use monte_carlo::{
    run_coupled, run_monte_carlo, run_trials, wilson_interval, MonteCarloSummary, TrialRecord,
};
pub use scenario::Scenario;
pub use trial::{
    run_trial, run_trial_with, InfectionRecord, NodeEpidemicState, StateCount, TrialOptions,
    TrialOutcome,
};
