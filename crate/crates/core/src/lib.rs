//! Robust policy-set discovery on tabular MDPs with linear-in-features rewards.
//!
//! A set of policies is summarized by its successor features (SFs); the
//! set-max policy (SMP) runs whichever member has the highest value for the
//! task at hand. [`discovery::discover`] grows the set one policy at a time,
//! each time planning against the task on which the current SMP does worst.

pub mod apprenticeship;
pub mod composition;
pub mod discovery;
pub mod error;
pub mod experiment;
pub mod gridworld;
pub mod mdp;
pub mod successor;
pub mod worst_case;

pub use composition::PolicySet;
pub use discovery::{DiscoveryConfig, DiscoveryLog, Method};
pub use error::{Error, Result};
pub use gridworld::{GridSpec, GridWorld};
pub use mdp::{DeterministicPolicy, FeatureMdp, RewardVector};
pub use successor::SuccessorFeatures;
pub use worst_case::{SolverConfig, WorstCaseSolution};
