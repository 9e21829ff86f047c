//! Closed-loop tracking experiments: episodes, policies, Monte-Carlo aggregation and output.

pub mod config;
pub mod episode;
pub mod monte_carlo;
pub mod output;
pub mod policy;

pub use config::{InitMode, Policy, ScenarioConfig};
pub use episode::{run_episode, EpisodeTrace, EpochRecord};
pub use monte_carlo::{monte_carlo, wrap_angle, MetricsRow, MonteCarloResult};
pub use policy::{heuristic_target, policy_diagonal, policy_optimized, policy_parallel};
