//! Tabular Q-learning with Boltzmann exploration.

mod dist;
mod episode;
mod qtable;
mod schedule;

pub use dist::{argmax, boltzmann, ActionDistribution, DistError};
pub use episode::{
    evaluate_policy, greedy_distribution, greedy_rollout, run_episode, ActionSource,
    BoltzmannSource, EpisodeOutcome, EpisodeTrace, GreedySource, TraceStep,
};
pub use qtable::{QTable, Q_INIT};
pub use schedule::{ScheduleShape, TemperatureSchedule};
