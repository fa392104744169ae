use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dist::{boltzmann, ActionDistribution};
use super::qtable::QTable;
use crate::env::{Action, Frogger, GameState, StateKey, Status, NUM_ACTIONS};

/// Anything that turns the current state into an exploration distribution.
pub trait ActionSource {
    fn distribution(&self, env: &Frogger, state: &GameState, table: &QTable) -> ActionDistribution;
}

/// Plain Boltzmann exploration over Q.
#[derive(Debug, Clone, Copy)]
pub struct BoltzmannSource {
    pub tau: f64,
}

impl ActionSource for BoltzmannSource {
    fn distribution(&self, env: &Frogger, state: &GameState, table: &QTable) -> ActionDistribution {
        let values = table.values(&env.markov_key(state));
        boltzmann(&values, self.tau).expect("Q-values stay finite")
    }
}

/// Uniform over the maximal Q-values.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedySource;

pub fn greedy_distribution(values: &[f64; NUM_ACTIONS]) -> ActionDistribution {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = values.map(|v| if v == max { 1.0 } else { 0.0 });
    ActionDistribution::from_weights(weights).expect("at least one maximal action")
}

impl ActionSource for GreedySource {
    fn distribution(&self, env: &Frogger, state: &GameState, table: &QTable) -> ActionDistribution {
        greedy_distribution(&table.values(&env.markov_key(state)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeOutcome {
    Goal,
    Dead,
    /// Hit the step cap without a terminal event.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub key: StateKey,
    pub action: Action,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub total_reward: f64,
    pub outcome: EpisodeOutcome,
}

/// Plays one episode from the map's start, sampling actions from `source` and
/// applying a Q-learning backup after every step.
pub fn run_episode<R: Rng + ?Sized>(
    env: &Frogger,
    table: &mut QTable,
    source: &dyn ActionSource,
    step_cap: usize,
    rng: &mut R,
) -> EpisodeTrace {
    assert!(step_cap >= 1, "step cap must allow at least one step");
    let mut state = env.initial_state();
    let mut steps = Vec::new();
    let mut total = 0.0;
    while steps.len() < step_cap {
        let key = env.markov_key(&state);
        let action = source.distribution(env, &state, table).sample(rng);
        let (next, reward) = env.step(&state, action, rng);
        table.update(key, action, reward, env.markov_key(&next), next.is_terminal());
        steps.push(TraceStep { key, action, reward });
        total += reward;
        state = next;
        if state.is_terminal() {
            break;
        }
    }
    EpisodeTrace {
        steps,
        total_reward: total,
        outcome: outcome_of(&state),
    }
}

fn outcome_of(state: &GameState) -> EpisodeOutcome {
    match state.status {
        Status::Goal => EpisodeOutcome::Goal,
        Status::Dead => EpisodeOutcome::Dead,
        Status::Running => EpisodeOutcome::Truncated,
    }
}

/// Total reward of one greedy rollout; learns nothing.
pub fn greedy_rollout<R: Rng + ?Sized>(
    env: &Frogger,
    table: &QTable,
    step_cap: usize,
    rng: &mut R,
) -> (f64, EpisodeOutcome) {
    let mut state = env.initial_state();
    let mut total = 0.0;
    for _ in 0..step_cap {
        let action = GreedySource.distribution(env, &state, table).sample(rng);
        let (next, reward) = env.step(&state, action, rng);
        total += reward;
        state = next;
        if state.is_terminal() {
            break;
        }
    }
    (total, outcome_of(&state))
}

/// Mean total reward of `episodes` greedy rollouts seeded from `seed`.
pub fn evaluate_policy(env: &Frogger, table: &QTable, episodes: usize, step_cap: usize, seed: u64) -> f64 {
    assert!(episodes > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = (0..episodes)
        .map(|_| greedy_rollout(env, table, step_cap, &mut rng).0)
        .sum();
    total / episodes as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Dynamics, FroggerMap};

    const EMPTY4: &str = "frogger v1 5 4\nt- .....\nr> .....\nr< .....\ng- ..A..\n";

    fn empty_env() -> Frogger {
        Frogger::new(FroggerMap::parse(EMPTY4).unwrap(), Dynamics::Deterministic)
    }

    fn converged_table(env: &Frogger) -> QTable {
        let mut table = QTable::new(0.5, 0.95);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..400 {
            run_episode(env, &mut table, &BoltzmannSource { tau: 1.0 }, 200, &mut rng);
        }
        table
    }

    #[test]
    fn episodes_take_at_least_one_step() {
        let env = empty_env();
        let mut table = QTable::new(0.1, 0.95);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let trace = run_episode(&env, &mut table, &BoltzmannSource { tau: 1.0 }, 200, &mut rng);
            assert!(!trace.steps.is_empty());
            let sum: f64 = trace.steps.iter().map(|s| s.reward).sum();
            assert_eq!(sum, trace.total_reward);
        }
    }

    #[test]
    fn greedy_on_converged_table_walks_straight_up() {
        let env = empty_env();
        let table = converged_table(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (total, outcome) = greedy_rollout(&env, &table, 200, &mut rng);
        assert_eq!(outcome, EpisodeOutcome::Goal);
        // height 4: two -1 steps then +100.
        assert_eq!(total, 100.0 - 2.0);
        assert_eq!(evaluate_policy(&env, &table, 10, 200, 5), 98.0);
    }

    #[test]
    fn step_cap_truncates() {
        struct AlwaysStay;
        impl ActionSource for AlwaysStay {
            fn distribution(&self, _: &Frogger, _: &GameState, _: &QTable) -> ActionDistribution {
                ActionDistribution::from_weights([0.0, 0.0, 0.0, 0.0, 1.0]).unwrap()
            }
        }
        let env = empty_env();
        let mut table = QTable::new(0.1, 0.95);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = run_episode(&env, &mut table, &AlwaysStay, 17, &mut rng);
        assert_eq!(trace.steps.len(), 17);
        assert_eq!(trace.outcome, EpisodeOutcome::Truncated);
    }

    #[test]
    fn evaluation_does_not_mutate() {
        let env = empty_env();
        let table = converged_table(&env);
        let before = table.clone();
        evaluate_policy(&env, &table, 5, 200, 11);
        assert_eq!(table, before);
    }
}
