//! Policy shaping: the agent's Boltzmann distribution multiplied by a critique
//! distribution and renormalised.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::env::{Action, Frogger, GameState, LocalView, NUM_ACTIONS};
use crate::rl::{boltzmann, ActionDistribution, ActionSource, QTable, TemperatureSchedule};

#[derive(Debug, Error, PartialEq)]
pub enum ShapingError {
    #[error("critique and exploration distributions have no common support")]
    Degenerate,
}

/// `out[a] = prq[a] * prc[a] / sum_a' prq[a'] * prc[a']`.
pub fn combine(
    prq: &ActionDistribution,
    prc: &ActionDistribution,
) -> Result<ActionDistribution, ShapingError> {
    let mut product = [0.0; NUM_ACTIONS];
    for (out, (q, c)) in product.iter_mut().zip(prq.probs().iter().zip(prc.probs())) {
        *out = q * c;
    }
    ActionDistribution::from_weights(product).map_err(|_| ShapingError::Degenerate)
}

/// A per-view action distribution standing in for human critique.
pub trait Critic: Send + Sync {
    fn critique(&self, view: &LocalView, episode: usize) -> ActionDistribution;
}

/// Baseline critique built from raw demonstration counts.
#[derive(Debug, Clone)]
pub struct ObservationCritique {
    counts: HashMap<LocalView, [u32; NUM_ACTIONS]>,
    total: u64,
    pub schedule: TemperatureSchedule,
}

impl ObservationCritique {
    pub fn new(schedule: TemperatureSchedule) -> Self {
        ObservationCritique {
            counts: HashMap::new(),
            total: 0,
            schedule,
        }
    }

    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = &'a (LocalView, Action)>,
        schedule: TemperatureSchedule,
    ) -> Self {
        let mut critique = Self::new(schedule);
        for (view, action) in pairs {
            critique.ingest(*view, *action);
        }
        critique
    }

    pub fn ingest(&mut self, view: LocalView, action: Action) {
        self.counts.entry(view).or_insert([0; NUM_ACTIONS])[action.index()] += 1;
        self.total += 1;
    }

    pub fn counts(&self, view: &LocalView) -> [u32; NUM_ACTIONS] {
        self.counts.get(view).copied().unwrap_or([0; NUM_ACTIONS])
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct_views(&self) -> usize {
        self.counts.len()
    }
}

/// Boltzmann over demonstration counts at the scheduled temperature. Unseen
/// views give the uniform distribution.
pub fn observation_critique(
    view: &LocalView,
    critique: &ObservationCritique,
    episode: usize,
) -> ActionDistribution {
    let scores = critique.counts(view).map(f64::from);
    boltzmann(&scores, critique.schedule.tau(episode)).expect("counts are finite")
}

impl Critic for ObservationCritique {
    fn critique(&self, view: &LocalView, episode: usize) -> ActionDistribution {
        observation_critique(view, self, episode)
    }
}

/// Exploration policy for training: Boltzmann over Q, optionally shaped by a
/// critic. `episode` drives the critic's temperature schedule.
#[derive(Clone)]
pub struct ShapedPolicy {
    pub q_tau: f64,
    pub critic: Option<Arc<dyn Critic>>,
    pub episode: usize,
}

impl ShapedPolicy {
    pub fn q_only(q_tau: f64) -> Self {
        ShapedPolicy {
            q_tau,
            critic: None,
            episode: 0,
        }
    }

    pub fn with_critic(q_tau: f64, critic: Arc<dyn Critic>) -> Self {
        ShapedPolicy {
            q_tau,
            critic: Some(critic),
            episode: 0,
        }
    }
}

pub fn shaped_action_distribution(
    env: &Frogger,
    state: &GameState,
    table: &QTable,
    policy: &ShapedPolicy,
) -> ActionDistribution {
    let prq = boltzmann(&table.values(&env.markov_key(state)), policy.q_tau)
        .expect("Q-values stay finite");
    match &policy.critic {
        None => prq,
        Some(critic) => {
            let prc = critic.critique(&env.local_view(state), policy.episode);
            // Both sides are strictly positive Boltzmann outputs, but extreme
            // temperatures can underflow; fall back to Pr_q then.
            combine(&prq, &prc).unwrap_or(prq)
        }
    }
}

impl ActionSource for ShapedPolicy {
    fn distribution(&self, env: &Frogger, state: &GameState, table: &QTable) -> ActionDistribution {
        shaped_action_distribution(env, state, table, self)
    }
}
