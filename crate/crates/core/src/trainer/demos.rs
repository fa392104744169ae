//! Demonstration traces: short-horizon Q-learners that each learn to advance
//! one row from a random start, whose greedy trajectories are harvested.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    Action, Dynamics, Frogger, FroggerMap, GameState, LocalView, Status, REWARD_DEATH,
    REWARD_GOAL, REWARD_STEP,
};
use crate::rl::{boltzmann, greedy_distribution, QTable};
use crate::seeding::{rng_for, streams};

#[derive(Debug, Error, PartialEq)]
pub enum DemoError {
    #[error("need at least one demonstration agent")]
    NoAgents,
    #[error("map has no safe start cell below the goal row")]
    NoStart,
    #[error("demonstration file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub episodes_per_agent: usize,
    pub step_cap: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            episodes_per_agent: 300,
            step_cap: 30,
            alpha: 0.5,
            gamma: 0.95,
            // Rewards span ~110; a low temperature locks onto the first
            // success instead of the shortest route.
            tau: 50.0,
        }
    }
}

pub type DemoPair = (LocalView, Action);

/// Outcome of one sub-task transition: reward and whether the episode ended.
fn subtask_step(env: &Frogger, state: &GameState, action: Action, target_row: usize) -> (GameState, f64, bool) {
    let (next, _) = env.transition(state, action);
    match next.status {
        Status::Dead => (next, REWARD_DEATH, true),
        _ if next.agent.row <= target_row => (next, REWARD_GOAL, true),
        _ => (next, REWARD_STEP, false),
    }
}

fn random_start<R: Rng + ?Sized>(env: &Frogger, rng: &mut R) -> Result<GameState, DemoError> {
    let map = &*env.map;
    let candidates = env.safe_states();
    if candidates.is_empty() {
        return Err(DemoError::NoStart);
    }
    // Rejection-free: pick among all safe (cell, phase) states.
    let pick = candidates[rng.gen_range(0..candidates.len())];
    debug_assert!(pick.agent.row >= 1 && pick.agent.row < map.height);
    Ok(pick)
}

fn train_demonstrator<R: Rng + ?Sized>(
    env: &Frogger,
    start: &GameState,
    cfg: &DemoConfig,
    rng: &mut R,
) -> QTable {
    let target_row = start.agent.row - 1;
    let mut table = QTable::new(cfg.alpha, cfg.gamma);
    for _ in 0..cfg.episodes_per_agent {
        let mut state = *start;
        for _ in 0..cfg.step_cap {
            let key = env.markov_key(&state);
            let dist = boltzmann(&table.values(&key), cfg.tau).expect("finite Q");
            let action = dist.sample(rng);
            let (next, reward, done) = subtask_step(env, &state, action, target_row);
            table.update(key, action, reward, env.markov_key(&next), done);
            state = next;
            if done {
                break;
            }
        }
    }
    table
}

/// Greedy trajectory of a trained demonstrator; `None` unless it reaches the
/// target row.
fn harvest<R: Rng + ?Sized>(
    env: &Frogger,
    start: &GameState,
    table: &QTable,
    step_cap: usize,
    rng: &mut R,
) -> Option<Vec<DemoPair>> {
    let target_row = start.agent.row - 1;
    let mut state = *start;
    let mut pairs = Vec::new();
    for _ in 0..step_cap {
        let action = greedy_distribution(&table.values(&env.markov_key(&state))).sample(rng);
        pairs.push((env.local_view(&state), action));
        let (next, reward, done) = subtask_step(env, &state, action, target_row);
        state = next;
        if done {
            return (reward > 0.0).then_some(pairs);
        }
    }
    None
}

/// Trains `n_agents` demonstrators from random safe starts on `map`
/// (deterministic dynamics) and returns the concatenated (view, action) pairs
/// of every successful greedy trajectory, in agent order.
pub fn collect_demonstrations(
    map: &FroggerMap,
    n_agents: usize,
    seed: u64,
    cfg: &DemoConfig,
) -> Result<Vec<DemoPair>, DemoError> {
    if n_agents == 0 {
        return Err(DemoError::NoAgents);
    }
    let env = Frogger::new(map.clone(), Dynamics::Deterministic);
    let mut pairs = Vec::new();
    for agent in 0..n_agents as u64 {
        let start = random_start(&env, &mut rng_for(seed, streams::DEMO_START, agent))?;
        let mut rng = rng_for(seed, streams::DEMO_TRAIN, agent);
        let table = train_demonstrator(&env, &start, cfg, &mut rng);
        if let Some(trace) = harvest(&env, &start, &table, cfg.step_cap, &mut rng) {
            pairs.extend(trace);
        }
    }
    Ok(pairs)
}

/// One pair per line: nine view tokens and the action token, tab-separated.
pub fn format_demonstrations(pairs: &[DemoPair]) -> String {
    let mut out = String::from("# view\taction\n");
    for (view, action) in pairs {
        let _ = writeln!(out, "{view}\t{action}");
    }
    out
}

pub fn parse_demonstrations(text: &str) -> Result<Vec<DemoPair>, DemoError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| DemoError::Parse { line: i + 1, message };
        let (view, action) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `<view>\\t<action>`".into()))?;
        let view = LocalView::parse_tokens(view.split_whitespace()).map_err(err)?;
        let action = action.trim().parse().map_err(err)?;
        pairs.push((view, action));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Cell;

    #[test]
    fn empty_map_demonstrations_always_advance() {
        let map = FroggerMap::parse("frogger v1 5 5\nt- .....\nr> .....\ng- .....\nr< .....\ng- ..A..\n")
            .unwrap();
        let pairs = collect_demonstrations(&map, 20, 3, &DemoConfig::default()).unwrap();
        assert!(!pairs.is_empty());
        for (view, action) in &pairs {
            assert_eq!(*action, Action::Up);
            assert!(matches!(view.cells()[LocalView::AHEAD], Cell::Road | Cell::Grass | Cell::Goal));
        }
    }

    #[test]
    fn zero_agents_is_an_error() {
        let map = FroggerMap::generate(9, 8, 0.5, 1).unwrap();
        assert_eq!(
            collect_demonstrations(&map, 0, 0, &DemoConfig::default()),
            Err(DemoError::NoAgents)
        );
    }

    #[test]
    fn file_round_trip() {
        let map = FroggerMap::generate(9, 8, 0.5, 2).unwrap();
        let pairs = collect_demonstrations(&map, 10, 1, &DemoConfig::default()).unwrap();
        let parsed = parse_demonstrations(&format_demonstrations(&pairs)).unwrap();
        assert_eq!(parsed, pairs);
    }
}
