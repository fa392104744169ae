//! Breadth-first search for the shortest successful route under
//! deterministic dynamics.

use std::collections::{HashSet, VecDeque};

use super::game::{Action, Frogger, GameState, StateKey, Status, REWARD_GOAL, REWARD_STEP};

/// Fewest moves from `start` to the goal row, searching over
/// (column, row, tick phase). `None` when the goal is unreachable within
/// `max_steps`.
pub fn shortest_path(env: &Frogger, start: &GameState, max_steps: usize) -> Option<usize> {
    let mut seen: HashSet<StateKey> = HashSet::new();
    let mut frontier = VecDeque::from([(*start, 0usize)]);
    seen.insert(env.markov_key(start));
    while let Some((state, depth)) = frontier.pop_front() {
        if depth >= max_steps {
            continue;
        }
        for action in Action::ALL {
            let (next, _) = env.transition(&state, action);
            match next.status {
                Status::Goal => return Some(depth + 1),
                Status::Dead => {}
                Status::Running => {
                    if seen.insert(env.markov_key(&next)) {
                        frontier.push_back((next, depth + 1));
                    }
                }
            }
        }
    }
    None
}

/// Return of the shortest successful episode from the map's start: one step
/// penalty per move except the final, goal-reaching one.
pub fn optimal_return(env: &Frogger, max_steps: usize) -> Option<f64> {
    shortest_path(env, &env.initial_state(), max_steps)
        .map(|steps| REWARD_GOAL + REWARD_STEP * (steps - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Dynamics, FroggerMap};

    #[test]
    fn empty_map_optimum_is_straight_up() {
        let map = FroggerMap::parse("frogger v1 5 5\nt- .....\nr> .....\ng- .....\nr< .....\ng- ..A..\n").unwrap();
        let env = Frogger::new(map, Dynamics::Deterministic);
        assert_eq!(shortest_path(&env, &env.initial_state(), 200), Some(4));
        assert_eq!(optimal_return(&env, 200), Some(100.0 - 3.0));
    }

    #[test]
    fn solid_water_is_unsolvable() {
        let map = FroggerMap::parse("frogger v1 3 4\nt- ...\nw> ...\ng- ...\ng- .A.\n").unwrap();
        let env = Frogger::new(map, Dynamics::Deterministic);
        assert_eq!(optimal_return(&env, 200), None);
    }

    #[test]
    fn waits_for_a_gap() {
        // A car arrives in front of the agent at tick 1; stepping straight up
        // dies, so the route needs at least one extra move.
        let map = FroggerMap::parse("frogger v1 5 4\nt- .....\ng- .....\nr> .#...\ng- ..A..\n").unwrap();
        let env = Frogger::new(map, Dynamics::Deterministic);
        assert_eq!(env.transition(&env.initial_state(), Action::Up).0.status, Status::Dead);
        assert!(shortest_path(&env, &env.initial_state(), 50).unwrap() > 3);
    }
}
