//! Frogger gridworld: maps, dynamics, and the agent-centred local view.

mod game;
mod map;
mod solve;

pub use game::{
    Action, Cell, Dynamics, Frogger, GameState, LocalView, StateKey, Status, NUM_ACTIONS,
    REWARD_DEATH, REWARD_GOAL, REWARD_STEP,
};
pub use map::{Direction, FroggerMap, MapError, Position, RowKind, RowSpec};
pub use solve::{optimal_return, shortest_path};
