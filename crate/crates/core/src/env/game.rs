use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use super::map::{FroggerMap, Position, RowKind};

pub const REWARD_GOAL: f64 = 100.0;
pub const REWARD_DEATH: f64 = -10.0;
pub const REWARD_STEP: f64 = -1.0;

pub const NUM_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    /// Do nothing this tick.
    Stay,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    pub fn token(self) -> &'static str {
        match self {
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
            Action::Stay => "STAY",
        }
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.token() == s)
            .ok_or_else(|| format!("unknown action token `{s}`"))
    }
}

/// Contents of one cell as seen in a local view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Wall,
    Grass,
    Road,
    Car,
    Water,
    Log,
    Goal,
}

impl Cell {
    pub const ALL: [Cell; 7] = [
        Cell::Wall,
        Cell::Grass,
        Cell::Road,
        Cell::Car,
        Cell::Water,
        Cell::Log,
        Cell::Goal,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Cell::Wall => "WALL",
            Cell::Grass => "GRASS",
            Cell::Road => "ROAD",
            Cell::Car => "CAR",
            Cell::Water => "WATER",
            Cell::Log => "LOG",
            Cell::Goal => "GOAL",
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Cell {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Cell::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| format!("unknown cell token `{s}`"))
    }
}

/// The 3x3 window around the agent, row-major; index 4 is the agent's cell,
/// index 1 the cell straight ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalView(pub [Cell; 9]);

impl LocalView {
    pub const AHEAD_LEFT: usize = 0;
    pub const AHEAD: usize = 1;
    pub const AHEAD_RIGHT: usize = 2;
    pub const LEFT: usize = 3;
    pub const CENTER: usize = 4;
    pub const RIGHT: usize = 5;
    pub const BEHIND: usize = 7;

    pub fn cells(&self) -> &[Cell; 9] {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.0.iter().map(|c| c.token())
    }

    pub fn parse_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Result<Self, String> {
        let cells: Vec<Cell> = tokens
            .into_iter()
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        let cells: [Cell; 9] = cells
            .try_into()
            .map_err(|v: Vec<Cell>| format!("a view has 9 cells, got {}", v.len()))?;
        Ok(LocalView(cells))
    }
}

impl fmt::Display for LocalView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(c.token())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    Dead,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GameState {
    pub agent: Position,
    pub tick: u64,
    pub status: Status,
}

impl GameState {
    pub fn is_terminal(&self) -> bool {
        self.status != Status::Running
    }
}

/// Markov state for tabular learning: obstacle patterns repeat every `width`
/// ticks, so position plus tick phase determines all future dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub col: u16,
    pub row: u16,
    pub phase: u16,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    Deterministic,
    /// The requested action is replaced by one of the other four with
    /// probability `p_fail`.
    Stochastic { p_fail: f64 },
}

impl Dynamics {
    pub const STOCHASTIC: Dynamics = Dynamics::Stochastic { p_fail: 0.2 };
}

/// A map plus its dynamics. Stateless: every operation takes a `GameState`.
#[derive(Debug, Clone)]
pub struct Frogger {
    pub map: Arc<FroggerMap>,
    pub dynamics: Dynamics,
}

impl Frogger {
    pub fn new(map: FroggerMap, dynamics: Dynamics) -> Self {
        Frogger {
            map: Arc::new(map),
            dynamics,
        }
    }

    pub fn initial_state(&self) -> GameState {
        GameState {
            agent: self.map.start,
            tick: 0,
            status: Status::Running,
        }
    }

    pub fn state_at(&self, agent: Position, tick: u64) -> GameState {
        GameState {
            agent,
            tick,
            status: Status::Running,
        }
    }

    /// Resolves the executed action. Deterministic dynamics never touch `rng`.
    pub fn resolve_action<R: Rng + ?Sized>(&self, requested: Action, rng: &mut R) -> Action {
        match self.dynamics {
            Dynamics::Deterministic => requested,
            Dynamics::Stochastic { p_fail } => {
                if rng.gen::<f64>() < p_fail {
                    let pick = rng.gen_range(0..NUM_ACTIONS - 1);
                    let others = Action::ALL.into_iter().filter(|&a| a != requested);
                    others.into_iter().nth(pick).expect("four alternatives")
                } else {
                    requested
                }
            }
        }
    }

    /// Advances one tick. Order: resolve action, move agent, off-map check,
    /// obstacles move, log carriage, collision/drowning check, goal check.
    ///
    /// Panics if `state` is terminal.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &GameState,
        action: Action,
        rng: &mut R,
    ) -> (GameState, f64) {
        let executed = self.resolve_action(action, rng);
        self.transition(state, executed)
    }

    /// The deterministic transition for an already-resolved action.
    pub fn transition(&self, state: &GameState, executed: Action) -> (GameState, f64) {
        assert!(!state.is_terminal(), "stepping a terminal state");
        let map = &*self.map;
        let (dc, dr) = executed.delta();
        let col = state.agent.col as i64 + dc;
        let row = state.agent.row as i64 + dr;
        let tick = state.tick + 1;

        if col < 0 || row < 0 || col >= map.width as i64 || row >= map.height as i64 {
            let dead = GameState {
                agent: state.agent,
                tick,
                status: Status::Dead,
            };
            return (dead, REWARD_DEATH);
        }
        let (mut col, row) = (col as usize, row as usize);
        let lane = map.row(row);

        // Riding: the agent landed on a log before the obstacles moved.
        if lane.kind == RowKind::Water && lane.occupied_at(col, state.tick) {
            col = (col as i64 + lane.direction.offset()).rem_euclid(map.width as i64) as usize;
        }

        let agent = Position { col, row };
        let dies = match lane.kind {
            RowKind::Road => lane.occupied_at(col, tick),
            RowKind::Water => !lane.occupied_at(col, tick),
            _ => false,
        };
        let (status, reward) = if dies {
            (Status::Dead, REWARD_DEATH)
        } else if lane.kind == RowKind::Goal {
            (Status::Goal, REWARD_GOAL)
        } else {
            (Status::Running, REWARD_STEP)
        };
        (GameState { agent, tick, status }, reward)
    }

    pub fn cell_at(&self, col: i64, row: i64, tick: u64) -> Cell {
        let map = &*self.map;
        if col < 0 || row < 0 || col >= map.width as i64 || row >= map.height as i64 {
            return Cell::Wall;
        }
        let lane = map.row(row as usize);
        let occupied = lane.occupied_at(col as usize, tick);
        match (lane.kind, occupied) {
            (RowKind::Goal, _) => Cell::Goal,
            (RowKind::Grass, _) => Cell::Grass,
            (RowKind::Road, false) => Cell::Road,
            (RowKind::Road, true) => Cell::Car,
            (RowKind::Water, false) => Cell::Water,
            (RowKind::Water, true) => Cell::Log,
        }
    }

    pub fn local_view(&self, state: &GameState) -> LocalView {
        let mut cells = [Cell::Wall; 9];
        let (c0, r0) = (state.agent.col as i64, state.agent.row as i64);
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                let idx = ((dr + 1) * 3 + (dc + 1)) as usize;
                cells[idx] = self.cell_at(c0 + dc, r0 + dr, state.tick);
            }
        }
        LocalView(cells)
    }

    pub fn markov_key(&self, state: &GameState) -> StateKey {
        StateKey {
            col: state.agent.col as u16,
            row: state.agent.row as u16,
            phase: (state.tick % self.map.width as u64) as u16,
        }
    }

    /// True when a running agent may stand at `pos` at `tick`.
    pub fn is_safe(&self, pos: Position, tick: u64) -> bool {
        let lane = self.map.row(pos.row);
        match lane.kind {
            RowKind::Road => !lane.occupied_at(pos.col, tick),
            RowKind::Water => lane.occupied_at(pos.col, tick),
            _ => true,
        }
    }

    /// Every running state reachable in principle: safe non-goal cells at every
    /// tick phase.
    pub fn safe_states(&self) -> Vec<GameState> {
        let map = &*self.map;
        let mut out = Vec::new();
        for tick in 0..map.width as u64 {
            for row in 1..map.height {
                for col in 0..map.width {
                    let pos = Position { col, row };
                    if self.is_safe(pos, tick) {
                        out.push(self.state_at(pos, tick));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frogger(text: &str) -> Frogger {
        Frogger::new(FroggerMap::parse(text).unwrap(), Dynamics::Deterministic)
    }

    const OPEN: &str = "frogger v1 5 5\nt- .....\nr> .....\ng- .....\nr< .....\ng- ..A..\n";

    #[test]
    fn reaching_goal_pays_100() {
        let env = frogger(OPEN);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = env.state_at(Position { col: 2, row: 1 }, 0);
        let (next, r) = env.step(&s, Action::Up, &mut rng);
        assert_eq!(r, 100.0);
        assert_eq!(next.status, Status::Goal);
    }

    #[test]
    fn leaving_the_map_kills() {
        let env = frogger(OPEN);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = env.state_at(Position { col: 0, row: 4 }, 0);
        let (next, r) = env.step(&s, Action::Left, &mut rng);
        assert_eq!(r, -10.0);
        assert_eq!(next.status, Status::Dead);
    }

    #[test]
    fn safe_stay_costs_one() {
        let env = frogger(OPEN);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = env.initial_state();
        let (next, r) = env.step(&s, Action::Stay, &mut rng);
        assert_eq!(r, -1.0);
        assert_eq!(next.status, Status::Running);
        assert_eq!(next.tick, 1);
    }

    #[test]
    fn car_moving_into_agent_kills_and_leaving_car_does_not() {
        // Car at col 1 moving right; agent steps into col 2 of the road.
        let env = frogger("frogger v1 5 4\nt- .....\nr> .#...\nw< #####\ng- ..A..\n");
        let s = env.state_at(Position { col: 2, row: 2 }, 0);
        let (next, r) = env.transition(&s, Action::Up);
        assert_eq!((next.status, r), (Status::Dead, -10.0));
        // Stepping into the car's current cell is safe: it moves away.
        let s = env.state_at(Position { col: 1, row: 2 }, 0);
        let (next, r) = env.transition(&s, Action::Up);
        assert_eq!((next.status, r), (Status::Running, -1.0));
    }

    #[test]
    fn logs_carry_and_wrap() {
        // Water row moving left, log only at col 0.
        let env = frogger("frogger v1 5 4\nt- .....\nw< #....\nr> .....\ng- A....\n");
        let s = env.state_at(Position { col: 0, row: 2 }, 0);
        let (next, r) = env.transition(&s, Action::Up);
        assert_eq!(r, -1.0);
        assert_eq!(next.agent, Position { col: 4, row: 1 });
        // Riding continues with the log.
        let (next2, _) = env.transition(&next, Action::Stay);
        assert_eq!(next2.agent, Position { col: 3, row: 1 });
        assert_eq!(next2.status, Status::Running);
        // Jumping into open water drowns.
        let s = env.state_at(Position { col: 2, row: 2 }, 0);
        assert_eq!(env.transition(&s, Action::Up).0.status, Status::Dead);
    }

    #[test]
    #[should_panic(expected = "terminal")]
    fn stepping_terminal_panics() {
        let env = frogger(OPEN);
        let s = GameState {
            status: Status::Dead,
            ..env.initial_state()
        };
        env.transition(&s, Action::Up);
    }

    #[test]
    fn corner_view_has_five_walls() {
        let env = frogger(OPEN);
        let s = env.state_at(Position { col: 0, row: 4 }, 0);
        let view = env.local_view(&s);
        assert_eq!(view.0.iter().filter(|&&c| c == Cell::Wall).count(), 5);
    }

    #[test]
    fn road_ahead_of_grass() {
        let env = frogger(OPEN);
        let view = env.local_view(&env.initial_state());
        assert_eq!(view.0[LocalView::AHEAD], Cell::Road);
        assert_eq!(view.0[LocalView::CENTER], Cell::Grass);
    }

    #[test]
    fn markov_key_period() {
        let env = frogger(OPEN);
        let p = Position { col: 2, row: 3 };
        assert_eq!(
            env.markov_key(&env.state_at(p, 0)),
            env.markov_key(&env.state_at(p, 5))
        );
        assert_ne!(
            env.markov_key(&env.state_at(p, 0)),
            env.markov_key(&env.state_at(p, 1))
        );
    }

    #[test]
    fn stochastic_never_substitutes_itself() {
        let env = Frogger::new(FroggerMap::parse(OPEN).unwrap(), Dynamics::STOCHASTIC);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut executed = 0;
        for _ in 0..20_000 {
            let a = env.resolve_action(Action::Left, &mut rng);
            if a == Action::Left {
                executed += 1;
            }
        }
        // Substitutions pick among the other four, so only the 80% path
        // yields LEFT.
        let rate = executed as f64 / 20_000.0;
        assert!((rate - 0.8).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn view_tokens_round_trip() {
        let env = frogger(OPEN);
        let view = env.local_view(&env.initial_state());
        let text = view.to_string();
        assert_eq!(LocalView::parse_tokens(text.split(' ')).unwrap(), view);
    }
}
