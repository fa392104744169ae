use std::collections::HashMap;
use std::fmt::Write as _;

use crate::env::{Action, StateKey, NUM_ACTIONS};

/// Tabular action values. Unvisited entries read as `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    entries: HashMap<StateKey, [f64; NUM_ACTIONS]>,
    pub alpha: f64,
    pub gamma: f64,
}

pub const Q_INIT: f64 = 0.0;

impl QTable {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
        assert!((0.0..=1.0).contains(&gamma), "gamma must lie in [0, 1]");
        QTable {
            entries: HashMap::new(),
            alpha,
            gamma,
        }
    }

    pub fn values(&self, key: &StateKey) -> [f64; NUM_ACTIONS] {
        self.entries.get(key).copied().unwrap_or([Q_INIT; NUM_ACTIONS])
    }

    pub fn get(&self, key: &StateKey, action: Action) -> f64 {
        self.values(key)[action.index()]
    }

    pub fn set(&mut self, key: StateKey, action: Action, value: f64) {
        self.entries.entry(key).or_insert([Q_INIT; NUM_ACTIONS])[action.index()] = value;
    }

    pub fn max_value(&self, key: &StateKey) -> f64 {
        self.values(key).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// One-step Q-learning backup. The bootstrap term is dropped on terminal
    /// transitions.
    pub fn update(
        &mut self,
        key: StateKey,
        action: Action,
        reward: f64,
        next_key: StateKey,
        terminal: bool,
    ) {
        let bootstrap = if terminal {
            0.0
        } else {
            self.gamma * self.max_value(&next_key)
        };
        let q = self.get(&key, action);
        let updated = q + self.alpha * (reward + bootstrap - q);
        // Unchanged initial values are not materialised.
        if updated != q || self.entries.contains_key(&key) {
            self.set(key, action, updated);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Text snapshot: a header, then `col row phase q_up q_down q_left q_right q_stay`
    /// per visited key, sorted by key.
    pub fn snapshot(&self) -> String {
        let mut keys: Vec<&StateKey> = self.entries.keys().collect();
        keys.sort();
        let mut out = format!(
            "# qtable alpha={} gamma={}\n# col row phase UP DOWN LEFT RIGHT STAY\n",
            self.alpha, self.gamma
        );
        for key in keys {
            let v = self.entries[key];
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                key.col, key.row, key.phase, v[0], v[1], v[2], v[3], v[4]
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(c: u16) -> StateKey {
        StateKey {
            col: c,
            row: 0,
            phase: 0,
        }
    }

    #[test]
    fn terminal_full_step() {
        let mut q = QTable::new(1.0, 0.95);
        q.update(key(0), Action::Up, -10.0, key(1), true);
        assert_eq!(q.get(&key(0), Action::Up), -10.0);
    }

    #[test]
    fn bootstrapped_update() {
        let mut q = QTable::new(0.5, 0.9);
        q.set(key(1), Action::Left, 100.0);
        q.update(key(0), Action::Up, -1.0, key(1), false);
        // 0.5 * (-1 + 0.9 * 100)
        assert!((q.get(&key(0), Action::Up) - 44.5).abs() < 1e-12);
    }

    #[test]
    fn repeated_terminal_updates_converge() {
        let mut q = QTable::new(0.3, 0.9);
        for _ in 0..200 {
            q.update(key(0), Action::Stay, 7.0, key(0), true);
        }
        assert!((q.get(&key(0), Action::Stay) - 7.0).abs() < 1e-9);
    }

    #[test]
    fn zero_alpha_is_identity() {
        let mut q = QTable::new(0.0, 0.9);
        q.set(key(0), Action::Up, 3.0);
        q.set(key(1), Action::Up, 50.0);
        let before = q.clone();
        q.update(key(0), Action::Up, -1.0, key(1), false);
        q.update(key(2), Action::Down, 5.0, key(1), true);
        assert_eq!(q, before);
    }

    #[test]
    fn snapshot_is_sorted() {
        let mut q = QTable::new(0.1, 0.95);
        q.set(key(3), Action::Up, 1.5);
        q.set(key(1), Action::Stay, -2.0);
        let snap = q.snapshot();
        let rows: Vec<&str> = snap.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows, vec!["1 0 0 0 0 0 0 -2", "3 0 0 1.5 0 0 0 0"]);
    }
}
