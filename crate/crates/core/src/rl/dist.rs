use rand::Rng;
use thiserror::Error;

use crate::env::{Action, NUM_ACTIONS};

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("non-finite action value {0}")]
    NonFinite(f64),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("degenerate distribution: all products are zero")]
    Degenerate,
}

/// Probabilities over the five actions, indexed by `Action::index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution([f64; NUM_ACTIONS]);

impl ActionDistribution {
    pub fn uniform() -> Self {
        ActionDistribution([1.0 / NUM_ACTIONS as f64; NUM_ACTIONS])
    }

    /// Normalises non-negative weights. Fails when they sum to zero.
    pub fn from_weights(weights: [f64; NUM_ACTIONS]) -> Result<Self, DistError> {
        if let Some(&bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(DistError::NonFinite(bad));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DistError::Degenerate);
        }
        Ok(ActionDistribution(weights.map(|w| w / total)))
    }

    pub fn probs(&self) -> &[f64; NUM_ACTIONS] {
        &self.0
    }

    pub fn prob(&self, action: Action) -> f64 {
        self.0[action.index()]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::from_index(i);
            }
        }
        // Rounding can leave `acc` a hair below 1; fall back to the last
        // action with mass.
        let last = self.0.iter().rposition(|&p| p > 0.0).unwrap_or(NUM_ACTIONS - 1);
        Action::from_index(last)
    }

    pub fn argmax(&self) -> Action {
        Action::from_index(argmax(&self.0))
    }

    pub fn total_variation(&self, other: &ActionDistribution) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Boltzmann (softmax) distribution `exp(v/tau) / sum exp(v'/tau)`, computed
/// with the maximum subtracted first.
pub fn boltzmann(values: &[f64; NUM_ACTIONS], tau: f64) -> Result<ActionDistribution, DistError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(DistError::Temperature(tau));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(DistError::NonFinite(bad));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = values.map(|v| ((v - max) / tau).exp());
    let total: f64 = exps.iter().sum();
    Ok(ActionDistribution(exps.map(|e| e / total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_values_are_uniform() {
        let d = boltzmann(&[3.0; 5], 0.7).unwrap();
        for p in d.probs() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unit_advantage() {
        let d = boltzmann(&[1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((d.prob(Action::Up) - e / (e + 4.0)).abs() < 1e-15);
        assert!((d.prob(Action::Up) - 0.4046).abs() < 1e-4);
    }

    #[test]
    fn high_temperature_is_near_uniform() {
        let d = boltzmann(&[5.0, -3.0, 1.0, 0.0, 2.0], 1e6).unwrap();
        assert!(d.probs().iter().all(|p| (p - 0.2).abs() < 1e-5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            boltzmann(&[f64::NAN, 0.0, 0.0, 0.0, 0.0], 1.0),
            Err(DistError::NonFinite(_))
        ));
        assert!(matches!(
            boltzmann(&[f64::INFINITY, 0.0, 0.0, 0.0, 0.0], 1.0),
            Err(DistError::NonFinite(_))
        ));
        assert_eq!(boltzmann(&[0.0; 5], 0.0), Err(DistError::Temperature(0.0)));
    }

    #[test]
    fn sampling_follows_probabilities() {
        use rand::SeedableRng;
        let d = ActionDistribution::from_weights([0.5, 0.0, 0.25, 0.0, 0.25]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 5];
        for _ in 0..40_000 {
            counts[d.sample(&mut rng).index()] += 1;
        }
        assert_eq!(counts[1] + counts[3], 0);
        assert!((counts[0] as f64 / 40_000.0 - 0.5).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn normalises_and_keeps_argmax(
            values in prop::array::uniform5(-200.0f64..200.0),
            tau in 0.01f64..50.0,
        ) {
            let d = boltzmann(&values, tau).unwrap();
            let sum: f64 = d.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
            prop_assert_eq!(argmax(d.probs()), argmax(&values));
        }

        #[test]
        fn shift_invariant(
            values in prop::array::uniform5(-50.0f64..50.0),
            shift in -1000.0f64..1000.0,
            tau in 0.1f64..10.0,
        ) {
            let a = boltzmann(&values, tau).unwrap();
            let b = boltzmann(&values.map(|v| v + shift), tau).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
