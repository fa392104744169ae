use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    Constant,
    Linear,
    Geometric,
}

/// Non-decreasing temperature over training episodes: `tau0` at episode 0,
/// `tau_max` from `horizon` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau0: f64,
    pub tau_max: f64,
    pub horizon: usize,
    pub shape: ScheduleShape,
}

impl TemperatureSchedule {
    pub fn constant(tau: f64) -> Self {
        TemperatureSchedule {
            tau0: tau,
            tau_max: tau,
            horizon: 1,
            shape: ScheduleShape::Constant,
        }
    }

    pub fn linear(tau0: f64, tau_max: f64, horizon: usize) -> Self {
        TemperatureSchedule {
            tau0,
            tau_max,
            horizon,
            shape: ScheduleShape::Linear,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(format!("tau0 must be positive, got {}", self.tau0));
        }
        if !(self.tau_max >= self.tau0 && self.tau_max.is_finite()) {
            return Err(format!(
                "tau_max ({}) must be finite and >= tau0 ({})",
                self.tau_max, self.tau0
            ));
        }
        if self.shape == ScheduleShape::Constant && self.tau_max != self.tau0 {
            return Err("a constant schedule needs tau_max == tau0".into());
        }
        Ok(())
    }

    pub fn tau(&self, episode: usize) -> f64 {
        let progress = if self.horizon == 0 {
            1.0
        } else {
            (episode as f64 / self.horizon as f64).min(1.0)
        };
        match self.shape {
            ScheduleShape::Constant => self.tau0,
            ScheduleShape::Linear if progress >= 1.0 => self.tau_max,
            ScheduleShape::Linear => self.tau0 + (self.tau_max - self.tau0) * progress,
            ScheduleShape::Geometric if progress >= 1.0 => self.tau_max,
            ScheduleShape::Geometric => self.tau0 * (self.tau_max / self.tau0).powf(progress),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_monotonicity() {
        for shape in [ScheduleShape::Linear, ScheduleShape::Geometric] {
            let s = TemperatureSchedule {
                tau0: 0.2,
                tau_max: 5.0,
                horizon: 600,
                shape,
            };
            s.validate().unwrap();
            assert_eq!(s.tau(0), 0.2);
            assert_eq!(s.tau(600), 5.0);
            assert_eq!(s.tau(10_000), 5.0);
            let mut prev = 0.0;
            for e in 0..700 {
                let t = s.tau(e);
                assert!(t >= prev);
                prev = t;
            }
        }
        let c = TemperatureSchedule::constant(1.5);
        assert_eq!(c.tau(0), 1.5);
        assert_eq!(c.tau(99), 1.5);
    }

    #[test]
    fn linear_midpoint() {
        let s = TemperatureSchedule::linear(1.0, 3.0, 100);
        assert!((s.tau(50) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_schedules() {
        assert!(TemperatureSchedule::linear(0.0, 1.0, 10).validate().is_err());
        assert!(TemperatureSchedule::linear(2.0, 1.0, 10).validate().is_err());
    }
}
