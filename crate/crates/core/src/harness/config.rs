use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::Dynamics;
use crate::rl::{ScheduleShape, TemperatureSchedule};
use crate::seq2seq::TrainConfig;
use crate::trainer::DemoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Qlearn,
    Observation,
    Language60,
    Language80,
    Language100,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Qlearn,
        AgentKind::Observation,
        AgentKind::Language60,
        AgentKind::Language80,
        AgentKind::Language100,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Qlearn => "qlearn",
            AgentKind::Observation => "observation",
            AgentKind::Language60 => "language60",
            AgentKind::Language80 => "language80",
            AgentKind::Language100 => "language100",
        }
    }

    /// Grammar accuracy of the dataset behind a language agent.
    pub fn accuracy(self) -> Option<f64> {
        match self {
            AgentKind::Language60 => Some(0.6),
            AgentKind::Language80 => Some(0.8),
            AgentKind::Language100 => Some(1.0),
            _ => None,
        }
    }

    pub fn is_language(self) -> bool {
        self.accuracy().is_some()
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        AgentKind::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown agent `{s}` (expected qlearn, observation, language60, language80 or language100)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsMode {
    Deterministic,
    Stochastic,
}

impl DynamicsMode {
    pub fn name(self) -> &'static str {
        match self {
            DynamicsMode::Deterministic => "deterministic",
            DynamicsMode::Stochastic => "stochastic",
        }
    }

    /// Desk-scale episode budget.
    pub fn default_budget(self) -> usize {
        match self {
            DynamicsMode::Deterministic => 2000,
            DynamicsMode::Stochastic => 8000,
        }
    }
}

impl fmt::Display for DynamicsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DynamicsMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "deterministic" => Ok(DynamicsMode::Deterministic),
            "stochastic" => Ok(DynamicsMode::Stochastic),
            _ => Err(format!("unknown dynamics `{s}` (expected deterministic or stochastic)")),
        }
    }
}

/// Critique temperature schedule with the horizon given as a fraction of the
/// episode budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CritiqueSchedule {
    pub tau0: f64,
    pub tau_max: f64,
    pub horizon_fraction: f64,
    pub shape: ScheduleShape,
}

impl Default for CritiqueSchedule {
    fn default() -> Self {
        CritiqueSchedule {
            tau0: 0.2,
            tau_max: 5.0,
            horizon_fraction: 0.6,
            shape: ScheduleShape::Linear,
        }
    }
}

impl CritiqueSchedule {
    pub fn for_budget(&self, episodes: usize) -> TemperatureSchedule {
        TemperatureSchedule {
            tau0: self.tau0,
            tau_max: self.tau_max,
            horizon: (self.horizon_fraction * episodes as f64).round() as usize,
            shape: self.shape,
        }
    }
}

/// One learning experiment: an agent kind trained from scratch in
/// `replicates` independent runs on one map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: PathBuf,
    pub dynamics: DynamicsMode,
    pub p_fail: f64,
    pub agent: AgentKind,
    /// Defaults to the desk budget of the dynamics mode.
    pub episodes: Option<usize>,
    pub eval_period: usize,
    pub eval_episodes: usize,
    pub replicates: usize,
    pub seed: u64,
    pub step_cap: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub q_tau: f64,
    pub critique: CritiqueSchedule,
    pub length_normalize: bool,
    /// Run replicates on the rayon pool; output is identical either way.
    pub parallel: bool,
    pub demonstrations: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub advice_cache: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            map: PathBuf::new(),
            dynamics: DynamicsMode::Deterministic,
            p_fail: 0.2,
            agent: AgentKind::Qlearn,
            episodes: None,
            eval_period: 100,
            eval_episodes: 20,
            replicates: 10,
            seed: 0,
            step_cap: 200,
            alpha: 0.1,
            gamma: 0.95,
            q_tau: 1.0,
            critique: CritiqueSchedule::default(),
            length_normalize: false,
            parallel: true,
            demonstrations: None,
            dataset: None,
            model: None,
            advice_cache: None,
        }
    }
}

impl ExperimentConfig {
    pub fn budget(&self) -> usize {
        self.episodes.unwrap_or_else(|| self.dynamics.default_budget())
    }

    pub fn dynamics(&self) -> Dynamics {
        match self.dynamics {
            DynamicsMode::Deterministic => Dynamics::Deterministic,
            DynamicsMode::Stochastic => Dynamics::Stochastic { p_fail: self.p_fail },
        }
    }

    pub fn schedule(&self) -> TemperatureSchedule {
        self.critique.for_budget(self.budget())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        let budget = self.budget();
        if budget == 0 || self.eval_period == 0 || !budget.is_multiple_of(self.eval_period) {
            return fail(format!(
                "eval period {} must divide the episode budget {budget}",
                self.eval_period
            ));
        }
        if self.eval_episodes == 0 || self.replicates == 0 || self.step_cap == 0 {
            return fail("eval_episodes, replicates and step_cap must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("alpha {} / gamma {} out of range", self.alpha, self.gamma));
        }
        if !(self.q_tau > 0.0) {
            return fail(format!("q_tau must be positive, got {}", self.q_tau));
        }
        if !(0.0..=1.0).contains(&self.p_fail) {
            return fail(format!("p_fail {} outside [0, 1]", self.p_fail));
        }
        if !(0.0..=1.0).contains(&self.critique.horizon_fraction) {
            return fail("critique horizon_fraction must lie in [0, 1]".into());
        }
        self.schedule().validate().map_err(HarnessError::Config)
    }

    /// Canonical text used for the configuration hash. Artifact paths are
    /// dropped; artifacts are identified by content hash instead.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.map = PathBuf::new();
        c.demonstrations = None;
        c.dataset = None;
        c.model = None;
        c.advice_cache = None;
        c.episodes = Some(self.budget());
        toml::to_string(&c).expect("config serialises")
    }
}

/// The end-to-end recipe: demonstrations on the training map, three datasets
/// and models, then every agent on every test map and dynamics mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub training_map: PathBuf,
    pub test_maps: Vec<PathBuf>,
    pub dynamics: Vec<DynamicsMode>,
    pub agents: Vec<AgentKind>,
    pub demo_agents: usize,
    /// Optional grammar file; the built-in grammar otherwise.
    pub grammar: Option<PathBuf>,
    pub demo: DemoConfig,
    pub train: TrainConfig,
    /// Template for every run; map, agent, dynamics and artifact paths are
    /// filled in per run.
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            training_map: PathBuf::from("fixtures/maps/training.map"),
            test_maps: vec![
                PathBuf::from("fixtures/maps/test25.map"),
                PathBuf::from("fixtures/maps/test50.map"),
                PathBuf::from("fixtures/maps/test75.map"),
            ],
            dynamics: vec![DynamicsMode::Deterministic, DynamicsMode::Stochastic],
            agents: AgentKind::ALL.to_vec(),
            demo_agents: 300,
            grammar: None,
            demo: DemoConfig::default(),
            train: TrainConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.test_maps.is_empty() || self.dynamics.is_empty() || self.agents.is_empty() {
            return Err(HarnessError::Config("pipeline needs test maps, dynamics and agents".into()));
        }
        if self.demo_agents == 0 {
            return Err(HarnessError::Config("demo_agents must be positive".into()));
        }
        self.train.validate()?;
        for &d in &self.dynamics {
            let probe = ExperimentConfig {
                dynamics: d,
                ..self.experiment.clone()
            };
            probe.validate()?;
        }
        Ok(())
    }
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, HarnessError> {
    toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
}
