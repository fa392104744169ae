use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{AgentKind, ExperimentConfig};
use super::{read_text, sha256_hex, HarnessError};
use crate::advice::{AdviceIndex, LanguageCritique};
use crate::env::{Frogger, FroggerMap};
use crate::rl::{evaluate_policy, run_episode, QTable};
use crate::seeding::{derive_seed, rng_for, streams};
use crate::seq2seq::checkpoint;
use crate::shaping::{Critic, ObservationCritique, ShapedPolicy};
use crate::trainer::{parse_demonstrations, Dataset, DemoPair};

/// What shapes exploration for an agent.
#[derive(Clone)]
pub enum CritiqueSource {
    None,
    Demonstrations(Arc<Vec<DemoPair>>),
    Advice(Arc<AdviceIndex>),
}

/// Everything a run needs besides its configuration, with content hashes for
/// provenance.
#[derive(Clone)]
pub struct ExperimentInputs {
    pub map: FroggerMap,
    pub critique: CritiqueSource,
    pub hashes: BTreeMap<String, String>,
}

impl ExperimentInputs {
    pub fn new(map: FroggerMap, critique: CritiqueSource) -> Self {
        let mut hashes = BTreeMap::new();
        hashes.insert("map".to_string(), sha256_hex(map.to_string().as_bytes()));
        ExperimentInputs { map, critique, hashes }
    }

    pub fn with_hash(mut self, name: &str, hash: String) -> Self {
        self.hashes.insert(name.to_string(), hash);
        self
    }
}

/// Reads the map and the artifacts the configured agent needs.
pub fn load_inputs(config: &ExperimentConfig) -> Result<ExperimentInputs, HarnessError> {
    let map_text = read_text(&config.map)?;
    let map = FroggerMap::parse(&map_text)?;
    let required = |p: &Option<std::path::PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| HarnessError::MissingArtifact(format!("agent {} needs a {what} path", config.agent)))
    };
    match config.agent {
        AgentKind::Qlearn => Ok(ExperimentInputs::new(map, CritiqueSource::None)),
        AgentKind::Observation => {
            let path = required(&config.demonstrations, "demonstrations")?;
            let text = read_text(&path)?;
            let pairs = parse_demonstrations(&text)?;
            Ok(ExperimentInputs::new(map, CritiqueSource::Demonstrations(Arc::new(pairs)))
                .with_hash("demonstrations", sha256_hex(text.as_bytes())))
        }
        kind => {
            let dataset_path = required(&config.dataset, "dataset")?;
            let model_path = required(&config.model, "model")?;
            let dataset_text = read_text(&dataset_path)?;
            let dataset = Dataset::parse(&dataset_text)?;
            let expected = kind.accuracy().expect("language agent");
            if (dataset.accuracy - expected).abs() > 1e-9 {
                return Err(HarnessError::Config(format!(
                    "agent {kind} expects a dataset built at accuracy {expected}, {} has {}",
                    dataset_path.display(),
                    dataset.accuracy
                )));
            }
            let model_bytes = std::fs::read(&model_path).map_err(|e| HarnessError::io(&model_path, e))?;
            let model = checkpoint::from_bytes(&model_bytes)?.model;
            let index = AdviceIndex::from_dataset(Arc::new(model), &dataset)?
                .with_length_normalization(config.length_normalize);
            if let Some(cache) = &config.advice_cache {
                if cache.exists() {
                    index.load_cache_text(&read_text(cache)?)?;
                }
            }
            Ok(ExperimentInputs::new(map, CritiqueSource::Advice(Arc::new(index)))
                .with_hash("dataset", sha256_hex(dataset_text.as_bytes()))
                .with_hash("model", sha256_hex(&model_bytes)))
        }
    }
}

/// Evaluation rewards over training: `rewards[r][k]` is replicate `r` after
/// `episodes[k]` training episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub agent: String,
    pub episodes: Vec<usize>,
    pub rewards: Vec<Vec<f64>>,
}

impl LearningCurve {
    pub fn replicates(&self) -> usize {
        self.rewards.len()
    }

    pub fn mean(&self, row: usize) -> f64 {
        self.rewards.iter().map(|r| r[row]).sum::<f64>() / self.rewards.len() as f64
    }

    /// Standard error of the cross-replicate mean (0 for one replicate).
    pub fn stderr(&self, row: usize) -> f64 {
        let n = self.rewards.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean(row);
        let var = self.rewards.iter().map(|r| (r[row] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.episodes.len()).map(|k| self.mean(k)).collect()
    }

    /// `episode,rep0..repN,mean,stderr`, six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode");
        for r in 0..self.replicates() {
            let _ = write!(out, ",rep{r}");
        }
        out.push_str(",mean,stderr\n");
        for (k, e) in self.episodes.iter().enumerate() {
            let _ = write!(out, "{e}");
            for rep in &self.rewards {
                let _ = write!(out, ",{:.6}", rep[k]);
            }
            let _ = writeln!(out, ",{:.6},{:.6}", self.mean(k), self.stderr(k));
        }
        out
    }

    pub fn from_csv(agent: &str, text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| HarnessError::Parse("empty curve file".into()))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 4 || columns[0] != "episode" || columns[columns.len() - 2..] != ["mean", "stderr"] {
            return Err(HarnessError::Parse(format!("unexpected curve header `{header}`")));
        }
        let reps = columns.len() - 3;
        let mut episodes = Vec::new();
        let mut rewards = vec![Vec::new(); reps];
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(HarnessError::Parse(format!("curve row {} has {} fields", i + 2, fields.len())));
            }
            let bad = |f: &str| HarnessError::Parse(format!("curve row {}: bad number `{f}`", i + 2));
            episodes.push(fields[0].parse().map_err(|_| bad(fields[0]))?);
            for (r, f) in fields[1..=reps].iter().enumerate() {
                rewards[r].push(f.parse().map_err(|_| bad(f))?);
            }
        }
        Ok(LearningCurve {
            agent: agent.to_string(),
            episodes,
            rewards,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub agent: AgentKind,
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    pub master_seed: u64,
    pub replicate_seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub length_normalize: bool,
    /// Views scored by the advice index by the end of the run (0 when the
    /// agent has no language critique).
    pub advice_views: usize,
    /// Canonical configuration text behind `config_hash`.
    pub config_text: String,
}

impl Provenance {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "agent = {}", self.agent);
        let _ = writeln!(out, "config_sha256 = {}", self.config_hash);
        for (k, v) in &self.input_hashes {
            let _ = writeln!(out, "{k}_sha256 = {v}");
        }
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        let seeds: Vec<String> = self.replicate_seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "replicate_seeds = {}", seeds.join(","));
        let _ = writeln!(out, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(out, "length_normalize = {}", self.length_normalize);
        let _ = writeln!(out, "advice_views = {}", self.advice_views);
        out.push_str("\n# configuration\n");
        out.push_str(&self.config_text);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub curve: LearningCurve,
    pub provenance: Provenance,
}

pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    derive_seed(master, streams::REPLICATE, replicate as u64)
}

/// Trains one agent from an empty Q-table, evaluating greedily every
/// `eval_period` episodes. Evaluation seeds depend only on the replicate seed
/// and checkpoint, so agents are paired across runs with the same master seed.
fn run_replicate(config: &ExperimentConfig, env: &Frogger, critic: Option<Arc<dyn Critic>>, seed: u64) -> Vec<f64> {
    let mut table = QTable::new(config.alpha, config.gamma);
    let mut policy = match critic {
        Some(c) => ShapedPolicy::with_critic(config.q_tau, c),
        None => ShapedPolicy::q_only(config.q_tau),
    };
    let mut rng = rng_for(seed, streams::TRAIN_EPISODE, 0);
    let budget = config.budget();
    let mut rewards = Vec::with_capacity(budget / config.eval_period);
    for episode in 0..budget {
        policy.episode = episode;
        run_episode(env, &mut table, &policy, config.step_cap, &mut rng);
        if (episode + 1) % config.eval_period == 0 {
            let checkpoint = (episode + 1) / config.eval_period;
            let eval_seed = derive_seed(seed, streams::EVAL, checkpoint as u64);
            rewards.push(evaluate_policy(env, &table, config.eval_episodes, config.step_cap, eval_seed));
        }
    }
    rewards
}

pub fn run_experiment(config: &ExperimentConfig, inputs: &ExperimentInputs) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let env = Frogger::new(inputs.map.clone(), config.dynamics());
    let schedule = config.schedule();
    let critic: Option<Arc<dyn Critic>> = match (&inputs.critique, config.agent) {
        (CritiqueSource::None, AgentKind::Qlearn) => None,
        (CritiqueSource::Demonstrations(pairs), AgentKind::Observation) => {
            let mut c = ObservationCritique::new(schedule);
            for (view, action) in pairs.iter() {
                c.ingest(*view, *action);
            }
            Some(Arc::new(c))
        }
        (CritiqueSource::Advice(index), kind) if kind.is_language() => {
            // Every running state is a safe cell at some phase; scoring their
            // views up front keeps the training loop free of model calls.
            index.warm(env.safe_states().iter().map(|s| env.local_view(s)));
            Some(Arc::new(LanguageCritique {
                index: index.clone(),
                schedule,
            }))
        }
        (_, kind) => {
            return Err(HarnessError::Config(format!("agent {kind} does not match the supplied critique source")));
        }
    };
    let seeds: Vec<u64> = (0..config.replicates).map(|r| replicate_seed(config.seed, r)).collect();
    let run = |&seed: &u64| run_replicate(config, &env, critic.clone(), seed);
    let rewards: Vec<Vec<f64>> = if config.parallel {
        seeds.par_iter().map(run).collect()
    } else {
        seeds.iter().map(run).collect()
    };
    let budget = config.budget();
    let curve = LearningCurve {
        agent: config.agent.name().to_string(),
        episodes: (1..=budget / config.eval_period).map(|k| k * config.eval_period).collect(),
        rewards,
    };
    let advice_views = match &inputs.critique {
        CritiqueSource::Advice(index) => index.cache_len(),
        _ => 0,
    };
    let config_text = config.canonical();
    let provenance = Provenance {
        agent: config.agent,
        config_hash: sha256_hex(config_text.as_bytes()),
        input_hashes: inputs.hashes.clone(),
        master_seed: config.seed,
        replicate_seeds: seeds,
        eval_episodes: config.eval_episodes,
        length_normalize: config.length_normalize,
        advice_views,
        config_text,
    };
    Ok(ExperimentResult { curve, provenance })
}

/// Writes `<stem>.csv` and `<stem>.provenance` under `dir`.
pub fn write_result(dir: &Path, stem: &str, result: &ExperimentResult) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, result.curve.to_csv()).map_err(|e| HarnessError::io(&csv, e))?;
    let prov = dir.join(format!("{stem}.provenance"));
    std::fs::write(&prov, result.provenance.to_text()).map_err(|e| HarnessError::io(&prov, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPTY: &str = "frogger v1 9 5\nt- .........\nr> .........\ng- .........\nr< .........\ng- ....A....\n";

    fn config(agent: AgentKind, episodes: usize, replicates: usize) -> ExperimentConfig {
        ExperimentConfig {
            agent,
            episodes: Some(episodes),
            replicates,
            seed: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_row_per_evaluation_period() {
        let map = FroggerMap::parse(EMPTY).unwrap();
        let cfg = config(AgentKind::Qlearn, 500, 2);
        let result = run_experiment(&cfg, &ExperimentInputs::new(map, CritiqueSource::None)).unwrap();
        assert_eq!(result.curve.episodes, [100, 200, 300, 400, 500]);
        assert!(result.curve.rewards.iter().all(|r| r.len() == 5));
        assert_eq!(result.provenance.replicate_seeds, [replicate_seed(5, 0), replicate_seed(5, 1)]);
        assert!(result.provenance.to_text().contains(&result.provenance.config_hash));
    }

    #[test]
    fn reruns_are_byte_identical_and_parallelism_is_invisible() {
        let map = FroggerMap::parse(EMPTY).unwrap();
        let inputs = ExperimentInputs::new(map, CritiqueSource::None);
        let cfg = config(AgentKind::Qlearn, 200, 3);
        let a = run_experiment(&cfg, &inputs).unwrap();
        let b = run_experiment(&cfg, &inputs).unwrap();
        let serial = ExperimentConfig { parallel: false, ..cfg };
        let c = run_experiment(&serial, &inputs).unwrap();
        assert_eq!(a.curve.to_csv(), b.curve.to_csv());
        assert_eq!(a.curve.to_csv(), c.curve.to_csv());
        assert_eq!(a.provenance.to_text(), b.provenance.to_text());
    }

    #[test]
    fn mismatched_critique_is_rejected() {
        let map = FroggerMap::parse(EMPTY).unwrap();
        let inputs = ExperimentInputs::new(map, CritiqueSource::None);
        let cfg = config(AgentKind::Observation, 200, 1);
        assert!(matches!(run_experiment(&cfg, &inputs), Err(HarnessError::Config(_))));
    }

    #[test]
    fn curve_csv_round_trip() {
        let curve = LearningCurve {
            agent: "qlearn".into(),
            episodes: vec![100, 200],
            rewards: vec![vec![-10.0, 92.0], vec![-4.5, 90.0]],
        };
        let text = curve.to_csv();
        assert!(text.starts_with("episode,rep0,rep1,mean,stderr\n100,-10.000000,-4.500000,-7.250000,2.750000\n"));
        assert_eq!(LearningCurve::from_csv("qlearn", &text).unwrap(), curve);
        assert!(LearningCurve::from_csv("x", "nope\n").is_err());
    }
}
