use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::compare::compare_curves;
use super::config::{AgentKind, ExperimentConfig, PipelineConfig};
use super::experiment::{run_experiment, CritiqueSource, ExperimentInputs, LearningCurve};
use super::{read_text, sha256_hex, write_text, HarnessError};
use crate::advice::AdviceIndex;
use crate::env::FroggerMap;
use crate::seq2seq::{checkpoint, loss_trace_csv, train, TrainConfig};
use crate::trainer::{build_dataset, collect_demonstrations, format_demonstrations, Dataset, Grammar};

pub const MANIFEST: &str = "manifest.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Stage names in execution order with what happened to each.
    pub stages: Vec<(String, StageStatus)>,
    pub manifest: PathBuf,
}

impl PipelineReport {
    pub fn ran(&self) -> usize {
        self.stages.iter().filter(|(_, s)| *s == StageStatus::Ran).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    stage: String,
    artifact: String,
    key: String,
    sha256: String,
}

/// Stage bookkeeping. A stage is current when the manifest records the same
/// input key for it and every artifact it lists still hashes to the recorded
/// value.
struct Manifest {
    dir: PathBuf,
    previous: Vec<Entry>,
    entries: Vec<Entry>,
    report: Vec<(String, StageStatus)>,
}

impl Manifest {
    fn open(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(MANIFEST);
        let mut previous = Vec::new();
        if path.exists() {
            for (i, line) in read_text(&path)?.lines().enumerate().skip(1) {
                let f: Vec<&str> = line.split('\t').collect();
                if f.len() != 4 {
                    return Err(HarnessError::Parse(format!("manifest line {}: expected 4 fields", i + 1)));
                }
                previous.push(Entry {
                    stage: f[0].into(),
                    artifact: f[1].into(),
                    key: f[2].into(),
                    sha256: f[3].into(),
                });
            }
        }
        Ok(Manifest {
            dir: dir.to_path_buf(),
            previous,
            entries: Vec::new(),
            report: Vec::new(),
        })
    }

    fn current(&self, stage: &str, key: &str) -> Option<Vec<Entry>> {
        let recorded: Vec<Entry> = self.previous.iter().filter(|e| e.stage == stage).cloned().collect();
        if recorded.is_empty() || recorded.iter().any(|e| e.key != key) {
            return None;
        }
        let intact = recorded.iter().all(|e| {
            std::fs::read(self.dir.join(&e.artifact))
                .map(|bytes| sha256_hex(&bytes) == e.sha256)
                .unwrap_or(false)
        });
        intact.then_some(recorded)
    }

    /// Runs `produce` unless the stage is current. `produce` returns the
    /// artifact files (relative to the output directory) and their contents.
    fn stage<F>(&mut self, stage: &str, key: &str, produce: F) -> Result<(), HarnessError>
    where
        F: FnOnce() -> Result<Vec<(String, Vec<u8>)>, HarnessError>,
    {
        if let Some(recorded) = self.current(stage, key) {
            self.entries.extend(recorded);
            self.report.push((stage.to_string(), StageStatus::Skipped));
            return Ok(());
        }
        let artifacts = produce().map_err(|e| HarnessError::Stage {
            stage: stage.to_string(),
            message: e.to_string(),
        })?;
        for (name, bytes) in artifacts {
            let path = self.dir.join(&name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
            }
            std::fs::write(&path, &bytes).map_err(|e| HarnessError::io(&path, e))?;
            self.entries.push(Entry {
                stage: stage.to_string(),
                artifact: name,
                key: key.to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        self.report.push((stage.to_string(), StageStatus::Ran));
        Ok(())
    }

    fn sha(&self, artifact: &str) -> String {
        self.entries
            .iter()
            .find(|e| e.artifact == artifact)
            .map(|e| e.sha256.clone())
            .expect("artifact recorded by an earlier stage")
    }

    fn hashes(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|e| (e.artifact.clone(), e.sha256.clone())).collect()
    }

    fn finish(self) -> Result<PipelineReport, HarnessError> {
        let mut text = String::from("stage\tartifact\tkey\tsha256\n");
        for e in &self.entries {
            let _ = writeln!(text, "{}\t{}\t{}\t{}", e.stage, e.artifact, e.key, e.sha256);
        }
        let manifest = self.dir.join(MANIFEST);
        write_text(&manifest, &text)?;
        Ok(PipelineReport {
            stages: self.report,
            manifest,
        })
    }
}

fn read_artifact(dir: &Path, artifact: &str) -> Result<String, HarnessError> {
    read_text(&dir.join(artifact))
}

fn key_of(parts: &[&str]) -> String {
    sha256_hex(parts.join("\n").as_bytes())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn map_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| "map".to_string(), |s| s.to_string_lossy().into_owned())
}

fn accuracy_label(acc: f64) -> String {
    format!("{}", (acc * 100.0).round() as u32)
}

/// Runs the whole recipe into `out_dir`: demonstrations on the training map,
/// one dataset and model per grammar accuracy, every agent on every test map
/// and dynamics mode, and a comparison table per map and mode. Relative paths
/// in `config` resolve against `base_dir`. The pipeline seed drives every
/// stage, so two runs with the same configuration write identical files.
pub fn run_pipeline(config: &PipelineConfig, base_dir: &Path, out_dir: &Path) -> Result<PipelineReport, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut manifest = Manifest::open(out_dir)?;
    let seed = config.seed.to_string();

    let training_text = read_text(&resolve(base_dir, &config.training_map))?;
    let training_map = FroggerMap::parse(&training_text)?;
    let demo_key = key_of(&[
        "collect",
        &sha256_hex(training_text.as_bytes()),
        &toml::to_string(&config.demo).expect("demo config serialises"),
        &config.demo_agents.to_string(),
        &seed,
    ]);
    manifest.stage("collect", &demo_key, || {
        let pairs = collect_demonstrations(&training_map, config.demo_agents, config.seed, &config.demo)?;
        Ok(vec![("demonstrations.tsv".into(), format_demonstrations(&pairs).into_bytes())])
    })?;
    let demo_sha = manifest.sha("demonstrations.tsv");

    let grammar_text = match &config.grammar {
        Some(p) => read_text(&resolve(base_dir, p))?,
        None => crate::trainer::DEFAULT_GRAMMAR.to_string(),
    };
    let grammar_sha = sha256_hex(grammar_text.as_bytes());
    let train_config = TrainConfig {
        seed: config.seed,
        ..config.train
    };
    let train_text = toml::to_string(&train_config).expect("train config serialises");

    let language: Vec<AgentKind> = AgentKind::ALL.iter().copied().filter(|a| a.is_language()).collect();
    for kind in &language {
        let acc = kind.accuracy().expect("language agent");
        let label = accuracy_label(acc);
        let dataset_name = format!("dataset_{label}.tsv");
        let key = key_of(&["dataset", &demo_sha, &grammar_sha, &acc.to_string(), &seed]);
        manifest.stage(&format!("dataset-{label}"), &key, || {
            let text = read_artifact(out_dir, "demonstrations.tsv")?;
            let pairs = crate::trainer::parse_demonstrations(&text)?;
            let grammar = Grammar::parse(&grammar_text)?;
            let dataset = build_dataset(&pairs, &grammar, acc, config.seed)?;
            Ok(vec![(dataset_name.clone(), dataset.to_text().into_bytes())])
        })?;
        let dataset_sha = manifest.sha(&dataset_name);
        let key = key_of(&["model", &dataset_sha, &train_text]);
        manifest.stage(&format!("model-{label}"), &key, || {
            let text = read_artifact(out_dir, &dataset_name)?;
            let dataset = Dataset::parse(&text)?;
            let outcome = train(dataset.examples(), &train_config)?;
            Ok(vec![
                (format!("model_{label}.bin"), checkpoint::to_bytes(&outcome.model, &train_config)),
                (format!("loss_{label}.csv"), loss_trace_csv(&outcome.trace).into_bytes()),
            ])
        })?;
    }

    // Advice indexes are shared by every run of a model so views scored on
    // one map are reused on the next.
    let mut indexes: BTreeMap<String, Arc<AdviceIndex>> = BTreeMap::new();
    for map_path in &config.test_maps {
        let map_text = read_text(&resolve(base_dir, map_path))?;
        let map = FroggerMap::parse(&map_text)?;
        let map_sha = sha256_hex(map_text.as_bytes());
        let label = map_label(map_path);
        for &dynamics in &config.dynamics {
            let mut curve_files = Vec::new();
            for &agent in &config.agents {
                let run = ExperimentConfig {
                    agent,
                    dynamics,
                    seed: config.seed,
                    ..config.experiment.clone()
                };
                let stem = format!("runs/{label}_{}_{}", dynamics.name(), agent.name());
                let mut parts = vec!["run".to_string(), run.canonical(), map_sha.clone()];
                let artifact = match agent {
                    AgentKind::Qlearn => None,
                    AgentKind::Observation => Some("demonstrations.tsv".to_string()),
                    kind => Some(format!("model_{}.bin", accuracy_label(kind.accuracy().expect("language agent")))),
                };
                if let Some(a) = &artifact {
                    parts.push(manifest.sha(a));
                }
                if agent.is_language() {
                    let acc = accuracy_label(agent.accuracy().expect("language agent"));
                    parts.push(manifest.sha(&format!("dataset_{acc}.tsv")));
                }
                let key = key_of(&parts.iter().map(String::as_str).collect::<Vec<_>>());
                let stage_name = format!("run-{label}-{}-{}", dynamics.name(), agent.name());
                let csv_name = format!("{stem}.csv");
                let hashes = manifest.hashes();
                manifest.stage(&stage_name, &key, || {
                    let inputs = pipeline_inputs(out_dir, &hashes, &mut indexes, map.clone(), agent)?;
                    let result = run_experiment(&run, &inputs)?;
                    Ok(vec![
                        (csv_name.clone(), result.curve.to_csv().into_bytes()),
                        (format!("{stem}.provenance"), result.provenance.to_text().into_bytes()),
                    ])
                })?;
                curve_files.push((agent, csv_name));
            }
            let mut parts = vec!["compare".to_string()];
            for (_, f) in &curve_files {
                parts.push(manifest.sha(f));
            }
            let key = key_of(&parts.iter().map(String::as_str).collect::<Vec<_>>());
            manifest.stage(&format!("compare-{label}-{}", dynamics.name()), &key, || {
                let mut curves = Vec::new();
                for (agent, f) in &curve_files {
                    curves.push(LearningCurve::from_csv(agent.name(), &read_artifact(out_dir, f)?)?);
                }
                let table = compare_curves(&curves)?.to_table();
                Ok(vec![(format!("summary_{label}_{}.txt", dynamics.name()), table.into_bytes())])
            })?;
        }
    }
    manifest.finish()
}

fn pipeline_inputs(
    dir: &Path,
    hashes: &BTreeMap<String, String>,
    indexes: &mut BTreeMap<String, Arc<AdviceIndex>>,
    map: FroggerMap,
    agent: AgentKind,
) -> Result<ExperimentInputs, HarnessError> {
    let sha = |name: &str| hashes.get(name).cloned().unwrap_or_default();
    match agent {
        AgentKind::Qlearn => Ok(ExperimentInputs::new(map, CritiqueSource::None)),
        AgentKind::Observation => {
            let pairs = crate::trainer::parse_demonstrations(&read_artifact(dir, "demonstrations.tsv")?)?;
            Ok(ExperimentInputs::new(map, CritiqueSource::Demonstrations(Arc::new(pairs)))
                .with_hash("demonstrations", sha("demonstrations.tsv")))
        }
        kind => {
            let label = accuracy_label(kind.accuracy().expect("language agent"));
            let dataset_name = format!("dataset_{label}.tsv");
            let model_name = format!("model_{label}.bin");
            let index = match indexes.get(&label) {
                Some(index) => index.clone(),
                None => {
                    let dataset = Dataset::parse(&read_artifact(dir, &dataset_name)?)?;
                    let path = dir.join(&model_name);
                    let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
                    let model = checkpoint::from_bytes(&bytes)?.model;
                    let index = Arc::new(AdviceIndex::from_dataset(Arc::new(model), &dataset)?);
                    indexes.insert(label.clone(), index.clone());
                    index
                }
            };
            Ok(ExperimentInputs::new(map, CritiqueSource::Advice(index))
                .with_hash("dataset", sha(&dataset_name))
                .with_hash("model", sha(&model_name)))
        }
    }
}
