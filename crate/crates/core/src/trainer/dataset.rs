use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::demos::DemoPair;
use super::grammar::Grammar;
use crate::env::{Action, Cell, LocalView, NUM_ACTIONS};
use crate::seeding::{rng_for, streams};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("cannot build a dataset from zero demonstration pairs")]
    Empty,
    #[error("accuracy {0} outside [0, 1]")]
    Accuracy(f64),
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One training unit: a description and the view/action it describes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnnotatedExample {
    pub utterance: Vec<String>,
    pub view: LocalView,
    pub action: Action,
}

impl AnnotatedExample {
    pub fn sentence(&self) -> String {
        self.utterance.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub size: usize,
    /// Frequency of the most common sentence divided by `size`.
    pub top_sentence_share: f64,
    /// Mean over distinct sentences of frequency / `size`.
    pub mean_repetition_share: f64,
    pub distinct_sentences: usize,
}

impl DatasetStats {
    pub fn compute(examples: &[AnnotatedExample]) -> Self {
        let mut freq: HashMap<&[String], usize> = HashMap::new();
        for ex in examples {
            *freq.entry(ex.utterance.as_slice()).or_default() += 1;
        }
        let size = examples.len();
        if size == 0 {
            return DatasetStats {
                size: 0,
                top_sentence_share: 0.0,
                mean_repetition_share: 0.0,
                distinct_sentences: 0,
            };
        }
        let top = freq.values().copied().max().unwrap_or(0);
        // Integer total keeps the result independent of hash order.
        let total: usize = freq.values().sum();
        let mean = total as f64 / size as f64 / freq.len() as f64;
        DatasetStats {
            size,
            top_sentence_share: top as f64 / size as f64,
            mean_repetition_share: mean,
            distinct_sentences: freq.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<AnnotatedExample>,
    pub accuracy: f64,
    /// Number of annotated examples before duplicates were removed.
    pub raw_size: usize,
    stats: DatasetStats,
}

impl Dataset {
    /// Deduplicates (first occurrence wins) and computes statistics.
    pub fn from_examples(examples: Vec<AnnotatedExample>, accuracy: f64) -> Self {
        let raw_size = examples.len();
        let mut seen = HashSet::new();
        let examples: Vec<AnnotatedExample> = examples
            .into_iter()
            .filter(|ex| seen.insert(ex.clone()))
            .collect();
        let stats = DatasetStats::compute(&examples);
        Dataset {
            examples,
            accuracy,
            raw_size,
            stats,
        }
    }

    pub fn examples(&self) -> &[AnnotatedExample] {
        &self.examples
    }

    pub fn stats(&self) -> DatasetStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Keeps the first `n` examples.
    pub fn truncate(&mut self, n: usize) {
        self.examples.truncate(n);
        self.stats = DatasetStats::compute(&self.examples);
    }

    /// Distinct utterances in first-appearance order.
    pub fn distinct_utterances(&self) -> Vec<Vec<String>> {
        let mut seen = HashSet::new();
        self.examples
            .iter()
            .filter(|ex| seen.insert(ex.utterance.clone()))
            .map(|ex| ex.utterance.clone())
            .collect()
    }

    /// Tab-separated: utterance, nine view tokens, action token.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# dataset accuracy={} raw_size={} size={}\n",
            self.accuracy,
            self.raw_size,
            self.examples.len()
        );
        for ex in &self.examples {
            let _ = writeln!(out, "{}\t{}\t{}", ex.sentence(), ex.view, ex.action);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut examples = Vec::new();
        let mut accuracy = f64::NAN;
        let mut raw_size = None;
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| DatasetError::Parse { line: i + 1, message };
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    if let Some(v) = field.strip_prefix("accuracy=") {
                        accuracy = v.parse().map_err(|_| err(format!("bad accuracy `{v}`")))?;
                    } else if let Some(v) = field.strip_prefix("raw_size=") {
                        raw_size = Some(v.parse().map_err(|_| err(format!("bad raw_size `{v}`")))?);
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let utterance: Vec<String> = fields[0].split_whitespace().map(str::to_string).collect();
            if utterance.is_empty() {
                return Err(err("empty utterance".into()));
            }
            let view = LocalView::parse_tokens(fields[1].split_whitespace()).map_err(err)?;
            let action = fields[2].trim().parse().map_err(err)?;
            examples.push(AnnotatedExample {
                utterance,
                view,
                action,
            });
        }
        let mut dataset = Dataset::from_examples(examples, accuracy);
        if let Some(raw) = raw_size {
            dataset.raw_size = raw;
        }
        Ok(dataset)
    }
}

/// Injective key of a (view, action) payload.
fn payload_key(view: &LocalView, action: Action) -> u64 {
    let cells = view.cells().iter().fold(0u64, |acc, c| {
        acc * 7 + Cell::ALL.iter().position(|x| x == c).expect("known cell") as u64
    });
    cells * NUM_ACTIONS as u64 + action.index() as u64
}

/// Describes every pair. The generator is derived from `seed` and the
/// payload, so repeated demonstrations receive the same description at every
/// accuracy and deduplication removes the same payloads from datasets built
/// at different accuracies. Pair order and payload are preserved.
pub fn annotate(
    pairs: &[DemoPair],
    grammar: &Grammar,
    accuracy: f64,
    seed: u64,
) -> Result<Vec<AnnotatedExample>, DatasetError> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(DatasetError::Accuracy(accuracy));
    }
    Ok(pairs
        .iter()
        .map(|(view, action)| {
            let mut rng = rng_for(seed, streams::DESCRIBE, payload_key(view, *action));
            AnnotatedExample {
                utterance: grammar.describe(view, *action, accuracy, &mut rng),
                view: *view,
                action: *action,
            }
        })
        .collect())
}

pub fn build_dataset(
    pairs: &[DemoPair],
    grammar: &Grammar,
    accuracy: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(Dataset::from_examples(annotate(pairs, grammar, accuracy, seed)?, accuracy))
}
