//! Language critique: for a view, find the training utterance whose best
//! (view, action) reconstruction is most likely, and turn that utterance's
//! five action scores into a distribution.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::env::{LocalView, NUM_ACTIONS};
use crate::rl::{boltzmann, ActionDistribution, TemperatureSchedule};
use crate::seq2seq::{Encoded, ModelError, Seq2SeqModel, TARGET_LEN};
use crate::shaping::Critic;
use crate::trainer::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum AdviceError {
    #[error("an advice index needs at least one utterance")]
    NoUtterances,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("advice cache line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Chosen utterance and its per-action log probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advice {
    pub utterance: usize,
    pub scores: [f64; NUM_ACTIONS],
}

pub struct AdviceIndex {
    model: Arc<Seq2SeqModel>,
    utterances: Vec<Vec<String>>,
    encodings: Vec<Encoded>,
    length_normalize: bool,
    cache: RwLock<HashMap<LocalView, Advice>>,
}

impl AdviceIndex {
    /// Utterances are scored in the given order; ids are positions.
    pub fn new(model: Arc<Seq2SeqModel>, utterances: Vec<Vec<String>>) -> Result<Self, AdviceError> {
        if utterances.is_empty() {
            return Err(AdviceError::NoUtterances);
        }
        let encodings = utterances
            .iter()
            .map(|u| model.encode(u))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AdviceIndex {
            model,
            utterances,
            encodings,
            length_normalize: false,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Distinct utterances of `dataset` in first-appearance order.
    pub fn from_dataset(model: Arc<Seq2SeqModel>, dataset: &Dataset) -> Result<Self, AdviceError> {
        Self::new(model, dataset.distinct_utterances())
    }

    /// Divide scores by the target length before selection. Clears the cache.
    pub fn with_length_normalization(mut self, on: bool) -> Self {
        self.length_normalize = on;
        self.cache = RwLock::new(HashMap::new());
        self
    }

    pub fn length_normalized(&self) -> bool {
        self.length_normalize
    }

    pub fn utterances(&self) -> &[Vec<String>] {
        &self.utterances
    }

    pub fn model(&self) -> &Seq2SeqModel {
        &self.model
    }

    /// Scores every (utterance, action) pair for `view`; the strictly largest
    /// score picks the utterance, so ties go to the lowest id.
    pub fn compute(&self, view: &LocalView) -> Advice {
        let mut best: Option<(f64, Advice)> = None;
        for (i, enc) in self.encodings.iter().enumerate() {
            let mut scores = self.model.score_actions(enc, view);
            if self.length_normalize {
                scores.iter_mut().for_each(|s| *s /= TARGET_LEN as f64);
            }
            let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if best.as_ref().is_none_or(|(b, _)| top > *b) {
                best = Some((top, Advice { utterance: i, scores }));
            }
        }
        best.expect("index is non-empty").1
    }

    /// Cached [`AdviceIndex::compute`].
    pub fn select_advice(&self, view: &LocalView) -> Advice {
        if let Some(hit) = self.cache.read().expect("cache lock").get(view) {
            return *hit;
        }
        let advice = self.compute(view);
        self.cache.write().expect("cache lock").insert(*view, advice);
        advice
    }

    /// Computes missing entries for `views` in parallel.
    pub fn warm<I: IntoIterator<Item = LocalView>>(&self, views: I) {
        let missing: Vec<LocalView> = {
            let cache = self.cache.read().expect("cache lock");
            let mut v: Vec<LocalView> = views.into_iter().filter(|v| !cache.contains_key(v)).collect();
            v.sort_by_key(|v| v.to_string());
            v.dedup();
            v
        };
        let computed: Vec<(LocalView, Advice)> = missing.par_iter().map(|v| (*v, self.compute(v))).collect();
        self.cache.write().expect("cache lock").extend(computed);
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// `view<TAB>utterance id<TAB>five scores`, sorted by view text.
    pub fn cache_to_text(&self) -> String {
        let cache = self.cache.read().expect("cache lock");
        let mut rows: Vec<(String, &Advice)> = cache.iter().map(|(v, a)| (v.to_string(), a)).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = String::from("# view\tutterance\tscores\n");
        for (view, a) in rows {
            let scores: Vec<String> = a.scores.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{view}\t{}\t{}", a.utterance, scores.join(" "));
        }
        out
    }

    /// Loads entries written by [`AdviceIndex::cache_to_text`] for the same
    /// model and utterance list.
    pub fn load_cache_text(&self, text: &str) -> Result<usize, AdviceError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| AdviceError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let view = LocalView::parse_tokens(fields[0].split_whitespace()).map_err(err)?;
            let utterance: usize = fields[1].parse().map_err(|_| err(format!("bad utterance id `{}`", fields[1])))?;
            if utterance >= self.utterances.len() {
                return Err(err(format!("utterance id {utterance} out of range")));
            }
            let parsed: Vec<f64> = fields[2]
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| err(format!("bad score `{s}`"))))
                .collect::<Result<_, _>>()?;
            let scores: [f64; NUM_ACTIONS] = parsed
                .try_into()
                .map_err(|_| err("expected five scores".into()))?;
            entries.push((view, Advice { utterance, scores }));
        }
        let n = entries.len();
        self.cache.write().expect("cache lock").extend(entries);
        Ok(n)
    }
}

/// Boltzmann over the chosen utterance's scores at `tau(episode)`.
pub fn language_critique(
    view: &LocalView,
    index: &AdviceIndex,
    episode: usize,
    schedule: &TemperatureSchedule,
) -> ActionDistribution {
    critique_from_scores(&index.select_advice(view).scores, schedule.tau(episode))
}

pub fn critique_from_scores(scores: &[f64; NUM_ACTIONS], tau: f64) -> ActionDistribution {
    boltzmann(scores, tau).expect("log probabilities are finite and tau is positive")
}

/// [`Critic`] adapter over a shared index.
pub struct LanguageCritique {
    pub index: Arc<AdviceIndex>,
    pub schedule: TemperatureSchedule,
}

impl Critic for LanguageCritique {
    fn critique(&self, view: &LocalView, episode: usize) -> ActionDistribution {
        language_critique(view, &self.index, episode, &self.schedule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, Cell};
    use crate::rl::argmax;
    use crate::seq2seq::{train, vocab_for, TrainConfig};
    use crate::trainer::AnnotatedExample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn words(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    fn random_model(utterances: &[Vec<String>], seed: u64) -> Arc<Seq2SeqModel> {
        let examples: Vec<AnnotatedExample> = utterances
            .iter()
            .map(|u| AnnotatedExample {
                utterance: u.clone(),
                view: LocalView([Cell::Grass; 9]),
                action: Action::Up,
            })
            .collect();
        Arc::new(Seq2SeqModel::new(vocab_for(&examples), 2, 4, 3, 0.8, seed).unwrap())
    }

    fn random_view<R: Rng>(rng: &mut R) -> LocalView {
        LocalView(std::array::from_fn(|_| Cell::ALL[rng.gen_range(0..7)]))
    }

    fn three() -> Vec<Vec<String>> {
        vec![words("car on my left"), words("hop onto the log"), words("wait for it")]
    }

    #[test]
    fn single_utterance_is_always_chosen() {
        let u = vec![words("hop onto the log")];
        let index = AdviceIndex::new(random_model(&u, 1), u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(index.select_advice(&random_view(&mut rng)).utterance, 0);
        }
    }

    #[test]
    fn selection_matches_brute_force_argmax() {
        let u = three();
        let model = random_model(&u, 3);
        let index = AdviceIndex::new(model.clone(), u.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let view = random_view(&mut rng);
            let mut flat = Vec::new();
            for utt in &u {
                for a in Action::ALL {
                    flat.push(model.score(utt, &view, a).unwrap());
                }
            }
            let best = argmax(&flat);
            let advice = index.select_advice(&view);
            assert_eq!(advice.utterance, best / NUM_ACTIONS);
            for a in 0..NUM_ACTIONS {
                assert!((advice.scores[a] - flat[advice.utterance * NUM_ACTIONS + a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ties_go_to_the_lowest_id() {
        let u = vec![words("wait for it"), words("wait for it")];
        let index = AdviceIndex::new(random_model(&u, 2), u).unwrap();
        let view = LocalView([Cell::Road; 9]);
        assert_eq!(index.select_advice(&view).utterance, 0);
    }

    #[test]
    fn cache_is_transparent() {
        let u = three();
        let index = AdviceIndex::new(random_model(&u, 9), u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let views: Vec<LocalView> = (0..1000).map(|_| random_view(&mut rng)).collect();
        index.warm(views[..500].iter().copied());
        for v in &views {
            let cached = index.select_advice(v);
            assert_eq!(cached, index.compute(v));
            assert_eq!(index.select_advice(v), cached);
        }
    }

    #[test]
    fn cache_text_round_trip() {
        let u = three();
        let model = random_model(&u, 4);
        let a = AdviceIndex::new(model.clone(), u.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        a.warm((0..30).map(|_| random_view(&mut rng)));
        let text = a.cache_to_text();
        let b = AdviceIndex::new(model, u).unwrap();
        assert_eq!(b.load_cache_text(&text).unwrap(), a.cache_len());
        assert_eq!(b.cache_to_text(), text);
        assert!(matches!(b.load_cache_text("WALL\t0\t1 2"), Err(AdviceError::Parse { .. })));
    }

    #[test]
    fn critique_arithmetic_and_temperature() {
        let d = critique_from_scores(&[-2.0, -5.0, -5.0, -5.0, -5.0], 1.0);
        let expected = (-2.0f64).exp() / ((-2.0f64).exp() + 4.0 * (-5.0f64).exp());
        assert!((d.prob(Action::Up) - expected).abs() < 1e-12);
        assert!((d.prob(Action::Up) - 0.834).abs() < 1e-3);
        let flat = critique_from_scores(&[-3.0; 5], 0.7);
        assert!(flat.probs().iter().all(|p| (p - 0.2).abs() < 1e-15));
        let schedule = TemperatureSchedule::linear(0.2, 5.0, 100);
        let scores = [-4.0, -9.0, -6.5, -12.0, -7.0];
        let early = critique_from_scores(&scores, schedule.tau(0));
        let late = critique_from_scores(&scores, schedule.tau(80));
        let uniform = ActionDistribution::uniform();
        assert!(late.total_variation(&uniform) < early.total_variation(&uniform));
        assert_eq!(early.argmax(), Action::from_index(argmax(&scores)));
        assert_eq!(late.argmax(), Action::from_index(argmax(&scores)));
    }

    #[test]
    fn length_normalisation_divides_scores() {
        let u = three();
        let model = random_model(&u, 6);
        let raw = AdviceIndex::new(model.clone(), u.clone()).unwrap();
        let norm = AdviceIndex::new(model, u).unwrap().with_length_normalization(true);
        let view = LocalView([Cell::Water; 9]);
        let (r, n) = (raw.select_advice(&view), norm.select_advice(&view));
        assert_eq!(r.utterance, n.utterance);
        for a in 0..NUM_ACTIONS {
            assert!((r.scores[a] / TARGET_LEN as f64 - n.scores[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn overfit_model_advises_the_demonstrated_action() {
        use Cell::*;
        let examples = vec![
            AnnotatedExample {
                utterance: words("the path ahead is clear so i hop up"),
                view: LocalView([Grass, Grass, Grass, Road, Road, Road, Grass, Grass, Grass]),
                action: Action::Up,
            },
            AnnotatedExample {
                utterance: words("i wait for the car to pass"),
                view: LocalView([Car, Road, Road, Road, Road, Car, Grass, Grass, Grass]),
                action: Action::Stay,
            },
            AnnotatedExample {
                utterance: words("i step left to dodge the car"),
                view: LocalView([Road, Car, Road, Road, Road, Car, Road, Road, Road]),
                action: Action::Left,
            },
        ];
        let config = TrainConfig {
            epochs: 150,
            hidden: 16,
            embedding: 8,
            ..TrainConfig::default()
        };
        let out = train(&examples, &config).unwrap();
        let index = AdviceIndex::new(Arc::new(out.model), examples.iter().map(|e| e.utterance.clone()).collect()).unwrap();
        let schedule = TemperatureSchedule::constant(0.1);
        for ex in &examples {
            let d = language_critique(&ex.view, &index, 0, &schedule);
            assert!(d.prob(ex.action) > 0.9, "{:?}", d);
        }
    }
}
