use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::Seq2SeqModel;
use super::vocab::{target_sequence, Vocab, TARGET_LEN};
use super::ModelError;
use crate::seeding::{rng_for, streams};
use crate::trainer::AnnotatedExample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub layers: usize,
    pub hidden: usize,
    pub embedding: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub init_scale: f64,
    /// Consecutive epochs without a new best mean loss before the learning
    /// rate is halved.
    pub plateau_patience: usize,
    /// Accumulate per-example gradients on the rayon pool. The reduction order
    /// is fixed, so results match serial training bit for bit.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            layers: 2,
            hidden: 64,
            embedding: 32,
            learning_rate: 0.5,
            batch_size: 32,
            seed: 0,
            clip_norm: 5.0,
            init_scale: 0.5,
            plateau_patience: 3,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.epochs >= 1
            && self.layers >= 1
            && self.hidden >= 1
            && self.embedding >= 1
            && self.batch_size >= 1
            && self.learning_rate > 0.0
            && self.clip_norm > 0.0
            && self.init_scale >= 0.0
            && self.plateau_patience >= 1;
        if ok {
            Ok(())
        } else {
            Err(ModelError::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over examples of the summed token negative log likelihood, as
    /// accumulated during the epoch.
    pub mean_nll: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Seq2SeqModel,
    pub trace: Vec<EpochRecord>,
}

/// `epoch,mean_nll` with 12 significant decimals.
pub fn loss_trace_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_nll\n");
    for r in trace {
        let _ = writeln!(out, "{},{:.12}", r.epoch, r.mean_nll);
    }
    out
}

/// Indexed training pairs.
#[derive(Debug, Clone)]
pub struct Encodings {
    pub sources: Vec<Vec<usize>>,
    pub targets: Vec<[usize; TARGET_LEN]>,
}

impl Encodings {
    pub fn new(vocab: &Vocab, examples: &[AnnotatedExample]) -> Result<Self, ModelError> {
        let sources = examples
            .iter()
            .map(|ex| vocab.encode_source(&ex.utterance))
            .collect::<Result<_, _>>()?;
        let targets = examples.iter().map(|ex| target_sequence(&ex.view, ex.action)).collect();
        Ok(Encodings { sources, targets })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }
}

/// Source vocabulary covering every word of `examples`.
pub fn vocab_for(examples: &[AnnotatedExample]) -> Vocab {
    Vocab::from_words(examples.iter().flat_map(|ex| ex.utterance.iter().cloned()))
}

/// Fraction of target tokens whose teacher-forced argmax is correct.
pub fn token_accuracy(model: &Seq2SeqModel, examples: &[AnnotatedExample]) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut correct = 0;
    for ex in examples {
        let enc = model.encode(&ex.utterance)?;
        correct += model.correct_tokens(&enc, &target_sequence(&ex.view, ex.action));
    }
    Ok(correct as f64 / (examples.len() * TARGET_LEN) as f64)
}

/// Gradient of the batch-mean loss, reduced over examples in batch order.
fn batch_gradient(model: &Seq2SeqModel, data: &Encodings, batch: &[usize], parallel: bool) -> (f64, Vec<f64>) {
    let total = model.layout().total;
    let scale = 1.0 / batch.len() as f64;
    let per_example = |&i: &usize| {
        let mut g = vec![0.0; total];
        let loss = model.loss_and_grad(&data.sources[i], &data.targets[i], scale, &mut g);
        (loss, g)
    };
    let parts: Vec<(f64, Vec<f64>)> = if parallel {
        batch.par_iter().map(per_example).collect()
    } else {
        batch.iter().map(per_example).collect()
    };
    let mut grad = vec![0.0; total];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss, grad)
}

/// Continues training `model` on `examples`. Mini-batch gradient descent
/// with global norm clipping; the learning rate halves once the epoch mean
/// loss has gone `plateau_patience` epochs without a new best.
pub fn train_model(model: &mut Seq2SeqModel, examples: &[AnnotatedExample], config: &TrainConfig) -> Result<Vec<EpochRecord>, ModelError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let data = Encodings::new(model.vocab(), examples)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut lr = config.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(config.seed, streams::SHUFFLE, epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, mut grad) = batch_gradient(model, &data, batch, config.parallel);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::Divergence { epoch });
            }
            epoch_loss += loss;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let k = config.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= k);
            }
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= lr * g;
            }
        }
        let mean_nll = epoch_loss / data.len() as f64;
        trace.push(EpochRecord {
            epoch,
            mean_nll,
            learning_rate: lr,
        });
        if mean_nll < best {
            best = mean_nll;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.plateau_patience {
                lr *= 0.5;
                stale = 0;
            }
        }
    }
    Ok(trace)
}

/// Builds a fresh model over the examples' vocabulary and trains it.
pub fn train(examples: &[AnnotatedExample], config: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut model = Seq2SeqModel::new(
        vocab_for(examples),
        config.layers,
        config.hidden,
        config.embedding,
        config.init_scale,
        config.seed,
    )?;
    let trace = train_model(&mut model, examples, config)?;
    Ok(TrainOutcome { model, trace })
}
