use super::*;
use crate::env::{Action, Cell, LocalView};
use crate::trainer::AnnotatedExample;

fn example(words: &str, view: [Cell; 9], action: Action) -> AnnotatedExample {
    AnnotatedExample {
        utterance: words.split(' ').map(str::to_string).collect(),
        view: LocalView(view),
        action,
    }
}

fn tiny_examples() -> Vec<AnnotatedExample> {
    use Cell::*;
    vec![
        example(
            "car left so i hop",
            [Road, Road, Road, Car, Road, Road, Grass, Grass, Grass],
            Action::Up,
        ),
        example("wait for log", [Water, Log, Water, Grass, Grass, Grass, Road, Road, Road], Action::Stay),
    ]
}

fn tiny_model(hidden: usize, scale: f64, seed: u64) -> Seq2SeqModel {
    Seq2SeqModel::new(vocab_for(&tiny_examples()), 2, hidden, 2, scale, seed).unwrap()
}

fn total_loss(model: &Seq2SeqModel, examples: &[AnnotatedExample]) -> f64 {
    examples
        .iter()
        .map(|ex| -model.score(&ex.utterance, &ex.view, ex.action).unwrap())
        .sum()
}

#[test]
fn gradient_matches_central_differences() {
    let examples = tiny_examples();
    let mut model = tiny_model(3, 0.5, 11);
    let vocab = model.vocab().clone();
    let mut grad = vec![0.0; model.layout().total];
    for ex in &examples {
        let src = vocab.encode_source(&ex.utterance).unwrap();
        model.loss_and_grad(&src, &target_sequence(&ex.view, ex.action), 1.0, &mut grad);
    }
    let eps = 1e-5;
    for (name, block) in model.layout().named_blocks() {
        let mut numeric = Vec::with_capacity(block.len());
        for i in block.range() {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + eps;
            let up = total_loss(&model, &examples);
            model.params_mut()[i] = orig - eps;
            let down = total_loss(&model, &examples);
            model.params_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * eps));
        }
        let analytic = &grad[block.range()];
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        assert!(norm > 0.0, "block {name} has no gradient");
        assert!(diff / norm < 1e-4, "block {name}: relative error {}", diff / norm);
    }
}

#[test]
fn step_softmax_is_normalised_and_sums_to_logprob() {
    let model = tiny_model(3, 0.8, 2);
    let ex = &tiny_examples()[0];
    let enc = model.encode(&ex.utterance).unwrap();
    let targets = target_sequence(&ex.view, ex.action);
    let steps = model.step_outputs(&enc, &targets);
    assert_eq!(steps.len(), TARGET_LEN);
    let mut sum = 0.0;
    for (k, step) in steps.iter().enumerate() {
        let mass: f64 = step.log_probs.iter().map(|lp| lp.exp()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
        sum += step.log_probs[targets[k]];
        let attn: f64 = step.attention.iter().sum();
        assert!(step.attention.iter().all(|&a| a >= 0.0));
        assert!((attn - 1.0).abs() < 1e-9);
        assert_eq!(step.attention.len(), enc.len);
    }
    let total = model.decode_logprob(&enc, &targets).unwrap();
    assert!((total - sum).abs() < 1e-12);
    assert!(total <= 0.0);
    let p = total.exp();
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn uniform_logits_give_analytic_score() {
    let mut model = tiny_model(4, 0.3, 5);
    let layout = model.layout().clone();
    model.params_mut()[layout.out_w.range()].fill(0.0);
    model.params_mut()[layout.out_b.range()].fill(0.0);
    let ex = &tiny_examples()[1];
    let score = model.score(&ex.utterance, &ex.view, ex.action).unwrap();
    let analytic = TARGET_LEN as f64 * (1.0 / TARGET_SIZE as f64).ln();
    assert!((score - analytic).abs() < 1e-12);
}

#[test]
fn zero_weights_give_identical_outputs() {
    let model = Seq2SeqModel::zeros(vocab_for(&tiny_examples()), 2, 3, 2).unwrap();
    let enc = model.encode(&["car", "left", "so"]).unwrap();
    assert_eq!(enc.len, 5);
    for t in 1..enc.len {
        assert_eq!(enc.output(t), enc.output(0));
    }
    // Gates sit at sigmoid(0) = 1/2 and the candidate at tanh(0) = 0, so the
    // memory never leaves zero.
    assert!(enc.outputs.iter().all(|&x| x == 0.0));
}

#[test]
fn encoding_is_pure_and_closed() {
    let model = tiny_model(3, 0.5, 1);
    let a = model.encode(&["wait", "for", "log"]).unwrap();
    let b = model.encode(&["wait", "for", "log"]).unwrap();
    assert_eq!(a, b);
    assert_eq!(model.encode_ids(&[0]).len, 1);
    assert_eq!(model.encode(&["wait", "truck"]), Err(ModelError::UnknownToken("truck".into())));
}

#[test]
fn shared_prefix_scores_match_individual_scores() {
    let model = tiny_model(3, 0.7, 4);
    let ex = &tiny_examples()[0];
    let enc = model.encode(&ex.utterance).unwrap();
    let all = model.score_actions(&enc, &ex.view);
    for a in Action::ALL {
        let single = model.score(&ex.utterance, &ex.view, a).unwrap();
        assert!((all[a.index()] - single).abs() < 1e-12);
    }
}

#[test]
fn single_example_is_memorised() {
    let examples = vec![tiny_examples()[0].clone()];
    let config = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let out = train(&examples, &config).unwrap();
    assert_eq!(token_accuracy(&out.model, &examples).unwrap(), 1.0);
    let ex = &examples[0];
    let own = out.model.score(&ex.utterance, &ex.view, ex.action).unwrap();
    for a in Action::ALL.into_iter().filter(|&a| a != ex.action) {
        assert!(own > out.model.score(&ex.utterance, &ex.view, a).unwrap());
    }
    assert_eq!(out.trace.len(), 200);
}

#[test]
fn parallel_training_matches_serial() {
    let examples = tiny_examples();
    let serial = TrainConfig {
        epochs: 4,
        hidden: 8,
        embedding: 4,
        batch_size: 2,
        seed: 3,
        ..TrainConfig::default()
    };
    let parallel = TrainConfig { parallel: true, ..serial };
    let a = train(&examples, &serial).unwrap();
    let b = train(&examples, &serial).unwrap();
    let c = train(&examples, &parallel).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.model.params(), c.model.params());
    assert_eq!(a.trace, b.trace);
}

#[test]
fn non_finite_parameters_trip_the_divergence_guard() {
    let examples = tiny_examples();
    let config = TrainConfig {
        epochs: 2,
        hidden: 4,
        embedding: 2,
        ..TrainConfig::default()
    };
    let mut model = tiny_model(4, 0.1, 0);
    model.params_mut()[0] = f64::NAN;
    assert_eq!(train_model(&mut model, &examples, &config), Err(ModelError::Divergence { epoch: 0 }));
    assert_eq!(train(&[], &config).unwrap_err(), ModelError::EmptyDataset);
    let bad = TrainConfig { epochs: 0, ..config };
    assert!(matches!(train(&examples, &bad), Err(ModelError::Config(_))));
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let model = tiny_model(3, 0.4, 8);
    let config = TrainConfig::default();
    let bytes = checkpoint::to_bytes(&model, &config);
    let loaded = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(loaded.model, model);
    assert_eq!(loaded.config.learning_rate, config.learning_rate);
    for ex in tiny_examples() {
        assert_eq!(
            model.score(&ex.utterance, &ex.view, ex.action).unwrap(),
            loaded.model.score(&ex.utterance, &ex.view, ex.action).unwrap()
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&path, &model, &config).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap().model, model);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let model = tiny_model(3, 0.4, 8);
    let bytes = checkpoint::to_bytes(&model, &TrainConfig::default());
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    assert!(matches!(checkpoint::from_bytes(&bad_magic), Err(ModelError::Format(_))));
    assert!(matches!(checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(ModelError::Format(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(checkpoint::from_bytes(&extra), Err(ModelError::Format(_))));
}

#[test]
fn loss_trace_csv_layout() {
    let trace = vec![EpochRecord {
        epoch: 0,
        mean_nll: 1.5,
        learning_rate: 0.5,
    }];
    assert_eq!(loss_trace_csv(&trace), "epoch,mean_nll\n0,1.500000000000\n");
}
