//! Optimality floor for the plain Q-learning agent on the empty fixture at
//! the default settings (alpha 0.1, gamma 0.95, Boltzmann temperature 1,
//! zero-initialised table, greedy evaluation with random tie-breaks).

use langshape::env::{optimal_return, Dynamics, Frogger, FroggerMap};
use langshape::harness::{run_experiment, AgentKind, CritiqueSource, ExperimentConfig, ExperimentInputs};
use langshape::rl::{evaluate_policy, run_episode, BoltzmannSource, QTable};
use langshape::seeding::{derive_seed, rng_for, streams};

fn empty_env() -> Frogger {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/maps/empty.map");
    Frogger::new(FroggerMap::parse(&std::fs::read_to_string(path).unwrap()).unwrap(), Dynamics::Deterministic)
}

#[test]
fn q_only_agent_is_optimal_within_500_episodes_for_every_seed() {
    let env = empty_env();
    let optimum = optimal_return(&env, 200).unwrap();
    let mut finals = Vec::new();
    for seed in 0..10u64 {
        let mut table = QTable::new(0.1, 0.95);
        let mut rng = rng_for(seed, streams::TRAIN_EPISODE, 0);
        for _ in 0..500 {
            run_episode(&env, &mut table, &BoltzmannSource { tau: 1.0 }, 200, &mut rng);
        }
        finals.push(evaluate_policy(&env, &table, 20, 200, derive_seed(seed, streams::EVAL, 0)));
    }
    let hits = finals.iter().filter(|&&r| r == optimum).count();
    println!("optimum {optimum}; greedy returns after 500 episodes {finals:?}");
    assert_eq!(hits, 10, "{hits}/10 seeds optimal");
}

#[test]
fn qlearn_experiment_ends_at_the_optimum() {
    let env = empty_env();
    let optimum = optimal_return(&env, 200).unwrap();
    let cfg = ExperimentConfig {
        agent: AgentKind::Qlearn,
        episodes: Some(500),
        ..ExperimentConfig::default()
    };
    let result = run_experiment(&cfg, &ExperimentInputs::new((*env.map).clone(), CritiqueSource::None)).unwrap();
    let last = result.curve.episodes.len() - 1;
    println!("{}", result.curve.to_csv());
    assert_eq!(result.curve.mean(last), optimum);
}
