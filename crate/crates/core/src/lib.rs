//! Language-guided exploration for tabular Q-learning.
//!
//! Synthetic trainers describe demonstrated Frogger moves with a rule grammar;
//! an attention encoder-decoder learns to reconstruct the local view and action
//! from each description; the resulting language critique shapes Boltzmann
//! exploration in maps the trainers never saw.

pub mod advice;
pub mod env;
pub mod harness;
pub mod rl;
pub mod seeding;
pub mod seq2seq;
pub mod shaping;
pub mod trainer;
