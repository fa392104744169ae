//! Synthetic trainers: demonstrations, grammar-based descriptions with
//! controllable accuracy, and the deduplicated annotated dataset.

mod dataset;
mod demos;
mod grammar;

pub use dataset::{annotate, build_dataset, AnnotatedExample, Dataset, DatasetError, DatasetStats};
pub use demos::{
    collect_demonstrations, format_demonstrations, parse_demonstrations, DemoConfig, DemoError,
    DemoPair,
};
pub use grammar::{
    tokenize, Condition, Grammar, GrammarError, GrammarRule, Predicate, Template, DEFAULT_GRAMMAR,
    MIN_SURFACE_FORMS,
};
