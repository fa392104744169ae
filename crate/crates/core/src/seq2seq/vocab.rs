use std::collections::HashMap;

use super::ModelError;
use crate::env::{Action, Cell, LocalView};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Target side: the seven cell tokens, the five action tokens, then the two
/// delimiters. Indices are fixed.
pub const TARGET_TOKENS: [&str; 14] = [
    "WALL", "GRASS", "ROAD", "CAR", "WATER", "LOG", "GOAL", "UP", "DOWN", "LEFT", "RIGHT", "STAY",
    BOS, EOS,
];
pub const TARGET_SIZE: usize = TARGET_TOKENS.len();
pub const TARGET_BOS: usize = 12;
pub const TARGET_EOS: usize = 13;
/// View tokens plus the action token.
pub const TARGET_LEN: usize = 10;

pub fn cell_index(cell: Cell) -> usize {
    cell as usize
}

pub fn action_index(action: Action) -> usize {
    7 + action.index()
}

pub fn target_sequence(view: &LocalView, action: Action) -> [usize; TARGET_LEN] {
    let mut seq = [0; TARGET_LEN];
    for (slot, cell) in seq.iter_mut().zip(view.cells()) {
        *slot = cell_index(*cell);
    }
    seq[9] = action_index(action);
    seq
}

/// Closed source vocabulary: delimiters first, then words in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    source: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list: Vec<String> = words.into_iter().map(Into::into).collect();
        list.retain(|w| w != BOS && w != EOS);
        list.sort();
        list.dedup();
        let mut source = vec![BOS.to_string(), EOS.to_string()];
        source.extend(list);
        Self::from_ordered(source).expect("delimiters are unique")
    }

    /// Rebuilds a vocabulary from an exact token list (e.g. a checkpoint).
    pub fn from_ordered(source: Vec<String>) -> Result<Self, ModelError> {
        if source.len() < 2 || source[0] != BOS || source[1] != EOS {
            return Err(ModelError::Format("source vocabulary must start with <s> </s>".into()));
        }
        let mut index = HashMap::with_capacity(source.len());
        for (i, w) in source.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(ModelError::Format(format!("duplicate source token `{w}`")));
            }
        }
        Ok(Vocab { source, index })
    }

    pub fn source_size(&self) -> usize {
        self.source.len()
    }

    pub fn source_tokens(&self) -> &[String] {
        &self.source
    }

    pub fn source_index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// `<s> words </s>` as indices; unknown words are an error.
    pub fn encode_source<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<usize>, ModelError> {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(0);
        for w in words {
            let w = w.as_ref();
            ids.push(
                self.source_index(w)
                    .ok_or_else(|| ModelError::UnknownToken(w.to_string()))?,
            );
        }
        ids.push(1);
        Ok(ids)
    }
}
