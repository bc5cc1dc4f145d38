//! Multi-level sliding-window patterns over an interaction history.
//!
//! Level `l` holds every window of `l` consecutive interactions (stride 1).
//! A window only ever covers positions inside the history it was extracted
//! from, so patterns are causal by construction.

use serde::{Deserialize, Serialize};

use crate::betaembed::{combine, BetaEmbedding};
use crate::error::{Error, Result};
use crate::mlp::Mlp;

/// Window `[start, start + level)` over the history (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub level: usize,
    pub start: usize,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.level
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSet {
    /// `levels[l - 1]` holds the windows of level `l`.
    pub levels: Vec<Vec<Window>>,
    /// Whether each window lies entirely inside the valid prefix.
    pub valid: Vec<Vec<bool>>,
}

impl PatternSet {
    pub fn level_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn valid_counts(&self) -> Vec<usize> {
        self.valid.iter().map(|v| v.iter().filter(|&&b| b).count()).collect()
    }

    pub fn max_level(&self) -> usize {
        self.levels.len()
    }
}

/// All windows of length `1..=max_level` over a history of `len` items.
/// Levels longer than the history are empty.
pub fn extract_patterns(len: usize, max_level: usize) -> PatternSet {
    extract_patterns_padded(len, len, max_level)
}

/// Like [`extract_patterns`] over a padded history whose first
/// `valid_len` entries are real; windows touching padding are masked.
pub fn extract_patterns_padded(len: usize, valid_len: usize, max_level: usize) -> PatternSet {
    let mut levels = Vec::with_capacity(max_level);
    let mut valid = Vec::with_capacity(max_level);
    for level in 1..=max_level {
        let windows: Vec<Window> = if level <= len {
            (0..=len - level).map(|start| Window { level, start }).collect()
        } else {
            Vec::new()
        };
        valid.push(windows.iter().map(|w| w.end() <= valid_len).collect());
        levels.push(windows);
    }
    PatternSet { levels, valid }
}

/// Probabilistic conjunction of a window's members along the time axis.
pub fn conjoin_pattern(members: &[BetaEmbedding], pattern_mlp: &Mlp) -> Result<BetaEmbedding> {
    match members {
        [] => Err(Error::Contract("pattern with no members".into())),
        [single] => Ok(single.clone()),
        _ => crate::betaembed::conjunction(members, pattern_mlp),
    }
}

/// Conjoined embedding of every window, reusing per-item attention logits.
pub fn conjoin_all(history: &[BetaEmbedding], set: &PatternSet, pattern_mlp: &Mlp) -> Vec<Vec<BetaEmbedding>> {
    let logits: Vec<Vec<f64>> = history.iter().map(|e| pattern_mlp.infer(&e.concat())).collect();
    set.levels
        .iter()
        .map(|windows| {
            windows
                .iter()
                .map(|w| {
                    if w.level == 1 {
                        history[w.start].clone()
                    } else {
                        let items: Vec<&BetaEmbedding> = history[w.positions()].iter().collect();
                        let z: Vec<&[f64]> = logits[w.positions()].iter().map(Vec::as_slice).collect();
                        combine(&items, &z).0
                    }
                })
                .collect()
        })
        .collect()
}
