//! Multiple-choice decision scoring: the five-part prompt record, softmax
//! score vectors and pluggable scorers.

mod noisy;
mod oracle;
mod prompt;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Decision;

pub use noisy::{NoisyParams, NoisyScorer};
pub use oracle::{
    oracle_choice, oracle_plan, Goal, GroundTruth, OracleChoice, OracleScorer, UniformScorer,
};
pub use prompt::{build_prompt, HistoryEntry, PromptContext, TaskPart, ONE_SHOT_EXAMPLE};
pub use remote::{Cassette, CassetteMode, RemoteConfig, RemoteScorer};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("no plan reaches the sub-task within {0} steps")]
    NoPlanWithinBudget(usize),
    #[error("scorer returned {got} scores for {expected} decisions")]
    WrongLength { expected: usize, got: usize },
    #[error("this scorer needs simulator ground truth attached to the prompt")]
    MissingGroundTruth,
    #[error("the decision set is empty")]
    EmptyDecisionSet,
}

/// Raw scores and their softmax over a fixed, ordered decision set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub raw: Vec<f64>,
    pub softmax: Vec<f64>,
}

impl ScoreVector {
    /// Numerically stable softmax of `raw / temperature`.
    pub fn from_raw(raw: Vec<f64>, temperature: f64) -> ScoreVector {
        assert!(temperature > 0.0, "softmax temperature must be positive");
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = raw
            .iter()
            .map(|r| ((r - max) / temperature).exp())
            .collect();
        let total: f64 = exp.iter().sum();
        let softmax = exp.into_iter().map(|e| e / total).collect();
        ScoreVector { raw, softmax }
    }

    pub fn len(&self) -> usize {
        self.softmax.len()
    }

    pub fn is_empty(&self) -> bool {
        self.softmax.is_empty()
    }

    /// Index of the highest softmax value; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &g) in self.softmax.iter().enumerate() {
            if g > self.softmax[best] {
                best = i;
            }
        }
        best
    }

    /// Decision indices sorted by descending softmax, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.softmax.len()).collect();
        idx.sort_by(|&a, &b| {
            self.softmax[b]
                .partial_cmp(&self.softmax[a])
                .expect("softmax values are finite")
                .then(a.cmp(&b))
        });
        idx
    }
}

/// A multiple-choice decision scorer.
pub trait Scorer: Send + Sync {
    fn name(&self) -> String;

    /// One raw score per decision, higher meaning more likely.
    fn raw_scores(
        &self,
        prompt: &PromptContext,
        decisions: &[Decision],
    ) -> Result<Vec<f64>, ScorerError>;
}

/// Scores every decision in `decisions` and normalizes with a softmax.
pub fn score(
    scorer: &dyn Scorer,
    prompt: &PromptContext,
    decisions: &[Decision],
    temperature: f64,
) -> Result<ScoreVector, ScorerError> {
    if decisions.is_empty() {
        return Err(ScorerError::EmptyDecisionSet);
    }
    let raw = scorer.raw_scores(prompt, decisions)?;
    if raw.len() != decisions.len() {
        return Err(ScorerError::WrongLength {
            expected: decisions.len(),
            got: raw.len(),
        });
    }
    Ok(ScoreVector::from_raw(raw, temperature))
}
