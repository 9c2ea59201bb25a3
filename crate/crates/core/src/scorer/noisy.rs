use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::oracle::{oracle_choice, remaining_budget};
use super::{PromptContext, Scorer, ScorerError};
use crate::world::Decision;

/// Parameters of the synthetic stand-in for a language-model scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisyParams {
    /// Standard deviation of the Gaussian noise added to every raw score.
    pub temperature: f64,
    /// Per-clause probability that a distractor gets near-tied mass.
    pub confusion: f64,
    /// Raw-score lead of the correct decision.
    pub margin: f64,
    /// How far the runner-up trails the correct decision on a clear step.
    pub runner_gap: f64,
    /// Mean lead of the distractor over the correct decision on a confused
    /// step (negative: the correct decision usually stays on top).
    pub tie_offset: f64,
    pub tie_spread: f64,
    /// Per-clause probability that the task's avoid and ordering clauses
    /// are ignored for the whole task.
    pub misread: f64,
    pub seed: u64,
}

impl Default for NoisyParams {
    fn default() -> Self {
        NoisyParams {
            temperature: 0.5,
            confusion: 0.03,
            margin: 10.0,
            runner_gap: 4.0,
            tie_offset: -0.5,
            tie_spread: 0.5,
            misread: 0.1,
            seed: 0,
        }
    }
}

/// Oracle scores perturbed by Gaussian noise, with occasional confusions
/// whose rate grows with the number of clauses in the task.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoisyScorer {
    pub params: NoisyParams,
}

impl NoisyScorer {
    pub fn new(params: NoisyParams) -> Self {
        NoisyScorer { params }
    }

    /// Probability that a prompt with `complexity` clauses is confused.
    pub fn confusion_rate(&self, complexity: usize) -> f64 {
        1.0 - (1.0 - self.params.confusion).powi(complexity as i32)
    }

    /// Probability that a task with `complexity` clauses is misread.
    pub fn misread_rate(&self, complexity: usize) -> f64 {
        1.0 - (1.0 - self.params.misread).powi(complexity as i32)
    }

    /// Whether this prompt's task is misread, and which goal the misreading
    /// drops. Fixed per task text and seed, so every step of one task shares
    /// the same reading.
    pub fn misreading(&self, prompt: &PromptContext) -> Option<usize> {
        let digest = Sha256::digest(prompt.task_text().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes) ^ self.params.seed);
        let misread = rng.random::<f64>() < self.misread_rate(prompt.complexity());
        let forget = rng.random_range(0..usize::MAX);
        misread.then_some(forget)
    }

    fn rng(&self, prompt: &PromptContext) -> ChaCha8Rng {
        let digest = Sha256::digest(prompt.render().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes) ^ self.params.seed)
    }
}

impl Scorer for NoisyScorer {
    fn name(&self) -> String {
        format!(
            "noisy(temperature={}, confusion={}, misread={})",
            self.params.temperature, self.params.confusion, self.params.misread
        )
    }

    fn raw_scores(
        &self,
        prompt: &PromptContext,
        decisions: &[Decision],
    ) -> Result<Vec<f64>, ScorerError> {
        let truth = prompt
            .ground_truth
            .as_ref()
            .ok_or(ScorerError::MissingGroundTruth)?;
        let p = &self.params;
        let budget = remaining_budget(prompt);
        let best = if let Some(forget) = self.misreading(prompt) {
            let seen = truth.misread(forget);
            if seen.goals.is_empty() {
                Decision::DoNothing
            } else {
                oracle_choice(&seen, budget, false).best
            }
        } else {
            oracle_choice(truth, budget, false).best
        };
        let mut rng = self.rng(prompt);
        let mut raw: Vec<f64> = (0..decisions.len())
            .map(|_| p.temperature * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let Some(c) = decisions.iter().position(|d| *d == best) else {
            return Ok(raw);
        };
        raw[c] += p.margin;
        if decisions.len() == 1 {
            return Ok(raw);
        }
        let mut runner = rng.random_range(0..decisions.len() - 1);
        if runner >= c {
            runner += 1;
        }
        if rng.random::<f64>() < self.confusion_rate(prompt.complexity()) {
            let z: f64 = rng.sample(StandardNormal);
            raw[runner] = raw[c] + p.tie_offset + p.tie_spread * z;
        } else {
            raw[runner] += p.margin - p.runner_gap;
        }
        Ok(raw)
    }
}
