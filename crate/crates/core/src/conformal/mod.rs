//! Conformal prediction over multiple-choice decisions: nonconformity
//! scores, sequence-level calibration and causal prediction sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scorer::ScoreVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConformalError {
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("calibration point {0} has no steps")]
    EmptySequence(usize),
    #[error("calibration point {point} has truth index {truth} outside 0..{len}")]
    TruthOutOfRange {
        point: usize,
        truth: usize,
        len: usize,
    },
    #[error("score vectors have inconsistent lengths")]
    RaggedScores,
    #[error("invalid RAPS parameters: lambda must be >= 0 and k_reg >= 1")]
    InvalidRaps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vanilla,
    Raps,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vanilla" => Ok(Method::Vanilla),
            "raps" => Ok(Method::Raps),
            other => Err(format!("unknown conformal method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapsParams {
    pub lambda: f64,
    pub k_reg: usize,
}

impl Default for RapsParams {
    fn default() -> Self {
        RapsParams {
            lambda: 0.01,
            k_reg: 2,
        }
    }
}

/// One scored step with its ground-truth decision index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub prompt_digest: String,
    pub softmax: Vec<f64>,
    pub truth: usize,
}

/// A prompt sequence and its ground-truth decision sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub steps: Vec<CalibrationStep>,
}

impl CalibrationPoint {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub method: Method,
    pub alpha: f64,
    #[serde(default)]
    pub raps: RapsParams,
    pub points: Vec<CalibrationPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub method: Method,
    pub alpha: f64,
    pub q_hat: f64,
    pub raps: Option<RapsParams>,
    pub n: usize,
    pub decision_count: usize,
    /// Set when the quantile index exceeds `n`; every prediction set is
    /// then the whole decision set.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub members: Vec<usize>,
    pub step_index: usize,
    pub singleton: bool,
    /// The argmax failed the threshold and was added anyway.
    pub forced_argmax: bool,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, decision: usize) -> bool {
        self.members.contains(&decision)
    }
}

/// `1 - g(truth)`.
pub fn nonconformity_vanilla(scores: &ScoreVector, truth: usize) -> f64 {
    1.0 - scores.softmax[truth]
}

/// Mass ranked strictly above `truth`, plus `g(truth)`, plus
/// `lambda * max(0, rank - k_reg)` with 1-based rank.
pub fn nonconformity_raps(scores: &ScoreVector, truth: usize, params: &RapsParams) -> f64 {
    raps_scores(&scores.softmax, params)[truth]
}

/// RAPS nonconformity of every decision at once.
fn raps_scores(softmax: &[f64], params: &RapsParams) -> Vec<f64> {
    let sv = ScoreVector {
        raw: Vec::new(),
        softmax: softmax.to_vec(),
    };
    let mut out = vec![0.0; softmax.len()];
    let mut above = 0.0;
    for (pos, &i) in sv.ranking().iter().enumerate() {
        let rank = pos + 1;
        let penalty = params.lambda * rank.saturating_sub(params.k_reg) as f64;
        out[i] = above + softmax[i] + penalty;
        above += softmax[i];
    }
    out
}

fn step_score(method: Method, raps: &RapsParams, softmax: &[f64], truth: usize) -> f64 {
    match method {
        Method::Vanilla => 1.0 - softmax[truth],
        Method::Raps => raps_scores(softmax, raps)[truth],
    }
}

/// Sequence nonconformity: one minus the smallest per-step confidence for
/// vanilla, the largest per-step score for RAPS.
pub fn sequence_score(method: Method, raps: &RapsParams, point: &CalibrationPoint) -> f64 {
    point
        .steps
        .iter()
        .map(|s| step_score(method, raps, &s.softmax, s.truth))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// 1-based order-statistic index `ceil((n + 1)(1 - alpha))`.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil().max(1.0) as usize
}

pub fn calibrate(set: &CalibrationSet) -> Result<CalibrationModel, ConformalError> {
    if !(set.alpha > 0.0 && set.alpha < 1.0) {
        return Err(ConformalError::InvalidAlpha(set.alpha));
    }
    if set.points.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    if set.method == Method::Raps && (set.raps.lambda < 0.0 || set.raps.k_reg < 1) {
        return Err(ConformalError::InvalidRaps);
    }
    let decision_count = set.points[0]
        .steps
        .first()
        .map(|s| s.softmax.len())
        .ok_or(ConformalError::EmptySequence(0))?;
    for (i, p) in set.points.iter().enumerate() {
        if p.steps.is_empty() {
            return Err(ConformalError::EmptySequence(i));
        }
        for s in &p.steps {
            if s.softmax.len() != decision_count {
                return Err(ConformalError::RaggedScores);
            }
            if s.truth >= decision_count {
                return Err(ConformalError::TruthOutOfRange {
                    point: i,
                    truth: s.truth,
                    len: decision_count,
                });
            }
        }
    }
    let n = set.points.len();
    let k = quantile_index(n, set.alpha);
    let raps = (set.method == Method::Raps).then_some(set.raps);
    let (q_hat, degenerate) = if k > n {
        let full = match set.method {
            Method::Vanilla => 1.0,
            Method::Raps => 1.0 + set.raps.lambda * decision_count as f64,
        };
        (full, true)
    } else {
        let mut scores: Vec<f64> = set
            .points
            .iter()
            .map(|p| sequence_score(set.method, &set.raps, p))
            .collect();
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        (scores[k - 1], false)
    };
    Ok(CalibrationModel {
        method: set.method,
        alpha: set.alpha,
        q_hat,
        raps,
        n,
        decision_count,
        degenerate,
    })
}

/// Decisions passing the calibrated threshold, without the argmax guard.
pub fn threshold_members(model: &CalibrationModel, scores: &ScoreVector) -> Vec<usize> {
    if model.degenerate {
        return (0..scores.len()).collect();
    }
    match model.method {
        Method::Vanilla => (0..scores.len())
            .filter(|&i| scores.softmax[i] > 1.0 - model.q_hat)
            .collect(),
        Method::Raps => {
            let params = model.raps.unwrap_or_default();
            let e = raps_scores(&scores.softmax, &params);
            let mut m: Vec<usize> = (0..scores.len()).filter(|&i| e[i] <= model.q_hat).collect();
            m.sort_unstable();
            m
        }
    }
}

/// Prediction set for one step; the argmax is always a member.
pub fn predict_set(model: &CalibrationModel, scores: &ScoreVector, step: usize) -> PredictionSet {
    let mut members = threshold_members(model, scores);
    let top = scores.argmax();
    let forced_argmax = !members.contains(&top);
    if forced_argmax {
        members.push(top);
        members.sort_unstable();
    }
    PredictionSet {
        singleton: members.len() == 1,
        members,
        step_index: step,
        forced_argmax,
    }
}

/// Per-step sets for a causally scored sequence.
pub fn causal_sets(model: &CalibrationModel, steps: &[ScoreVector]) -> Vec<PredictionSet> {
    steps
        .iter()
        .enumerate()
        .map(|(t, s)| predict_set(model, s, t))
        .collect()
}

/// Number of decision sequences in the product of per-step sets.
pub fn product_size(sets: &[PredictionSet]) -> u128 {
    sets.iter().map(|s| s.len() as u128).product()
}

/// True iff every set is a singleton; an empty list is vacuously true.
pub fn label(sets: &[PredictionSet]) -> bool {
    sets.iter().all(|s| s.singleton)
}

/// `(1 - alpha)^k`.
pub fn joint_confidence(alpha: f64, k: u32) -> f64 {
    (1.0 - alpha).powi(k as i32)
}
