//! Experiment suites: batches of missions grouped by difficulty, run
//! hierarchically or through the flat baseline, with aggregate reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    replay_accepts, run_flat_baseline, run_mission, DenyHuman, EventKind, Gating, HumanMode,
    HumanOperator, MissionConfig, MissionError, PlanTrace, ScriptedOracle, Status,
};
use crate::conformal::CalibrationModel;
use crate::ltl::{parse_ltl, to_dfa, AtomicProposition};
use crate::scorer::{
    Cassette, CassetteMode, NoisyParams, NoisyScorer, OracleScorer, RemoteConfig, RemoteScorer,
    Scorer, UniformScorer,
};
use crate::world::{load_scenario, Scenario, WorldError};

/// Serializable choice of scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScorerSpec {
    Oracle {
        #[serde(default)]
        ambiguity: bool,
    },
    Noisy(#[serde(default)] NoisyParams),
    Uniform,
    Remote {
        config: RemoteConfig,
        #[serde(default)]
        cassette: Option<String>,
    },
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec::Oracle { ambiguity: false }
    }
}

impl ScorerSpec {
    /// Builds the scorer; `repetition` reseeds stochastic scorers.
    pub fn build(&self, repetition: u64) -> std::io::Result<Box<dyn Scorer>> {
        Ok(match self {
            ScorerSpec::Oracle { ambiguity: false } => Box::new(OracleScorer::default()),
            ScorerSpec::Oracle { ambiguity: true } => {
                Box::new(OracleScorer::default().with_ambiguity())
            }
            ScorerSpec::Noisy(p) => Box::new(NoisyScorer::new(NoisyParams {
                seed: p.seed.wrapping_add(repetition),
                ..*p
            })),
            ScorerSpec::Uniform => Box::new(UniformScorer),
            ScorerSpec::Remote { config, cassette } => {
                let scorer = RemoteScorer::new(config.clone());
                match cassette {
                    Some(path) => scorer.with_cassette(Cassette::open(path, CassetteMode::Replay)?),
                    None => scorer,
                }
                .into()
            }
        })
    }
}

impl From<RemoteScorer> for Box<dyn Scorer> {
    fn from(s: RemoteScorer) -> Self {
        Box::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    pub id: String,
    pub category: String,
    pub formula: String,
    pub atoms: Vec<AtomicProposition>,
    /// Hand-written single-instruction rendering for the flat baseline.
    pub instruction: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    pub scenario: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub scorer: ScorerSpec,
    pub missions: Vec<MissionSpec>,
}

fn default_horizon() -> usize {
    7
}

fn default_repetitions() -> usize {
    1
}

/// Built-in suite library.
pub const BUILTIN_SUITES: &[&str] = &["kitchen"];

const KITCHEN_SUITE: &str = include_str!("../../suites/kitchen.json");

/// Loads `builtin:<name>` or a JSON file path.
pub fn load_suite(spec: &str) -> Result<Suite, MissionError> {
    let text = match spec.strip_prefix("builtin:") {
        Some("kitchen") => KITCHEN_SUITE.to_string(),
        Some(other) => return Err(MissionError::Config(format!("no built-in suite `{other}`"))),
        None => std::fs::read_to_string(Path::new(spec)).map_err(WorldError::from)?,
    };
    let suite: Suite = serde_json::from_str(&text).map_err(WorldError::from)?;
    for m in &suite.missions {
        parse_ltl(&m.formula, &m.atoms)?;
    }
    Ok(suite)
}

impl Suite {
    pub fn scenario(&self) -> Result<Scenario, MissionError> {
        Ok(load_scenario(&self.scenario)?)
    }

    pub fn categories(&self) -> Vec<String> {
        let mut c: Vec<String> = self.missions.iter().map(|m| m.category.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Missions of one category.
    pub fn filtered(&self, category: &str) -> Suite {
        Suite {
            missions: self
                .missions
                .iter()
                .filter(|m| m.category == category)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Hierarchical,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    pub mode: RunMode,
    /// Overrides the suite's own scorer when set.
    pub scorer: Option<ScorerSpec>,
    pub model: Option<CalibrationModel>,
    pub alpha: f64,
    pub delta: usize,
    pub gating: Gating,
    pub human: HumanMode,
    pub seed: u64,
    pub softmax_temperature: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        let m = MissionConfig::default();
        SuiteOptions {
            mode: RunMode::Hierarchical,
            scorer: None,
            model: None,
            alpha: m.alpha,
            delta: m.delta,
            gating: m.gating,
            human: HumanMode::Deny,
            seed: 0,
            softmax_temperature: m.softmax_temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub id: String,
    pub category: String,
    pub repetition: usize,
    pub status: Status,
    /// Executed decisions replay to an accepting run.
    pub replay_accepts: bool,
    pub executed_steps: usize,
    pub events: Vec<EventKind>,
    pub set_sizes: Vec<usize>,
    pub joint_confidence: f64,
    pub note: Option<String>,
}

impl MissionReport {
    pub fn completed(&self) -> bool {
        self.status == Status::Satisfied && self.replay_accepts
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub runs: usize,
    pub completed: usize,
    pub human_completed: usize,
    pub failed: usize,
    pub completion_rate: f64,
    pub mean_joint_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub scorer: String,
    pub mode: RunMode,
    pub categories: BTreeMap<String, CategoryReport>,
    pub set_size_histogram: BTreeMap<usize, usize>,
    pub event_counts: BTreeMap<String, usize>,
    pub missions: Vec<MissionReport>,
}

impl SuiteReport {
    pub fn completion(&self, category: &str) -> f64 {
        self.categories
            .get(category)
            .map_or(0.0, |c| c.completion_rate)
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "suite {} | scorer {} | mode {:?}",
            self.suite, self.scorer, self.mode
        );
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>10} {:>8} {:>7} {:>11} {:>10}",
            "category", "runs", "completed", "human", "failed", "completion", "joint conf"
        );
        for (name, c) in &self.categories {
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>10} {:>8} {:>7} {:>10.1}% {:>10.3}",
                name,
                c.runs,
                c.completed,
                c.human_completed,
                c.failed,
                100.0 * c.completion_rate,
                c.mean_joint_confidence
            );
        }
        if !self.set_size_histogram.is_empty() {
            let sizes: Vec<String> = self
                .set_size_histogram
                .iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect();
            let _ = writeln!(out, "prediction-set sizes {}", sizes.join(" "));
        }
        if !self.event_counts.is_empty() {
            let events: Vec<String> = self
                .event_counts
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            let _ = writeln!(out, "assistance events {}", events.join(" "));
        }
        out
    }
}

fn event_name(k: EventKind) -> &'static str {
    match k {
        EventKind::AlternativeAp => "alternative-ap",
        EventKind::AlternativeState => "alternative-state",
        EventKind::Human => "human",
        EventKind::Denied => "denied",
    }
}

fn run_one(
    spec: &MissionSpec,
    repetition: usize,
    suite: &Suite,
    scenario: &Scenario,
    scorer: &dyn Scorer,
    options: &SuiteOptions,
) -> Result<MissionReport, MissionError> {
    let config = MissionConfig {
        formula: spec.formula.clone(),
        atoms: spec.atoms.clone(),
        alpha: options.alpha,
        delta: options.delta,
        horizon: suite.horizon,
        seed: options.seed.wrapping_add(repetition as u64),
        gating: options.gating,
        human: options.human,
        softmax_temperature: options.softmax_temperature,
        ..MissionConfig::default()
    };
    let result: Result<PlanTrace, MissionError> = match options.mode {
        RunMode::Flat => run_flat_baseline(&config, &spec.instruction, scenario, scorer),
        RunMode::Hierarchical => {
            let mut human: Box<dyn HumanOperator> = match options.human {
                HumanMode::ScriptedOracle => Box::new(ScriptedOracle::default()),
                HumanMode::Deny | HumanMode::Interactive => Box::new(DenyHuman),
            };
            run_mission(
                &config,
                scenario,
                scorer,
                options.model.as_ref(),
                human.as_mut(),
            )
        }
    };
    let trace = match result {
        Ok(t) => t,
        Err(MissionError::HumanAssistDenied(t)) => *t,
        Err(e) => return Err(e),
    };
    let dfa = to_dfa(&parse_ltl(&spec.formula, &spec.atoms)?)?;
    Ok(MissionReport {
        id: spec.id.clone(),
        category: spec.category.clone(),
        repetition,
        status: trace.status,
        replay_accepts: replay_accepts(scenario, &dfa, &trace)?,
        executed_steps: trace.executed().count(),
        events: trace.events.iter().map(|e| e.kind).collect(),
        set_sizes: trace.steps.iter().filter_map(|s| s.set_size).collect(),
        joint_confidence: trace.joint_confidence,
        note: trace.note,
    })
}

/// Runs every mission of the suite `repetitions` times. Missions run in
/// parallel; reports are sorted by mission id and repetition.
pub fn run_experiment_suite(
    suite: &Suite,
    options: &SuiteOptions,
) -> Result<SuiteReport, MissionError> {
    let scenario = suite.scenario()?;
    let spec = options
        .scorer
        .clone()
        .unwrap_or_else(|| suite.scorer.clone());
    let scorers = (0..suite.repetitions.max(1))
        .map(|r| spec.build(r as u64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(WorldError::from)?;
    let jobs: Vec<(usize, usize)> = (0..suite.missions.len())
        .flat_map(|m| (0..scorers.len()).map(move |r| (m, r)))
        .collect();
    let mut missions = jobs
        .par_iter()
        .map(|&(m, r)| {
            run_one(
                &suite.missions[m],
                r,
                suite,
                &scenario,
                scorers[r].as_ref(),
                options,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    missions.sort_by(|a, b| (&a.id, a.repetition).cmp(&(&b.id, b.repetition)));

    let mut categories: BTreeMap<String, CategoryReport> = BTreeMap::new();
    let mut histogram = BTreeMap::new();
    let mut event_counts = BTreeMap::new();
    for m in &missions {
        let c = categories.entry(m.category.clone()).or_default();
        c.runs += 1;
        c.mean_joint_confidence += m.joint_confidence;
        if m.completed() {
            c.completed += 1;
        } else if m.status == Status::HumanCompleted {
            c.human_completed += 1;
        } else {
            c.failed += 1;
        }
        for &s in &m.set_sizes {
            *histogram.entry(s).or_default() += 1;
        }
        for &e in &m.events {
            *event_counts.entry(event_name(e).to_string()).or_default() += 1;
        }
    }
    for c in categories.values_mut() {
        c.completion_rate = c.completed as f64 / c.runs as f64;
        c.mean_joint_confidence /= c.runs as f64;
    }
    Ok(SuiteReport {
        suite: suite.name.clone(),
        scorer: scorers[0].name(),
        mode: options.mode,
        categories,
        set_size_histogram: histogram,
        event_counts,
        missions,
    })
}

/// Hierarchical and flat completion side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub hierarchical: SuiteReport,
    pub flat: SuiteReport,
}

impl MethodComparison {
    /// Hierarchical minus flat completion rate, in percentage points.
    pub fn gap(&self, category: &str) -> f64 {
        100.0 * (self.hierarchical.completion(category) - self.flat.completion(category))
    }
}

pub fn compare_methods(
    suite: &Suite,
    options: &SuiteOptions,
) -> Result<MethodComparison, MissionError> {
    let hierarchical = run_experiment_suite(
        suite,
        &SuiteOptions {
            mode: RunMode::Hierarchical,
            ..options.clone()
        },
    )?;
    let flat = run_experiment_suite(
        suite,
        &SuiteOptions {
            mode: RunMode::Flat,
            ..options.clone()
        },
    )?;
    Ok(MethodComparison { hierarchical, flat })
}
