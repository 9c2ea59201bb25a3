//! The hierarchical planning loop: sub-task selection, scored step-by-step
//! planning, conformal gating, the assistance cascade and DFA advancement.
//! Also hosts the flat single-prompt baseline and the experiment harness.

mod calibration;
mod human;
mod suite;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{
    advance, assignment_for, candidates, prune, select_subtask, select_subtask_to, AutomatonError,
    Distance, MissionState, PrunedDfa, SubtaskAssignment,
};
use crate::conformal::{joint_confidence, predict_set, CalibrationModel};
use crate::ltl::{parse_ltl, to_dfa, AtomicProposition, Dfa, LtlError, StateId, Symbol};
use crate::scorer::{
    build_prompt, score, Goal, GroundTruth, HistoryEntry, PromptContext, Scorer, ScorerError,
    TaskPart,
};
use crate::world::{Decision, Fact, Outcome, ResolvedAp, RobotState, Scenario, World, WorldError};

pub use calibration::{
    evaluate_coverage, generate_calibration, random_task, CoverageReport, GeneratorConfig,
};
pub use human::{DenyHuman, HelpRequest, HumanOperator, InteractiveHuman, ScriptedOracle};
pub use suite::{
    compare_methods, load_suite, run_experiment_suite, CategoryReport, MethodComparison,
    MissionReport, MissionSpec, RunMode, ScorerSpec, Suite, SuiteOptions, SuiteReport,
    BUILTIN_SUITES,
};

#[derive(Debug, Error)]
pub enum MissionError {
    #[error(transparent)]
    Ltl(#[from] LtlError),
    #[error("mission is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("human assistance was requested and denied")]
    HumanAssistDenied(Box<PlanTrace>),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// What it takes for a finished sub-task attempt to advance the DFA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gating {
    /// Simulator ground truth: conditions (i)-(ii) on the observed word.
    Semantic,
    /// Every step's prediction set is a singleton.
    Conformal,
    /// Both of the above.
    Both,
    /// Any completed attempt is taken as success and prediction sets never
    /// request help, as in a planner without conformal prediction.
    Assumed,
}

impl std::str::FromStr for Gating {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "semantic" => Ok(Gating::Semantic),
            "conformal" => Ok(Gating::Conformal),
            "both" => Ok(Gating::Both),
            "assumed" => Ok(Gating::Assumed),
            other => Err(format!("unknown gating mode `{other}`")),
        }
    }
}

impl Gating {
    fn uses_truth(self) -> bool {
        matches!(self, Gating::Semantic | Gating::Both)
    }

    fn requests_help(self) -> bool {
        self != Gating::Assumed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HumanMode {
    Interactive,
    ScriptedOracle,
    Deny,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub formula: String,
    pub atoms: Vec<AtomicProposition>,
    pub alpha: f64,
    /// Largest prediction-set size executed without asking for help.
    pub delta: usize,
    /// Scored steps per sub-task attempt.
    pub horizon: usize,
    pub seed: u64,
    pub gating: Gating,
    pub human: HumanMode,
    pub softmax_temperature: f64,
    /// Cap on sub-task attempts in one mission.
    pub max_attempts: usize,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            formula: "true".into(),
            atoms: Vec::new(),
            alpha: 0.05,
            delta: 1,
            horizon: 7,
            seed: 0,
            gating: Gating::Both,
            human: HumanMode::Deny,
            softmax_temperature: 1.0,
            max_attempts: 24,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        if self.delta < 1 {
            return Err(MissionError::Config("delta must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(MissionError::Config("horizon must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MissionError::Config("alpha must lie in (0, 1)".into()));
        }
        if self.softmax_temperature <= 0.0 {
            return Err(MissionError::Config(
                "softmax temperature must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A compiled mission: automaton, pruned automaton and resolved propositions.
#[derive(Debug, Clone)]
pub struct Mission {
    pub dfa: Dfa,
    pub pruned: PrunedDfa,
    pub aps: Vec<AtomicProposition>,
    pub resolved: Vec<ResolvedAp>,
}

pub fn compile_mission(config: &MissionConfig, world: &World) -> Result<Mission, MissionError> {
    let formula = parse_ltl(&config.formula, &config.atoms)?;
    let dfa = to_dfa(&formula).map_err(|e| match e {
        LtlError::Unsatisfiable => MissionError::Infeasible("formula is unsatisfiable".into()),
        other => other.into(),
    })?;
    let pruned = prune(&dfa);
    if !pruned.is_satisfiable() {
        return Err(MissionError::Infeasible(
            "every accepting run needs several sub-tasks at once".into(),
        ));
    }
    let resolved = dfa
        .ap_set
        .iter()
        .map(|a| world.resolve(a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Mission {
        aps: dfa.ap_set.clone(),
        dfa,
        pruned,
        resolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Satisfied,
    Failed,
    HumanCompleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    AlternativeAp,
    AlternativeState,
    Human,
    Denied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "trigger", rename_all = "kebab-case")]
pub enum Trigger {
    PredictionSet { size: usize },
    PhysicalFailure,
    NotAchieved,
    Uncertified,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistanceEvent {
    pub kind: EventKind,
    pub trigger: Trigger,
    pub state: StateId,
    /// Sub-task that was abandoned.
    pub ap: u32,
    /// Sub-task handed out next, if any.
    pub next_ap: Option<u32>,
    /// Number of recorded steps when the event happened.
    pub at_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub subtask: u32,
    pub attempt: usize,
    pub step: usize,
    pub prompt_digest: String,
    pub decision: usize,
    pub decision_text: String,
    pub set_size: Option<usize>,
    pub set_members: Vec<usize>,
    pub executed: bool,
    pub human: bool,
    pub outcome: Option<Outcome>,
    pub facts: Vec<Fact>,
    /// Ground-truth symbol after the step, as AP-bit mask.
    pub symbol: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub formula: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Planner DFA states, starting at the initial state.
    pub dfa_states: Vec<StateId>,
    pub events: Vec<AssistanceEvent>,
    pub completed_subtasks: u32,
    pub joint_confidence: f64,
    pub status: Status,
    pub transcript: Vec<String>,
    pub note: Option<String>,
}

impl PlanTrace {
    pub fn executed(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.executed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Replays the executed decisions from the initial scenario and feeds the
/// observed labels into the unpruned automaton. Independent of the planner's
/// own bookkeeping.
pub fn replay_accepts(
    scenario: &Scenario,
    dfa: &Dfa,
    trace: &PlanTrace,
) -> Result<bool, MissionError> {
    let resolved = dfa
        .ap_set
        .iter()
        .map(|a| scenario.world.resolve(a))
        .collect::<Result<Vec<_>, _>>()?;
    let mut world = scenario.world.clone();
    let mut robot = scenario.robot;
    let decisions = world.decision_set();
    let mut q = dfa.initial;
    for step in trace.executed() {
        let d = *decisions
            .get(step.decision)
            .ok_or_else(|| WorldError::MalformedDecision(format!("index {}", step.decision)))?;
        let t = world.apply(&robot, d)?;
        world = t.world;
        robot = t.robot;
        q = dfa.step(q, world.symbol_of(&resolved));
    }
    Ok(q == dfa.accepting)
}

/// Next step of the assistance cascade.
#[derive(Debug, Clone, PartialEq)]
pub enum CascadeStep {
    AlternativeAp(SubtaskAssignment),
    AlternativeState(SubtaskAssignment),
    Human,
}

/// Drops the failed proposition, then the failed next state once it has no
/// propositions left, and asks for a human once no next state is left.
pub fn assistance_cascade(
    state: &mut MissionState,
    assignment: &SubtaskAssignment,
    pruned: &PrunedDfa,
) -> CascadeStep {
    state.exhaust_ap(assignment.next_state, assignment.next_ap.id);
    if let Ok(a) = select_subtask_to(pruned, state, assignment.next_state) {
        return CascadeStep::AlternativeAp(a);
    }
    state.exhaust_target(assignment.next_state);
    match select_subtask(pruned, state) {
        Ok(a) => CascadeStep::AlternativeState(a),
        Err(_) => CascadeStep::Human,
    }
}

/// Conditions (i)-(ii) on the ground-truth run that starts in `q`: the run
/// loops on `q` until it first leaves, that first departure has `bit` set,
/// and it ends strictly closer to acceptance. Returns the end state.
pub fn semantic_check(
    dfa: &Dfa,
    pruned: &PrunedDfa,
    q: StateId,
    bit: usize,
    symbols: &[Symbol],
) -> Option<StateId> {
    let mut cur = q;
    let mut departed = false;
    for &s in symbols {
        let next = dfa.step(cur, s);
        if !departed && next != q {
            if !s.contains(bit) {
                return None;
            }
            departed = true;
        }
        cur = next;
    }
    let closer = match (pruned.distance_to_accept(cur), pruned.distance_to_accept(q)) {
        (Distance::Finite(a), Distance::Finite(b)) => a < b,
        _ => false,
    };
    (departed && closer).then_some(cur)
}

enum AttemptEnd {
    Advanced,
    Trigger(Trigger),
}

struct Runner<'a> {
    config: &'a MissionConfig,
    mission: &'a Mission,
    scorer: &'a dyn Scorer,
    model: Option<&'a CalibrationModel>,
    decisions: Vec<Decision>,
    world: World,
    robot: RobotState,
    state: MissionState,
    true_q: StateId,
    attempts: usize,
    human_used: bool,
    trace: PlanTrace,
}

impl<'a> Runner<'a> {
    fn bit_of(&self, ap: &AtomicProposition) -> usize {
        self.mission
            .dfa
            .bit_of(ap.id)
            .expect("assignment uses a formula atom")
    }

    fn set_state(&mut self, next: MissionState) {
        if next.current != self.state.current {
            self.trace.dfa_states.push(next.current);
        }
        self.state = next;
    }

    fn truth(&self, goal: &Goal) -> GroundTruth {
        GroundTruth::new(self.world.clone(), self.robot, vec![goal.clone()])
    }

    fn execute(
        &mut self,
        d: Decision,
    ) -> Result<(Outcome, Vec<Fact>, String, Symbol), MissionError> {
        let t = self.world.apply(&self.robot, d)?;
        self.world = t.world;
        self.robot = t.robot;
        let sym = self.world.symbol_of(&self.mission.resolved);
        self.true_q = self.mission.dfa.step(self.true_q, sym);
        Ok((t.outcome, t.feedback.facts, t.feedback.text, sym))
    }

    fn attempt(&mut self, a: &SubtaskAssignment) -> Result<AttemptEnd, MissionError> {
        self.attempts += 1;
        let goal = Goal::from_assignment(&self.world, a)?;
        let start_robot = self.robot;
        let start_true = self.true_q;
        let mut history: Vec<HistoryEntry> = Vec::new();
        let mut symbols = Vec::new();
        let mut certified = true;
        for k in 0..self.config.horizon {
            let prompt = build_prompt(a, &self.world, &start_robot, &history, self.config.horizon)
                .with_ground_truth(self.truth(&goal));
            let sv = score(
                self.scorer,
                &prompt,
                &self.decisions,
                self.config.softmax_temperature,
            )?;
            let choice = sv.argmax();
            let set = self.model.map(|m| predict_set(m, &sv, k));
            let size = set.as_ref().map(|s| s.len());
            certified &= set.as_ref().is_none_or(|s| s.singleton);
            let mut record = StepRecord {
                subtask: a.next_ap.id,
                attempt: self.attempts,
                step: k,
                prompt_digest: prompt.digest(),
                decision: choice,
                decision_text: self.world.describe(self.decisions[choice]),
                set_size: size,
                set_members: set.map(|s| s.members).unwrap_or_default(),
                executed: false,
                human: false,
                outcome: None,
                facts: Vec::new(),
                symbol: None,
            };
            if self.config.gating.requests_help() && size.is_some_and(|s| s > self.config.delta) {
                self.trace.steps.push(record);
                return Ok(AttemptEnd::Trigger(Trigger::PredictionSet {
                    size: size.unwrap_or_default(),
                }));
            }
            let (outcome, facts, text, sym) = self.execute(self.decisions[choice])?;
            record.executed = true;
            record.outcome = Some(outcome);
            record.facts = facts;
            record.symbol = Some(sym.0);
            history.push(HistoryEntry {
                decision: self.decisions[choice],
                text: record.decision_text.clone(),
                feedback: text,
            });
            self.trace.steps.push(record);
            symbols.push(sym);
            if self.config.gating.requests_help() && outcome != Outcome::Ok {
                return Ok(AttemptEnd::Trigger(Trigger::PhysicalFailure));
            }
        }

        let pruned = &self.mission.pruned;
        let bit = self.bit_of(&a.next_ap);
        let planned = || advance(pruned, &self.state, Symbol::single(bit));
        match self.config.gating {
            Gating::Assumed => {
                let next = planned().expect("single-proposition symbols are feasible");
                self.set_state(next);
                Ok(AttemptEnd::Advanced)
            }
            Gating::Conformal if certified => {
                let next = planned().expect("single-proposition symbols are feasible");
                self.set_state(next);
                Ok(AttemptEnd::Advanced)
            }
            Gating::Conformal => Ok(AttemptEnd::Trigger(Trigger::Uncertified)),
            Gating::Semantic | Gating::Both => {
                let Some(end) =
                    semantic_check(&self.mission.dfa, pruned, start_true, bit, &symbols)
                else {
                    return Ok(AttemptEnd::Trigger(Trigger::NotAchieved));
                };
                if self.config.gating == Gating::Both && !certified {
                    return Ok(AttemptEnd::Trigger(Trigger::Uncertified));
                }
                let next = if end == a.next_state {
                    planned().expect("single-proposition symbols are feasible")
                } else {
                    self.state.moved_to(end)
                };
                self.set_state(next);
                Ok(AttemptEnd::Advanced)
            }
        }
    }

    /// Lets the operator drive up to one horizon of steps for `a`. Succeeds
    /// when the ground-truth state ends closer to acceptance.
    fn human_attempt(
        &mut self,
        a: &SubtaskAssignment,
        human: &mut dyn HumanOperator,
        last_set: &[usize],
    ) -> Result<bool, MissionError> {
        let goal = Goal::from_assignment(&self.world, a)?;
        let start_robot = self.robot;
        let start_true = self.true_q;
        let constraints: Vec<String> = a.forbidden_aps.iter().map(|f| f.nl_text.clone()).collect();
        let mut history: Vec<HistoryEntry> = Vec::new();
        for k in 0..self.config.horizon {
            let prompt: PromptContext =
                build_prompt(a, &self.world, &start_robot, &history, self.config.horizon)
                    .with_ground_truth(self.truth(&goal));
            let request = HelpRequest {
                prompt: &prompt,
                prediction_set: if k == 0 { last_set } else { &[] },
                constraints: &constraints,
                step: k,
            };
            let Some(choice) = human.decide(&request) else {
                break;
            };
            if choice >= self.decisions.len() {
                break;
            }
            let d = self.decisions[choice];
            let (outcome, facts, text, sym) = self.execute(d)?;
            let decision_text = self.world.describe(d);
            history.push(HistoryEntry {
                decision: d,
                text: decision_text.clone(),
                feedback: text,
            });
            self.trace.steps.push(StepRecord {
                subtask: a.next_ap.id,
                attempt: self.attempts,
                step: k,
                prompt_digest: prompt.digest(),
                decision: choice,
                decision_text,
                set_size: None,
                set_members: Vec::new(),
                executed: true,
                human: true,
                outcome: Some(outcome),
                facts,
                symbol: Some(sym.0),
            });
        }
        self.trace.transcript.extend(human.take_transcript());
        let pruned = &self.mission.pruned;
        let closer = match (
            pruned.distance_to_accept(self.true_q),
            pruned.distance_to_accept(start_true),
        ) {
            (Distance::Finite(x), Distance::Finite(y)) => x < y,
            _ => false,
        };
        if closer {
            self.human_used = true;
            let next = if self.true_q == a.next_state {
                advance(pruned, &self.state, Symbol::single(self.bit_of(&a.next_ap)))
                    .expect("single-proposition symbols are feasible")
            } else {
                self.state.moved_to(self.true_q)
            };
            self.set_state(next);
        }
        Ok(closer)
    }

    fn event(
        &mut self,
        kind: EventKind,
        trigger: Trigger,
        a: &SubtaskAssignment,
        next: Option<u32>,
    ) {
        self.trace.events.push(AssistanceEvent {
            kind,
            trigger,
            state: self.state.current,
            ap: a.next_ap.id,
            next_ap: next,
            at_step: self.trace.steps.len(),
        });
    }
}

/// Runs one mission to completion, failure or denied assistance.
pub fn run_mission(
    config: &MissionConfig,
    scenario: &Scenario,
    scorer: &dyn Scorer,
    model: Option<&CalibrationModel>,
    human: &mut dyn HumanOperator,
) -> Result<PlanTrace, MissionError> {
    config.validate()?;
    let mission = compile_mission(config, &scenario.world)?;
    let accepting = mission.dfa.accepting;
    let state = MissionState::new(&mission.pruned, config.seed);
    let mut r = Runner {
        config,
        mission: &mission,
        scorer,
        model,
        decisions: scenario.world.decision_set(),
        world: scenario.world.clone(),
        robot: scenario.robot,
        true_q: mission.dfa.initial,
        attempts: 0,
        human_used: false,
        trace: PlanTrace {
            formula: config.formula.clone(),
            seed: config.seed,
            steps: Vec::new(),
            dfa_states: vec![state.current],
            events: Vec::new(),
            completed_subtasks: 0,
            joint_confidence: 1.0,
            status: Status::Failed,
            transcript: Vec::new(),
            note: None,
        },
        state,
    };

    let mut pending: Option<SubtaskAssignment> = None;
    let mut failure: Option<String> = None;
    loop {
        if config.gating.uses_truth() && r.true_q != r.state.current {
            if !r.mission.pruned.distance_to_accept(r.true_q).is_finite() {
                failure = Some("the observed run can no longer reach acceptance".into());
                break;
            }
            pending = None;
            let next = r.state.moved_to(r.true_q);
            r.set_state(next);
        }
        if r.state.current == accepting {
            break;
        }
        if r.attempts >= config.max_attempts {
            failure = Some("attempt budget exhausted".into());
            break;
        }
        let assignment = match pending.take() {
            Some(a) => a,
            None => match select_subtask(&r.mission.pruned, &r.state) {
                Ok(a) => a,
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            },
        };
        let before = r.state.current;
        let end = r.attempt(&assignment)?;
        let trigger = match end {
            AttemptEnd::Advanced => {
                if r.state.current != before {
                    r.trace.completed_subtasks += 1;
                }
                continue;
            }
            AttemptEnd::Trigger(t) => t,
        };
        if config.gating.uses_truth() && r.true_q != r.state.current {
            // The world moved the run elsewhere; resynchronize first.
            continue;
        }
        let last_set = r
            .trace
            .steps
            .last()
            .map(|s| s.set_members.clone())
            .unwrap_or_default();
        match assistance_cascade(&mut r.state, &assignment, &r.mission.pruned) {
            CascadeStep::AlternativeAp(next) => {
                r.event(
                    EventKind::AlternativeAp,
                    trigger,
                    &assignment,
                    Some(next.next_ap.id),
                );
                pending = Some(next);
            }
            CascadeStep::AlternativeState(next) => {
                r.event(
                    EventKind::AlternativeState,
                    trigger,
                    &assignment,
                    Some(next.next_ap.id),
                );
                pending = Some(next);
            }
            CascadeStep::Human => {
                if !human.available() {
                    r.event(EventKind::Denied, trigger, &assignment, None);
                    r.trace.status = Status::Failed;
                    r.trace.note = Some("human assistance denied".into());
                    return Err(MissionError::HumanAssistDenied(Box::new(r.trace)));
                }
                r.event(EventKind::Human, trigger, &assignment, None);
                let before = r.state.current;
                if !r.human_attempt(&assignment, human, &last_set)? {
                    failure = Some("human assistance did not make progress".into());
                    break;
                }
                if r.state.current != before {
                    r.trace.completed_subtasks += 1;
                }
            }
        }
    }

    let truth_ok = r.true_q == accepting;
    r.trace.status = match (r.state.current == accepting && truth_ok, r.human_used) {
        (true, false) => Status::Satisfied,
        (true, true) => Status::HumanCompleted,
        (false, _) => Status::Failed,
    };
    if r.trace.status == Status::Failed && failure.is_none() {
        failure = Some("planner reached acceptance but the observed run did not".into());
    }
    r.trace.note = failure;
    r.trace.joint_confidence = joint_confidence(config.alpha, r.trace.completed_subtasks);
    Ok(r.trace)
}

/// Goals the flat baseline may pursue from ground-truth state `q`.
fn flat_goals(mission: &Mission, q: StateId) -> Vec<Goal> {
    let pruned = &mission.pruned;
    let probe = MissionState {
        current: q,
        time: 0,
        exhausted_aps: Default::default(),
        exhausted_targets: Default::default(),
        rng_seed: 0,
    };
    let Ok(options) = candidates(pruned, &probe) else {
        return Vec::new();
    };
    let index = |id: u32| mission.dfa.bit_of(id).expect("formula atom");
    options
        .iter()
        .flat_map(|(q_next, aps)| {
            aps.iter().map(move |ap| {
                let a = assignment_for(pruned, q, *q_next, ap);
                Goal {
                    target: mission.resolved[index(ap.id)].clone(),
                    forbidden: a
                        .forbidden_aps
                        .iter()
                        .map(|f| mission.resolved[index(f.id)].clone())
                        .collect(),
                }
            })
        })
        .collect()
}

/// Every proposition of the formula as an unconstrained goal.
fn careless_goals(mission: &Mission) -> Vec<Goal> {
    mission
        .resolved
        .iter()
        .map(|r| Goal {
            target: r.clone(),
            forbidden: Vec::new(),
        })
        .collect()
}

/// Single-prompt baseline: the whole task as one instruction, scored for up
/// to `K * T` steps with no automaton guidance and no conformal gating.
pub fn run_flat_baseline(
    config: &MissionConfig,
    instruction: &[String],
    scenario: &Scenario,
    scorer: &dyn Scorer,
) -> Result<PlanTrace, MissionError> {
    config.validate()?;
    let mission = compile_mission(config, &scenario.world)?;
    let budget = mission.aps.len().max(1) * config.horizon;
    let decisions = scenario.world.decision_set();
    let mut world = scenario.world.clone();
    let mut robot = scenario.robot;
    let mut q = mission.dfa.initial;
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut steps = Vec::new();
    let mut states = vec![q];
    for k in 0..budget {
        if q == mission.dfa.accepting || !mission.pruned.distance_to_accept(q).is_finite() {
            break;
        }
        let prompt = PromptContext::new(
            TaskPart::instruction(instruction.to_vec()),
            &world,
            &scenario.robot,
            &history,
            budget,
        )
        .with_ground_truth(GroundTruth {
            careless: careless_goals(&mission),
            ..GroundTruth::new(world.clone(), robot, flat_goals(&mission, q))
        });
        let sv = score(scorer, &prompt, &decisions, config.softmax_temperature)?;
        let choice = sv.argmax();
        let d = decisions[choice];
        let t = world.apply(&robot, d)?;
        world = t.world;
        robot = t.robot;
        let sym = world.symbol_of(&mission.resolved);
        let next = mission.dfa.step(q, sym);
        if next != q {
            states.push(next);
        }
        q = next;
        let text = world.describe(d);
        history.push(HistoryEntry {
            decision: d,
            text: text.clone(),
            feedback: t.feedback.text,
        });
        steps.push(StepRecord {
            subtask: 0,
            attempt: 1,
            step: k,
            prompt_digest: prompt.digest(),
            decision: choice,
            decision_text: text,
            set_size: None,
            set_members: Vec::new(),
            executed: true,
            human: false,
            outcome: Some(t.outcome),
            facts: t.feedback.facts,
            symbol: Some(sym.0),
        });
    }
    let ok = q == mission.dfa.accepting;
    Ok(PlanTrace {
        formula: config.formula.clone(),
        seed: config.seed,
        steps,
        dfa_states: states,
        events: Vec::new(),
        completed_subtasks: 0,
        joint_confidence: 1.0,
        status: if ok {
            Status::Satisfied
        } else {
            Status::Failed
        },
        transcript: Vec::new(),
        note: (!ok).then(|| "step budget exhausted before acceptance".to_string()),
    })
}

impl From<AutomatonError> for MissionError {
    fn from(e: AutomatonError) -> Self {
        MissionError::Infeasible(e.to_string())
    }
}
