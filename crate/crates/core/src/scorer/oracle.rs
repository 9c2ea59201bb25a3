use std::collections::{HashMap, HashSet, VecDeque};

use super::{PromptContext, Scorer, ScorerError};
use crate::automaton::SubtaskAssignment;
use crate::world::{Decision, Outcome, Place, ResolvedAp, RobotState, World, WorldError};

/// A proposition to make true while keeping `forbidden` false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    pub target: ResolvedAp,
    pub forbidden: Vec<ResolvedAp>,
}

impl Goal {
    pub fn from_assignment(world: &World, a: &SubtaskAssignment) -> Result<Goal, WorldError> {
        Ok(Goal {
            target: world.resolve(&a.next_ap)?,
            forbidden: a
                .forbidden_aps
                .iter()
                .map(|f| world.resolve(f))
                .collect::<Result<_, _>>()?,
        })
    }
}

/// Simulator truth attached to a prompt for oracle-backed scorers.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub world: World,
    pub robot: RobotState,
    /// Acceptable goals; the oracle pursues the one with the shortest plan.
    pub goals: Vec<Goal>,
    /// Goals of a reader who ignores every avoid and ordering clause of the
    /// task. Empty means `goals` with their constraints dropped.
    pub careless: Vec<Goal>,
}

impl GroundTruth {
    pub fn new(world: World, robot: RobotState, goals: Vec<Goal>) -> GroundTruth {
        GroundTruth {
            world,
            robot,
            goals,
            careless: Vec::new(),
        }
    }

    /// The situation as seen by a reader who ignores every constraint and,
    /// when the task names several goals, wrongly believes the one at
    /// `forget % len` is already done. May leave no goals at all.
    pub fn misread(&self, forget: usize) -> GroundTruth {
        let mut source = if self.careless.is_empty() {
            self.goals.clone()
        } else {
            self.careless.clone()
        };
        if source.len() > 1 {
            source.remove(forget % source.len());
        }
        let goals = source
            .into_iter()
            .map(|g| Goal {
                target: g.target,
                forbidden: Vec::new(),
            })
            .filter(|g| !self.world.is_satisfied(&g.target))
            .collect();
        GroundTruth {
            world: self.world.clone(),
            robot: self.robot,
            goals,
            careless: Vec::new(),
        }
    }
}

type Key = (RobotState, Vec<Place>, Vec<bool>);

fn key(world: &World, robot: &RobotState) -> Key {
    let (p, o) = world.state_key();
    (*robot, p, o)
}

/// Shortest decision sequence (at most `budget` long) after which the goal
/// holds, never making a forbidden proposition newly true on the way.
/// Ties go to the earliest decisions in decision-set order. An already
/// satisfied goal yields an empty plan.
pub fn oracle_plan(
    world: &World,
    robot: &RobotState,
    goal: &Goal,
    budget: usize,
) -> Result<Vec<Decision>, ScorerError> {
    oracle_plan_among(world, robot, goal, &goal.target.candidates, budget)
}

fn oracle_plan_among(
    world: &World,
    robot: &RobotState,
    goal: &Goal,
    candidates: &[usize],
    budget: usize,
) -> Result<Vec<Decision>, ScorerError> {
    let target = ResolvedAp {
        candidates: candidates.to_vec(),
        ..goal.target.clone()
    };
    if world.is_satisfied(&target) {
        return Ok(Vec::new());
    }
    let already: Vec<bool> = goal
        .forbidden
        .iter()
        .map(|f| world.is_satisfied(f))
        .collect();
    let violates = |w: &World| {
        goal.forbidden
            .iter()
            .zip(&already)
            .any(|(f, &was)| !was && w.is_satisfied(f))
    };
    let blocked = &world.layout().blocked;
    let actions: Vec<Decision> = world
        .decision_set()
        .into_iter()
        .filter(|d| match d {
            Decision::GoTo(x) => !blocked.contains(x),
            Decision::PickUp(o) => candidates.contains(o),
            Decision::PutDown | Decision::Open(_) => true,
            Decision::DoNothing | Decision::ReportFailure => false,
        })
        .collect();

    let start = key(world, robot);
    let mut parent: HashMap<Key, (Key, Decision)> = HashMap::new();
    let mut seen: HashSet<Key> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(world.clone(), *robot, 0usize)]);
    while let Some((w, r, depth)) = queue.pop_front() {
        if depth == budget {
            continue;
        }
        let here = key(&w, &r);
        for &d in &actions {
            let step = w.apply(&r, d).expect("decision from the decision set");
            if step.outcome != Outcome::Ok {
                continue;
            }
            let k = key(&step.world, &step.robot);
            if seen.contains(&k) || violates(&step.world) {
                continue;
            }
            seen.insert(k.clone());
            parent.insert(k.clone(), (here.clone(), d));
            if step.world.is_satisfied(&target) {
                let mut plan = vec![d];
                let mut cur = here.clone();
                while cur != start {
                    let (prev, pd) = parent[&cur].clone();
                    plan.push(pd);
                    cur = prev;
                }
                plan.reverse();
                return Ok(plan);
            }
            queue.push_back((step.world, step.robot, depth + 1));
        }
    }
    Err(ScorerError::NoPlanWithinBudget(budget))
}

/// The decision an oracle takes next, with optional alternatives that an
/// ambiguous goal makes equally plausible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleChoice {
    pub best: Decision,
    pub tied: Vec<Decision>,
}

/// Next oracle decision: first step of the shortest plan over all goals, do
/// nothing once a goal holds, report failure when no goal is reachable.
pub fn oracle_choice(truth: &GroundTruth, budget: usize, ambiguity: bool) -> OracleChoice {
    let mut best: Option<(usize, Decision, usize)> = None;
    for (gi, goal) in truth.goals.iter().enumerate() {
        if let Ok(plan) = oracle_plan(&truth.world, &truth.robot, goal, budget) {
            let first = plan.first().copied().unwrap_or(Decision::DoNothing);
            if best.is_none_or(|(len, _, _)| plan.len() < len) {
                best = Some((plan.len(), first, gi));
            }
        }
    }
    let Some((_, first, gi)) = best else {
        return OracleChoice {
            best: Decision::ReportFailure,
            tied: Vec::new(),
        };
    };
    let mut tied = Vec::new();
    if ambiguity && first != Decision::DoNothing {
        let goal = &truth.goals[gi];
        let layout = truth.world.layout();
        let mut classes: Vec<&str> = goal
            .target
            .candidates
            .iter()
            .map(|&o| layout.objects[o].class.as_str())
            .collect();
        classes.dedup();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() > 1 {
            for class in classes {
                let group: Vec<usize> = goal
                    .target
                    .candidates
                    .iter()
                    .copied()
                    .filter(|&o| layout.objects[o].class == class)
                    .collect();
                if let Ok(plan) =
                    oracle_plan_among(&truth.world, &truth.robot, goal, &group, budget)
                {
                    if let Some(&d) = plan.first() {
                        if d != first && !tied.contains(&d) {
                            tied.push(d);
                        }
                    }
                }
            }
        }
    }
    OracleChoice { best: first, tied }
}

pub(crate) fn remaining_budget(prompt: &PromptContext) -> usize {
    prompt.step_budget.saturating_sub(prompt.history.len())
}

/// Scores the ground-truth optimal decision with a fixed margin over all
/// other decisions.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    pub margin: f64,
    /// When set, targets that match several object classes through a
    /// synonym get near-tied scores for each class's first decision.
    pub ambiguity: bool,
    pub tie_gap: f64,
}

impl Default for OracleScorer {
    fn default() -> Self {
        OracleScorer {
            margin: 10.0,
            ambiguity: false,
            tie_gap: 0.05,
        }
    }
}

impl OracleScorer {
    pub fn with_ambiguity(mut self) -> Self {
        self.ambiguity = true;
        self
    }
}

impl Scorer for OracleScorer {
    fn name(&self) -> String {
        if self.ambiguity {
            "oracle-ambiguous".into()
        } else {
            "oracle".into()
        }
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
        let choice = oracle_choice(truth, remaining_budget(prompt), self.ambiguity);
        Ok(decisions
            .iter()
            .map(|d| {
                if *d == choice.best {
                    self.margin
                } else if choice.tied.contains(d) {
                    self.margin - self.tie_gap
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Scores every decision equally.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformScorer;

impl Scorer for UniformScorer {
    fn name(&self) -> String {
        "uniform".into()
    }

    fn raw_scores(
        &self,
        _: &PromptContext,
        decisions: &[Decision],
    ) -> Result<Vec<f64>, ScorerError> {
        Ok(vec![0.0; decisions.len()])
    }
}
