//! Synthetic calibration data: randomized single-proposition tasks with
//! oracle ground truth, and empirical coverage of prediction sets.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{predict_set, CalibrationModel, CalibrationPoint, CalibrationStep};
use crate::ltl::{ActionVerb, AtomicProposition};
use crate::scorer::{
    oracle_choice, oracle_plan, score, Goal, GroundTruth, HistoryEntry, PromptContext, ScoreVector,
    Scorer, ScorerError, TaskPart,
};
use crate::world::{Place, RobotState, Scenario, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub horizon: usize,
    pub seed: u64,
    pub softmax_temperature: f64,
    /// Probability that an object sits inside a container at its location.
    pub inside_rate: f64,
    /// Probability that a container door starts open.
    pub open_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            horizon: 7,
            seed: 0,
            softmax_temperature: 1.0,
            inside_rate: 0.3,
            open_rate: 0.5,
        }
    }
}

const VERBS: [ActionVerb; 3] = [ActionVerb::Move, ActionVerb::Deliver, ActionVerb::Bring];

fn randomize(template: &Scenario, rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> Scenario {
    let mut layout = template.world.layout().clone();
    let free: Vec<usize> = (0..layout.locations.len())
        .filter(|l| !layout.blocked.contains(l))
        .collect();
    let mut places = Vec::with_capacity(layout.objects.len());
    for obj in layout.objects.iter_mut() {
        let loc = *free.choose(rng).expect("scenario has a free location");
        obj.expected = loc;
        let here: Vec<usize> = (0..layout.containers.len())
            .filter(|&c| layout.containers[c].location == loc)
            .collect();
        let place = match here.choose(rng) {
            Some(&c) if rng.random::<f64>() < cfg.inside_rate => Place::Inside(c),
            _ => Place::Floor(loc),
        };
        places.push(place);
    }
    let open = (0..layout.containers.len())
        .map(|_| rng.random::<f64>() < cfg.open_rate)
        .collect();
    let robot = RobotState {
        at: *free.choose(rng).expect("scenario has a free location"),
        holding: None,
    };
    Scenario {
        world: World::from_parts(layout, places, open),
        robot,
    }
}

/// A randomized world and a single-proposition task that the oracle can
/// achieve within the horizon.
pub fn random_task(
    template: &Scenario,
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
) -> (Scenario, AtomicProposition, Goal) {
    loop {
        let scenario = randomize(template, rng, cfg);
        let world = &scenario.world;
        let layout = world.layout();
        let obj = rng.random_range(0..layout.objects.len());
        let target = if rng.random::<bool>() {
            layout.objects[obj].id.clone()
        } else {
            layout.objects[obj].class.clone()
        };
        let here = world.true_location(obj, &scenario.robot);
        let dests: Vec<usize> = (0..layout.locations.len())
            .filter(|&l| l != here && !layout.blocked.contains(&l))
            .collect();
        let Some(&dest) = dests.choose(rng) else {
            continue;
        };
        let verb = *VERBS.choose(rng).expect("non-empty");
        let ap = AtomicProposition::new(0, verb, target, layout.locations[dest].clone());
        let Ok(resolved) = world.resolve(&ap) else {
            continue;
        };
        if world.is_satisfied(&resolved) {
            continue;
        }
        let goal = Goal {
            target: resolved,
            forbidden: Vec::new(),
        };
        if oracle_plan(world, &scenario.robot, &goal, cfg.horizon).is_ok() {
            return (scenario, ap, goal);
        }
    }
}

fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Scores one task along its oracle decisions, padded to the horizon.
fn teacher_forced(
    scorer: &dyn Scorer,
    scenario: &Scenario,
    ap: &AtomicProposition,
    goal: &Goal,
    cfg: &GeneratorConfig,
) -> Result<CalibrationPoint, ScorerError> {
    let decisions = scenario.world.decision_set();
    let mut world = scenario.world.clone();
    let mut robot = scenario.robot;
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut steps = Vec::with_capacity(cfg.horizon);
    for k in 0..cfg.horizon {
        let truth = GroundTruth::new(world.clone(), robot, vec![goal.clone()]);
        let best = oracle_choice(&truth, cfg.horizon - k, false).best;
        let truth_index = decisions
            .iter()
            .position(|d| *d == best)
            .expect("oracle picks from the decision set");
        let prompt = PromptContext::new(
            TaskPart::subtask(&ap.nl_text, Vec::new()),
            &scenario.world,
            &scenario.robot,
            &history,
            cfg.horizon,
        )
        .with_ground_truth(truth);
        let sv = score(scorer, &prompt, &decisions, cfg.softmax_temperature)?;
        steps.push(CalibrationStep {
            prompt_digest: prompt.digest(),
            softmax: sv.softmax,
            truth: truth_index,
        });
        let t = world
            .apply(&robot, best)
            .expect("oracle decisions are well formed");
        history.push(HistoryEntry {
            decision: best,
            text: world.describe(best),
            feedback: t.feedback.text,
        });
        world = t.world;
        robot = t.robot;
    }
    Ok(CalibrationPoint { steps })
}

/// `count` calibration points from independent random tasks. Point `i`
/// depends only on `(cfg.seed, first + i)`, so sets generated with
/// disjoint index ranges are independent draws.
pub fn generate_calibration(
    scorer: &dyn Scorer,
    template: &Scenario,
    cfg: &GeneratorConfig,
    first: usize,
    count: usize,
) -> Result<Vec<CalibrationPoint>, ScorerError> {
    (first..first + count)
        .into_par_iter()
        .map(|i| {
            let mut rng = point_rng(cfg.seed, i);
            let (scenario, ap, goal) = random_task(template, &mut rng, cfg);
            teacher_forced(scorer, &scenario, &ap, &goal, cfg)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub sequences: usize,
    pub covered: usize,
    pub coverage: f64,
    pub steps: usize,
    pub mean_set_size: f64,
    pub non_singleton_steps: usize,
    /// Set size to number of steps.
    pub histogram: BTreeMap<usize, usize>,
}

impl CoverageReport {
    /// Pools several reports into one.
    pub fn merge(reports: &[CoverageReport]) -> CoverageReport {
        let mut out = CoverageReport::default();
        let mut size_sum = 0.0;
        for r in reports {
            out.sequences += r.sequences;
            out.covered += r.covered;
            out.steps += r.steps;
            out.non_singleton_steps += r.non_singleton_steps;
            size_sum += r.mean_set_size * r.steps as f64;
            for (k, v) in &r.histogram {
                *out.histogram.entry(*k).or_default() += v;
            }
        }
        out.coverage = out.covered as f64 / out.sequences.max(1) as f64;
        out.mean_set_size = size_sum / out.steps.max(1) as f64;
        out
    }
}

/// Fraction of test sequences whose ground-truth decisions lie in the
/// product of the causal prediction sets, plus set-size statistics.
pub fn evaluate_coverage(model: &CalibrationModel, tests: &[CalibrationPoint]) -> CoverageReport {
    let mut r = CoverageReport {
        sequences: tests.len(),
        ..CoverageReport::default()
    };
    let mut size_sum = 0usize;
    for point in tests {
        let mut covered = true;
        for (t, step) in point.steps.iter().enumerate() {
            let sv = ScoreVector {
                raw: Vec::new(),
                softmax: step.softmax.clone(),
            };
            let set = predict_set(model, &sv, t);
            covered &= set.contains(step.truth);
            size_sum += set.len();
            r.steps += 1;
            if set.len() > 1 {
                r.non_singleton_steps += 1;
            }
            *r.histogram.entry(set.len()).or_default() += 1;
        }
        if covered {
            r.covered += 1;
        }
    }
    r.coverage = r.covered as f64 / r.sequences.max(1) as f64;
    r.mean_set_size = size_sum as f64 / r.steps.max(1) as f64;
    r
}
