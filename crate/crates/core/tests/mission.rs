//! End-to-end missions, the assistance cascade and the flat baseline.

use std::io::Cursor;

use ltlplan::automaton::{prune, MissionState};
use ltlplan::conformal::{CalibrationModel, Method};
use ltlplan::ltl::{parse_ltl, to_dfa, ActionVerb, AtomicProposition};
use ltlplan::mission::{
    assistance_cascade, load_suite, replay_accepts, run_flat_baseline, run_mission, CascadeStep,
    DenyHuman, EventKind, Gating, HelpRequest, HumanOperator, InteractiveHuman, MissionConfig,
    MissionError, ScriptedOracle, Status,
};
use ltlplan::scorer::{NoisyScorer, OracleScorer};
use ltlplan::world::builtin_scenario;
use proptest::prelude::*;

fn ap(id: u32, target: &str, dest: &str) -> AtomicProposition {
    AtomicProposition::new(id, ActionVerb::Move, target, dest)
}

fn config(formula: &str, atoms: Vec<AtomicProposition>, seed: u64) -> MissionConfig {
    MissionConfig {
        formula: formula.into(),
        atoms,
        seed,
        ..MissionConfig::default()
    }
}

fn wide_model(q_hat: f64) -> CalibrationModel {
    CalibrationModel {
        method: Method::Vanilla,
        alpha: 0.05,
        q_hat,
        raps: None,
        n: 50,
        decision_count: 18,
        degenerate: false,
    }
}

fn drink_config() -> MissionConfig {
    config(
        "F p1 & F p2",
        vec![
            AtomicProposition::new(1, ActionVerb::Bring, "drink", "LC"),
            AtomicProposition::new(2, ActionVerb::Bring, "drink", "LA"),
        ],
        0,
    )
}

#[test]
fn easy_pen_mission_is_satisfied_within_horizon() {
    let s = builtin_scenario("kitchen").unwrap();
    let cfg = config("F p1", vec![ap(1, "P", "LF")], 0);
    let trace = run_mission(&cfg, &s, &OracleScorer::default(), None, &mut DenyHuman).unwrap();
    assert_eq!(trace.status, Status::Satisfied);
    assert!(trace.executed().count() <= cfg.horizon);
    assert!(trace.events.is_empty());
    let dfa = to_dfa(&parse_ltl(&cfg.formula, &cfg.atoms).unwrap()).unwrap();
    assert!(replay_accepts(&s, &dfa, &trace).unwrap());
    assert!((trace.joint_confidence - 0.95).abs() < 1e-12);
}

#[test]
fn blocked_coke_switches_to_the_other_coke() {
    let s = builtin_scenario("corridor_blocked").unwrap();
    let cfg = config(
        "F (p1 | p2)",
        vec![
            AtomicProposition::new(1, ActionVerb::Deliver, "coke1", "x3"),
            AtomicProposition::new(2, ActionVerb::Deliver, "coke2", "x3"),
        ],
        1,
    );
    let trace = run_mission(&cfg, &s, &OracleScorer::default(), None, &mut DenyHuman).unwrap();
    let kinds: Vec<EventKind> = trace.events.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, [EventKind::AlternativeAp]);
    assert_eq!((trace.events[0].ap, trace.events[0].next_ap), (2, Some(1)));
    assert_eq!(trace.status, Status::Satisfied);
}

#[test]
fn ambiguous_drink_escalates_to_human() {
    let s = builtin_scenario("kitchen").unwrap();
    let cfg = drink_config();
    let scorer = OracleScorer::default().with_ambiguity();
    let model = wide_model(0.6);
    let mut human = ScriptedOracle::default();
    let trace = run_mission(&cfg, &s, &scorer, Some(&model), &mut human).unwrap();
    assert!(trace.events.iter().any(|e| e.kind == EventKind::Human));
    assert!(human.calls > 0);
    assert!(trace.steps.iter().any(|st| st.human));
    assert_eq!(trace.status, Status::HumanCompleted);
    let dfa = to_dfa(&parse_ltl(&cfg.formula, &cfg.atoms).unwrap()).unwrap();
    assert!(replay_accepts(&s, &dfa, &trace).unwrap());
}

#[test]
fn denied_help_reports_the_partial_trace() {
    let s = builtin_scenario("kitchen").unwrap();
    let cfg = drink_config();
    let scorer = OracleScorer::default().with_ambiguity();
    let model = wide_model(0.6);
    match run_mission(&cfg, &s, &scorer, Some(&model), &mut DenyHuman) {
        Err(MissionError::HumanAssistDenied(trace)) => {
            assert_eq!(trace.events.last().unwrap().kind, EventKind::Denied);
            assert_eq!(trace.status, Status::Failed);
        }
        other => panic!("expected denial, got {other:?}"),
    }
}

/// Forwards to a scripted oracle and remembers its answers.
struct Recorder {
    inner: ScriptedOracle,
    answers: Vec<Option<usize>>,
}

impl HumanOperator for Recorder {
    fn decide(&mut self, request: &HelpRequest<'_>) -> Option<usize> {
        let a = self.inner.decide(request);
        self.answers.push(a);
        a
    }
}

#[test]
fn interactive_operator_reproduces_scripted_answers() {
    let s = builtin_scenario("kitchen").unwrap();
    let cfg = drink_config();
    let scorer = OracleScorer::default().with_ambiguity();
    let model = wide_model(0.6);
    let mut recorder = Recorder {
        inner: ScriptedOracle::default(),
        answers: Vec::new(),
    };
    let scripted = run_mission(&cfg, &s, &scorer, Some(&model), &mut recorder).unwrap();

    let mut input = String::from("not a number\n");
    for a in &recorder.answers {
        match a {
            Some(i) => input.push_str(&format!("{}\n", i + 1)),
            None => input.push_str("done\n"),
        }
    }
    let mut output = Vec::new();
    let mut human = InteractiveHuman::new(Cursor::new(input), &mut output);
    let interactive = run_mission(&cfg, &s, &scorer, Some(&model), &mut human).unwrap();
    let shown = String::from_utf8(output).unwrap();

    assert_eq!(interactive.status, scripted.status);
    let decisions = |t: &ltlplan::mission::PlanTrace| -> Vec<usize> {
        t.executed().map(|st| st.decision).collect()
    };
    assert_eq!(decisions(&interactive), decisions(&scripted));
    assert!(shown.contains("Assistance requested"));
    assert!(shown.contains("The planner hesitated between:"));
    assert!(shown.contains("Please enter a number between 1 and 18."));
    assert_eq!(
        interactive.transcript.first().unwrap(),
        "human: not a number"
    );
    assert!(interactive
        .transcript
        .iter()
        .any(|l| l.starts_with("executed: ")));
}

#[test]
fn cascade_tries_other_proposition_then_other_state_then_human() {
    let atoms = vec![ap(1, "coke1", "x3"), ap(2, "coke2", "x3")];
    let p = prune(&to_dfa(&parse_ltl("F (p1 | p2)", &atoms).unwrap()).unwrap());
    let mut state = MissionState::new(&p, 0);
    let first = ltlplan::automaton::select_subtask(&p, &state).unwrap();
    let CascadeStep::AlternativeAp(second) = assistance_cascade(&mut state, &first, &p) else {
        panic!("expected the other proposition");
    };
    assert_ne!(second.next_ap.id, first.next_ap.id);
    assert_eq!(
        assistance_cascade(&mut state, &second, &p),
        CascadeStep::Human
    );

    let single = prune(&to_dfa(&parse_ltl("F p1", &atoms).unwrap()).unwrap());
    let mut s1 = MissionState::new(&single, 0);
    let only = ltlplan::automaton::select_subtask(&single, &s1).unwrap();
    assert_eq!(
        assistance_cascade(&mut s1, &only, &single),
        CascadeStep::Human
    );
}

#[test]
fn infeasible_formula_is_reported() {
    let s = builtin_scenario("kitchen").unwrap();
    let cfg = config(
        "F (p1 & p2)",
        vec![ap(1, "pen", "LA"), ap(2, "apple", "LB")],
        0,
    );
    let err = run_mission(&cfg, &s, &OracleScorer::default(), None, &mut DenyHuman).unwrap_err();
    assert!(matches!(err, MissionError::Infeasible(_)), "{err}");
}

#[test]
fn flat_baseline_stays_within_budget() {
    let suite = load_suite("builtin:kitchen").unwrap();
    let s = suite.scenario().unwrap();
    let scorer = NoisyScorer::default();
    for m in &suite.missions {
        let cfg = MissionConfig {
            formula: m.formula.clone(),
            atoms: m.atoms.clone(),
            gating: Gating::Assumed,
            ..MissionConfig::default()
        };
        let trace = run_flat_baseline(&cfg, &m.instruction, &s, &scorer).unwrap();
        assert!(trace.steps.len() <= m.atoms.len() * cfg.horizon, "{}", m.id);
    }
}

#[test]
fn oracle_flat_baseline_solves_every_mission() {
    let suite = load_suite("builtin:kitchen").unwrap();
    let s = suite.scenario().unwrap();
    for m in &suite.missions {
        let cfg = MissionConfig {
            formula: m.formula.clone(),
            atoms: m.atoms.clone(),
            ..MissionConfig::default()
        };
        let trace = run_flat_baseline(&cfg, &m.instruction, &s, &OracleScorer::default()).unwrap();
        assert_eq!(trace.status, Status::Satisfied, "{}", m.id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn missions_are_deterministic_and_sound(index in 0usize..30, seed in 0u64..1000) {
        let suite = load_suite("builtin:kitchen").unwrap();
        let s = suite.scenario().unwrap();
        let m = &suite.missions[index];
        let cfg = MissionConfig {
            formula: m.formula.clone(),
            atoms: m.atoms.clone(),
            seed,
            gating: Gating::Semantic,
            ..MissionConfig::default()
        };
        let scorer = NoisyScorer::default();
        let run = || run_mission(&cfg, &s, &scorer, None, &mut DenyHuman);
        let (a, b) = (run(), run());
        let (a, b) = match (a, b) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(MissionError::HumanAssistDenied(a)), Err(MissionError::HumanAssistDenied(b))) => (*a, *b),
            (a, b) => return Err(TestCaseError::fail(format!("{a:?} / {b:?}"))),
        };
        prop_assert_eq!(a.to_json(), b.to_json());

        let mut per_attempt = std::collections::BTreeMap::new();
        for st in &a.steps {
            *per_attempt.entry(st.attempt).or_insert(0usize) += 1;
        }
        for n in per_attempt.values() {
            prop_assert!(*n <= cfg.horizon);
        }
        if a.status == Status::Satisfied {
            let dfa = to_dfa(&parse_ltl(&cfg.formula, &cfg.atoms).unwrap()).unwrap();
            prop_assert!(replay_accepts(&s, &dfa, &a).unwrap());
        }
    }

    #[test]
    fn cascade_ends_in_human_within_bound(index in 0usize..30, seed in any::<u64>()) {
        let suite = load_suite("builtin:kitchen").unwrap();
        let m = &suite.missions[index];
        let p = prune(&to_dfa(&parse_ltl(&m.formula, &m.atoms).unwrap()).unwrap());
        let mut state = MissionState::new(&p, seed);
        let mut a = ltlplan::automaton::select_subtask(&p, &state).unwrap();
        let bound = p.base.alphabet_len() + p.base.num_states;
        let mut triggers = 0;
        loop {
            triggers += 1;
            prop_assert!(triggers <= bound);
            match assistance_cascade(&mut state, &a, &p) {
                CascadeStep::AlternativeAp(next) | CascadeStep::AlternativeState(next) => a = next,
                CascadeStep::Human => break,
            }
        }
    }
}
