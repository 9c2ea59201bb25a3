//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts the criterion with its pinned tolerance.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ltlplan::automaton::{prune, select_subtask, MissionState};
use ltlplan::conformal::{
    calibrate, joint_confidence, CalibrationPoint, CalibrationSet, CalibrationStep, Method,
    RapsParams,
};
use ltlplan::ltl::{parse_ltl, to_dfa, ActionVerb, AtomicProposition, Expr, Symbol};
use ltlplan::mission::{
    compare_methods, evaluate_coverage, generate_calibration, load_suite, replay_accepts,
    run_experiment_suite, run_mission, CoverageReport, DenyHuman, EventKind, Gating,
    GeneratorConfig, MissionConfig, ScorerSpec, ScriptedOracle, Status, SuiteOptions, Trigger,
};
use ltlplan::scorer::{NoisyParams, NoisyScorer, OracleScorer};
use ltlplan::world::builtin_scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, ok: bool, detail: &str, elapsed: Duration, limit: Duration) {
    let within = elapsed <= limit;
    println!(
        "{} criterion {id}: {detail} [{:.2?} / limit {:.0?}]",
        if ok && within { "PASS" } else { "FAIL" },
        elapsed,
        limit
    );
}

fn atoms(n: u32) -> Vec<AtomicProposition> {
    (1..=n)
        .map(|i| AtomicProposition::new(i, ActionVerb::Move, format!("obj{i}"), "LA"))
        .collect()
}

#[test]
fn criterion_01_dfa_sizes() {
    let start = Instant::now();
    let one = to_dfa(&parse_ltl("F p1", &atoms(1)).unwrap()).unwrap();
    let two = to_dfa(&parse_ltl("F p1 & F p2", &atoms(2)).unwrap()).unwrap();
    let got = (
        one.num_states,
        one.edge_count(),
        two.num_states,
        two.edge_count(),
    );
    let ok = got == (2, 3, 4, 9);
    report(
        1,
        ok,
        &format!(
            "F p1 -> {} states/{} edges, F p1 & F p2 -> {} states/{} edges (want 2/3, 4/9)",
            got.0, got.1, got.2, got.3
        ),
        start.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
    assert!(start.elapsed() < Duration::from_secs(1));
}

#[test]
fn criterion_02_symbol_sets() {
    let start = Instant::now();
    let dfa = to_dfa(&parse_ltl("F p1 & (!p1 U p2)", &atoms(2)).unwrap()).unwrap();
    let pruned = prune(&dfa);
    let (p1, p2) = (Symbol::single(0), Symbol::single(1));
    let q0 = dfa.initial;
    let q1 = dfa.step(q0, p2);
    let qf = dfa.accepting;
    let infeasible: Vec<Symbol> = pruned.infeasible_symbols.iter().copied().collect();
    let live = dfa.live_states().iter().filter(|l| **l).count();
    let ok = live == 3
        && q1 != q0
        && q1 != qf
        && infeasible == vec![p1.with(1)]
        && pruned.feasible(q0, q0) == [Symbol::EMPTY]
        && pruned.feasible(q0, q1) == [p2]
        && pruned.feasible(q1, qf) == [p1]
        && pruned.feasible(q0, qf).is_empty();
    report(
        2,
        ok,
        &format!(
            "infeas={} q0->q0={} q0->q1={} q1->qF={}",
            pruned.render_symbols(&infeasible),
            pruned.render_symbols(pruned.feasible(q0, q0)),
            pruned.render_symbols(pruned.feasible(q0, q1)),
            pruned.render_symbols(pruned.feasible(q1, qf)),
        ),
        start.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
}

#[test]
fn criterion_03_joint_confidence() {
    let start = Instant::now();
    let v = joint_confidence(0.05, 5);
    let ok = (v - 0.7738).abs() <= 0.0005;
    report(
        3,
        ok,
        &format!("joint_confidence(0.05, 5) = {v:.6} (want 0.7738 +- 0.0005)"),
        start.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
}

const DRAWS: usize = 10;
const CAL_N: usize = 50;
const TESTS_PER_DRAW: usize = 500;

/// Pooled vanilla and RAPS coverage reports over independent
/// calibration/test draws from the noisy generator.
fn coverage_draws() -> (CoverageReport, CoverageReport, Vec<(f64, f64)>) {
    let template = builtin_scenario("kitchen").unwrap();
    let scorer = NoisyScorer::default();
    let cfg = GeneratorConfig::default();
    let (mut vanilla, mut raps, mut per_draw) = (Vec::new(), Vec::new(), Vec::new());
    for d in 0..DRAWS {
        let cal = generate_calibration(&scorer, &template, &cfg, d * 1_000, CAL_N).unwrap();
        let test = generate_calibration(
            &scorer,
            &template,
            &cfg,
            1_000_000 + d * 1_000,
            TESTS_PER_DRAW,
        )
        .unwrap();
        let model = |method| {
            calibrate(&CalibrationSet {
                method,
                alpha: 0.05,
                raps: RapsParams::default(),
                points: cal.clone(),
            })
            .unwrap()
        };
        let v = evaluate_coverage(&model(Method::Vanilla), &test);
        let r = evaluate_coverage(&model(Method::Raps), &test);
        per_draw.push((v.coverage, r.coverage));
        vanilla.push(v);
        raps.push(r);
    }
    (
        CoverageReport::merge(&vanilla),
        CoverageReport::merge(&raps),
        per_draw,
    )
}

#[test]
fn criterion_04_coverage() {
    let start = Instant::now();
    let (vanilla, _, per_draw) = coverage_draws();
    let n = vanilla.sequences as f64;
    let floor = 0.95 - 3.0 * (0.95 * 0.05 / n).sqrt();
    let ok = vanilla.sequences >= 500 && vanilla.coverage >= floor;
    let draws: Vec<String> = per_draw.iter().map(|(v, _)| format!("{v:.3}")).collect();
    report(
        4,
        ok,
        &format!(
            "coverage {:.4} over {} test sequences ({} draws of N={}), floor {:.4}; per draw [{}]",
            vanilla.coverage,
            vanilla.sequences,
            DRAWS,
            CAL_N,
            floor,
            draws.join(", ")
        ),
        start.elapsed(),
        Duration::from_secs(120),
    );
    assert!(ok);
    assert!(start.elapsed() < Duration::from_secs(120));
}

#[test]
fn criterion_05_raps_vs_vanilla() {
    let start = Instant::now();
    let (vanilla, raps, _) = coverage_draws();
    let ok = raps.mean_set_size <= vanilla.mean_set_size
        && raps.non_singleton_steps <= vanilla.non_singleton_steps;
    report(
        5,
        ok,
        &format!(
            "mean set size raps {:.4} vs vanilla {:.4}; non-singleton steps raps {} vs vanilla {} (of {})",
            raps.mean_set_size,
            vanilla.mean_set_size,
            raps.non_singleton_steps,
            vanilla.non_singleton_steps,
            vanilla.steps
        ),
        start.elapsed(),
        Duration::from_secs(120),
    );
    assert!(ok);
}

/// Brute-force order statistic with the quantile index in exact integer
/// arithmetic: `ceil((n + 1)(100 - a) / 100)` for `alpha = a / 100`.
fn brute_quantile(scores: &[f64], alpha_pct: usize, full: f64) -> (f64, bool) {
    let n = scores.len();
    let k = ((n + 1) * (100 - alpha_pct)).div_ceil(100);
    if k > n {
        return (full, true);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (sorted[k - 1], false)
}

#[test]
fn criterion_06_quantile_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let decisions = 18;
    let raps = RapsParams::default();
    for case in 0..200 {
        let n = rng.random_range(1..=100);
        let alpha_pct = [1, 5, 10][case % 3];
        let method = if rng.random::<bool>() {
            Method::Vanilla
        } else {
            Method::Raps
        };
        let points: Vec<CalibrationPoint> = (0..n)
            .map(|_| {
                let h = rng.random_range(1..=7);
                CalibrationPoint {
                    steps: (0..h)
                        .map(|_| {
                            let w: Vec<f64> = (0..decisions)
                                .map(|_| rng.random::<f64>().powi(4))
                                .collect();
                            let total: f64 = w.iter().sum();
                            CalibrationStep {
                                prompt_digest: String::new(),
                                softmax: w.iter().map(|x| x / total).collect(),
                                truth: rng.random_range(0..decisions),
                            }
                        })
                        .collect(),
                }
            })
            .collect();
        let scores: Vec<f64> = points
            .iter()
            .map(|p| {
                p.steps
                    .iter()
                    .map(|s| match method {
                        Method::Vanilla => 1.0 - s.softmax[s.truth],
                        Method::Raps => {
                            let g = s.softmax[s.truth];
                            let above: Vec<f64> = s
                                .softmax
                                .iter()
                                .enumerate()
                                .filter(|&(i, &x)| x > g || (x == g && i < s.truth))
                                .map(|(_, &x)| x)
                                .collect();
                            let rank = above.len() + 1;
                            above.iter().sum::<f64>()
                                + g
                                + raps.lambda * rank.saturating_sub(raps.k_reg) as f64
                        }
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let full = match method {
            Method::Vanilla => 1.0,
            Method::Raps => 1.0 + raps.lambda * decisions as f64,
        };
        let (want, degenerate) = brute_quantile(&scores, alpha_pct, full);
        let model = calibrate(&CalibrationSet {
            method,
            alpha: alpha_pct as f64 / 100.0,
            raps,
            points,
        })
        .unwrap();
        if (model.q_hat - want).abs() > 1e-12 || model.degenerate != degenerate {
            mismatches += 1;
        }
    }
    let ok = mismatches == 0;
    report(
        6,
        ok,
        &format!("{mismatches} mismatches over 200 random calibration sets"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn criterion_07_oracle_soundness() {
    let start = Instant::now();
    let suite = load_suite("builtin:kitchen").unwrap();
    let has_five_ap = suite.missions.iter().any(|m| {
        m.formula == "F p1 & F p2 & F p3 & (!p3 U p2) & F p5 & (!p2 U p5) & (!p5 U p1) & F p4"
    });
    let r = run_experiment_suite(&suite, &SuiteOptions::default()).unwrap();
    let all_satisfied = r.missions.iter().all(|m| m.status == Status::Satisfied);
    let all_replay = r.missions.iter().all(|m| m.replay_accepts);
    let per_cat: Vec<String> = r
        .categories
        .iter()
        .map(|(k, c)| format!("{k} {}/{}", c.completed, c.runs))
        .collect();
    let ok = suite.missions.len() >= 30 && has_five_ap && all_satisfied && all_replay;
    report(
        7,
        ok,
        &format!(
            "{} formulas, five-proposition formula present: {has_five_ap}; {}; all replay: {all_replay}",
            suite.missions.len(),
            per_cat.join(", ")
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
    assert!(start.elapsed() < Duration::from_secs(60));
}

#[test]
fn criterion_08_hierarchical_vs_flat() {
    let start = Instant::now();
    let mut suite = load_suite("builtin:kitchen").unwrap();
    suite.repetitions = 10;
    let options = SuiteOptions {
        scorer: Some(ScorerSpec::Noisy(NoisyParams::default())),
        gating: Gating::Assumed,
        ..SuiteOptions::default()
    };
    let c = compare_methods(&suite, &options).unwrap();
    let pct = |r: &ltlplan::mission::SuiteReport, k: &str| 100.0 * r.completion(k);
    let (hm, fm) = (pct(&c.hierarchical, "medium"), pct(&c.flat, "medium"));
    let (hh, fh) = (pct(&c.hierarchical, "hard"), pct(&c.flat, "hard"));
    let (he, fe) = (pct(&c.hierarchical, "easy"), pct(&c.flat, "easy"));
    let ok = hm >= fm && hh - fh >= 20.0;
    report(
        8,
        ok,
        &format!(
            "completion hierarchical/flat: easy {he:.1}/{fe:.1}, medium {hm:.1}/{fm:.1}, hard {hh:.1}/{fh:.1} (gap {:.1} pp)",
            hh - fh
        ),
        start.elapsed(),
        Duration::from_secs(180),
    );
    assert!(ok);
    assert!(start.elapsed() < Duration::from_secs(180));
}

fn blocked_coke() -> (Vec<EventKind>, Status, bool) {
    let scenario = builtin_scenario("corridor_blocked").unwrap();
    let atoms = vec![
        AtomicProposition::new(1, ActionVerb::Deliver, "coke1", "x3"),
        AtomicProposition::new(2, ActionVerb::Deliver, "coke2", "x3"),
    ];
    let config = MissionConfig {
        formula: "F (p1 | p2)".into(),
        atoms: atoms.clone(),
        seed: 1,
        ..MissionConfig::default()
    };
    // The fixed seed hands out the blocked delivery first.
    let dfa = to_dfa(&parse_ltl(&config.formula, &atoms).unwrap()).unwrap();
    let pruned = prune(&dfa);
    let first = select_subtask(&pruned, &MissionState::new(&pruned, config.seed)).unwrap();
    assert_eq!(first.next_ap.id, 2);
    let trace = run_mission(
        &config,
        &scenario,
        &OracleScorer::default(),
        None,
        &mut DenyHuman,
    )
    .unwrap();
    let replay = replay_accepts(&scenario, &dfa, &trace).unwrap();
    (
        trace.events.iter().map(|e| e.kind).collect(),
        trace.status,
        replay,
    )
}

fn ambiguous_drink() -> (Vec<EventKind>, Vec<Trigger>, Status, bool, f64) {
    let scenario = builtin_scenario("kitchen").unwrap();
    let atoms = vec![
        AtomicProposition::new(1, ActionVerb::Bring, "drink", "LC"),
        AtomicProposition::new(2, ActionVerb::Bring, "drink", "LA"),
    ];
    let cal = generate_calibration(
        &NoisyScorer::default(),
        &scenario,
        &GeneratorConfig::default(),
        1_000,
        50,
    )
    .unwrap();
    let model = calibrate(&CalibrationSet {
        method: Method::Vanilla,
        alpha: 0.05,
        raps: RapsParams::default(),
        points: cal,
    })
    .unwrap();
    let config = MissionConfig {
        formula: "F p1 & F p2".into(),
        atoms: atoms.clone(),
        seed: 0,
        ..MissionConfig::default()
    };
    let scorer = OracleScorer::default().with_ambiguity();
    let mut human = ScriptedOracle::default();
    let trace = run_mission(&config, &scenario, &scorer, Some(&model), &mut human).unwrap();
    let dfa = to_dfa(&parse_ltl(&config.formula, &atoms).unwrap()).unwrap();
    let replay = replay_accepts(&scenario, &dfa, &trace).unwrap();
    (
        trace.events.iter().map(|e| e.kind).collect(),
        trace.events.iter().map(|e| e.trigger).collect(),
        trace.status,
        replay,
        model.q_hat,
    )
}

#[test]
fn criterion_09_assistance_scenarios() {
    let start = Instant::now();
    let (blocked_events, blocked_status, blocked_replay) = blocked_coke();
    let (drink_events, drink_triggers, drink_status, drink_replay, q_hat) = ambiguous_drink();
    let blocked_ok = blocked_events == [EventKind::AlternativeAp]
        && blocked_status == Status::Satisfied
        && blocked_replay;
    let drink_ok = drink_events.contains(&EventKind::Human)
        && !drink_events.contains(&EventKind::Denied)
        && drink_triggers
            .iter()
            .all(|t| matches!(t, Trigger::PredictionSet { size } if *size > 1))
        && drink_status == Status::HumanCompleted
        && drink_replay;
    let ok = blocked_ok && drink_ok;
    report(
        9,
        ok,
        &format!(
            "blocked coke: events {blocked_events:?}, {blocked_status:?}; ambiguous drink (q_hat {q_hat:.3}): events {drink_events:?}, {drink_status:?}"
        ),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
    assert_eq!(
        drink_events,
        [
            EventKind::AlternativeState,
            EventKind::Human,
            EventKind::Human
        ],
        "exact event sequence under the fixed seed"
    );
}

/// Random co-safe formula in negation normal form over atoms `1..=k`.
fn random_formula(rng: &mut ChaCha8Rng, k: u32, depth: u32) -> Expr {
    let leaf = depth == 0 || rng.random_range(0..4) == 0;
    if leaf {
        return match rng.random_range(0..10) {
            0 => Expr::True,
            1 => Expr::False,
            2..=5 => Expr::Atom(rng.random_range(1..=k)),
            _ => Expr::Not(rng.random_range(1..=k)),
        };
    }
    let op = rng.random_range(0..5);
    let a = random_formula(rng, k, depth - 1);
    match op {
        0 => Expr::and(a, random_formula(rng, k, depth - 1)),
        1 => Expr::or(a, random_formula(rng, k, depth - 1)),
        2 => Expr::next(a),
        3 => Expr::until(a, random_formula(rng, k, depth - 1)),
        _ => Expr::eventually(a),
    }
}

fn render(e: &Expr) -> String {
    match e {
        Expr::True => "true".into(),
        Expr::False => "false".into(),
        Expr::Atom(i) => format!("p{i}"),
        Expr::Not(i) => format!("!p{i}"),
        Expr::And(a, b) => format!("({} & {})", render(a), render(b)),
        Expr::Or(a, b) => format!("({} | {})", render(a), render(b)),
        Expr::Next(a) => format!("X ({})", render(a)),
        Expr::Until(a, b) => format!("({} U {})", render(a), render(b)),
        Expr::Eventually(a) => format!("F ({})", render(a)),
    }
}

/// Finite-trace satisfaction at position `i` of `word`. Temporal operators
/// only look at positions inside the trace; `X` is strong. On the empty word
/// only formulas that are propositionally true hold. Letters are sets of
/// atom ids.
fn holds(e: &Expr, word: &[BTreeSet<u32>], i: usize) -> bool {
    let n = word.len();
    match e {
        Expr::True => true,
        Expr::False => false,
        Expr::Atom(p) => i < n && word[i].contains(p),
        Expr::Not(p) => i < n && !word[i].contains(p),
        Expr::And(a, b) => holds(a, word, i) && holds(b, word, i),
        Expr::Or(a, b) => holds(a, word, i) || holds(b, word, i),
        Expr::Next(a) => i + 1 < n && holds(a, word, i + 1),
        Expr::Until(a, b) => (i..n).any(|k| holds(b, word, k) && (i..k).all(|j| holds(a, word, j))),
        Expr::Eventually(a) => (i..n).any(|k| holds(a, word, k)),
    }
}

#[test]
fn criterion_10_ltlf_semantics() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut formulas, mut words, mut disagreements) = (0, 0usize, 0);
    while formulas < 100 {
        let k = rng.random_range(1..=3);
        let expr = random_formula(&mut rng, k, 4);
        let aps = atoms(k);
        let text = render(&expr);
        let formula = parse_ltl(&text, &aps).unwrap();
        formulas += 1;
        let dfa = to_dfa(&formula);
        let letters = 1u32 << k;
        for len in 0..=4u32 {
            for code in 0..letters.pow(len) {
                let mut c = code;
                let mut symbols = Vec::new();
                let mut sets = Vec::new();
                for _ in 0..len {
                    let letter = c % letters;
                    c /= letters;
                    let set: BTreeSet<u32> = (0..k)
                        .filter(|b| letter >> b & 1 == 1)
                        .map(|b| b + 1)
                        .collect();
                    let sym = set
                        .iter()
                        .filter_map(|id| formula.bit_of(*id))
                        .fold(Symbol::EMPTY, Symbol::with);
                    symbols.push(sym);
                    sets.push(set);
                }
                let want = holds(&expr, &sets, 0);
                let got = match &dfa {
                    Ok(d) => d.accepts(&symbols),
                    Err(_) => false,
                };
                words += 1;
                if want != got {
                    if disagreements < 8 {
                        eprintln!(
                            "{text} {:?} want {want} got {got} dfa_ok {}",
                            sets,
                            dfa.is_ok()
                        );
                    }
                    disagreements += 1;
                }
            }
        }
    }
    let ok = disagreements == 0;
    report(
        10,
        ok,
        &format!("{disagreements} disagreements over {formulas} formulas and {words} words"),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
    assert!(start.elapsed() < Duration::from_secs(30));
}
