//! `ltlplan` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 mission failed, 3 human
//! assistance denied, 4 infeasible formula.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ltlplan::automaton::prune;
use ltlplan::conformal::{calibrate, CalibrationModel, CalibrationSet, Method, RapsParams};
use ltlplan::ltl::{export_dot, parse_ltl, to_dfa, LtlError};
use ltlplan::mission::{
    compare_methods, evaluate_coverage, generate_calibration, load_suite, run_experiment_suite,
    run_mission, DenyHuman, Gating, GeneratorConfig, HumanMode, HumanOperator, InteractiveHuman,
    MissionError, RunMode, ScorerSpec, ScriptedOracle, Status, SuiteOptions,
};
use ltlplan::scorer::NoisyParams;
use ltlplan::world::load_scenario;

use config::{parse_atom, placeholder_atoms, PlanFile};

const EXIT_FAILED: u8 = 2;
const EXIT_DENIED: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ltlplan",
    version,
    about = "Co-safe LTL task planning with conformal gating"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a formula to its DFA and print DOT or JSON.
    Compile(CompileArgs),
    /// Run one mission.
    Plan(PlanArgs),
    /// Build a calibration set and fit a conformal model.
    Calibrate(CalibrateArgs),
    /// Run an experiment suite.
    Evaluate(EvaluateArgs),
    /// Compare the hierarchical planner with the flat single-prompt baseline.
    Baseline(BaselineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerKind {
    Oracle,
    OracleAmbiguous,
    Noisy,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum GatingArg {
    Semantic,
    Conformal,
    Both,
    Assumed,
}

impl From<GatingArg> for Gating {
    fn from(g: GatingArg) -> Gating {
        match g {
            GatingArg::Semantic => Gating::Semantic,
            GatingArg::Conformal => Gating::Conformal,
            GatingArg::Both => Gating::Both,
            GatingArg::Assumed => Gating::Assumed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HumanArg {
    Deny,
    ScriptedOracle,
    Interactive,
}

impl From<HumanArg> for HumanMode {
    fn from(h: HumanArg) -> HumanMode {
        match h {
            HumanArg::Deny => HumanMode::Deny,
            HumanArg::ScriptedOracle => HumanMode::ScriptedOracle,
            HumanArg::Interactive => HumanMode::Interactive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Vanilla,
    Raps,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Vanilla => Method::Vanilla,
            MethodArg::Raps => Method::Raps,
        }
    }
}

#[derive(Args)]
struct ScorerFlags {
    /// Decision scorer.
    #[arg(long, value_enum)]
    scorer: Option<ScorerKind>,
    /// Seed of the noisy scorer.
    #[arg(long)]
    scorer_seed: Option<u64>,
}

impl ScorerFlags {
    fn spec(&self) -> Option<ScorerSpec> {
        let seed = self.scorer_seed.unwrap_or(0);
        self.scorer.map(|k| match k {
            ScorerKind::Oracle => ScorerSpec::Oracle { ambiguity: false },
            ScorerKind::OracleAmbiguous => ScorerSpec::Oracle { ambiguity: true },
            ScorerKind::Noisy => ScorerSpec::Noisy(NoisyParams {
                seed,
                ..NoisyParams::default()
            }),
            ScorerKind::Uniform => ScorerSpec::Uniform,
        })
    }
}

#[derive(Args)]
struct CompileArgs {
    /// Formula, e.g. `F p1 & (!p1 U p2)`.
    formula: String,
    /// Proposition as `ID:VERB:TARGET:DESTINATION`; placeholders are used
    /// for atoms that are not given.
    #[arg(long = "atom", value_name = "ID:VERB:TARGET:DEST")]
    atoms: Vec<String>,
    #[arg(long, value_enum, default_value = "dot")]
    format: Format,
    /// Output file instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Mission configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    formula: Option<String>,
    #[arg(long = "atom", value_name = "ID:VERB:TARGET:DEST")]
    atoms: Vec<String>,
    /// Scenario file or `builtin:<name>`.
    #[arg(long)]
    scenario: Option<String>,
    #[command(flatten)]
    scorer: ScorerFlags,
    /// Calibrated model JSON; without one no prediction sets are computed.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    gating: Option<GatingArg>,
    #[arg(long, value_enum)]
    human: Option<HumanArg>,
    /// Ask a human on the terminal when help is needed.
    #[arg(long)]
    interactive: bool,
    #[arg(long)]
    softmax_temperature: Option<f64>,
    /// Write the plan trace JSON here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value = "builtin:kitchen")]
    scenario: String,
    /// Scorer used to score the calibration tasks (default noisy).
    #[command(flatten)]
    scorer: ScorerFlags,
    #[arg(long, value_enum, default_value = "vanilla")]
    method: MethodArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = RapsParams::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = RapsParams::default().k_reg)]
    k_reg: usize,
    /// Number of calibration tasks.
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Index of the first generated task.
    #[arg(long, default_value_t = 0)]
    first: usize,
    #[arg(long, default_value_t = 7)]
    horizon: usize,
    /// Seed of the task generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also measure coverage on this many fresh tasks.
    #[arg(long)]
    test: Option<usize>,
    /// Where to write the model JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Where to write the calibration points JSON.
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteFlags {
    /// Suite file or `builtin:<name>`.
    #[arg(long, default_value = "builtin:kitchen")]
    suite: String,
    /// Only run missions of this category.
    #[arg(long)]
    category: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[command(flatten)]
    scorer: ScorerFlags,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long, value_enum)]
    gating: Option<GatingArg>,
    #[arg(long, value_enum)]
    human: Option<HumanArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report JSON here.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    suite: SuiteFlags,
    /// Run the flat baseline instead of the hierarchical planner.
    #[arg(long)]
    flat: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    suite: SuiteFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => compile(a),
        Command::Plan(a) => plan(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Baseline(a) => baseline(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<MissionError>() {
        Some(MissionError::Infeasible(_)) | Some(MissionError::Ltl(LtlError::Unsatisfiable)) => {
            EXIT_INFEASIBLE
        }
        Some(MissionError::HumanAssistDenied(_)) => EXIT_DENIED,
        _ => match e.downcast_ref::<LtlError>() {
            Some(LtlError::Unsatisfiable) => EXIT_INFEASIBLE,
            _ => 1,
        },
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_model(path: &Path) -> Result<CalibrationModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn compile(a: CompileArgs) -> Result<ExitCode> {
    let mut atoms = a
        .atoms
        .iter()
        .map(|s| parse_atom(s))
        .collect::<Result<Vec<_>>>()?;
    atoms.extend(placeholder_atoms(&a.formula, &atoms));
    let formula = parse_ltl(&a.formula, &atoms)?;
    let dfa = to_dfa(&formula)?;
    let pruned = prune(&dfa);
    let live = dfa.live_states().iter().filter(|l| **l).count();
    let text = match a.format {
        Format::Dot => export_dot(&dfa),
        Format::Json => {
            let mut dump = pruned.dump();
            dump["edges"] = dfa.edge_count().into();
            dump["live_states"] = live.into();
            dump["propositions"] = serde_json::to_value(&dfa.ap_set)?;
            serde_json::to_string_pretty(&dump)? + "\n"
        }
    };
    write_output(a.out.as_deref(), &text)?;
    eprintln!(
        "states: {}, edges: {}, live states: {}, distance to accept: {}",
        dfa.num_states,
        dfa.edge_count(),
        live,
        pruned.distance_to_accept(dfa.initial)
    );
    if !pruned.is_satisfiable() {
        eprintln!("warning: every accepting run needs several sub-tasks at once");
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    }
    Ok(ExitCode::SUCCESS)
}

fn plan(a: PlanArgs) -> Result<ExitCode> {
    let file = match &a.config {
        Some(path) => PlanFile::read(path)?,
        None => PlanFile::default(),
    };
    let mut cfg = file.mission;
    if let Some(f) = a.formula {
        cfg.formula = f;
    }
    if !a.atoms.is_empty() {
        cfg.atoms = a
            .atoms
            .iter()
            .map(|s| parse_atom(s))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.gating {
        cfg.gating = v.into();
    }
    if let Some(v) = a.human {
        cfg.human = v.into();
    }
    if a.interactive {
        cfg.human = HumanMode::Interactive;
    }
    if let Some(v) = a.softmax_temperature {
        cfg.softmax_temperature = v;
    }
    let scenario_spec = a
        .scenario
        .or(file.scenario)
        .unwrap_or_else(|| "builtin:kitchen".into());
    let scenario = load_scenario(&scenario_spec)?;
    let spec = a.scorer.spec().or(file.scorer).unwrap_or_default();
    let scorer = spec.build(0)?;
    let model = match a.model.or(file.model) {
        Some(path) => Some(read_model(&path)?),
        None => None,
    };
    let trace_path = a.trace.or(file.trace);

    let stdin = io::stdin();
    let mut human: Box<dyn HumanOperator> = match cfg.human {
        HumanMode::Deny => Box::new(DenyHuman),
        HumanMode::ScriptedOracle => Box::new(ScriptedOracle::default()),
        HumanMode::Interactive => Box::new(InteractiveHuman::new(stdin.lock(), io::stderr())),
    };
    let result = run_mission(
        &cfg,
        &scenario,
        scorer.as_ref(),
        model.as_ref(),
        human.as_mut(),
    );
    let (trace, code) = match result {
        Ok(t) => {
            let code = match t.status {
                Status::Satisfied | Status::HumanCompleted => ExitCode::SUCCESS,
                Status::Failed => ExitCode::from(EXIT_FAILED),
            };
            (t, code)
        }
        Err(MissionError::HumanAssistDenied(t)) => (*t, ExitCode::from(EXIT_DENIED)),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &trace_path {
        fs::write(path, trace.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("formula: {}", trace.formula);
    println!("scorer: {}", scorer.name());
    println!("status: {:?}", trace.status);
    println!("executed steps: {}", trace.executed().count());
    println!("completed sub-tasks: {}", trace.completed_subtasks);
    println!("joint confidence: {:.4}", trace.joint_confidence);
    for e in &trace.events {
        println!(
            "event: {:?} at step {} (state q{}, sub-task p{}, trigger {:?})",
            e.kind, e.at_step, e.state, e.ap, e.trigger
        );
    }
    if let Some(note) = &trace.note {
        println!("note: {note}");
    }
    Ok(code)
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<ExitCode> {
    let template = load_scenario(&a.scenario)?;
    let spec = a
        .scorer
        .spec()
        .unwrap_or_else(|| ScorerSpec::Noisy(NoisyParams::default()));
    let scorer = spec.build(0)?;
    let gen = GeneratorConfig {
        horizon: a.horizon,
        seed: a.seed,
        ..GeneratorConfig::default()
    };
    let points = generate_calibration(scorer.as_ref(), &template, &gen, a.first, a.count)?;
    let model = calibrate(&CalibrationSet {
        method: a.method.into(),
        alpha: a.alpha,
        raps: RapsParams {
            lambda: a.lambda,
            k_reg: a.k_reg,
        },
        points: points.clone(),
    })?;
    fs::write(&a.out, serde_json::to_string_pretty(&model)?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.points {
        fs::write(path, serde_json::to_string(&points)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "method: {:?}, alpha: {}, N: {}, q_hat: {:.6}{}",
        model.method,
        model.alpha,
        model.n,
        model.q_hat,
        if model.degenerate {
            " (degenerate: full sets)"
        } else {
            ""
        }
    );
    if let Some(n) = a.test {
        let tests = generate_calibration(scorer.as_ref(), &template, &gen, a.first + a.count, n)?;
        let report = evaluate_coverage(&model, &tests);
        println!(
            "coverage: {:.4} over {} sequences, mean set size {:.4}, non-singleton steps {}",
            report.coverage, report.sequences, report.mean_set_size, report.non_singleton_steps
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn suite_setup(f: &SuiteFlags) -> Result<(ltlplan::mission::Suite, SuiteOptions)> {
    let mut suite = load_suite(&f.suite)?;
    if let Some(c) = &f.category {
        if !suite.categories().contains(c) {
            bail!(
                "suite has no category `{c}`; known: {}",
                suite.categories().join(", ")
            );
        }
        suite = suite.filtered(c);
    }
    if let Some(r) = f.repetitions {
        suite.repetitions = r;
    }
    let mut options = SuiteOptions {
        scorer: f.scorer.spec(),
        ..SuiteOptions::default()
    };
    if let Some(path) = &f.model {
        options.model = Some(read_model(path)?);
    }
    if let Some(v) = f.alpha {
        options.alpha = v;
    }
    if let Some(v) = f.delta {
        options.delta = v;
    }
    if let Some(v) = f.gating {
        options.gating = v.into();
    }
    if let Some(v) = f.human {
        if matches!(v, HumanArg::Interactive) {
            bail!("interactive assistance is only available for `plan`");
        }
        options.human = v.into();
    }
    if let Some(v) = f.seed {
        options.seed = v;
    }
    Ok((suite, options))
}

fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let (suite, mut options) = suite_setup(&a.suite)?;
    if a.flat {
        options.mode = RunMode::Flat;
    }
    let report = run_experiment_suite(&suite, &options)?;
    if let Some(path) = &a.suite.out {
        fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.summary_table());
    Ok(ExitCode::SUCCESS)
}

fn baseline(a: BaselineArgs) -> Result<ExitCode> {
    let (suite, options) = suite_setup(&a.suite)?;
    let cmp = compare_methods(&suite, &options)?;
    if let Some(path) = &a.suite.out {
        fs::write(path, serde_json::to_string_pretty(&cmp)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("hierarchical:");
    print!("{}", cmp.hierarchical.summary_table());
    println!("flat:");
    print!("{}", cmp.flat.summary_table());
    println!(
        "{:<10} {:>12} {:>8} {:>8}",
        "category", "hierarchical", "flat", "gap"
    );
    for c in suite.categories() {
        println!(
            "{:<10} {:>11.1}% {:>7.1}% {:>+7.1}",
            c,
            100.0 * cmp.hierarchical.completion(&c),
            100.0 * cmp.flat.completion(&c),
            cmp.gap(&c)
        );
    }
    Ok(ExitCode::SUCCESS)
}
