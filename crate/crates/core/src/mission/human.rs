//! Human operators that take over when the cascade runs out of options.

use std::io::{BufRead, Write};

use crate::scorer::{oracle_choice, PromptContext};
use crate::world::Decision;

/// What the operator is shown when asked for help.
#[derive(Debug, Clone, Copy)]
pub struct HelpRequest<'a> {
    pub prompt: &'a PromptContext,
    /// Prediction set (decision indices) that triggered the request.
    pub prediction_set: &'a [usize],
    pub constraints: &'a [String],
    pub step: usize,
}

pub trait HumanOperator {
    /// Index into the decision set, or `None` to hand control back.
    fn decide(&mut self, request: &HelpRequest<'_>) -> Option<usize>;

    fn available(&self) -> bool {
        true
    }

    fn take_transcript(&mut self) -> Vec<String> {
        Vec::new()
    }
}

/// Never available. Missions that need help fail.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenyHuman;

impl HumanOperator for DenyHuman {
    fn decide(&mut self, _: &HelpRequest<'_>) -> Option<usize> {
        None
    }

    fn available(&self) -> bool {
        false
    }
}

/// Acts like an ideal operator using the simulator ground truth.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    pub calls: usize,
}

impl HumanOperator for ScriptedOracle {
    fn decide(&mut self, request: &HelpRequest<'_>) -> Option<usize> {
        self.calls += 1;
        let truth = request.prompt.ground_truth.as_ref()?;
        let budget = request
            .prompt
            .step_budget
            .saturating_sub(request.prompt.history.len());
        let choice = oracle_choice(truth, budget, false).best;
        if matches!(choice, Decision::DoNothing | Decision::ReportFailure) {
            return None;
        }
        truth.world.decision_set().iter().position(|d| *d == choice)
    }
}

/// Reads decisions from a terminal-like stream. Accepts a 1-based option
/// number or `done`.
pub struct InteractiveHuman<R, W> {
    input: R,
    output: W,
    transcript: Vec<String>,
}

impl<R: BufRead, W: Write> InteractiveHuman<R, W> {
    pub fn new(input: R, output: W) -> Self {
        InteractiveHuman {
            input,
            output,
            transcript: Vec::new(),
        }
    }

    fn show(&mut self, request: &HelpRequest<'_>) -> std::io::Result<()> {
        let p = request.prompt;
        writeln!(
            self.output,
            "== Assistance requested (step {}) ==",
            request.step + 1
        )?;
        writeln!(self.output, "{}", p.environment)?;
        writeln!(self.output, "Task:\n{}", p.task_text())?;
        if !request.constraints.is_empty() {
            writeln!(self.output, "Constraints:")?;
            for c in request.constraints {
                writeln!(self.output, "  must not: {c}")?;
            }
        }
        if !p.history.is_empty() {
            write!(self.output, "History:\n{}", p.history_text())?;
        }
        if !request.prediction_set.is_empty() {
            writeln!(self.output, "The planner hesitated between:")?;
            for &i in request.prediction_set {
                if let Some(c) = p.choices.get(i) {
                    writeln!(self.output, "  * {c}")?;
                }
            }
        }
        writeln!(self.output, "Options:")?;
        for (i, c) in p.choices.iter().enumerate() {
            writeln!(self.output, "  [{}] {c}", i + 1)?;
        }
        write!(self.output, "Choose an option number or `done`: ")?;
        self.output.flush()
    }
}

impl<R: BufRead, W: Write> HumanOperator for InteractiveHuman<R, W> {
    fn decide(&mut self, request: &HelpRequest<'_>) -> Option<usize> {
        let n = request.prompt.choices.len();
        loop {
            self.show(request).ok()?;
            let mut line = String::new();
            if self.input.read_line(&mut line).ok()? == 0 {
                self.transcript.push("human: <eof>".into());
                return None;
            }
            let answer = line.trim();
            self.transcript.push(format!("human: {answer}"));
            if answer.eq_ignore_ascii_case("done") || answer.eq_ignore_ascii_case("q") {
                return None;
            }
            match answer.parse::<usize>() {
                Ok(k) if (1..=n).contains(&k) => {
                    self.transcript
                        .push(format!("executed: {}", request.prompt.choices[k - 1]));
                    return Some(k - 1);
                }
                _ => {
                    let _ = writeln!(self.output, "Please enter a number between 1 and {n}.");
                }
            }
        }
    }

    fn take_transcript(&mut self) -> Vec<String> {
        std::mem::take(&mut self.transcript)
    }
}
