use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::oracle::GroundTruth;
use crate::automaton::SubtaskAssignment;
use crate::world::{ContainerKind, Decision, RobotState, World};

/// Static one-shot example included verbatim in every rendered prompt.
pub const ONE_SHOT_EXAMPLE: &str = "Example task: Deliver apple to LB.
Example environment: apple (Apple) at LD; the robot is at LA holding nothing.
Example answer sequence: (1, LD) go to location LD; (2, apple) pick up object apple; \
(1, LB) go to location LB; (3) put down object; (5) do nothing.";

const ACTIONS: &str = "Available actions:
(1, X) Go to location X
(2, X) Pick up object X
(3) Put down object
(4, X) Open the door of the container X
(5) Do nothing
(6) Report item missing/Failure";

const RULES: &str = "Rules:
- You cannot pick up an object inside a closed container before opening its door.
- You can hold one object at a time.
- An object is delivered once it is put down at the destination.
- Use (5) once the task is complete and (6) if the task cannot be completed.";

const RESPONSE_FORMAT: &str =
    "Answer with the single option that should be executed next, written exactly as listed.";

/// One executed step: the decision and the sensor feedback it produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub decision: Decision,
    pub text: String,
    pub feedback: String,
}

impl HistoryEntry {
    pub fn render(&self, step: usize) -> String {
        format!(
            "Step {step}: {}. Observation: {}.",
            self.text, self.feedback
        )
    }
}

/// Task part of the prompt. `clauses` lists the separate requirements the
/// model must keep track of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPart {
    pub instruction: String,
    pub avoid: Vec<String>,
    pub clauses: Vec<String>,
}

/// The five-part prompt plus the option list. Ground truth rides along for
/// simulator-backed scorers and is never rendered or serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptContext {
    pub system: String,
    pub environment: String,
    pub task: TaskPart,
    pub history: Vec<HistoryEntry>,
    pub response_format: String,
    pub choices: Vec<String>,
    pub step_budget: usize,
    #[serde(skip)]
    pub ground_truth: Option<Arc<GroundTruth>>,
}

impl PartialEq for PromptContext {
    fn eq(&self, other: &Self) -> bool {
        self.render() == other.render()
    }
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

fn system_part(step_budget: usize) -> String {
    format!(
        "You are the task planner of a mobile robot with a manipulator arm.\n{ACTIONS}\n{RULES}\n\
         The plan for the task must take at most {step_budget} steps.\n{ONE_SHOT_EXAMPLE}"
    )
}

fn environment_part(world: &World, robot: &RobotState) -> String {
    let l = world.layout();
    let objects: Vec<String> = world
        .expected_locations()
        .into_iter()
        .map(|(id, class, loc)| format!("{id} ({class}) at {loc}"))
        .collect();
    let containers: Vec<String> = l
        .containers
        .iter()
        .map(|c| {
            let kind = match c.kind {
                ContainerKind::Fridge => "fridge",
                ContainerKind::Drawer => "drawer",
                ContainerKind::Cabinet => "cabinet",
            };
            format!("{} ({kind}) at {}", c.id, l.locations[c.location])
        })
        .collect();
    let holding = match robot.holding {
        Some(o) => format!("holding {}", l.objects[o].id),
        None => "holding nothing".to_string(),
    };
    let mut text = format!(
        "Locations: {}.\nObjects and their expected locations: {}.",
        l.locations.join(", "),
        objects.join("; ")
    );
    if !containers.is_empty() {
        text.push_str(&format!("\nContainers: {}.", containers.join("; ")));
    }
    text.push_str(&format!(
        "\nThe robot is at {} {holding}.",
        l.locations[robot.at]
    ));
    text
}

impl TaskPart {
    /// A sub-task goal with propositions that must stay false meanwhile.
    pub fn subtask(goal: &str, avoid: Vec<String>) -> TaskPart {
        let mut clauses = vec![format!("{goal}.")];
        clauses.extend(
            avoid
                .iter()
                .map(|a| format!("Do not {} before the task is done.", lower_first(a))),
        );
        TaskPart {
            instruction: goal.to_string(),
            avoid,
            clauses,
        }
    }

    /// A free-form instruction given as a list of clauses.
    pub fn instruction(clauses: Vec<String>) -> TaskPart {
        TaskPart {
            instruction: clauses.join(" "),
            avoid: Vec::new(),
            clauses,
        }
    }
}

/// Builds the prompt for one sub-task step.
pub fn build_prompt(
    assignment: &SubtaskAssignment,
    world: &World,
    robot: &RobotState,
    history: &[HistoryEntry],
    step_budget: usize,
) -> PromptContext {
    let task = TaskPart::subtask(
        &assignment.next_ap.nl_text,
        assignment
            .forbidden_aps
            .iter()
            .map(|a| a.nl_text.clone())
            .collect(),
    );
    PromptContext::new(task, world, robot, history, step_budget)
}

impl PromptContext {
    pub fn new(
        task: TaskPart,
        world: &World,
        robot: &RobotState,
        history: &[HistoryEntry],
        step_budget: usize,
    ) -> PromptContext {
        PromptContext {
            system: system_part(step_budget),
            environment: environment_part(world, robot),
            task,
            history: history.to_vec(),
            response_format: RESPONSE_FORMAT.to_string(),
            choices: world
                .decision_set()
                .into_iter()
                .map(|d| world.describe(d))
                .collect(),
            step_budget,
            ground_truth: None,
        }
    }

    pub fn with_ground_truth(mut self, truth: GroundTruth) -> PromptContext {
        self.ground_truth = Some(Arc::new(truth));
        self
    }

    /// `h(t+1) = h(t) + s(t) + p(t+1)`.
    pub fn push(&self, entry: HistoryEntry) -> PromptContext {
        let mut next = self.clone();
        next.history.push(entry);
        next.ground_truth = None;
        next
    }

    /// Number of separate requirements in the task part.
    pub fn complexity(&self) -> usize {
        self.task.clauses.len().max(1)
    }

    pub fn task_text(&self) -> String {
        self.task.clauses.join("\n")
    }

    pub fn history_text(&self) -> String {
        self.history
            .iter()
            .enumerate()
            .map(|(i, h)| h.render(i + 1) + "\n")
            .collect()
    }

    pub fn options_text(&self) -> String {
        self.choices.iter().map(|c| format!("- {c}\n")).collect()
    }

    pub fn render(&self) -> String {
        format!(
            "[System]\n{}\n\n[Environment]\n{}\n\n[Task]\n{}\n\n[History]\n{}\n[Response format]\n{}\n\n[Options]\n{}",
            self.system,
            self.environment,
            self.task_text(),
            self.history_text(),
            self.response_format,
            self.options_text()
        )
    }

    /// Hex SHA-256 of the rendered text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}
