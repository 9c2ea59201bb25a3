//! Deterministic semantic environment: locations, objects, containers,
//! obstacles, the six-action decision space and ground-truth labeling.

mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltl::{AtomicProposition, Symbol};

pub use scenario::{builtin_scenario, load_scenario, Scenario, BUILTIN_SCENARIOS};

pub type LocId = usize;
pub type ObjId = usize;
pub type ContainerId = usize;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("malformed decision: {0}")]
    MalformedDecision(String),
    #[error("cannot resolve sub-task target `{0}` in this world")]
    UnresolvableTarget(String),
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerKind {
    Fridge,
    Drawer,
    Cabinet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    /// Where the planner is told to look for the object.
    pub expected: LocId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerSpec {
    pub id: String,
    pub kind: ContainerKind,
    pub location: LocId,
}

/// Static part of a world, shared between all states derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub name: String,
    pub locations: Vec<String>,
    pub objects: Vec<ObjectSpec>,
    pub containers: Vec<ContainerSpec>,
    pub blocked: BTreeSet<LocId>,
    pub classes: Vec<String>,
    pub synonyms: BTreeMap<String, Vec<String>>,
}

/// Where an object physically is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Place {
    Floor(LocId),
    Inside(ContainerId),
    Held,
}

/// Object placements and door states over a shared layout.
#[derive(Debug, Clone)]
pub struct World {
    layout: Arc<Layout>,
    places: Vec<Place>,
    open: Vec<bool>,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.places == other.places && self.open == other.open && self.layout == other.layout
    }
}

impl Eq for World {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RobotState {
    pub at: LocId,
    pub holding: Option<ObjId>,
}

/// One action-target choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    GoTo(LocId),
    PickUp(ObjId),
    PutDown,
    Open(ContainerId),
    DoNothing,
    ReportFailure,
}

impl Decision {
    /// Action number as listed in the action table (1 to 6).
    pub fn action_code(self) -> u8 {
        match self {
            Decision::GoTo(_) => 1,
            Decision::PickUp(_) => 2,
            Decision::PutDown => 3,
            Decision::Open(_) => 4,
            Decision::DoNothing => 5,
            Decision::ReportFailure => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Failed,
    Reported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fact", rename_all = "kebab-case")]
pub enum Fact {
    ObjectSeen {
        object: String,
        class: String,
        location: String,
    },
    ObjectMissing {
        location: String,
    },
    DoorState {
        container: String,
        open: bool,
    },
    LocationBlocked {
        location: String,
    },
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::ObjectSeen {
                class, location, ..
            } => {
                write!(f, "object of class {class} exists in location {location}")
            }
            Fact::ObjectMissing { location } => write!(f, "no object in location {location}"),
            Fact::DoorState { container, open } => write!(
                f,
                "the door of {container} is {}",
                if *open { "open" } else { "closed" }
            ),
            Fact::LocationBlocked { location } => {
                write!(f, "location {location} is blocked by an obstacle")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorFeedback {
    pub text: String,
    pub facts: Vec<Fact>,
}

impl SensorFeedback {
    pub fn from_facts(facts: Vec<Fact>) -> Self {
        let text = facts
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        SensorFeedback { text, facts }
    }
}

/// Result of applying one decision.
#[derive(Debug, Clone)]
pub struct Transition {
    pub world: World,
    pub robot: RobotState,
    pub feedback: SensorFeedback,
    pub outcome: Outcome,
}

/// A proposition resolved against a layout: candidate objects and target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedAp {
    pub ap_id: u32,
    pub candidates: Vec<ObjId>,
    pub destination: LocId,
}

fn normalize(text: &str) -> String {
    let lowered = text.trim().to_lowercase().replace(['_', '-'], " ");
    let stripped = ["a ", "an ", "the "]
        .iter()
        .find_map(|p| lowered.strip_prefix(p))
        .unwrap_or(&lowered);
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl World {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn name(&self) -> &str {
        &self.layout.name
    }

    pub fn place(&self, obj: ObjId) -> Place {
        self.places[obj]
    }

    pub fn is_open(&self, c: ContainerId) -> bool {
        self.open[c]
    }

    pub fn location_id(&self, name: &str) -> Result<LocId, WorldError> {
        self.layout
            .locations
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| WorldError::UnknownLocation(name.to_string()))
    }

    pub fn object_id(&self, name: &str) -> Option<ObjId> {
        self.layout.objects.iter().position(|o| o.id == name)
    }

    pub fn container_id(&self, name: &str) -> Option<ContainerId> {
        self.layout.containers.iter().position(|c| c.id == name)
    }

    /// True location of an object; held objects travel with the robot.
    pub fn true_location(&self, obj: ObjId, robot: &RobotState) -> LocId {
        match self.places[obj] {
            Place::Floor(l) => l,
            Place::Inside(c) => self.layout.containers[c].location,
            Place::Held => robot.at,
        }
    }

    /// Placement snapshot used as a search key.
    pub fn state_key(&self) -> (Vec<Place>, Vec<bool>) {
        (self.places.clone(), self.open.clone())
    }

    /// The fixed decision set `S`: go-to per location, pick-up per object,
    /// put-down, open per container, do-nothing, report-failure.
    pub fn decision_set(&self) -> Vec<Decision> {
        let l = &self.layout;
        let mut s: Vec<Decision> = (0..l.locations.len()).map(Decision::GoTo).collect();
        s.extend((0..l.objects.len()).map(Decision::PickUp));
        s.push(Decision::PutDown);
        s.extend((0..l.containers.len()).map(Decision::Open));
        s.push(Decision::DoNothing);
        s.push(Decision::ReportFailure);
        s
    }

    /// Prompt-style text such as `(1, LA) go to location LA`.
    pub fn describe(&self, d: Decision) -> String {
        let l = &self.layout;
        match d {
            Decision::GoTo(x) => format!("(1, {0}) go to location {0}", l.locations[x]),
            Decision::PickUp(o) => format!("(2, {0}) pick up object {0}", l.objects[o].id),
            Decision::PutDown => "(3) put down object".to_string(),
            Decision::Open(c) => {
                format!(
                    "(4, {0}) open the door of the container {0}",
                    l.containers[c].id
                )
            }
            Decision::DoNothing => "(5) do nothing".to_string(),
            Decision::ReportFailure => "(6) report item missing/failure".to_string(),
        }
    }

    /// Builds a decision from an action number and optional target name.
    pub fn decision(&self, action: u8, target: Option<&str>) -> Result<Decision, WorldError> {
        let bad = |m: &str| WorldError::MalformedDecision(m.to_string());
        let need = || target.ok_or_else(|| bad("action requires a target"));
        let d = match action {
            1 => Decision::GoTo(self.location_id(need()?)?),
            2 => Decision::PickUp(
                self.object_id(need()?)
                    .ok_or_else(|| bad("unknown object"))?,
            ),
            4 => Decision::Open(
                self.container_id(need()?)
                    .ok_or_else(|| bad("unknown container"))?,
            ),
            3 | 5 | 6 if target.is_some() => return Err(bad("action takes no target")),
            3 => Decision::PutDown,
            5 => Decision::DoNothing,
            6 => Decision::ReportFailure,
            _ => return Err(bad("action number must be 1 to 6")),
        };
        Ok(d)
    }

    fn validate(&self, d: Decision) -> Result<(), WorldError> {
        let l = &self.layout;
        let ok = match d {
            Decision::GoTo(x) => x < l.locations.len(),
            Decision::PickUp(o) => o < l.objects.len(),
            Decision::Open(c) => c < l.containers.len(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(WorldError::MalformedDecision(format!(
                "{d:?} is out of range"
            )))
        }
    }

    /// Objects and doors visible at a location.
    pub fn observe(&self, at: LocId) -> Vec<Fact> {
        let l = &self.layout;
        let mut facts = Vec::new();
        let mut seen = false;
        for (o, place) in self.places.iter().enumerate() {
            let visible = match *place {
                Place::Floor(x) => x == at,
                Place::Inside(c) => l.containers[c].location == at && self.open[c],
                Place::Held => false,
            };
            if visible {
                seen = true;
                facts.push(Fact::ObjectSeen {
                    object: l.objects[o].id.clone(),
                    class: l.objects[o].class.clone(),
                    location: l.locations[at].clone(),
                });
            }
        }
        if !seen {
            facts.push(Fact::ObjectMissing {
                location: l.locations[at].clone(),
            });
        }
        for (c, spec) in l.containers.iter().enumerate() {
            if spec.location == at {
                facts.push(Fact::DoorState {
                    container: spec.id.clone(),
                    open: self.open[c],
                });
            }
        }
        facts
    }

    /// Executes one decision. Domain failures are reported through the
    /// outcome, never as errors.
    pub fn apply(&self, robot: &RobotState, d: Decision) -> Result<Transition, WorldError> {
        self.validate(d)?;
        let mut world = self.clone();
        let mut next = *robot;
        let mut outcome = Outcome::Ok;
        let mut extra = Vec::new();
        match d {
            Decision::GoTo(x) => {
                if self.layout.blocked.contains(&x) {
                    outcome = Outcome::Failed;
                    extra.push(Fact::LocationBlocked {
                        location: self.layout.locations[x].clone(),
                    });
                } else {
                    next.at = x;
                }
            }
            Decision::PickUp(o) => {
                let reachable = match self.places[o] {
                    Place::Floor(x) => x == robot.at,
                    Place::Inside(c) => {
                        self.layout.containers[c].location == robot.at && self.open[c]
                    }
                    Place::Held => false,
                };
                if reachable && robot.holding.is_none() {
                    world.places[o] = Place::Held;
                    next.holding = Some(o);
                } else {
                    outcome = Outcome::Failed;
                }
            }
            Decision::PutDown => match robot.holding {
                Some(o) => {
                    world.places[o] = Place::Floor(robot.at);
                    next.holding = None;
                }
                None => outcome = Outcome::Failed,
            },
            Decision::Open(c) => {
                if self.layout.containers[c].location == robot.at {
                    world.open[c] = true;
                } else {
                    outcome = Outcome::Failed;
                }
            }
            Decision::DoNothing => {}
            Decision::ReportFailure => outcome = Outcome::Reported,
        }
        let mut facts = extra;
        facts.extend(world.observe(next.at));
        Ok(Transition {
            world,
            robot: next,
            feedback: SensorFeedback::from_facts(facts),
            outcome,
        })
    }

    /// Objects whose id, class or a synonym of the class matches `descriptor`.
    pub fn matching_objects(&self, descriptor: &str) -> Vec<ObjId> {
        let key = normalize(descriptor);
        let l = &self.layout;
        let by = |f: &dyn Fn(&ObjectSpec) -> bool| -> Vec<ObjId> {
            l.objects
                .iter()
                .enumerate()
                .filter(|(_, o)| f(o))
                .map(|(i, _)| i)
                .collect()
        };
        let exact = by(&|o| normalize(&o.id) == key);
        if !exact.is_empty() {
            return exact;
        }
        let class = by(&|o| normalize(&o.class) == key);
        if !class.is_empty() {
            return class;
        }
        let Some(classes) = l
            .synonyms
            .iter()
            .find(|(k, _)| normalize(k) == key)
            .map(|(_, v)| v.iter().map(|c| normalize(c)).collect::<Vec<_>>())
        else {
            return Vec::new();
        };
        by(&|o| classes.contains(&normalize(&o.class)))
    }

    pub fn resolve(&self, ap: &AtomicProposition) -> Result<ResolvedAp, WorldError> {
        let candidates = self.matching_objects(&ap.target);
        if candidates.is_empty() {
            return Err(WorldError::UnresolvableTarget(ap.target.clone()));
        }
        let destination = self
            .location_id(&ap.destination)
            .map_err(|_| WorldError::UnresolvableTarget(ap.destination.clone()))?;
        Ok(ResolvedAp {
            ap_id: ap.id,
            candidates,
            destination,
        })
    }

    /// A delivery counts once the object rests at the destination, on the
    /// floor or inside a container there. Carried objects do not count.
    pub fn is_satisfied(&self, ap: &ResolvedAp) -> bool {
        ap.candidates.iter().any(|&o| match self.places[o] {
            Place::Floor(x) => x == ap.destination,
            Place::Inside(c) => self.layout.containers[c].location == ap.destination,
            Place::Held => false,
        })
    }

    pub fn ap_satisfied(&self, ap: &AtomicProposition) -> Result<bool, WorldError> {
        Ok(self.is_satisfied(&self.resolve(ap)?))
    }

    /// Ground-truth symbol: bit `i` set iff `aps[i]` currently holds.
    pub fn symbol_of(&self, aps: &[ResolvedAp]) -> Symbol {
        aps.iter()
            .enumerate()
            .filter(|(_, ap)| self.is_satisfied(ap))
            .fold(Symbol::EMPTY, |s, (i, _)| s.with(i))
    }

    pub fn word_symbol(&self, aps: &[AtomicProposition]) -> Result<Symbol, WorldError> {
        let resolved = aps
            .iter()
            .map(|a| self.resolve(a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.symbol_of(&resolved))
    }

    /// Expected location of every object, as given to the planner.
    pub fn expected_locations(&self) -> Vec<(String, String, String)> {
        self.layout
            .objects
            .iter()
            .map(|o| {
                (
                    o.id.clone(),
                    o.class.clone(),
                    self.layout.locations[o.expected].clone(),
                )
            })
            .collect()
    }

    pub(crate) fn from_parts(layout: Layout, places: Vec<Place>, open: Vec<bool>) -> Self {
        World {
            layout: Arc::new(layout),
            places,
            open,
        }
    }

    /// Same layout with a different object placement, e.g. for randomized
    /// calibration worlds.
    pub fn with_state(&self, places: Vec<Place>, open: Vec<bool>) -> World {
        assert_eq!(places.len(), self.places.len());
        assert_eq!(open.len(), self.open.len());
        World {
            layout: Arc::clone(&self.layout),
            places,
            open,
        }
    }

    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn doors(&self) -> &[bool] {
        &self.open
    }
}
