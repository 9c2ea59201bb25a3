//! Scenario files and the built-in scenario library.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ContainerKind, ContainerSpec, Layout, ObjectSpec, Place, RobotState, World, WorldError,
};

/// A world together with the robot's starting state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub world: World,
    pub robot: RobotState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    classes: Vec<String>,
    locations: Vec<String>,
    objects: Vec<ObjectRecord>,
    #[serde(default)]
    containers: Vec<ContainerRecord>,
    #[serde(default)]
    blocked: Vec<String>,
    robot: RobotRecord,
    #[serde(default)]
    synonyms: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    id: String,
    class: String,
    location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    container: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expected: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerRecord {
    id: String,
    kind: ContainerKind,
    location: String,
    #[serde(default)]
    open: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotRecord {
    at: String,
    #[serde(default)]
    holding: Option<String>,
}

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_SCENARIOS: &[&str] = &["kitchen", "corridor", "corridor_blocked"];

const KITCHEN: &str = include_str!("../../scenarios/kitchen.json");
const CORRIDOR: &str = include_str!("../../scenarios/corridor.json");
const CORRIDOR_BLOCKED: &str = include_str!("../../scenarios/corridor_blocked.json");

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    let text = match name {
        "kitchen" => KITCHEN,
        "corridor" => CORRIDOR,
        "corridor_blocked" => CORRIDOR_BLOCKED,
        _ => return None,
    };
    Some(Scenario::from_json(text).expect("built-in scenario is valid"))
}

/// Loads a scenario from a path, or a built-in one given as `builtin:<name>`.
pub fn load_scenario(spec: &str) -> Result<Scenario, WorldError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin_scenario(name)
            .ok_or_else(|| WorldError::Scenario(format!("no built-in scenario `{name}`")));
    }
    Scenario::from_json(&std::fs::read_to_string(Path::new(spec))?)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, WorldError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        build(file)
    }

    pub fn to_json(&self) -> String {
        let w = &self.world;
        let l = w.layout();
        let file = ScenarioFile {
            name: l.name.clone(),
            classes: l.classes.clone(),
            locations: l.locations.clone(),
            objects: l
                .objects
                .iter()
                .enumerate()
                .map(|(o, spec)| ObjectRecord {
                    id: spec.id.clone(),
                    class: spec.class.clone(),
                    location: l.locations[w.true_location(o, &self.robot)].clone(),
                    container: match w.place(o) {
                        Place::Inside(c) => Some(l.containers[c].id.clone()),
                        _ => None,
                    },
                    expected: Some(l.locations[spec.expected].clone()),
                })
                .collect(),
            containers: l
                .containers
                .iter()
                .enumerate()
                .map(|(c, spec)| ContainerRecord {
                    id: spec.id.clone(),
                    kind: spec.kind,
                    location: l.locations[spec.location].clone(),
                    open: w.is_open(c),
                })
                .collect(),
            blocked: l.blocked.iter().map(|&b| l.locations[b].clone()).collect(),
            robot: RobotRecord {
                at: l.locations[self.robot.at].clone(),
                holding: self.robot.holding.map(|o| l.objects[o].id.clone()),
            },
            synonyms: l.synonyms.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }
}

fn build(file: ScenarioFile) -> Result<Scenario, WorldError> {
    let err = |m: String| WorldError::Scenario(m);
    let loc = |name: &str| {
        file.locations
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| WorldError::Scenario(format!("unknown location `{name}`")))
    };
    if file.locations.is_empty() {
        return Err(err("at least one location is required".into()));
    }
    let unique = |ids: Vec<&String>, what: &str| {
        let set: BTreeSet<&String> = ids.iter().copied().collect();
        if set.len() == ids.len() {
            Ok(())
        } else {
            Err(WorldError::Scenario(format!("duplicate {what} id")))
        }
    };
    unique(file.locations.iter().collect(), "location")?;
    unique(file.objects.iter().map(|o| &o.id).collect(), "object")?;
    unique(file.containers.iter().map(|c| &c.id).collect(), "container")?;

    let containers = file
        .containers
        .iter()
        .map(|c| {
            Ok(ContainerSpec {
                id: c.id.clone(),
                kind: c.kind,
                location: loc(&c.location)?,
            })
        })
        .collect::<Result<Vec<_>, WorldError>>()?;
    let open: Vec<bool> = file.containers.iter().map(|c| c.open).collect();

    let robot_at = loc(&file.robot.at)?;
    let mut objects = Vec::new();
    let mut places = Vec::new();
    let mut holding = None;
    for (i, o) in file.objects.iter().enumerate() {
        if !file.classes.is_empty() && !file.classes.contains(&o.class) {
            return Err(err(format!(
                "object `{}` has unrecognized class `{}`",
                o.id, o.class
            )));
        }
        let at = loc(&o.location)?;
        let place = match &o.container {
            Some(cid) => {
                let c = containers
                    .iter()
                    .position(|c| &c.id == cid)
                    .ok_or_else(|| err(format!("unknown container `{cid}`")))?;
                if containers[c].location != at {
                    return Err(err(format!("object `{}` is not where `{cid}` is", o.id)));
                }
                Place::Inside(c)
            }
            None => Place::Floor(at),
        };
        let place = if file.robot.holding.as_deref() == Some(o.id.as_str()) {
            if at != robot_at || o.container.is_some() {
                return Err(err(format!(
                    "held object `{}` must be with the robot",
                    o.id
                )));
            }
            holding = Some(i);
            Place::Held
        } else {
            place
        };
        places.push(place);
        objects.push(ObjectSpec {
            id: o.id.clone(),
            class: o.class.clone(),
            expected: match &o.expected {
                Some(e) => loc(e)?,
                None => at,
            },
        });
    }
    if file.robot.holding.is_some() && holding.is_none() {
        return Err(err("robot holds an unknown object".into()));
    }
    let blocked = file
        .blocked
        .iter()
        .map(|b| loc(b))
        .collect::<Result<BTreeSet<_>, _>>()?;
    if blocked.contains(&robot_at) {
        return Err(err("robot starts in a blocked location".into()));
    }

    let layout = Layout {
        name: file.name,
        locations: file.locations,
        objects,
        containers,
        blocked,
        classes: file.classes,
        synonyms: file.synonyms,
    };
    Ok(Scenario {
        world: World::from_parts(layout, places, open),
        robot: RobotState {
            at: robot_at,
            holding,
        },
    })
}
