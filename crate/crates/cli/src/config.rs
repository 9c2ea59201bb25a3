//! Mission configuration files and proposition flags.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ltlplan::ltl::{ActionVerb, ApId, AtomicProposition};
use ltlplan::mission::{MissionConfig, ScorerSpec};

/// JSON accepted by `plan --config`: the mission fields plus where to find
/// the scenario, scorer and model.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct PlanFile {
    #[serde(flatten)]
    pub mission: MissionConfig,
    pub scenario: Option<String>,
    pub scorer: Option<ScorerSpec>,
    pub model: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl PlanFile {
    pub fn read(path: &Path) -> Result<PlanFile> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Parses `ID:VERB:TARGET:DESTINATION`, e.g. `1:move:pen:LF`.
pub fn parse_atom(text: &str) -> Result<AtomicProposition> {
    let parts: Vec<&str> = text.splitn(4, ':').collect();
    let [id, verb, target, dest] = parts[..] else {
        bail!("proposition `{text}` must look like ID:VERB:TARGET:DESTINATION");
    };
    let id: ApId = id
        .trim()
        .trim_start_matches('p')
        .parse()
        .with_context(|| format!("bad proposition id in `{text}`"))?;
    let verb = match verb.trim().to_ascii_lowercase().as_str() {
        "deliver" => ActionVerb::Deliver,
        "move" => ActionVerb::Move,
        "bring" => ActionVerb::Bring,
        other => bail!("unknown verb `{other}`; use deliver, move or bring"),
    };
    if target.trim().is_empty() || dest.trim().is_empty() {
        bail!("proposition `{text}` has an empty target or destination");
    }
    Ok(AtomicProposition::new(id, verb, target.trim(), dest.trim()))
}

/// Atom ids written as `p<digits>` in `formula`.
fn atom_ids(formula: &str) -> BTreeSet<ApId> {
    let bytes = formula.as_bytes();
    let mut ids = BTreeSet::new();
    let mut i = 0;
    while i < bytes.len() {
        let boundary = i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
        if boundary && bytes[i] == b'p' {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
            let word_ends =
                end == bytes.len() || !(bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_');
            if end > start && word_ends {
                if let Ok(id) = formula[start..end].parse() {
                    ids.insert(id);
                }
            }
            i = end.max(i + 1);
        } else {
            i += 1;
        }
    }
    ids
}

/// Placeholder propositions for atoms of `formula` missing from `given`.
pub fn placeholder_atoms(formula: &str, given: &[AtomicProposition]) -> Vec<AtomicProposition> {
    atom_ids(formula)
        .into_iter()
        .filter(|id| !given.iter().any(|a| a.id == *id))
        .map(|id| AtomicProposition::new(id, ActionVerb::Deliver, format!("object{id}"), "goal"))
        .collect()
}
