use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LtlError;

pub type ApId = u32;

/// Verb of a natural-language sub-task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionVerb {
    Deliver,
    Move,
    Bring,
}

impl ActionVerb {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionVerb::Deliver => "Deliver",
            ActionVerb::Move => "Move",
            ActionVerb::Bring => "Bring",
        }
    }
}

/// A sub-task expressed in natural language, e.g. "Move pen to LF".
///
/// The rendered `nl_text` is always derived from the `(action, target,
/// destination)` triple; any text supplied on deserialization is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AtomRecord")]
pub struct AtomicProposition {
    pub id: ApId,
    pub action: ActionVerb,
    pub target: String,
    pub destination: String,
    pub nl_text: String,
}

#[derive(Deserialize)]
struct AtomRecord {
    id: ApId,
    action: ActionVerb,
    target: String,
    destination: String,
    #[serde(default)]
    #[allow(dead_code)]
    nl_text: Option<String>,
}

impl TryFrom<AtomRecord> for AtomicProposition {
    type Error = LtlError;

    fn try_from(r: AtomRecord) -> Result<Self, LtlError> {
        let ap = AtomicProposition::new(r.id, r.action, r.target, r.destination);
        if ap.target.trim().is_empty() || ap.destination.trim().is_empty() {
            return Err(LtlError::EmptyAtom(ap.id));
        }
        Ok(ap)
    }
}

impl AtomicProposition {
    pub fn new(
        id: ApId,
        action: ActionVerb,
        target: impl Into<String>,
        destination: impl Into<String>,
    ) -> Self {
        let target = target.into();
        let destination = destination.into();
        let nl_text = format!("{} {} to {}", action.as_str(), target, destination);
        AtomicProposition {
            id,
            action,
            target,
            destination,
            nl_text,
        }
    }
}

/// Expression tree in negation normal form.
///
/// Negation is only ever applied to atoms, which the `Not` variant encodes
/// structurally.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Expr {
    True,
    False,
    Atom(ApId),
    Not(ApId),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Next(Box<Expr>),
    Until(Box<Expr>, Box<Expr>),
    Eventually(Box<Expr>),
}

impl Expr {
    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    pub fn next(a: Expr) -> Expr {
        Expr::Next(Box::new(a))
    }

    pub fn until(a: Expr, b: Expr) -> Expr {
        Expr::Until(Box::new(a), Box::new(b))
    }

    pub fn eventually(a: Expr) -> Expr {
        Expr::Eventually(Box::new(a))
    }

    pub fn atom_ids(&self, out: &mut BTreeSet<ApId>) {
        match self {
            Expr::True | Expr::False => {}
            Expr::Atom(id) | Expr::Not(id) => {
                out.insert(*id);
            }
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Until(a, b) => {
                a.atom_ids(out);
                b.atom_ids(out);
            }
            Expr::Next(a) | Expr::Eventually(a) => a.atom_ids(out),
        }
    }

    /// Number of `Until` nodes; used as a rough count of ordering constraints.
    pub fn until_count(&self) -> usize {
        match self {
            Expr::True | Expr::False | Expr::Atom(_) | Expr::Not(_) => 0,
            Expr::And(a, b) | Expr::Or(a, b) => a.until_count() + b.until_count(),
            Expr::Until(a, b) => 1 + a.until_count() + b.until_count(),
            Expr::Next(a) | Expr::Eventually(a) => a.until_count(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 0,
            Expr::And(..) => 1,
            Expr::Until(..) => 2,
            _ => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::True => f.write_str("true")?,
            Expr::False => f.write_str("false")?,
            Expr::Atom(id) => write!(f, "p{id}")?,
            Expr::Not(id) => write!(f, "!p{id}")?,
            Expr::And(a, b) => {
                a.fmt_prec(f, 1)?;
                f.write_str(" & ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Or(a, b) => {
                a.fmt_prec(f, 0)?;
                f.write_str(" | ")?;
                b.fmt_prec(f, 1)?;
            }
            Expr::Until(a, b) => {
                a.fmt_prec(f, 3)?;
                f.write_str(" U ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Next(a) => {
                f.write_str("X ")?;
                a.fmt_prec(f, 3)?;
            }
            Expr::Eventually(a) => {
                f.write_str("F ")?;
                a.fmt_prec(f, 3)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// A parsed co-safe formula together with the propositions it mentions.
///
/// `ap_set` is sorted by id; the position of a proposition in `ap_set` is
/// its bit in alphabet symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    pub root: Expr,
    pub ap_set: Vec<AtomicProposition>,
}

impl Formula {
    /// Builds a formula from an NNF expression, keeping only the atoms it uses.
    pub fn new(root: Expr, atoms: &[AtomicProposition]) -> Result<Self, LtlError> {
        let mut seen = BTreeSet::new();
        for ap in atoms {
            if !seen.insert(ap.id) {
                return Err(LtlError::DuplicateAtom(ap.id));
            }
            if ap.nl_text.trim().is_empty() {
                return Err(LtlError::EmptyAtom(ap.id));
            }
        }
        let mut used = BTreeSet::new();
        root.atom_ids(&mut used);
        let mut ap_set = Vec::with_capacity(used.len());
        for id in used {
            match atoms.iter().find(|a| a.id == id) {
                Some(ap) => ap_set.push(ap.clone()),
                None => return Err(LtlError::UnknownAtom { id, offset: 0 }),
            }
        }
        Ok(Formula { root, ap_set })
    }

    pub fn bit_of(&self, id: ApId) -> Option<usize> {
        self.ap_set.iter().position(|a| a.id == id)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}
