//! Co-safe LTL over natural-language atomic propositions.
//!
//! Formulas are parsed from a small prefix/infix syntax, normalized to
//! negation normal form, and compiled into a minimal DFA under finite-trace
//! semantics. Every co-safe formula yields an automaton whose accepting
//! states are all equivalent, so the minimal DFA has exactly one accepting
//! state and it is absorbing.

mod dfa;
mod dot;
mod formula;
mod minimize;
mod syntax;

pub use dfa::{to_dfa, Dfa, Edge, StateId, Symbol};
pub use dot::export_dot;
pub use formula::{ActionVerb, ApId, AtomicProposition, Expr, Formula};
pub use minimize::{hopcroft_minimize, RawDfa};
pub use syntax::parse_ltl;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtlError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("formula is outside the co-safe fragment at byte {offset}: {message}")]
    NonCoSafe { offset: usize, message: String },
    #[error("unknown atom p{id} at byte {offset}")]
    UnknownAtom { id: ApId, offset: usize },
    #[error("duplicate atomic proposition id {0}")]
    DuplicateAtom(ApId),
    #[error("atomic proposition {0} has an empty natural-language rendering")]
    EmptyAtom(ApId),
    #[error("too many atomic propositions ({0}); at most {max} are supported", max = dfa::MAX_APS)]
    TooManyAtoms(usize),
    #[error("formula is unsatisfiable: the accepting state is unreachable")]
    Unsatisfiable,
}
