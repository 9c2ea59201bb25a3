//! Temporal-logic task planning over natural-language sub-tasks.
//!
//! A co-safe LTL mission is compiled into a DFA ([`ltl`]), pruned and
//! decomposed into single-proposition sub-tasks ([`automaton`]), planned step
//! by step by a multiple-choice decision scorer ([`scorer`]) inside a semantic
//! simulator ([`world`]), and gated by conformal prediction sets
//! ([`conformal`]). [`mission`] ties everything together.

pub mod automaton;
pub mod conformal;
pub mod ltl;
pub mod mission;
pub mod scorer;
pub mod world;
