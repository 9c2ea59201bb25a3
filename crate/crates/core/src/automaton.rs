//! Pruned task automaton: infeasible symbols, hop distance to acceptance and
//! online sub-task selection.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltl::{ApId, AtomicProposition, Dfa, StateId, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error("no DFA state is one hop closer to acceptance from q{0}")]
    NoProgress(StateId),
    #[error("every candidate sub-task from q{0} has been exhausted")]
    NoSubtask(StateId),
    #[error("symbol {0} requires several sub-tasks at once and was pruned")]
    InfeasibleSymbol(String),
    #[error("the accepting state is unreachable from q{0} in the pruned automaton")]
    Unreachable(StateId),
}

/// Hop count in the pruned automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Distance {
    Finite(u32),
    Infinite,
}

impl Distance {
    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    pub fn hops(self) -> Option<u32> {
        match self {
            Distance::Finite(h) => Some(h),
            Distance::Infinite => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(h) => write!(f, "{h}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

/// A DFA with multi-proposition symbols removed and all-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedDfa {
    pub base: Dfa,
    pub infeasible_symbols: BTreeSet<Symbol>,
    pub feasible_transitions: BTreeMap<(StateId, StateId), Vec<Symbol>>,
    distance: Vec<Vec<Distance>>,
}

/// Removes every symbol that needs two or more propositions at once and
/// fills the distance table by breadth-first search over what remains.
pub fn prune(dfa: &Dfa) -> PrunedDfa {
    let infeasible_symbols: BTreeSet<Symbol> = dfa.symbols().filter(|s| s.len() >= 2).collect();
    let mut feasible_transitions: BTreeMap<(StateId, StateId), Vec<Symbol>> = BTreeMap::new();
    for q in 0..dfa.num_states {
        for s in dfa.symbols().filter(|s| s.len() < 2) {
            feasible_transitions
                .entry((q, dfa.step(q, s)))
                .or_default()
                .push(s);
        }
    }

    let n = dfa.num_states;
    let mut succ = vec![BTreeSet::new(); n];
    for &(from, to) in feasible_transitions.keys() {
        succ[from].insert(to);
    }
    let mut distance = vec![vec![Distance::Infinite; n]; n];
    for (src, row) in distance.iter_mut().enumerate() {
        row[src] = Distance::Finite(0);
        let mut queue = VecDeque::from([src]);
        while let Some(q) = queue.pop_front() {
            let Distance::Finite(h) = row[q] else {
                unreachable!()
            };
            for &t in &succ[q] {
                if row[t] == Distance::Infinite {
                    row[t] = Distance::Finite(h + 1);
                    queue.push_back(t);
                }
            }
        }
    }

    PrunedDfa {
        base: dfa.clone(),
        infeasible_symbols,
        feasible_transitions,
        distance,
    }
}

impl PrunedDfa {
    pub fn distance(&self, from: StateId, to: StateId) -> Distance {
        self.distance[from][to]
    }

    pub fn distance_to_accept(&self, q: StateId) -> Distance {
        self.distance[q][self.base.accepting]
    }

    pub fn is_satisfiable(&self) -> bool {
        self.distance_to_accept(self.base.initial).is_finite()
    }

    /// `Σ^feas_{from→to}`.
    pub fn feasible(&self, from: StateId, to: StateId) -> &[Symbol] {
        self.feasible_transitions
            .get(&(from, to))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Propositions whose singleton symbol moves `from` to `to`.
    pub fn feasible_aps(&self, from: StateId, to: StateId) -> Vec<&AtomicProposition> {
        self.feasible(from, to)
            .iter()
            .filter(|s| s.len() == 1)
            .map(|s| &self.base.ap_set[s.bits().next().expect("singleton")])
            .collect()
    }

    pub fn ap(&self, id: ApId) -> Option<&AtomicProposition> {
        self.base.ap_set.iter().find(|a| a.id == id)
    }

    pub fn render_symbols(&self, symbols: &[Symbol]) -> String {
        let parts: Vec<String> = symbols
            .iter()
            .map(|s| s.render(&self.base.ap_set))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    /// Distance table and feasible-symbol sets as JSON for debugging.
    pub fn dump(&self) -> serde_json::Value {
        let n = self.base.num_states;
        let distance: Vec<Vec<Option<u32>>> = (0..n)
            .map(|a| (0..n).map(|b| self.distance(a, b).hops()).collect())
            .collect();
        let feasible: Vec<serde_json::Value> = self
            .feasible_transitions
            .iter()
            .map(|(&(from, to), syms)| {
                serde_json::json!({
                    "from": from,
                    "to": to,
                    "symbols": syms.iter().map(|s| s.render(&self.base.ap_set)).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "states": n,
            "initial": self.base.initial,
            "accepting": self.base.accepting,
            "infeasible": self
                .infeasible_symbols
                .iter()
                .map(|s| s.render(&self.base.ap_set))
                .collect::<Vec<_>>(),
            "feasible": feasible,
            "distance": distance,
        })
    }
}

/// Planner-side view of mission progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissionState {
    pub current: StateId,
    pub time: u64,
    /// Per candidate next state, the propositions already tried and abandoned.
    pub exhausted_aps: BTreeMap<StateId, BTreeSet<ApId>>,
    pub exhausted_targets: BTreeSet<StateId>,
    pub rng_seed: u64,
}

impl MissionState {
    pub fn new(pruned: &PrunedDfa, rng_seed: u64) -> Self {
        MissionState {
            current: pruned.base.initial,
            time: 0,
            exhausted_aps: BTreeMap::new(),
            exhausted_targets: BTreeSet::new(),
            rng_seed,
        }
    }

    pub fn exhaust_ap(&mut self, next_state: StateId, ap: ApId) {
        self.exhausted_aps.entry(next_state).or_default().insert(ap);
    }

    pub fn exhaust_target(&mut self, next_state: StateId) {
        self.exhausted_targets.insert(next_state);
    }

    /// Moves to `target` directly, e.g. when the observed run jumped further
    /// than the planned transition. Clears exhaustion on a state change.
    pub fn moved_to(&self, target: StateId) -> MissionState {
        let mut next = self.clone();
        next.time += 1;
        if target != self.current {
            next.current = target;
            next.exhausted_aps.clear();
            next.exhausted_targets.clear();
        }
        next
    }

    fn rng(&self) -> ChaCha8Rng {
        // Mix every field that selection depends on so equal states always
        // draw the same choice.
        let mut h = self.rng_seed ^ 0x9e37_79b9_7f4a_7c15;
        let mut mix = |v: u64| {
            h ^= v
                .wrapping_add(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(h << 6)
                .wrapping_add(h >> 2);
        };
        mix(self.current as u64);
        mix(self.time);
        for (q, aps) in &self.exhausted_aps {
            mix(*q as u64);
            for a in aps {
                mix(*a as u64);
            }
        }
        for q in &self.exhausted_targets {
            mix(*q as u64 | 1 << 40);
        }
        ChaCha8Rng::seed_from_u64(h)
    }
}

/// Sub-task handed from the automaton planner to the decision planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskAssignment {
    pub from_state: StateId,
    pub next_state: StateId,
    pub next_ap: AtomicProposition,
    /// Propositions that may hold while looping at `from_state`.
    pub self_loop_aps: Vec<AtomicProposition>,
    /// Propositions that must not become true before `next_ap`.
    pub forbidden_aps: Vec<AtomicProposition>,
}

/// `R(q) = {q' ≠ q | d(q', q_F) = d(q, q_F) - 1}` minus exhausted targets.
///
/// An empty set is returned without error when exhaustion emptied it; the
/// caller escalates in that case.
pub fn reachable_next(
    pruned: &PrunedDfa,
    state: &MissionState,
) -> Result<BTreeSet<StateId>, AutomatonError> {
    let q = state.current;
    if q == pruned.base.accepting {
        return Ok(BTreeSet::new());
    }
    let Distance::Finite(d) = pruned.distance_to_accept(q) else {
        return Err(AutomatonError::Unreachable(q));
    };
    let all: BTreeSet<StateId> = (0..pruned.base.num_states)
        .filter(|&p| p != q && pruned.distance_to_accept(p) == Distance::Finite(d - 1))
        .collect();
    if all.is_empty() {
        return Err(AutomatonError::NoProgress(q));
    }
    Ok(all.difference(&state.exhausted_targets).copied().collect())
}

/// Builds the assignment for a fixed `(current, next_state, next_ap)`.
pub fn assignment_for(
    pruned: &PrunedDfa,
    current: StateId,
    next_state: StateId,
    next_ap: &AtomicProposition,
) -> SubtaskAssignment {
    let self_loop_aps: Vec<AtomicProposition> = pruned
        .feasible_aps(current, current)
        .into_iter()
        .cloned()
        .collect();
    let forbidden_aps: Vec<AtomicProposition> = pruned
        .base
        .ap_set
        .iter()
        .filter(|a| a.id != next_ap.id && !self_loop_aps.iter().any(|s| s.id == a.id))
        .cloned()
        .collect();
    SubtaskAssignment {
        from_state: current,
        next_state,
        next_ap: next_ap.clone(),
        self_loop_aps,
        forbidden_aps,
    }
}

/// Candidate `(next_state, propositions)` pairs that are still available.
pub fn candidates(
    pruned: &PrunedDfa,
    state: &MissionState,
) -> Result<Vec<(StateId, Vec<AtomicProposition>)>, AutomatonError> {
    let reach = reachable_next(pruned, state)?;
    let empty = BTreeSet::new();
    Ok(reach
        .into_iter()
        .filter_map(|q_next| {
            let used = state.exhausted_aps.get(&q_next).unwrap_or(&empty);
            let aps: Vec<AtomicProposition> = pruned
                .feasible_aps(state.current, q_next)
                .into_iter()
                .filter(|a| !used.contains(&a.id))
                .cloned()
                .collect();
            (!aps.is_empty()).then_some((q_next, aps))
        })
        .collect())
}

/// Picks the next DFA state and sub-task uniformly at random under the
/// state's seed.
pub fn select_subtask(
    pruned: &PrunedDfa,
    state: &MissionState,
) -> Result<SubtaskAssignment, AutomatonError> {
    let options = candidates(pruned, state)?;
    if options.is_empty() {
        return Err(AutomatonError::NoSubtask(state.current));
    }
    let mut rng = state.rng();
    let (q_next, aps) = &options[rng.random_range(0..options.len())];
    let ap = &aps[rng.random_range(0..aps.len())];
    Ok(assignment_for(pruned, state.current, *q_next, ap))
}

/// Like [`select_subtask`] but restricted to one next state.
pub fn select_subtask_to(
    pruned: &PrunedDfa,
    state: &MissionState,
    next_state: StateId,
) -> Result<SubtaskAssignment, AutomatonError> {
    let options = candidates(pruned, state)?;
    let Some((q_next, aps)) = options.iter().find(|(q, _)| *q == next_state) else {
        return Err(AutomatonError::NoSubtask(state.current));
    };
    let mut rng = state.rng();
    let ap = &aps[rng.random_range(0..aps.len())];
    Ok(assignment_for(pruned, state.current, *q_next, ap))
}

/// Applies one feasible symbol to the mission state.
pub fn advance(
    pruned: &PrunedDfa,
    state: &MissionState,
    symbol: Symbol,
) -> Result<MissionState, AutomatonError> {
    if pruned.infeasible_symbols.contains(&symbol) {
        return Err(AutomatonError::InfeasibleSymbol(
            symbol.render(&pruned.base.ap_set),
        ));
    }
    Ok(state.moved_to(pruned.base.step(state.current, symbol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse_ltl, to_dfa, ActionVerb};

    fn atoms(n: u32) -> Vec<AtomicProposition> {
        (1..=n)
            .map(|i| AtomicProposition::new(i, ActionVerb::Deliver, format!("obj{i}"), "x3"))
            .collect()
    }

    fn pruned(text: &str, n: u32) -> PrunedDfa {
        prune(&to_dfa(&parse_ltl(text, &atoms(n)).unwrap()).unwrap())
    }

    #[test]
    fn single_atom_has_no_infeasible_symbols() {
        let p = pruned("F p1", 1);
        assert!(p.infeasible_symbols.is_empty());
        assert_eq!(p.distance_to_accept(p.base.initial), Distance::Finite(1));
    }

    #[test]
    fn distance_to_self_is_zero_and_unreachable_is_infinite() {
        let p = pruned("F p1 & (!p1 U p2)", 2);
        for q in 0..p.base.num_states {
            assert_eq!(p.distance(q, q), Distance::Finite(0));
        }
        // Nothing leaves the accepting state.
        assert_eq!(
            p.distance(p.base.accepting, p.base.initial),
            Distance::Infinite
        );
    }

    #[test]
    fn advance_rejects_pruned_symbols() {
        let p = pruned("F p1 & F p2", 2);
        let s = MissionState::new(&p, 0);
        assert!(matches!(
            advance(&p, &s, Symbol(0b11)),
            Err(AutomatonError::InfeasibleSymbol(_))
        ));
        let same = advance(&p, &s, Symbol::EMPTY).unwrap();
        assert_eq!(same.current, s.current);
        assert_eq!(same.time, 1);
    }

    #[test]
    fn accepting_state_has_no_successors() {
        let p = pruned("F p1", 1);
        let mut s = MissionState::new(&p, 3);
        s.current = p.base.accepting;
        assert!(reachable_next(&p, &s).unwrap().is_empty());
    }

    #[test]
    fn exhaustion_is_reported() {
        let p = pruned("F p1", 1);
        let mut s = MissionState::new(&p, 3);
        let a = select_subtask(&p, &s).unwrap();
        s.exhaust_ap(a.next_state, a.next_ap.id);
        assert_eq!(
            select_subtask(&p, &s).unwrap_err(),
            AutomatonError::NoSubtask(p.base.initial)
        );
        s.exhaust_target(a.next_state);
        assert!(reachable_next(&p, &s).unwrap().is_empty());
    }

    #[test]
    fn unsatisfiable_after_pruning() {
        // Both deliveries must happen in the same step.
        let p = pruned("F (p1 & p2)", 2);
        assert_eq!(p.distance_to_accept(p.base.initial), Distance::Infinite);
        assert!(!p.is_satisfiable());
        let s = MissionState::new(&p, 0);
        assert!(matches!(
            reachable_next(&p, &s),
            Err(AutomatonError::Unreachable(_))
        ));
    }
}
