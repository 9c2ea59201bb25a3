//! LTLf to DFA via formula progression.
//!
//! A state is a progressed obligation kept in disjunctive normal form over
//! interned literals (atoms, negated atoms, `X`, `U` and `F` nodes). Reading
//! symbol `σ` rewrites every literal:
//!
//! ```text
//! p        -> true if p ∈ σ else false
//! X a      -> a ∧ F true              (strong next: another letter must follow)
//! a U b    -> prog(b) ∨ (prog(a) ∧ a U b)
//! F a      -> prog(a) ∨ F a
//! ```
//!
//! A state accepts when its DNF contains the empty clause, which after
//! absorption means the obligation is exactly `true`. The explored automaton
//! is then minimized with Hopcroft's algorithm.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::formula::{ApId, AtomicProposition, Expr, Formula};
use super::minimize::{hopcroft_minimize, RawDfa};
use super::LtlError;

pub const MAX_APS: usize = 10;

pub type StateId = usize;

/// An element of `2^AP`, one bit per position in the formula's `ap_set`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol(pub u32);

impl Symbol {
    pub const EMPTY: Symbol = Symbol(0);

    pub fn single(bit: usize) -> Symbol {
        Symbol(1 << bit)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, bit: usize) -> bool {
        self.0 & (1 << bit) != 0
    }

    pub fn with(self, bit: usize) -> Symbol {
        Symbol(self.0 | (1 << bit))
    }

    pub fn bits(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |b| self.0 & (1 << b) != 0)
    }

    /// Renders the symbol as a set of proposition ids, e.g. `{p1,p2}`.
    pub fn render(self, aps: &[AtomicProposition]) -> String {
        let ids: Vec<String> = self.bits().map(|b| format!("p{}", aps[b].id)).collect();
        format!("{{{}}}", ids.join(","))
    }
}

/// Transitions between one ordered pair of states, grouped by target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub from: StateId,
    pub to: StateId,
    pub symbols: Vec<Symbol>,
}

/// Minimal complete DFA over `2^AP` with a single absorbing accepting state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dfa {
    pub ap_set: Vec<AtomicProposition>,
    pub num_states: usize,
    pub initial: StateId,
    pub accepting: StateId,
    /// Row-major `num_states × alphabet_len` successor table.
    pub transitions: Vec<StateId>,
}

impl Dfa {
    pub fn alphabet_len(&self) -> usize {
        1 << self.ap_set.len()
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        (0..self.alphabet_len() as u32).map(Symbol)
    }

    pub fn step(&self, q: StateId, sym: Symbol) -> StateId {
        self.transitions[q * self.alphabet_len() + sym.0 as usize]
    }

    pub fn run(&self, word: &[Symbol]) -> StateId {
        word.iter().fold(self.initial, |q, &s| self.step(q, s))
    }

    pub fn accepts(&self, word: &[Symbol]) -> bool {
        self.run(word) == self.accepting
    }

    pub fn bit_of(&self, id: ApId) -> Option<usize> {
        self.ap_set.iter().position(|a| a.id == id)
    }

    /// `Σ_{q→q'}`: every symbol moving `from` to `to`.
    pub fn symbols_between(&self, from: StateId, to: StateId) -> Vec<Symbol> {
        self.symbols()
            .filter(|&s| self.step(from, s) == to)
            .collect()
    }

    /// One edge per ordered `(from, to)` pair with at least one symbol.
    pub fn edges(&self) -> Vec<Edge> {
        let mut grouped: BTreeMap<(StateId, StateId), Vec<Symbol>> = BTreeMap::new();
        for q in 0..self.num_states {
            for s in self.symbols() {
                grouped.entry((q, self.step(q, s))).or_default().push(s);
            }
        }
        grouped
            .into_iter()
            .map(|((from, to), symbols)| Edge { from, to, symbols })
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// States from which the accepting state can still be reached.
    pub fn live_states(&self) -> Vec<bool> {
        let mut live = vec![false; self.num_states];
        live[self.accepting] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for q in 0..self.num_states {
                if !live[q] && self.symbols().any(|s| live[self.step(q, s)]) {
                    live[q] = true;
                    changed = true;
                }
            }
        }
        live
    }
}

impl fmt::Display for Dfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DFA({} states, {} edges, initial q{}, accepting q{})",
            self.num_states,
            self.edge_count(),
            self.initial,
            self.accepting
        )
    }
}

type Clause = BTreeSet<usize>;
type Dnf = BTreeSet<Clause>;

fn dnf_true() -> Dnf {
    let mut d = Dnf::new();
    d.insert(Clause::new());
    d
}

fn absorb(d: Dnf) -> Dnf {
    let clauses: Vec<Clause> = d.into_iter().collect();
    let mut out = Dnf::new();
    for (i, c) in clauses.iter().enumerate() {
        let subsumed = clauses
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && o.is_subset(c) && (o.len() < c.len() || j < i));
        if !subsumed {
            out.insert(c.clone());
        }
    }
    out
}

fn product(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = Dnf::new();
    for x in a {
        for y in b {
            out.insert(x.union(y).copied().collect());
        }
    }
    absorb(out)
}

fn union(mut a: Dnf, b: Dnf) -> Dnf {
    a.extend(b);
    absorb(a)
}

struct Progressor<'a> {
    formula: &'a Formula,
    lits: Vec<Expr>,
    index: HashMap<Expr, usize>,
}

impl<'a> Progressor<'a> {
    fn lit(&mut self, e: Expr) -> usize {
        if let Some(&i) = self.index.get(&e) {
            return i;
        }
        let i = self.lits.len();
        self.lits.push(e.clone());
        self.index.insert(e, i);
        i
    }

    fn dnf_of(&mut self, e: &Expr) -> Dnf {
        match e {
            Expr::True => dnf_true(),
            Expr::False => Dnf::new(),
            Expr::And(a, b) => {
                let (a, b) = (self.dnf_of(a), self.dnf_of(b));
                product(&a, &b)
            }
            Expr::Or(a, b) => {
                let (a, b) = (self.dnf_of(a), self.dnf_of(b));
                union(a, b)
            }
            other => {
                let i = self.lit(other.clone());
                let mut d = Dnf::new();
                d.insert(std::iter::once(i).collect());
                d
            }
        }
    }

    fn holds(&self, id: ApId, sym: Symbol) -> bool {
        let bit = self
            .formula
            .bit_of(id)
            .expect("atoms are validated at parse time");
        sym.contains(bit)
    }

    fn progress_expr(&mut self, e: &Expr, sym: Symbol) -> Dnf {
        match e {
            Expr::True => dnf_true(),
            Expr::False => Dnf::new(),
            Expr::Atom(id) => {
                if self.holds(*id, sym) {
                    dnf_true()
                } else {
                    Dnf::new()
                }
            }
            Expr::Not(id) => {
                if self.holds(*id, sym) {
                    Dnf::new()
                } else {
                    dnf_true()
                }
            }
            Expr::And(a, b) => {
                let (a, b) = (self.progress_expr(a, sym), self.progress_expr(b, sym));
                product(&a, &b)
            }
            Expr::Or(a, b) => {
                let (a, b) = (self.progress_expr(a, sym), self.progress_expr(b, sym));
                union(a, b)
            }
            Expr::Next(a) => {
                let more = Expr::eventually(Expr::True);
                self.dnf_of(&Expr::and((**a).clone(), more))
            }
            Expr::Until(a, b) => {
                let now = self.progress_expr(b, sym);
                let hold = self.progress_expr(a, sym);
                let again = self.dnf_of(e);
                union(now, product(&hold, &again))
            }
            Expr::Eventually(a) => {
                let now = self.progress_expr(a, sym);
                let again = self.dnf_of(e);
                union(now, again)
            }
        }
    }

    fn progress(&mut self, state: &Dnf, sym: Symbol) -> Dnf {
        let mut out = Dnf::new();
        for clause in state {
            let mut acc = dnf_true();
            for &l in clause {
                let e = self.lits[l].clone();
                let p = self.progress_expr(&e, sym);
                acc = product(&acc, &p);
                if acc.is_empty() {
                    break;
                }
            }
            out.extend(acc);
        }
        absorb(out)
    }
}

/// Compiles a co-safe formula into its minimal DFA under finite-trace
/// semantics.
///
/// The empty word is accepted only by formulas equivalent to `true` on the
/// empty trace; `X` is the strong next. Returns
/// [`LtlError::Unsatisfiable`] when no word is accepted.
pub fn to_dfa(formula: &Formula) -> Result<Dfa, LtlError> {
    if formula.ap_set.len() > MAX_APS {
        return Err(LtlError::TooManyAtoms(formula.ap_set.len()));
    }
    let alphabet_len = 1usize << formula.ap_set.len();
    let mut prog = Progressor {
        formula,
        lits: Vec::new(),
        index: HashMap::new(),
    };

    let init = prog.dnf_of(&formula.root);
    let mut ids: HashMap<Dnf, usize> = HashMap::new();
    let mut states: Vec<Dnf> = Vec::new();
    let mut delta: Vec<usize> = Vec::new();
    ids.insert(init.clone(), 0);
    states.push(init);
    let mut queue = VecDeque::from([0usize]);
    while let Some(q) = queue.pop_front() {
        let state = states[q].clone();
        let mut row = Vec::with_capacity(alphabet_len);
        for s in 0..alphabet_len as u32 {
            let next = prog.progress(&state, Symbol(s));
            let id = match ids.get(&next) {
                Some(&id) => id,
                None => {
                    let id = states.len();
                    ids.insert(next.clone(), id);
                    states.push(next);
                    queue.push_back(id);
                    id
                }
            };
            row.push(id);
        }
        // Rows are filled in BFS order, which matches state numbering.
        debug_assert_eq!(delta.len(), q * alphabet_len);
        delta.extend(row);
    }

    let raw = RawDfa {
        alphabet_len,
        initial: 0,
        accepting: states.iter().map(|d| d.contains(&Clause::new())).collect(),
        delta,
    };
    let blocks = hopcroft_minimize(&raw);
    let num_blocks = blocks.iter().copied().max().map_or(0, |m| m + 1);

    // Renumber minimized blocks in BFS order from the initial state.
    let mut order = vec![usize::MAX; num_blocks];
    let mut rep = vec![usize::MAX; num_blocks];
    for (q, &b) in blocks.iter().enumerate() {
        if rep[b] == usize::MAX {
            rep[b] = q;
        }
    }
    let mut next_id = 0;
    let mut queue = VecDeque::from([blocks[0]]);
    order[blocks[0]] = next_id;
    next_id += 1;
    while let Some(b) = queue.pop_front() {
        for s in 0..alphabet_len {
            let t = blocks[raw.step(rep[b], s)];
            if order[t] == usize::MAX {
                order[t] = next_id;
                next_id += 1;
                queue.push_back(t);
            }
        }
    }
    let mut transitions = vec![0; next_id * alphabet_len];
    let mut accepting = None;
    for b in 0..num_blocks {
        if order[b] == usize::MAX {
            continue;
        }
        let q = order[b];
        for s in 0..alphabet_len {
            transitions[q * alphabet_len + s] = order[blocks[raw.step(rep[b], s)]];
        }
        if raw.accepting[rep[b]] {
            // All accepting obligations are `true` after absorption, so at
            // most one accepting block survives minimization.
            debug_assert!(accepting.is_none());
            accepting = Some(q);
        }
    }
    let accepting = accepting.ok_or(LtlError::Unsatisfiable)?;
    Ok(Dfa {
        ap_set: formula.ap_set.clone(),
        num_states: next_id,
        initial: 0,
        accepting,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse_ltl, ActionVerb};

    fn atoms(n: u32) -> Vec<AtomicProposition> {
        (1..=n)
            .map(|i| AtomicProposition::new(i, ActionVerb::Move, format!("obj{i}"), "LA"))
            .collect()
    }

    fn compile(text: &str, n: u32) -> Dfa {
        to_dfa(&parse_ltl(text, &atoms(n)).unwrap()).unwrap()
    }

    #[test]
    fn eventually_one_atom_has_two_states_three_edges() {
        let d = compile("F p1", 1);
        assert_eq!((d.num_states, d.edge_count()), (2, 3));
    }

    #[test]
    fn two_eventualities_have_four_states_nine_edges() {
        let d = compile("F p1 & F p2", 2);
        assert_eq!((d.num_states, d.edge_count()), (4, 9));
    }

    #[test]
    fn true_is_a_single_accepting_state() {
        let d = compile("true", 0);
        assert_eq!(d.num_states, 1);
        assert_eq!(d.initial, d.accepting);
        assert!(d.accepts(&[]));
    }

    #[test]
    fn contradiction_is_unsatisfiable() {
        let f = parse_ltl("p1 & !p1", &atoms(1)).unwrap();
        assert_eq!(to_dfa(&f).unwrap_err(), LtlError::Unsatisfiable);
        let f = parse_ltl("false | X false", &atoms(0)).unwrap();
        assert_eq!(to_dfa(&f).unwrap_err(), LtlError::Unsatisfiable);
    }

    #[test]
    fn accepting_state_absorbs() {
        for text in ["F p1 & (!p1 U p2)", "X p1 | p2 U p3", "F (p1 & X p2)"] {
            let d = compile(text, 3);
            for s in d.symbols() {
                assert_eq!(d.step(d.accepting, s), d.accepting, "{text}");
            }
        }
    }

    #[test]
    fn strong_next_needs_a_following_letter() {
        let d = compile("X true", 0);
        assert!(!d.accepts(&[]));
        assert!(!d.accepts(&[Symbol::EMPTY]));
        assert!(d.accepts(&[Symbol::EMPTY, Symbol::EMPTY]));
    }

    #[test]
    fn edges_partition_the_transition_table() {
        let d = compile("F p1 & F p2 & (!p1 U p2)", 2);
        let total: usize = d.edges().iter().map(|e| e.symbols.len()).sum();
        assert_eq!(total, d.num_states * d.alphabet_len());
    }
}
