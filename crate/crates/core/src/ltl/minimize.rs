//! Hopcroft partition refinement for complete DFAs.

use std::collections::{BTreeSet, VecDeque};

/// A complete DFA with an arbitrary set of accepting states, indexed by
/// `state * alphabet_len + symbol`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDfa {
    pub alphabet_len: usize,
    pub initial: usize,
    pub accepting: Vec<bool>,
    pub delta: Vec<usize>,
}

impl RawDfa {
    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn step(&self, q: usize, sym: usize) -> usize {
        self.delta[q * self.alphabet_len + sym]
    }
}

/// Returns the block index of every state in the coarsest partition that
/// respects acceptance and transitions. Blocks are numbered in order of
/// their smallest member, so the result is deterministic.
pub fn hopcroft_minimize(dfa: &RawDfa) -> Vec<usize> {
    let n = dfa.num_states();
    let k = dfa.alphabet_len;
    if n == 0 {
        return Vec::new();
    }

    // inverse[sym][q] = predecessors of q under sym
    let mut inverse = vec![vec![Vec::new(); n]; k];
    for q in 0..n {
        for (sym, inv) in inverse.iter_mut().enumerate() {
            inv[dfa.step(q, sym)].push(q);
        }
    }

    let mut blocks: Vec<BTreeSet<usize>> = Vec::new();
    let acc: BTreeSet<usize> = (0..n).filter(|&q| dfa.accepting[q]).collect();
    let rej: BTreeSet<usize> = (0..n).filter(|&q| !dfa.accepting[q]).collect();
    let mut block_of = vec![0usize; n];
    for part in [acc, rej] {
        if !part.is_empty() {
            for &q in &part {
                block_of[q] = blocks.len();
            }
            blocks.push(part);
        }
    }

    let mut work: VecDeque<(usize, usize)> = VecDeque::new();
    let mut in_work: BTreeSet<(usize, usize)> = BTreeSet::new();
    let smaller = if blocks.len() == 2 && blocks[1].len() < blocks[0].len() {
        1
    } else {
        0
    };
    for sym in 0..k {
        work.push_back((smaller, sym));
        in_work.insert((smaller, sym));
    }

    while let Some((splitter, sym)) = work.pop_front() {
        in_work.remove(&(splitter, sym));
        let mut pre: BTreeSet<usize> = BTreeSet::new();
        for &q in &blocks[splitter] {
            pre.extend(inverse[sym][q].iter().copied());
        }
        let touched: BTreeSet<usize> = pre.iter().map(|&q| block_of[q]).collect();
        for b in touched {
            let inside: BTreeSet<usize> = blocks[b].intersection(&pre).copied().collect();
            if inside.len() == blocks[b].len() {
                continue;
            }
            let outside: BTreeSet<usize> = blocks[b].difference(&pre).copied().collect();
            let new_id = blocks.len();
            let (keep, split) = if inside.len() <= outside.len() {
                (outside, inside)
            } else {
                (inside, outside)
            };
            for &q in &split {
                block_of[q] = new_id;
            }
            blocks[b] = keep;
            blocks.push(split);
            for a in 0..k {
                if in_work.contains(&(b, a)) {
                    work.push_back((new_id, a));
                    in_work.insert((new_id, a));
                } else {
                    let pick = if blocks[b].len() <= blocks[new_id].len() {
                        b
                    } else {
                        new_id
                    };
                    work.push_back((pick, a));
                    in_work.insert((pick, a));
                }
            }
        }
    }

    // Renumber blocks by smallest member.
    let mut order: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (*b.iter().next().expect("blocks are non-empty"), i))
        .collect();
    order.sort();
    let mut renum = vec![0usize; blocks.len()];
    for (new, &(_, old)) in order.iter().enumerate() {
        renum[old] = new;
    }
    block_of.iter().map(|&b| renum[b]).collect()
}
