use std::fmt::Write;

use super::dfa::Dfa;

/// Renders the automaton as GraphViz DOT.
///
/// Dead states (non-accepting states that can never reach acceptance) are
/// omitted, as is customary when drawing co-safe automata. Edge labels list
/// the enabling symbols as proposition-id sets, `{}` being the empty symbol.
/// Output ordering is fully determined by state ids and symbol values.
pub fn export_dot(dfa: &Dfa) -> String {
    let live = dfa.live_states();
    let mut out = String::new();
    out.push_str("digraph dfa {\n  rankdir=LR;\n  __start [shape=point];\n");
    for (q, _) in live.iter().enumerate().filter(|(_, l)| **l) {
        let shape = if q == dfa.accepting {
            "doublecircle"
        } else {
            "circle"
        };
        let _ = writeln!(out, "  q{q} [shape={shape}];");
    }
    let _ = writeln!(out, "  __start -> q{};", dfa.initial);
    for edge in dfa.edges() {
        if !live[edge.from] || !live[edge.to] {
            continue;
        }
        let label: Vec<String> = edge.symbols.iter().map(|s| s.render(&dfa.ap_set)).collect();
        let _ = writeln!(
            out,
            "  q{} -> q{} [label=\"{}\"];",
            edge.from,
            edge.to,
            label.join(", ")
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse_ltl, to_dfa};

    #[test]
    fn single_state_has_one_node_and_one_loop() {
        let dot = export_dot(&to_dfa(&parse_ltl("true", &[]).unwrap()).unwrap());
        assert_eq!(dot.matches("shape=doublecircle").count(), 1);
        assert_eq!(dot.matches("q0 -> q0").count(), 1);
        assert_eq!(dot.matches(" -> ").count(), 2);
    }
}
