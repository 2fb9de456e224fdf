//! Bounded breadth-first exploration of the reachable configurations.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write;

use super::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub label: TransitionLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    /// Node 0 is the initial configuration.
    pub nodes: Vec<Configuration>,
    pub edges: Vec<Edge>,
    /// Set when the depth bound or node budget left configurations unexplored.
    pub truncated: bool,
}

/// Configurations are identified up to `ρ` rounded to the tolerance.
#[derive(PartialEq, Eq, Hash)]
struct Key {
    term: ProcessTerm,
    stack: Vec<Binding>,
    register: Vec<Name>,
    classical: Vec<(Name, u64)>,
    rho: Vec<(i64, i64)>,
}

impl Key {
    fn of(cfg: &Configuration) -> Key {
        let q = |x: f64| (x / TOLERANCE).round() as i64;
        Key {
            term: cfg.term.clone(),
            stack: cfg.ctx.stack.clone(),
            register: cfg.ctx.register.clone(),
            classical: cfg.ctx.classical.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            rho: cfg
                .ctx
                .state
                .matrix()
                .data()
                .iter()
                .map(|z| (q(z.re), q(z.im)))
                .collect(),
        }
    }
}

impl StateGraph {
    pub fn successors(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == node)
    }

    pub fn terminated(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_terminated())
            .collect()
    }

    /// Nodes with no outgoing edge that are not terminated. Only meaningful
    /// when the graph is not truncated.
    pub fn deadlocked(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].is_terminated() && self.successors(i).next().is_none())
            .collect()
    }

    /// Graphviz rendering.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lts {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = if n.is_terminated() { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  n{i} [shape={shape}, tooltip={:?}];", n.to_string());
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -> n{} [label={:?}];", e.from, e.to, e.label.to_string());
        }
        out.push_str("}\n");
        out
    }
}

impl Engine {
    /// Every configuration reachable from `initial` in at most `bound`
    /// steps, stopping early once `max_nodes` are known.
    pub fn reachable_graph(
        &self,
        initial: Configuration,
        bound: usize,
        max_nodes: usize,
    ) -> Result<StateGraph, EngineError> {
        if bound == 0 {
            return Err(EngineError::ZeroBound);
        }
        let mut index = HashMap::new();
        index.insert(Key::of(&initial), 0);
        let mut g = StateGraph {
            nodes: vec![initial],
            edges: vec![],
            truncated: false,
        };
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        while let Some((node, depth)) = queue.pop_front() {
            let ts = self.enabled_transitions(&g.nodes[node])?;
            if depth == bound {
                g.truncated |= !ts.is_empty();
                continue;
            }
            for t in ts {
                let key = Key::of(&t.next);
                let to = match index.get(&key) {
                    Some(&to) => to,
                    None => {
                        if g.nodes.len() == max_nodes {
                            g.truncated = true;
                            continue;
                        }
                        let to = g.nodes.len();
                        index.insert(key, to);
                        g.nodes.push(t.next);
                        queue.push_back((to, depth + 1));
                        to
                    }
                };
                g.edges.push(Edge {
                    from: node,
                    to,
                    label: t.label,
                });
            }
        }
        Ok(g)
    }
}
