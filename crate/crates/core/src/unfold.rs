//! Enumeration of model traces and exact trace probabilities.
//!
//! A model trace is the tau-stripped label sequence of a run from the start
//! node to the end node; its probability is the sum of the probabilities of
//! all runs yielding it. Enumeration explores label-bounded paths and then
//! recomputes every candidate's probability with the run-summing dynamic
//! program, so the reported value is exactly `trace_probability`.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::label::{format_trace, Activity};
use crate::tg::MarkovGraph;

/// Guard against runaway path enumeration on adversarial inputs.
const EXPANSION_BUDGET: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum UnfoldError {
    #[error("tau-only cycle through [{0}]: bounded silence is violated")]
    TauCycle(String),
    #[error("infinite unfolding; require rho > 0 or a finite n_max")]
    InfiniteUnfolding,
    #[error("silence bound {bound} exceeded by tau chain [{chain}]")]
    SilenceExceeded { bound: u32, chain: String },
    #[error("path enumeration exceeded {0} expansions; tighten rho or n_max")]
    BudgetExceeded(usize),
}

/// A label sequence over the task alphabet together with its exact
/// probability under the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTrace {
    pub labels: Vec<Activity>,
    pub probability: f64,
}

impl ModelTrace {
    pub fn rendered(&self) -> String {
        format_trace(&self.labels)
    }
}

/// A run: the node path realizing a trace, with its path-product probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub nodes: Vec<usize>,
    pub probability: f64,
}

/// Enumerates the model traces with probability at least `rho` and at most
/// `n_max` visible labels. Every returned probability is recomputed exactly
/// by [`trace_probability`]. The result is sorted by descending probability,
/// ties broken lexicographically by label sequence.
pub fn unfold<G: MarkovGraph>(
    g: &G,
    rho: f64,
    n_max: Option<usize>,
) -> Result<Vec<ModelTrace>, UnfoldError> {
    check_tau_acyclic(g)?;
    if n_max.is_none() && (rho <= 0.0 || has_unit_cycle(g)) && has_cycle(g) {
        return Err(UnfoldError::InfiniteUnfolding);
    }

    let exits: BTreeSet<usize> = g.exit_nodes().into_iter().collect();
    let mut candidates: BTreeSet<Vec<Activity>> = BTreeSet::new();
    // Runs start uniformly over the entry nodes; full graphs have a single
    // start, so the weight only matters for multi-entry projections.
    let entry_weight = 1.0 / g.entry_nodes().len() as f64;
    // DFS over (node, labels-so-far, path probability).
    let mut stack: Vec<(usize, Vec<Activity>, f64)> = Vec::new();
    for entry in g.entry_nodes() {
        match g.node_label(entry).as_activity() {
            None => stack.push((entry, Vec::new(), entry_weight)),
            Some(a) => {
                if n_max != Some(0) {
                    stack.push((entry, vec![a.clone()], entry_weight));
                }
            }
        }
    }
    let mut expansions = 0usize;
    while let Some((node, labels, prob)) = stack.pop() {
        expansions += 1;
        if expansions > EXPANSION_BUDGET {
            return Err(UnfoldError::BudgetExceeded(EXPANSION_BUDGET));
        }
        if exits.contains(&node) {
            candidates.insert(labels.clone());
        }
        for &(succ, p) in g.successors(node) {
            let next_prob = prob * p;
            if next_prob < rho || next_prob <= 0.0 {
                continue;
            }
            match g.node_label(succ).as_activity() {
                None => stack.push((succ, labels.clone(), next_prob)),
                Some(a) => {
                    if n_max.map_or(true, |m| labels.len() < m) {
                        let mut next = labels.clone();
                        next.push(a.clone());
                        stack.push((succ, next, next_prob));
                    }
                }
            }
        }
    }

    let mut out = Vec::with_capacity(candidates.len());
    for labels in candidates {
        let probability = trace_probability(g, &labels)?;
        if probability >= rho && probability > 0.0 {
            out.push(ModelTrace {
                labels,
                probability,
            });
        }
    }
    out.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.labels.cmp(&b.labels))
    });
    Ok(out)
}

/// Exact probability of `trace`: the sum over all runs whose tau-stripped
/// label sequence equals it. Zero when the trace is not a model trace.
pub fn trace_probability<G: MarkovGraph>(g: &G, trace: &[Activity]) -> Result<f64, UnfoldError> {
    check_tau_acyclic(g)?;
    let exits: BTreeSet<usize> = g.exit_nodes().into_iter().collect();
    // mass(node, consumed) = probability of completing the remaining suffix
    // from `node`, the node's own label already consumed.
    let mut memo: HashMap<(usize, usize), f64> = HashMap::new();
    fn mass<G: MarkovGraph>(
        g: &G,
        exits: &BTreeSet<usize>,
        trace: &[Activity],
        node: usize,
        consumed: usize,
        memo: &mut HashMap<(usize, usize), f64>,
    ) -> f64 {
        if let Some(&v) = memo.get(&(node, consumed)) {
            return v;
        }
        let mut total = 0.0;
        if consumed == trace.len() && exits.contains(&node) {
            total += 1.0;
        }
        for &(succ, p) in g.successors(node) {
            match g.node_label(succ).as_activity() {
                None => total += p * mass(g, exits, trace, succ, consumed, memo),
                Some(a) => {
                    if consumed < trace.len() && *a == trace[consumed] {
                        total += p * mass(g, exits, trace, succ, consumed + 1, memo);
                    }
                }
            }
        }
        memo.insert((node, consumed), total);
        total
    }
    let entry_weight = 1.0 / g.entry_nodes().len() as f64;
    let mut total = 0.0;
    for entry in g.entry_nodes() {
        match g.node_label(entry).as_activity() {
            None => total += entry_weight * mass(g, &exits, trace, entry, 0, &mut memo),
            Some(a) => {
                if !trace.is_empty() && *a == trace[0] {
                    total += entry_weight * mass(g, &exits, trace, entry, 1, &mut memo);
                }
            }
        }
    }
    Ok(total)
}

/// Lists every run realizing `trace`, erroring when a tau chain longer than
/// `bound` is met during the search.
pub fn runs_of<G: MarkovGraph>(
    g: &G,
    trace: &[Activity],
    bound: u32,
) -> Result<Vec<Run>, UnfoldError> {
    enumerate_runs(g, trace, Some(bound))
}

/// Run enumeration for projection: tau chains are only limited by the
/// acyclicity of the tau subgraph.
pub(crate) fn runs_for_projection<G: MarkovGraph>(
    g: &G,
    trace: &[Activity],
) -> Result<Vec<Run>, UnfoldError> {
    enumerate_runs(g, trace, None)
}

fn enumerate_runs<G: MarkovGraph>(
    g: &G,
    trace: &[Activity],
    bound: Option<u32>,
) -> Result<Vec<Run>, UnfoldError> {
    check_tau_acyclic(g)?;
    let exits: BTreeSet<usize> = g.exit_nodes().into_iter().collect();
    let mut runs = Vec::new();
    // (path, consumed, path probability, consecutive tau steps)
    let mut stack: Vec<(Vec<usize>, usize, f64, u32)> = Vec::new();
    for entry in g.entry_nodes() {
        match g.node_label(entry).as_activity() {
            None => stack.push((vec![entry], 0, 1.0, 1)),
            Some(a) => {
                if !trace.is_empty() && *a == trace[0] {
                    stack.push((vec![entry], 1, 1.0, 0));
                }
            }
        }
    }
    let mut expansions = 0usize;
    while let Some((path, consumed, prob, tau_len)) = stack.pop() {
        expansions += 1;
        if expansions > EXPANSION_BUDGET {
            return Err(UnfoldError::BudgetExceeded(EXPANSION_BUDGET));
        }
        let node = *path.last().unwrap();
        if consumed == trace.len() && exits.contains(&node) {
            runs.push(Run {
                nodes: path.clone(),
                probability: prob,
            });
        }
        for &(succ, p) in g.successors(node) {
            match g.node_label(succ).as_activity() {
                None => {
                    let chain = tau_len + 1;
                    if let Some(b) = bound {
                        // Endpoint tau nodes are exempt: silence bounds speak
                        // about tau steps between visible transitions.
                        let interior = consumed > 0 && consumed < trace.len();
                        if interior && chain > b {
                            let tail = &path[path.len() - tau_len as usize..];
                            let names: Vec<&str> = tail
                                .iter()
                                .map(|&v| g.node_name(v))
                                .chain(std::iter::once(g.node_name(succ)))
                                .collect();
                            return Err(UnfoldError::SilenceExceeded {
                                bound: b,
                                chain: names.join(" -> "),
                            });
                        }
                    }
                    let mut next = path.clone();
                    next.push(succ);
                    stack.push((next, consumed, prob * p, chain));
                }
                Some(a) => {
                    if consumed < trace.len() && *a == trace[consumed] {
                        let mut next = path.clone();
                        next.push(succ);
                        stack.push((next, consumed + 1, prob * p, 0));
                    }
                }
            }
        }
    }
    runs.sort_by(|a, b| a.nodes.cmp(&b.nodes));
    Ok(runs)
}

/// Errors when the tau-labelled nodes contain a cycle.
fn check_tau_acyclic<G: MarkovGraph>(g: &G) -> Result<(), UnfoldError> {
    let n = g.node_count();
    let mut state = vec![0u8; n]; // 0 unvisited, 1 on stack, 2 done
    fn visit<G: MarkovGraph>(
        g: &G,
        v: usize,
        state: &mut [u8],
        trail: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[v] = 1;
        trail.push(v);
        for &(w, _) in g.successors(v) {
            if !g.node_label(w).is_tau() {
                continue;
            }
            match state[w] {
                1 => {
                    let pos = trail.iter().position(|&x| x == w).unwrap();
                    return Some(trail[pos..].to_vec());
                }
                0 => {
                    if let Some(c) = visit(g, w, state, trail) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        trail.pop();
        state[v] = 2;
        None
    }
    let mut trail = Vec::new();
    for v in 0..n {
        if g.node_label(v).is_tau() && state[v] == 0 {
            if let Some(cycle) = visit(g, v, &mut state, &mut trail) {
                let names: Vec<&str> = cycle.iter().map(|&v| g.node_name(v)).collect();
                return Err(UnfoldError::TauCycle(names.join(" -> ")));
            }
        }
    }
    Ok(())
}

fn has_cycle<G: MarkovGraph>(g: &G) -> bool {
    cycle_exists(g, |_| true)
}

/// A cycle whose every edge has probability 1 never decays below any rho.
fn has_unit_cycle<G: MarkovGraph>(g: &G) -> bool {
    cycle_exists(g, |p| p >= 1.0)
}

fn cycle_exists<G: MarkovGraph>(g: &G, admit: impl Fn(f64) -> bool) -> bool {
    let n = g.node_count();
    let mut state = vec![0u8; n];
    fn visit<G: MarkovGraph>(
        g: &G,
        v: usize,
        state: &mut [u8],
        admit: &impl Fn(f64) -> bool,
    ) -> bool {
        state[v] = 1;
        for &(w, p) in g.successors(v) {
            if !admit(p) {
                continue;
            }
            match state[w] {
                1 => return true,
                0 => {
                    if visit(g, w, state, admit) {
                        return true;
                    }
                }
                _ => {}
            }
        }
        state[v] = 2;
        false
    }
    (0..n).any(|v| state[v] == 0 && visit(g, v, &mut state, &admit))
}
