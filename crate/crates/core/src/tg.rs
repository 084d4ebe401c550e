//! Node-labelled Markovian transition graphs.
//!
//! A transition graph carries one label per node and a row-stochastic
//! transition matrix; it is the encoding of a reachability graph obtained by
//! shifting labels from edges onto nodes, and also the encoding of a single
//! trace as a linear chain. Tau-closure eliminates interior silent nodes
//! while preserving every trace probability exactly.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::label::{Activity, Label};
use crate::net::{ReachabilityGraph, StochasticWorkflowNet};

/// Row-sum slack accepted when validating stochastic rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TgError {
    #[error("invalid transition graph: {0}")]
    Invalid(String),
    #[error("no accepting run: the final marking is unreachable")]
    NoAcceptingRun,
    #[error("tau-only cycle through [{0}]")]
    TauCycle(String),
    #[error("`{0}` is not a model trace of this graph")]
    NotModelTrace(String),
    #[error("empty traces cannot be encoded or aligned")]
    EmptyTrace,
    #[error("projection requires a tau-closed graph; run passes interior tau node `{0}`")]
    InteriorTau(String),
    #[error("row of node `{node}` sums to {sum}, expected 1")]
    RowSum { node: String, sum: f64 },
}

/// Read-only view shared by full transition graphs and projections: labelled
/// nodes, sparse probability rows, and the nodes where runs may begin or end.
pub trait MarkovGraph {
    fn node_count(&self) -> usize;
    fn node_label(&self, node: usize) -> &Label;
    fn successors(&self, node: usize) -> &[(usize, f64)];
    fn entry_nodes(&self) -> Vec<usize>;
    fn exit_nodes(&self) -> Vec<usize>;
    fn node_name(&self, node: usize) -> &str;

    /// Count of strictly positive transition-matrix entries.
    fn positive_entries(&self) -> usize {
        (0..self.node_count())
            .map(|n| self.successors(n).iter().filter(|(_, p)| *p > 0.0).count())
            .sum()
    }

    /// Distinct task labels occurring on nodes, sorted.
    fn task_alphabet(&self) -> Vec<Activity> {
        let set: BTreeSet<Activity> = (0..self.node_count())
            .filter_map(|n| self.node_label(n).as_activity().cloned())
            .collect();
        set.into_iter().collect()
    }
}

/// A transition graph: the Markov-chain encoding of a reachability graph or
/// of a single trace. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    names: Vec<String>,
    labels: Vec<Label>,
    rows: Vec<Vec<(usize, f64)>>,
    start: usize,
    end: usize,
}

impl MarkovGraph for TransitionGraph {
    fn node_count(&self) -> usize {
        self.labels.len()
    }
    fn node_label(&self, node: usize) -> &Label {
        &self.labels[node]
    }
    fn successors(&self, node: usize) -> &[(usize, f64)] {
        &self.rows[node]
    }
    fn entry_nodes(&self) -> Vec<usize> {
        vec![self.start]
    }
    fn exit_nodes(&self) -> Vec<usize> {
        vec![self.end]
    }
    fn node_name(&self, node: usize) -> &str {
        &self.names[node]
    }
}

impl TransitionGraph {
    /// Builds a graph from labelled nodes and probability edges. Edge
    /// probabilities must be positive; duplicate edges are rejected.
    pub fn new(
        nodes: Vec<(String, Label)>,
        edges: Vec<(usize, usize, f64)>,
        start: usize,
        end: usize,
    ) -> Result<Self, TgError> {
        let n = nodes.len();
        if n == 0 {
            return Err(TgError::Invalid("graph has no nodes".into()));
        }
        if start >= n || end >= n {
            return Err(TgError::Invalid("start/end out of range".into()));
        }
        let mut names = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut seen = BTreeSet::new();
        for (name, label) in nodes {
            if !seen.insert(name.clone()) {
                return Err(TgError::Invalid(format!("duplicate node `{name}`")));
            }
            names.push(name);
            labels.push(label);
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (src, dst, p) in edges {
            if src >= n || dst >= n {
                return Err(TgError::Invalid("edge endpoint out of range".into()));
            }
            if !(p > 0.0) || !p.is_finite() {
                return Err(TgError::Invalid(format!(
                    "edge {}->{} has non-positive probability {p}",
                    names[src], names[dst]
                )));
            }
            if rows[src].iter().any(|(d, _)| *d == dst) {
                return Err(TgError::Invalid(format!(
                    "duplicate edge {}->{}",
                    names[src], names[dst]
                )));
            }
            rows[src].push((dst, p));
        }
        for row in &mut rows {
            row.sort_by_key(|(d, _)| *d);
        }
        Ok(Self {
            names,
            labels,
            rows,
            start,
            end,
        })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All edges as (src, dst, probability), in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(src, row)| row.iter().map(move |&(dst, p)| (src, dst, p)))
    }

    /// Checks the invariants of a full transition graph: the start node has
    /// no predecessors, the end node no successors, and every non-empty row
    /// sums to 1 within `tol`.
    pub fn validate_full(&self, tol: f64) -> Result<(), TgError> {
        if !self.rows[self.end].is_empty() {
            return Err(TgError::Invalid(format!(
                "end node `{}` has successors",
                self.names[self.end]
            )));
        }
        for (src, row) in self.rows.iter().enumerate() {
            if row.iter().any(|(d, _)| *d == self.start) {
                return Err(TgError::Invalid(format!(
                    "start node `{}` has a predecessor `{}`",
                    self.names[self.start], self.names[src]
                )));
            }
            if !row.is_empty() {
                let sum: f64 = row.iter().map(|(_, p)| p).sum();
                if (sum - 1.0).abs() > tol {
                    return Err(TgError::RowSum {
                        node: self.names[src].clone(),
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    /// Probability of the node path `nodes` (product over its edges).
    /// Returns 0 when some edge is missing.
    pub fn path_probability(&self, nodes: &[usize]) -> f64 {
        nodes
            .windows(2)
            .map(|w| {
                self.rows[w[0]]
                    .iter()
                    .find(|(d, _)| *d == w[1])
                    .map_or(0.0, |(_, p)| *p)
            })
            .product()
    }

    /// Eliminates every interior tau node, redistributing its probability
    /// mass onto direct edges so that each model trace keeps its exact
    /// probability. Start and end tau nodes are retained. Fails when the
    /// interior tau nodes contain a cycle (unbounded silence).
    pub fn tau_closure(&self) -> Result<TransitionGraph, TgError> {
        let n = self.labels.len();
        let interior: Vec<usize> = (0..n)
            .filter(|&v| self.labels[v].is_tau() && v != self.start && v != self.end)
            .collect();
        if let Some(cycle) = self.tau_cycle(&interior) {
            let names: Vec<&str> = cycle.iter().map(|&v| self.names[v].as_str()).collect();
            return Err(TgError::TauCycle(names.join(" -> ")));
        }

        let mut dense = vec![vec![0.0f64; n]; n];
        for (src, dst, p) in self.edges() {
            dense[src][dst] = p;
        }
        // One elimination step per interior tau node; acyclicity guarantees
        // no self-loop mass, so no geometric-series correction is needed.
        let mut removed = vec![false; n];
        for &v in &interior {
            let out_row = dense[v].clone();
            for u in 0..n {
                if u == v || removed[u] {
                    continue;
                }
                let mass = dense[u][v];
                if mass == 0.0 {
                    continue;
                }
                dense[u][v] = 0.0;
                for (w, &p) in out_row.iter().enumerate() {
                    if p > 0.0 && w != v {
                        dense[u][w] += mass * p;
                    }
                }
            }
            for x in dense[v].iter_mut() {
                *x = 0.0;
            }
            removed[v] = true;
        }

        let keep: Vec<usize> = (0..n).filter(|&v| !removed[v]).collect();
        let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let nodes: Vec<(String, Label)> = keep
            .iter()
            .map(|&v| (self.names[v].clone(), self.labels[v].clone()))
            .collect();
        let mut edges = Vec::new();
        for &u in &keep {
            for &w in &keep {
                if dense[u][w] > 0.0 {
                    edges.push((remap[&u], remap[&w], dense[u][w]));
                }
            }
        }
        TransitionGraph::new(nodes, edges, remap[&self.start], remap[&self.end])
    }

    /// Finds a cycle within the given tau nodes, if any.
    fn tau_cycle(&self, interior: &[usize]) -> Option<Vec<usize>> {
        let tau_set: BTreeSet<usize> = interior.iter().copied().collect();
        let mut state: HashMap<usize, u8> = HashMap::new();
        let mut stack = Vec::new();
        fn visit(
            g: &TransitionGraph,
            v: usize,
            tau_set: &BTreeSet<usize>,
            state: &mut HashMap<usize, u8>,
            stack: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            state.insert(v, 1);
            stack.push(v);
            for &(w, _) in &g.rows[v] {
                if !tau_set.contains(&w) {
                    continue;
                }
                match state.get(&w) {
                    Some(1) => {
                        let pos = stack.iter().position(|&x| x == w).unwrap();
                        return Some(stack[pos..].to_vec());
                    }
                    None => {
                        if let Some(c) = visit(g, w, tau_set, state, stack) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            stack.pop();
            state.insert(v, 2);
            None
        }
        for &v in interior {
            if !state.contains_key(&v) {
                if let Some(c) = visit(self, v, &tau_set, &mut state, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// `[Λ^n]`: entry (alpha, beta) is the probability of reaching a
    /// beta-labelled node from a uniformly chosen alpha-labelled node in
    /// exactly `n` steps. Rows of labels absent from the graph are zero.
    pub fn lambda_power(&self, n: usize) -> LabelMatrix {
        assert!(n >= 1, "lambda_power requires n >= 1");
        let power = self.dense_power(n);
        let labels = self.distinct_labels();
        let index: HashMap<&Label, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let dim = labels.len();
        let mut values = vec![vec![0.0; dim]; dim];
        let mut counts = vec![0usize; dim];
        for v in 0..self.labels.len() {
            counts[index[&self.labels[v]]] += 1;
        }
        for (i, row) in power.iter().enumerate() {
            let a = index[&self.labels[i]];
            for (j, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    values[a][index[&self.labels[j]]] += p;
                }
            }
        }
        for (a, row) in values.iter_mut().enumerate() {
            if counts[a] > 0 {
                for x in row.iter_mut() {
                    *x /= counts[a] as f64;
                }
            }
        }
        LabelMatrix { labels, values }
    }

    /// Dense `R^n`.
    pub(crate) fn dense_power(&self, n: usize) -> Vec<Vec<f64>> {
        let size = self.labels.len();
        let mut base = vec![vec![0.0f64; size]; size];
        for (src, dst, p) in self.edges() {
            base[src][dst] = p;
        }
        let mut acc = base.clone();
        for _ in 1..n {
            acc = mat_mul(&acc, &base);
        }
        acc
    }

    pub(crate) fn distinct_labels(&self) -> Vec<Label> {
        let set: BTreeSet<Label> = self.labels.iter().cloned().collect();
        set.into_iter().collect()
    }
}

pub(crate) fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Dense matrix indexed by label on both axes.
#[derive(Debug, Clone)]
pub struct LabelMatrix {
    pub labels: Vec<Label>,
    pub values: Vec<Vec<f64>>,
}

impl LabelMatrix {
    pub fn get(&self, alpha: &Label, beta: &Label) -> f64 {
        let a = self.labels.iter().position(|l| l == alpha);
        let b = self.labels.iter().position(|l| l == beta);
        match (a, b) {
            (Some(a), Some(b)) => self.values[a][b],
            _ => 0.0,
        }
    }
}

/// Encodes a trace as a linear transition graph: one node per position, each
/// edge probability 1, no added tau endpoints.
pub fn linear_tg(trace: &[Activity]) -> Result<TransitionGraph, TgError> {
    if trace.is_empty() {
        return Err(TgError::EmptyTrace);
    }
    let nodes: Vec<(String, Label)> = trace
        .iter()
        .enumerate()
        .map(|(i, a)| (format!("p{i}"), Label::Task(a.clone())))
        .collect();
    let edges: Vec<(usize, usize, f64)> = (1..trace.len()).map(|i| (i - 1, i, 1.0)).collect();
    TransitionGraph::new(nodes, edges, 0, trace.len() - 1)
}

/// Shifts labels from reachability-graph edges onto nodes: every edge of
/// `rg` becomes a node labelled by its transition's label, a fresh tau start
/// node precedes the edges leaving the root, and a fresh tau end node follows
/// the edges entering the final marking. Every path of `rg` keeps its
/// probability as a node path of the result.
pub fn tg_from_reachability(
    net: &StochasticWorkflowNet,
    rg: &ReachabilityGraph,
) -> Result<TransitionGraph, TgError> {
    let final_node = rg.final_node().ok_or(TgError::NoAcceptingRun)?;
    // One TG node per rg edge.
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new(); // (rg node, edge pos) -> tg node
    let mut nodes: Vec<(String, Label)> = vec![("in".into(), Label::Tau)];
    let mut probs: Vec<f64> = vec![0.0];
    let mut source_of: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX)];
    for m in 0..rg.len() {
        for (k, e) in rg.edges_from(m).iter().enumerate() {
            let id = nodes.len();
            ids.insert((m, k), id);
            let t = &net.transitions()[e.transition];
            nodes.push((format!("n{}", id - 1), t.label.clone()));
            probs.push(rg.edge_probability(net, m, e));
            source_of.push((m, k));
        }
    }
    let end = nodes.len();
    nodes.push(("out".into(), Label::Tau));

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    // start -> first edges
    for (k, _) in rg.edges_from(0).iter().enumerate() {
        let id = ids[&(0, k)];
        edges.push((0, id, probs[id]));
    }
    for (id, &(m, k)) in source_of.iter().enumerate().skip(1) {
        let target = rg.edges_from(m)[k].target;
        if target == final_node {
            edges.push((id, end, 1.0));
        } else {
            for (k2, _) in rg.edges_from(target).iter().enumerate() {
                let id2 = ids[&(target, k2)];
                edges.push((id, id2, probs[id2]));
            }
        }
    }
    TransitionGraph::new(nodes, edges, 0, end)
}

/// A transition graph restricted to the runs of one model trace, with the
/// probability mass of its tau endpoints preserved in `omega`.
#[derive(Debug, Clone)]
pub struct WeightedTransitionGraph {
    names: Vec<String>,
    labels: Vec<Label>,
    rows: Vec<Vec<(usize, f64)>>,
    entries: Vec<usize>,
    exits: Vec<usize>,
    omega: f64,
    relevance_edges: usize,
    trace_len: usize,
}

impl MarkovGraph for WeightedTransitionGraph {
    fn node_count(&self) -> usize {
        self.labels.len()
    }
    fn node_label(&self, node: usize) -> &Label {
        &self.labels[node]
    }
    fn successors(&self, node: usize) -> &[(usize, f64)] {
        &self.rows[node]
    }
    fn entry_nodes(&self) -> Vec<usize> {
        self.entries.clone()
    }
    fn exit_nodes(&self) -> Vec<usize> {
        self.exits.clone()
    }
    fn node_name(&self, node: usize) -> &str {
        &self.names[node]
    }
}

impl WeightedTransitionGraph {
    /// Probability mass carried by the tau endpoints of the trace's runs.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Edge count that drives the `t_f` relevance factor of the embedding.
    ///
    /// For a trace whose runs are simple paths this is the number of distinct
    /// edges those runs traverse, tau endpoints included. When some run
    /// revisits a node the trace exercises a cycle and no bounded subgraph
    /// characterizes it, so the whole graph's positive-entry count is used.
    pub fn relevance_edges(&self) -> usize {
        self.relevance_edges
    }

    /// Length of the trace this graph was projected for.
    pub fn trace_len(&self) -> usize {
        self.trace_len
    }

    /// Wraps a log trace for embedding: the linear chain with weight 1.
    pub fn from_log_trace(trace: &[Activity]) -> Result<Self, TgError> {
        let linear = linear_tg(trace)?;
        Ok(Self {
            names: linear.names.clone(),
            labels: linear.labels.clone(),
            rows: linear.rows.clone(),
            entries: vec![linear.start],
            exits: vec![linear.end],
            omega: 1.0,
            relevance_edges: trace.len() - 1,
            trace_len: trace.len(),
        })
    }

    /// Wraps an explicitly built graph; used by tests and synthetic corpora.
    pub fn from_parts(
        graph: &TransitionGraph,
        omega: f64,
        relevance_edges: usize,
        trace_len: usize,
    ) -> Self {
        Self {
            names: graph.names.clone(),
            labels: graph.labels.clone(),
            rows: graph.rows.clone(),
            entries: vec![graph.start],
            exits: vec![graph.end],
            omega,
            relevance_edges,
            trace_len,
        }
    }
}

/// Restricts a tau-closed graph to the runs of `trace`. Tau endpoint nodes
/// are dropped; their outgoing/ingoing probability mass is folded into the
/// omega weight (noisy-or across runs). Rows of the restriction are
/// renormalized over the retained successors.
pub fn project(
    graph: &TransitionGraph,
    trace: &[Activity],
) -> Result<WeightedTransitionGraph, TgError> {
    if trace.is_empty() {
        return Err(TgError::EmptyTrace);
    }
    let runs = crate::unfold::runs_for_projection(graph, trace).map_err(|e| match e {
        crate::unfold::UnfoldError::TauCycle(c) => TgError::TauCycle(c),
        other => TgError::Invalid(other.to_string()),
    })?;
    if runs.is_empty() {
        return Err(TgError::NotModelTrace(crate::label::format_trace(trace)));
    }

    let mut keep: Vec<usize> = Vec::new();
    let mut traversed: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut kept_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut entries: Vec<usize> = Vec::new();
    let mut exits: Vec<usize> = Vec::new();
    let mut revisits = false;
    let mut miss_product = 1.0f64;
    for run in &runs {
        let nodes = &run.nodes;
        let mut seen = BTreeSet::new();
        for &v in nodes {
            if !seen.insert(v) {
                revisits = true;
            }
        }
        for w in nodes.windows(2) {
            traversed.insert((w[0], w[1]));
        }
        let visible: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|&v| !graph.labels[v].is_tau())
            .collect();
        for (i, &v) in nodes.iter().enumerate() {
            if graph.labels[v].is_tau() {
                if i != 0 && i != nodes.len() - 1 {
                    return Err(TgError::InteriorTau(graph.names[v].clone()));
                }
            } else if !keep.contains(&v) {
                keep.push(v);
            }
        }
        for w in nodes.windows(2) {
            if !graph.labels[w[0]].is_tau() && !graph.labels[w[1]].is_tau() {
                kept_edges.insert((w[0], w[1]));
            }
        }
        let first = *visible.first().unwrap();
        let last = *visible.last().unwrap();
        if !entries.contains(&first) {
            entries.push(first);
        }
        if !exits.contains(&last) {
            exits.push(last);
        }
        // ifte factors: an edge out of a tau start / into a tau end keeps its
        // probability, a visible endpoint contributes 1.
        let mut f = 1.0;
        if graph.labels[nodes[0]].is_tau() {
            f *= graph.path_probability(&nodes[0..2]);
        }
        if graph.labels[*nodes.last().unwrap()].is_tau() {
            f *= graph.path_probability(&nodes[nodes.len() - 2..]);
        }
        miss_product *= 1.0 - f;
    }
    let omega = 1.0 - miss_product;

    let relevance_edges = if revisits {
        graph.positive_entries()
    } else {
        traversed.len()
    };

    let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); keep.len()];
    for &(u, w) in &kept_edges {
        let p = graph.path_probability(&[u, w]);
        rows[remap[&u]].push((remap[&w], p));
    }
    for row in &mut rows {
        row.sort_by_key(|(d, _)| *d);
        let sum: f64 = row.iter().map(|(_, p)| p).sum();
        if sum > 0.0 {
            for (_, p) in row.iter_mut() {
                *p /= sum;
            }
        }
    }

    Ok(WeightedTransitionGraph {
        names: keep.iter().map(|&v| graph.names[v].clone()).collect(),
        labels: keep.iter().map(|&v| graph.labels[v].clone()).collect(),
        rows,
        entries: entries.iter().map(|v| remap[v]).collect(),
        exits: exits.iter().map(|v| remap[v]).collect(),
        omega,
        relevance_edges,
        trace_len: trace.len(),
    })
}

/// The running example graph: branch to an `a` self-loop or to a `c` that
/// either joins the loop or exits through a single `b`.
pub fn example_fixture_tg() -> TransitionGraph {
    let nodes = vec![
        ("s".to_string(), Label::Tau),
        ("A".to_string(), Label::task("a")),
        ("C".to_string(), Label::task("c")),
        ("B".to_string(), Label::task("b")),
        ("e".to_string(), Label::Tau),
    ];
    let edges = vec![
        (0, 1, 0.8),
        (0, 2, 0.2),
        (1, 1, 0.5),
        (1, 4, 0.5),
        (2, 1, 0.7),
        (2, 3, 0.3),
        (3, 4, 1.0),
    ];
    TransitionGraph::new(nodes, edges, 0, 4).expect("fixture is well-formed")
}
