//! Stochastic workflow nets: places, weighted labelled transitions, marking
//! semantics, and the probability-annotated reachability graph.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::label::Label;

/// Default cap on explored markings before reachability construction bails
/// out. Guards against unbounded nets.
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("unknown place `{0}` in marking")]
    UnknownPlace(String),
    #[error("transition `{0}` is not enabled in the given marking")]
    NotEnabled(String),
    #[error("reachability exploration exceeded {budget} markings: net is unbounded or too large")]
    BudgetExceeded { budget: usize },
}

/// A transition with its label and firing weight.
#[derive(Debug, Clone)]
pub struct Transition {
    pub name: String,
    pub label: Label,
    pub weight: f64,
}

/// A stochastic workflow net: a Petri net with one source place, one sink
/// place, and a positive firing weight per transition. Weights induce a
/// probability distribution over the transitions enabled in a marking.
///
/// Immutable after [`StochasticWorkflowNet::new`] validates it.
#[derive(Debug, Clone)]
pub struct StochasticWorkflowNet {
    places: Vec<String>,
    transitions: Vec<Transition>,
    /// Input places per transition (indices into `places`).
    presets: Vec<Vec<usize>>,
    /// Output places per transition.
    postsets: Vec<Vec<usize>>,
    initial_place: usize,
    final_place: usize,
}

/// Token count per place, indexed like `net.places()`.
pub type Marking = Vec<u32>;

/// Arc endpoints as (place name, transition name) or vice versa.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arc {
    PlaceToTransition(String, String),
    TransitionToPlace(String, String),
}

impl StochasticWorkflowNet {
    /// Builds and validates a net from its parts. The initial and final
    /// places are inferred: exactly one place must have no ingoing arcs and
    /// exactly one must have no outgoing arcs.
    pub fn new(
        places: Vec<String>,
        transitions: Vec<Transition>,
        arcs: Vec<Arc>,
    ) -> Result<Self, NetError> {
        let place_idx: HashMap<&str, usize> = places
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        if place_idx.len() != places.len() {
            return Err(NetError::Structure("duplicate place id".into()));
        }
        let trans_idx: HashMap<&str, usize> = transitions
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.as_str(), i))
            .collect();
        if trans_idx.len() != transitions.len() {
            return Err(NetError::Structure("duplicate transition id".into()));
        }
        for t in &transitions {
            if !(t.weight > 0.0) {
                return Err(NetError::Structure(format!(
                    "transition `{}` has non-positive weight {}",
                    t.name, t.weight
                )));
            }
            if let Label::Task(a) = &t.label {
                if a.is_empty() {
                    return Err(NetError::Structure(format!(
                        "transition `{}` has an empty task name",
                        t.name
                    )));
                }
            }
        }

        let mut presets = vec![Vec::new(); transitions.len()];
        let mut postsets = vec![Vec::new(); transitions.len()];
        let mut place_in = vec![0usize; places.len()];
        let mut place_out = vec![0usize; places.len()];
        for arc in &arcs {
            match arc {
                Arc::PlaceToTransition(p, t) => {
                    let pi = *place_idx
                        .get(p.as_str())
                        .ok_or_else(|| NetError::Structure(format!("arc from unknown place `{p}`")))?;
                    let ti = *trans_idx.get(t.as_str()).ok_or_else(|| {
                        NetError::Structure(format!("arc to unknown transition `{t}`"))
                    })?;
                    presets[ti].push(pi);
                    place_out[pi] += 1;
                }
                Arc::TransitionToPlace(t, p) => {
                    let ti = *trans_idx.get(t.as_str()).ok_or_else(|| {
                        NetError::Structure(format!("arc from unknown transition `{t}`"))
                    })?;
                    let pi = *place_idx
                        .get(p.as_str())
                        .ok_or_else(|| NetError::Structure(format!("arc to unknown place `{p}`")))?;
                    postsets[ti].push(pi);
                    place_in[pi] += 1;
                }
            }
        }
        for (ti, t) in transitions.iter().enumerate() {
            if presets[ti].is_empty() || postsets[ti].is_empty() {
                return Err(NetError::Structure(format!(
                    "transition `{}` must have at least one input and one output place",
                    t.name
                )));
            }
        }

        let sources: Vec<usize> = (0..places.len()).filter(|&p| place_in[p] == 0).collect();
        let sinks: Vec<usize> = (0..places.len()).filter(|&p| place_out[p] == 0).collect();
        let [initial_place] = sources[..] else {
            return Err(NetError::Structure(format!(
                "expected exactly one source place, found {}",
                sources.len()
            )));
        };
        let [final_place] = sinks[..] else {
            return Err(NetError::Structure(format!(
                "expected exactly one sink place, found {}",
                sinks.len()
            )));
        };
        if initial_place == final_place {
            return Err(NetError::Structure(
                "source and sink place coincide".into(),
            ));
        }

        Ok(Self {
            places,
            transitions,
            presets,
            postsets,
            initial_place,
            final_place,
        })
    }

    pub fn places(&self) -> &[String] {
        &self.places
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn initial_place(&self) -> usize {
        self.initial_place
    }

    pub fn final_place(&self) -> usize {
        self.final_place
    }

    /// The marking with a single token on the initial place.
    pub fn initial_marking(&self) -> Marking {
        let mut m = vec![0; self.places.len()];
        m[self.initial_place] = 1;
        m
    }

    /// The marking with a single token on the final place.
    pub fn final_marking(&self) -> Marking {
        let mut m = vec![0; self.places.len()];
        m[self.final_place] = 1;
        m
    }

    /// Transitions enabled in `m`: those whose every input place holds at
    /// least as many tokens as it has arcs into the transition.
    pub fn enabled(&self, m: &Marking) -> Result<Vec<usize>, NetError> {
        if m.len() != self.places.len() {
            return Err(NetError::UnknownPlace(format!(
                "marking has {} entries, net has {} places",
                m.len(),
                self.places.len()
            )));
        }
        Ok((0..self.transitions.len())
            .filter(|&t| {
                let mut need: HashMap<usize, u32> = HashMap::new();
                for &p in &self.presets[t] {
                    *need.entry(p).or_insert(0) += 1;
                }
                need.iter().all(|(&p, &count)| m[p] >= count)
            })
            .collect())
    }

    /// Fires `t` in `m`: removes one token per input place, adds one per
    /// output place. The result may violate safety; that is checked globally
    /// on the reachability graph.
    pub fn fire(&self, m: &Marking, t: usize) -> Result<Marking, NetError> {
        if !self.enabled(m)?.contains(&t) {
            return Err(NetError::NotEnabled(self.transitions[t].name.clone()));
        }
        let mut out = m.clone();
        for &p in &self.presets[t] {
            out[p] -= 1;
        }
        for &p in &self.postsets[t] {
            out[p] += 1;
        }
        Ok(out)
    }

    /// `W(t) / sum of W over transitions enabled in m`.
    pub fn transition_probability(&self, m: &Marking, t: usize) -> Result<f64, NetError> {
        let enabled = self.enabled(m)?;
        if !enabled.contains(&t) {
            return Err(NetError::NotEnabled(self.transitions[t].name.clone()));
        }
        let total: f64 = enabled.iter().map(|&u| self.transitions[u].weight).sum();
        Ok(self.transitions[t].weight / total)
    }

    /// Returns a copy with every firing weight set to 1.0, making the
    /// transitions enabled in any marking equiprobable.
    pub fn with_constant_weights(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.weight = 1.0;
        }
        out
    }

    /// Returns a copy with the weights produced by `estimator`.
    pub fn with_estimated_weights(&self, estimator: &dyn WeightEstimator) -> Result<Self, NetError> {
        let weights = estimator.weights(self)?;
        if weights.len() != self.transitions.len() {
            return Err(NetError::Structure(format!(
                "estimator produced {} weights for {} transitions",
                weights.len(),
                self.transitions.len()
            )));
        }
        let mut out = self.clone();
        for (t, w) in out.transitions.iter_mut().zip(weights) {
            if !(w > 0.0) || !w.is_finite() {
                return Err(NetError::Structure(format!(
                    "estimator produced non-positive weight {w} for `{}`",
                    t.name
                )));
            }
            t.weight = w;
        }
        Ok(out)
    }

    /// Explores all markings reachable from the initial marking. Fails once
    /// more than `budget` markings have been discovered.
    pub fn reachability_graph(&self, budget: usize) -> Result<ReachabilityGraph, NetError> {
        let root = self.initial_marking();
        let mut nodes = vec![root.clone()];
        let mut index: HashMap<Marking, usize> = HashMap::new();
        index.insert(root, 0);
        let mut edges: Vec<Vec<ReachEdge>> = vec![Vec::new()];
        let mut frontier = 0usize;
        while frontier < nodes.len() {
            let m = nodes[frontier].clone();
            for t in self.enabled(&m)? {
                let next = self.fire(&m, t)?;
                let target = match index.get(&next) {
                    Some(&i) => i,
                    None => {
                        if nodes.len() >= budget {
                            return Err(NetError::BudgetExceeded { budget });
                        }
                        let i = nodes.len();
                        nodes.push(next.clone());
                        edges.push(Vec::new());
                        index.insert(next, i);
                        i
                    }
                };
                edges[frontier].push(ReachEdge {
                    transition: t,
                    target,
                });
            }
            frontier += 1;
        }
        let final_node = index.get(&self.final_marking()).copied();
        Ok(ReachabilityGraph {
            nodes,
            edges,
            final_node,
        })
    }
}

/// Produces one firing weight per transition of a net. Implementations may
/// derive weights from event logs or structural heuristics; the engine only
/// requires them to be positive.
pub trait WeightEstimator {
    fn weights(&self, net: &StochasticWorkflowNet) -> Result<Vec<f64>, NetError>;
}

/// Keeps the weights the model carries.
pub struct AsGivenEstimator;

impl WeightEstimator for AsGivenEstimator {
    fn weights(&self, net: &StochasticWorkflowNet) -> Result<Vec<f64>, NetError> {
        Ok(net.transitions().iter().map(|t| t.weight).collect())
    }
}

/// Assigns weight 1 to every transition: enabled transitions become
/// equiprobable in every marking.
pub struct ConstantEstimator;

impl WeightEstimator for ConstantEstimator {
    fn weights(&self, net: &StochasticWorkflowNet) -> Result<Vec<f64>, NetError> {
        Ok(vec![1.0; net.transitions().len()])
    }
}

/// Edge of the reachability graph: the fired transition and target marking.
/// Probabilities are not stored; they are recomputed from the net's weights
/// so estimator swaps do not rebuild the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachEdge {
    pub transition: usize,
    pub target: usize,
}

/// Reachability graph of a net from its initial marking. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct ReachabilityGraph {
    nodes: Vec<Marking>,
    edges: Vec<Vec<ReachEdge>>,
    final_node: Option<usize>,
}

impl ReachabilityGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn markings(&self) -> &[Marking] {
        &self.nodes
    }

    pub fn edges_from(&self, node: usize) -> &[ReachEdge] {
        &self.edges[node]
    }

    /// Index of the final marking `M_f`, when reachable.
    pub fn final_node(&self) -> Option<usize> {
        self.final_node
    }

    /// Probability of `edge` out of `node` under the net's current weights.
    pub fn edge_probability(&self, net: &StochasticWorkflowNet, node: usize, edge: &ReachEdge) -> f64 {
        let total: f64 = self.edges[node]
            .iter()
            .map(|e| net.transitions()[e.transition].weight)
            .sum();
        net.transitions()[edge.transition].weight / total
    }

    /// True iff every reachable marking assigns at most one token per place.
    pub fn is_safe(&self) -> bool {
        self.nodes.iter().all(|m| m.iter().all(|&c| c <= 1))
    }

    /// True iff no path contains more than `bound` consecutive tau-labelled
    /// edges. A cycle made only of tau edges fails for every bound.
    pub fn has_bounded_silence(&self, net: &StochasticWorkflowNet, bound: u32) -> bool {
        match self.longest_tau_chain(net) {
            Some(len) => len <= bound as usize,
            None => false, // tau-only cycle
        }
    }

    /// Length (in edges) of the longest chain of consecutive tau edges, or
    /// `None` if the tau-edge subgraph is cyclic.
    pub fn longest_tau_chain(&self, net: &StochasticWorkflowNet) -> Option<usize> {
        // Longest path in the subgraph of tau-labelled edges; DFS with an
        // on-stack marker detects tau cycles.
        const UNVISITED: u8 = 0;
        const ON_STACK: u8 = 1;
        const DONE: u8 = 2;
        fn visit(
            rg: &ReachabilityGraph,
            net: &StochasticWorkflowNet,
            node: usize,
            state: &mut [u8],
            longest: &mut [usize],
        ) -> bool {
            state[node] = ON_STACK;
            let mut best = 0usize;
            for e in &rg.edges[node] {
                if !net.transitions()[e.transition].label.is_tau() {
                    continue;
                }
                match state[e.target] {
                    ON_STACK => return false,
                    UNVISITED => {
                        if !visit(rg, net, e.target, state, longest) {
                            return false;
                        }
                    }
                    _ => {}
                }
                best = best.max(1 + longest[e.target]);
            }
            longest[node] = best;
            state[node] = DONE;
            true
        }
        let mut state = vec![UNVISITED; self.nodes.len()];
        let mut longest = vec![0usize; self.nodes.len()];
        for n in 0..self.nodes.len() {
            if state[n] == UNVISITED && !visit(self, net, n, &mut state, &mut longest) {
                return None;
            }
        }
        longest.into_iter().max()
    }
}

impl fmt::Display for ReachabilityGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} markings", self.nodes.len())?;
        for (i, m) in self.nodes.iter().enumerate() {
            let tokens: Vec<String> = m
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(p, &c)| format!("p{p}:{c}"))
                .collect();
            writeln!(f, "  M{i} {{{}}}", tokens.join(","))?;
        }
        Ok(())
    }
}
