//! Probabilistic trace alignment over stochastic workflow nets.
//!
//! The crate ranks the traces of a stochastic workflow net against a query
//! log trace, balancing model-trace probability against alignment cost. Two
//! routes are provided: an exact ranking driven by Levenshtein distance and
//! trace probability, and an approximate ranking that embeds traces into a
//! dense vector space and answers queries from a prebuilt k-NN index.
//!
//! Pipeline: [`net`] parses into a stochastic workflow net and builds its
//! reachability graph; [`tg`] turns that graph into a node-labelled Markov
//! chain (a transition graph) and performs tau-closure; [`unfold`] enumerates
//! model traces with exact probabilities; [`ranking`] and [`embedding`]
//! provide the two ranking strategies; [`knn`] supplies the VP-tree, KD-tree
//! and linear-scan backends they query.

pub mod embedding;
pub mod fixtures;
pub mod io;
pub mod knn;
pub mod label;
pub mod net;
pub mod ranking;
pub mod tg;
pub mod unfold;

pub use label::{Activity, Label};
pub use net::StochasticWorkflowNet;
pub use tg::TransitionGraph;
pub use unfold::ModelTrace;
