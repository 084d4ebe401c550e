//! Shared example models for tests, benches and documentation.

use crate::label::Label;
use crate::net::{Arc, StochasticWorkflowNet, Transition};
use crate::tg::TransitionGraph;

/// A small workflow net with silent steps: a weighted branch into an `a`
/// loop, or a `c` that either joins the loop or exits through a single `b`.
/// Its tau-closed transition graph generates the same weighted traces as
/// [`crate::tg::example_fixture_tg`]: `a*` from 0.4 downwards, `ca*` from
/// 0.07, and `cb` at 0.06.
pub fn fixture_net() -> StochasticWorkflowNet {
    let t = |name: &str, label: Label, weight: f64| Transition {
        name: name.into(),
        label,
        weight,
    };
    StochasticWorkflowNet::new(
        ["p1", "p2", "p3", "p4", "p5", "p7"]
            .into_iter()
            .map(String::from)
            .collect(),
        vec![
            t("t_in", Label::Tau, 8.0),
            t("t_c", Label::task("c"), 2.0),
            t("t_a", Label::task("a"), 1.0),
            t("t_loop", Label::Tau, 1.0),
            t("t_exit", Label::Tau, 1.0),
            t("t_ca", Label::task("a"), 7.0),
            t("t_b", Label::task("b"), 3.0),
            t("t_bexit", Label::Tau, 1.0),
        ],
        vec![
            Arc::PlaceToTransition("p1".into(), "t_in".into()),
            Arc::TransitionToPlace("t_in".into(), "p2".into()),
            Arc::PlaceToTransition("p1".into(), "t_c".into()),
            Arc::TransitionToPlace("t_c".into(), "p4".into()),
            Arc::PlaceToTransition("p2".into(), "t_a".into()),
            Arc::TransitionToPlace("t_a".into(), "p3".into()),
            Arc::PlaceToTransition("p3".into(), "t_loop".into()),
            Arc::TransitionToPlace("t_loop".into(), "p2".into()),
            Arc::PlaceToTransition("p3".into(), "t_exit".into()),
            Arc::TransitionToPlace("t_exit".into(), "p7".into()),
            Arc::PlaceToTransition("p4".into(), "t_ca".into()),
            Arc::TransitionToPlace("t_ca".into(), "p3".into()),
            Arc::PlaceToTransition("p4".into(), "t_b".into()),
            Arc::TransitionToPlace("t_b".into(), "p5".into()),
            Arc::PlaceToTransition("p5".into(), "t_bexit".into()),
            Arc::TransitionToPlace("t_bexit".into(), "p7".into()),
        ],
    )
    .expect("fixture net is well-formed")
}

/// An order-handling net: close, then accept (0.9, with payment) or refuse
/// (0.1), then archive.
pub fn order_net() -> StochasticWorkflowNet {
    let t = |name: &str, label: &str, weight: f64| Transition {
        name: name.into(),
        label: Label::task(label),
        weight,
    };
    StochasticWorkflowNet::new(
        ["q1", "q2", "q3", "q4", "q5"]
            .into_iter()
            .map(String::from)
            .collect(),
        vec![
            t("close", "close_order", 1.0),
            t("accept", "accept_order", 0.9),
            t("pay", "pay_order", 1.0),
            t("refuse", "refuse_order", 0.1),
            t("archive", "archive_order", 1.0),
        ],
        vec![
            Arc::PlaceToTransition("q1".into(), "close".into()),
            Arc::TransitionToPlace("close".into(), "q2".into()),
            Arc::PlaceToTransition("q2".into(), "accept".into()),
            Arc::TransitionToPlace("accept".into(), "q3".into()),
            Arc::PlaceToTransition("q3".into(), "pay".into()),
            Arc::TransitionToPlace("pay".into(), "q4".into()),
            Arc::PlaceToTransition("q2".into(), "refuse".into()),
            Arc::TransitionToPlace("refuse".into(), "q4".into()),
            Arc::PlaceToTransition("q4".into(), "archive".into()),
            Arc::TransitionToPlace("archive".into(), "q5".into()),
        ],
    )
    .expect("order net is well-formed")
}

/// A net whose only transition drops two tokens on the same place; its
/// reachability graph is not safe.
pub fn two_token_net() -> StochasticWorkflowNet {
    let t = |name: &str, weight: f64| Transition {
        name: name.into(),
        label: Label::task(name),
        weight,
    };
    StochasticWorkflowNet::new(
        ["r1", "r2", "r3"].into_iter().map(String::from).collect(),
        vec![t("dup", 1.0), t("drain", 1.0)],
        vec![
            Arc::PlaceToTransition("r1".into(), "dup".into()),
            Arc::TransitionToPlace("dup".into(), "r2".into()),
            Arc::TransitionToPlace("dup".into(), "r2".into()),
            Arc::PlaceToTransition("r2".into(), "drain".into()),
            Arc::TransitionToPlace("drain".into(), "r3".into()),
        ],
    )
    .expect("two-token net is well-formed")
}

/// Two runs yield the trace `a b` with probabilities 0.3 and 0.2; a third
/// branch emits `c` with the remaining mass.
pub fn diamond_tg() -> TransitionGraph {
    let nodes = vec![
        ("s".to_string(), Label::Tau),
        ("A1".to_string(), Label::task("a")),
        ("A2".to_string(), Label::task("a")),
        ("B1".to_string(), Label::task("b")),
        ("B2".to_string(), Label::task("b")),
        ("C".to_string(), Label::task("c")),
        ("e".to_string(), Label::Tau),
    ];
    let edges = vec![
        (0, 1, 0.3),
        (0, 2, 0.2),
        (0, 5, 0.5),
        (1, 3, 1.0),
        (2, 4, 1.0),
        (3, 6, 1.0),
        (4, 6, 1.0),
        (5, 6, 1.0),
    ];
    TransitionGraph::new(nodes, edges, 0, 6).expect("diamond graph is well-formed")
}

/// A layered synthetic model: `layers` consecutive choices among `choices`
/// labelled nodes drawn from an alphabet of `alphabet_size` symbols, fully
/// connected layer to layer. Choice `j` of every layer carries weight
/// `weights[j % weights.len()]`. When the alphabet is large enough, every
/// layer gets its own symbols; otherwise symbols are reused cyclically. The
/// graph unfolds into exactly `choices ^ layers` traces of length `layers`.
pub fn layered_tg(
    layers: usize,
    choices: usize,
    alphabet_size: usize,
    weights: &[f64],
) -> TransitionGraph {
    assert!(layers >= 1 && choices >= 1 && alphabet_size >= choices);
    assert!(!weights.is_empty() && weights.iter().all(|&w| w > 0.0));
    let distinct = alphabet_size >= layers * choices;
    let mut nodes: Vec<(String, Label)> = vec![("s".into(), Label::Tau)];
    for layer in 0..layers {
        for j in 0..choices {
            let symbol = if distinct {
                layer * choices + j
            } else {
                (layer + 7 * j) % alphabet_size
            };
            nodes.push((
                format!("l{layer}c{j}"),
                Label::task(&format!("s{symbol}")),
            ));
        }
    }
    let end = nodes.len();
    nodes.push(("e".into(), Label::Tau));

    let node_at = |layer: usize, j: usize| 1 + layer * choices + j;
    let total: f64 = (0..choices).map(|j| weights[j % weights.len()]).sum();
    let mut edges = Vec::new();
    for j in 0..choices {
        edges.push((0, node_at(0, j), weights[j % weights.len()] / total));
    }
    for layer in 0..layers - 1 {
        for j in 0..choices {
            for j2 in 0..choices {
                edges.push((
                    node_at(layer, j),
                    node_at(layer + 1, j2),
                    weights[j2 % weights.len()] / total,
                ));
            }
        }
    }
    for j in 0..choices {
        edges.push((node_at(layers - 1, j), end, 1.0));
    }
    TransitionGraph::new(nodes, edges, 0, end).expect("layered graph is well-formed")
}
