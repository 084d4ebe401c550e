//! Parsers and serializers: the plain-text transition-graph format, trace
//! logs, a PNML subset for stochastic workflow nets, and CSV helpers.

use std::collections::HashMap;

use thiserror::Error;

use crate::embedding::EmbeddingTable;
use crate::label::{Activity, Label};
use crate::net::{Arc, NetError, StochasticWorkflowNet, Transition};
use crate::tg::{TgError, TransitionGraph};

/// Row-sum slack accepted by the text-format parser.
pub const PARSE_ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("xml: {0}")]
    Xml(String),
    #[error("pnml: {0}")]
    Pnml(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tg(#[from] TgError),
}

fn line_err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Line {
        line,
        message: message.into(),
    }
}

/// Parses the plain-text transition-graph format:
///
/// ```text
/// start <node>
/// end <node>
/// <node> <label>        # one line per node, label `tau` for silent nodes
/// <src> <dst> <prob>    # one line per edge
/// ```
///
/// Blank lines and `#` comments are ignored. Every non-empty row must sum to
/// 1 within 1e-6.
pub fn parse_tg(text: &str) -> Result<TransitionGraph, ParseError> {
    let mut start: Option<(String, usize)> = None;
    let mut end: Option<(String, usize)> = None;
    let mut nodes: Vec<(String, Label)> = Vec::new();
    let mut node_index: HashMap<String, usize> = HashMap::new();
    let mut edges: Vec<(String, String, f64, usize)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["start", node] => {
                if start.is_some() {
                    return Err(line_err(line, "duplicate start header"));
                }
                start = Some((node.to_string(), line));
            }
            ["end", node] => {
                if end.is_some() {
                    return Err(line_err(line, "duplicate end header"));
                }
                end = Some((node.to_string(), line));
            }
            [name, label] => {
                if node_index.contains_key(*name) {
                    return Err(line_err(line, format!("duplicate node `{name}`")));
                }
                node_index.insert(name.to_string(), nodes.len());
                nodes.push((name.to_string(), Label::parse(label)));
            }
            [src, dst, prob] => {
                let p: f64 = prob.parse().map_err(|_| {
                    line_err(line, format!("cannot parse probability `{prob}`"))
                })?;
                edges.push((src.to_string(), dst.to_string(), p, line));
            }
            _ => {
                return Err(line_err(
                    line,
                    "expected `start <node>`, `end <node>`, `<node> <label>` or `<src> <dst> <prob>`",
                ))
            }
        }
    }

    let (start_name, start_line) =
        start.ok_or_else(|| line_err(1, "missing `start <node>` header"))?;
    let (end_name, end_line) = end.ok_or_else(|| line_err(1, "missing `end <node>` header"))?;
    let start_idx = *node_index
        .get(&start_name)
        .ok_or_else(|| line_err(start_line, format!("undeclared start node `{start_name}`")))?;
    let end_idx = *node_index
        .get(&end_name)
        .ok_or_else(|| line_err(end_line, format!("undeclared end node `{end_name}`")))?;

    let mut resolved = Vec::with_capacity(edges.len());
    for (src, dst, p, line) in edges {
        let s = *node_index
            .get(&src)
            .ok_or_else(|| line_err(line, format!("edge from undeclared node `{src}`")))?;
        let d = *node_index
            .get(&dst)
            .ok_or_else(|| line_err(line, format!("edge to undeclared node `{dst}`")))?;
        if !(p > 0.0) || !p.is_finite() {
            return Err(line_err(line, format!("probability {p} out of (0,1]")));
        }
        resolved.push((s, d, p));
    }

    let graph = TransitionGraph::new(nodes, resolved, start_idx, end_idx)?;
    graph.validate_full(PARSE_ROW_SUM_TOLERANCE)?;
    Ok(graph)
}

/// Serializes a transition graph in the text format accepted by
/// [`parse_tg`]. Probabilities use the shortest representation that parses
/// back to the identical value.
pub fn serialize_tg(g: &TransitionGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("start {}\n", g.names()[g.start()]));
    out.push_str(&format!("end {}\n", g.names()[g.end()]));
    for (name, label) in g.names().iter().zip(g.labels()) {
        out.push_str(&format!("{name} {label}\n"));
    }
    for (src, dst, p) in g.edges() {
        out.push_str(&format!("{} {} {}\n", g.names()[src], g.names()[dst], p));
    }
    out
}

/// Parses a trace log: one trace per line, whitespace-separated activity
/// names. Empty lines are skipped; CRLF and LF line endings are equivalent.
pub fn parse_log(text: &str) -> Vec<Vec<Activity>> {
    text.lines()
        .map(crate::label::parse_trace)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Parses a PNML document into a stochastic workflow net.
///
/// Recognized elements: `place` (attribute `id`), `transition` (attribute
/// `id`, optional `<name><text>` holding the activity label) and `arc`
/// (attributes `source`, `target`). A transition without a label, or
/// labelled `tau`, is silent. Firing weights come from a `<weight>` element
/// or a `<property key="weight">` under the transition's `toolspecific`
/// node, defaulting to 1.0.
pub fn parse_pnml(text: &str) -> Result<StochasticWorkflowNet, ParseError> {
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| ParseError::Xml(e.to_string()))?;
    let mut places: Vec<String> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut arcs: Vec<(String, String)> = Vec::new();

    for node in doc.descendants() {
        match node.tag_name().name() {
            "place" => {
                let id = node
                    .attribute("id")
                    .ok_or_else(|| ParseError::Pnml("place without id".into()))?;
                places.push(id.to_string());
            }
            "transition" => {
                let id = node
                    .attribute("id")
                    .ok_or_else(|| ParseError::Pnml("transition without id".into()))?;
                let label_text = node
                    .descendants()
                    .find(|d| d.tag_name().name() == "name")
                    .and_then(|name| {
                        name.descendants()
                            .find(|d| d.tag_name().name() == "text")
                            .and_then(|t| t.text())
                    })
                    .map(str::trim)
                    .unwrap_or("");
                let label = if label_text.is_empty() {
                    Label::Tau
                } else {
                    Label::parse(label_text)
                };
                let weight = transition_weight(&node, id)?;
                transitions.push(Transition {
                    name: id.to_string(),
                    label,
                    weight,
                });
            }
            "arc" => {
                let source = node
                    .attribute("source")
                    .ok_or_else(|| ParseError::Pnml("arc without source".into()))?;
                let target = node
                    .attribute("target")
                    .ok_or_else(|| ParseError::Pnml("arc without target".into()))?;
                arcs.push((source.to_string(), target.to_string()));
            }
            _ => {}
        }
    }

    let place_set: std::collections::HashSet<&str> =
        places.iter().map(String::as_str).collect();
    let trans_set: std::collections::HashSet<&str> =
        transitions.iter().map(|t| t.name.as_str()).collect();
    let mut typed = Vec::with_capacity(arcs.len());
    for (source, target) in arcs {
        if place_set.contains(source.as_str()) && trans_set.contains(target.as_str()) {
            typed.push(Arc::PlaceToTransition(source, target));
        } else if trans_set.contains(source.as_str()) && place_set.contains(target.as_str()) {
            typed.push(Arc::TransitionToPlace(source, target));
        } else {
            return Err(ParseError::Pnml(format!(
                "arc {source} -> {target} does not connect a place and a transition"
            )));
        }
    }
    Ok(StochasticWorkflowNet::new(places, transitions, typed)?)
}

fn transition_weight(node: &roxmltree::Node, id: &str) -> Result<f64, ParseError> {
    let Some(tool) = node
        .descendants()
        .find(|d| d.tag_name().name() == "toolspecific")
    else {
        return Ok(1.0);
    };
    let text = tool
        .descendants()
        .find(|d| d.tag_name().name() == "weight")
        .and_then(|w| w.text())
        .or_else(|| {
            tool.descendants()
                .find(|d| {
                    d.tag_name().name() == "property" && d.attribute("key") == Some("weight")
                })
                .and_then(|p| p.attribute("value").or_else(|| p.text()))
        });
    match text {
        None => Ok(1.0),
        Some(raw) => {
            let w: f64 = raw.trim().parse().map_err(|_| {
                ParseError::Pnml(format!("transition `{id}`: cannot parse weight `{raw}`"))
            })?;
            if !(w > 0.0) || !w.is_finite() {
                return Err(ParseError::Pnml(format!(
                    "transition `{id}`: weight {w} must be positive"
                )));
            }
            Ok(w)
        }
    }
}

/// 17 significant digits, enough to recover the exact binary value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Quotes a CSV field only when it contains a delimiter or quote.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders an embedding table as CSV: a header naming every label and then
/// every ordered label pair, one row per trace.
pub fn embedding_table_csv(table: &EmbeddingTable) -> String {
    let mut out = String::from("trace");
    for col in table.alphabet.column_names() {
        out.push(',');
        out.push_str(&csv_field(&col));
    }
    out.push('\n');
    for (trace, vector) in table.traces.iter().zip(&table.vectors) {
        out.push_str(&csv_field(&trace.rendered()));
        for v in vector.flat() {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}
