//! Transition labels: visible activities and the silent step.

use std::fmt;
use std::sync::Arc;

/// A visible activity name. Cheap to clone and to share across threads.
pub type Activity = Arc<str>;

/// The name reserved for the silent label in textual formats.
pub const TAU_NAME: &str = "tau";

/// Label attached to a transition or transition-graph node: either a visible
/// task from the activity alphabet or the invisible step `tau`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Tau,
    Task(Activity),
}

impl Label {
    pub fn task(name: &str) -> Self {
        Label::Task(Arc::from(name))
    }

    /// Parses `tau` as the silent label, anything else as a task name.
    pub fn parse(name: &str) -> Self {
        if name == TAU_NAME {
            Label::Tau
        } else {
            Label::task(name)
        }
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, Label::Tau)
    }

    pub fn as_activity(&self) -> Option<&Activity> {
        match self {
            Label::Tau => None,
            Label::Task(a) => Some(a),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Tau => f.write_str(TAU_NAME),
            Label::Task(a) => f.write_str(a),
        }
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Renders a trace as whitespace-separated activity names.
pub fn format_trace(trace: &[Activity]) -> String {
    trace
        .iter()
        .map(|a| a.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits a whitespace-separated line into a trace.
pub fn parse_trace(line: &str) -> Vec<Activity> {
    line.split_whitespace().map(Arc::from).collect()
}
