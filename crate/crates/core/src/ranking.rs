//! The exact ranking route: edit distance, similarity, the probability-times-
//! similarity score, and its reduction to a nearest-to-origin search.

use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::knn::{self, IndexKind, KnnIndex, Point};
use crate::label::{format_trace, Activity};
use crate::unfold::ModelTrace;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("cannot rank over an empty trace set")]
    EmptyTraceSet,
    #[error("trace `{0}` has probability {1}, expected a value in (0,1]")]
    BadProbability(String, f64),
    #[error("score components must be positive, got p={0}, s={1}")]
    ZeroScore(f64, f64),
    #[error(transparent)]
    Knn(#[from] knn::KnnError),
}

/// Unit-cost edit distance over activity symbols; each symbol counts as one
/// atom regardless of its name length.
pub fn levenshtein(a: &[Activity], b: &[Activity]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 / (d/c + 1)`: 1 for identical traces, decreasing in the distance.
pub fn similarity(distance: usize, c: u32) -> f64 {
    1.0 / (distance as f64 / c as f64 + 1.0)
}

/// The score of aligning `query` with a model trace: probability times
/// similarity.
pub fn golden_rank(query: &[Activity], candidate: &ModelTrace, c: u32) -> f64 {
    candidate.probability * similarity(levenshtein(query, &candidate.labels), c)
}

/// Maps `(p, s)` to a plane point whose distance from the origin is
/// `1/(p*s)`, so higher scores land closer to the origin.
pub fn t_transform(p: f64, s: f64) -> Result<[f64; 2], RankError> {
    if !(p > 0.0) || !(s > 0.0) {
        return Err(RankError::ZeroScore(p, s));
    }
    let r = (p * p + s * s).sqrt();
    Ok([1.0 / (s * r), 1.0 / (p * r)])
}

/// One row of a ranking.
#[derive(Debug, Clone)]
pub struct RankedAlignment {
    pub trace: ModelTrace,
    pub distance: usize,
    pub similarity: f64,
    pub score: f64,
    /// The t-transformed point; its norm is `1/score`.
    pub point: [f64; 2],
}

/// Model traces ordered by descending score, ties broken lexicographically
/// by label sequence.
#[derive(Debug, Clone)]
pub struct Ranking {
    pub query: Vec<Activity>,
    pub c: u32,
    pub entries: Vec<RankedAlignment>,
    /// True when fewer traces than requested were available.
    pub truncated: bool,
}

fn score_one(query: &[Activity], trace: &ModelTrace, c: u32) -> Result<RankedAlignment, RankError> {
    if !(trace.probability > 0.0) || trace.probability > 1.0 + 1e-12 {
        return Err(RankError::BadProbability(
            format_trace(&trace.labels),
            trace.probability,
        ));
    }
    let distance = levenshtein(query, &trace.labels);
    let s = similarity(distance, c);
    let point = t_transform(trace.probability, s)?;
    Ok(RankedAlignment {
        trace: trace.clone(),
        distance,
        similarity: s,
        score: trace.probability * s,
        point,
    })
}

/// Scores every candidate against the query. Runs on the rayon pool when the
/// `parallel` feature is enabled.
pub fn score_all(
    query: &[Activity],
    traces: &[ModelTrace],
    c: u32,
) -> Result<Vec<RankedAlignment>, RankError> {
    #[cfg(feature = "parallel")]
    {
        traces.par_iter().map(|t| score_one(query, t, c)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        score_all_seq(query, traces, c)
    }
}

/// Sequential scoring; the fallback path and the baseline the benches
/// compare against.
pub fn score_all_seq(
    query: &[Activity],
    traces: &[ModelTrace],
    c: u32,
) -> Result<Vec<RankedAlignment>, RankError> {
    traces.iter().map(|t| score_one(query, t, c)).collect()
}

/// The k best alignments, retrieved by querying an index for the points
/// nearest the origin over the t-transformed score set. The `linear` backend
/// makes this an explicit scan; all backends return the order a plain sort
/// by descending score would.
pub fn optimal_topk(
    traces: &[ModelTrace],
    query: &[Activity],
    k: usize,
    c: u32,
    index_kind: IndexKind,
) -> Result<Ranking, RankError> {
    if traces.is_empty() {
        return Err(RankError::EmptyTraceSet);
    }
    // Sort candidates lexicographically first: point ids then break score
    // ties in trace order.
    let mut scored = score_all(query, traces, c)?;
    scored.sort_by(|a, b| a.trace.labels.cmp(&b.trace.labels));
    let points: Vec<Point> = scored
        .iter()
        .enumerate()
        .map(|(id, row)| Point {
            id,
            coords: row.point.to_vec(),
        })
        .collect();
    let index = KnnIndex::build(points, index_kind)?;
    let truncated = k > scored.len();
    let hits = index.query(&[0.0, 0.0], k.min(scored.len()))?;
    let entries: Vec<RankedAlignment> = hits.iter().map(|&(id, _)| scored[id].clone()).collect();
    Ok(Ranking {
        query: query.to_vec(),
        c,
        entries,
        truncated,
    })
}

/// Spearman's rank correlation between two score vectors over the same
/// items, with average ranks for ties. Both vectors rank by descending
/// value. Degenerate constant vectors correlate 1 with each other and 0
/// with anything else.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rankings must cover the same domain");
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

/// Average ranks (1-based) for descending values; tied values share the mean
/// of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut ranks = vec![0.0; n];
    let mut pos = 0usize;
    while pos < n {
        let mut end = pos + 1;
        while end < n && values[order[end]] == values[order[pos]] {
            end += 1;
        }
        let mean = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = mean;
        }
        pos = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 && syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
