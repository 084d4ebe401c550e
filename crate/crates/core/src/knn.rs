//! Exact k-nearest-neighbour retrieval under Euclidean distance.
//!
//! Three interchangeable backends: a vantage-point tree, a kd-tree, and a
//! linear scan that doubles as the correctness oracle. All of them apply the
//! same tie rule (distance, then point id), so their results are identical.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("cannot build an index over zero points")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// A point with an opaque id (typically a trace id).
#[derive(Debug, Clone)]
pub struct Point {
    pub id: usize,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Vp,
    Kd,
    Linear,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Vp => "vp",
            IndexKind::Kd => "kd",
            IndexKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for IndexKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vp" => Ok(IndexKind::Vp),
            "kd" => Ok(IndexKind::Kd),
            "linear" => Ok(IndexKind::Linear),
            other => Err(format!("unknown index kind `{other}` (expected vp|kd|linear)")),
        }
    }
}

/// Default partition size below which the trees fall back to scanning.
pub const DEFAULT_LEAF_SIZE: usize = 16;

fn squared_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.len().min(b.len()) {
        let d = a[i] - b[i];
        sum += d * d;
    }
    sum
}

/// Squared distance with early abandon: once the partial sum strictly
/// exceeds `bound` the point cannot enter the candidate set (not even on a
/// tie), so the exact value no longer matters.
fn squared_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let n = a.len().min(b.len());
    let mut sum = 0.0;
    let mut i = 0;
    while i < n {
        let stop = (i + 64).min(n);
        while i < stop {
            let d = a[i] - b[i];
            sum += d * d;
            i += 1;
        }
        if sum > bound {
            return f64::INFINITY;
        }
    }
    sum
}

/// Candidate ordered worst-first by (squared distance, id).
#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the k best candidates under the tie rule.
struct BestK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl BestK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, d2: f64, id: usize) {
        self.heap.push(Candidate { d2, id });
        if self.heap.len() > self.k {
            self.heap.pop();
        }
    }

    /// Squared distance of the current k-th candidate, infinite while the
    /// set is not yet full.
    fn worst(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.d2)
        }
    }

    fn into_sorted(self) -> Vec<(usize, f64)> {
        let mut items: Vec<Candidate> = self.heap.into_vec();
        items.sort();
        items.into_iter().map(|c| (c.id, c.d2.sqrt())).collect()
    }
}

/// Full scan plus partial sort; the oracle the trees are tested against.
pub fn brute_force(points: &[Point], query: &[f64], k: usize) -> Result<Vec<(usize, f64)>, KnnError> {
    if k == 0 {
        return Err(KnnError::ZeroK);
    }
    let mut best = BestK::new(k);
    for p in points {
        if p.coords.len() != query.len() {
            return Err(KnnError::Dimension {
                expected: query.len(),
                got: p.coords.len(),
            });
        }
        best.offer(squared_dist(&p.coords, query), p.id);
    }
    Ok(best.into_sorted())
}

enum KdNode {
    Leaf(Vec<usize>),
    Split {
        dim: usize,
        value: f64,
        left: Box<KdNode>,
        right: Box<KdNode>,
    },
}

enum VpNode {
    Leaf(Vec<usize>),
    Ball {
        vantage: usize,
        radius: f64,
        inside: Box<VpNode>,
        outside: Box<VpNode>,
    },
}

/// An immutable index over a fixed point set. Queries never mutate it and
/// always return exactly what the linear scan would.
pub struct KnnIndex {
    kind: IndexKind,
    points: Vec<Point>,
    dim: usize,
    leaf_size: usize,
    kd_root: Option<KdNode>,
    vp_root: Option<VpNode>,
}

impl KnnIndex {
    pub fn build(points: Vec<Point>, kind: IndexKind) -> Result<Self, KnnError> {
        Self::build_with_leaf_size(points, kind, DEFAULT_LEAF_SIZE)
    }

    /// Builds with an explicit partition cutoff; results are identical for
    /// every cutoff, only the build/query trade-off moves.
    pub fn build_with_leaf_size(
        points: Vec<Point>,
        kind: IndexKind,
        leaf_size: usize,
    ) -> Result<Self, KnnError> {
        let Some(first) = points.first() else {
            return Err(KnnError::Empty);
        };
        let dim = first.coords.len();
        for p in &points {
            if p.coords.len() != dim {
                return Err(KnnError::Dimension {
                    expected: dim,
                    got: p.coords.len(),
                });
            }
        }
        let mut index = Self {
            kind,
            points,
            dim,
            leaf_size: leaf_size.max(1),
            kd_root: None,
            vp_root: None,
        };
        let mut ids: Vec<usize> = (0..index.points.len()).collect();
        match kind {
            IndexKind::Kd => index.kd_root = Some(index.build_kd(&mut ids, 0)),
            IndexKind::Vp => index.vp_root = Some(index.build_vp(&mut ids)),
            IndexKind::Linear => {}
        }
        Ok(index)
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// The k nearest points to `query`, ascending by (distance, id).
    pub fn query(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>, KnnError> {
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if query.len() != self.dim {
            return Err(KnnError::Dimension {
                expected: self.dim,
                got: query.len(),
            });
        }
        let mut best = BestK::new(k);
        match self.kind {
            IndexKind::Linear => {
                for p in &self.points {
                    let d2 = squared_dist_bounded(&p.coords, query, best.worst());
                    best.offer(d2, p.id);
                }
            }
            IndexKind::Kd => self.search_kd(self.kd_root.as_ref().unwrap(), query, &mut best),
            IndexKind::Vp => self.search_vp(self.vp_root.as_ref().unwrap(), query, &mut best),
        }
        Ok(best.into_sorted())
    }

    /// Splits on the cycling dimension for low-dimensional points and on the
    /// widest spread otherwise. The median point goes to the right child.
    fn build_kd(&self, ids: &mut [usize], depth: usize) -> KdNode {
        if ids.len() <= self.leaf_size {
            return KdNode::Leaf(ids.to_vec());
        }
        let dim = if self.dim <= 3 {
            depth % self.dim
        } else {
            self.widest_dim(ids)
        };
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            self.points[a].coords[dim]
                .total_cmp(&self.points[b].coords[dim])
                .then(self.points[a].id.cmp(&self.points[b].id))
        });
        let value = self.points[ids[mid]].coords[dim];
        let (left, right) = ids.split_at_mut(mid);
        KdNode::Split {
            dim,
            value,
            left: Box::new(self.build_kd(left, depth + 1)),
            right: Box::new(self.build_kd(right, depth + 1)),
        }
    }

    fn widest_dim(&self, ids: &[usize]) -> usize {
        let mut best = 0;
        let mut best_spread = f64::NEG_INFINITY;
        for d in 0..self.dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in ids {
                let v = self.points[i].coords[d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let spread = hi - lo;
            if spread > best_spread {
                best_spread = spread;
                best = d;
            }
        }
        best
    }

    fn search_kd(&self, node: &KdNode, query: &[f64], best: &mut BestK) {
        match node {
            KdNode::Leaf(ids) => {
                for &i in ids {
                    let d2 = squared_dist_bounded(&self.points[i].coords, query, best.worst());
                    best.offer(d2, self.points[i].id);
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search_kd(near, query, best);
                // Equal axial distance may still hide a smaller id at the
                // same distance, so prune only on a strict excess.
                if diff * diff <= best.worst() {
                    self.search_kd(far, query, best);
                }
            }
        }
    }

    /// Vantage point is the first element of the current partition, which
    /// keeps builds reproducible.
    fn build_vp(&self, ids: &mut [usize]) -> VpNode {
        if ids.len() <= self.leaf_size {
            return VpNode::Leaf(ids.to_vec());
        }
        let vantage = ids[0];
        let rest = &mut ids[1..];
        let mid = rest.len() / 2;
        let vp_coords = self.points[vantage].coords.clone();
        rest.select_nth_unstable_by(mid, |&a, &b| {
            squared_dist(&self.points[a].coords, &vp_coords)
                .total_cmp(&squared_dist(&self.points[b].coords, &vp_coords))
                .then(self.points[a].id.cmp(&self.points[b].id))
        });
        let radius = squared_dist(&self.points[rest[mid]].coords, &vp_coords).sqrt();
        let (inside, outside) = rest.split_at_mut(mid);
        VpNode::Ball {
            vantage,
            radius,
            inside: Box::new(self.build_vp(inside)),
            outside: Box::new(self.build_vp(outside)),
        }
    }

    fn search_vp(&self, node: &VpNode, query: &[f64], best: &mut BestK) {
        match node {
            VpNode::Leaf(ids) => {
                for &i in ids {
                    let d2 = squared_dist_bounded(&self.points[i].coords, query, best.worst());
                    best.offer(d2, self.points[i].id);
                }
            }
            VpNode::Ball {
                vantage,
                radius,
                inside,
                outside,
            } => {
                let d2 = squared_dist(&self.points[*vantage].coords, query);
                best.offer(d2, self.points[*vantage].id);
                let d = d2.sqrt();
                let (near, far, margin) = if d < *radius {
                    (inside, outside, *radius - d)
                } else {
                    (outside, inside, d - *radius)
                };
                self.search_vp(near, query, best);
                // Triangle inequality: the far side holds no point closer
                // than `margin`; explore unless that strictly beats the
                // current k-th candidate.
                if margin * margin <= best.worst() {
                    self.search_vp(far, query, best);
                }
            }
        }
    }
}
