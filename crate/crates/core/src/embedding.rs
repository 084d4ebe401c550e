//! Trace and graph embeddings over the joint space `A ∪ A²`.
//!
//! The `eps` block captures 2-gram reachability weighted by a decay factor;
//! the `nu` block captures label frequencies. Both blocks are L2-normalized
//! per graph, the `eps` block additionally scaled by the graph's endpoint
//! mass `omega`, and both damped by `t_f` raised to the graph's relevance
//! edge count. Inner products of the stored vectors realize the trace kernel
//! directly, so index distances and kernel rankings need no rescaling.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::knn::{KnnError, KnnIndex, IndexKind, Point};
use crate::label::Activity;
use crate::tg::{self, MarkovGraph, TgError, TransitionGraph, WeightedTransitionGraph};
use crate::unfold::{self, ModelTrace, UnfoldError};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding model set is empty")]
    EmptyModelSet,
    #[error("invalid embedding config: {0}")]
    Config(String),
    #[error(transparent)]
    Tg(#[from] TgError),
    #[error(transparent)]
    Unfold(#[from] UnfoldError),
    #[error(transparent)]
    Knn(#[from] KnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsStrategy {
    /// Decayed 2-gram mass normalized by the total pair mass per step count.
    Eps1,
    /// Decayed per-source-averaged reachability (the trace embedding).
    Eps2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuStrategy {
    /// Average label frequency over the graph's trace set, scaled to sum 1.
    Nu1,
    /// Label frequencies ignored entirely.
    Nu2,
}

/// Tuning knobs shared by every embedding of one session.
#[derive(Debug, Clone)]
pub struct EmbeddingConfig {
    pub lambda: f64,
    pub t_f: f64,
    pub eps: EpsStrategy,
    pub nu: NuStrategy,
    /// Power-series horizon; defaults to the projected trace's length.
    pub horizon: Option<usize>,
    /// Probability threshold for the trace sets feeding `Nu1`.
    pub trace_rho: f64,
    /// Length cap for those trace sets; cyclic graphs fall back to an
    /// internal cap when absent.
    pub trace_n_max: Option<usize>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            lambda: 0.07,
            t_f: 0.0001,
            eps: EpsStrategy::Eps1,
            nu: NuStrategy::Nu1,
            horizon: None,
            trace_rho: 1e-5,
            trace_n_max: None,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(EmbedError::Config(format!(
                "lambda must lie in (0,1], got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.t_f) {
            return Err(EmbedError::Config(format!(
                "t_f must lie in [0,1], got {}",
                self.t_f
            )));
        }
        Ok(())
    }
}

/// The fixed, sorted task-label universe of one session. Vectors built over
/// different alphabets are not comparable.
#[derive(Debug, Clone)]
pub struct Alphabet {
    tasks: Vec<Activity>,
    index: HashMap<Activity, usize>,
}

impl Alphabet {
    pub fn new(tasks: impl IntoIterator<Item = Activity>) -> Self {
        let set: BTreeSet<Activity> = tasks.into_iter().collect();
        let tasks: Vec<Activity> = set.into_iter().collect();
        let index = tasks
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Self { tasks, index }
    }

    /// Union of the model's labels and every query trace's labels.
    pub fn for_session<'a>(
        model: &TransitionGraph,
        queries: impl IntoIterator<Item = &'a [Activity]>,
    ) -> Self {
        let mut all = model.task_alphabet();
        for q in queries {
            all.extend(q.iter().cloned());
        }
        Self::new(all)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Activity] {
        &self.tasks
    }

    pub fn index_of(&self, a: &Activity) -> Option<usize> {
        self.index.get(a).copied()
    }

    /// Flat index of the ordered pair (a, b) within the `eps` block.
    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        a * self.tasks.len() + b
    }

    /// Column names: every label, then every ordered pair.
    pub fn column_names(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.tasks.iter().map(|a| a.to_string()).collect();
        for a in &self.tasks {
            for b in &self.tasks {
                cols.push(format!("{a}:{b}"));
            }
        }
        cols
    }
}

/// Dense embedding: a frequency block indexed by `A` and a 2-gram block
/// indexed by `A²`, both non-negative and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub nu: Vec<f64>,
    pub eps: Vec<f64>,
}

impl EmbeddingVector {
    pub fn zeros(alphabet: &Alphabet) -> Self {
        Self {
            nu: vec![0.0; alphabet.len()],
            eps: vec![0.0; alphabet.len() * alphabet.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.nu.len() + self.eps.len()
    }

    /// Concatenates the blocks (`nu` first) for index storage.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.nu);
        out.extend_from_slice(&self.eps);
        out
    }
}

/// Kahan-compensated accumulator for the decay power series.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// In-place `v / ||v||`, leaving all-zero blocks untouched.
fn normalize(v: &mut [f64]) {
    let n = l2_norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Raw decayed 2-gram masses of a trace: component (a, b) accumulates
/// `lambda^d` for every occurrence of `a` before `b` at distance `d`.
/// Matches the power series of the trace's linear graph.
pub fn string_embedding(trace: &[Activity], lambda: f64, alphabet: &Alphabet) -> Vec<f64> {
    let mut eps = vec![Kahan::default(); alphabet.len() * alphabet.len()];
    for i in 0..trace.len() {
        let Some(a) = alphabet.index_of(&trace[i]) else {
            continue;
        };
        let mut decay = 1.0;
        for j in (i + 1)..trace.len() {
            decay *= lambda;
            if let Some(b) = alphabet.index_of(&trace[j]) {
                eps[alphabet.pair_index(a, b)].add(decay);
            }
        }
    }
    eps.into_iter().map(|k| k.sum).collect()
}

/// Per-step label-pair masses of `R^i` for i in 1..=l. Returns, for each
/// step, the raw pair masses `[L R^i L^T]`, keyed by alphabet pair index,
/// together with their total and the per-label source node counts.
struct PairSeries {
    /// step -> sparse pair masses
    steps: Vec<HashMap<(usize, usize), f64>>,
    /// nodes per label index
    label_counts: Vec<usize>,
}

fn pair_series<G: MarkovGraph>(g: &G, alphabet: &Alphabet, l: usize) -> PairSeries {
    let n = g.node_count();
    let node_label: Vec<Option<usize>> = (0..n)
        .map(|v| g.node_label(v).as_activity().and_then(|a| alphabet.index_of(a)))
        .collect();
    let mut label_counts = vec![0usize; alphabet.len()];
    for lbl in node_label.iter().flatten() {
        label_counts[*lbl] += 1;
    }
    let mut base = vec![vec![0.0f64; n]; n];
    for v in 0..n {
        for &(w, p) in g.successors(v) {
            base[v][w] = p;
        }
    }
    let mut acc = base.clone();
    let mut steps = Vec::with_capacity(l);
    for step in 0..l {
        if step > 0 {
            acc = tg::mat_mul(&acc, &base);
        }
        let mut masses: HashMap<(usize, usize), f64> = HashMap::new();
        for (u, row) in acc.iter().enumerate() {
            let Some(a) = node_label[u] else { continue };
            for (v, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    if let Some(b) = node_label[v] {
                        *masses.entry((a, b)).or_insert(0.0) += p;
                    }
                }
            }
        }
        steps.push(masses);
    }
    PairSeries {
        steps,
        label_counts,
    }
}

/// The 2-gram sub-embedding of a graph under the chosen strategy, over the
/// horizon `l`. Components of 2-grams the graph does not realize are zero.
pub fn sub_embedding_eps<G: MarkovGraph>(
    g: &G,
    cfg: &EmbeddingConfig,
    alphabet: &Alphabet,
    l: usize,
) -> Vec<f64> {
    let series = pair_series(g, alphabet, l.max(1));
    let mut eps = vec![Kahan::default(); alphabet.len() * alphabet.len()];
    let mut decay = 1.0;
    for step in &series.steps {
        decay *= cfg.lambda;
        match cfg.eps {
            EpsStrategy::Eps1 => {
                let total: f64 = step.values().sum();
                if total > 0.0 {
                    for (&(a, b), &m) in step {
                        eps[alphabet.pair_index(a, b)].add(decay * m / total);
                    }
                }
            }
            EpsStrategy::Eps2 => {
                for (&(a, b), &m) in step {
                    let count = series.label_counts[a];
                    if count > 0 {
                        eps[alphabet.pair_index(a, b)].add(decay * m / count as f64);
                    }
                }
            }
        }
    }
    eps.into_iter().map(|k| k.sum).collect()
}

/// The label-frequency sub-embedding. `Nu1` averages per-trace label
/// frequencies over the graph's trace set and scales the result to sum 1;
/// `Nu2` is the zero vector. Cyclic graphs are unfolded up to the session's
/// threshold and cap.
pub fn sub_embedding_nu<G: MarkovGraph>(
    g: &G,
    cfg: &EmbeddingConfig,
    alphabet: &Alphabet,
) -> Result<Vec<f64>, EmbedError> {
    let mut nu = vec![0.0; alphabet.len()];
    if cfg.nu == NuStrategy::Nu2 {
        return Ok(nu);
    }
    let traces = graph_trace_set(g, cfg)?;
    for t in &traces {
        if t.labels.is_empty() {
            continue;
        }
        let weight = 1.0 / t.labels.len() as f64;
        for a in &t.labels {
            if let Some(i) = alphabet.index_of(a) {
                nu[i] += weight;
            }
        }
    }
    let total: f64 = nu.iter().sum();
    if total > 0.0 {
        for x in nu.iter_mut() {
            *x /= total;
        }
    }
    Ok(nu)
}

/// The trace set of a graph: a full unfolding when finite, otherwise the
/// session-bounded unfolding.
fn graph_trace_set<G: MarkovGraph>(
    g: &G,
    cfg: &EmbeddingConfig,
) -> Result<Vec<ModelTrace>, EmbedError> {
    match unfold::unfold(g, 0.0, None) {
        Ok(traces) => Ok(traces),
        Err(UnfoldError::InfiniteUnfolding) => {
            let cap = cfg.trace_n_max.unwrap_or(2 * g.node_count() + 8);
            Ok(unfold::unfold(g, cfg.trace_rho, Some(cap))?)
        }
        Err(e) => Err(e.into()),
    }
}

/// The full embedding of a weighted transition graph: both blocks
/// L2-normalized, the 2-gram block scaled by `omega`, both damped by
/// `t_f ^ relevance_edges`.
pub fn tg_embedding(
    g: &WeightedTransitionGraph,
    cfg: &EmbeddingConfig,
    alphabet: &Alphabet,
) -> Result<EmbeddingVector, EmbedError> {
    cfg.validate()?;
    let l = cfg.horizon.unwrap_or_else(|| g.trace_len().max(1));
    let mut eps = sub_embedding_eps(g, cfg, alphabet, l);
    let mut nu = sub_embedding_nu(g, cfg, alphabet)?;
    normalize(&mut eps);
    normalize(&mut nu);
    let damp = t_f_power(cfg.t_f, g.relevance_edges());
    for x in eps.iter_mut() {
        *x *= g.omega() * damp;
    }
    for x in nu.iter_mut() {
        *x *= damp;
    }
    Ok(EmbeddingVector { nu, eps })
}

fn t_f_power(t_f: f64, exponent: usize) -> f64 {
    if exponent == 0 {
        1.0
    } else {
        t_f.powi(exponent as i32)
    }
}

/// Inner product of two stored embeddings. The omega and `t_f` factors are
/// baked into the vectors, so this is the trace kernel itself.
pub fn kernel(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let nu: f64 = a.nu.iter().zip(&b.nu).map(|(x, y)| x * y).sum();
    let eps: f64 = a.eps.iter().zip(&b.eps).map(|(x, y)| x * y).sum();
    nu + eps
}

/// The kernel-induced distance, which for stored vectors is plainly the
/// Euclidean distance between them.
pub fn kernel_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let sq = |xs: &[f64], ys: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let d = x - y;
                d * d
            })
            .sum::<f64>()
    };
    (sq(&a.nu, &b.nu) + sq(&a.eps, &b.eps)).sqrt()
}

/// The precomputed embeddings of a model's unfolded trace set. Built once
/// per model and queried read-only afterwards.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub alphabet: Alphabet,
    pub config: EmbeddingConfig,
    pub traces: Vec<ModelTrace>,
    pub vectors: Vec<EmbeddingVector>,
}

impl EmbeddingTable {
    /// Projects and embeds every trace. Runs on the rayon pool when the
    /// `parallel` feature is enabled.
    pub fn build(
        model: &TransitionGraph,
        traces: Vec<ModelTrace>,
        config: EmbeddingConfig,
        alphabet: Alphabet,
    ) -> Result<Self, EmbedError> {
        if traces.is_empty() {
            return Err(EmbedError::EmptyModelSet);
        }
        config.validate()?;
        #[cfg(feature = "parallel")]
        let vectors: Result<Vec<EmbeddingVector>, EmbedError> = traces
            .par_iter()
            .map(|t| embed_model_trace(model, t, &config, &alphabet))
            .collect();
        #[cfg(not(feature = "parallel"))]
        let vectors: Result<Vec<EmbeddingVector>, EmbedError> = traces
            .iter()
            .map(|t| embed_model_trace(model, t, &config, &alphabet))
            .collect();
        Ok(Self {
            alphabet,
            config,
            traces,
            vectors: vectors?,
        })
    }

    /// Sequential build; the fallback path and the benches' baseline.
    pub fn build_seq(
        model: &TransitionGraph,
        traces: Vec<ModelTrace>,
        config: EmbeddingConfig,
        alphabet: Alphabet,
    ) -> Result<Self, EmbedError> {
        if traces.is_empty() {
            return Err(EmbedError::EmptyModelSet);
        }
        config.validate()?;
        let vectors: Result<Vec<EmbeddingVector>, EmbedError> = traces
            .iter()
            .map(|t| embed_model_trace(model, t, &config, &alphabet))
            .collect();
        Ok(Self {
            alphabet,
            config,
            traces,
            vectors: vectors?,
        })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Builds a k-NN index over the stored vectors; point ids are positions
    /// in `traces`.
    pub fn index(&self, kind: IndexKind) -> Result<KnnIndex, EmbedError> {
        let points: Vec<Point> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(id, v)| Point {
                id,
                coords: v.flat(),
            })
            .collect();
        Ok(KnnIndex::build(points, kind)?)
    }

    /// Embeds a log trace into this table's space: the linear chain with
    /// weight 1 and relevance `|trace| - 1`.
    pub fn embed_query(&self, trace: &[Activity]) -> Result<EmbeddingVector, EmbedError> {
        let wtg = WeightedTransitionGraph::from_log_trace(trace)?;
        tg_embedding(&wtg, &self.config, &self.alphabet)
    }
}

fn embed_model_trace(
    model: &TransitionGraph,
    trace: &ModelTrace,
    cfg: &EmbeddingConfig,
    alphabet: &Alphabet,
) -> Result<EmbeddingVector, EmbedError> {
    let projection = tg::project(model, &trace.labels)?;
    tg_embedding(&projection, cfg, alphabet)
}

/// One row of an approximate ranking.
#[derive(Debug, Clone)]
pub struct ApproxEntry {
    pub trace: ModelTrace,
    /// Euclidean distance between the stored vectors.
    pub distance: f64,
    /// Kernel value against the query.
    pub kernel: f64,
}

#[derive(Debug, Clone)]
pub struct ApproxRanking {
    pub query: Vec<Activity>,
    pub entries: Vec<ApproxEntry>,
    pub by_kernel: bool,
    pub truncated: bool,
}

/// The approximate top-k: embeds the query, then either asks the prebuilt
/// index for the k nearest vectors (ascending distance) or, in by-kernel
/// mode, scans for the k largest kernel values.
pub fn approx_topk(
    table: &EmbeddingTable,
    index: &KnnIndex,
    query: &[Activity],
    k: usize,
    by_kernel: bool,
) -> Result<ApproxRanking, EmbedError> {
    if table.is_empty() {
        return Err(EmbedError::EmptyModelSet);
    }
    let q = table.embed_query(query)?;
    let truncated = k > table.len();
    let k = k.min(table.len());
    let entries: Vec<ApproxEntry> = if by_kernel {
        let mut order: Vec<usize> = (0..table.len()).collect();
        let kernels: Vec<f64> = table.vectors.iter().map(|v| kernel(&q, v)).collect();
        order.sort_by(|&i, &j| {
            kernels[j]
                .total_cmp(&kernels[i])
                .then_with(|| table.traces[i].labels.cmp(&table.traces[j].labels))
        });
        order
            .into_iter()
            .take(k)
            .map(|i| ApproxEntry {
                trace: table.traces[i].clone(),
                distance: kernel_distance(&q, &table.vectors[i]),
                kernel: kernels[i],
            })
            .collect()
    } else {
        index
            .query(&q.flat(), k)?
            .into_iter()
            .map(|(i, d)| ApproxEntry {
                trace: table.traces[i].clone(),
                distance: d,
                kernel: kernel(&q, &table.vectors[i]),
            })
            .collect()
    };
    Ok(ApproxRanking {
        query: query.to_vec(),
        entries,
        by_kernel,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::parse_trace;
    use crate::tg::{example_fixture_tg, linear_tg, project};
    use crate::unfold::unfold;

    fn abc() -> Alphabet {
        Alphabet::new(["a", "b", "c"].map(std::sync::Arc::from))
    }

    fn pair(alpha: &Alphabet, a: &str, b: &str) -> usize {
        let ai = alpha.index_of(&std::sync::Arc::from(a)).unwrap();
        let bi = alpha.index_of(&std::sync::Arc::from(b)).unwrap();
        alpha.pair_index(ai, bi)
    }

    fn label_idx(alpha: &Alphabet, a: &str) -> usize {
        alpha.index_of(&std::sync::Arc::from(a)).unwrap()
    }

    #[test]
    fn string_embedding_matches_the_published_table() {
        let alpha = abc();
        for lambda in [0.07f64, 0.3] {
            let l = lambda;
            let caba = string_embedding(&parse_trace("c a b a"), l, &alpha);
            let expect_caba: Vec<(&str, &str, f64)> = vec![
                ("a", "a", l * l),
                ("a", "b", l),
                ("b", "a", l),
                ("c", "a", l + l.powi(3)),
                ("c", "b", l * l),
            ];
            let mut want = vec![0.0; 9];
            for (a, b, v) in expect_caba {
                want[pair(&alpha, a, b)] = v;
            }
            for (i, (got, want)) in caba.iter().zip(&want).enumerate() {
                assert!((got - want).abs() < 1e-15, "caba[{i}]: {got} vs {want}");
            }

            let caa = string_embedding(&parse_trace("c a a"), l, &alpha);
            assert!((caa[pair(&alpha, "a", "a")] - l).abs() < 1e-15);
            assert!((caa[pair(&alpha, "c", "a")] - (l + l * l)).abs() < 1e-15);
            assert_eq!(caa.iter().filter(|&&x| x != 0.0).count(), 2);

            let cb = string_embedding(&parse_trace("c b"), l, &alpha);
            assert!((cb[pair(&alpha, "c", "b")] - l).abs() < 1e-15);
            assert_eq!(cb.iter().filter(|&&x| x != 0.0).count(), 1);
        }
    }

    #[test]
    fn string_kernel_example_values() {
        let alpha = abc();
        let l: f64 = 0.07;
        let embed = |s: &str| EmbeddingVector {
            nu: vec![0.0; alpha.len()],
            eps: string_embedding(&parse_trace(s), l, &alpha),
        };
        let caba = embed("c a b a");
        let caa = embed("c a a");
        let cb = embed("c b");
        let want_caa = l.powi(3) + (l + l.powi(3)) * (l + l * l);
        assert!((kernel(&caba, &caa) - want_caa).abs() < 1e-12);
        assert!((kernel(&caba, &cb) - l.powi(3)).abs() < 1e-12);
        assert!(kernel(&caba, &caa) > kernel(&caba, &cb));
        // self-kernel of a 2-gram is lambda^2, not 1
        assert!((kernel(&cb, &cb) - l.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn eps_of_an_edgeless_graph_is_zero() {
        let alpha = abc();
        let g = project(&example_fixture_tg(), &parse_trace("a")).unwrap();
        let cfg = EmbeddingConfig::default();
        let eps = sub_embedding_eps(&g, &cfg, &alpha, 1);
        assert!(eps.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn eps2_on_linear_cb_matches_the_string_embedding() {
        let alpha = abc();
        let cfg = EmbeddingConfig {
            eps: EpsStrategy::Eps2,
            ..EmbeddingConfig::default()
        };
        let g = linear_tg(&parse_trace("c b")).unwrap();
        let eps = sub_embedding_eps(&g, &cfg, &alpha, 2);
        let direct = string_embedding(&parse_trace("c b"), cfg.lambda, &alpha);
        assert_eq!(eps, direct);
    }

    #[test]
    fn eps1_on_the_projected_loop() {
        let alpha = abc();
        let cfg = EmbeddingConfig::default();
        let g = project(&example_fixture_tg(), &parse_trace("a a")).unwrap();
        let eps = sub_embedding_eps(&g, &cfg, &alpha, 2);
        // renormalized self-loop: lambda * 1/1 + lambda^2 * 1/1
        let want = cfg.lambda + cfg.lambda * cfg.lambda;
        assert!((eps[pair(&alpha, "a", "a")] - want).abs() < 1e-15);
        assert_eq!(eps.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn nu_frequencies() {
        let alpha = abc();
        let cfg = EmbeddingConfig::default();
        let single = linear_tg(&parse_trace("a")).unwrap();
        let nu = sub_embedding_nu(&single, &cfg, &alpha).unwrap();
        assert_eq!(nu[label_idx(&alpha, "a")], 1.0);
        assert_eq!(nu.iter().sum::<f64>(), 1.0);

        let caba = linear_tg(&parse_trace("c a b a")).unwrap();
        let nu = sub_embedding_nu(&caba, &cfg, &alpha).unwrap();
        assert!((nu[label_idx(&alpha, "a")] - 0.5).abs() < 1e-15);
        assert!((nu[label_idx(&alpha, "b")] - 0.25).abs() < 1e-15);
        assert!((nu[label_idx(&alpha, "c")] - 0.25).abs() < 1e-15);

        let cfg2 = EmbeddingConfig {
            nu: NuStrategy::Nu2,
            ..cfg
        };
        let nu2 = sub_embedding_nu(&caba, &cfg2, &alpha).unwrap();
        assert!(nu2.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_scaling_keeps_single_components_exact() {
        let alpha = abc();
        let cfg = EmbeddingConfig {
            t_f: 1.0,
            nu: NuStrategy::Nu2,
            ..EmbeddingConfig::default()
        };
        let wtg = WeightedTransitionGraph::from_parts(
            &linear_tg(&parse_trace("c b")).unwrap(),
            1.0,
            1,
            2,
        );
        let e = tg_embedding(&wtg, &cfg, &alpha).unwrap();
        assert_eq!(e.eps[pair(&alpha, "c", "b")], 1.0);
        assert_eq!(e.eps.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn blocks_have_unit_norm_before_damping() {
        let alpha = abc();
        let cfg = EmbeddingConfig {
            t_f: 1.0,
            ..EmbeddingConfig::default()
        };
        let wtg = WeightedTransitionGraph::from_log_trace(&parse_trace("c a b a")).unwrap();
        let e = tg_embedding(&wtg, &cfg, &alpha).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm(&e.nu) - 1.0).abs() < 1e-12);
        assert!((norm(&e.eps) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixture_projection_of_a_embeds_on_the_nu_block_only() {
        let alpha = abc();
        let cfg = EmbeddingConfig::default();
        let g = project(&example_fixture_tg(), &parse_trace("a")).unwrap();
        let e = tg_embedding(&g, &cfg, &alpha).unwrap();
        assert!(e.eps.iter().all(|&x| x == 0.0));
        let a = label_idx(&alpha, "a");
        for (i, v) in e.nu.iter().enumerate() {
            if i == a {
                assert!(*v > 0.0);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        // damping: two traversed edges -> t_f^2
        assert!((e.nu[a] - cfg.t_f * cfg.t_f).abs() < 1e-18);
    }

    #[test]
    fn query_embedding_support() {
        let alpha = abc();
        let cfg = EmbeddingConfig::default();
        let wtg = WeightedTransitionGraph::from_log_trace(&parse_trace("c a b a")).unwrap();
        let e = tg_embedding(&wtg, &cfg, &alpha).unwrap();
        assert!(e.nu.iter().all(|&x| x > 0.0));
        let expected_pairs = ["aa", "ab", "ba", "ca", "cb"];
        for a in ["a", "b", "c"] {
            for b in ["a", "b", "c"] {
                let v = e.eps[pair(&alpha, a, b)];
                if expected_pairs.contains(&format!("{a}{b}").as_str()) {
                    assert!(v > 0.0, "{a}{b} should be populated");
                } else {
                    assert_eq!(v, 0.0, "{a}{b} should be empty");
                }
            }
        }
    }

    #[test]
    fn kernel_is_symmetric_and_distance_is_euclidean() {
        let alpha = abc();
        let cfg = EmbeddingConfig::default();
        let e1 = tg_embedding(
            &WeightedTransitionGraph::from_log_trace(&parse_trace("c a b a")).unwrap(),
            &cfg,
            &alpha,
        )
        .unwrap();
        let e2 = tg_embedding(
            &WeightedTransitionGraph::from_log_trace(&parse_trace("a b c")).unwrap(),
            &cfg,
            &alpha,
        )
        .unwrap();
        assert_eq!(kernel(&e1, &e2), kernel(&e2, &e1));
        // d_k = sqrt(k(x,x) - 2k(x,y) + k(y,y)) equals the direct distance
        let dk = (kernel(&e1, &e1) - 2.0 * kernel(&e1, &e2) + kernel(&e2, &e2)).sqrt();
        assert!((dk - kernel_distance(&e1, &e2)).abs() < 1e-12);
        let flat_dist = {
            let (f1, f2) = (e1.flat(), e2.flat());
            f1.iter()
                .zip(&f2)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        assert!((kernel_distance(&e1, &e2) - flat_dist).abs() < 1e-15);
        assert_eq!(kernel_distance(&e1, &e1), 0.0);
    }

    #[test]
    fn orthogonal_vectors_have_zero_kernel_and_sqrt2_distance() {
        let alpha = abc();
        let mut e1 = EmbeddingVector::zeros(&alpha);
        let mut e2 = EmbeddingVector::zeros(&alpha);
        e1.nu[0] = 1.0;
        e2.nu[1] = 1.0;
        assert_eq!(kernel(&e1, &e2), 0.0);
        assert!((kernel_distance(&e1, &e2) - 2.0f64.sqrt()).abs() < 1e-15);
    }

    /// Two encodings of the same weighted trace set: padding with an
    /// unreachable node changes the structure but neither the traces nor the
    /// embedding.
    #[test]
    fn weak_equality_with_isolated_padding() {
        let alpha = abc();
        let cfg = EmbeddingConfig {
            t_f: 1.0,
            nu: NuStrategy::Nu2,
            ..EmbeddingConfig::default()
        };
        let g1 = TransitionGraph::new(
            vec![
                ("x".into(), crate::Label::task("a")),
                ("y".into(), crate::Label::task("b")),
            ],
            vec![(0, 1, 1.0)],
            0,
            1,
        )
        .unwrap();
        let g2 = TransitionGraph::new(
            vec![
                ("x".into(), crate::Label::task("a")),
                ("y".into(), crate::Label::task("b")),
                ("pad".into(), crate::Label::task("c")),
            ],
            vec![(0, 1, 1.0)],
            0,
            1,
        )
        .unwrap();
        let (omega1, omega2) = (0.7, 0.9);
        let e1 = tg_embedding(
            &WeightedTransitionGraph::from_parts(&g1, omega1, 1, 2),
            &cfg,
            &alpha,
        )
        .unwrap();
        let e2 = tg_embedding(
            &WeightedTransitionGraph::from_parts(&g2, omega2, 1, 2),
            &cfg,
            &alpha,
        )
        .unwrap();
        assert!((kernel(&e1, &e2) - omega1 * omega2).abs() < 1e-12);
    }

    /// Same weighted traces through a split node: `a b` at 0.6 and `a c b`
    /// at 0.4, with the `c` realized by one node or by two half-weight ones.
    #[test]
    fn weak_equality_with_split_nodes() {
        let alpha = abc();
        let cfg = EmbeddingConfig {
            t_f: 1.0,
            nu: NuStrategy::Nu2,
            eps: EpsStrategy::Eps2,
            ..EmbeddingConfig::default()
        };
        let g1 = TransitionGraph::new(
            vec![
                ("A".into(), crate::Label::task("a")),
                ("C".into(), crate::Label::task("c")),
                ("B".into(), crate::Label::task("b")),
            ],
            vec![(0, 2, 0.6), (0, 1, 0.4), (1, 2, 1.0)],
            0,
            2,
        )
        .unwrap();
        let g2 = TransitionGraph::new(
            vec![
                ("A".into(), crate::Label::task("a")),
                ("C1".into(), crate::Label::task("c")),
                ("C2".into(), crate::Label::task("c")),
                ("B".into(), crate::Label::task("b")),
            ],
            vec![
                (0, 3, 0.6),
                (0, 1, 0.2),
                (0, 2, 0.2),
                (1, 3, 1.0),
                (2, 3, 1.0),
            ],
            0,
            3,
        )
        .unwrap();
        let t1 = unfold(&g1, 0.0, None).unwrap();
        let t2 = unfold(&g2, 0.0, None).unwrap();
        assert_eq!(t1.len(), t2.len());
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!(a.labels, b.labels);
            assert!((a.probability - b.probability).abs() < 1e-12);
        }
        let (omega1, omega2) = (0.5, 0.25);
        let e1 = tg_embedding(
            &WeightedTransitionGraph::from_parts(&g1, omega1, 3, 3),
            &cfg,
            &alpha,
        )
        .unwrap();
        let e2 = tg_embedding(
            &WeightedTransitionGraph::from_parts(&g2, omega2, 3, 3),
            &cfg,
            &alpha,
        )
        .unwrap();
        assert!((kernel(&e1, &e2) - omega1 * omega2).abs() < 1e-12);
    }

    #[test]
    fn strong_dissimilarity_both_directions() {
        let alpha = Alphabet::new(["a", "b", "c", "x", "y", "z"].map(std::sync::Arc::from));
        let cfg = EmbeddingConfig {
            t_f: 0.5,
            ..EmbeddingConfig::default()
        };
        let embed = |s: &str| {
            tg_embedding(
                &WeightedTransitionGraph::from_log_trace(&parse_trace(s)).unwrap(),
                &cfg,
                &alpha,
            )
            .unwrap()
        };
        // disjoint labels and 2-grams
        assert_eq!(kernel(&embed("a b c"), &embed("x y z")), 0.0);
        // shared label only
        assert!(kernel(&embed("a b"), &embed("b x")) > 0.0);

        // generated corpus: kernel zero iff no shared label and no shared 2-gram
        let symbols = ["a", "b", "c", "x", "y", "z"];
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for case in 0..1000 {
            let len1 = next() % 4;
            let t1: Vec<crate::Activity> = (0..1 + len1)
                .map(|_| std::sync::Arc::from(symbols[(next() % 6) as usize]))
                .collect();
            let len2 = next() % 4;
            let t2: Vec<crate::Activity> = (0..1 + len2)
                .map(|_| std::sync::Arc::from(symbols[(next() % 6) as usize]))
                .collect();
            let k = kernel(&embed(&crate::label::format_trace(&t1)), &embed(&crate::label::format_trace(&t2)));
            let labels1: std::collections::BTreeSet<_> = t1.iter().collect();
            let labels2: std::collections::BTreeSet<_> = t2.iter().collect();
            let grams = |t: &[crate::Activity]| -> std::collections::BTreeSet<(crate::Activity, crate::Activity)> {
                let mut g = std::collections::BTreeSet::new();
                for i in 0..t.len() {
                    for j in i + 1..t.len() {
                        g.insert((t[i].clone(), t[j].clone()));
                    }
                }
                g
            };
            let shared_labels = labels1.intersection(&labels2).count() > 0;
            let shared_grams = grams(&t1).intersection(&grams(&t2)).count() > 0;
            let disjoint = !shared_labels && !shared_grams;
            assert_eq!(
                k == 0.0,
                disjoint,
                "case {case}: k={k}, t1={t1:?}, t2={t2:?}"
            );
        }
    }

    /// With every eps block empty, the combined ranking degenerates to the
    /// frequency block alone.
    #[test]
    fn nu_block_is_the_backup_ranking() {
        let alpha = Alphabet::new(["x", "y", "z"].map(std::sync::Arc::from));
        let cfg = EmbeddingConfig::default();
        let single = |s: &str| {
            WeightedTransitionGraph::from_parts(&linear_tg(&parse_trace(s)).unwrap(), 0.5, 0, 1)
        };
        let candidates = ["x", "y", "z"];
        let vectors: Vec<EmbeddingVector> = candidates
            .iter()
            .map(|s| tg_embedding(&single(s), &cfg, &alpha).unwrap())
            .collect();
        assert!(vectors.iter().all(|v| v.eps.iter().all(|&x| x == 0.0)));
        let q = tg_embedding(
            &WeightedTransitionGraph::from_log_trace(&parse_trace("y y x")).unwrap(),
            &cfg,
            &alpha,
        )
        .unwrap();
        let mut by_kernel: Vec<&str> = candidates.to_vec();
        by_kernel.sort_by(|a, b| {
            let ka = kernel(&q, &vectors[candidates.iter().position(|x| x == a).unwrap()]);
            let kb = kernel(&q, &vectors[candidates.iter().position(|x| x == b).unwrap()]);
            kb.total_cmp(&ka)
        });
        let mut by_nu: Vec<&str> = candidates.to_vec();
        by_nu.sort_by(|a, b| {
            let na = &vectors[candidates.iter().position(|x| x == a).unwrap()].nu;
            let nb = &vectors[candidates.iter().position(|x| x == b).unwrap()].nu;
            let da: f64 = na.iter().zip(&q.nu).map(|(x, y)| x * y).sum();
            let db: f64 = nb.iter().zip(&q.nu).map(|(x, y)| x * y).sum();
            db.total_cmp(&da)
        });
        assert_eq!(by_kernel, by_nu);
        assert_eq!(by_kernel, vec!["y", "x", "z"]);
    }

    fn fixture_table(cfg: EmbeddingConfig) -> EmbeddingTable {
        let model = example_fixture_tg();
        let traces = unfold(&model, 0.0, Some(4)).unwrap();
        let alphabet = Alphabet::for_session(&model, [parse_trace("c a b a").as_slice()]);
        EmbeddingTable::build(&model, traces, cfg, alphabet).unwrap()
    }

    #[test]
    fn by_kernel_ranking_starts_with_a_ca_cb() {
        let table = fixture_table(EmbeddingConfig::default());
        let index = table.index(IndexKind::Kd).unwrap();
        let ranking = approx_topk(&table, &index, &parse_trace("c a b a"), 8, true).unwrap();
        let order: Vec<String> = ranking.entries.iter().map(|e| e.trace.rendered()).collect();
        assert_eq!(&order[..3], &["a", "c a", "c b"]);
        // every kernel positive, strictly sorted
        for w in ranking.entries.windows(2) {
            assert!(w[0].kernel >= w[1].kernel);
        }
    }

    #[test]
    fn by_kernel_magnitudes_for_the_top_traces() {
        let table = fixture_table(EmbeddingConfig::default());
        let index = table.index(IndexKind::Linear).unwrap();
        let ranking = approx_topk(&table, &index, &parse_trace("c a b a"), 3, true).unwrap();
        // hand-computed with lambda=0.07, t_f=1e-4
        let expected = [
            ("a", 8.165e-21),
            ("c a", 9.241e-25),
            ("c b", 5.894e-25),
        ];
        for (entry, (name, k)) in ranking.entries.iter().zip(expected) {
            assert_eq!(entry.trace.rendered(), name);
            assert!(
                (entry.kernel - k).abs() < k * 1e-3,
                "{name}: kernel {} vs {k}",
                entry.kernel
            );
        }
    }

    #[test]
    fn distance_backends_agree_pairwise() {
        let table = fixture_table(EmbeddingConfig::default());
        for query in ["c a b a", "a a", "c b"] {
            let q = parse_trace(query);
            let base = approx_topk(
                &table,
                &table.index(IndexKind::Linear).unwrap(),
                &q,
                8,
                false,
            )
            .unwrap();
            for kind in [IndexKind::Vp, IndexKind::Kd] {
                let other = approx_topk(&table, &table.index(kind).unwrap(), &q, 8, false).unwrap();
                let a: Vec<_> = base.entries.iter().map(|e| e.trace.rendered()).collect();
                let b: Vec<_> = other.entries.iter().map(|e| e.trace.rendered()).collect();
                assert_eq!(a, b, "query {query} kind {kind:?}");
            }
        }
    }

    #[test]
    fn full_k_returns_a_permutation() {
        let table = fixture_table(EmbeddingConfig::default());
        let index = table.index(IndexKind::Vp).unwrap();
        let ranking = approx_topk(&table, &index, &parse_trace("a"), 8, false).unwrap();
        let mut names: Vec<String> = ranking.entries.iter().map(|e| e.trace.rendered()).collect();
        names.sort();
        let mut all: Vec<String> = table.traces.iter().map(|t| t.rendered()).collect();
        all.sort();
        assert_eq!(names, all);
        assert!(!ranking.truncated);
        let over = approx_topk(&table, &index, &parse_trace("a"), 9, false).unwrap();
        assert!(over.truncated);
    }

    #[test]
    fn parallel_and_sequential_builds_agree() {
        let model = example_fixture_tg();
        let traces = unfold(&model, 0.0, Some(4)).unwrap();
        let alphabet = Alphabet::for_session(&model, []);
        let par =
            EmbeddingTable::build(&model, traces.clone(), EmbeddingConfig::default(), alphabet.clone())
                .unwrap();
        let seq =
            EmbeddingTable::build_seq(&model, traces, EmbeddingConfig::default(), alphabet).unwrap();
        for (a, b) in par.vectors.iter().zip(&seq.vectors) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn config_validation() {
        let bad = EmbeddingConfig {
            lambda: 0.0,
            ..EmbeddingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmbeddingConfig {
            t_f: 1.5,
            ..EmbeddingConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
