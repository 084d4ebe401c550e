//! Session plumbing shared by the `ptalign` binary and its tests: model
//! loading, the four commands, and the benchmark harness.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use ptalign_core::embedding::{
    approx_topk, kernel_distance, Alphabet, EmbedError, EmbeddingConfig, EmbeddingTable,
    EpsStrategy, NuStrategy,
};
use ptalign_core::io::{self, ParseError};
use ptalign_core::knn::IndexKind;
use ptalign_core::label::{format_trace, Activity};
use ptalign_core::net::{AsGivenEstimator, ConstantEstimator, NetError, WeightEstimator};
use ptalign_core::ranking::{optimal_topk, spearman, RankError, Ranking};
use ptalign_core::tg::{tg_from_reachability, TgError, TransitionGraph};
use ptalign_core::unfold::{unfold, ModelTrace, UnfoldError};

/// Errors mapped onto process exit codes: 1 usage, 2 parse, 3 violated
/// model assumption.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Assumption(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Assumption(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Assumption(m) => write!(f, "model assumption violated: {m}"),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::BudgetExceeded { .. } => CliError::Assumption(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<TgError> for CliError {
    fn from(e: TgError) -> Self {
        match e {
            TgError::TauCycle(_) | TgError::NoAcceptingRun => CliError::Assumption(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<UnfoldError> for CliError {
    fn from(e: UnfoldError) -> Self {
        match e {
            UnfoldError::TauCycle(_) | UnfoldError::SilenceExceeded { .. } => {
                CliError::Assumption(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<RankError> for CliError {
    fn from(e: RankError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Tg(t) => t.into(),
            EmbedError::Unfold(u) => u.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Pnml,
    Tg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Keep the weights carried by the model file.
    AsGiven,
    /// Overwrite every weight with 1, making enabled transitions
    /// equiprobable.
    Constant,
}

/// Everything a session needs to know, with the documented defaults.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub format: Option<ModelFormat>,
    pub rho: f64,
    pub n_max: Option<usize>,
    pub c: u32,
    pub k: usize,
    pub lambda: f64,
    pub t_f: f64,
    pub eps: EpsStrategy,
    pub nu: NuStrategy,
    pub horizon: Option<usize>,
    pub index: IndexKind,
    pub silence_bound: u32,
    pub estimator: Estimator,
    pub node_budget: usize,
    pub allow_unsafe: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            format: None,
            rho: 1e-5,
            n_max: None,
            c: 5,
            k: 20,
            lambda: 0.07,
            t_f: 0.0001,
            eps: EpsStrategy::Eps1,
            nu: NuStrategy::Nu1,
            horizon: None,
            index: IndexKind::Kd,
            silence_bound: 3,
            estimator: Estimator::AsGiven,
            node_budget: 1_000_000,
            allow_unsafe: false,
        }
    }
}

impl SessionConfig {
    pub fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            lambda: self.lambda,
            t_f: self.t_f,
            eps: self.eps,
            nu: self.nu,
            horizon: self.horizon,
            trace_rho: self.rho,
            trace_n_max: self.n_max,
        }
    }
}

/// A loaded model: the tau-closed transition graph ready for unfolding,
/// projection and alignment.
pub struct Model {
    pub graph: TransitionGraph,
}

/// Loads a model file, applying the estimator, the safety and silence
/// checks, the label shift and the tau-closure.
pub fn load_model(path: &Path, cfg: &SessionConfig) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let format = cfg.format.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pnml") | Some("xml") => ModelFormat::Pnml,
            _ => ModelFormat::Tg,
        }
    });
    let raw = match format {
        ModelFormat::Pnml => {
            let mut net = io::parse_pnml(&text)?;
            let estimator: &dyn WeightEstimator = match cfg.estimator {
                Estimator::AsGiven => &AsGivenEstimator,
                Estimator::Constant => &ConstantEstimator,
            };
            net = net.with_estimated_weights(estimator)?;
            let rg = net.reachability_graph(cfg.node_budget)?;
            if !cfg.allow_unsafe && !rg.is_safe() {
                return Err(CliError::Assumption(
                    "net is not safe (a reachable marking holds more than one token on a place); \
                     pass --allow-unsafe to lift the check"
                        .into(),
                ));
            }
            if !rg.has_bounded_silence(&net, cfg.silence_bound) {
                return Err(CliError::Assumption(format!(
                    "silence is not bounded by {} consecutive tau transitions",
                    cfg.silence_bound
                )));
            }
            tg_from_reachability(&net, &rg)?
        }
        ModelFormat::Tg => io::parse_tg(&text)?,
    };
    let graph = raw.tau_closure()?;
    Ok(Model { graph })
}

/// `unfold`: the model traces above the threshold, as CSV.
pub fn cmd_unfold(model: &Model, cfg: &SessionConfig) -> Result<String, CliError> {
    let traces = unfold(&model.graph, cfg.rho, cfg.n_max)?;
    let mut out = String::from("trace,probability\n");
    for t in &traces {
        out.push_str(&format!(
            "{},{}\n",
            io::csv_field(&t.rendered()),
            io::fmt_f64(t.probability)
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Optimal,
    Approx,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Optimal => "optimal",
            Strategy::Approx => "approx",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(Strategy::Optimal),
            "approx" => Ok(Strategy::Approx),
            other => Err(format!("unknown strategy `{other}` (expected optimal|approx)")),
        }
    }
}

pub struct AlignRequest {
    pub strategy: Strategy,
    pub queries: Vec<Vec<Activity>>,
    pub by_kernel: bool,
    pub json: bool,
}

/// `align`: rank the model traces against each query.
pub fn cmd_align(model: &Model, cfg: &SessionConfig, req: &AlignRequest) -> Result<String, CliError> {
    if req.queries.is_empty() {
        return Err(CliError::Usage("no query traces given".into()));
    }
    if req.queries.iter().any(|q| q.is_empty()) {
        return Err(CliError::Usage("empty query trace".into()));
    }
    let traces = unfold(&model.graph, cfg.rho, cfg.n_max)?;
    if traces.is_empty() {
        return Err(CliError::Usage(format!(
            "no model trace has probability >= {}",
            cfg.rho
        )));
    }
    match req.strategy {
        Strategy::Optimal => {
            let rankings: Vec<Ranking> = req
                .queries
                .iter()
                .map(|q| optimal_topk(&traces, q, cfg.k, cfg.c, cfg.index))
                .collect::<Result<_, _>>()?;
            if req.json {
                Ok(optimal_json(&rankings))
            } else {
                Ok(optimal_csv(&rankings, req.queries.len() > 1))
            }
        }
        Strategy::Approx => {
            let alphabet =
                Alphabet::for_session(&model.graph, req.queries.iter().map(|q| q.as_slice()));
            let table = EmbeddingTable::build(
                &model.graph,
                traces,
                cfg.embedding_config(),
                alphabet,
            )?;
            let index = table.index(cfg.index)?;
            let mut rankings = Vec::new();
            for q in &req.queries {
                rankings.push(approx_topk(&table, &index, q, cfg.k, req.by_kernel)?);
            }
            if req.json {
                Ok(approx_json(&rankings))
            } else {
                Ok(approx_csv(&rankings, req.queries.len() > 1))
            }
        }
    }
}

fn optimal_csv(rankings: &[Ranking], with_query: bool) -> String {
    let mut out = String::new();
    if with_query {
        out.push_str("query,");
    }
    out.push_str("rank,trace,probability,distance,similarity,score\n");
    for r in rankings {
        for (i, e) in r.entries.iter().enumerate() {
            if with_query {
                out.push_str(&io::csv_field(&format_trace(&r.query)));
                out.push(',');
            }
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                io::csv_field(&e.trace.rendered()),
                io::fmt_f64(e.trace.probability),
                e.distance,
                io::fmt_f64(e.similarity),
                io::fmt_f64(e.score),
            ));
        }
    }
    out
}

fn optimal_json(rankings: &[Ranking]) -> String {
    let items: Vec<serde_json::Value> = rankings
        .iter()
        .map(|r| {
            serde_json::json!({
                "query": r.query.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                "c": r.c,
                "truncated": r.truncated,
                "entries": r.entries.iter().enumerate().map(|(i, e)| {
                    serde_json::json!({
                        "rank": i + 1,
                        "trace": e.trace.labels.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                        "probability": e.trace.probability,
                        "distance": e.distance,
                        "similarity": e.similarity,
                        "score": e.score,
                    })
                }).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&items).expect("serializable");
    s.push('\n');
    s
}

fn approx_csv(rankings: &[ptalign_core::embedding::ApproxRanking], with_query: bool) -> String {
    let mut out = String::new();
    if with_query {
        out.push_str("query,");
    }
    out.push_str("rank,trace,probability,distance,kernel\n");
    for r in rankings {
        for (i, e) in r.entries.iter().enumerate() {
            if with_query {
                out.push_str(&io::csv_field(&format_trace(&r.query)));
                out.push(',');
            }
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                io::csv_field(&e.trace.rendered()),
                io::fmt_f64(e.trace.probability),
                io::fmt_f64(e.distance),
                io::fmt_f64(e.kernel),
            ));
        }
    }
    out
}

fn approx_json(rankings: &[ptalign_core::embedding::ApproxRanking]) -> String {
    let items: Vec<serde_json::Value> = rankings
        .iter()
        .map(|r| {
            serde_json::json!({
                "query": r.query.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                "by_kernel": r.by_kernel,
                "truncated": r.truncated,
                "entries": r.entries.iter().enumerate().map(|(i, e)| {
                    serde_json::json!({
                        "rank": i + 1,
                        "trace": e.trace.labels.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                        "probability": e.trace.probability,
                        "distance": e.distance,
                        "kernel": e.kernel,
                    })
                }).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&items).expect("serializable");
    s.push('\n');
    s
}

/// `embed`: the embedding table of the unfolded model traces, with the
/// query traces appended as extra rows.
pub fn cmd_embed(
    model: &Model,
    cfg: &SessionConfig,
    queries: &[Vec<Activity>],
) -> Result<String, CliError> {
    let traces = unfold(&model.graph, cfg.rho, cfg.n_max)?;
    if traces.is_empty() {
        return Err(CliError::Usage(format!(
            "no model trace has probability >= {}",
            cfg.rho
        )));
    }
    let alphabet = Alphabet::for_session(&model.graph, queries.iter().map(|q| q.as_slice()));
    let table = EmbeddingTable::build(&model.graph, traces, cfg.embedding_config(), alphabet)?;
    let mut out = io::embedding_table_csv(&table);
    for q in queries {
        let v = table.embed_query(q)?;
        out.push_str(&io::csv_field(&format_trace(q)));
        for x in v.flat() {
            out.push(',');
            out.push_str(&io::fmt_f64(x));
        }
        out.push('\n');
    }
    Ok(out)
}

/// One bucket row of a benchmark report.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub length: usize,
    pub strategy: &'static str,
    pub index: IndexKind,
    pub queries: usize,
    /// Mean per-query wall time: preparation plus search.
    pub mean_total_s: f64,
    /// Optimal: per-query indexing (scoring, transform, tree build).
    /// Approx: per-query embedding of the trace to align.
    pub mean_stage_s: f64,
    pub mean_search_s: f64,
    /// Mean Spearman correlation of the full ranking against the first
    /// strategy in the list.
    pub mean_spearman_vs_first: f64,
}

pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "length,strategy,index,queries,mean_total_s,mean_stage_s,mean_search_s,mean_spearman_vs_first\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.length,
                r.strategy,
                r.index.name(),
                r.queries,
                io::fmt_f64(r.mean_total_s),
                io::fmt_f64(r.mean_stage_s),
                io::fmt_f64(r.mean_search_s),
                io::fmt_f64(r.mean_spearman_vs_first),
            ));
        }
        out
    }
}

struct QueryMeasure {
    length: usize,
    stage_s: f64,
    search_s: f64,
    /// Ranking scores over the whole trace set (greater means better).
    scores: Vec<f64>,
}

/// Runs every (strategy, index) combination over the query log.
///
/// Timing follows the accounting rule of the report: the optimal strategy
/// pays per query for scoring all traces, transforming them and building a
/// fresh index; the approximate strategy reuses one prebuilt index and pays
/// per query only for embedding the trace and searching. Spearman
/// correlations compare full rankings against the first strategy listed.
pub fn cmd_bench(
    model: &Model,
    cfg: &SessionConfig,
    queries: &[Vec<Activity>],
    strategies: &[Strategy],
    indexes: &[IndexKind],
) -> Result<BenchReport, CliError> {
    if queries.is_empty() {
        return Err(CliError::Usage("benchmark needs a non-empty query log".into()));
    }
    if strategies.is_empty() {
        return Err(CliError::Usage("no strategies selected".into()));
    }
    let traces = unfold(&model.graph, cfg.rho, cfg.n_max)?;
    if traces.is_empty() {
        return Err(CliError::Usage(format!(
            "no model trace has probability >= {}",
            cfg.rho
        )));
    }

    // Approximate-strategy table is built once per session.
    let table = if strategies.contains(&Strategy::Approx) {
        let alphabet = Alphabet::for_session(&model.graph, queries.iter().map(|q| q.as_slice()));
        Some(EmbeddingTable::build(
            &model.graph,
            traces.clone(),
            cfg.embedding_config(),
            alphabet,
        )?)
    } else {
        None
    };

    let mut measures: Vec<(usize, &'static str, IndexKind, Vec<QueryMeasure>)> = Vec::new();
    for (si, strategy) in strategies.iter().enumerate() {
        for &index in indexes {
            let per_query = match strategy {
                Strategy::Optimal => bench_optimal(&traces, queries, cfg, index)?,
                Strategy::Approx => {
                    bench_approx(table.as_ref().expect("table built"), queries, cfg, index)?
                }
            };
            measures.push((si, strategy.name(), index, per_query));
        }
    }

    // Spearman of each run against the first strategy (first index listed).
    let baseline: Vec<Vec<f64>> = measures
        .iter()
        .find(|(si, _, _, _)| *si == 0)
        .map(|(_, _, _, ms)| ms.iter().map(|m| m.scores.clone()).collect())
        .unwrap_or_default();

    let mut rows = Vec::new();
    for (_, strategy, index, per_query) in &measures {
        let mut lengths: Vec<usize> = per_query.iter().map(|m| m.length).collect();
        lengths.sort_unstable();
        lengths.dedup();
        for len in lengths {
            let bucket: Vec<(usize, &QueryMeasure)> = per_query
                .iter()
                .enumerate()
                .filter(|(_, m)| m.length == len)
                .collect();
            let n = bucket.len() as f64;
            let mean = |f: &dyn Fn(&QueryMeasure) -> f64| -> f64 {
                bucket.iter().map(|(_, m)| f(m)).sum::<f64>() / n
            };
            let mean_stage = mean(&|m| m.stage_s);
            let mean_search = mean(&|m| m.search_s);
            let mean_rho = bucket
                .iter()
                .map(|(qi, m)| spearman(&m.scores, &baseline[*qi]))
                .sum::<f64>()
                / n;
            rows.push(BenchRow {
                length: len,
                strategy,
                index: *index,
                queries: bucket.len(),
                mean_total_s: mean_stage + mean_search,
                mean_stage_s: mean_stage,
                mean_search_s: mean_search,
                mean_spearman_vs_first: mean_rho,
            });
        }
    }
    Ok(BenchReport { rows })
}

fn bench_optimal(
    traces: &[ModelTrace],
    queries: &[Vec<Activity>],
    cfg: &SessionConfig,
    index: IndexKind,
) -> Result<Vec<QueryMeasure>, CliError> {
    use ptalign_core::knn::{KnnIndex, Point};
    use ptalign_core::ranking::score_all;
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let t0 = Instant::now();
        let scored = score_all(q, traces, cfg.c)?;
        let points: Vec<Point> = scored
            .iter()
            .enumerate()
            .map(|(id, row)| Point {
                id,
                coords: row.point.to_vec(),
            })
            .collect();
        let knn = KnnIndex::build(points, index).map_err(RankError::from)?;
        let stage_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let _hits = knn
            .query(&[0.0, 0.0], cfg.k.min(traces.len()))
            .map_err(RankError::from)?;
        let search_s = t1.elapsed().as_secs_f64();
        out.push(QueryMeasure {
            length: q.len(),
            stage_s,
            search_s,
            scores: scored.iter().map(|r| r.score).collect(),
        });
    }
    Ok(out)
}

fn bench_approx(
    table: &EmbeddingTable,
    queries: &[Vec<Activity>],
    cfg: &SessionConfig,
    index: IndexKind,
) -> Result<Vec<QueryMeasure>, CliError> {
    let knn = table.index(index)?;
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let t0 = Instant::now();
        let embedded = table.embed_query(q)?;
        let stage_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let _hits = knn
            .query(&embedded.flat(), cfg.k.min(table.len()))
            .map_err(EmbedError::from)?;
        let search_s = t1.elapsed().as_secs_f64();
        // Full ranking for the correlation measure, outside the timers:
        // ascending distance, encoded as descending negated distance.
        let scores: Vec<f64> = table
            .vectors
            .iter()
            .map(|v| -kernel_distance(&embedded, v))
            .collect();
        out.push(QueryMeasure {
            length: q.len(),
            stage_s,
            search_s,
            scores,
        });
    }
    Ok(out)
}
