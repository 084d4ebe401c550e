use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ptalign_cli::{
    cmd_align, cmd_bench, cmd_embed, cmd_unfold, load_model, AlignRequest, CliError, Estimator,
    Model, ModelFormat, SessionConfig, Strategy,
};
use ptalign_core::embedding::{EpsStrategy, NuStrategy};
use ptalign_core::io::parse_log;
use ptalign_core::knn::IndexKind;
use ptalign_core::label::{parse_trace, Activity};

/// Probabilistic trace alignment against stochastic workflow nets.
#[derive(Parser)]
#[command(name = "ptalign", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Model file: a PNML net (.pnml/.xml) or a transition-graph text file.
    #[arg(long)]
    model: PathBuf,
    /// Force the model format instead of inferring it from the extension.
    #[arg(long, value_parser = parse_format)]
    format: Option<ModelFormat>,
    /// Minimum model-trace probability kept by the unfolding.
    #[arg(long, default_value_t = 1e-5)]
    rho: f64,
    /// Maximum model-trace length kept by the unfolding.
    #[arg(long)]
    nmax: Option<usize>,
    /// Similarity constant: s = 1 / (d/c + 1).
    #[arg(long, default_value_t = 5)]
    c: u32,
    /// Neighbourhood size of ranked answers.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Decay factor of the 2-gram embedding.
    #[arg(long, default_value_t = 0.07)]
    lambda: f64,
    /// Relevance damping factor of the embedding.
    #[arg(long = "tf", default_value_t = 0.0001)]
    t_f: f64,
    /// 2-gram sub-embedding strategy (1 or 2).
    #[arg(long, default_value_t = 1)]
    eps: u8,
    /// Label-frequency sub-embedding strategy (1 or 2).
    #[arg(long, default_value_t = 1)]
    nu: u8,
    /// Power-series horizon override (defaults to each trace's length).
    #[arg(long)]
    horizon: Option<usize>,
    /// Index backend: kd, vp or linear.
    #[arg(long, default_value = "kd", value_parser = parse_index)]
    index: IndexKind,
    /// Maximum number of consecutive silent transitions tolerated.
    #[arg(long = "silence-bound", default_value_t = 3)]
    silence_bound: u32,
    /// Weight estimator: asgiven keeps the file's weights, constant makes
    /// conflicts uniform.
    #[arg(long, default_value = "asgiven", value_parser = parse_estimator)]
    estimator: Estimator,
    /// Cap on explored markings when building the reachability graph.
    #[arg(long = "node-budget", default_value_t = 1_000_000)]
    node_budget: usize,
    /// Accept nets that are not 1-bounded.
    #[arg(long = "allow-unsafe")]
    allow_unsafe: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the model traces with probability at least rho.
    Unfold {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rank the model traces against one or more query traces.
    Align {
        #[command(flatten)]
        common: CommonArgs,
        /// Ranking strategy: optimal or approx.
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// A single query trace, whitespace-separated activities.
        #[arg(long)]
        trace: Option<String>,
        /// A log of query traces, one per line.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Rank by descending kernel value instead of ascending distance
        /// (approx only).
        #[arg(long = "by-kernel")]
        by_kernel: bool,
        /// Emit JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Print the embedding table of the unfolded model traces.
    Embed {
        #[command(flatten)]
        common: CommonArgs,
        /// Also embed this query trace as an extra row.
        #[arg(long)]
        trace: Option<String>,
        /// Also embed every trace of this log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compare ranking strategies over a query log: timings and Spearman
    /// correlation per trace-length bucket.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Query log, one trace per line.
        #[arg(long)]
        log: PathBuf,
        /// Comma-separated strategies; correlations are reported against
        /// the first one.
        #[arg(long, default_value = "optimal,approx", value_delimiter = ',', value_parser = parse_strategy)]
        strategies: Vec<Strategy>,
        /// Comma-separated index backends to benchmark.
        #[arg(long, default_value = "vp,kd", value_delimiter = ',', value_parser = parse_index)]
        indexes: Vec<IndexKind>,
    },
}

fn parse_format(s: &str) -> Result<ModelFormat, String> {
    match s {
        "pnml" => Ok(ModelFormat::Pnml),
        "tg" => Ok(ModelFormat::Tg),
        other => Err(format!("unknown format `{other}` (expected pnml|tg)")),
    }
}

fn parse_index(s: &str) -> Result<IndexKind, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    match s {
        "asgiven" => Ok(Estimator::AsGiven),
        "constant" => Ok(Estimator::Constant),
        other => Err(format!(
            "unknown estimator `{other}` (expected asgiven|constant)"
        )),
    }
}

fn session_config(common: &CommonArgs) -> Result<SessionConfig, CliError> {
    let eps = match common.eps {
        1 => EpsStrategy::Eps1,
        2 => EpsStrategy::Eps2,
        other => return Err(CliError::Usage(format!("--eps must be 1 or 2, got {other}"))),
    };
    let nu = match common.nu {
        1 => NuStrategy::Nu1,
        2 => NuStrategy::Nu2,
        other => return Err(CliError::Usage(format!("--nu must be 1 or 2, got {other}"))),
    };
    Ok(SessionConfig {
        format: common.format,
        rho: common.rho,
        n_max: common.nmax,
        c: common.c,
        k: common.k,
        lambda: common.lambda,
        t_f: common.t_f,
        eps,
        nu,
        horizon: common.horizon,
        index: common.index,
        silence_bound: common.silence_bound,
        estimator: common.estimator,
        node_budget: common.node_budget,
        allow_unsafe: common.allow_unsafe,
    })
}

fn gather_queries(
    trace: &Option<String>,
    log: &Option<PathBuf>,
) -> Result<Vec<Vec<Activity>>, CliError> {
    let mut queries = Vec::new();
    if let Some(t) = trace {
        let parsed = parse_trace(t);
        if parsed.is_empty() {
            return Err(CliError::Usage("--trace is empty".into()));
        }
        queries.push(parsed);
    }
    if let Some(path) = log {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        queries.extend(parse_log(&text));
    }
    Ok(queries)
}

fn emit(common: &CommonArgs, payload: &str) -> Result<(), CliError> {
    match &common.out {
        None => {
            print!("{payload}");
            Ok(())
        }
        Some(path) => std::fs::write(path, payload)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Unfold { common } => {
            let cfg = session_config(common)?;
            let model: Model = load_model(&common.model, &cfg)?;
            let csv = cmd_unfold(&model, &cfg)?;
            emit(common, &csv)
        }
        Command::Align {
            common,
            strategy,
            trace,
            log,
            by_kernel,
            json,
        } => {
            let cfg = session_config(common)?;
            if *by_kernel && *strategy != Strategy::Approx {
                return Err(CliError::Usage(
                    "--by-kernel only applies to --strategy approx".into(),
                ));
            }
            let queries = gather_queries(trace, log)?;
            let model = load_model(&common.model, &cfg)?;
            let req = AlignRequest {
                strategy: *strategy,
                queries,
                by_kernel: *by_kernel,
                json: *json,
            };
            let payload = cmd_align(&model, &cfg, &req)?;
            emit(common, &payload)
        }
        Command::Embed { common, trace, log } => {
            let cfg = session_config(common)?;
            let queries = gather_queries(trace, log)?;
            let model = load_model(&common.model, &cfg)?;
            let csv = cmd_embed(&model, &cfg, &queries)?;
            emit(common, &csv)
        }
        Command::Bench {
            common,
            log,
            strategies,
            indexes,
        } => {
            let cfg = session_config(common)?;
            let queries = gather_queries(&None, &Some(log.clone()))?;
            let model = load_model(&common.model, &cfg)?;
            let report = cmd_bench(&model, &cfg, &queries, strategies, indexes)?;
            emit(common, &report.to_csv())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // help and version requests are not usage errors
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
