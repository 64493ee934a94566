//! `claimtrust`: runs the trust-scoring pipeline one stage at a time.
//!
//! Every stage reads and writes line-record artifacts in a work directory, so
//! any stage can be re-run on its own.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use claimtrust::claims::{classify_batch, extract_corpus, RelationStats, TemplateSet};
use claimtrust::embed::{
    align_claims, build_index, select_candidate_pairs, CandidatePair, EmbeddingIndex,
};
use claimtrust::eval::{render_table, run_eval, synthetic_cases, EvalCase};
use claimtrust::graph::{build_graph, graph_stats, DocumentGraph};
use claimtrust::ingest::{
    load_claims, load_corpus, load_documents, load_relations, load_scores, read_records,
    render_scores_text, save_claims, save_documents, save_relations, save_scores, write_records,
};
use claimtrust::providers::{HttpProvider, MockProvider, Provider};
use claimtrust::rerank::{embed_documents, query_records, rerank, retrieve, RankMode};
use claimtrust::solver::claimrank;
use claimtrust::{Document, Error, Result, Seed};

use config::{parse_assignment, ProviderKind, Settings};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PROVIDER: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "claimtrust",
    version,
    about = "Claim-level trust scoring for document collections"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Directory holding the pipeline artifacts.
    #[arg(short = 'w', long, global = true, default_value = ".")]
    work_dir: PathBuf,
    /// Settings file of `section.key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
    /// Model backend (provider.kind).
    #[arg(long, global = true)]
    provider: Option<ProviderKind>,
    /// Seed for the offline mock (provider.mock_seed).
    #[arg(long, global = true)]
    mock_seed: Option<u64>,
    /// API base URL (provider.base_url).
    #[arg(long, global = true)]
    api_base: Option<String>,
    /// Chat model name (provider.chat_model).
    #[arg(long, global = true)]
    chat_model: Option<String>,
    /// Embedding model name (provider.embed_model).
    #[arg(long, global = true)]
    embed_model: Option<String>,
    /// Directory of prompt template overrides (templates.dir).
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load the raw true/fake CSV files into documents.jsonl.
    Ingest(IngestArgs),
    /// Extract atomic claims from every document.
    Extract(ExtractArgs),
    /// Embed claims and document bodies.
    Embed(EmbedArgs),
    /// Nominate the most similar cross-document claim pairs.
    Pairs(PairsArgs),
    /// Classify nominated pairs as supporting or refuting.
    Classify(ClassifyArgs),
    /// Aggregate relations into the signed document graph.
    Graph,
    /// Propagate trust over the graph and print the score trace.
    Rank(RankArgs),
    /// Retrieve and re-rank documents for one query.
    Rerank(RerankArgs),
    /// Compare ranking modes on a query set.
    Eval(EvalArgs),
    /// Summarise the artifacts present in the work directory.
    Stats,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// CSV of articles from trusted outlets.
    #[arg(long)]
    true_csv: PathBuf,
    /// CSV of articles of unknown reliability.
    #[arg(long)]
    fake_csv: PathBuf,
    #[arg(long)]
    date_from: Option<String>,
    #[arg(long)]
    date_to: Option<String>,
    #[arg(long)]
    subject: Option<String>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    max_claims: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedTarget {
    Claims,
    Documents,
    All,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long, value_enum, default_value_t = EmbedTarget::All)]
    target: EmbedTarget,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Characters of each body embedded for retrieval.
    #[arg(long)]
    prefix_chars: Option<usize>,
}

#[derive(Args, Debug)]
struct PairsArgs {
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Number of nominated pairs to classify.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    max_reasks: Option<usize>,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Also write the per-iteration deltas to iterations.jsonl.
    #[arg(long)]
    trace_log: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Vanilla,
    Score,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<RankMode> {
        match self {
            ModeArg::Vanilla => vec![RankMode::Vanilla],
            ModeArg::Score => vec![RankMode::Score],
            ModeArg::Both => RankMode::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
struct RerankArgs {
    #[arg(long)]
    query: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Score)]
    mode: ModeArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Line records of {query, expected}.
    #[arg(long, conflicts_with = "synthetic")]
    cases: Option<PathBuf>,
    /// Generate this many cases from the corpus instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    top_n: Option<usize>,
}

/// File names inside the work directory.
struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
    fn documents(&self) -> PathBuf {
        self.path("documents.jsonl")
    }
    fn claims(&self) -> PathBuf {
        self.path("claims.jsonl")
    }
    fn claim_index(&self) -> PathBuf {
        self.path("claims.index")
    }
    fn document_index(&self) -> PathBuf {
        self.path("documents.index")
    }
    fn pairs(&self) -> PathBuf {
        self.path("pairs.jsonl")
    }
    fn relations(&self) -> PathBuf {
        self.path("relations.jsonl")
    }
    fn graph(&self) -> PathBuf {
        self.path("graph.jsonl")
    }
    fn scores(&self) -> PathBuf {
        self.path("scores.jsonl")
    }
}

fn overrides(cli: &Cli) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut push = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            out.push((key.to_string(), v));
        }
    };
    let g = &cli.global;
    push("provider.kind", g.provider.map(|k| k.to_string()));
    push("provider.mock_seed", g.mock_seed.map(|s| s.to_string()));
    push("provider.base_url", g.api_base.clone());
    push("provider.chat_model", g.chat_model.clone());
    push("provider.embed_model", g.embed_model.clone());
    push(
        "templates.dir",
        g.templates.as_ref().map(|p| p.display().to_string()),
    );
    match &cli.command {
        Command::Ingest(a) => {
            push("ingest.date_from", a.date_from.clone());
            push("ingest.date_to", a.date_to.clone());
            push("ingest.subject", a.subject.clone());
        }
        Command::Extract(a) => push("extract.max_claims", a.max_claims.map(|v| v.to_string())),
        Command::Embed(a) => {
            push("embed.batch_size", a.batch_size.map(|v| v.to_string()));
            push("rerank.prefix_chars", a.prefix_chars.map(|v| v.to_string()));
        }
        Command::Pairs(a) => push("pairs.top_k", a.top_k.map(|v| v.to_string())),
        Command::Classify(a) => {
            push("classify.budget", a.budget.map(|v| v.to_string()));
            push("classify.max_reasks", a.max_reasks.map(|v| v.to_string()));
        }
        Command::Rank(a) => {
            push("solver.alpha", a.alpha.map(|v| v.to_string()));
            push("solver.tolerance", a.tolerance.map(|v| v.to_string()));
            push(
                "solver.max_iterations",
                a.max_iterations.map(|v| v.to_string()),
            );
        }
        Command::Rerank(RerankArgs { lambda, top_n, .. })
        | Command::Eval(EvalArgs { lambda, top_n, .. }) => {
            push("rerank.lambda", lambda.map(|v| v.to_string()));
            push("rerank.top_n", top_n.map(|v| v.to_string()));
        }
        Command::Graph | Command::Stats => {}
    }
    // `--set` comes last so an explicit assignment beats a dedicated flag.
    out.extend(g.set.iter().cloned());
    out
}

fn provider(settings: &Settings) -> Result<Box<dyn Provider>> {
    Ok(match settings.provider_kind {
        ProviderKind::Mock => Box::new(MockProvider::heuristic(settings.mock_seed)),
        ProviderKind::Http => Box::new(HttpProvider::new(settings.provider.clone())?),
    })
}

fn templates(settings: &Settings) -> Result<TemplateSet> {
    let set = match &settings.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::bundled(),
    };
    set.validate()?;
    Ok(set)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn run(cli: &Cli) -> Result<()> {
    let settings = Settings::resolve(cli.global.config.as_deref(), &overrides(cli))?;
    let art = Artifacts {
        dir: cli.global.work_dir.clone(),
    };
    ensure_dir(&art.dir)?;
    match &cli.command {
        Command::Ingest(args) => {
            let loaded = load_corpus(&args.true_csv, &args.fake_csv, &settings.filter)?;
            save_documents(&loaded.documents, &art.documents())?;
            write_json(&art.path("ingest.stats.json"), &loaded.skipped)?;
            log::info!(
                "ingested {} documents ({:?})",
                loaded.documents.len(),
                loaded.skipped
            );
        }
        Command::Extract(_) => {
            let documents = load_documents(&art.documents())?;
            let templates = templates(&settings)?;
            let provider = provider(&settings)?;
            let (claims, stats) = extract_corpus(
                &documents,
                &templates.extract,
                provider.as_ref(),
                settings.extract,
            )?;
            save_claims(&claims, &art.claims())?;
            write_json(&art.path("extract.stats.json"), &stats)?;
            log::info!(
                "extracted {} claims from {} documents",
                stats.claims,
                stats.documents
            );
        }
        Command::Embed(args) => {
            let provider = provider(&settings)?;
            if matches!(args.target, EmbedTarget::Claims | EmbedTarget::All) {
                let claims = load_claims(&art.claims())?;
                if claims.is_empty() {
                    return Err(Error::Validation("no claims to embed".into()));
                }
                build_index(&claims, provider.as_ref(), settings.batch_size)?
                    .save(&art.claim_index())?;
            }
            if matches!(args.target, EmbedTarget::Documents | EmbedTarget::All) {
                let documents = load_documents(&art.documents())?;
                if documents.is_empty() {
                    return Err(Error::Validation("no documents to embed".into()));
                }
                embed_documents(
                    &documents,
                    provider.as_ref(),
                    settings.prefix_chars,
                    settings.batch_size,
                )?
                .save(&art.document_index())?;
            }
        }
        Command::Pairs(_) => {
            let index = EmbeddingIndex::load(&art.claim_index())?;
            let claims = align_claims(&index, &load_claims(&art.claims())?)?;
            let pairs = select_candidate_pairs(&index, &claims, settings.top_k)?;
            write_records(&art.pairs(), &pairs)?;
            log::info!("nominated {} pairs", pairs.len());
        }
        Command::Classify(_) => {
            let claims = load_claims(&art.claims())?;
            let pairs: Vec<CandidatePair> = read_records(&art.pairs())?;
            let templates = templates(&settings)?;
            let provider = provider(&settings)?;
            let outcome = classify_batch(
                &pairs,
                &claims,
                &templates.compare,
                provider.as_ref(),
                settings.budget,
                settings.classify,
            )?;
            save_relations(&outcome.relations, &art.relations())?;
            write_json(&art.path("relations.stats.json"), &outcome.stats)?;
            log::info!("{:?}", outcome.stats);
        }
        Command::Graph => {
            let documents = load_documents(&art.documents())?;
            let claims = load_claims(&art.claims())?;
            let relations = load_relations(&art.relations())?;
            let ids: Vec<_> = documents.iter().map(|d| d.id.clone()).collect();
            let (graph, report) = build_graph(&relations, &claims, &ids)?;
            graph.save(&art.graph())?;
            write_json(
                &art.path("graph.stats.json"),
                &GraphSummary {
                    build: report,
                    graph: graph_stats(&graph),
                },
            )?;
        }
        Command::Rank(args) => {
            let documents = load_documents(&art.documents())?;
            let ids = documents.iter().map(|d| d.id.clone()).collect();
            let graph = DocumentGraph::load(&art.graph(), ids)?;
            let (scores, trace) = claimrank(&graph, &documents, &settings.trust)?;
            save_scores(&scores, &art.scores())?;
            let text = render_scores_text(&scores);
            std::fs::write(art.path("scores.txt"), &text).map_err(|source| Error::Io {
                path: art.path("scores.txt"),
                source,
            })?;
            if args.trace_log {
                trace.save(&art.path("iterations.jsonl"))?;
            }
            print!("{text}");
        }
        Command::Rerank(args) => {
            let trust = load_scores(&art.scores())?;
            let index = EmbeddingIndex::load(&art.document_index())?;
            let provider = provider(&settings)?;
            let hits = retrieve(&args.query, &index, provider.as_ref(), settings.eval.top_n)?;
            let mut records = Vec::new();
            for mode in args.mode.modes() {
                let ranked = rerank(&hits, &trust, mode, settings.eval.lambda)?;
                records.extend(query_records(&args.query, &ranked.results, mode));
            }
            write_records(&art.path("results.jsonl"), &records)?;
            for r in &records {
                println!(
                    "{}",
                    serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?
                );
            }
        }
        Command::Eval(args) => {
            let documents = load_documents(&art.documents())?;
            let cases: Vec<EvalCase> = match (&args.cases, args.synthetic) {
                (Some(path), _) => read_records(path)?,
                (None, Some(n)) => synthetic_cases(&documents, n),
                (None, None) => {
                    return Err(Error::Validation(
                        "eval needs --cases FILE or --synthetic N".into(),
                    ))
                }
            };
            let trust = load_scores(&art.scores())?;
            let index = EmbeddingIndex::load(&art.document_index())?;
            let templates = templates(&settings)?;
            let provider = provider(&settings)?;
            let report = run_eval(
                &cases,
                &documents,
                &index,
                &trust,
                &args.mode.modes(),
                provider.as_ref(),
                &templates.answer,
                &templates.judge,
                &settings.eval,
            )?;
            write_records(&art.path("eval.jsonl"), &report.modes)?;
            let table = render_table(&report);
            std::fs::write(art.path("eval.txt"), &table).map_err(|source| Error::Io {
                path: art.path("eval.txt"),
                source,
            })?;
            print!("{table}");
        }
        Command::Stats => {
            let summary = stats(&art)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).map_err(|e| Error::Data(e.to_string()))?
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GraphSummary {
    build: claimtrust::graph::BuildReport,
    graph: claimtrust::graph::GraphStats,
}

#[derive(Serialize, Default)]
struct ArtifactSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    documents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trusted_documents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    claims: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relations: Option<RelationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    graph: Option<claimtrust::graph::GraphStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<ScoreSummary>,
}

#[derive(Serialize)]
struct ScoreSummary {
    iterations: usize,
    converged: bool,
    mean_trusted: Option<f64>,
    mean_unknown: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn stats(art: &Artifacts) -> Result<ArtifactSummary> {
    let mut summary = ArtifactSummary::default();
    let documents: Option<Vec<Document>> = art
        .documents()
        .exists()
        .then(|| load_documents(&art.documents()))
        .transpose()?;
    if let Some(docs) = &documents {
        summary.documents = Some(docs.len());
        summary.trusted_documents = Some(docs.iter().filter(|d| d.seed == Seed::Trusted).count());
    }
    if art.claims().exists() {
        summary.claims = Some(load_claims(&art.claims())?.len());
    }
    if art.pairs().exists() {
        summary.pairs = Some(read_records::<CandidatePair>(&art.pairs())?.len());
    }
    let relation_stats = art.path("relations.stats.json");
    if relation_stats.exists() {
        let text = std::fs::read_to_string(&relation_stats).map_err(|source| Error::Io {
            path: relation_stats.clone(),
            source,
        })?;
        let parsed: RelationStats = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", relation_stats.display())))?;
        summary.relations = Some(parsed);
    }
    if let Some(docs) = &documents {
        if art.graph().exists() {
            let ids = docs.iter().map(|d| d.id.clone()).collect();
            summary.graph = Some(graph_stats(&DocumentGraph::load(&art.graph(), ids)?));
        }
        if art.scores().exists() {
            let scores = load_scores(&art.scores())?;
            let by_seed = |seed: Seed| -> Vec<f64> {
                docs.iter()
                    .filter(|d| d.seed == seed)
                    .filter_map(|d| scores.get(&d.id))
                    .collect()
            };
            summary.scores = Some(ScoreSummary {
                iterations: scores.iterations,
                converged: scores.converged,
                mean_trusted: mean(&by_seed(Seed::Trusted)),
                mean_unknown: mean(&by_seed(Seed::Unknown)),
            });
        }
    }
    Ok(summary)
}

fn exit_code(error: &Error) -> u8 {
    if error.is_provider() {
        EXIT_PROVIDER
    } else {
        EXIT_VALIDATION
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("CLAIMTRUST_LOG")
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
