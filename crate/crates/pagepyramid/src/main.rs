use std::collections::BTreeSet;
use std::error::Error;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pagepyramid::clients::{ClientMode, ServiceClients};
use pagepyramid::config::AppConfig;
use pagepyramid::corpus;
use pagepyramid::eval::{self, EvalContext};
use pagepyramid::indexer;
use pagepyramid::service::{self, AppState};
use pagepyramid::store;
use pagepyramid::synth;
use pagepyramid_core::fusion::{retrieve, FusionConfig, Variant};
use pagepyramid_core::lateint::{
    corpus_scaling_table, format_kb_one_decimal, format_scaled, memory_bytes,
    per_page_budget_table, CostSpec, SCALING_PAGE_COUNTS,
};
use pagepyramid_core::model::IndexKind;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "pagepyramid",
    version,
    about = "Multi-granularity page retrieval over document corpora"
)]
struct Cli {
    /// JSON config file; flags and environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized subcommands such as gen-fixtures.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vector index from a corpus directory.
    Index(IndexArgs),
    /// Run one fused query against a saved index.
    Query(QueryArgs),
    /// Evaluate a benchmark with the standard K sweep and ablations.
    Eval(EvalArgs),
    /// Print index memory budgets and corpus scaling figures.
    Budget(BudgetArgs),
    /// Serve retrieval over HTTP.
    Serve(ServeArgs),
    /// Generate a seeded synthetic corpus with a planted answer.
    GenFixtures(GenFixturesArgs),
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    mode: Option<ClientMode>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    question: String,
    /// Final result count.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated index subset, e.g. "page,fact".
    #[arg(long)]
    indices: Option<String>,
    /// Comma-separated variant numbers out of 0 (original),
    /// 1 (keywords), 2 (synonyms).
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Emit the full fused result as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Also generate an answer from the retrieved pages.
    #[arg(long)]
    answer: bool,
    /// Corpus root backing the index; required with --answer.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// "default" runs the eight-arm ablation grid, "none" only the
    /// configured retrieval setup.
    #[arg(long, default_value = "default")]
    ablations: String,
    /// Grade generated answers (exact match) for cases with a gold
    /// answer.
    #[arg(long)]
    answers: bool,
}

#[derive(Args)]
struct BudgetArgs {
    /// Corpus size for a custom figure; omit for the standard tables.
    #[arg(long)]
    pages: Option<u64>,
    #[arg(long)]
    dim: Option<u64>,
    #[arg(long)]
    vectors: Option<u64>,
    /// Bytes per stored scalar (2 = float16, 4 = float32).
    #[arg(long)]
    bytes: Option<u64>,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    index: PathBuf,
    /// Corpus root; enables the /answer route.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
}

#[derive(Args)]
struct GenFixturesArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    docs: usize,
    #[arg(long, default_value_t = 10)]
    pages_per_doc: usize,
    #[arg(long, default_value_t = 256)]
    dim: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    cfg.apply_process_env()?;
    match cli.command {
        Command::Index(args) => cmd_index(cfg, args),
        Command::Query(args) => cmd_query(cfg, args),
        Command::Eval(args) => cmd_eval(cfg, args),
        Command::Budget(args) => cmd_budget(args),
        Command::Serve(args) => cmd_serve(cfg, args),
        Command::GenFixtures(args) => cmd_gen_fixtures(cli.seed, args),
    }
}

fn cmd_index(mut cfg: AppConfig, args: IndexArgs) -> Result<(), Box<dyn Error>> {
    if let Some(dim) = args.dim {
        cfg.dim = dim;
    }
    if let Some(mode) = args.mode {
        cfg.client_mode = mode;
    }
    if let Some(dir) = args.cache_dir {
        cfg.cache_dir = Some(dir);
    }
    let clients = cfg.build_clients()?;
    let manifests = corpus::ingest(&args.corpus)?;
    let (index, report) = indexer::build_index(&manifests, &clients)?;
    store::save(&index, &args.out)?;
    let mut summary = serde_json::to_value(&report)?;
    summary["out"] = json!(args.out.display().to_string());
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn fusion_from_flags(
    base: &FusionConfig,
    args: &QueryArgs,
) -> Result<FusionConfig, Box<dyn Error>> {
    let mut fusion = base.clone();
    if let Some(k) = args.k {
        fusion.k_final = k;
    }
    if let Some(alpha) = args.alpha {
        fusion.alpha = alpha;
    }
    if let Some(spec) = &args.indices {
        let mut set = BTreeSet::new();
        for token in spec.split(',').filter(|t| !t.trim().is_empty()) {
            let kind = IndexKind::parse(token.trim())
                .ok_or_else(|| format!("unknown index kind '{}'", token.trim()))?;
            set.insert(kind);
        }
        fusion.enabled_indices = set;
    }
    if let Some(spec) = &args.variants {
        let mut set = BTreeSet::new();
        for token in spec.split(',').filter(|t| !t.trim().is_empty()) {
            let n: u8 = token
                .trim()
                .parse()
                .map_err(|_| format!("variant '{}' is not a number", token.trim()))?;
            let v = Variant::from_index(n).ok_or_else(|| format!("variant {n} is out of range"))?;
            set.insert(v);
        }
        fusion.enabled_variants = set;
    }
    Ok(fusion)
}

fn clients_for_index(mut cfg: AppConfig, dim: usize) -> Result<ServiceClients, Box<dyn Error>> {
    cfg.dim = dim;
    Ok(cfg.build_clients()?)
}

fn cmd_query(cfg: AppConfig, args: QueryArgs) -> Result<(), Box<dyn Error>> {
    let index = store::load(&args.index)?;
    let fusion = fusion_from_flags(&cfg.fusion, &args)?;
    let clients = clients_for_index(cfg, index.dim())?;
    let fused = retrieve(
        &args.question,
        &index,
        &fusion,
        &clients.embedder(),
        &clients.query_expander(),
    )?;

    let answer = if args.answer {
        let corpus_root = args
            .corpus
            .as_ref()
            .ok_or("--answer needs --corpus to load page content")?;
        let manifests = corpus::ingest(corpus_root)?;
        let pages: Result<Vec<Vec<u8>>, _> = fused
            .page_list()
            .iter()
            .map(|p| corpus::read_page(&manifests, p))
            .collect();
        let pages = pages?;
        if pages.is_empty() {
            Some("UNKNOWN".to_string())
        } else {
            Some(clients.generate_answer(&args.question, &pages)?)
        }
    } else {
        None
    };

    if args.json {
        let mut body = json!({ "result": fused });
        if let Some(answer) = &answer {
            body["answer"] = json!(answer);
        }
        println!("{}", serde_json::to_string_pretty(&body)?);
    } else {
        println!(
            "{:>4}  {:<20} {:>5}  {:>12}  {:>5}",
            "rank", "doc", "page", "rrf_score", "lists"
        );
        for (i, entry) in fused.entries.iter().enumerate() {
            println!(
                "{:>4}  {:<20} {:>5}  {:>12.6}  {:>5}",
                i + 1,
                entry.page.doc_id(),
                entry.page.page_no(),
                entry.rrf_score,
                entry.contributing_lists
            );
        }
        for warning in &fused.warnings {
            eprintln!("warning: {warning}");
        }
        if let Some(answer) = &answer {
            println!("answer: {answer}");
        }
    }
    Ok(())
}

fn cmd_eval(cfg: AppConfig, args: EvalArgs) -> Result<(), Box<dyn Error>> {
    let index = store::load(&args.index)?;
    let manifests = corpus::ingest(&args.corpus)?;
    let cases = corpus::load_benchmark(&args.benchmark, &manifests)?;
    let base = cfg.fusion.clone();
    let clients = clients_for_index(cfg, index.dim())?;

    let grid = match args.ablations.as_str() {
        "default" => eval::default_ablations(&base),
        "none" => vec![("full".to_string(), base)],
        other => {
            return Err(format!("--ablations must be 'default' or 'none', got '{other}'").into())
        }
    };
    let ctx = EvalContext {
        index: &index,
        manifests: &manifests,
        clients: &clients,
    };
    let reports = eval::run_eval(&ctx, &cases, &grid, args.answers)?;
    let written = eval::write_reports(&reports, &args.out)?;

    for report in &reports {
        let at10 = report
            .k_rows
            .iter()
            .find(|r| r.k == 10)
            .expect("standard sweep includes k=10");
        println!(
            "{:<22} recall@10={:.4} ndcg@10={:.4} mrr={:.4} n={} failures={}",
            report.label,
            at10.recall,
            at10.ndcg,
            report.mrr,
            report.n,
            report.failures.len()
        );
    }
    println!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn cmd_budget(args: BudgetArgs) -> Result<(), Box<dyn Error>> {
    let custom = args.pages.is_some()
        || args.dim.is_some()
        || args.vectors.is_some()
        || args.bytes.is_some();
    if custom {
        let pages = args.pages.ok_or("custom budget figures need --pages")?;
        let spec = CostSpec::new(
            args.vectors.unwrap_or(14),
            args.dim.unwrap_or(1536),
            args.bytes.unwrap_or(2),
        );
        let per_page = memory_bytes(&spec);
        let total = pagepyramid_core::lateint::corpus_memory(&spec, pages);
        println!(
            "{} vectors x {} dims x {} B = {} B per page ({} KB)",
            spec.vectors_per_page,
            spec.dim,
            spec.bytes_per_scalar,
            per_page,
            format_kb_one_decimal(per_page)
        );
        println!("{} pages -> {} B ({})", pages, total, format_scaled(total));
        return Ok(());
    }

    let budget = per_page_budget_table();
    let scaling = corpus_scaling_table(&SCALING_PAGE_COUNTS);
    if args.csv {
        println!("label,vectors_per_page,dim,bytes_per_page,kb_per_page,vs_baseline");
        for row in &budget {
            println!(
                "{},{},{},{},{},{}",
                row.label,
                row.vectors_per_page,
                row.dim,
                row.per_page_bytes,
                format_kb_one_decimal(row.per_page_bytes),
                row.efficiency
            );
        }
        println!();
        print!("label,bytes_per_page");
        for pages in SCALING_PAGE_COUNTS {
            print!(",pages_{pages}");
        }
        println!();
        for row in &scaling {
            print!("{},{}", row.label, row.per_page_bytes);
            for (_, _, display) in &row.cells {
                print!(",{display}");
            }
            println!();
        }
        return Ok(());
    }

    println!("per-page index memory (2-byte scalars)");
    println!(
        "{:<28} {:>8} {:>6} {:>12} {:>10}  {}",
        "configuration", "vectors", "dim", "bytes/page", "KB/page", "vs baseline"
    );
    for row in &budget {
        println!(
            "{:<28} {:>8} {:>6} {:>12} {:>10}  {}",
            row.label,
            row.vectors_per_page,
            row.dim,
            row.per_page_bytes,
            format!("{} KB", format_kb_one_decimal(row.per_page_bytes)),
            row.efficiency
        );
    }
    println!();
    println!("corpus index memory by page count");
    print!("{:<28}", "configuration");
    for pages in SCALING_PAGE_COUNTS {
        print!(" {:>12}", format!("{pages} pages"));
    }
    println!();
    for row in &scaling {
        print!("{:<28}", row.label);
        for (_, _, display) in &row.cells {
            print!(" {display:>12}");
        }
        println!();
    }
    Ok(())
}

fn cmd_serve(cfg: AppConfig, args: ServeArgs) -> Result<(), Box<dyn Error>> {
    let index = store::load(&args.index)?;
    let manifests = match &args.corpus {
        Some(root) => corpus::ingest(root)?,
        None => Vec::new(),
    };
    let bind = args.bind.clone().unwrap_or_else(|| cfg.bind_addr.clone());
    let base = cfg.fusion.clone();
    let clients = clients_for_index(cfg, index.dim())?;
    let state = AppState::new(Some(index), manifests, clients, base);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        let app = service::router(state);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn cmd_gen_fixtures(seed: u64, args: GenFixturesArgs) -> Result<(), Box<dyn Error>> {
    let spec = synth::SynthSpec {
        seed,
        docs: args.docs,
        pages_per_doc: args.pages_per_doc,
        dim: args.dim,
    };
    let out = synth::generate(&spec);
    out.write_tree(&args.out)?;
    let summary = json!({
        "corpus": path_display(&args.out.join(synth::CORPUS_SUBDIR)),
        "benchmark": path_display(&args.out.join(synth::BENCHMARK_FILE)),
        "docs": args.docs,
        "pages": args.docs * args.pages_per_doc,
        "planted_page": out.planted_page.to_string(),
        "planted_token": out.planted_token,
        "seed": seed,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn path_display(path: &Path) -> String {
    path.display().to_string()
}
