//! `icr` command-line interface.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 provider error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use icr_core::config::{load_config, Config};
use icr_core::corpus::{load_collection, load_cqr_dataset, load_qrels, read_collection, CollectionFormat, CqrSample};
use icr_core::crdg::{build_crdg_dataset, load_crdg_records};
use icr_core::dense::{DenseIndex, DenseRetriever};
use icr_core::eval::{delta_f_profile, empty_paths, evaluate_run, f_score, gsr, lsr, FMode, Retrievers};
use icr_core::fusion::{fuse, FusionConfig, FusionMode};
use icr_core::gen::Generator;
use icr_core::manifest::{write_manifest, Invocation};
use icr_core::pipeline::{
    infer_batch, load_results, measure_latency, save_results, save_run_file, GenerationMode, RetrieverChoice,
};
use icr_core::prefdata::build_pref_dataset;
use icr_core::ranking::{load_run, save_run, RankedList, Retriever};
use icr_core::sftdata::emit_sft_dataset;
use icr_core::sparse::{Bm25Params, SparseIndex};
use icr_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "icr",
    version,
    about = "Iterative clarification-rewriting for conversational retrieval"
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a BM25 index from a passage collection.
    BuildIndex(BuildIndexArgs),
    /// Embed a passage collection into an exact inner-product index.
    EmbedIndex(EmbedIndexArgs),
    /// Generate clarification-rewriting trajectories (D_cr).
    Crdg(CrdgArgs),
    /// Build preference pairs from trajectories (D_pref).
    Prefdata(PrefdataArgs),
    /// Emit span-labeled SFT records with per-epoch loss masks.
    Sftdata(SftdataArgs),
    /// Generate trajectories, retrieve per rewrite and fuse.
    Infer(InferArgs),
    /// Fuse TREC runs (in iteration order) or stored per-query runs.
    Fuse(FuseArgs),
    /// Score a TREC run against qrels.
    Evaluate(EvaluateArgs),
    /// Path diagnostics: LSR, GSR and per-step F change.
    Analyze(AnalyzeArgs),
    /// Time trajectory generation per sample.
    Latency(LatencyArgs),
}

#[derive(Args)]
struct CollectionArgs {
    /// Passage collection (TSV `id<TAB>text` or JSONL `{"id","text"}`).
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Collection format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<CollectionFormat>,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[command(flatten)]
    collection: CollectionArgs,
    /// BM25 profile: topiocqa (k1=0.9, b=0.4) or qrecc (k1=0.82, b=0.68).
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Index output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedIndexArgs {
    #[command(flatten)]
    collection: CollectionArgs,
    /// Passages per embedding request.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Index output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    /// BM25 index (from `build-index`).
    #[arg(long)]
    sparse_index: Option<PathBuf>,
    /// Dense index (from `embed-index`); queries use the configured embedder.
    #[arg(long)]
    dense_index: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Scripted mock responses (JSONL); overrides `generator.script`.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Run seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CrdgArgs {
    /// CQR samples (JSONL).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    indexes: IndexArgs,
    #[command(flatten)]
    gen: GenArgs,
    /// Retrievers contributing to F: both, sparse_only or dense_only.
    #[arg(long)]
    f_mode: Option<FMode>,
    /// Samples generated concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// D_cr output (JSONL). An existing file with a `.done` log is resumed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrefdataArgs {
    /// D_cr input (JSONL).
    #[arg(long)]
    crdg: PathBuf,
    #[command(flatten)]
    indexes: IndexArgs,
    #[command(flatten)]
    gen: GenArgs,
    /// Append 1 to 4 redundant steps for overthinking pairs instead of exactly 1.
    #[arg(long)]
    multi: bool,
    /// D_pref output (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SftdataArgs {
    /// D_cr input (JSONL).
    #[arg(long)]
    crdg: PathBuf,
    /// SFT output (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FusionArgs {
    /// prrf, rrf or final_only.
    #[arg(long)]
    mode: Option<FusionMode>,
    /// Rank offset k.
    #[arg(long)]
    k: Option<f64>,
    /// Fused list depth.
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    /// CQR samples (JSONL).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    indexes: IndexArgs,
    #[command(flatten)]
    gen: GenArgs,
    #[command(flatten)]
    fusion: FusionArgs,
    /// sparse, dense or both-report.
    #[arg(long)]
    retriever: Option<RetrieverChoice>,
    /// one_shot or stepwise.
    #[arg(long)]
    generation: Option<GenerationMode>,
    /// Per-query retrieval depth K.
    #[arg(long)]
    retrieval_k: Option<usize>,
    /// Output directory: `results.jsonl` plus `run.<retriever>.trec`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// TREC runs in iteration order (repeatable).
    #[arg(long = "run", conflicts_with = "results")]
    runs: Vec<PathBuf>,
    /// Inference results whose stored per-query runs are re-fused.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Retriever to take from `--results`.
    #[arg(long, default_value = "sparse")]
    retriever: String,
    #[command(flatten)]
    fusion: FusionArgs,
    /// Fused TREC run output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// TREC run.
    #[arg(long)]
    run: PathBuf,
    /// TREC qrels.
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// D_cr input: paths are the stored F values.
    #[arg(long, conflicts_with = "results")]
    crdg: Option<PathBuf>,
    /// Inference results: F recomputed for the original query and each rewrite.
    #[arg(long)]
    results: Option<PathBuf>,
    /// CQR samples matching `--results`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    indexes: IndexArgs,
    #[arg(long)]
    f_mode: Option<FMode>,
    /// Trajectory lengths for the per-step F change profile.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    lengths: Vec<usize>,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LatencyArgs {
    /// CQR samples (JSONL).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
    /// one_shot or stepwise.
    #[arg(long)]
    generation: Option<GenerationMode>,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::MissingRequired(key.into()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

struct Loaded {
    sparse: Option<SparseIndex>,
    dense: Option<DenseRetriever>,
    inputs: Vec<PathBuf>,
}

impl Loaded {
    fn retrievers(&self) -> Retrievers<'_> {
        Retrievers::new(
            self.sparse.as_ref().map(|r| r as &dyn Retriever),
            self.dense.as_ref().map(|r| r as &dyn Retriever),
        )
    }
}

/// Loads the indexes named on the command line or in the config.
fn load_indexes(args: &IndexArgs, cfg: &Config) -> Result<Loaded> {
    let mut inputs = Vec::new();
    let sparse = match args.sparse_index.clone().or_else(|| cfg.data.sparse_index.clone()) {
        Some(p) => {
            let idx = SparseIndex::load(&p)?;
            inputs.push(p);
            Some(idx)
        }
        None => None,
    };
    let dense = match args.dense_index.clone().or_else(|| cfg.data.dense_index.clone()) {
        Some(p) => {
            let idx = DenseIndex::load(&p)?;
            inputs.push(p);
            Some(DenseRetriever::new(idx, cfg.embedder.build()?)?)
        }
        None => None,
    };
    Ok(Loaded { sparse, dense, inputs })
}

fn load_generator(args: &GenArgs, cfg: &Config, inv: &mut Invocation) -> Result<Box<dyn Generator>> {
    let mut g = cfg.generator.clone();
    if let Some(s) = &args.script {
        g.script = Some(s.clone());
    }
    if let Some(s) = &g.script {
        inv.input(s);
    }
    g.build()
}

fn apply_fusion(args: &FusionArgs, base: FusionConfig) -> Result<FusionConfig> {
    let mut f = base;
    if let Some(m) = args.mode {
        f.mode = m;
    }
    if let Some(k) = args.k {
        f.k = k;
    }
    if let Some(d) = args.depth {
        f.depth = d;
    }
    f.validate()?;
    Ok(f)
}

fn config_snapshot(cfg: &Config) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn start(name: &str, cfg: &Config, seed: Option<u64>) -> Invocation {
    Invocation::start(name, std::env::args().collect(), config_snapshot(cfg), seed)
}

fn finish(inv: &Invocation) -> Result<()> {
    if let Some(p) = write_manifest(inv)? {
        log::info!("manifest written to {}", p.display());
    }
    Ok(())
}

fn collection_path(args: &CollectionArgs, cfg: &Config) -> Result<(PathBuf, CollectionFormat)> {
    let path = required(args.collection.clone(), &cfg.data.collection, "data.collection")?;
    let format = args
        .format
        .or(cfg.data.collection_format)
        .unwrap_or_else(|| CollectionFormat::from_path(&path));
    Ok((path, format))
}

fn build_index(args: BuildIndexArgs, cfg: Config) -> Result<()> {
    let (path, format) = collection_path(&args.collection, &cfg)?;
    let mut params = match &args.profile {
        Some(p) => {
            Bm25Params::profile(p).ok_or_else(|| Error::InvalidParameter(format!("unknown BM25 profile `{p}`")))?
        }
        None => cfg.bm25,
    };
    if let Some(k1) = args.k1 {
        params.k1 = k1;
    }
    if let Some(b) = args.b {
        params.b = b;
    }
    params.validate()?;
    let mut inv = start("build-index", &cfg, None);
    inv.input(&path);
    let index = SparseIndex::build_from_stream(load_collection(&path, format)?, params)?;
    ensure_parent(&args.out)?;
    index.save(&args.out)?;
    eprintln!(
        "indexed {} passages, {} terms, k1={} b={}",
        index.doc_count(),
        index.vocabulary_size(),
        params.k1,
        params.b
    );
    inv.output(&args.out);
    finish(&inv)
}

fn embed_index(args: EmbedIndexArgs, cfg: Config) -> Result<()> {
    let (path, format) = collection_path(&args.collection, &cfg)?;
    let provider = cfg.embedder.build()?;
    let mut inv = start("embed-index", &cfg, None);
    inv.input(&path);
    let batch = args.batch_size.unwrap_or(cfg.embedder.batch_size);
    let index = DenseIndex::build(read_collection(&path, format)?, provider.as_ref(), batch)?;
    ensure_parent(&args.out)?;
    index.save(&args.out)?;
    eprintln!(
        "embedded {} passages with {} (dim {})",
        index.doc_count(),
        index.provider_name(),
        index.dim()
    );
    inv.output(&args.out);
    finish(&inv)
}

fn crdg(args: CrdgArgs, mut cfg: Config) -> Result<()> {
    if let Some(m) = args.f_mode {
        cfg.crdg.f_mode = m;
    }
    cfg.crdg.validate()?;
    let dataset = required(args.dataset, &cfg.data.dataset, "data.dataset")?;
    let mut inv = start("crdg", &cfg, Some(args.gen.seed));
    inv.input(&dataset);
    let samples = load_cqr_dataset(&dataset)?;
    let loaded = load_indexes(&args.indexes, &cfg)?;
    loaded.inputs.iter().for_each(|p| {
        inv.input(p);
    });
    let client = load_generator(&args.gen, &cfg, &mut inv)?;
    ensure_parent(&args.out)?;
    let summary = build_crdg_dataset(
        &samples,
        client.as_ref(),
        &loaded.retrievers(),
        &cfg.crdg,
        args.gen.seed,
        &args.out,
        args.workers.unwrap_or(cfg.workers),
    )?;
    print_json(&summary)?;
    inv.output(&args.out);
    finish(&inv)
}

fn prefdata(args: PrefdataArgs, mut cfg: Config) -> Result<()> {
    cfg.prefdata_multi |= args.multi;
    let mut inv = start("prefdata", &cfg, Some(args.gen.seed));
    inv.input(&args.crdg);
    let records = load_crdg_records(&args.crdg)?;
    let loaded = load_indexes(&args.indexes, &cfg)?;
    loaded.inputs.iter().for_each(|p| {
        inv.input(p);
    });
    let client = load_generator(&args.gen, &cfg, &mut inv)?;
    ensure_parent(&args.out)?;
    let summary = build_pref_dataset(
        &records,
        client.as_ref(),
        &loaded.retrievers(),
        &cfg.ot_config(),
        args.gen.seed,
        &args.out,
    )?;
    print_json(&summary)?;
    inv.output(&args.out);
    finish(&inv)
}

fn sftdata(args: SftdataArgs, cfg: Config) -> Result<()> {
    let mut inv = start("sftdata", &cfg, None);
    inv.input(&args.crdg);
    let records = load_crdg_records(&args.crdg)?;
    ensure_parent(&args.out)?;
    let summary = emit_sft_dataset(&records, &args.out)?;
    print_json(&summary)?;
    inv.output(&args.out);
    finish(&inv)
}

fn infer(args: InferArgs, mut cfg: Config) -> Result<()> {
    let inf = &mut cfg.inference;
    inf.fusion = apply_fusion(&args.fusion, inf.fusion)?;
    if let Some(r) = args.retriever {
        inf.retriever = r;
    }
    if let Some(g) = args.generation {
        inf.generation = g;
    }
    if let Some(k) = args.retrieval_k {
        inf.retrieval_k = k;
    }
    let dataset = required(args.dataset, &cfg.data.dataset, "data.dataset")?;
    let mut inv = start("infer", &cfg, Some(args.gen.seed));
    inv.input(&dataset);
    let samples = load_cqr_dataset(&dataset)?;
    let loaded = load_indexes(&args.indexes, &cfg)?;
    loaded.inputs.iter().for_each(|p| {
        inv.input(p);
    });
    let mut active: Vec<&dyn Retriever> = Vec::new();
    let want_sparse = matches!(
        cfg.inference.retriever,
        RetrieverChoice::Sparse | RetrieverChoice::BothReport
    );
    let want_dense = matches!(
        cfg.inference.retriever,
        RetrieverChoice::Dense | RetrieverChoice::BothReport
    );
    if want_sparse {
        active.push(
            loaded
                .sparse
                .as_ref()
                .ok_or_else(|| Error::MissingRequired("data.sparse_index".into()))?,
        );
    }
    if want_dense {
        active.push(
            loaded
                .dense
                .as_ref()
                .ok_or_else(|| Error::MissingRequired("data.dense_index".into()))?,
        );
    }
    let client = load_generator(&args.gen, &cfg, &mut inv)?;
    let results = infer_batch(&samples, client.as_ref(), &active, &cfg.inference, args.gen.seed)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let results_path = args.out.join("results.jsonl");
    save_results(&results_path, &results)?;
    inv.output(&results_path);
    for r in &active {
        let run_path = args.out.join(format!("run.{}.trec", r.name()));
        let empty = save_run_file(&run_path, &results, r.name())?;
        if empty > 0 {
            log::warn!("{empty} samples contributed no lines to {}", run_path.display());
        }
        inv.output(&run_path);
    }
    let fallback = results.iter().filter(|r| r.fallback).count();
    let errors = results.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "inferred {} samples ({fallback} fallback, {errors} generator errors)",
        results.len()
    );
    finish(&inv)
}

fn fuse_cmd(args: FuseArgs, cfg: Config) -> Result<()> {
    let fusion = apply_fusion(&args.fusion, cfg.inference.fusion)?;
    let mut inv = start("fuse", &cfg, None);
    let fused: Vec<RankedList> = if let Some(results) = &args.results {
        inv.input(results);
        load_results(results)?
            .iter()
            .filter_map(|r| r.outcome(&args.retriever).map(|o| (r, o)))
            .map(|(r, o)| {
                o.refuse(&fusion).map(|mut l| {
                    l.query_tag = r.sample_id.clone();
                    l
                })
            })
            .collect::<Result<_>>()?
    } else {
        if args.runs.is_empty() {
            return Err(Error::InvalidParameter("give --run (repeatable) or --results".into()));
        }
        let runs = args
            .runs
            .iter()
            .map(|p| {
                inv.input(p);
                load_run(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ids: Vec<&str> = Vec::new();
        let mut seen = BTreeSet::new();
        for l in runs.iter().flatten() {
            if seen.insert(l.query_tag.as_str()) {
                ids.push(l.query_tag.as_str());
            }
        }
        ids.iter()
            .map(|id| {
                let lists: Vec<RankedList> = runs
                    .iter()
                    .map(|run| {
                        run.iter()
                            .find(|l| l.query_tag == *id)
                            .cloned()
                            .unwrap_or_else(|| RankedList {
                                query_tag: id.to_string(),
                                entries: Vec::new(),
                            })
                    })
                    .collect();
                fuse(&lists, &fusion)
            })
            .collect::<Result<_>>()?
    };
    ensure_parent(&args.out)?;
    save_run(&args.out, &fused, &format!("ICR-{}", fusion.mode))?;
    inv.output(&args.out);
    finish(&inv)
}

fn evaluate(args: EvaluateArgs, cfg: Config) -> Result<()> {
    let qrels_path = required(args.qrels, &cfg.data.qrels, "data.qrels")?;
    let runs = load_run(&args.run)?;
    let qrels = load_qrels(&qrels_path)?;
    let report = evaluate_run(&runs, &qrels);
    let a = &report.aggregate;
    println!(
        "samples={} mrr={:.4} ndcg@3={:.4} recall@10={:.4} recall@100={:.4} degenerate={}",
        report.samples, a.mrr, a.ndcg3, a.recall10, a.recall100, report.degenerate_samples
    );
    if !report.unjudged_runs.is_empty() {
        log::warn!("{} run queries have no judgments", report.unjudged_runs.len());
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        let mut inv = start("evaluate", &cfg, None);
        inv.input(&args.run).input(&qrels_path).output(out);
        finish(&inv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    paths: usize,
    empty_paths: usize,
    lsr: f64,
    gsr: f64,
    delta_f: std::collections::BTreeMap<usize, Vec<f64>>,
}

fn analyze(args: AnalyzeArgs, cfg: Config) -> Result<()> {
    let mut inv = start("analyze", &cfg, None);
    let paths: Vec<Vec<f64>> = if let Some(crdg) = &args.crdg {
        inv.input(crdg);
        load_crdg_records(crdg)?
            .iter()
            .filter_map(|r| r.trajectory())
            .map(|t| t.f_path())
            .collect()
    } else if let Some(results) = &args.results {
        let dataset = required(args.dataset.clone(), &cfg.data.dataset, "data.dataset")?;
        inv.input(results).input(&dataset);
        let samples: std::collections::BTreeMap<String, CqrSample> = load_cqr_dataset(&dataset)?
            .into_iter()
            .map(|s| (s.sample_id.clone(), s))
            .collect();
        let loaded = load_indexes(&args.indexes, &cfg)?;
        let retrievers = loaded.retrievers();
        let mode = args.f_mode.unwrap_or(cfg.crdg.f_mode);
        load_results(results)?
            .iter()
            .filter_map(|r| samples.get(&r.sample_id).map(|s| (r, s)))
            .map(|(r, s)| {
                std::iter::once(&s.query)
                    .chain(&r.queries)
                    .map(|q| f_score(q, s, &retrievers, mode).map(|f| f.f))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?
    } else {
        return Err(Error::InvalidParameter("give --crdg or --results".into()));
    };
    let lengths: BTreeSet<usize> = args.lengths.iter().copied().collect();
    let report = AnalyzeReport {
        paths: paths.len(),
        empty_paths: empty_paths(&paths),
        lsr: lsr(&paths),
        gsr: gsr(&paths),
        delta_f: delta_f_profile(&paths, &lengths),
    };
    print_json(&report)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        inv.output(out);
        finish(&inv)?;
    }
    Ok(())
}

fn latency(args: LatencyArgs, mut cfg: Config) -> Result<()> {
    if let Some(g) = args.generation {
        cfg.inference.generation = g;
    }
    let dataset = required(args.dataset, &cfg.data.dataset, "data.dataset")?;
    let mut inv = start("latency", &cfg, Some(args.gen.seed));
    inv.input(&dataset);
    let samples = load_cqr_dataset(&dataset)?;
    let client = load_generator(&args.gen, &cfg, &mut inv)?;
    let report = measure_latency(&samples, client.as_ref(), &cfg.inference, args.gen.seed)?;
    match report.mean_seconds {
        Some(m) => eprintln!(
            "mean generation latency: {m:.4} s over {} samples",
            report.per_sample.len()
        ),
        None => eprintln!("no samples"),
    }
    print_json(&report)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        inv.output(out);
        finish(&inv)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => Config::default(),
    };
    match cli.command {
        Cmd::BuildIndex(a) => build_index(a, cfg),
        Cmd::EmbedIndex(a) => embed_index(a, cfg),
        Cmd::Crdg(a) => crdg(a, cfg),
        Cmd::Prefdata(a) => prefdata(a, cfg),
        Cmd::Sftdata(a) => sftdata(a, cfg),
        Cmd::Infer(a) => infer(a, cfg),
        Cmd::Fuse(a) => fuse_cmd(a, cfg),
        Cmd::Evaluate(a) => evaluate(a, cfg),
        Cmd::Analyze(a) => analyze(a, cfg),
        Cmd::Latency(a) => latency(a, cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_provider_error() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
