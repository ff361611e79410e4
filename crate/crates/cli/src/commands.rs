use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use q2d_core::corpus_io::{
    load_collection, load_qrels, load_queries, read_run, write_run, Query, RunFile,
};
use q2d_core::dense_retrieval::{
    EmbeddingProvider, HashProjectionProvider, HttpEmbeddingProvider, Metric, Pooling,
    ProviderInfo, QueryBudget, VectorIndex, DEFAULT_MAX_QUERY_TERMS, VECTOR_MAGIC,
};
use q2d_core::evaluation::{
    bench_latency, evaluate, Measure, DEFAULT_REL_THRESHOLD, STANDARD_MEASURES,
};
use q2d_core::pipeline::{Pipeline, Retriever, SearchMode};
use q2d_core::query_expansion::{
    generate_batch, load_examples, load_offline_expansions, write_expansions, GenerationCache,
    GenerationParams, HttpCompletionClient, OfflineExpansions, PromptTemplate, PseudoDocument,
    RetryPolicy, CHAT_SYSTEM_MESSAGE, DEFAULT_QUERY_REPEATS,
};
use q2d_core::sparse_retrieval::{Bm25Params, IndexBuilder, InvertedIndex, Rm3Params, INDEX_MAGIC};
use q2d_core::text_analysis::{AnalyzerConfig, Stemmer};
use q2d_core::training_objectives::{toy_train, Objective, ToyTask};

use crate::config::Layers;
use crate::error::{CliError, CliResult};
use crate::{
    BenchArgs, EvaluateArgs, ExpandArgs, IndexArgs, IndexKind, MetricArg, ObjectiveArg, PoolingArg,
    ProviderKind, ReportFormat, SearchArgs, TrainArgs,
};

const HASH_PROVIDER_PREFIX: &str = "hash-projection-";
const DEFAULT_HASH_DIM: usize = 256;
const HTTP_TIMEOUT: Duration = Duration::from_secs(60);

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Data)
}

pub fn cmd_index(args: &IndexArgs, layers: &Layers) -> CliResult<()> {
    let collection: PathBuf = layers.require(args.collection.clone(), "collection")?;
    let out: PathBuf = layers.require(args.index.clone(), "index")?;
    match layers.get_or(args.kind, "kind", IndexKind::Sparse)? {
        IndexKind::Sparse => {
            let mut analyzer = AnalyzerConfig::default();
            if let Some(path) = layers.get(args.stopwords.clone(), "stopwords")? {
                analyzer = analyzer
                    .with_stopwords_file(&path)
                    .with_context(|| format!("stopwords {}", path.display()))
                    .map_err(CliError::Data)?;
            }
            if args.no_stem {
                analyzer.stemmer = Stemmer::None;
            }
            let defaults = Bm25Params::default();
            let params = Bm25Params::new(
                layers.get_or(args.k1, "k1", defaults.k1)?,
                layers.get_or(args.b, "b", defaults.b)?,
            )?;
            let mut builder = IndexBuilder::new(analyzer).bm25_defaults(params);
            for doc in load_collection(&collection)? {
                builder.add(&doc?)?;
            }
            let index = builder.finish()?;
            index.save(&out)?;
            log::info!(
                "indexed {} documents, {} terms -> {}",
                index.doc_count(),
                index.vocabulary_size(),
                out.display()
            );
        }
        IndexKind::Dense => {
            let metric = match layers.get_or(args.metric, "metric", MetricArg::Dot)? {
                MetricArg::Dot => Metric::Dot,
                MetricArg::Cosine => Metric::Cosine,
            };
            let provider: Box<dyn EmbeddingProvider> =
                match layers.get_or(args.provider, "provider", ProviderKind::Hash)? {
                    ProviderKind::Hash => Box::new(HashProjectionProvider::new(
                        layers.get_or(args.dim, "dim", DEFAULT_HASH_DIM)?,
                        AnalyzerConfig::default(),
                    )?),
                    ProviderKind::Http => {
                        let pooling =
                            match layers.get_or(args.pooling, "pooling", PoolingArg::Cls)? {
                                PoolingArg::Cls => Pooling::Cls,
                                PoolingArg::Mean => Pooling::Mean,
                            };
                        let info = ProviderInfo {
                            name: layers.require(args.embed_model.clone(), "embed_model")?,
                            dimension: layers.require(args.dim, "dim")?,
                            pooling,
                        };
                        Box::new(http_embedder(
                            layers.require(args.embed_endpoint.clone(), "embed_endpoint")?,
                            info,
                        )?)
                    }
                };
            let mut index = VectorIndex::new(provider.info(), metric);
            let docs: Vec<_> = load_collection(&collection)?.collect::<Result<_, _>>()?;
            for chunk in docs.chunks(64) {
                let texts: Vec<&str> = chunk.iter().map(|d| d.text.as_str()).collect();
                let rows = provider.embed(&texts)?;
                if rows.len() != chunk.len() {
                    return Err(CliError::Provider(anyhow::anyhow!(
                        "{} vectors for {} documents",
                        rows.len(),
                        chunk.len()
                    )));
                }
                for (doc, row) in chunk.iter().zip(&rows) {
                    index.add(doc.doc_id.clone(), row)?;
                }
            }
            index.save(&out)?;
            log::info!("embedded {} documents -> {}", index.len(), out.display());
        }
    }
    Ok(())
}

fn http_embedder(url: String, info: ProviderInfo) -> CliResult<HttpEmbeddingProvider> {
    let key = std::env::var(q2d_core::query_expansion::API_KEY_ENV).ok();
    Ok(HttpEmbeddingProvider::new(url, key, info, HTTP_TIMEOUT)?)
}

pub fn cmd_expand(args: &ExpandArgs, layers: &Layers) -> CliResult<()> {
    let queries = load_queries(&layers.require(args.queries.clone(), "queries")?)?;
    let out: PathBuf = layers.require(args.output.clone(), "output")?;

    let docs: Vec<PseudoDocument> = match layers
        .get(args.offline_expansions.clone(), "offline_expansions")?
    {
        Some(path) => {
            let offline = load_offline_expansions(&path)?;
            queries
                .iter()
                .map(|q| offline.get(&q.query_id).cloned())
                .collect::<Result<_, _>>()?
        }
        None => {
            let endpoint_url: String =
                layers
                    .get(args.endpoint.clone(), "endpoint")?
                    .ok_or_else(|| {
                        CliError::usage(
                            "expand needs --offline-expansions or --endpoint for live generation",
                        )
                    })?;
            let pool = load_examples(&layers.require(args.examples.clone(), "examples")?)?;
            let mut template =
                PromptTemplate::new(pool, layers.get_or(args.k_examples, "k_examples", 4)?)?;
            if args.chat {
                template = template.with_system_message(CHAT_SYSTEM_MESSAGE);
            }
            let defaults = GenerationParams::default();
            let params = GenerationParams {
                model_name: layers.get_or(args.model.clone(), "model", defaults.model_name)?,
                temperature: layers.get_or(
                    args.temperature,
                    "temperature",
                    defaults.temperature,
                )?,
                max_tokens: layers.get_or(args.max_tokens, "max_tokens", defaults.max_tokens)?,
                seed: layers.get_or(args.seed, "seed", defaults.seed)?,
            };
            params.validate().map_err(CliError::Usage)?;
            let retry = RetryPolicy {
                max_attempts: layers.get_or(
                    args.max_attempts,
                    "max_attempts",
                    RetryPolicy::default().max_attempts,
                )?,
                ..RetryPolicy::default()
            };
            let cache = match layers.get(args.cache.clone(), "cache")? {
                Some(path) => GenerationCache::open(&path)?,
                None => GenerationCache::in_memory(),
            };
            let client = HttpCompletionClient::from_env(endpoint_url, HTTP_TIMEOUT)
                .map_err(|e| CliError::usage(e.message))?;
            let in_flight = layers.get_or(args.max_in_flight, "max_in_flight", 4)?;
            generate_batch(
                &queries, &template, &params, &client, &cache, &retry, in_flight,
            )
            .into_iter()
            .collect::<Result<_, _>>()?
        }
    };
    write_expansions(&out, &docs)?;
    log::info!("wrote {} pseudo-documents -> {}", docs.len(), out.display());
    Ok(())
}

/// An index file of either kind, told apart by its magic bytes.
pub enum LoadedIndex {
    Sparse(InvertedIndex),
    Dense(VectorIndex),
}

pub fn open_index(path: &Path) -> CliResult<LoadedIndex> {
    let data = fs::read(path)
        .with_context(|| format!("reading index {}", path.display()))
        .map_err(CliError::Data)?;
    if data.starts_with(INDEX_MAGIC.as_bytes()) {
        Ok(LoadedIndex::Sparse(InvertedIndex::from_bytes(&data)?))
    } else if data.starts_with(VECTOR_MAGIC.as_bytes()) {
        Ok(LoadedIndex::Dense(VectorIndex::from_bytes(&data)?))
    } else {
        Err(CliError::Data(anyhow::anyhow!(
            "{} is not an index file",
            path.display()
        )))
    }
}

/// Everything a pipeline borrows, loaded from the settings.
struct SearchContext {
    index: LoadedIndex,
    queries: Vec<Query>,
    mode: SearchMode,
    expansions: Option<OfflineExpansions>,
    provider: Option<Box<dyn EmbeddingProvider>>,
}

fn load_search_context(args: &SearchArgs, layers: &Layers) -> CliResult<SearchContext> {
    let mode: SearchMode = layers.require(args.mode, "mode")?;
    let index = open_index(&layers.require(args.index.clone(), "index")?)?;
    let queries = load_queries(&layers.require(args.queries.clone(), "queries")?)?;
    let expansions = match layers.get(args.offline_expansions.clone(), "offline_expansions")? {
        Some(path) => Some(load_offline_expansions(&path)?),
        None if mode.needs_expansions() => {
            return Err(CliError::usage(format!(
                "mode {mode} needs --offline-expansions"
            )));
        }
        None => None,
    };
    let provider: Option<Box<dyn EmbeddingProvider>> = match &index {
        LoadedIndex::Sparse(_) => None,
        LoadedIndex::Dense(v) => {
            let info = v.info().clone();
            Some(match info.name.strip_prefix(HASH_PROVIDER_PREFIX) {
                Some(_) => Box::new(HashProjectionProvider::new(
                    info.dimension,
                    AnalyzerConfig::default(),
                )?),
                None => {
                    let url = layers
                        .get(args.embed_endpoint.clone(), "embed_endpoint")?
                        .ok_or_else(|| {
                            CliError::usage(format!(
                                "index embedded by {:?} needs --embed-endpoint",
                                info.name
                            ))
                        })?;
                    Box::new(http_embedder(url, info)?)
                }
            })
        }
    };
    Ok(SearchContext {
        index,
        queries,
        mode,
        expansions,
        provider,
    })
}

fn build_pipeline<'a>(
    ctx: &'a SearchContext,
    args: &SearchArgs,
    layers: &Layers,
) -> CliResult<Pipeline<'a>> {
    let retriever = match (&ctx.index, &ctx.provider) {
        (LoadedIndex::Sparse(index), _) => {
            let defaults = index.bm25_defaults();
            let rm3 = Rm3Params::default();
            Retriever::Sparse {
                index,
                bm25: Bm25Params {
                    k1: layers.get_or(args.k1, "k1", defaults.k1)?,
                    b: layers.get_or(args.b, "b", defaults.b)?,
                },
                rm3: Rm3Params {
                    fb_docs: layers.get_or(args.fb_docs, "fb_docs", rm3.fb_docs)?,
                    fb_terms: layers.get_or(args.fb_terms, "fb_terms", rm3.fb_terms)?,
                    original_query_weight: layers.get_or(
                        args.fb_weight,
                        "fb_weight",
                        rm3.original_query_weight,
                    )?,
                },
            }
        }
        (LoadedIndex::Dense(index), Some(provider)) => Retriever::Dense {
            index,
            provider: provider.as_ref(),
            budget: QueryBudget {
                max_query_terms: layers.get_or(
                    args.max_query_terms,
                    "max_query_terms",
                    DEFAULT_MAX_QUERY_TERMS,
                )?,
            },
            analyzer: AnalyzerConfig::default(),
        },
        (LoadedIndex::Dense(_), None) => unreachable!("dense context always carries a provider"),
    };
    let n = layers.get_or(args.n, "n", DEFAULT_QUERY_REPEATS)?;
    Ok(Pipeline::new(
        ctx.mode,
        retriever,
        ctx.expansions.as_ref(),
        n,
    )?)
}

/// Writes the run file and returns it.
pub fn cmd_search(args: &SearchArgs, layers: &Layers) -> CliResult<RunFile> {
    let out: PathBuf = layers.require(args.output.clone(), "output")?;
    let ctx = load_search_context(args, layers)?;
    let pipeline = build_pipeline(&ctx, args, layers)?;
    let top_k = layers.get_or(args.top_k, "top_k", 1000)?;
    let mut run = pipeline.run(&ctx.queries, top_k)?;
    if let Some(tag) = layers.get(args.tag.clone(), "tag")? {
        if tag.is_empty() || tag.contains(char::is_whitespace) {
            return Err(CliError::usage("--tag must be a single non-empty token"));
        }
        for e in &mut run.entries {
            e.tag = tag.clone();
        }
    }
    write_run(&run, &out)?;
    log::info!(
        "{} queries, {} run lines -> {}",
        ctx.queries.len(),
        run.entries.len(),
        out.display()
    );
    Ok(run)
}

/// Returns the rendered report (table or JSON).
pub fn cmd_evaluate(args: &EvaluateArgs, layers: &Layers) -> CliResult<String> {
    let run = read_run(&layers.require(args.run.clone(), "run")?)?;
    let qrels = load_qrels(&layers.require(args.qrels.clone(), "qrels")?)?;
    let measures: Vec<Measure> = match layers.get(args.metrics.clone(), "metrics")? {
        Some(list) => list
            .split(',')
            .map(|m| m.trim().parse::<Measure>())
            .collect::<Result<_, _>>()?,
        None => STANDARD_MEASURES.to_vec(),
    };
    let threshold = layers.get_or(args.rel_threshold, "rel_threshold", DEFAULT_REL_THRESHOLD)?;
    let report = evaluate(&run, &qrels, &measures, threshold);
    let text = match layers.get_or(args.format, "format", ReportFormat::Table)? {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Json => report.to_json() + "\n",
    };
    if let Some(path) = layers.get(args.output.clone(), "output")? {
        write_text(&path, &text)?;
    }
    Ok(text)
}

/// Returns the latency report as JSON.
pub fn cmd_bench(args: &BenchArgs, layers: &Layers) -> CliResult<String> {
    let s = &args.search;
    let ctx = load_search_context(s, layers)?;
    let pipeline = build_pipeline(&ctx, s, layers)?;
    let bench = bench_latency(
        &pipeline,
        &ctx.queries,
        layers.get_or(s.top_k, "top_k", 100)?,
        layers.get_or(args.warmup, "warmup", 1)?,
        layers.get_or(args.repetitions, "repetitions", 3)?,
    )?;
    let json = serde_json::to_string_pretty(&bench).expect("latency report serializes");
    if let Some(path) = layers.get(s.output.clone(), "output")? {
        write_text(&path, &json)?;
    }
    Ok(json)
}

/// Returns the loss trace as JSON.
pub fn cmd_train(args: &TrainArgs, layers: &Layers) -> CliResult<String> {
    let task: ToyTask = match layers.get(args.task.clone(), "task")? {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(CliError::Data)?;
            serde_json::from_str(&text)
                .with_context(|| format!("task file {}", path.display()))
                .map_err(CliError::Data)?
        }
        None => ToyTask::default(),
    };
    let objective = match layers.get_or(args.objective, "objective", ObjectiveArg::Contrastive)? {
        ObjectiveArg::Contrastive => Objective::Contrastive,
        ObjectiveArg::Distill => Objective::Distill,
    };
    let trace = toy_train(
        &task,
        objective,
        layers.get_or(args.steps, "steps", 500)?,
        layers.get_or(args.learning_rate, "learning_rate", 0.05)?,
        layers.get_or(args.seed, "seed", 0)?,
    )?;
    let json = serde_json::to_string_pretty(&trace).expect("trace serializes");
    if let Some(path) = layers.get(args.output.clone(), "output")? {
        write_text(&path, &json)?;
    }
    Ok(json)
}
