use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use dupdetect::corpus::{census, filter_by_tag, ingest_files, split, write_census_csv, AnnotationRules};
use dupdetect::embedding::{
    embed_corpus, load_store, save_store, EmbeddingProvider, OfflineHashProvider, ProviderConfig, RemoteProvider,
};
use dupdetect::eval::{compare_settings, evaluate_index, ComparisonRow, ComparisonTable, EvalOptions, Setting};
use dupdetect::rank::{project, top_k, top_k_text, TagFilter};
use dupdetect::refine::train;
use dupdetect::{Corpus, Error, LatentIndex, LossKind, ProjectionHead64, SplitSpec, TrainingConfig};
use serde_json::{json, Value};

use crate::config::{write_echo, Resolver};
use crate::{
    CensusArgs, Cli, Command, EmbedArgs, EvaluateArgs, IngestArgs, ProjectArgs, RankArgs, SplitFlags, TrainArgs,
    TrainingFlags,
};

pub fn report_failure(class: &str, code: u8, message: &str) -> ExitCode {
    let line = json!({ "error": class, "code": code, "message": message.replace('\n', " ") });
    eprintln!("{line}");
    ExitCode::from(code)
}

/// The error chain joined with ": ", skipping causes already spelled out
/// by the message before them.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

pub fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            let class = err.class();
            let code = match class {
                "argument" => 2,
                "config" => 3,
                "not-found" => 4,
                "format" => 5,
                "parse" => 6,
                "domain" => 7,
                "http" => 8,
                _ => 9,
            };
            return (class, code);
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { ("not-found", 4) } else { ("io", 9) };
        }
    }
    ("internal", 1)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let name = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Census(_) => "census",
        Command::Embed(_) => "embed",
        Command::Train(_) => "train",
        Command::Project(_) => "project",
        Command::Rank(_) => "rank",
        Command::Evaluate(_) => "evaluate",
    };
    let mut r = Resolver::new(name, cli.config.as_deref())?;
    let threads = r.or("threads", cli.threads, 1usize)?;
    if threads == 0 {
        return Err(Error::Argument("--threads must be at least 1".into()).into());
    }
    match cli.command {
        Command::Ingest(a) => ingest_cmd(r, a),
        Command::Census(a) => census_cmd(r, a),
        Command::Embed(a) => embed_cmd(r, a, threads),
        Command::Train(a) => train_cmd(r, a, threads),
        Command::Project(a) => project_cmd(r, a),
        Command::Rank(a) => rank_cmd(r, a),
        Command::Evaluate(a) => evaluate_cmd(r, a),
    }
}

fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn ingest_cmd(mut r: Resolver, a: IngestArgs) -> anyhow::Result<()> {
    let posts = r.path("posts", a.posts)?;
    let links = r.path("links", a.links)?;
    let out = r.path("out", a.out)?;
    let trailers: Vec<String> = r.or("trailer", (!a.trailer.is_empty()).then_some(a.trailer), Vec::new())?;
    let resolved = r.finish();

    let mut rules = AnnotationRules::default();
    for t in &trailers {
        rules.push_trailer(t)?;
    }
    let (corpus, report) = ingest_files(&posts, &links, &rules)?;
    for e in &report.errors {
        log::warn!("skipped {} line {}: {}", e.source, e.line, e.message);
    }
    log::info!(
        "{} posts, {} pairs; dropped pairs: {} missing, {} self, {} repeated; {} posts with empty text",
        corpus.len(),
        corpus.pairs().len(),
        report.dropped_missing,
        report.dropped_self,
        report.dropped_repeated,
        report.empty_text
    );
    corpus.save(&out)?;
    write_echo(&out, &resolved)
}

fn census_cmd(mut r: Resolver, a: CensusArgs) -> anyhow::Result<()> {
    let corpus_path = r.path("corpus", a.corpus)?;
    let out = r.get("out", a.out)?;
    let resolved = r.finish();

    let corpus = load_corpus(&corpus_path)?;
    let report = census(&corpus);
    if report.degenerate {
        log::warn!("corpus has no duplicate pairs; census is zero-filled");
    }
    log::info!(
        "{} pairs, shared-tag rate {:.4}, mean duplicates per original {:.4}",
        report.pair_count,
        report.common_tag_rate,
        report.mean_dups_per_post
    );
    match out {
        Some(path) => {
            let file = std::fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            write_census_csv(&report, file)?;
            write_echo(&path, &resolved)?;
        }
        None => {
            write_census_csv(&report, std::io::stdout().lock())?;
            eprintln!("config {resolved}");
        }
    }
    Ok(())
}

fn embed_cmd(mut r: Resolver, a: EmbedArgs, threads: usize) -> anyhow::Result<()> {
    let corpus_path = r.path("corpus", a.corpus)?;
    let out = r.path("out", a.out)?;
    let kind = r.or("provider", a.provider, "offline".to_string())?;
    let mut cfg = match kind.as_str() {
        "offline" | "offline-hash" => {
            let dim = r.or("dim", a.dim, 256usize)?;
            let seed = r.or("hash-seed", a.hash_seed, 0u64)?;
            ProviderConfig::offline(dim, seed)
        }
        "remote" => {
            let base = r.required::<String>("base-url", a.base_url)?;
            let mut cfg = ProviderConfig::remote(base);
            cfg.dim = r.or("dim", a.dim, cfg.dim)?;
            cfg.model_name = r.or("model-name", a.model_name, cfg.model_name)?;
            cfg.retry_limit = r.or("retry-limit", a.retry_limit, cfg.retry_limit)?;
            cfg.request_batch = r.or("request-batch", a.request_batch, cfg.request_batch)?;
            cfg.max_concurrency = r.or("max-concurrency", a.max_concurrency, cfg.max_concurrency)?.min(threads);
            cfg
        }
        other => return Err(Error::Argument(format!("--provider must be remote or offline, got {other:?}")).into()),
    };
    cfg.max_tokens = r.or("max-tokens", a.max_tokens, cfg.max_tokens)?;
    let cache = r.get("cache", a.cache)?;
    cfg.validate()?;
    r.note("provider-tag", cfg.provider_tag())?;
    let resolved = r.finish();

    let corpus = load_corpus(&corpus_path)?;
    let provider: Box<dyn EmbeddingProvider> = match kind.as_str() {
        "remote" => {
            let p = RemoteProvider::from_env(cfg.clone())?;
            Box::new(match cache {
                Some(c) => p.with_cache(c),
                None => p,
            })
        }
        _ => Box::new(OfflineHashProvider::from_config(&cfg)?),
    };
    let result = embed_corpus(&corpus, provider.as_ref(), cfg.max_tokens)?;
    if !result.skipped_empty.is_empty() {
        log::warn!("{} posts have no text and were not embedded", result.skipped_empty.len());
    }
    for (id, msg) in &result.outcome.failures {
        log::warn!("post {id} not embedded: {msg}");
    }
    log::info!("embedded {} of {} posts ({})", result.outcome.store.len(), corpus.len(), cfg.provider_tag());
    save_store(&out, &result.outcome.store)?;
    write_echo(&out, &resolved)
}

fn resolve_split(r: &mut Resolver, corpus: Corpus, flags: SplitFlags) -> anyhow::Result<(Corpus, SplitSpec)> {
    let tag = r.get::<String>("tag", flags.tag)?;
    let ratio = r.or("ratio", flags.ratio, 0.8)?;
    let seed = r.or("split-seed", flags.split_seed, 0u64)?;
    let corpus = match tag {
        Some(t) => {
            let filtered = filter_by_tag(&corpus, &t.to_lowercase())?;
            log::info!("topic {t}: {} posts, {} pairs", filtered.len(), filtered.pairs().len());
            filtered
        }
        None => corpus,
    };
    let spec = split(&corpus, ratio, seed)?;
    Ok((corpus, spec))
}

fn resolve_training(r: &mut Resolver, flags: TrainingFlags, loss: LossKind) -> anyhow::Result<TrainingConfig> {
    let d = TrainingConfig::default();
    Ok(TrainingConfig {
        loss,
        margin: r.or("margin", flags.margin, d.margin)?,
        scale: r.or("scale", flags.scale, d.scale)?,
        batch_size: r.or("batch-size", flags.batch_size, d.batch_size)?,
        epochs: r.or("epochs", flags.epochs, d.epochs)?,
        learning_rate: r.or("lr", flags.lr, d.learning_rate)?,
        out_dim: r.or("out-dim", flags.out_dim, d.out_dim)?,
        seed: r.or("seed", flags.seed, d.seed)?,
    })
}

fn train_cmd(mut r: Resolver, a: TrainArgs, threads: usize) -> anyhow::Result<()> {
    let corpus_path = r.path("corpus", a.corpus)?;
    let store_path = r.path("store", a.store)?;
    let out = r.path("out", a.out)?;
    let loss: LossKind = r.or("loss", a.loss, "mnr".to_string())?.parse()?;
    let config = resolve_training(&mut r, a.training, loss)?;
    config.validate()?;
    let corpus = load_corpus(&corpus_path)?;
    let (corpus, spec) = resolve_split(&mut r, corpus, a.split)?;
    let store = load_store(&store_path)?;
    r.note("provider-tag", store.provider_tag())?;
    r.note("corpus-hash", corpus.content_hash())?;

    let (head, mut log) = train::<f64>(&corpus, &spec, &store, &config)?;
    log.threads = threads;
    log::info!(
        "trained {} steps on {} pairs in {:.2}s; epoch losses {:?}",
        log.steps,
        log.train_pairs_used,
        log.wall_time_secs,
        log.epoch_losses
    );
    r.note("epoch-losses", &log.epoch_losses)?;
    r.note("steps", log.steps)?;
    r.note("train-pairs-used", log.train_pairs_used)?;
    r.note("skipped-pairs", log.skipped_pairs)?;
    let resolved = r.finish();
    head.save(&out)?;
    write_echo(&out, &resolved)
}

fn project_cmd(mut r: Resolver, a: ProjectArgs) -> anyhow::Result<()> {
    let store_path = r.path("store", a.store)?;
    let model_path = r.path("model", a.model)?;
    let out = r.path("out", a.out)?;
    let resolved = r.finish();

    let store = load_store(&store_path)?;
    let head = ProjectionHead64::load(&model_path)?;
    let projection = project(&store, &head)?;
    log::info!("indexed {} posts, {} rejected", projection.index.len(), projection.rejected.len());
    projection.index.save(&out)?;
    write_echo(&out, &resolved)
}

/// Rebuilds the provider recorded in an index's provenance tag.
fn provider_for(tag: &str, base_url: Option<String>) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
    if let Some(rest) = tag.strip_prefix("offline-hash:") {
        let mut dim = None;
        let mut seed = None;
        for part in rest.split(':') {
            match part.split_once('=') {
                Some(("dim", v)) => dim = v.parse().ok(),
                Some(("seed", v)) => seed = v.parse().ok(),
                _ => {}
            }
        }
        let (Some(dim), Some(seed)) = (dim, seed) else {
            return Err(Error::Config(format!("unreadable provider tag {tag:?}")).into());
        };
        return Ok(Box::new(OfflineHashProvider::new(dim, seed)?));
    }
    if let Some(model) = tag.strip_prefix("remote:") {
        let base = base_url.ok_or_else(|| Error::Argument("text queries on a remote index need --base-url".into()))?;
        let mut cfg = ProviderConfig::remote(base);
        cfg.model_name = model.to_string();
        return Ok(Box::new(RemoteProvider::from_env(cfg)?));
    }
    Err(Error::Config(format!("cannot embed text for provider {tag:?}")).into())
}

fn rank_cmd(mut r: Resolver, a: RankArgs) -> anyhow::Result<()> {
    let index_path = r.path("index", a.index)?;
    let query_id = r.get("query-id", a.query_id)?;
    let text = r.get::<String>("text", a.text)?;
    let k = r.or("k", a.k, 30usize)?;
    let tags = r.get::<Vec<String>>("tag-filter", a.tag_filter)?;
    let corpus_path = r.get("corpus", a.corpus)?;
    let model_path = r.get("model", a.model)?;
    let base_url = r.get::<String>("base-url", a.base_url)?;
    let resolved = r.finish();
    eprintln!("config {resolved}");

    let index = LatentIndex::load(&index_path)?;
    let list = match (query_id, text) {
        (Some(id), None) => match tags {
            Some(tags) => {
                let path = corpus_path.ok_or_else(|| Error::Argument("--tag-filter needs --corpus".into()))?;
                let corpus = load_corpus(&path)?;
                let filter = TagFilter::new(tags.iter().map(|t| t.to_lowercase()), &corpus);
                top_k(&index, id, k, Some(&filter))?
            }
            None => top_k(&index, id, k, None)?,
        },
        (None, Some(text)) => {
            if tags.is_some() {
                return Err(Error::Argument("--tag-filter applies to --query-id only".into()).into());
            }
            let path = model_path.ok_or_else(|| Error::Argument("--text needs --model".into()))?;
            let head = ProjectionHead64::load(&path)?;
            let provider = provider_for(index.provider_tag(), base_url)?;
            top_k_text(&index, &head, provider.as_ref(), &text, k)?
        }
        _ => return Err(Error::Argument("give exactly one of --query-id and --text".into()).into()),
    };
    let mut stdout = std::io::stdout().lock();
    list.write_csv(&mut stdout, true)?;
    stdout.flush()?;
    Ok(())
}

fn evaluate_cmd(mut r: Resolver, a: EvaluateArgs) -> anyhow::Result<()> {
    let corpus_path = r.path("corpus", a.corpus)?;
    let index_path = r.get("index", a.index)?;
    let store_path = r.get("store", a.store)?;
    let compare = r.get::<Vec<String>>("compare", a.compare)?;
    let out = r.path("out", a.out)?;
    let csv_path = r.get("csv", a.csv)?;
    let defaults = EvalOptions::default();
    let opts = EvalOptions {
        ns: r.or("ns", a.ns, defaults.ns)?,
        neg_ratio: r.or("neg-ratio", a.neg_ratio, defaults.neg_ratio)?,
        seed: r.or("eval-seed", a.eval_seed, defaults.seed)?,
    };
    if opts.ns.is_empty() || opts.ns.contains(&0) {
        return Err(Error::Argument("--ns needs positive cutoffs".into()).into());
    }
    let corpus = load_corpus(&corpus_path)?;
    let (corpus, spec) = resolve_split(&mut r, corpus, a.split)?;
    let mut settings = Vec::new();
    if let Some(names) = &compare {
        let base = resolve_training(&mut r, a.training, LossKind::Mnr)?;
        for name in names {
            settings.push(match name.trim() {
                "raw" => Setting::Raw,
                "triplet" => Setting::trained(LossKind::Triplet, base.clone()),
                "mnr" => Setting::trained(LossKind::Mnr, base.clone()),
                other => return Err(Error::Argument(format!("unknown setting {other:?} in --compare")).into()),
            });
        }
    }
    r.note("test-pairs", spec.test_pairs.len())?;
    let resolved = r.finish();
    let echo = resolved.to_string();

    let mut rows = Vec::new();
    if let Some(path) = &index_path {
        let index = LatentIndex::load(path)?.restrict(|id| corpus.contains(id));
        let report = evaluate_index(&index, &spec.test_pairs, corpus.pairs(), &opts, echo.clone())?;
        rows.push(ComparisonRow { name: "index".into(), report, training: None });
    }
    if !settings.is_empty() {
        let path = store_path.ok_or_else(|| Error::Argument("--compare needs --store".into()))?;
        let store = load_store(&path)?.restrict(|id| corpus.contains(id));
        let table = compare_settings(&corpus, &spec, &store, &settings, &opts)?;
        rows.extend(table.rows.into_iter().map(|mut row| {
            row.report.config_echo = echo.clone();
            row
        }));
    }
    if rows.is_empty() {
        return Err(Error::Argument("give --index, --compare, or both".into()).into());
    }
    let table = ComparisonTable { rows };
    for row in &table.rows {
        log::info!("{}: top-1 {:.4}, AUC {:.4}", row.name, row.report.top(1), row.report.auc);
    }

    #[derive(serde::Serialize)]
    struct Report<'a> {
        config: &'a Value,
        settings: &'a [ComparisonRow],
    }
    let mut text = serde_json::to_string_pretty(&Report { config: &resolved, settings: &table.rows })?;
    text.push('\n');
    std::fs::write(&out, text).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    if let Some(path) = csv_path {
        let file = std::fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        table.write_csv(file)?;
    }
    Ok(())
}
