use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use tweettopic::classifier::{load_snapshot, save_snapshot, ModelSnapshot};
use tweettopic::dataset::{read_annotations_csv, read_dataset_csv, to_examples, DatasetRow};
use tweettopic::features::{EmbeddingTable, FeatureExtractor, HashedNgrams};
use tweettopic::ingest::{dedupe, keyword_filter, load_jsonl};
use tweettopic::metrics::{ablate_data_size, ablation_csv, cross_validate, evaluate_snapshot};
use tweettopic::optim::train;
use tweettopic::preprocess::preprocess_all;
use tweettopic::store::{Granularity, StoredTweet};
use tweettopic::{
    ExtractorConfig, ExtractorKind, FoldPlan, KeywordSet, LabelStats, LabeledExample, Store, Topic,
};
use tweettopic_service::state::Serving;
use tweettopic_service::AppConfig;

use crate::config::PipelineConfig;
use crate::{
    AblateArgs, Command, EvaluateArgs, ExportArgs, FeatureArgs, Failure, IngestArgs, KappaArgs,
    PreprocessArgs, ServeArgs, TrainArgs, TrendsArgs,
};

type Outcome = Result<(), Failure>;

pub(crate) fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Kappa(a) => kappa(a),
        Command::Ablate(a) => ablate(a),
        Command::Trends(a) => trends(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
    }
}

fn user(msg: impl Into<String>) -> Failure {
    Failure::User(msg.into())
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    std::fs::write(path, contents).map_err(|e| user(format!("{}: {e}", path.display())))
}

/// RFC 3339, `YYYY-MM-DDTHH:MM:SS` (UTC) or a bare date. A bare date means
/// the start of the day, or its last second when `end_of_day` is set.
fn parse_time(s: &str, end_of_day: bool) -> Result<DateTime<Utc>, Failure> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t.and_utc());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        let t = if end_of_day { d.and_hms_opt(23, 59, 59) } else { d.and_hms_opt(0, 0, 0) };
        return Ok(t.expect("valid time of day").and_utc());
    }
    Err(user(format!("cannot parse time '{s}'; use YYYY-MM-DD or RFC 3339")))
}

fn ingest(a: IngestArgs) -> Outcome {
    let keywords = KeywordSet::load(&a.keywords)?;
    let since = a.since.as_deref().map(|s| parse_time(s, false)).transpose()?;
    let loaded = load_jsonl(&a.input)?;
    for s in &loaded.skipped {
        log::warn!("skipped {s:?}");
    }
    let read = loaded.tweets.len();
    let matching: Vec<_> = loaded
        .tweets
        .into_iter()
        .filter(|t| since.is_none_or(|s| t.created_at >= s))
        .filter(|t| keyword_filter(t, &keywords, &a.lang))
        .collect();
    let filtered_out = read - matching.len();
    let (kept, duplicates) = dedupe(matching);

    let mut out = String::new();
    for t in &kept {
        out.push_str(&serde_json::to_string(t).map_err(|e| Failure::Internal(e.to_string()))?);
        out.push('\n');
    }
    write_file(&a.out, &out)?;
    eprintln!(
        "read {read}, malformed {}, filtered out {filtered_out}, duplicates {duplicates}, kept {}",
        loaded.skipped.len(),
        kept.len()
    );

    if let Some(store_path) = &a.store {
        let store = Store::open(store_path)?;
        let (clean, report) = preprocess_all(&kept);
        let stored: Vec<StoredTweet> = clean
            .into_iter()
            .map(|c| StoredTweet { id: c.id, created_at: c.created_at, text: c.text, source: a.input.display().to_string() })
            .collect();
        let written = store.upsert_tweets(stored)?;
        eprintln!("stored {written} new tweet(s); {} too short after cleaning", report.dropped_by_length);
        if let Some(model) = &a.model {
            let serving = Serving::new(load_snapshot(model)?, None)?;
            let stale = store.stale_predictions(serving.version());
            let labels = serving.predict(&stale)?;
            let n = store.record_predictions(serving.version(), &labels, Utc::now())?;
            eprintln!("labeled {n} tweet(s) with model {}", serving.version());
        }
    }
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Outcome {
    let loaded = load_jsonl(&a.input)?;
    let (clean, report) = preprocess_all(&loaded.tweets);
    let mut out = String::new();
    for t in &clean {
        out.push_str(&serde_json::to_string(t).map_err(|e| Failure::Internal(e.to_string()))?);
        out.push('\n');
    }
    write_file(&a.out, &out)?;
    write_file(&a.report, &report.to_csv())?;
    eprintln!("kept {} of {} tweet(s)", report.kept, report.input);

    if let Some(path) = &a.dataset {
        let labels: std::collections::HashMap<&str, _> =
            loaded.tweets.iter().filter_map(|t| Some((t.id.as_str(), t.labels()?))).collect();
        let rows: Vec<DatasetRow> = clean
            .iter()
            .filter_map(|c| {
                Some(DatasetRow {
                    tweet_id: c.id.clone(),
                    created_at: c.created_at,
                    text: c.text.clone(),
                    labels: *labels.get(c.id.as_str())?,
                    status: None,
                })
            })
            .collect();
        if rows.len() < clean.len() {
            log::warn!("{} cleaned tweet(s) carry no labels and are left out of the dataset", clean.len() - rows.len());
        }
        tweettopic::dataset::write_dataset_csv(path, &rows)?;
    }
    Ok(())
}

fn pipeline_config(f: &FeatureArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &f.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = f.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn extractor_for(cfg: &ExtractorConfig, embeddings: Option<&Path>) -> Result<Box<dyn FeatureExtractor>, Failure> {
    match (cfg.kind, embeddings) {
        (_, Some(path)) => {
            let table = EmbeddingTable::load(path)?;
            if cfg.kind == ExtractorKind::ImportedEmbeddings && table.dim() != cfg.dim {
                return Err(user(format!("embeddings have dim {} but the model expects {}", table.dim(), cfg.dim)));
            }
            Ok(Box::new(table))
        }
        (ExtractorKind::HashedNgrams, None) => Ok(Box::new(HashedNgrams::new(cfg.clone())?)),
        (ExtractorKind::ImportedEmbeddings, None) => {
            Err(user("this model uses imported embeddings; pass --embeddings"))
        }
    }
}

fn load_examples(data: &Path, ex: &dyn FeatureExtractor) -> Result<Vec<LabeledExample>, Failure> {
    let rows = read_dataset_csv(data)?;
    if rows.is_empty() {
        return Err(user(format!("{}: no rows", data.display())));
    }
    Ok(to_examples(&rows, ex)?)
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let cfg = pipeline_config(&a.features)?;
    let ex = extractor_for(&cfg.extractor, a.features.embeddings.as_deref())?;
    let mut data = load_examples(&a.data, ex.as_ref())?;
    data.sort_by(|x, y| x.id.cmp(&y.id));
    let stats = LabelStats::from_labels(data.iter().map(|e| &e.labels));
    let init = ModelSnapshot::initial_smoothed(ex.config().clone(), &stats, cfg.train.dropout)?;
    let pairs: Vec<_> = data.into_iter().map(|e| (e.features, e.labels)).collect();
    let outcome = match train(&pairs, &cfg.train, &init) {
        Ok(o) => o,
        Err(tweettopic::Error::TrainingAborted(aborted)) => {
            if let Some(log) = &a.log {
                write_file(log, &aborted.last_finite.loss_csv())?;
            }
            return Err(Failure::Internal(aborted.to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let mut snapshot = outcome.snapshot.clone();
    snapshot.version = format!("{}-s{}", snapshot.trained_on, cfg.train.seed);
    save_snapshot(&snapshot, &a.out)?;
    if let Some(log) = &a.log {
        write_file(log, &outcome.loss_csv())?;
    }
    let last = outcome.losses.last().map(|r| r.loss).unwrap_or(f64::NAN);
    eprintln!("trained {} on {} example(s), final loss {last:.6}", snapshot.version, pairs.len());
    Ok(())
}

fn emit_table(table: &str, path: Option<&Path>) -> Outcome {
    match path {
        Some(p) => write_file(p, table),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(table.as_bytes()).map_err(|e| Failure::Internal(e.to_string()))
        }
    }
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    if let Some(model) = &a.model {
        let snapshot = load_snapshot(model)?;
        let ex = extractor_for(&snapshot.extractor, a.features.embeddings.as_deref())?;
        let data = load_examples(&a.data, ex.as_ref())?;
        let report = evaluate_snapshot(&snapshot, data.iter().map(|e| (&e.features, &e.labels)))?;
        write_file(&a.out, &report.to_csv())?;
        return emit_table(&report.to_table(), a.table.as_deref());
    }

    let k = a.folds.expect("clap requires --folds without --model");
    let cfg = pipeline_config(&a.features)?;
    let ex = extractor_for(&cfg.extractor, a.features.embeddings.as_deref())?;
    let data = load_examples(&a.data, ex.as_ref())?;
    let ids: Vec<&str> = data.iter().map(|e| e.id.as_str()).collect();
    let plan = FoldPlan::new(&ids, k, cfg.train.seed)?;
    if let Some(p) = &a.plan {
        let mut csv = String::from("id,fold\n");
        for (id, fold) in &plan.assignments {
            csv.push_str(&format!("{id},{fold}\n"));
        }
        write_file(p, &csv)?;
    }
    let report = cross_validate(&data, &plan, ex.config(), &cfg.train)?;
    for flag in &report.flags {
        log::warn!("{flag}");
    }
    write_file(&a.out, &report.to_csv())?;
    emit_table(&report.to_table(), a.table.as_deref())
}

fn kappa(a: KappaArgs) -> Outcome {
    let rows = read_annotations_csv(&a.annotations)?;
    let report = tweettopic::agreement::kappa_report(&rows)?;
    write_file(&a.out, &report.to_csv())?;
    let degenerate = report.degenerate_topics();
    if !degenerate.is_empty() {
        log::warn!("kappa undefined (chance agreement 1) for: {degenerate:?}");
    }
    match report.mean_kappa {
        Some(m) => println!("mean kappa {m:.4} over {} tweets, {} raters", report.n, report.r),
        None => println!("mean kappa undefined over {} tweets, {} raters", report.n, report.r),
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Outcome {
    let cfg = pipeline_config(&a.features)?;
    let ex = extractor_for(&cfg.extractor, a.features.embeddings.as_deref())?;
    let data = load_examples(&a.data, ex.as_ref())?;
    let rows = ablate_data_size(&data, &a.sizes, a.folds, cfg.train.seed, ex.config(), &cfg.train)?;
    let csv = ablation_csv(&rows);
    write_file(&a.out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn trends(a: TrendsArgs) -> Outcome {
    let granularity: Granularity = a.granularity.parse().map_err(user)?;
    let topic = a
        .topic
        .as_deref()
        .map(|t| {
            t.parse::<Topic>()
                .map_err(|_| user(format!("unknown topic '{t}'; expected one of {}", Topic::names().join(", "))))
        })
        .transpose()?;
    if !a.store.exists() {
        return Err(user(format!("{}: no such store", a.store.display())));
    }
    let store = Store::open(&a.store)?;
    let tweets = store.all_tweets();
    let bounds = (tweets.iter().map(|t| t.created_at).min(), tweets.iter().map(|t| t.created_at).max());
    let from = match &a.from {
        Some(s) => parse_time(s, false)?,
        None => bounds.0.ok_or_else(|| user("store is empty; pass --from and --to"))?,
    };
    let to = match &a.to {
        Some(s) => parse_time(s, true)?,
        None => bounds.1.ok_or_else(|| user("store is empty; pass --from and --to"))?,
    };
    let buckets = store.trend_series(granularity, topic, from, to)?;
    let mut csv = String::from("window_start,granularity,topic,count\n");
    for b in &buckets {
        let g = match b.granularity {
            Granularity::Day => "day",
            Granularity::Week => "week",
        };
        csv.push_str(&format!(
            "{},{g},{},{}\n",
            b.window_start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            b.topic,
            b.count
        ));
    }
    write_file(&a.out, &csv)
}

fn export(a: ExportArgs) -> Outcome {
    if !a.store.exists() {
        return Err(user(format!("{}: no such store", a.store.display())));
    }
    let n = Store::open(&a.store)?.export_csv(&a.out)?;
    eprintln!("exported {n} tweet(s)");
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    let config = AppConfig::load(&a.config)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
    runtime
        .block_on(tweettopic_service::serve(config))
        .map_err(|e| Failure::Internal(e.to_string()))
}
