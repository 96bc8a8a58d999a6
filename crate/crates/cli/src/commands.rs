use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde_json::{json, Value};
use session_intent::analysis::{
    cluster_separation, embedding_agreement, matched_accuracy, page_similarity_matrix, project_2d,
    similarity_decay, topic_count_histogram, transition_matrix, write_bundle, AnalysisReport,
    ProjectionRow,
};
use session_intent::corpus::{
    generate_synthetic_corpus, ingest_sessions, random_walk_corpus, GroundTruth, InputFormat,
    PageToken, SessionCorpus, TokenRewriter, Vocabulary,
};
use session_intent::embedding::{read_binary, read_text, write_binary, write_text, EmbeddingMatrix};
use session_intent::intent::batch_infer;
use session_intent::mixture::{fit, read_model_json, select_k, write_model_json, FitConfig, IntentModel};
use session_intent::pipeline::{
    mixture_structure, page_label_map, prepare_and_train, timed_session_vectors,
};
use session_intent::rng::sub_seed;
use session_intent::{Error, Result};

use crate::config::{require_inputs, PipelineConfig};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn load_corpus(path: &Path) -> Result<SessionCorpus> {
    let (corpus, report) = ingest_sessions(path, InputFormat::Jsonl, &TokenRewriter::identity())?;
    if report.rejected > 0 {
        return Err(Error::format(
            "session log",
            format!("{} malformed records in {}", report.rejected, path.display()),
        ));
    }
    Ok(corpus)
}

/// Vocabulary and vectors, checked to describe the same pages in the same order.
fn load_vectors(cfg: &PipelineConfig) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let vocab = Vocabulary::read_tsv(open(&cfg.paths.vocab)?)?;
    let file = read_binary(open(&cfg.paths.embeddings)?)?;
    if file.tokens.as_slice() != vocab.tokens() {
        return Err(Error::format(
            "embeddings",
            "page tokens do not match the vocabulary file",
        ));
    }
    Ok((vocab, file.embeddings))
}

fn load_model(path: &Path) -> Result<IntentModel> {
    read_model_json(open(path)?)
}

pub fn generate(cfg: &PipelineConfig) -> Result<()> {
    let (corpus, truth) = generate_synthetic_corpus(&cfg.synthetic)?;
    corpus.write_jsonl(create(&cfg.paths.corpus)?)?;
    if let Some(p) = &cfg.paths.ground_truth_pages {
        truth.write_pages_csv(create(p)?)?;
    }
    if let Some(p) = &cfg.paths.ground_truth_sessions {
        truth.write_sessions_csv(&corpus, create(p)?)?;
    }
    log::info!(
        "generated {} sessions over {} pages into {}",
        corpus.len(),
        cfg.synthetic.n_pages(),
        cfg.paths.corpus.display()
    );
    Ok(())
}

pub fn ingest(cfg: &PipelineConfig, input: &Path, format: InputFormat) -> Result<()> {
    require_inputs([input])?;
    let rewriter = match &cfg.corpus.rewrite_table {
        Some(p) => {
            require_inputs([p.as_path()])?;
            TokenRewriter::from_path(p)?
        }
        None => TokenRewriter::identity(),
    };
    let (corpus, report) = ingest_sessions(input, format, &rewriter)?;
    corpus.write_jsonl(create(&cfg.paths.corpus)?)?;
    println!("accepted {} rejected {}", report.accepted, report.rejected);
    Ok(())
}

pub fn train(cfg: &PipelineConfig) -> Result<()> {
    require_inputs([cfg.paths.corpus.as_path()])?;
    let corpus = load_corpus(&cfg.paths.corpus)?;
    let trained = prepare_and_train(&corpus, &cfg.corpus.params(), &cfg.train)?;
    for (epoch, loss) in trained.stats.epoch_mean_loss.iter().enumerate() {
        log::info!("epoch {}: mean pair loss {loss:.6}", epoch + 1);
    }
    log::info!(
        "epochs={} pairs={} final_loss={:.6} sessions={} pages={}",
        cfg.train.epochs,
        trained.stats.units_processed,
        trained.stats.epoch_mean_loss.last().copied().unwrap_or(f64::NAN),
        trained.corpus.len(),
        trained.vocab.len()
    );
    trained.vocab.write_tsv(create(&cfg.paths.vocab)?)?;
    write_binary(
        create(&cfg.paths.embeddings)?,
        trained.vocab.tokens(),
        &trained.embeddings,
    )?;
    if let Some(p) = &cfg.paths.embeddings_text {
        write_text(create(p)?, trained.vocab.tokens(), &trained.embeddings)?;
    }
    Ok(())
}

pub fn fit_model(cfg: &PipelineConfig, k: Option<usize>, k_range: Option<Vec<usize>>) -> Result<()> {
    require_inputs([cfg.paths.vocab.as_path(), cfg.paths.embeddings.as_path()])?;
    let (_, embeddings) = load_vectors(cfg)?;
    let rows = embeddings.rows_f64();
    // an explicit --k beats a configured sweep
    let sweep = match (k, k_range) {
        (_, Some(range)) => range,
        (Some(_), None) => Vec::new(),
        (None, None) => cfg.analysis.k_range.clone(),
    };
    let model = if sweep.is_empty() {
        let fit_cfg = FitConfig {
            k: k.unwrap_or(cfg.fit.k),
            ..cfg.fit.clone()
        };
        fit(&rows, &fit_cfg)?
    } else {
        select_k(&rows, &sweep, &cfg.fit)?.0
    };
    let stats = model.fit_stats();
    log::info!(
        "k={} log_likelihood={:.6} iterations={} converged={} resets={}",
        model.k(),
        stats.log_likelihood,
        stats.iterations,
        stats.converged,
        stats.resets
    );
    write_model_json(create(&cfg.paths.model)?, &model)
}

pub fn infer(cfg: &PipelineConfig) -> Result<()> {
    let p = &cfg.paths;
    require_inputs([&p.corpus, &p.vocab, &p.embeddings, &p.model].map(|p| p.as_path()))?;
    let corpus = load_corpus(&p.corpus)?;
    let (vocab, embeddings) = load_vectors(cfg)?;
    let model = load_model(&p.model)?;
    let result = batch_infer(&corpus, &embeddings, &vocab, &model)?;
    for f in &result.failures {
        log::debug!("session {} ({}): {}", f.session_index, f.user_id, f.reason);
    }
    log::info!(
        "inferred {} sessions, {} not inferable",
        result.intents.len(),
        result.failures.len()
    );
    result.write_jsonl(create(&p.inference)?)
}

fn read_session_topics(path: &Path) -> Result<HashMap<usize, usize>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let bad = |e: String| Error::format("ground-truth sessions", e);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    let (idx_col, topic_col) = (col("session_index")?, col("topic")?);
    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |c: usize| -> Result<usize> {
            record
                .get(c)
                .unwrap_or("")
                .parse()
                .map_err(|e| bad(format!("{e}")))
        };
        out.insert(field(idx_col)?, field(topic_col)?);
    }
    Ok(out)
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn record<T>(summary: &mut BTreeMap<String, Value>, key: &str, value: Result<T>, f: impl FnOnce(T) -> Value) {
    let v = match value {
        Ok(v) => f(v),
        Err(e) => {
            log::warn!("{key}: {e}");
            Value::Null
        }
    };
    summary.insert(key.to_string(), v);
}

/// Trains and fits a random-walk corpus shaped like `corpus` and returns its silhouette.
fn random_walk_silhouette(cfg: &PipelineConfig, corpus: &SessionCorpus, n_pages: usize, k: usize) -> Result<f64> {
    let mean_len = corpus.token_count() as f64 / corpus.len().max(1) as f64;
    let walk = random_walk_corpus(n_pages, corpus.len(), mean_len.max(1.0 + 1e-9), cfg.random_walk_seed())?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = sub_seed(cfg.contrast_seed(), 0);
    let trained = prepare_and_train(&walk, &cfg.corpus.params(), &train_cfg)?;
    let fit_cfg = FitConfig {
        k,
        seed: sub_seed(cfg.contrast_seed(), 1),
        ..cfg.fit.clone()
    };
    Ok(mixture_structure(&trained.embeddings, &fit_cfg)?.1)
}

pub fn analyze(cfg: &PipelineConfig) -> Result<()> {
    let p = &cfg.paths;
    require_inputs([&p.corpus, &p.vocab, &p.embeddings, &p.model].map(|p| p.as_path()))?;
    let optional = [&p.ground_truth_pages, &p.ground_truth_sessions, &p.visual_embeddings];
    require_inputs(optional.into_iter().flatten().map(|p| p.as_path()))?;

    let raw = load_corpus(&p.corpus)?;
    let corpus = session_intent::corpus::filter_short_sessions(&raw, cfg.corpus.min_len)?;
    let (vocab, embeddings) = load_vectors(cfg)?;
    let model = load_model(&p.model)?;
    if model.dim() != embeddings.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: embeddings.dim(),
        });
    }
    let tokens = vocab.tokens();
    let labels = page_label_map(&model, tokens, &embeddings)?;
    let histogram = topic_count_histogram(&corpus, &labels);
    let transitions = transition_matrix(&corpus, &labels, model.k());

    let mut summary: BTreeMap<String, Value> = BTreeMap::new();
    summary.insert("sessions".into(), json!(raw.len()));
    summary.insert("sessions_after_filter".into(), json!(corpus.len()));
    summary.insert("pages".into(), json!(vocab.len()));
    summary.insert("k".into(), json!(model.k()));
    summary.insert("model_log_likelihood".into(), finite(model.fit_stats().log_likelihood));
    summary.insert("single_topic_fraction".into(), finite(histogram.fraction(1)));
    summary.insert("at_most_two_topics_fraction".into(), finite(histogram.cumulative_fraction(2)));
    summary.insert("unlabeled_pages".into(), json!(histogram.unlabeled_pages));
    summary.insert("transition_off_diagonal_mass".into(), finite(transitions.off_diagonal_mass()));

    let timed = timed_session_vectors(&corpus, &embeddings, &vocab);
    let decay = similarity_decay(&timed, cfg.analysis.bucket_width, cfg.analysis.max_gap)?;
    record(&mut summary, "decay_spearman", decay.spearman(), finite);
    summary.insert("decay_populated_buckets".into(), json!(decay.populated().count()));

    let n_sim = cfg.analysis.similarity_pages.min(vocab.len());
    let sample: Vec<PageToken> = tokens[..n_sim].to_vec();
    let similarity = if n_sim > 0 {
        Some(page_similarity_matrix(&sample, tokens, &embeddings)?)
    } else {
        None
    };

    let rows = embeddings.rows_f64();
    let projection = project_2d(&rows)?
        .into_iter()
        .zip(tokens)
        .map(|(xy, t)| ProjectionRow {
            id: t.to_string(),
            x: xy[0],
            y: xy[1],
        })
        .collect();

    let page_labels: Vec<usize> = tokens.iter().map(|t| labels[t]).collect();
    let structured = cluster_separation(&rows, &page_labels);
    let structured_ok = structured.as_ref().ok().copied();
    record(&mut summary, "silhouette_structured", structured, finite);
    if cfg.analysis.random_walk {
        let walk = random_walk_silhouette(cfg, &raw, vocab.len(), model.k());
        if let (Some(s), Ok(w)) = (structured_ok, &walk) {
            summary.insert("silhouette_contrast".into(), finite(s - w));
        }
        record(&mut summary, "silhouette_random_walk", walk, finite);
    }

    if let Some(path) = &p.visual_embeddings {
        let visual = read_text(open(path)?)?;
        let shared: Vec<PageToken> = sample
            .iter()
            .filter(|t| visual.position(t.as_str()).is_some())
            .cloned()
            .collect();
        let agreement = page_similarity_matrix(&shared, tokens, &embeddings).and_then(|m1| {
            let m2 = page_similarity_matrix(&shared, &visual.tokens, &visual.embeddings)?;
            embedding_agreement(&m1, &m2)
        });
        summary.insert("visual_shared_pages".into(), json!(shared.len()));
        record(&mut summary, "embedding_agreement", agreement, finite);
    }

    if let Some(path) = &p.ground_truth_pages {
        let truth = GroundTruth::read_pages_csv(open(path)?)?;
        let known: Vec<&PageToken> = tokens.iter().filter(|t| truth.contains_key(*t)).collect();
        let pred: Vec<usize> = known.iter().map(|t| labels[*t]).collect();
        let actual: Vec<usize> = known.iter().map(|t| truth[*t]).collect();
        record(&mut summary, "page_accuracy", matched_accuracy(&pred, &actual), finite);
        let truth_hist = topic_count_histogram(&corpus, &truth);
        summary.insert("truth_single_topic_fraction".into(), finite(truth_hist.fraction(1)));
    }
    if let Some(path) = &p.ground_truth_sessions {
        let topics = read_session_topics(path)?;
        let inferred = batch_infer(&raw, &embeddings, &vocab, &model)?;
        let (pred, actual): (Vec<usize>, Vec<usize>) = inferred
            .intents
            .iter()
            .filter_map(|(i, intent)| topics.get(i).map(|&t| (intent.label, t)))
            .unzip();
        record(&mut summary, "session_accuracy", matched_accuracy(&pred, &actual), finite);
    }

    let report = AnalysisReport {
        histogram,
        transitions,
        decay: Some(decay),
        similarity,
        projection,
        summary,
    };
    write_bundle(&p.report_dir, &report)?;
    log::info!("report written to {}", p.report_dir.display());
    Ok(())
}
