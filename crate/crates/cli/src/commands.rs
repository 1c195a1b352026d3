//! Subcommand implementations. Each reads its settings from a resolved
//! [`RunConfig`]; files named on the command line but not part of the key
//! table arrive as plain arguments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use musiscene::adapter::{SceneModel, ToyCausalLm, Vocab};
use musiscene::audio::{AudioClip, ToyClassifier, ToyEmbedder};
use musiscene::audio_metrics::{
    corpus_kl, embedding_stats, frechet_distance, read_embedding_file, read_label_file,
    write_embedding_file, write_label_file, AudioClassifier, AudioEmbedder, EmbeddingDescriptor,
    EmbeddingSet, LabelDistribution,
};
use musiscene::corpus::{
    filter_by_label, load_manifest, read_dataset, split_dataset, write_dataset, BundleGenerator,
    CaptionBackend, ContentCache, HttpBackend, LookupBackend, StubLlm,
};
use musiscene::finetune::{
    evaluate_checkpoint, samples_from_bundles, train, Checkpoint, DecodeConfig, TrainingMetadata,
};
use musiscene::report::{FAD, KL};
use musiscene::text_metrics::{corpus_report, HashEmbedder, HttpEmbedder, TokenEmbedder};
use musiscene::vbmg::{
    aggregate_subjective, read_survey, report_from_ledger, run_experiment, ExperimentConfig,
    HttpMusicBackend, Ledger, MusicBackend, ReferenceSet, SineStub,
};
use musiscene::{io, toy, MetricReport};

use crate::config::{RunConfig, UsageError};

/// Fails unless `path` is free or `force` is set.
pub fn guard_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!(
            "{} already exists; pass --force to overwrite",
            path.display()
        );
    }
    Ok(())
}

fn report_out(cfg: &RunConfig, force: bool) -> Result<PathBuf> {
    let path = cfg.require_path("paths.report", "--report/--out")?;
    guard_output(&path, force)?;
    Ok(path)
}

fn emit(report: &MetricReport, path: &Path) -> Result<()> {
    report.write(path)?;
    println!("{}", report.to_table(3));
    info!("wrote {}", path.display());
    Ok(())
}

fn caption_backend(
    cfg: &RunConfig,
    table: &'static str,
    endpoint: &'static str,
) -> Result<Box<dyn CaptionBackend>> {
    if let Some(path) = cfg.path(table) {
        return Ok(Box::new(
            LookupBackend::from_file(&path).with_context(|| format!("loading {table}"))?,
        ));
    }
    if let Some(url) = cfg.string(endpoint) {
        let mut b = HttpBackend::new(url);
        b.api_key = cfg.string("backends.api_key");
        return Ok(Box::new(b));
    }
    Err(UsageError(format!("no backend configured: set {table} or {endpoint}")).into())
}

fn llm_backend(cfg: &RunConfig) -> Box<dyn CaptionBackend> {
    match cfg.string("backends.llm.endpoint") {
        Some(url) => {
            let mut b = HttpBackend::new(url);
            b.temperature = cfg.float("backends.llm.temperature");
            b.max_tokens = cfg.int("backends.llm.max_tokens").min(u32::MAX as u64) as u32;
            b.api_key = cfg.string("backends.api_key");
            Box::new(b)
        }
        None => Box::new(StubLlm),
    }
}

fn token_embedder(cfg: &RunConfig) -> Box<dyn TokenEmbedder> {
    match cfg.string("backends.embedder.endpoint") {
        Some(url) => Box::new(HttpEmbedder::new(url)),
        None => Box::new(HashEmbedder::default()),
    }
}

fn music_backend(cfg: &RunConfig) -> Box<dyn MusicBackend> {
    match cfg.string("backends.generator.endpoint") {
        Some(url) => {
            let mut b = HttpMusicBackend::new(url);
            b.api_key = cfg.string("backends.api_key");
            Box::new(b)
        }
        None => Box::new(SineStub::default()),
    }
}

fn parent_or_cwd(path: &Path) -> &Path {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

/// `<dataset dir>/features` unless `paths.features` is set.
fn features_dir(cfg: &RunConfig, dataset: &Path) -> PathBuf {
    cfg.path("paths.features")
        .unwrap_or_else(|| parent_or_cwd(dataset).join("features"))
}

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

pub fn build_corpus(cfg: &RunConfig, force: bool) -> Result<()> {
    let manifest = cfg.input_path("paths.manifest", "--manifest")?;
    let out = cfg.require_path("paths.output", "--out")?;
    let files = [DATASET_FILE, TRAIN_FILE, TEST_FILE].map(|f| out.join(f));
    for f in &files {
        guard_output(f, force)?;
    }
    let video = caption_backend(cfg, "backends.video.table", "backends.video.endpoint")?;
    let music = caption_backend(cfg, "backends.music.table", "backends.music.endpoint")?;
    let llm = llm_backend(cfg);
    let cache = ContentCache::open(cfg.path("paths.cache").unwrap_or_else(|| out.join("cache")))?;

    let records = load_manifest(&manifest)?;
    let label = cfg.string("corpus.label").unwrap_or_default();
    let records = filter_by_label(&records, &label);
    info!(
        "{} clips labelled {label:?} in {}",
        records.len(),
        manifest.display()
    );
    let mut generator =
        BundleGenerator::new(video.as_ref(), music.as_ref(), llm.as_ref(), Some(&cache));
    generator.retry = cfg.retry();
    let bundles = generator.generate_all(&records)?;
    let (train_b, test_b) =
        split_dataset(&bundles, cfg.float("corpus.train_fraction"), cfg.seed())?;
    write_dataset(&bundles, &files[0])?;
    write_dataset(&train_b, &files[1])?;
    write_dataset(&test_b, &files[2])?;
    info!(
        "{} bundles: {} train, {} test, in {}",
        bundles.len(),
        train_b.len(),
        test_b.len(),
        out.display()
    );
    Ok(())
}

/// Encodes every manifest clip with the shipped toy encoder.
pub fn extract_features(cfg: &RunConfig, force: bool) -> Result<()> {
    let manifest = cfg.input_path("paths.manifest", "--manifest")?;
    let out = cfg.require_path("paths.features", "--out")?;
    let root = parent_or_cwd(&manifest);
    let records = load_manifest(&manifest)?;
    let enc = toy::encoder();
    for r in &records {
        let path = out.join(format!("{}.npy", io::file_stem_for(&r.clip_id)));
        guard_output(&path, force)?;
        let clip = AudioClip::read(&root.join(&r.audio_path))
            .with_context(|| format!("clip {}", r.clip_id))?;
        enc.encode(&clip, &r.clip_id)?
            .write(&path, &enc.identity())?;
    }
    info!(
        "encoded {} clips into {} with {}",
        records.len(),
        out.display(),
        enc.identity()
    );
    Ok(())
}

pub fn finetune(cfg: &RunConfig, force: bool) -> Result<()> {
    let dataset = cfg.input_path("paths.dataset", "--dataset")?;
    let out = cfg.require_path("paths.checkpoint", "--out")?;
    guard_output(&out, force)?;
    let bundles = read_dataset(&dataset)?;
    if bundles.is_empty() {
        return Err(musiscene::Error::EmptyDataset).with_context(|| dataset.display().to_string());
    }
    let train_config = cfg.train_config();
    let samples = samples_from_bundles(
        &bundles,
        &features_dir(cfg, &dataset),
        &train_config.question_template,
    )?;
    let vocab = Vocab::from_texts(
        samples
            .iter()
            .flat_map(|s| [s.question.as_str(), s.answer.as_str()]),
    );
    let lm = ToyCausalLm::new(cfg.lm_config(), vocab)?;
    let first = &samples[0].features;
    let adapter = cfg.adapter_config(first.num_layers(), first.feature_dim());
    let mut model = SceneModel::new(adapter, lm, cfg.seed())?;
    info!(
        "training {} adapter parameters on {} samples for {} epochs",
        model.config.trainable_count(),
        samples.len(),
        train_config.epochs
    );
    let (ckpt, log) = train(&samples, &mut model, &train_config)?;
    ckpt.save(&out)?;
    let last = log.last().map(|e| e.mean_loss).unwrap_or(f64::NAN);
    println!(
        "{}",
        serde_json::json!({ "checkpoint": out.display().to_string(), "epochs": log.len(), "final_loss": last })
    );
    info!("wrote {}", out.display());
    Ok(())
}

pub fn eval_msi(cfg: &RunConfig, force: bool) -> Result<()> {
    let ckpt_path = cfg.input_path("paths.checkpoint", "--ckpt")?;
    let dataset = cfg.input_path("paths.dataset", "--dataset")?;
    let report = report_out(cfg, force)?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let question = ckpt
        .training
        .as_ref()
        .map(|t: &TrainingMetadata| t.train_config.question_template.clone())
        .unwrap_or_else(|| cfg.train_config().question_template);
    let model = ckpt.to_model()?;
    let bundles = read_dataset(&dataset)?;
    let samples = samples_from_bundles(&bundles, &features_dir(cfg, &dataset), &question)?;
    let decode = DecodeConfig {
        max_len: cfg.usize("decode.max_len"),
        ..DecodeConfig::default()
    };
    let result = evaluate_checkpoint(&model, &samples, &decode, token_embedder(cfg).as_ref())?;
    emit(&result, &report)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn eval_text(cfg: &RunConfig, hyps: &Path, refs: &Path, force: bool) -> Result<()> {
    let report = report_out(cfg, force)?;
    let (h, r) = (read_lines(hyps)?, read_lines(refs)?);
    ensure!(
        h.len() == r.len(),
        "{} has {} lines but {} has {}",
        hyps.display(),
        h.len(),
        refs.display(),
        r.len()
    );
    let pairs: Vec<(String, String)> = h.into_iter().zip(r).collect();
    let key = hyps
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let result = corpus_report(&key, &pairs, token_embedder(cfg).as_ref())?;
    emit(&result, &report)
}

fn single_value(
    column: &str,
    value: f64,
    report: Option<&Path>,
    force: bool,
    row: &str,
) -> Result<()> {
    if let Some(path) = report {
        guard_output(path, force)?;
        let mut r = MetricReport::new();
        r.insert_row(row, [(column, value)]);
        r.write(path)?;
    }
    println!("{}", serde_json::json!({ column: value }));
    Ok(())
}

pub fn eval_fad(
    reference: &Path,
    generated: &Path,
    report: Option<&Path>,
    force: bool,
) -> Result<()> {
    let (a, _) = read_embedding_file(reference)?;
    let (b, _) = read_embedding_file(generated)?;
    let fad = frechet_distance(&embedding_stats(&a)?, &embedding_stats(&b)?)?;
    single_value(FAD, fad, report, force, &b.source_id)
}

pub fn eval_kl(
    cfg: &RunConfig,
    target: &Path,
    pred: &Path,
    report: Option<&Path>,
    force: bool,
) -> Result<()> {
    let t = read_label_file(target)?;
    let p: BTreeMap<String, LabelDistribution> = read_label_file(pred)?
        .into_iter()
        .map(|l| (l.clip_id.clone(), l))
        .collect();
    ensure!(
        t.len() == p.len(),
        "{} has {} clips, {} has {}",
        target.display(),
        t.len(),
        pred.display(),
        p.len()
    );
    let pairs = t
        .into_iter()
        .map(|l| {
            let q = p
                .get(&l.clip_id)
                .with_context(|| format!("clip {} missing from {}", l.clip_id, pred.display()))?;
            Ok((l, q.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let kl = corpus_kl(&pairs, cfg.float("metrics.kl_eps"))?;
    let row = pred
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    single_value(KL, kl, report, force, &row)
}

/// Embeds and classifies every `.wav` file in `input` with the toy audio
/// models. Clip ids are the file stems.
pub fn embed_audio(input: &Path, embeddings: &Path, labels: &Path, force: bool) -> Result<()> {
    guard_output(embeddings, force)?;
    guard_output(labels, force)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")));
    files.sort();
    ensure!(!files.is_empty(), "no .wav files in {}", input.display());
    let (embedder, classifier) = (ToyEmbedder::default(), ToyClassifier::default());
    let mut rows = Vec::new();
    let mut clip_ids = Vec::new();
    let mut dists = Vec::new();
    for f in &files {
        let id = f
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let clip = AudioClip::read(f)?;
        for row in embedder.embed(&clip.samples, clip.sample_rate)? {
            rows.push(row);
            clip_ids.push(id.clone());
        }
        dists.push(LabelDistribution::new(
            id,
            classifier.classify(&clip.samples, clip.sample_rate)?,
        ));
    }
    let source = input.display().to_string();
    let set = EmbeddingSet::from_rows(&rows, &source)?;
    let descriptor = EmbeddingDescriptor {
        embedder: embedder.identity(),
        source_id: source,
        clip_ids,
    };
    write_embedding_file(embeddings, &set, &descriptor)?;
    write_label_file(labels, &dists)?;
    info!(
        "{} files: {} embedding rows, {} label distributions",
        files.len(),
        rows.len(),
        dists.len()
    );
    Ok(())
}

/// Resumable: clips already in the ledger with identical inputs are not
/// regenerated. A strategy with failed clips makes the command fail after
/// printing what it could score.
pub fn gen_music(cfg: &RunConfig) -> Result<()> {
    let dataset = cfg.input_path("paths.dataset", "--dataset")?;
    let manifest = cfg.input_path("paths.manifest", "--manifest")?;
    let out = cfg.require_path("paths.output", "--out")?;
    let bundles = read_dataset(&dataset)?;
    let references =
        ReferenceSet::from_records(&load_manifest(&manifest)?, parent_or_cwd(&manifest));
    let ledger = Ledger::open(&out)?;
    let experiment = ExperimentConfig {
        run_seed: cfg.seed(),
        duration_s: cfg.float("vbmg.duration_s"),
        retry: cfg.retry(),
        kl_eps: cfg.float("metrics.kl_eps"),
    };
    let report = run_experiment(
        &bundles,
        &cfg.strategies(),
        music_backend(cfg).as_ref(),
        &ToyEmbedder::default(),
        &ToyClassifier::default(),
        &references,
        &ledger,
        &experiment,
    )?;
    println!("{}", report.to_table(3));
    let partial: Vec<String> = report
        .rows
        .iter()
        .filter_map(|(k, r)| r.partial.as_ref().map(|why| format!("{k}: {why}")))
        .collect();
    ensure!(
        partial.is_empty(),
        "incomplete strategies: {}",
        partial.join("; ")
    );
    info!("ledger in {}", out.display());
    Ok(())
}

pub fn report(cfg: &RunConfig, ledger: &Path, force: bool) -> Result<()> {
    let out = report_out(cfg, force)?;
    let result = report_from_ledger(
        ledger,
        &ToyEmbedder::default(),
        &ToyClassifier::default(),
        cfg.float("metrics.kl_eps"),
    )?;
    emit(&result, &out)
}

pub fn subjective(cfg: &RunConfig, responses: &Path, force: bool) -> Result<()> {
    let out = report_out(cfg, force)?;
    let result = aggregate_subjective(&read_survey(responses)?)?;
    emit(&result, &out)
}

/// Runs the whole offline pipeline on the synthetic toy clips under `dir`.
pub fn demo(cfg: &RunConfig, dir: &Path, clips: usize, force: bool) -> Result<()> {
    if dir.exists() && std::fs::read_dir(dir)?.next().is_some() && !force {
        bail!("{} is not empty; pass --force to reuse it", dir.display());
    }
    let workspace = dir.join("workspace");
    toy::write_workspace(&workspace, clips)?;
    let corpus = dir.join("corpus");
    let mut cfg = cfg.clone();
    cfg.set_path("paths.manifest", &workspace.join("manifest.jsonl"));
    cfg.set_path(
        "backends.video.table",
        &workspace.join("video_captions.json"),
    );
    cfg.set_path(
        "backends.music.table",
        &workspace.join("music_captions.json"),
    );
    cfg.set_path("paths.output", &corpus);
    cfg.set_path("paths.cache", &dir.join("cache"));
    info!("[1/6] building the caption corpus");
    build_corpus(&cfg, force)?;

    cfg.set_path("paths.features", &corpus.join("features"));
    info!("[2/6] extracting audio features");
    extract_features(&cfg, force)?;

    cfg.set_path("paths.dataset", &corpus.join(TRAIN_FILE));
    cfg.set_path("paths.checkpoint", &dir.join("adapter.ckpt.json"));
    info!("[3/6] fine-tuning the adapter");
    finetune(&cfg, force)?;

    info!("[4/6] evaluating scene captions on the training split");
    cfg.set_path("paths.report", &dir.join("msi_train.json"));
    eval_msi(&cfg, force)?;
    info!("[5/6] evaluating scene captions on the test split");
    cfg.set_path("paths.dataset", &corpus.join(TEST_FILE));
    cfg.set_path("paths.report", &dir.join("msi_test.json"));
    eval_msi(&cfg, force)?;

    info!("[6/6] generating music for every caption strategy");
    let generated = dir.join("generated");
    cfg.set_path("paths.output", &generated);
    cfg.set_path("paths.dataset", &corpus.join(DATASET_FILE));
    gen_music(&cfg)?;
    cfg.set_path("paths.report", &dir.join("music_metrics.json"));
    report(&cfg, &generated, force)?;
    info!("demo outputs in {}", dir.display());
    Ok(())
}
