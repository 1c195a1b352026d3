use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{
    generation_seed, select_caption, CaptionStrategy, GenerationStatus, Ledger, LedgerEntry,
    MusicBackend, MusicRequest, DEFAULT_DURATION_S, DURATION_TOLERANCE_S,
};
use crate::audio::AudioClip;
use crate::audio_metrics::{
    corpus_kl, embedding_stats, frechet_distance, AudioClassifier, AudioEmbedder, EmbeddingSet,
    LabelDistribution, DEFAULT_KL_EPS,
};
use crate::corpus::{CaptionBundle, ClipRecord};
use crate::error::{Error, Result};
use crate::io;
use crate::report::{MetricReport, FAD, KL};
use crate::retry::RetryPolicy;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub run_seed: u64,
    pub duration_s: f64,
    pub retry: RetryPolicy,
    pub kl_eps: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_seed: 0,
            duration_s: DEFAULT_DURATION_S,
            retry: RetryPolicy::default(),
            kl_eps: DEFAULT_KL_EPS,
        }
    }
}

/// Original soundtrack per clip.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceSet {
    pub paths: BTreeMap<String, PathBuf>,
}

impl ReferenceSet {
    /// Resolves each record's `audio_path` against `root`.
    pub fn from_records(records: &[ClipRecord], root: &Path) -> Self {
        Self {
            paths: records
                .iter()
                .map(|r| (r.clip_id.clone(), root.join(&r.audio_path)))
                .collect(),
        }
    }

    pub fn get(&self, clip_id: &str) -> Result<&Path> {
        self.paths
            .get(clip_id)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::invalid(format!("no reference audio for clip {clip_id}")))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn audio_rel_path(strategy: CaptionStrategy, clip_id: &str) -> String {
    format!(
        "audio/{}/{}.wav",
        strategy.name(),
        io::file_stem_for(clip_id)
    )
}

fn decode_checked(bytes: &[u8], requested: f64) -> Result<AudioClip> {
    let clip = AudioClip::from_wav_bytes(bytes)?;
    let got = clip.duration_s();
    if (got - requested).abs() > DURATION_TOLERANCE_S {
        return Err(Error::invalid(format!(
            "backend returned {got:.3} s of audio, requested {requested:.3} s (tolerance {DURATION_TOLERANCE_S} s)"
        )));
    }
    Ok(clip)
}

/// Calls the backend (with retries), checks the returned duration, writes
/// the audio under the ledger directory and records the call. Failures are
/// recorded too before the error is returned.
pub fn generate_music(
    ledger: &Ledger,
    backend: &dyn MusicBackend,
    strategy: CaptionStrategy,
    request: &MusicRequest,
    retry: &RetryPolicy,
    reference: Option<&Path>,
) -> Result<PathBuf> {
    if !(request.duration_s.is_finite() && request.duration_s > 0.0) {
        return Err(Error::invalid(format!(
            "duration_s must be positive, got {}",
            request.duration_s
        )));
    }
    if request.caption.trim().is_empty() {
        return Err(Error::invalid(format!(
            "clip {}: empty caption",
            request.clip_id
        )));
    }
    let mut entry = LedgerEntry {
        clip_id: request.clip_id.clone(),
        strategy,
        caption: request.caption.clone(),
        seed: request.seed,
        backend: backend.identity(),
        duration_s: request.duration_s,
        reference: reference.map(|p| p.display().to_string()),
        status: GenerationStatus::Failed {
            error: String::new(),
            attempts: 0,
        },
    };
    let outcome = retry.run(|| {
        let bytes = backend.generate(request)?;
        let clip = decode_checked(&bytes, request.duration_s)?;
        Ok::<_, Error>((bytes, clip))
    });
    match outcome {
        Ok((bytes, clip)) => {
            let rel = audio_rel_path(strategy, &request.clip_id);
            let path = ledger.dir().join(&rel);
            io::write_atomic(&path, &bytes)?;
            entry.status = GenerationStatus::Ok {
                audio_path: rel,
                sha256: sha256_hex(&bytes),
                audio_duration_s: clip.duration_s(),
            };
            ledger.append(&entry)?;
            Ok(path)
        }
        Err((e, attempts)) => {
            entry.status = GenerationStatus::Failed {
                error: e.to_string(),
                attempts,
            };
            ledger.append(&entry)?;
            Err(Error::Backend {
                backend: entry.backend,
                clip_id: entry.clip_id,
                attempts,
                message: e.to_string(),
            })
        }
    }
}

/// Whether a ledger entry already covers this exact request with intact
/// audio on disk.
fn reusable(ledger: &Ledger, entry: &LedgerEntry, request: &MusicRequest, backend: &str) -> bool {
    let GenerationStatus::Ok {
        audio_path, sha256, ..
    } = &entry.status
    else {
        return false;
    };
    entry.caption == request.caption
        && entry.seed == request.seed
        && entry.backend == backend
        && entry.duration_s == request.duration_s
        && std::fs::read(ledger.dir().join(audio_path)).is_ok_and(|b| sha256_hex(&b) == *sha256)
}

struct ClipFeatures {
    embeddings: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

fn clip_features(
    path: &Path,
    embedder: &dyn AudioEmbedder,
    classifier: &dyn AudioClassifier,
) -> Result<ClipFeatures> {
    let clip = AudioClip::read(path)?;
    let embeddings = embedder.embed(&clip.samples, clip.sample_rate)?;
    let labels = classifier.classify(&clip.samples, clip.sample_rate)?;
    if labels.len() != classifier.num_labels() {
        return Err(Error::Shape(format!(
            "classifier returned {} labels, expected {}",
            labels.len(),
            classifier.num_labels()
        )));
    }
    Ok(ClipFeatures { embeddings, labels })
}

/// FAD between the pooled embedding sets and mean per-clip KL. Both slices
/// are aligned by clip.
fn score(
    clip_ids: &[String],
    generated: &[ClipFeatures],
    reference: &[&ClipFeatures],
    kl_eps: f64,
) -> Result<(f64, f64)> {
    let pool = |fs: Vec<&ClipFeatures>, source: &str| {
        let rows: Vec<Vec<f64>> = fs
            .iter()
            .flat_map(|f| f.embeddings.iter().cloned())
            .collect();
        EmbeddingSet::from_rows(&rows, source)
    };
    let fad = frechet_distance(
        &embedding_stats(&pool(reference.to_vec(), "reference")?)?,
        &embedding_stats(&pool(generated.iter().collect(), "generated")?)?,
    )?;
    let pairs: Vec<_> = clip_ids
        .iter()
        .zip(reference.iter().zip(generated))
        .map(|(id, (r, g))| {
            (
                LabelDistribution::new(id.clone(), r.labels.clone()),
                LabelDistribution::new(id.clone(), g.labels.clone()),
            )
        })
        .collect();
    Ok((fad, corpus_kl(&pairs, kl_eps)?))
}

/// Scores one strategy from its latest ledger entries, keyed by clip.
fn score_strategy(
    dir: &Path,
    latest: &BTreeMap<String, &LedgerEntry>,
    reference_features: &BTreeMap<String, ClipFeatures>,
    embedder: &dyn AudioEmbedder,
    classifier: &dyn AudioClassifier,
    kl_eps: f64,
) -> std::result::Result<(f64, f64), String> {
    let failed: Vec<_> = latest
        .values()
        .filter_map(|e| match &e.status {
            GenerationStatus::Failed { error, .. } => Some(format!("{}: {error}", e.clip_id)),
            GenerationStatus::Ok { .. } => None,
        })
        .collect();
    if let Some(first) = failed.first() {
        return Err(format!(
            "{} of {} clips failed; first: {first}",
            failed.len(),
            latest.len()
        ));
    }
    let clip_ids: Vec<String> = latest.keys().cloned().collect();
    let generated = latest
        .par_iter()
        .map(|(_, e)| match &e.status {
            GenerationStatus::Ok { audio_path, .. } => {
                clip_features(&dir.join(audio_path), embedder, classifier)
            }
            GenerationStatus::Failed { .. } => unreachable!("failures handled above"),
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let reference: Vec<&ClipFeatures> = clip_ids.iter().map(|id| &reference_features[id]).collect();
    score(&clip_ids, &generated, &reference, kl_eps).map_err(|e| e.to_string())
}

fn reference_features(
    paths: &BTreeMap<String, PathBuf>,
    embedder: &dyn AudioEmbedder,
    classifier: &dyn AudioClassifier,
) -> Result<BTreeMap<String, ClipFeatures>> {
    paths
        .par_iter()
        .map(|(id, p)| Ok((id.clone(), clip_features(p, embedder, classifier)?)))
        .collect()
}

fn insert_scores(
    report: &mut MetricReport,
    strategy: CaptionStrategy,
    scored: std::result::Result<(f64, f64), String>,
) {
    match scored {
        Ok((fad, kl)) => report.insert_row(strategy.label(), [(FAD, fad), (KL, kl)]),
        Err(reason) => report.insert_partial(strategy.label(), reason),
    }
}

/// Generates music for every (strategy, clip) pair and scores each
/// strategy against the reference soundtracks. Calls already in the ledger
/// with identical inputs and intact audio are skipped, so an interrupted run
/// can be restarted. A strategy with any failed clip yields a partial row.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment(
    bundles: &[CaptionBundle],
    strategies: &[CaptionStrategy],
    music: &dyn MusicBackend,
    embedder: &dyn AudioEmbedder,
    classifier: &dyn AudioClassifier,
    references: &ReferenceSet,
    ledger: &Ledger,
    config: &ExperimentConfig,
) -> Result<MetricReport> {
    if bundles.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ref_paths = BTreeMap::new();
    for b in bundles {
        let p = references.get(&b.clip_id)?;
        let abs = std::path::absolute(p).map_err(|e| Error::io(p, e))?;
        if ref_paths.insert(b.clip_id.clone(), abs).is_some() {
            return Err(Error::invalid(format!("clip {} appears twice", b.clip_id)));
        }
    }
    let ref_features = reference_features(&ref_paths, embedder, classifier)?;
    let backend_id = music.identity();
    let mut report = MetricReport::new();
    for &strategy in strategies {
        let prepared: Vec<(MusicRequest, &Path)> = match bundles
            .iter()
            .map(|b| {
                Ok((
                    MusicRequest {
                        clip_id: b.clip_id.clone(),
                        caption: select_caption(b, strategy)?.to_string(),
                        duration_s: config.duration_s,
                        seed: generation_seed(config.run_seed, &b.clip_id, strategy),
                    },
                    ref_paths[&b.clip_id].as_path(),
                ))
            })
            .collect::<Result<_>>()
        {
            Ok(p) => p,
            Err(e) => {
                report.insert_partial(strategy.label(), e.to_string());
                continue;
            }
        };
        prepared.par_iter().for_each(|(request, reference)| {
            let done = ledger
                .latest_ok(&request.clip_id, strategy)
                .is_some_and(|e| reusable(ledger, &e, request, &backend_id));
            if !done {
                if let Err(e) = generate_music(
                    ledger,
                    music,
                    strategy,
                    request,
                    &config.retry,
                    Some(reference),
                ) {
                    log::warn!("{} / {}: {e}", strategy.name(), request.clip_id);
                }
            }
        });
        let entries = ledger.entries();
        let mut latest: BTreeMap<String, &LedgerEntry> = BTreeMap::new();
        for e in entries
            .iter()
            .filter(|e| e.strategy == strategy && ref_paths.contains_key(&e.clip_id))
        {
            latest.insert(e.clip_id.clone(), e);
        }
        let scored = score_strategy(
            ledger.dir(),
            &latest,
            &ref_features,
            embedder,
            classifier,
            config.kl_eps,
        );
        insert_scores(&mut report, strategy, scored);
    }
    Ok(report)
}

/// Recomputes the metric report from a ledger directory alone: the latest
/// entry per (strategy, clip) and the reference locators recorded with it.
pub fn report_from_ledger(
    dir: &Path,
    embedder: &dyn AudioEmbedder,
    classifier: &dyn AudioClassifier,
    kl_eps: f64,
) -> Result<MetricReport> {
    let entries = Ledger::read(dir)?;
    if entries.is_empty() {
        return Err(Error::invalid(format!(
            "ledger in {} has no entries",
            dir.display()
        )));
    }
    let mut ref_paths = BTreeMap::new();
    for e in entries.iter().filter(|e| e.is_ok()) {
        let r = e.reference.as_ref().ok_or_else(|| {
            Error::invalid(format!(
                "ledger entry for clip {} has no reference locator",
                e.clip_id
            ))
        })?;
        ref_paths.insert(e.clip_id.clone(), PathBuf::from(r));
    }
    let ref_features = reference_features(&ref_paths, embedder, classifier)?;
    let mut report = MetricReport::new();
    for strategy in CaptionStrategy::ALL {
        let mut latest: BTreeMap<String, &LedgerEntry> = BTreeMap::new();
        for e in entries.iter().filter(|e| e.strategy == strategy) {
            latest.insert(e.clip_id.clone(), e);
        }
        if latest.is_empty() {
            continue;
        }
        let scored = score_strategy(dir, &latest, &ref_features, embedder, classifier, kl_eps);
        insert_scores(&mut report, strategy, scored);
    }
    Ok(report)
}
