//! Caption corpus construction.
//!
//! Clip manifests and caption datasets are JSON Lines. Each clip gets a
//! video caption and a music caption from captioner backends; an LLM backend
//! then fuses the pair twice, once into a music description and once into a
//! scene ("what is this music suitable for") caption. Every backend call
//! goes through a [`ContentCache`], so reruns are free and resumable.

mod backend;
mod cache;
mod prompt;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backend::{CaptionBackend, FixedBackend, FnBackend, HttpBackend, LookupBackend, StubLlm};
pub use cache::ContentCache;
pub use prompt::{
    build_fusion_prompt, build_msi_prompt, PromptTemplates, FUSION_TEMPLATE, MSI_TEMPLATE,
};

use crate::error::{Error, Result};
use crate::io;
use crate::retry::RetryPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub media_uri: String,
    pub audio_path: String,
    pub labels: BTreeSet<String>,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionBundle {
    pub clip_id: String,
    pub video_caption: String,
    pub music_caption: String,
    pub fusion_caption: String,
    pub msi_caption: String,
    /// Caption field name → identity of the backend that produced it.
    #[serde(default)]
    pub backend_provenance: BTreeMap<String, String>,
}

impl CaptionBundle {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("video_caption", &self.video_caption),
            ("music_caption", &self.music_caption),
            ("fusion_caption", &self.fusion_caption),
            ("msi_caption", &self.msi_caption),
        ] {
            if value.trim().is_empty() {
                return Err(Error::invalid(format!(
                    "bundle {:?} has an empty {name}",
                    self.clip_id
                )));
            }
        }
        Ok(())
    }
}

/// Reads a JSONL manifest, preserving order. Malformed lines and duplicate
/// clip ids are reported with their 1-based line number.
pub fn load_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, record) in io::read_jsonl::<ClipRecord>(path)? {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.clip_id.is_empty() {
            return Err(bad("clip_id is empty".into()));
        }
        if record.end_s.partial_cmp(&record.start_s) != Some(std::cmp::Ordering::Greater) {
            return Err(bad(format!(
                "clip {:?} has end_s {} not after start_s {}",
                record.clip_id, record.end_s, record.start_s
            )));
        }
        if !seen.insert(record.clip_id.clone()) {
            return Err(Error::DuplicateClip {
                path: path.to_path_buf(),
                line,
                clip_id: record.clip_id,
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Records whose label set contains `label`, in input order.
pub fn filter_by_label(records: &[ClipRecord], label: &str) -> Vec<ClipRecord> {
    records
        .iter()
        .filter(|r| r.labels.contains(label))
        .cloned()
        .collect()
}

pub fn write_dataset(bundles: &[CaptionBundle], path: &Path) -> Result<()> {
    io::write_jsonl(path, bundles)
}

/// Reads a dataset written by [`write_dataset`]. Unknown fields are ignored.
pub fn read_dataset(path: &Path) -> Result<Vec<CaptionBundle>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, b)| b).collect())
}

/// Seeded Fisher–Yates shuffle, then the first `floor(f·N)` bundles train
/// and the rest test.
pub fn split_dataset(
    bundles: &[CaptionBundle],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<CaptionBundle>, Vec<CaptionBundle>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if bundles.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_train = train_size(bundles.len(), train_fraction);
    let mut shuffled = bundles.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(n_train);
    Ok((shuffled, test))
}

/// `floor(f·N)`, nudged so that fractions like 0.8 written in decimal
/// behave as their exact values (`0.8·3371` is 2696.8 either way, but
/// `0.7·10` must be 7).
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64) + 1e-9).floor() as usize
}

/// Backends, cache and retry policy used to caption clips.
pub struct BundleGenerator<'a> {
    pub video: &'a dyn CaptionBackend,
    pub music: &'a dyn CaptionBackend,
    pub llm: &'a dyn CaptionBackend,
    pub cache: Option<&'a ContentCache>,
    pub retry: RetryPolicy,
    pub templates: PromptTemplates,
}

impl<'a> BundleGenerator<'a> {
    pub fn new(
        video: &'a dyn CaptionBackend,
        music: &'a dyn CaptionBackend,
        llm: &'a dyn CaptionBackend,
        cache: Option<&'a ContentCache>,
    ) -> Self {
        Self {
            video,
            music,
            llm,
            cache,
            retry: RetryPolicy::default(),
            templates: PromptTemplates::default(),
        }
    }

    fn call(
        &self,
        backend: &dyn CaptionBackend,
        input: &str,
        clip_id: &str,
    ) -> Result<(String, String)> {
        let id = backend.identity();
        if let Some(hit) = self.cache.map(|c| c.get(&id, input)).transpose()?.flatten() {
            return Ok((hit, id));
        }
        let text = self
            .retry
            .run(|| {
                let text = backend.request(input)?;
                let text = text.trim();
                if text.is_empty() {
                    return Err(Error::invalid("backend returned an empty caption"));
                }
                Ok(text.to_string())
            })
            .map_err(|(e, attempts)| Error::Backend {
                backend: id.clone(),
                clip_id: clip_id.to_string(),
                attempts,
                message: e.to_string(),
            })?;
        if let Some(cache) = self.cache {
            cache.put(&id, input, &text)?;
        }
        Ok((text, id))
    }

    /// Captions one clip. With a warm cache no backend is called.
    pub fn generate(&self, record: &ClipRecord) -> Result<CaptionBundle> {
        let id = &record.clip_id;
        let (video_caption, video_id) = self.call(self.video, &record.media_uri, id)?;
        let (music_caption, music_id) = self.call(self.music, &record.audio_path, id)?;
        let fusion_prompt = self
            .templates
            .fusion_prompt(&video_caption, &music_caption)?;
        let msi_prompt = self.templates.msi_prompt(&video_caption, &music_caption)?;
        let (fusion_caption, llm_id) = self.call(self.llm, &fusion_prompt, id)?;
        let (msi_caption, _) = self.call(self.llm, &msi_prompt, id)?;
        let backend_provenance = BTreeMap::from([
            ("video_caption".to_string(), video_id),
            ("music_caption".to_string(), music_id),
            ("fusion_caption".to_string(), llm_id.clone()),
            ("msi_caption".to_string(), llm_id),
        ]);
        Ok(CaptionBundle {
            clip_id: id.clone(),
            video_caption,
            music_caption,
            fusion_caption,
            msi_caption,
            backend_provenance,
        })
    }

    /// Captions clips in parallel; output order follows `records`.
    pub fn generate_all(&self, records: &[ClipRecord]) -> Result<Vec<CaptionBundle>> {
        records.par_iter().map(|r| self.generate(r)).collect()
    }
}

/// Captions one clip with the default templates and retry policy.
pub fn generate_bundle(
    record: &ClipRecord,
    video: &dyn CaptionBackend,
    music: &dyn CaptionBackend,
    llm: &dyn CaptionBackend,
    cache: Option<&ContentCache>,
) -> Result<CaptionBundle> {
    BundleGenerator::new(video, music, llm, cache).generate(record)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    fn record(id: &str, labels: &[&str]) -> ClipRecord {
        ClipRecord {
            clip_id: id.into(),
            media_uri: format!("media/{id}.mp4"),
            audio_path: format!("audio/{id}.wav"),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            start_s: 30.0,
            end_s: 40.0,
        }
    }

    fn bundle(id: &str) -> CaptionBundle {
        CaptionBundle {
            clip_id: id.into(),
            video_caption: "v".into(),
            music_caption: "m".into(),
            fusion_caption: "f".into(),
            msi_caption: "s".into(),
            backend_provenance: BTreeMap::new(),
        }
    }

    #[test]
    fn manifest_order_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_manifest(&path).unwrap().is_empty());

        let lines: Vec<String> = ["b", "a"]
            .iter()
            .map(|id| serde_json::to_string(&record(id, &["Music"])).unwrap())
            .collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let ids: Vec<_> = load_manifest(&path)
            .unwrap()
            .into_iter()
            .map(|r| r.clip_id)
            .collect();
        assert_eq!(ids, ["b", "a"]);

        std::fs::write(&path, format!("{}\n{}\n", lines[0], lines[0])).unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::DuplicateClip { line: 2, .. })
        ));

        std::fs::write(
            &path,
            r#"{"media_uri":"x","audio_path":"y","labels":["Music"],"start_s":0,"end_s":10}"#,
        )
        .unwrap();
        match load_manifest(&path) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("clip_id"));
            }
            other => panic!("{other:?}"),
        }
        assert!(load_manifest(&dir.path().join("missing.jsonl")).is_err());
    }

    #[test]
    fn filter_examples() {
        let recs = vec![
            record("1", &["Music"]),
            record("2", &["Speech"]),
            record("3", &["Music", "Drum"]),
        ];
        let ids = |v: Vec<ClipRecord>| v.into_iter().map(|r| r.clip_id).collect::<Vec<_>>();
        let once = filter_by_label(&recs, "Music");
        assert_eq!(ids(once.clone()), ["1", "3"]);
        assert_eq!(filter_by_label(&once, "Music"), once);
        assert!(filter_by_label(&recs, "Siren").is_empty());
    }

    #[test]
    fn split_floor_rule() {
        let b: Vec<_> = (0..10).map(|i| bundle(&i.to_string())).collect();
        let (train, test) = split_dataset(&b, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(split_dataset(&b, 0.8, 7).unwrap(), (train, test));
        assert_eq!(train_size(3371, 0.8), 2696);
        assert_eq!(train_size(10, 0.7), 7);
        assert!(split_dataset(&b, 1.0, 0).is_err());
        assert!(split_dataset(&b, 0.0, 0).is_err());
    }

    #[test]
    fn dataset_round_trip_and_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&[], &path).unwrap();
        assert!(read_dataset(&path).unwrap().is_empty());
        let mut b = bundle("x");
        b.msi_caption = "line one\n\"quoted\" – ünïcode".into();
        write_dataset(std::slice::from_ref(&b), &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), vec![b]);
        std::fs::write(
            &path,
            r#"{"clip_id":"y","video_caption":"v","music_caption":"m","fusion_caption":"f","msi_caption":"s","backend_provenance":{},"rating":5}"#,
        )
        .unwrap();
        assert_eq!(read_dataset(&path).unwrap(), vec![bundle("y")]);
    }

    #[test]
    fn generation_with_stubs_then_warm_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContentCache::open(dir.path()).unwrap();
        let calls = AtomicUsize::new(0);
        let counted = |text: &'static str| {
            let calls = &calls;
            FnBackend::new(format!("stub-{text}"), move |_: &str| {
                calls.fetch_add(1, Ordering::SeqCst);
                Ok(format!("  {text}  "))
            })
        };
        let (video, music) = (counted("A crowd cheers."), counted("Tense strings."));
        let llm = FnBackend::new("echo-llm", |p: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(p.to_string())
        });
        let rec = record("c1", &["Music"]);
        let b = generate_bundle(&rec, &video, &music, &llm, Some(&cache)).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        assert_eq!(b.video_caption, "A crowd cheers.");
        assert_eq!(b.music_caption, "Tense strings.");
        assert_eq!(
            b.fusion_caption,
            build_fusion_prompt("A crowd cheers.", "Tense strings.").unwrap()
        );
        assert_eq!(
            b.msi_caption,
            build_msi_prompt("A crowd cheers.", "Tense strings.").unwrap()
        );
        assert_eq!(b.backend_provenance["msi_caption"], "echo-llm");

        let again = generate_bundle(&rec, &video, &music, &llm, Some(&cache)).unwrap();
        assert_eq!(again, b);
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn backend_failure_names_clip_and_backend() {
        let broken = FnBackend::new("broken-captioner", |_: &str| {
            Err(Error::invalid("connection refused"))
        });
        let ok = FixedBackend::new("fixed", "x");
        let mut generator = BundleGenerator::new(&broken, &ok, &ok, None);
        generator.retry = RetryPolicy::no_delay(3);
        let err = generator
            .generate(&record("clip-9", &["Music"]))
            .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("clip-9") && msg.contains("broken-captioner"),
            "{msg}"
        );
        assert!(matches!(err, Error::Backend { attempts: 3, .. }));
    }

    #[test]
    fn empty_backend_response_is_an_error() {
        let blank = FixedBackend::new("blank", "   ");
        let mut generator = BundleGenerator::new(&blank, &blank, &blank, None);
        generator.retry = RetryPolicy::no_delay(1);
        assert!(generator.generate(&record("c", &["Music"])).is_err());
    }
}
