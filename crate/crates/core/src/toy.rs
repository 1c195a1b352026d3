//! A synthetic corpus for offline runs and overfit checks.
//!
//! Each clip is two seconds of tones: the first second's pitch encodes a
//! mood, the second's a place. Video and music captions come from lookup
//! tables and the scene caption from [`StubLlm`], so the scene caption of a
//! clip is a function of what can be heard in it.

use std::collections::BTreeMap;
use std::path::Path;

use crate::adapter::{AdapterConfig, AudioFeatureStack, ToyLmConfig};
use crate::audio::{synth, AudioClip, ToyEncoder, DEFAULT_SAMPLE_RATE};
use crate::corpus::{BundleGenerator, CaptionBundle, ClipRecord, LookupBackend, StubLlm};
use crate::error::Result;
use crate::finetune::{LrSchedule, MsiSample, TrainConfig, DEFAULT_QUESTION};
use crate::io;
use crate::retry::RetryPolicy;

pub const MOODS: [(&str, f64); 4] = [
    ("calm", 131.0),
    ("tense", 196.0),
    ("joyful", 294.0),
    ("gloomy", 440.0),
];
pub const PLACES: [(&str, f64); 4] = [
    ("beach", 660.0),
    ("forest", 990.0),
    ("city", 1480.0),
    ("desert", 2220.0),
];
const SEGMENT_S: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct ToyClip {
    pub record: ClipRecord,
    pub audio: AudioClip,
    pub video_caption: String,
    pub music_caption: String,
}

/// Up to 16 clips, one per (mood, place) pair, in a fixed order.
pub fn clips(n: usize) -> Vec<ToyClip> {
    let pairs = MOODS
        .iter()
        .flat_map(|m| PLACES.iter().map(move |p| (m, p)));
    pairs
        .take(n)
        .enumerate()
        .map(|(i, ((mood, mood_hz), (place, place_hz)))| {
            let clip_id = format!("toy-{i:02}");
            let labels = if i % 5 == 4 {
                vec!["Music", "Drum"]
            } else {
                vec!["Music"]
            };
            ToyClip {
                record: ClipRecord {
                    clip_id: clip_id.clone(),
                    media_uri: format!("toy://video/{clip_id}.mp4"),
                    audio_path: format!("audio/{clip_id}.wav"),
                    labels: labels.into_iter().map(String::from).collect(),
                    start_s: 0.0,
                    end_s: 2.0 * SEGMENT_S,
                },
                audio: synth::tone_sequence(
                    &[(*mood_hz, SEGMENT_S), (*place_hz, SEGMENT_S)],
                    DEFAULT_SAMPLE_RATE,
                    0.5,
                ),
                video_caption: format!("A {mood} evening at the {place}."),
                music_caption: format!("A {mood} melody that rises at the end."),
            }
        })
        .collect()
}

/// Lookup captioners keyed by media locator and audio path.
pub fn caption_tables(clips: &[ToyClip]) -> (BTreeMap<String, String>, BTreeMap<String, String>) {
    let video = clips
        .iter()
        .map(|c| (c.record.media_uri.clone(), c.video_caption.clone()))
        .collect();
    let music = clips
        .iter()
        .map(|c| (c.record.audio_path.clone(), c.music_caption.clone()))
        .collect();
    (video, music)
}

/// Runs the caption pipeline over the toy clips with offline backends.
pub fn bundles(clips: &[ToyClip]) -> Result<Vec<CaptionBundle>> {
    let (video, music) = caption_tables(clips);
    let video = LookupBackend::new("toy-video-captioner", video);
    let music = LookupBackend::new("toy-music-captioner", music);
    let llm = StubLlm;
    let mut generator = BundleGenerator::new(&video, &music, &llm, None);
    generator.retry = RetryPolicy::no_delay(1);
    let records: Vec<ClipRecord> = clips.iter().map(|c| c.record.clone()).collect();
    generator.generate_all(&records)
}

pub fn encoder() -> ToyEncoder {
    ToyEncoder::new(4, 16, 16, 17).expect("valid toy encoder dimensions")
}

pub fn lm_config() -> ToyLmConfig {
    ToyLmConfig {
        d_model: 96,
        n_layers: 2,
        n_heads: 4,
        d_ff: 192,
        max_seq_len: 64,
        seed: 11,
    }
}

pub fn adapter_config() -> AdapterConfig {
    AdapterConfig {
        prefix_len: 16,
        learned_prompt: true,
        ..AdapterConfig::with_defaults(4, 16, 96)
    }
}

pub fn train_config() -> TrainConfig {
    TrainConfig {
        epochs: 200,
        batch_size: 4,
        learning_rate: 3e-2,
        seed: 5,
        lr_schedule: LrSchedule::Cosine,
        ..TrainConfig::default()
    }
}

/// Encoded (features, question, scene caption) samples for `n` toy clips.
pub fn msi_samples(n: usize) -> Result<Vec<MsiSample>> {
    let clips = clips(n);
    let bundles = bundles(&clips)?;
    let enc = encoder();
    clips
        .iter()
        .zip(&bundles)
        .map(|(c, b)| {
            Ok(MsiSample {
                features: enc.encode(&c.audio, &c.record.clip_id)?,
                question: DEFAULT_QUESTION.to_string(),
                answer: b.msi_caption.clone(),
            })
        })
        .collect()
}

/// Writes the toy clips under `dir`: `manifest.jsonl`, `audio/<clip>.wav`,
/// and the two caption tables `video_captions.json` / `music_captions.json`.
pub fn write_workspace(dir: &Path, n: usize) -> Result<Vec<ToyClip>> {
    let clips = clips(n);
    let records: Vec<ClipRecord> = clips.iter().map(|c| c.record.clone()).collect();
    io::write_jsonl(&dir.join("manifest.jsonl"), &records)?;
    for c in &clips {
        c.audio.write(&dir.join(&c.record.audio_path))?;
    }
    let (video, music) = caption_tables(&clips);
    io::write_json(&dir.join("video_captions.json"), &video)?;
    io::write_json(&dir.join("music_captions.json"), &music)?;
    Ok(clips)
}

/// Encodes every clip with the toy encoder into `<dir>/<clip>.npy`.
pub fn write_features(clips: &[ToyClip], dir: &Path) -> Result<Vec<AudioFeatureStack>> {
    let enc = encoder();
    clips
        .iter()
        .map(|c| {
            let stack = enc.encode(&c.audio, &c.record.clip_id)?;
            stack.write(
                &dir.join(format!("{}.npy", io::file_stem_for(&c.record.clip_id))),
                &enc.identity(),
            )?;
            Ok(stack)
        })
        .collect()
}
