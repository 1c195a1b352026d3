use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::Serialize;

use crate::audio::{synth, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

/// One text-to-music call. `clip_id` is context for local backends and
/// is not sent to remote services.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MusicRequest {
    #[serde(skip)]
    pub clip_id: String,
    pub caption: String,
    pub duration_s: f64,
    pub seed: u64,
}

/// Text-to-music service returning WAV bytes.
pub trait MusicBackend: Send + Sync {
    fn identity(&self) -> String;
    fn generate(&self, request: &MusicRequest) -> Result<Vec<u8>>;
}

/// Offline backend: a deterministic melody hashed from caption and seed.
#[derive(Debug, Clone)]
pub struct SineStub {
    pub sample_rate: u32,
}

impl Default for SineStub {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl MusicBackend for SineStub {
    fn identity(&self) -> String {
        format!("sine-stub/v1/sr={}", self.sample_rate)
    }

    fn generate(&self, request: &MusicRequest) -> Result<Vec<u8>> {
        synth::caption_melody(
            &request.caption,
            request.seed,
            request.duration_s,
            self.sample_rate,
        )
        .to_wav_bytes()
    }
}

/// Returns the clip's reference audio unchanged, whatever the caption.
#[derive(Debug, Clone)]
pub struct ReferenceEcho {
    pub references: BTreeMap<String, PathBuf>,
}

impl ReferenceEcho {
    pub fn new(references: BTreeMap<String, PathBuf>) -> Self {
        Self { references }
    }
}

impl MusicBackend for ReferenceEcho {
    fn identity(&self) -> String {
        "reference-echo/v1".to_string()
    }

    fn generate(&self, request: &MusicRequest) -> Result<Vec<u8>> {
        let path = self.references.get(&request.clip_id).ok_or_else(|| {
            Error::invalid(format!("no reference audio for clip {}", request.clip_id))
        })?;
        std::fs::read(path).map_err(|e| Error::io(path, e))
    }
}

/// Wraps a closure; handy for fault injection.
pub struct FnMusicBackend<F> {
    id: String,
    f: F,
}

impl<F> FnMusicBackend<F>
where
    F: Fn(&MusicRequest) -> Result<Vec<u8>> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> MusicBackend for FnMusicBackend<F>
where
    F: Fn(&MusicRequest) -> Result<Vec<u8>> + Send + Sync,
{
    fn identity(&self) -> String {
        self.id.clone()
    }

    fn generate(&self, request: &MusicRequest) -> Result<Vec<u8>> {
        (self.f)(request)
    }
}

/// Remote service: POSTs `{caption, duration_s, seed}` as JSON and expects
/// a WAV body.
#[derive(Debug, Clone)]
pub struct HttpMusicBackend {
    pub endpoint: String,
    pub timeout: Duration,
    pub api_key: Option<String>,
}

const MAX_AUDIO_BYTES: u64 = 256 * 1024 * 1024;

impl HttpMusicBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(300),
            api_key: None,
        }
    }
}

impl MusicBackend for HttpMusicBackend {
    fn identity(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn generate(&self, request: &MusicRequest) -> Result<Vec<u8>> {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .new_agent();
        let mut req = agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .header("Accept", "audio/wav");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let body = serde_json::to_vec(request)?;
        let mut resp = req
            .send(&body[..])
            .map_err(|e| Error::invalid(format!("{}: {e}", self.endpoint)))?;
        resp.body_mut()
            .with_config()
            .limit(MAX_AUDIO_BYTES)
            .read_to_vec()
            .map_err(|e| Error::invalid(format!("{}: {e}", self.endpoint)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioClip;

    fn request(seed: u64) -> MusicRequest {
        MusicRequest {
            clip_id: "c1".into(),
            caption: "A calm melody.".into(),
            duration_s: 3.0,
            seed,
        }
    }

    #[test]
    fn sine_stub_is_deterministic() {
        let stub = SineStub::default();
        let a = stub.generate(&request(4)).unwrap();
        assert_eq!(a, stub.generate(&request(4)).unwrap());
        assert_ne!(a, stub.generate(&request(5)).unwrap());
        let clip = AudioClip::from_wav_bytes(&a).unwrap();
        assert!((clip.duration_s() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn remote_payload_omits_clip_id() {
        let v = serde_json::to_value(request(1)).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"caption": "A calm melody.", "duration_s": 3.0, "seed": 1})
        );
    }
}
