use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A captioner or LLM: one plain-text request, one plain-text answer.
pub trait CaptionBackend: Send + Sync {
    fn identity(&self) -> String;
    fn request(&self, input: &str) -> Result<String>;
}

/// Returns the same text for every input.
#[derive(Debug, Clone)]
pub struct FixedBackend {
    pub id: String,
    pub response: String,
}

impl FixedBackend {
    pub fn new(id: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            response: response.into(),
        }
    }
}

impl CaptionBackend for FixedBackend {
    fn identity(&self) -> String {
        self.id.clone()
    }

    fn request(&self, _input: &str) -> Result<String> {
        Ok(self.response.clone())
    }
}

/// Wraps a closure; handy for fault injection and call counting.
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F: Fn(&str) -> Result<String> + Send + Sync> FnBackend<F> {
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F: Fn(&str) -> Result<String> + Send + Sync> CaptionBackend for FnBackend<F> {
    fn identity(&self) -> String {
        self.id.clone()
    }

    fn request(&self, input: &str) -> Result<String> {
        (self.f)(input)
    }
}

/// Answers from a JSON object mapping inputs to outputs, e.g. precomputed
/// captions keyed by media locator.
#[derive(Debug, Clone)]
pub struct LookupBackend {
    id: String,
    table: BTreeMap<String, String>,
}

impl LookupBackend {
    pub fn new(id: impl Into<String>, table: BTreeMap<String, String>) -> Self {
        Self {
            id: id.into(),
            table,
        }
    }

    /// Loads a table; the identity is a digest of its contents, so moving
    /// the file does not invalidate cached results.
    pub fn from_file(path: &Path) -> Result<Self> {
        let table: BTreeMap<String, String> = crate::io::read_json(path)?;
        let digest = Sha256::digest(serde_json::to_vec(&table)?);
        Ok(Self::new(
            format!("lookup/{}", &hex::encode(digest)[..16]),
            table,
        ))
    }
}

impl CaptionBackend for LookupBackend {
    fn identity(&self) -> String {
        self.id.clone()
    }

    fn request(&self, input: &str) -> Result<String> {
        self.table
            .get(input)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("no entry for {input:?}")))
    }
}

/// Offline stand-in for the fusion/scene LLM. It reads the two captions out
/// of a prompt built from the default templates and answers
/// deterministically.
#[derive(Debug, Clone, Default)]
pub struct StubLlm;

fn quoted_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    let start = prompt.find(marker)? + marker.len();
    let end = prompt[start..]
        .find("\", ")
        .or_else(|| prompt[start..].find("\". "))?;
    Some(&prompt[start..start + end])
}

fn strip_sentence(s: &str) -> String {
    let s = s.trim().trim_end_matches(['.', '!', '?']);
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl CaptionBackend for StubLlm {
    fn identity(&self) -> String {
        "stub-llm/v1".to_string()
    }

    fn request(&self, input: &str) -> Result<String> {
        let video = quoted_after(input, "Video Caption: \"");
        let music = quoted_after(input, "Music Caption: \"");
        let (Some(video), Some(music)) = (video, music) else {
            return Err(Error::invalid(
                "stub LLM only understands caption-pair prompts",
            ));
        };
        if input.ends_with("What type of scene the music is suitable for?") {
            Ok(format!(
                "The music is suitable for a scene of {}.",
                strip_sentence(video)
            ))
        } else {
            Ok(format!(
                "{} It accompanies a scene where {}.",
                music.trim(),
                strip_sentence(video)
            ))
        }
    }
}

/// Remote backend speaking plain text over HTTP: the input is POSTed as
/// `text/plain` and the response body is the caption. Sampling settings go
/// in the query string.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub endpoint: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            temperature: 0.0,
            max_tokens: 256,
            timeout: Duration::from_secs(60),
            api_key: None,
        }
    }
}

impl CaptionBackend for HttpBackend {
    fn identity(&self) -> String {
        format!(
            "http:{}?temperature={}&max_tokens={}",
            self.endpoint, self.temperature, self.max_tokens
        )
    }

    fn request(&self, input: &str) -> Result<String> {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .new_agent();
        let mut req = agent
            .post(&self.endpoint)
            .query("temperature", self.temperature.to_string())
            .query("max_tokens", self.max_tokens.to_string())
            .header("Content-Type", "text/plain; charset=utf-8");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send(input)
            .map_err(|e| Error::invalid(format!("{}: {e}", self.endpoint)))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| Error::invalid(format!("{}: {e}", self.endpoint)))
    }
}
