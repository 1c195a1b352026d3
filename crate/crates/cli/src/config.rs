//! Run configuration.
//!
//! Every setting has a dotted key such as `train.epochs`. Values are layered
//! from four sources, later ones winning: built-in defaults, a TOML file
//! (`--config`), command-line flags, and `MUSISCENE_*` environment variables.
//! The environment name of a key is its upper-cased form with dots replaced
//! by underscores, so `corpus.train_fraction` is
//! `MUSISCENE_CORPUS_TRAIN_FRACTION`.
//!
//! The TOML file may use dotted keys or tables; both flatten to the same
//! keys. Unknown keys and ill-typed values are rejected with the key named.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use musiscene::adapter::{AdapterConfig, ToyLmConfig};
use musiscene::finetune::{LrSchedule, TrainConfig};
use musiscene::retry::RetryPolicy;
use musiscene::toy;
use musiscene::vbmg::{CaptionStrategy, DEFAULT_DURATION_S};

pub const ENV_PREFIX: &str = "MUSISCENE_";
/// Log filter; read directly by the logger rather than through the key table.
pub const LOG_ENV: &str = "MUSISCENE_LOG";

/// A bad invocation: unknown key, ill-typed or out-of-range value, missing
/// required setting or input. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> UsageError {
    UsageError(message.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Non-negative integer.
    Int,
    Float,
    Bool,
    Str,
    Path,
    /// Comma-separated in flags and the environment, an array in TOML.
    IntList,
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

const fn spec(key: &'static str, kind: Kind, help: &'static str) -> KeySpec {
    KeySpec { key, kind, help }
}

pub const KEYS: &[KeySpec] = &[
    spec(
        "seed",
        Kind::Int,
        "run seed: corpus split, adapter init, batch order, generation seeds",
    ),
    spec("paths.manifest", Kind::Path, "clip manifest (JSON Lines)"),
    spec("paths.dataset", Kind::Path, "caption dataset (JSON Lines)"),
    spec(
        "paths.cache",
        Kind::Path,
        "backend response cache directory",
    ),
    spec(
        "paths.features",
        Kind::Path,
        "directory of per-clip feature files",
    ),
    spec("paths.checkpoint", Kind::Path, "adapter checkpoint"),
    spec("paths.output", Kind::Path, "output directory"),
    spec("paths.report", Kind::Path, "output report (JSON)"),
    spec(
        "corpus.label",
        Kind::Str,
        "audio-event label a clip must carry",
    ),
    spec(
        "corpus.train_fraction",
        Kind::Float,
        "share of clips in the training split, in (0, 1)",
    ),
    spec(
        "backends.api_key",
        Kind::Str,
        "bearer token sent to every remote backend",
    ),
    spec(
        "backends.video.table",
        Kind::Path,
        "video captions as a JSON object keyed by media_uri",
    ),
    spec(
        "backends.video.endpoint",
        Kind::Str,
        "remote video captioner URL",
    ),
    spec(
        "backends.music.table",
        Kind::Path,
        "music captions as a JSON object keyed by audio_path",
    ),
    spec(
        "backends.music.endpoint",
        Kind::Str,
        "remote music captioner URL",
    ),
    spec(
        "backends.llm.endpoint",
        Kind::Str,
        "remote LLM URL; the offline stub is used when unset",
    ),
    spec(
        "backends.llm.temperature",
        Kind::Float,
        "LLM sampling temperature",
    ),
    spec(
        "backends.llm.max_tokens",
        Kind::Int,
        "LLM response length limit",
    ),
    spec(
        "backends.generator.endpoint",
        Kind::Str,
        "remote text-to-music URL; the sine stub is used when unset",
    ),
    spec(
        "backends.embedder.endpoint",
        Kind::Str,
        "remote token encoder for BERT-Score; hash embedder when unset",
    ),
    spec("retry.attempts", Kind::Int, "attempts per backend call"),
    spec(
        "retry.base_delay_ms",
        Kind::Int,
        "backoff before the second attempt, doubled after each failure",
    ),
    spec("train.epochs", Kind::Int, "training epochs"),
    spec("train.batch_size", Kind::Int, "samples per optimizer step"),
    spec("train.learning_rate", Kind::Float, "Adam learning rate"),
    spec("train.lr_schedule", Kind::Str, "constant or cosine"),
    spec(
        "train.question",
        Kind::Str,
        "question paired with every clip",
    ),
    spec("lm.d_model", Kind::Int, "toy LM width"),
    spec("lm.n_layers", Kind::Int, "toy LM depth"),
    spec("lm.n_heads", Kind::Int, "toy LM attention heads"),
    spec("lm.d_ff", Kind::Int, "toy LM feed-forward width"),
    spec("lm.max_seq_len", Kind::Int, "toy LM context length"),
    spec("lm.seed", Kind::Int, "toy LM weight seed"),
    spec("adapter.prefix_len", Kind::Int, "prefix slots"),
    spec(
        "adapter.dense_hidden_dims",
        Kind::IntList,
        "hidden widths of the dense projector",
    ),
    spec(
        "adapter.injected_layers",
        Kind::Int,
        "top LM layers that attend to the prefix",
    ),
    spec("adapter.gate_init", Kind::Float, "initial injection gate"),
    spec(
        "adapter.learned_prompt",
        Kind::Bool,
        "add a learned prompt to the projected audio",
    ),
    spec("decode.max_len", Kind::Int, "answer length limit in tokens"),
    spec(
        "metrics.kl_eps",
        Kind::Float,
        "floor on predicted label probabilities",
    ),
    spec(
        "vbmg.strategies",
        Kind::Str,
        "comma-separated caption strategies",
    ),
    spec(
        "vbmg.duration_s",
        Kind::Float,
        "requested music length in seconds",
    ),
];

pub fn key_spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == key)
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Bool(bool),
    Str(String),
    IntList(Vec<usize>),
}

impl Value {
    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(v) => (*v).into(),
            Value::Float(v) => (*v).into(),
            Value::Bool(v) => (*v).into(),
            Value::Str(v) => v.clone().into(),
            Value::IntList(v) => v.clone().into(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
            Value::IntList(v) => write!(f, "{v:?}"),
        }
    }
}

/// Where a value came from, for error messages and `musiscene config`.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Default,
    File(PathBuf),
    Flag(String),
    Env(String),
    Internal,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::File(p) => write!(f, "config file {}", p.display()),
            Origin::Flag(name) => write!(f, "flag {name}"),
            Origin::Env(name) => write!(f, "environment variable {name}"),
            Origin::Internal => f.write_str("internal"),
        }
    }
}

/// A flag value destined for `key`.
#[derive(Debug, Clone)]
pub struct FlagValue {
    pub key: &'static str,
    pub flag: String,
    pub raw: String,
}

impl FlagValue {
    pub fn new(key: &'static str, flag: &str, raw: impl ToString) -> Self {
        Self {
            key,
            flag: flag.to_string(),
            raw: raw.to_string(),
        }
    }
}

fn parse_str(kind: Kind, raw: &str) -> Result<Value, String> {
    let raw_t = raw.trim();
    match kind {
        Kind::Int => raw_t
            .parse()
            .map(Value::Int)
            .map_err(|_| format!("expected a non-negative integer, got {raw:?}")),
        Kind::Float => raw_t
            .parse()
            .map(Value::Float)
            .map_err(|_| format!("expected a number, got {raw:?}")),
        Kind::Bool => match raw_t.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Ok(Value::Bool(true)),
            "false" | "0" | "no" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got {raw:?}")),
        },
        Kind::Str | Kind::Path => Ok(Value::Str(raw.to_string())),
        Kind::IntList => raw_t
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| format!("expected comma-separated integers, got {raw:?}"))
            })
            .collect::<Result<_, _>>()
            .map(Value::IntList),
    }
}

fn from_toml(kind: Kind, v: &toml::Value) -> Result<Value, String> {
    let non_negative =
        |i: i64| u64::try_from(i).map_err(|_| format!("expected a non-negative integer, got {i}"));
    match (kind, v) {
        (Kind::Int, toml::Value::Integer(i)) => non_negative(*i).map(Value::Int),
        (Kind::Float, toml::Value::Float(x)) => Ok(Value::Float(*x)),
        (Kind::Float, toml::Value::Integer(i)) => Ok(Value::Float(*i as f64)),
        (Kind::Bool, toml::Value::Boolean(b)) => Ok(Value::Bool(*b)),
        (Kind::Str | Kind::Path, toml::Value::String(s)) => Ok(Value::Str(s.clone())),
        (Kind::IntList, toml::Value::Array(items)) => items
            .iter()
            .map(|item| match item {
                toml::Value::Integer(i) => non_negative(*i).map(|u| u as usize),
                other => Err(format!(
                    "expected an array of integers, found {}",
                    other.type_str()
                )),
            })
            .collect::<Result<_, _>>()
            .map(Value::IntList),
        (kind, other) => {
            Err(format!("expected {kind:?}, found {}", other.type_str()).to_lowercase())
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(inner) => flatten(&key, inner, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn defaults() -> Vec<(&'static str, Value)> {
    let train = toy::train_config();
    let lm = toy::lm_config();
    let adapter = toy::adapter_config();
    let retry = RetryPolicy::default();
    let strategies: Vec<&str> = CaptionStrategy::ALL.iter().map(|s| s.name()).collect();
    let schedule = match train.lr_schedule {
        LrSchedule::Constant => "constant",
        LrSchedule::Cosine => "cosine",
    };
    vec![
        ("seed", Value::Int(0)),
        ("corpus.label", Value::Str("Music".into())),
        ("corpus.train_fraction", Value::Float(train.train_fraction)),
        ("backends.llm.temperature", Value::Float(0.0)),
        ("backends.llm.max_tokens", Value::Int(256)),
        ("retry.attempts", Value::Int(retry.attempts.into())),
        (
            "retry.base_delay_ms",
            Value::Int(retry.base_delay.as_millis() as u64),
        ),
        ("train.epochs", Value::Int(train.epochs as u64)),
        ("train.batch_size", Value::Int(train.batch_size as u64)),
        ("train.learning_rate", Value::Float(train.learning_rate)),
        ("train.lr_schedule", Value::Str(schedule.into())),
        (
            "train.question",
            Value::Str(train.question_template.clone()),
        ),
        ("lm.d_model", Value::Int(lm.d_model as u64)),
        ("lm.n_layers", Value::Int(lm.n_layers as u64)),
        ("lm.n_heads", Value::Int(lm.n_heads as u64)),
        ("lm.d_ff", Value::Int(lm.d_ff as u64)),
        ("lm.max_seq_len", Value::Int(lm.max_seq_len as u64)),
        ("lm.seed", Value::Int(lm.seed)),
        ("adapter.prefix_len", Value::Int(adapter.prefix_len as u64)),
        (
            "adapter.dense_hidden_dims",
            Value::IntList(adapter.dense_hidden_dims.clone()),
        ),
        (
            "adapter.injected_layers",
            Value::Int(adapter.injected_layers as u64),
        ),
        ("adapter.gate_init", Value::Float(adapter.gate_init)),
        (
            "adapter.learned_prompt",
            Value::Bool(adapter.learned_prompt),
        ),
        ("decode.max_len", Value::Int(32)),
        (
            "metrics.kl_eps",
            Value::Float(musiscene::audio_metrics::DEFAULT_KL_EPS),
        ),
        ("vbmg.strategies", Value::Str(strategies.join(","))),
        ("vbmg.duration_s", Value::Float(DEFAULT_DURATION_S)),
    ]
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    origin: Origin,
}

/// Resolved and validated settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    entries: BTreeMap<&'static str, Entry>,
}

impl RunConfig {
    /// Layers defaults, `file`, `flags` and the `MUSISCENE_*` variables in
    /// `env`, then validates. Returns the config and any warnings.
    pub fn resolve(
        file: Option<&Path>,
        flags: &[FlagValue],
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<(Self, Vec<String>), UsageError> {
        let mut cfg = Self {
            entries: defaults()
                .into_iter()
                .map(|(k, value)| {
                    (
                        k,
                        Entry {
                            value,
                            origin: Origin::Default,
                        },
                    )
                })
                .collect(),
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
                usage(format!(
                    "config file {}: {}",
                    path.display(),
                    one_line(&e.to_string())
                ))
            })?;
            let mut pairs = Vec::new();
            flatten("", &table, &mut pairs);
            for (key, raw) in pairs {
                let spec = key_spec(&key).ok_or_else(|| {
                    usage(format!(
                        "unknown key {key} in config file {}",
                        path.display()
                    ))
                })?;
                let origin = Origin::File(path.to_path_buf());
                let value =
                    from_toml(spec.kind, &raw).map_err(|m| invalid(spec.key, &origin, &m))?;
                cfg.entries.insert(spec.key, Entry { value, origin });
            }
        }
        for f in flags {
            let spec = key_spec(f.key)
                .ok_or_else(|| usage(format!("unknown key {} for {}", f.key, f.flag)))?;
            let origin = Origin::Flag(f.flag.clone());
            let value = parse_str(spec.kind, &f.raw).map_err(|m| invalid(spec.key, &origin, &m))?;
            cfg.entries.insert(spec.key, Entry { value, origin });
        }
        let mut warnings = Vec::new();
        let mut env: Vec<_> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        env.sort();
        for (name, raw) in env {
            if name == LOG_ENV {
                continue;
            }
            let Some(spec) = KEYS.iter().find(|s| env_name(s.key) == name) else {
                warnings.push(format!("ignoring unknown environment variable {name}"));
                continue;
            };
            let origin = Origin::Env(name);
            let value = parse_str(spec.kind, &raw).map_err(|m| invalid(spec.key, &origin, &m))?;
            cfg.entries.insert(spec.key, Entry { value, origin });
        }
        cfg.validate()?;
        Ok((cfg, warnings))
    }

    /// Overrides `key` without the layering rules. Used by composite
    /// commands that route their own intermediate files.
    pub fn set(&mut self, key: &'static str, value: Value) {
        debug_assert!(key_spec(key).is_some(), "unknown key {key}");
        self.entries.insert(
            key,
            Entry {
                value,
                origin: Origin::Internal,
            },
        );
    }

    pub fn set_path(&mut self, key: &'static str, path: &Path) {
        self.set(key, Value::Str(path.display().to_string()));
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn fail(&self, key: &'static str, message: &str) -> UsageError {
        let origin = self
            .entry(key)
            .map(|e| e.origin.clone())
            .unwrap_or(Origin::Default);
        invalid(key, &origin, message)
    }

    pub fn int(&self, key: &'static str) -> u64 {
        match self.entry(key).map(|e| &e.value) {
            Some(Value::Int(v)) => *v,
            other => unreachable!("{key} is an integer setting with a default, found {other:?}"),
        }
    }

    pub fn usize(&self, key: &'static str) -> usize {
        self.int(key) as usize
    }

    pub fn float(&self, key: &'static str) -> f64 {
        match self.entry(key).map(|e| &e.value) {
            Some(Value::Float(v)) => *v,
            other => unreachable!("{key} is a numeric setting with a default, found {other:?}"),
        }
    }

    pub fn bool(&self, key: &'static str) -> bool {
        match self.entry(key).map(|e| &e.value) {
            Some(Value::Bool(v)) => *v,
            other => unreachable!("{key} is a boolean setting with a default, found {other:?}"),
        }
    }

    pub fn int_list(&self, key: &'static str) -> Vec<usize> {
        match self.entry(key).map(|e| &e.value) {
            Some(Value::IntList(v)) => v.clone(),
            other => unreachable!("{key} is a list setting with a default, found {other:?}"),
        }
    }

    /// An optional string setting; empty strings count as unset.
    pub fn string(&self, key: &'static str) -> Option<String> {
        match self.entry(key).map(|e| &e.value) {
            Some(Value::Str(s)) if !s.trim().is_empty() => Some(s.clone()),
            _ => None,
        }
    }

    pub fn path(&self, key: &'static str) -> Option<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    /// A path that must be set, named by `flag` in the error.
    pub fn require_path(&self, key: &'static str, flag: &str) -> Result<PathBuf, UsageError> {
        self.path(key).ok_or_else(|| {
            usage(format!(
                "missing required setting {key} (pass {flag}, set {}, or add it to the config file)",
                env_name(key)
            ))
        })
    }

    /// A required path that must already exist.
    pub fn input_path(&self, key: &'static str, flag: &str) -> Result<PathBuf, UsageError> {
        let p = self.require_path(key, flag)?;
        if !p.exists() {
            return Err(self.fail(key, &format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn seed(&self) -> u64 {
        self.int("seed")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.usize("train.epochs"),
            batch_size: self.usize("train.batch_size"),
            learning_rate: self.float("train.learning_rate"),
            seed: self.seed(),
            train_fraction: self.float("corpus.train_fraction"),
            question_template: self.string("train.question").unwrap_or_default(),
            lr_schedule: self.lr_schedule().expect("validated"),
        }
    }

    fn lr_schedule(&self) -> Option<LrSchedule> {
        match self
            .string("train.lr_schedule")?
            .to_ascii_lowercase()
            .as_str()
        {
            "constant" => Some(LrSchedule::Constant),
            "cosine" => Some(LrSchedule::Cosine),
            _ => None,
        }
    }

    pub fn lm_config(&self) -> ToyLmConfig {
        ToyLmConfig {
            d_model: self.usize("lm.d_model"),
            n_layers: self.usize("lm.n_layers"),
            n_heads: self.usize("lm.n_heads"),
            d_ff: self.usize("lm.d_ff"),
            max_seq_len: self.usize("lm.max_seq_len"),
            seed: self.int("lm.seed"),
        }
    }

    /// Adapter settings for features of the given shape.
    pub fn adapter_config(&self, num_layers_in: usize, feature_dim: usize) -> AdapterConfig {
        AdapterConfig {
            num_layers_in,
            feature_dim,
            model_dim: self.usize("lm.d_model"),
            prefix_len: self.usize("adapter.prefix_len"),
            dense_hidden_dims: self.int_list("adapter.dense_hidden_dims"),
            injected_layers: self.usize("adapter.injected_layers"),
            gate_init: self.float("adapter.gate_init"),
            learned_prompt: self.bool("adapter.learned_prompt"),
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.int("retry.attempts").min(u32::MAX as u64) as u32,
            base_delay: std::time::Duration::from_millis(self.int("retry.base_delay_ms")),
        }
    }

    pub fn strategies(&self) -> Vec<CaptionStrategy> {
        CaptionStrategy::parse_list(&self.string("vbmg.strategies").unwrap_or_default())
            .expect("validated")
    }

    fn validate(&self) -> Result<(), UsageError> {
        let frac = self.float("corpus.train_fraction");
        if !(frac > 0.0 && frac < 1.0) {
            return Err(self.fail(
                "corpus.train_fraction",
                &format!("must lie in (0, 1), got {frac}"),
            ));
        }
        for key in [
            "train.epochs",
            "train.batch_size",
            "lm.d_model",
            "lm.n_layers",
            "lm.n_heads",
            "lm.d_ff",
            "lm.max_seq_len",
            "adapter.prefix_len",
            "adapter.injected_layers",
            "decode.max_len",
            "retry.attempts",
        ] {
            if self.int(key) == 0 {
                return Err(self.fail(key, "must be at least 1"));
            }
        }
        for key in ["train.learning_rate", "metrics.kl_eps", "vbmg.duration_s"] {
            let v = self.float(key);
            if !(v > 0.0 && v.is_finite()) {
                return Err(self.fail(key, &format!("must be positive, got {v}")));
            }
        }
        for key in ["adapter.gate_init", "backends.llm.temperature"] {
            if !self.float(key).is_finite() {
                return Err(self.fail(key, "must be finite"));
            }
        }
        if self.float("backends.llm.temperature") < 0.0 {
            return Err(self.fail("backends.llm.temperature", "must not be negative"));
        }
        if self.int_list("adapter.dense_hidden_dims").contains(&0) {
            return Err(self.fail("adapter.dense_hidden_dims", "entries must be positive"));
        }
        if !self
            .usize("lm.d_model")
            .is_multiple_of(self.usize("lm.n_heads"))
        {
            return Err(self.fail("lm.n_heads", "must divide lm.d_model"));
        }
        if self.usize("adapter.injected_layers") > self.usize("lm.n_layers") {
            return Err(self.fail("adapter.injected_layers", "must not exceed lm.n_layers"));
        }
        if self.lr_schedule().is_none() {
            return Err(self.fail("train.lr_schedule", "must be constant or cosine"));
        }
        if self.string("train.question").is_none() {
            return Err(self.fail("train.question", "must not be empty"));
        }
        if let Err(e) =
            CaptionStrategy::parse_list(&self.string("vbmg.strategies").unwrap_or_default())
        {
            return Err(self.fail("vbmg.strategies", &e.to_string()));
        }
        Ok(())
    }

    /// `{key: {value, origin}}` for every set key. Credentials are masked.
    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .entries
            .iter()
            .map(|(k, e)| {
                let value = if k.ends_with("api_key") {
                    "***".into()
                } else {
                    e.value.to_json()
                };
                (
                    k.to_string(),
                    serde_json::json!({ "value": value, "origin": e.origin.to_string() }),
                )
            })
            .collect::<serde_json::Map<_, _>>();
        serde_json::Value::Object(map)
    }
}

fn invalid(key: &str, origin: &Origin, message: &str) -> UsageError {
    usage(format!(
        "invalid value for {key} (from {origin}): {message}"
    ))
}

pub fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key reference appended to `--help`.
pub fn help_text() -> String {
    let defaults: BTreeMap<_, _> = defaults().into_iter().collect();
    let mut out = String::from(
        "Configuration keys (precedence: environment > flags > config file > defaults).\n\
         Set them in a TOML file passed with --config, with --set KEY=VALUE, or through\n\
         the environment variable shown in brackets.\n\n",
    );
    for s in KEYS {
        let default = defaults
            .get(s.key)
            .map(|v| format!(" (default {v})"))
            .unwrap_or_default();
        out.push_str(&format!(
            "  {:<28} {}{default} [{}]\n",
            s.key,
            s.help,
            env_name(s.key)
        ));
    }
    out.push_str(&format!(
        "\nLog filter: {LOG_ENV} (e.g. debug, musiscene=trace)."
    ));
    out
}
