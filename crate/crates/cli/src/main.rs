//! `musiscene` command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures are
//! reported on stderr as one JSON line.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{FlagValue, RunConfig, UsageError};

#[derive(Debug, Parser)]
#[command(
    name = "musiscene",
    version,
    about = "Music scene imagination pipeline",
    arg_required_else_help = true
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file with dotted keys
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Set any configuration key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overwrite existing outputs
    #[arg(long, global = true)]
    force: bool,
    /// Emit logs as JSON lines
    #[arg(long, global = true)]
    json_logs: bool,
    /// Log filter (overridden by MUSISCENE_LOG)
    #[arg(long, global = true, default_value = "info", value_name = "FILTER")]
    log_level: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Caption manifest clips and write dataset, train and test splits
    BuildCorpus {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Audio-event label to keep
        #[arg(long)]
        label: Option<String>,
        /// Output directory
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "FRACTION")]
        train_fraction: Option<String>,
        /// Backend response cache (default <out>/cache)
        #[arg(long, value_name = "DIR")]
        cache: Option<PathBuf>,
        /// Video captions keyed by media_uri (JSON object)
        #[arg(long, value_name = "PATH")]
        video_captions: Option<PathBuf>,
        /// Music captions keyed by audio_path (JSON object)
        #[arg(long, value_name = "PATH")]
        music_captions: Option<PathBuf>,
    },
    /// Encode manifest audio into per-clip feature files with the toy encoder
    ExtractFeatures {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train the adapter on a caption dataset
    Finetune {
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Feature directory (default <dataset dir>/features)
        #[arg(long, value_name = "DIR")]
        features: Option<PathBuf>,
        /// Checkpoint to write
        #[arg(long, value_name = "CKPT")]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Score checkpoint answers against scene captions (B-U, M-R, R-L, B-S)
    EvalMsi {
        #[arg(long, value_name = "CKPT")]
        ckpt: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        features: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Score line-aligned hypothesis and reference files
    EvalText {
        #[arg(long, value_name = "PATH")]
        hyps: PathBuf,
        #[arg(long, value_name = "PATH")]
        refs: PathBuf,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Objective audio metrics
    EvalAudio {
        #[command(subcommand)]
        metric: AudioMetric,
    },
    /// Embed and classify a directory of WAV files with the toy audio models
    EmbedAudio {
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "EMB")]
        embeddings: PathBuf,
        #[arg(long, value_name = "LABELS")]
        labels: PathBuf,
    },
    /// Generate music per caption strategy and score it (resumable)
    GenMusic {
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Manifest locating the reference audio
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Comma-separated subset of msi,video,music,fusion
        #[arg(long)]
        strategies: Option<String>,
        /// Ledger directory
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Requested music length in seconds
        #[arg(long)]
        duration: Option<String>,
    },
    /// Rebuild the FAD/KL table from a generation ledger
    Report {
        #[arg(long, value_name = "DIR")]
        ledger: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Aggregate survey responses into mean scores per strategy
    Subjective {
        #[arg(long, value_name = "CSV")]
        responses: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline offline on synthetic clips
    Demo {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of synthetic clips (at most 16)
        #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(2..=16))]
        clips: u64,
    },
    /// Print the resolved configuration with the source of each value
    Config,
}

#[derive(Debug, Subcommand)]
enum AudioMetric {
    /// Fréchet audio distance between two embedding files
    Fad {
        #[arg(long = "ref", value_name = "EMB")]
        reference: PathBuf,
        #[arg(long = "gen", value_name = "EMB")]
        generated: PathBuf,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Mean KL divergence between two label files
    Kl {
        #[arg(long, value_name = "LABELS")]
        target: PathBuf,
        #[arg(long, value_name = "LABELS")]
        pred: PathBuf,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildCorpus { .. } => "build-corpus",
            Command::ExtractFeatures { .. } => "extract-features",
            Command::Finetune { .. } => "finetune",
            Command::EvalMsi { .. } => "eval-msi",
            Command::EvalText { .. } => "eval-text",
            Command::EvalAudio {
                metric: AudioMetric::Fad { .. },
            } => "eval-audio fad",
            Command::EvalAudio {
                metric: AudioMetric::Kl { .. },
            } => "eval-audio kl",
            Command::EmbedAudio { .. } => "embed-audio",
            Command::GenMusic { .. } => "gen-music",
            Command::Report { .. } => "report",
            Command::Subjective { .. } => "subjective",
            Command::Demo { .. } => "demo",
            Command::Config => "config",
        }
    }

    /// Flag values that feed configuration keys.
    fn flags(&self) -> Vec<FlagValue> {
        let mut out = Vec::new();
        let mut push = |key, flag, v: Option<String>| {
            if let Some(v) = v {
                out.push(FlagValue::new(key, flag, v));
            }
        };
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        match self {
            Command::BuildCorpus {
                manifest,
                label,
                out,
                train_fraction,
                cache,
                video_captions,
                music_captions,
            } => {
                push("paths.manifest", "--manifest", p(manifest));
                push("corpus.label", "--label", label.clone());
                push("paths.output", "--out", p(out));
                push(
                    "corpus.train_fraction",
                    "--train-fraction",
                    train_fraction.clone(),
                );
                push("paths.cache", "--cache", p(cache));
                push(
                    "backends.video.table",
                    "--video-captions",
                    p(video_captions),
                );
                push(
                    "backends.music.table",
                    "--music-captions",
                    p(music_captions),
                );
            }
            Command::ExtractFeatures { manifest, out } => {
                push("paths.manifest", "--manifest", p(manifest));
                push("paths.features", "--out", p(out));
            }
            Command::Finetune {
                dataset,
                features,
                out,
                epochs,
            } => {
                push("paths.dataset", "--dataset", p(dataset));
                push("paths.features", "--features", p(features));
                push("paths.checkpoint", "--out", p(out));
                push("train.epochs", "--epochs", epochs.map(|e| e.to_string()));
            }
            Command::EvalMsi {
                ckpt,
                dataset,
                features,
                report,
            } => {
                push("paths.checkpoint", "--ckpt", p(ckpt));
                push("paths.dataset", "--dataset", p(dataset));
                push("paths.features", "--features", p(features));
                push("paths.report", "--report", p(report));
            }
            Command::EvalText { report, .. } => push("paths.report", "--report", p(report)),
            Command::GenMusic {
                dataset,
                manifest,
                strategies,
                out,
                duration,
            } => {
                push("paths.dataset", "--dataset", p(dataset));
                push("paths.manifest", "--manifest", p(manifest));
                push("vbmg.strategies", "--strategies", strategies.clone());
                push("paths.output", "--out", p(out));
                push("vbmg.duration_s", "--duration", duration.clone());
            }
            Command::Report { out, .. } | Command::Subjective { out, .. } => {
                push("paths.report", "--out", p(out))
            }
            Command::EvalAudio { .. }
            | Command::EmbedAudio { .. }
            | Command::Demo { .. }
            | Command::Config => {}
        }
        out
    }
}

fn global_flags(g: &Global) -> Result<Vec<FlagValue>, UsageError> {
    let mut out = Vec::new();
    if let Some(seed) = g.seed {
        out.push(FlagValue::new("seed", "--seed", seed));
    }
    for kv in &g.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        let spec = config::key_spec(k.trim())
            .ok_or_else(|| UsageError(format!("unknown key {} in --set", k.trim())))?;
        out.push(FlagValue::new(spec.key, "--set", v));
    }
    Ok(out)
}

fn init_logging(json: bool, default_filter: &str) {
    let filter = std::env::var(config::LOG_ENV).unwrap_or_else(|_| default_filter.to_string());
    let mut builder = env_logger::Builder::new();
    builder
        .parse_filters(&filter)
        .target(env_logger::Target::Stderr);
    if json {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "ts": buf.timestamp_millis().to_string(),
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    } else {
        builder.format(|buf, record| {
            writeln!(
                buf,
                "{} {:<5} {}: {}",
                buf.timestamp_millis(),
                record.level(),
                record.target(),
                record.args()
            )
        });
    }
    let _ = builder.try_init();
}

fn fail(subcommand: &str, kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({
        "error": config::one_line(message),
        "kind": kind,
        "subcommand": subcommand,
        "exit_code": code,
    });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    let force = cli.global.force;
    match &cli.command {
        Command::BuildCorpus { .. } => commands::build_corpus(cfg, force),
        Command::ExtractFeatures { .. } => commands::extract_features(cfg, force),
        Command::Finetune { .. } => commands::finetune(cfg, force),
        Command::EvalMsi { .. } => commands::eval_msi(cfg, force),
        Command::EvalText { hyps, refs, .. } => commands::eval_text(cfg, hyps, refs, force),
        Command::EvalAudio { metric } => match metric {
            AudioMetric::Fad {
                reference,
                generated,
                report,
            } => commands::eval_fad(reference, generated, report.as_deref(), force),
            AudioMetric::Kl {
                target,
                pred,
                report,
            } => commands::eval_kl(cfg, target, pred, report.as_deref(), force),
        },
        Command::EmbedAudio {
            input,
            embeddings,
            labels,
        } => commands::embed_audio(input, embeddings, labels, force),
        Command::GenMusic { .. } => commands::gen_music(cfg),
        Command::Report { ledger, .. } => commands::report(cfg, ledger, force),
        Command::Subjective { responses, .. } => commands::subjective(cfg, responses, force),
        Command::Demo { out, clips } => commands::demo(cfg, out, *clips as usize, force),
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&cfg.to_json())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let command = Cli::command().after_long_help(config::help_text());
    let cli = match command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    ExitCode::from(2)
                }
                _ => {
                    let text = e.render().to_string();
                    let first = text
                        .lines()
                        .next()
                        .unwrap_or_default()
                        .trim_start_matches("error: ");
                    fail("", "usage", first, 2)
                }
            };
        }
    };
    init_logging(cli.global.json_logs, &cli.global.log_level);
    let name = cli.command.name();
    let mut flags = match global_flags(&cli.global) {
        Ok(f) => f,
        Err(e) => return fail(name, "usage", &e.0, 2),
    };
    flags.extend(cli.command.flags());
    let cfg = match RunConfig::resolve(cli.global.config.as_deref(), &flags, std::env::vars()) {
        Ok((cfg, warnings)) => {
            for w in warnings {
                log::warn!("{w}");
            }
            cfg
        }
        Err(e) => return fail(name, "usage", &e.0, 2),
    };
    match dispatch(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(u) => fail(name, "usage", &u.0, 2),
            None => fail(name, "runtime", &format!("{e:#}"), 1),
        },
    }
}
