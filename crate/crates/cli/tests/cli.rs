use std::path::Path;
use std::process::{Command, Output};

use musiscene::text_metrics::tokenize;
use musiscene::toy;

fn musiscene(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_musiscene"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("MUSISCENE_")) {
        cmd.env_remove(k);
    }
    cmd.env("MUSISCENE_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The last stderr line parsed as the JSON error record.
fn error_record(o: &Output) -> serde_json::Value {
    let err = stderr(o);
    let line = err.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not a JSON error line ({e}): {err}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let o = musiscene(&[], &[]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o) + &stderr(&o);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn help_lists_every_subcommand_and_config_key() {
    let o = musiscene(&["--help"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for sub in [
        "build-corpus",
        "finetune",
        "eval-msi",
        "eval-text",
        "eval-audio",
        "gen-music",
        "report",
        "subjective",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert!(text.contains("MUSISCENE_CORPUS_TRAIN_FRACTION"));
}

#[test]
fn unknown_flag_is_a_usage_error_on_one_json_line() {
    let o = musiscene(&["eval-text", "--bogus"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let rec = error_record(&o);
    assert_eq!(rec["kind"], "usage");
    assert!(rec["error"].as_str().unwrap().contains("--bogus"));
}

#[test]
fn seed_flag_beats_config_file_and_env_beats_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\n").unwrap();
    let seed_of = |o: &Output| -> u64 {
        let v: serde_json::Value = serde_json::from_str(&stdout(o)).unwrap();
        v["seed"]["value"].as_u64().unwrap()
    };
    assert_eq!(
        seed_of(&musiscene(&["config", "--config", p(&cfg)], &[])),
        3
    );
    assert_eq!(
        seed_of(&musiscene(
            &["config", "--config", p(&cfg), "--seed", "7"],
            &[]
        )),
        7
    );
    let env = [("MUSISCENE_SEED", "11")];
    assert_eq!(
        seed_of(&musiscene(
            &["config", "--config", p(&cfg), "--seed", "7"],
            &env
        )),
        11
    );
}

#[test]
fn bad_train_fraction_names_the_key() {
    let o = musiscene(&["build-corpus", "--train-fraction", "1.5"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["error"]
        .as_str()
        .unwrap()
        .contains("train_fraction"));
}

#[test]
fn eval_text_on_identical_files_is_perfect_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let caps = dir.path().join("caps.txt");
    std::fs::write(
        &caps,
        "The music is suitable for a scene of a calm evening at the beach.\nA tense chase through the city.\n",
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let args = [
        "eval-text",
        "--hyps",
        p(&caps),
        "--refs",
        p(&caps),
        "--report",
        p(&report),
    ];
    let o = musiscene(&args, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let row = &r["caps"];
    for col in ["B-U", "R-L", "B-S"] {
        assert!(
            (row[col].as_f64().unwrap() - 1.0).abs() < 1e-12,
            "{col}: {}",
            row[col]
        );
    }
    // A perfect METEOR alignment is one chunk of m matches, which still pays
    // the fragmentation penalty 0.5 / m^3.
    let meteor: f64 = std::fs::read_to_string(&caps)
        .unwrap()
        .lines()
        .map(|l| 1.0 - 0.5 / (tokenize(l).tokens.len() as f64).powi(3))
        .sum::<f64>()
        / 2.0;
    assert!(
        (row["M-R"].as_f64().unwrap() - meteor).abs() < 1e-12,
        "M-R: {}",
        row["M-R"]
    );

    let before = std::fs::read(&report).unwrap();
    let o = musiscene(&args, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_record(&o)["error"]
        .as_str()
        .unwrap()
        .contains("--force"));
    assert_eq!(std::fs::read(&report).unwrap(), before);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(musiscene(&forced, &[]).status.code(), Some(0));
}

#[test]
fn eval_audio_on_the_same_file_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    toy::write_workspace(dir.path(), 6).unwrap();
    let (emb, labels) = (
        dir.path().join("ref.npy"),
        dir.path().join("ref.labels.jsonl"),
    );
    let audio = dir.path().join("audio");
    let o = musiscene(
        &[
            "embed-audio",
            "--input",
            p(&audio),
            "--embeddings",
            p(&emb),
            "--labels",
            p(&labels),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = musiscene(
        &["eval-audio", "fad", "--ref", p(&emb), "--gen", p(&emb)],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["FAD"].as_f64().unwrap().abs() <= 1e-6, "{v}");

    let o = musiscene(
        &[
            "eval-audio",
            "kl",
            "--target",
            p(&labels),
            "--pred",
            p(&labels),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["KL"].as_f64().unwrap().abs() <= 1e-9, "{v}");
}

#[test]
fn finetune_on_empty_dataset_fails_with_a_clear_message() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("train.jsonl");
    std::fs::write(&dataset, "").unwrap();
    let ckpt = dir.path().join("adapter.ckpt.json");
    let o = musiscene(
        &["finetune", "--dataset", p(&dataset), "--out", p(&ckpt)],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    let rec = error_record(&o);
    assert_eq!(rec["kind"], "runtime");
    assert!(
        rec["error"].as_str().unwrap().contains("empty dataset"),
        "{rec}"
    );
    assert!(!ckpt.exists());
}

#[test]
fn missing_input_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = musiscene(&["finetune", "--out", p(&dir.path().join("x.json"))], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["error"]
        .as_str()
        .unwrap()
        .contains("paths.dataset"));
}

#[test]
fn demo_runs_the_pipeline_and_gen_music_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let quick = [
        "--set",
        "train.epochs=3",
        "--set",
        "vbmg.duration_s=2",
        "--json-logs",
    ];
    let mut args = vec!["demo", "--out", p(&out), "--clips", "8"];
    args.extend(quick);
    let o = musiscene(&args, &[("MUSISCENE_LOG", "info")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for line in stderr(&o).lines() {
        let rec: serde_json::Value =
            serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"));
        assert!(rec["ts"].as_str().unwrap().contains('T'));
    }
    // Key order matters, so check positions in the raw text.
    let in_order = |file: &str, keys: &[&str]| {
        let text = std::fs::read_to_string(out.join(file)).unwrap();
        let pos: Vec<usize> = keys
            .iter()
            .map(|k| {
                text.find(&format!("\"{k}\""))
                    .unwrap_or_else(|| panic!("{file} lacks {k}"))
            })
            .collect();
        assert!(
            pos.windows(2).all(|w| w[0] < w[1]),
            "{file}: {keys:?} out of order"
        );
    };
    in_order("msi_test.json", &["B-U", "M-R", "R-L", "B-S"]);
    in_order("music_metrics.json", &["MSI", "Video", "Music", "Fusion"]);

    let ledger = out.join("generated");
    let entries = || {
        std::fs::read_to_string(ledger.join("ledger.jsonl"))
            .unwrap()
            .lines()
            .count()
    };
    let before = entries();
    let corpus = out.join("corpus");
    let o = musiscene(
        &[
            "gen-music",
            "--dataset",
            p(&corpus.join("dataset.jsonl")),
            "--manifest",
            p(&out.join("workspace/manifest.jsonl")),
            "--out",
            p(&ledger),
            "--duration",
            "2",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(entries(), before, "resume made new generation calls");

    let o = musiscene(&args, &[]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "demo must not reuse a non-empty directory"
    );
}
