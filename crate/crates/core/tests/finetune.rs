mod common;

use musiscene::adapter::{SceneModel, ToyCausalLm, Vocab};
use musiscene::finetune::{
    decode_all, decode_answer, evaluate_checkpoint, exact_match_rate, train, Checkpoint,
    DecodeConfig, MsiSample, TrainConfig,
};
use musiscene::report::CAPTION_COLUMNS;
use musiscene::text_metrics::HashEmbedder;
use musiscene::{toy, Error};

fn toy_model(samples: &[MsiSample]) -> SceneModel {
    let texts = samples
        .iter()
        .flat_map(|s| [s.question.as_str(), s.answer.as_str()]);
    let lm = ToyCausalLm::new(toy::lm_config(), Vocab::from_texts(texts)).unwrap();
    SceneModel::new(toy::adapter_config(), lm, 0).unwrap()
}

fn short(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 2,
        learning_rate: 1e-2,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn one_epoch_gives_one_log_entry_and_a_loadable_checkpoint() {
    let samples = toy::msi_samples(2).unwrap();
    let mut model = toy_model(&samples);
    let (ckpt, log) = train(&samples, &mut model, &short(1)).unwrap();
    assert_eq!(log.len(), 1);
    assert!(log[0].mean_loss.is_finite() && log[0].mean_loss >= 0.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adapter.ckpt.json");
    ckpt.save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap().to_model().unwrap();
    assert_eq!(
        restored.params.to_arrays().unwrap(),
        model.params.to_arrays().unwrap()
    );
}

#[test]
fn same_seed_same_curve_and_checkpoint_bytes() {
    let samples = toy::msi_samples(4).unwrap();
    let run = || {
        let mut model = toy_model(&samples);
        let (ckpt, log) = train(&samples, &mut model, &short(3)).unwrap();
        (
            log.iter().map(|e| e.mean_loss).collect::<Vec<_>>(),
            ckpt.to_bytes().unwrap(),
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
}

#[test]
fn empty_dataset_is_rejected() {
    let samples = toy::msi_samples(1).unwrap();
    let mut model = toy_model(&samples);
    let err = train(&[], &mut model, &short(1)).unwrap_err();
    assert!(matches!(err, Error::EmptyDataset));
    assert!(err.to_string().contains("empty dataset"));
}

#[test]
fn decoding_contracts() {
    let samples = toy::msi_samples(2).unwrap();
    let model = toy_model(&samples);
    let s = &samples[0];
    let greedy = DecodeConfig::default();
    let a = decode_answer(&model, &s.features, &s.question, &greedy).unwrap();
    assert_eq!(
        a,
        decode_answer(&model, &s.features, &s.question, &greedy).unwrap()
    );
    let one = DecodeConfig {
        max_len: 1,
        ..DecodeConfig::default()
    };
    let t = decode_answer(&model, &s.features, &s.question, &one).unwrap();
    assert!(t.split_whitespace().count() <= 1);
    let zero = DecodeConfig {
        max_len: 0,
        ..DecodeConfig::default()
    };
    assert!(decode_answer(&model, &s.features, &s.question, &zero).is_err());
}

#[test]
fn toy_overfit_trend_and_round_trip() {
    let samples = toy::msi_samples(16).unwrap();
    let mut model = toy_model(&samples);
    let (ckpt, log) = train(&samples, &mut model, &toy::train_config()).unwrap();
    let losses: Vec<f64> = log.iter().map(|e| e.mean_loss).collect();
    assert!(
        *losses.last().unwrap() < 0.1,
        "final loss {}",
        losses.last().unwrap()
    );

    // After epoch 20 no epoch rises more than 5% above the one before.
    for (epoch, w) in losses.windows(2).enumerate().skip(19) {
        assert!(
            w[1] <= w[0] * 1.05,
            "epoch {}: {} after {}",
            epoch + 2,
            w[1],
            w[0]
        );
    }

    let greedy = DecodeConfig::default();
    assert!(exact_match_rate(&model, &samples, &greedy).unwrap() >= 0.8);
    let before = decode_all(&model, &samples, &greedy).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.ckpt.json");
    ckpt.save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap().to_model().unwrap();
    assert_eq!(decode_all(&restored, &samples, &greedy).unwrap(), before);

    let report =
        evaluate_checkpoint(&restored, &samples, &greedy, &HashEmbedder::default()).unwrap();
    assert_eq!(report.columns(), CAPTION_COLUMNS.map(String::from).to_vec());
    assert_eq!(report.rows.len(), 1);
    assert!(report
        .rows
        .keys()
        .next()
        .unwrap()
        .starts_with("musiscene-adapter/"));
}
