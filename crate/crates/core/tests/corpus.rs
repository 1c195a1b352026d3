use std::collections::BTreeSet;

use musiscene::corpus::{
    filter_by_label, load_manifest, read_dataset, split_dataset, train_size, write_dataset,
    BundleGenerator, CaptionBundle, ClipRecord, LookupBackend, StubLlm,
};
use musiscene::retry::RetryPolicy;
use musiscene::toy;
use proptest::prelude::*;

fn bundle(i: usize) -> CaptionBundle {
    CaptionBundle {
        clip_id: format!("c{i:05}"),
        video_caption: "v".into(),
        music_caption: "m".into(),
        fusion_caption: "f".into(),
        msi_caption: "s".into(),
        backend_provenance: Default::default(),
    }
}

#[test]
fn full_corpus_split_sizes() {
    let bundles: Vec<_> = (0..3371).map(bundle).collect();
    let (train, test) = split_dataset(&bundles, 0.8, 0).unwrap();
    assert_eq!((train.len(), test.len()), (2696, 675));
}

fn build_dataset(root: &std::path::Path) -> Vec<u8> {
    let records = load_manifest(&root.join("manifest.jsonl")).unwrap();
    let music = filter_by_label(&records, "Music");
    let video = LookupBackend::from_file(&root.join("video_captions.json")).unwrap();
    let audio = LookupBackend::from_file(&root.join("music_captions.json")).unwrap();
    let mut generator = BundleGenerator::new(&video, &audio, &StubLlm, None);
    generator.retry = RetryPolicy::no_delay(1);
    let bundles = generator.generate_all(&music).unwrap();
    let out = root.join("dataset.jsonl");
    write_dataset(&bundles, &out).unwrap();
    assert_eq!(read_dataset(&out).unwrap(), bundles);
    std::fs::read(out).unwrap()
}

#[test]
fn same_inputs_give_byte_identical_datasets() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    toy::write_workspace(a.path(), 16).unwrap();
    toy::write_workspace(b.path(), 16).unwrap();
    assert_eq!(build_dataset(a.path()), build_dataset(b.path()));
}

fn records() -> impl Strategy<Value = Vec<ClipRecord>> {
    proptest::collection::vec(
        proptest::collection::btree_set(
            proptest::sample::select(vec!["Music", "Speech", "Drum"]),
            0..3,
        ),
        0..40,
    )
    .prop_map(|labels| {
        labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| ClipRecord {
                clip_id: format!("r{i}"),
                media_uri: format!("m/{i}.mp4"),
                audio_path: format!("a/{i}.wav"),
                labels: l.into_iter().map(String::from).collect(),
                start_s: 0.0,
                end_s: 10.0,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn split_is_a_partition_with_floor_sizes(n in 1usize..300, fraction in 0.01f64..0.99, seed in any::<u64>()) {
        let bundles: Vec<_> = (0..n).map(bundle).collect();
        let (train, test) = split_dataset(&bundles, fraction, seed).unwrap();
        prop_assert_eq!(train.len(), train_size(n, fraction));
        prop_assert_eq!(train.len(), ((fraction * n as f64) + 1e-9).floor() as usize);
        let ids: BTreeSet<_> = train.iter().chain(&test).map(|b| b.clip_id.clone()).collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert_eq!(split_dataset(&bundles, fraction, seed).unwrap(), (train, test));
    }

    #[test]
    fn filtering_keeps_an_ordered_subsequence(records in records()) {
        let kept = filter_by_label(&records, "Music");
        prop_assert!(kept.iter().all(|r| r.labels.contains("Music")));
        let expected: Vec<_> = records.iter().filter(|r| r.labels.contains("Music")).cloned().collect();
        prop_assert_eq!(kept, expected);
    }
}
