use musiscene::audio_metrics::{
    embedding_stats, frechet_distance, label_kl, sqrtm_psd, EmbeddingSet, LabelDistribution,
    DEFAULT_KL_EPS,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn embedding_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1usize..6, 2usize..12, 2usize..12).prop_flat_map(|(d, n, m)| (matrix(n, d), matrix(m, d)))
}

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, k).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
    })
}

fn stats(m: &DMatrix<f64>) -> musiscene::audio_metrics::EmbeddingSetStats {
    embedding_stats(&EmbeddingSet {
        vectors: m.clone(),
        source_id: "p".into(),
    })
    .unwrap()
}

proptest! {
    #[test]
    fn frechet_is_symmetric_and_non_negative((a, b) in embedding_pair()) {
        let (sa, sb) = (stats(&a), stats(&b));
        let ab = frechet_distance(&sa, &sb).unwrap();
        let ba = frechet_distance(&sb, &sa).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * (1.0 + ab));
        prop_assert!(frechet_distance(&sa, &sa).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn sqrtm_reconstructs_gram_matrices(a in (1usize..9).prop_flat_map(|d| matrix(d, d))) {
        let m = &a * a.transpose();
        let r = sqrtm_psd(&m).unwrap();
        prop_assert!((&r * &r - &m).norm() <= 1e-8 * (1.0 + m.norm()));
        prop_assert!((&r - r.transpose()).amax() < 1e-12);
    }

    #[test]
    fn label_kl_is_zero_only_on_equal_inputs((t, p) in (2usize..8).prop_flat_map(|k| (distribution(k), distribution(k)))) {
        let (t, p) = (LabelDistribution::new("c", t), LabelDistribution::new("c", p));
        let kl = label_kl(&t, &p, DEFAULT_KL_EPS).unwrap();
        prop_assert!(kl >= -1e-12);
        prop_assert!(label_kl(&t, &t, DEFAULT_KL_EPS).unwrap().abs() <= 1e-12);
        if t.probs.iter().zip(&p.probs).any(|(a, b)| (a - b).abs() > 1e-3) {
            prop_assert!(kl > 0.0);
        }
    }
}
