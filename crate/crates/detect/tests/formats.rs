use gme_core::featurize::FeatureKind;
use gme_core::pipeline::{build_dataset, split, train, Dataset, DatasetConfig, Labeler, Sample, TrainConfig};
use gme_core::Label;
use gme_detect::format::{encode_checkpoint, encode_dataset, read_checkpoint, read_dataset, write_atomic, Checkpoint};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn datasets_round_trip_bit_exactly(
        n in 2usize..5,
        rows in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<u64>()), 0..12),
        salt in any::<u64>(),
    ) {
        let len = 1usize << n;
        let samples: Vec<Sample> = rows
            .iter()
            .enumerate()
            .map(|(i, &(e, marginal, seed))| Sample {
                features: (0..len).map(|j| f64::from_bits(salt.wrapping_mul(i as u64 + 1).rotate_left(j as u32) >> 2)).collect(),
                label: if e { Label::Entangled } else { Label::NotDetected },
                marginal,
                source_seed: seed,
            })
            .collect();
        let ds = Dataset::new(FeatureKind::GhzDiagonal, n, samples).unwrap();
        let bytes = encode_dataset(&ds, &[0; 32]);
        prop_assert_eq!(read_dataset(&bytes[..]).unwrap(), ds);
    }

    #[test]
    fn truncation_is_always_rejected(cut in 0usize..1000) {
        let (ds, _) = build_dataset(&DatasetConfig::new(FeatureKind::GhzDiagonal, 3, 3, Labeler::Analytic, 1)).unwrap();
        let bytes = encode_dataset(&ds, &[0; 32]);
        let cut = cut % bytes.len();
        prop_assert!(read_dataset(&bytes[..cut]).is_err());
    }
}

#[test]
fn checkpoint_file_predicts_like_the_original() {
    let (ds, _) = build_dataset(&DatasetConfig::new(FeatureKind::GhzDiagonal, 4, 20, Labeler::Analytic, 3)).unwrap();
    let (tr, te) = split(&ds, 0.7, 5).unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::for_kind(FeatureKind::GhzDiagonal, true, 2)
    };
    let (clf, _) = train(&tr, cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gmem");
    let ck = Checkpoint {
        classifier: clf.clone(),
        provenance: None,
        adam: None,
    };
    write_atomic(&path, &encode_checkpoint(&ck)).unwrap();
    let back = read_checkpoint(&std::fs::read(&path).unwrap()[..]).unwrap();
    assert_eq!(back.classifier.model.params(), clf.model.params());
    assert_eq!(back.classifier.model.running(), clf.model.running());
    assert_eq!(back.classifier.stats, clf.stats);
    let rows = || te.samples.iter().map(|s| s.features.as_slice());
    assert_eq!(back.classifier.predict(rows()).unwrap(), clf.predict(rows()).unwrap());
}
