use std::path::PathBuf;

use proptest::prelude::*;
use swis::dataset::{DatasetId, Manifest, Role, SignatureSample, Split};
use swis::evaluate::FeatureTable;
use swis_core::verify::Label;
use swis_core::Matrix;

fn sample() -> impl Strategy<Value = SignatureSample> {
    ("[a-z0-9]{1,6}", "[a-z0-9_]{1,8}", any::<bool>(), 0..3u8).prop_map(|(w, f, g, r)| {
        let split = if w.as_bytes()[0] % 2 == 0 { Split::Test } else { Split::Pretrain };
        SignatureSample {
            image_path: PathBuf::from(&w).join(format!("{f}.png")),
            writer_id: w,
            label: if g { Label::Genuine } else { Label::Forged },
            split,
            role: match (split, r) {
                (Split::Pretrain, _) | (_, 0) => Role::Unassigned,
                (_, 1) if g => Role::Reference,
                _ => Role::Query,
            },
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 32,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn manifest_csv_round_trip(mut samples in prop::collection::vec(sample(), 1..20)) {
        let mut seen = std::collections::BTreeSet::new();
        samples.retain(|s| seen.insert(s.id()));
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest { dataset_id: DatasetId::Custom, root: dir.path().to_path_buf(), samples, seed: 0 };
        let path = dir.path().join("manifest.csv");
        m.write_csv(&path).unwrap();
        let back = Manifest::read_csv(&path).unwrap();
        let mut expected = m.samples.clone();
        expected.sort_by_key(|s| (s.writer_id.clone(), s.id()));
        prop_assert_eq!(&back.samples, &expected);
        prop_assert_eq!(back.root, m.root);
    }

    #[test]
    fn feature_csv_round_trip_is_exact(values in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..10)) {
        let dir = tempfile::tempdir().unwrap();
        let n = values.len();
        let t = FeatureTable {
            ids: (0..n).map(|i| format!("w/{i}.png")).collect(),
            writers: (0..n).map(|i| format!("w{}", i % 2)).collect(),
            values: Matrix::from_rows(&values).unwrap(),
        };
        let path = dir.path().join("f.csv");
        t.write_csv(&path).unwrap();
        prop_assert_eq!(FeatureTable::read_csv(&path).unwrap(), t);
    }
}
