use fairfront_core::data::{
    encode_task, load_csv, make_splits, preprocess, ColumnData, Dataset, FeatureMatrix,
    PreprocessConfig, Provenance, SplitPlan, TaskEncoding,
};
use proptest::prelude::*;

fn dataset(labels: &[(u8, u8)]) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64]).collect();
    Dataset::new(
        vec!["x".into()],
        FeatureMatrix::from_rows(&rows),
        labels.iter().map(|l| l.0).collect(),
        labels.iter().map(|l| l.1).collect(),
        Provenance::default(),
    )
    .unwrap()
}

fn labels() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..2, 0u8..2), 4..300).prop_map(|mut v| {
        // two rows of each class and both groups present
        v[0] = (0, 0);
        v[1] = (0, 1);
        v[2] = (1, 0);
        v[3] = (1, 1);
        v
    })
}

proptest! {
    #[test]
    fn splits_partition_the_rows(l in labels(), f in 0.05f64..0.95, k in 1usize..6, seed in any::<u64>(), stratified in any::<bool>()) {
        let d = dataset(&l);
        let n = l.len();
        let plan = SplitPlan { n_splits: k, test_fraction: f, stratified, seed };
        let splits = make_splits(&d, &plan).unwrap();
        prop_assert_eq!(splits.len(), k);
        for s in &splits {
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(s.train.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.test.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!s.train.is_empty() && !s.test.is_empty());
            if !stratified {
                let want = ((f * n as f64).round() as usize).clamp(1, n - 1);
                prop_assert_eq!(s.test.len(), want);
            }
        }
        prop_assert_eq!(make_splits(&d, &plan).unwrap(), splits);
    }

    #[test]
    fn stratified_splits_keep_class_proportions(l in labels(), f in 0.1f64..0.9, seed in any::<u64>()) {
        let d = dataset(&l);
        let n = l.len() as f64;
        let plan = SplitPlan { n_splits: 2, test_fraction: f, stratified: true, seed };
        for s in make_splits(&d, &plan).unwrap() {
            let test_ones = s.test.iter().filter(|&&i| d.target[i] == 1).count() as f64;
            let total_ones = d.class_counts()[1] as f64;
            let expected = total_ones * s.test.len() as f64 / n;
            prop_assert!((test_ones - expected).abs() <= 1.0 + 1e-9, "{test_ones} vs {expected}");
            // both classes remain in the training rows
            prop_assert!(s.train.iter().any(|&i| d.target[i] == 0));
            prop_assert!(s.train.iter().any(|&i| d.target[i] == 1));
        }
    }

    #[test]
    fn numeric_csv_round_trips(values in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..40)) {
        let mut text = String::from("a,b,c\n");
        for r in &values {
            text.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
        }
        let t = load_csv(text.as_bytes(), "p", &[]).unwrap();
        prop_assert_eq!(t.n_rows, values.len());
        for (j, col) in t.columns.iter().enumerate() {
            match &col.data {
                ColumnData::Numeric(v) => {
                    for (i, x) in v.iter().enumerate() {
                        prop_assert_eq!(*x, Some(values[i][j]));
                    }
                }
                ColumnData::Categorical(_) => prop_assert!(false, "column {} not numeric", j),
            }
        }
    }

    #[test]
    fn zscore_centers_and_scales(values in prop::collection::vec(-100.0f64..100.0, 3..60)) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-3));
        let mut text = String::from("a,target,sensitive\n");
        for (i, v) in values.iter().enumerate() {
            text.push_str(&format!("{v},{},{}\n", i % 2, (i / 2) % 2));
        }
        let t = load_csv(text.as_bytes(), "p", &[]).unwrap();
        let p = preprocess(&t, &PreprocessConfig::default(), &["target", "sensitive"]).unwrap();
        let ColumnData::Numeric(z) = &p.column("a").unwrap().data else { panic!("not numeric") };
        let z: Vec<f64> = z.iter().map(|v| v.unwrap()).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((sd - 1.0).abs() < 1e-9);
        let d = encode_task(&p, &TaskEncoding::default()).unwrap();
        prop_assert_eq!(d.n_rows(), values.len());
    }
}

#[test]
fn empty_group_is_rejected_by_name() {
    let t = load_csv("x,target,sensitive\n1,0,0\n2,1,0\n".as_bytes(), "p", &[]).unwrap();
    let e = encode_task(&t, &TaskEncoding::default()).unwrap_err();
    assert_eq!(e.to_string(), "sensitive group 1 empty");
}

#[test]
fn unmatched_group_value_is_named() {
    let t = load_csv("x,target,race\n1,0,a\n2,1,b\n".as_bytes(), "p", &[]).unwrap();
    let task = TaskEncoding {
        sensitive: "race".into(),
        group0: vec!["zz".into()],
        ..TaskEncoding::default()
    };
    let e = encode_task(&t, &task).unwrap_err();
    assert_eq!(e.to_string(), "group0 value 'zz' does not occur in column 'race'");
}
