use std::path::PathBuf;

use oml_core::*;

fn wine() -> Dataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/wine.csv");
    load_csv(path, "label").unwrap()
}

fn blobs(n_per_class: usize) -> Dataset {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n_per_class {
        let jitter = 0.01 * i as f64;
        features.push(vec![jitter, -jitter]);
        labels.push(0);
        features.push(vec![10.0 + jitter, 10.0 - jitter]);
        labels.push(1);
    }
    Dataset::new(features, labels).unwrap()
}

#[test]
fn wine_file_shape() {
    let ds = wine();
    assert_eq!((ds.len(), ds.dim(), ds.n_classes()), (178, 13, 3));
    assert_eq!(ds.class_counts(), vec![59, 71, 48]);
}

#[test]
fn leave_one_out_on_blobs_is_perfect() {
    let data = blobs(4);
    let cfg = ExperimentConfig {
        algorithm: Method::Euclidean,
        folds: data.len(),
        knn_k: 1,
        ..Default::default()
    };
    let cv = kfold_cv(&data, &cfg, 1).unwrap();
    assert_eq!(cv.folds.len(), 8);
    assert_eq!(cv.mean.accuracy, 1.0);
}

#[test]
fn noisy_instances_get_lower_weight() {
    let data = wine();
    let cfg = ExperimentConfig {
        algorithm: Method::RobustLodml,
        c: 0.1,
        nl: 0.2,
        ..Default::default()
    };
    for seed in 1..=3 {
        let fit = fit_pipeline(&data, &cfg, seed).unwrap();
        let mean = |noisy: bool| {
            let w: Vec<f64> = fit
                .weights
                .iter()
                .zip(&fit.train.noisy)
                .filter(|(_, &f)| f == noisy)
                .map(|(w, _)| *w)
                .collect();
            w.iter().sum::<f64>() / w.len() as f64
        };
        assert!(
            mean(true) < mean(false),
            "seed {seed}: {} vs {}",
            mean(true),
            mean(false)
        );
    }
}

#[test]
fn cv_is_deterministic_under_seed() {
    let data = wine();
    let cfg = ExperimentConfig {
        algorithm: Method::RobustOdml,
        nl: 0.1,
        folds: 3,
        ..Default::default()
    };
    let a = kfold_cv(&data, &cfg, 11).unwrap();
    let b = kfold_cv(&data, &cfg, 11).unwrap();
    let acc = |r: &CvReport| {
        r.folds
            .iter()
            .map(|f| f.report.accuracy)
            .collect::<Vec<_>>()
    };
    assert_eq!(acc(&a), acc(&b));
}

#[test]
fn stored_pipeline_predicts_like_the_original() {
    let data = wine();
    for algorithm in [Method::RobustOasis, Method::RobustLodml] {
        let cfg = ExperimentConfig {
            algorithm,
            nl: 0.1,
            pca_dims: Some(5),
            ..Default::default()
        };
        let fit = fit_pipeline(&data, &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        write_model(&path, &ModelFile::from_pipeline(&fit, &cfg, 5)).unwrap();
        let (pre, knn) = read_model(&path).unwrap().classifier().unwrap();
        let original = fit
            .classifier
            .predict_all(&fit.preprocessor.apply(&data.features).unwrap())
            .unwrap();
        let restored = knn
            .predict_all(&pre.apply(&data.features).unwrap())
            .unwrap();
        assert_eq!(original, restored, "{algorithm}");
    }
}

#[test]
fn libsvm_and_csv_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.libsvm");
    std::fs::write(&path, "-1 1:0.5 3:2.0\n+1 2:1.5\n-1 1:1 2:1 3:1\n").unwrap();
    let ds = load_libsvm(&path).unwrap();
    assert_eq!(ds.features[0], vec![0.5, 0.0, 2.0]);
    assert_eq!(ds.labels, vec![0, 1, 0]);

    let csv = dir.path().join("tiny.csv");
    ds.write_csv(&csv).unwrap();
    let back = load_csv(&csv, "label").unwrap();
    assert_eq!(back.features, ds.features);
    assert_eq!(back.labels, ds.labels);
}
