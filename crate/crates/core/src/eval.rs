//! Label-noise injection, (robust) kNN classification, metrics and
//! cross-validation.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_folds, Dataset, Preprocessor};
use crate::error::{check_dim, Error, Result};
use crate::experiment::{fit_pipeline, ExperimentConfig, FittedPipeline};
use crate::model::{MeasureKind, Metric};

/// Flips `round(nl·n)` distinct labels, each to a uniformly drawn different
/// class, and marks them in `noisy`.
pub fn inject_label_noise(data: &Dataset, nl: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&nl) {
        return Err(Error::config(
            "nl",
            format!("noise level must lie in [0, 1], got {nl}"),
        ));
    }
    let mut out = data.clone();
    out.noisy = vec![false; data.len()];
    let count = (nl * data.len() as f64).round() as usize;
    if count == 0 {
        return Ok(out);
    }
    let n_classes = data.n_classes();
    if n_classes < 2 {
        return Err(Error::data("label noise needs at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, data.len(), count).into_iter() {
        let original = data.labels[i];
        let mut flipped = rng.gen_range(0..n_classes - 1);
        if flipped >= original {
            flipped += 1;
        }
        out.labels[i] = flipped;
        out.noisy[i] = true;
    }
    Ok(out)
}

/// Training rows as a model sees them, so queries cost O(d) or O(r) each
/// where the parameterization allows it.
#[derive(Debug, Clone)]
enum Index {
    /// Full-rank distance: `(x−y)ᵀM(x−y)` evaluated directly.
    Mahalanobis { metric: Metric, rows: Vec<Vec<f64>> },
    /// Similarity `qᵀ(Mx)` with `Mx` cached per training row.
    Bilinear {
        metric: Metric,
        cached: Vec<Vec<f64>>,
    },
    /// Low-rank: rows stored as `Lᵀx`.
    Projected { metric: Metric, rows: Vec<Vec<f64>> },
}

impl Index {
    fn build(metric: &Metric, rows: &[Vec<f64>]) -> Result<Self> {
        for r in rows {
            check_dim(metric.dim(), r.len())?;
        }
        Ok(match metric {
            Metric::LowRank(l) => Index::Projected {
                metric: metric.clone(),
                rows: rows
                    .iter()
                    .map(|r| l.project(r).map(|v| v.iter().copied().collect()))
                    .collect::<Result<_>>()?,
            },
            Metric::Full(m) if m.kind() == MeasureKind::Similarity => Index::Bilinear {
                metric: metric.clone(),
                cached: rows
                    .iter()
                    .map(|r| {
                        (m.matrix() * nalgebra::DVector::from_column_slice(r))
                            .iter()
                            .copied()
                            .collect()
                    })
                    .collect(),
            },
            Metric::Full(_) => Index::Mahalanobis {
                metric: metric.clone(),
                rows: rows.to_vec(),
            },
        })
    }

    fn metric(&self) -> &Metric {
        match self {
            Index::Mahalanobis { metric, .. }
            | Index::Bilinear { metric, .. }
            | Index::Projected { metric, .. } => metric,
        }
    }

    fn len(&self) -> usize {
        match self {
            Index::Mahalanobis { rows, .. } | Index::Projected { rows, .. } => rows.len(),
            Index::Bilinear { cached, .. } => cached.len(),
        }
    }

    /// Training indices ordered nearest-first, ties by index.
    fn ranked(&self, x: &[f64]) -> Result<Vec<usize>> {
        let metric = self.metric();
        check_dim(metric.dim(), x.len())?;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        // smaller key = nearer
        let keys: Vec<f64> = match self {
            Index::Mahalanobis { rows, .. } => rows
                .iter()
                .map(|r| metric.measure(x, r))
                .collect::<Result<_>>()?,
            Index::Bilinear { cached, .. } => cached.iter().map(|c| -dot(x, c)).collect(),
            Index::Projected { rows, metric } => {
                let Metric::LowRank(l) = metric else {
                    unreachable!()
                };
                let q: Vec<f64> = l.project(x)?.iter().copied().collect();
                match metric.kind() {
                    MeasureKind::Distance => rows
                        .iter()
                        .map(|r| r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum())
                        .collect(),
                    MeasureKind::Similarity => rows.iter().map(|r| -dot(&q, r)).collect(),
                }
            }
        };
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
        Ok(order)
    }
}

/// Weighted vote over neighbors given nearest-first. Ties go to the label
/// whose member appears earliest.
fn vote(neighbors: &[usize], labels: &[usize], weights: &[f64], n_classes: usize) -> usize {
    let mut tally = vec![0.0; n_classes];
    for &i in neighbors {
        tally[labels[i]] += weights[i];
    }
    let best = tally.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    neighbors
        .iter()
        .map(|&i| labels[i])
        .find(|&y| tally[y] == best)
        .unwrap_or(labels[neighbors[0]])
}

/// Plain majority-vote kNN under `metric`; for similarity metrics the
/// nearest neighbors are the most similar ones.
pub fn knn_predict(train: &Dataset, metric: &Metric, x: &[f64], k: usize) -> Result<usize> {
    let clf = RobustKnn::new(train, &vec![1.0; train.len()], 0.0, k, metric)?;
    clf.predict(x)
}

/// kNN that drops the lowest-weight training instances and votes with
/// instance weights.
#[derive(Debug, Clone)]
pub struct RobustKnn {
    index: Index,
    labels: Vec<usize>,
    weights: Vec<f64>,
    n_classes: usize,
    k: usize,
}

impl RobustKnn {
    /// Removes `⌊removal_fraction·n⌋` instances with the smallest weight
    /// (ties by lower index first).
    pub fn new(
        train: &Dataset,
        weights: &[f64],
        removal_fraction: f64,
        k: usize,
        metric: &Metric,
    ) -> Result<Self> {
        check_dim(train.len(), weights.len())?;
        if !(0.0..1.0).contains(&removal_fraction) {
            return Err(Error::config(
                "removal_fraction",
                format!("must lie in [0, 1), got {removal_fraction}"),
            ));
        }
        if k == 0 {
            return Err(Error::config("knn_k", "must be ≥ 1"));
        }
        let n = train.len();
        let removed = (removal_fraction * n as f64).floor() as usize;
        if n - removed < k {
            return Err(Error::data(format!(
                "{} instances remain after removal, fewer than k = {k}",
                n - removed
            )));
        }
        let mut by_weight: Vec<usize> = (0..n).collect();
        by_weight.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
        let mut keep: Vec<usize> = by_weight[removed..].to_vec();
        keep.sort_unstable();
        let rows: Vec<Vec<f64>> = keep.iter().map(|&i| train.features[i].clone()).collect();
        Ok(Self {
            index: Index::build(metric, &rows)?,
            labels: keep.iter().map(|&i| train.labels[i]).collect(),
            weights: keep.iter().map(|&i| weights[i]).collect(),
            n_classes: train.n_classes(),
            k,
        })
    }

    pub fn retained(&self) -> usize {
        self.index.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let ranked = self.index.ranked(x)?;
        Ok(vote(
            &ranked[..self.k],
            &self.labels,
            &self.weights,
            self.n_classes,
        ))
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Binary confusion counts. Real-valued so fold averages fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub fp: f64,
    pub tn: f64,
}

impl ConfusionMatrix {
    pub fn new(tp: f64, fn_: f64, fp: f64, tn: f64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn mean(matrices: &[ConfusionMatrix]) -> Self {
        let n = matrices.len().max(1) as f64;
        let mut m = matrices.iter().fold(Self::default(), |acc, c| Self {
            tp: acc.tp + c.tp,
            fn_: acc.fn_ + c.fn_,
            fp: acc.fp + c.fp,
            tn: acc.tn + c.tn,
        });
        m.tp /= n;
        m.fn_ /= n;
        m.fp /= n;
        m.tn /= n;
        m
    }
}

/// One-vs-rest counts for `positive_class`.
pub fn confusion(
    preds: &[usize],
    actuals: &[usize],
    positive_class: usize,
) -> Result<ConfusionMatrix> {
    check_dim(actuals.len(), preds.len())?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in preds.iter().zip(actuals) {
        match (a == positive_class, p == positive_class) {
            (true, true) => cm.tp += 1.0,
            (true, false) => cm.fn_ += 1.0,
            (false, true) => cm.fp += 1.0,
            (false, false) => cm.tn += 1.0,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub specificity: f64,
    pub f1: f64,
    pub g_mean: f64,
    /// Some ratio was 0/0 and was reported as 0.
    pub degenerate: bool,
}

impl MetricReport {
    fn fields(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.sensitivity,
            self.precision,
            self.specificity,
            self.f1,
            self.g_mean,
        ]
    }

    fn from_fields(f: [f64; 6]) -> Self {
        Self {
            accuracy: f[0],
            sensitivity: f[1],
            precision: f[2],
            specificity: f[3],
            f1: f[4],
            g_mean: f[5],
            degenerate: false,
        }
    }

    /// Per-field mean and sample standard deviation.
    pub fn mean_std(reports: &[MetricReport]) -> (MetricReport, MetricReport) {
        let n = reports.len();
        let mut mean = [0.0; 6];
        for r in reports {
            for (m, v) in mean.iter_mut().zip(r.fields()) {
                *m += v / n as f64;
            }
        }
        let mut std = [0.0; 6];
        if n > 1 {
            for r in reports {
                for ((s, v), m) in std.iter_mut().zip(r.fields()).zip(mean) {
                    *s += (v - m) * (v - m);
                }
            }
            for s in &mut std {
                *s = (*s / (n as f64 - 1.0)).sqrt();
            }
        }
        let mut mean = Self::from_fields(mean);
        mean.degenerate = reports.iter().any(|r| r.degenerate);
        (mean, Self::from_fields(std))
    }
}

/// Accuracy, sensitivity, precision, specificity, F1 and G-mean.
pub fn metrics(cm: &ConfusionMatrix) -> MetricReport {
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else {
            degenerate = true;
            0.0
        }
    };
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let specificity = ratio(cm.tn, cm.tn + cm.fp);
    let f1 = ratio(2.0 * precision * sensitivity, precision + sensitivity);
    MetricReport {
        accuracy,
        sensitivity,
        precision,
        specificity,
        f1,
        g_mean: (sensitivity * specificity).sqrt(),
        degenerate,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub report: MetricReport,
    pub confusion: ConfusionMatrix,
    pub runtime_ms: f64,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean: MetricReport,
    pub std: MetricReport,
    pub mean_confusion: ConfusionMatrix,
    /// Metrics of the fold-averaged confusion matrix.
    pub mean_confusion_metrics: MetricReport,
}

/// Scores a fitted pipeline on raw (unprocessed) test rows. Accuracy is the
/// exact-match rate; the other metrics are one-vs-rest for `positive_class`.
pub fn evaluate(
    pipeline: &FittedPipeline,
    test: &Dataset,
    positive_class: usize,
) -> Result<(MetricReport, ConfusionMatrix)> {
    score(
        &pipeline.preprocessor,
        &pipeline.classifier,
        test,
        positive_class,
    )
}

/// [`evaluate`] for a preprocessor and classifier restored from disk.
pub fn score(
    preprocessor: &Preprocessor,
    classifier: &RobustKnn,
    test: &Dataset,
    positive_class: usize,
) -> Result<(MetricReport, ConfusionMatrix)> {
    let rows = preprocessor.apply(&test.features)?;
    let preds = classifier.predict_all(&rows)?;
    let cm = confusion(&preds, &test.labels, positive_class)?;
    let mut report = metrics(&cm);
    let hits = preds
        .iter()
        .zip(&test.labels)
        .filter(|(p, a)| p == a)
        .count();
    report.accuracy = if test.is_empty() {
        0.0
    } else {
        hits as f64 / test.len() as f64
    };
    Ok((report, cm))
}

/// Stratified k-fold cross-validation of the configured pipeline. Noise is
/// injected into each training part only; test labels stay clean.
pub fn kfold_cv(data: &Dataset, config: &ExperimentConfig, seed: u64) -> Result<CvReport> {
    config.validate()?;
    let folds = stratified_folds(&data.labels, config.folds, seed)?;
    let positive = config
        .positive_class
        .unwrap_or(if data.n_classes() == 2 { 1 } else { 0 });
    let mut results = Vec::with_capacity(folds.len());
    for (f, test_idx) in folds.iter().enumerate() {
        let start = Instant::now();
        let fold_seed = seed ^ f as u64;
        let mut in_test = vec![false; data.len()];
        for &i in test_idx {
            in_test[i] = true;
        }
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
        let train = data.subset(&train_idx);
        let test = data.subset(test_idx);
        let pipeline = fit_pipeline(&train, config, fold_seed)?;
        let (report, cm) = evaluate(&pipeline, &test, positive)?;
        results.push(FoldResult {
            fold: f,
            seed: fold_seed,
            report,
            confusion: cm,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
            train_size: train.len(),
            test_size: test.len(),
        });
    }
    let reports: Vec<MetricReport> = results.iter().map(|r| r.report).collect();
    let (mean, std) = MetricReport::mean_std(&reports);
    let mean_confusion =
        ConfusionMatrix::mean(&results.iter().map(|r| r.confusion).collect::<Vec<_>>());
    Ok(CvReport {
        folds: results,
        mean,
        std,
        mean_confusion,
        mean_confusion_metrics: metrics(&mean_confusion),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FullRankMetric;

    fn identity(d: usize) -> Metric {
        FullRankMetric::identity(d, MeasureKind::Distance).into()
    }

    #[test]
    fn noise_examples() {
        let labels: Vec<usize> = (0..178).map(|i| i % 3).collect();
        let ds = Dataset::new(vec![vec![0.0]; 178], labels.clone()).unwrap();
        let clean = inject_label_noise(&ds, 0.0, 1).unwrap();
        assert_eq!(clean.labels, labels);
        assert!(clean.noisy.iter().all(|f| !f));

        let noisy = inject_label_noise(&ds, 0.10, 1).unwrap();
        assert_eq!(noisy.noisy.iter().filter(|&&f| f).count(), 18);
        for ((flag, got), want) in noisy.noisy.iter().zip(&noisy.labels).zip(&labels) {
            assert_eq!(*flag, got != want);
        }

        let two = Dataset::new(vec![vec![0.0]; 6], vec![0, 1, 0, 1, 1, 0]).unwrap();
        let all = inject_label_noise(&two, 1.0, 3).unwrap();
        assert!(all.labels.iter().zip(&two.labels).all(|(a, b)| a != b));
        assert!(inject_label_noise(&two, 1.1, 0).is_err());
        assert!(inject_label_noise(&two, -0.1, 0).is_err());
    }

    #[test]
    fn knn_examples() {
        let ds = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![1.2], vec![5.0]],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        assert_eq!(knn_predict(&ds, &identity(1), &[5.0], 1).unwrap(), 1);
        // neighbors of 0.4: 0.0 (A), 1.0 (A), 1.2 (B)
        assert_eq!(knn_predict(&ds, &identity(1), &[0.4], 3).unwrap(), 0);
    }

    #[test]
    fn knn_tie_goes_to_nearest() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![1, 0]).unwrap();
        assert_eq!(knn_predict(&ds, &identity(1), &[0.2], 2).unwrap(), 1);
        assert_eq!(knn_predict(&ds, &identity(1), &[0.9], 2).unwrap(), 0);
    }

    #[test]
    fn knn_similarity_uses_highest_score() {
        let ds = Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1]).unwrap();
        let sim: Metric = FullRankMetric::identity(2, MeasureKind::Similarity).into();
        assert_eq!(knn_predict(&ds, &sim, &[0.1, 3.0], 1).unwrap(), 1);
    }

    #[test]
    fn robust_knn_examples() {
        let ds = Dataset::new(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![9.0]],
            vec![0, 1, 1, 0],
        )
        .unwrap();
        let clf = RobustKnn::new(&ds, &[0.9, 0.3, 0.3, 1.0], 0.0, 3, &identity(1)).unwrap();
        assert_eq!(clf.predict(&[0.0]).unwrap(), 0);
        let plain = RobustKnn::new(&ds, &[1.0; 4], 0.0, 3, &identity(1)).unwrap();
        assert_eq!(plain.predict(&[0.0]).unwrap(), 1);

        let ten = Dataset::new((0..10).map(|i| vec![i as f64]).collect(), vec![0; 10]).unwrap();
        let clf = RobustKnn::new(&ten, &[1.0; 10], 0.2, 3, &identity(1)).unwrap();
        assert_eq!(clf.retained(), 8);
        assert!(RobustKnn::new(&ten, &[1.0; 10], 0.8, 3, &identity(1)).is_err());
    }

    #[test]
    fn robust_knn_removes_lowest_weights() {
        let ds = Dataset::new(vec![vec![0.0], vec![0.1], vec![5.0]], vec![1, 0, 0]).unwrap();
        let clf = RobustKnn::new(&ds, &[0.1, 1.0, 1.0], 0.34, 1, &identity(1)).unwrap();
        assert_eq!(clf.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[1, 0, 1], &[1, 0, 1], 1).unwrap();
        assert_eq!((cm.fn_, cm.fp), (0.0, 0.0));
        let cm = confusion(&[0, 0, 0, 0], &[1, 1, 1, 0], 1).unwrap();
        assert_eq!((cm.tp, cm.fn_), (0.0, 3.0));
        assert!(confusion(&[0], &[0, 1], 1).is_err());
    }

    #[test]
    fn metrics_examples() {
        let r = metrics(&ConfusionMatrix::new(5.0, 0.0, 0.0, 5.0));
        assert_eq!(r.fields(), [1.0; 6]);
        assert!(!r.degenerate);
        let r = metrics(&ConfusionMatrix::new(0.0, 0.0, 1.0, 4.0));
        assert_eq!(r.sensitivity, 0.0);
        assert!(r.degenerate);
        let r = metrics(&ConfusionMatrix::new(42.0, 1.8, 6.6, 261.6));
        assert!((r.accuracy - 303.6 / 312.0).abs() < 1e-12);
        assert!((r.accuracy - 0.9731).abs() < 5e-5);
        assert!((r.sensitivity - 42.0 / 43.8).abs() < 1e-12);
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let a = MetricReport {
            accuracy: 0.8,
            ..Default::default()
        };
        let b = MetricReport {
            accuracy: 1.0,
            ..Default::default()
        };
        let (m, s) = MetricReport::mean_std(&[a, b]);
        assert!((m.accuracy - 0.9).abs() < 1e-12);
        assert!((s.accuracy - (0.02f64).sqrt()).abs() < 1e-12);
    }
}
