//! End-to-end pipeline: preprocessing, label noise, triplet generation,
//! online learning and the weighted kNN built on the result.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, load_libsvm, Dataset, Preprocessor};
use crate::error::{Error, Result};
use crate::eval::{inject_label_noise, CvReport, RobustKnn};
use crate::learners::{train_online, Algorithm, Learner, LowRankOptions};
use crate::loss::RobustParams;
use crate::model::{FullRankMetric, MeasureKind, Metric, Triplet};
use crate::triplets::{
    batch_generate, classify_noisy, run_octg, OctgOptions, TripletRecord, TripletStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RobustOasis,
    RobustOdml,
    RobustLosl,
    RobustLodml,
    /// Plain-hinge OASIS (`η = 0`).
    Oasis,
    /// Plain-hinge ODML (`η = 0`).
    Odml,
    /// Identity metric, no learning.
    Euclidean,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::RobustOasis,
        Method::RobustOdml,
        Method::RobustLosl,
        Method::RobustLodml,
        Method::Oasis,
        Method::Odml,
        Method::Euclidean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::RobustOasis => "robust_oasis",
            Method::RobustOdml => "robust_odml",
            Method::RobustLosl => "robust_losl",
            Method::RobustLodml => "robust_lodml",
            Method::Oasis => "oasis",
            Method::Odml => "odml",
            Method::Euclidean => "euclidean",
        }
    }

    /// Learner algorithm and whether `η` is forced to zero.
    pub fn learner(self) -> Option<(Algorithm, bool)> {
        match self {
            Method::RobustOasis => Some((Algorithm::RobustOasis, false)),
            Method::RobustOdml => Some((Algorithm::RobustOdml, false)),
            Method::RobustLosl => Some((Algorithm::RobustLosl, false)),
            Method::RobustLodml => Some((Algorithm::RobustLodml, false)),
            Method::Oasis => Some((Algorithm::RobustOasis, true)),
            Method::Odml => Some((Algorithm::RobustOdml, true)),
            Method::Euclidean => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::config("algorithm", format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletSource {
    Octg,
    Batch,
}

impl FromStr for TripletSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "octg" => Ok(TripletSource::Octg),
            "batch" => Ok(TripletSource::Batch),
            _ => Err(Error::config(
                "triplet_source",
                format!("unknown source `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Libsvm,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "libsvm" => Ok(DataFormat::Libsvm),
            _ => Err(Error::config("format", format!("unknown format `{s}`"))),
        }
    }
}

/// Everything needed to replay one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub format: DataFormat,
    pub label_column: String,
    pub algorithm: Method,
    #[serde(rename = "C")]
    pub c: f64,
    pub eta: f64,
    pub max_hq_iter: usize,
    /// Low-rank `r`; `None` means full dimension.
    pub rank: Option<usize>,
    pub lr: f64,
    pub grad_steps: usize,
    pub c_per_class: usize,
    pub margin: f64,
    pub init_fraction: f64,
    pub triplet_source: TripletSource,
    pub batch_k: usize,
    pub nl: f64,
    pub folds: usize,
    pub knn_k: usize,
    /// Robust-kNN removal share; defaults to `nl` for robust (`η > 0`)
    /// learners and 0 otherwise.
    pub removal_fraction: Option<f64>,
    pub pca_dims: Option<usize>,
    pub normalize: bool,
    /// Class treated as positive for the binary metrics.
    pub positive_class: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: DataFormat::Csv,
            label_column: "label".into(),
            algorithm: Method::RobustLodml,
            c: 1.0,
            eta: 1.0,
            max_hq_iter: 3,
            rank: None,
            lr: 0.01,
            grad_steps: 5,
            c_per_class: 3,
            margin: 1.0,
            init_fraction: 0.2,
            triplet_source: TripletSource::Octg,
            batch_k: 3,
            nl: 0.0,
            folds: 10,
            knn_k: 3,
            removal_fraction: None,
            pca_dims: None,
            normalize: true,
            positive_class: None,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |field: &str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("must lie in [{lo}, {hi}], got {v}"),
                ))
            }
        };
        range("C", self.c, 1e-6, 30.0)?;
        if self.eta != 0.0 {
            range("eta", self.eta, 0.01, 5.0)?;
        }
        range("nl", self.nl, 0.0, 1.0)?;
        range("margin", self.margin, 0.0, f64::MAX)?;
        range("init_fraction", self.init_fraction, f64::MIN_POSITIVE, 1.0)?;
        if !(1..=10).contains(&self.max_hq_iter) {
            return Err(Error::config(
                "max_hq_iter",
                format!("must lie in 1..=10, got {}", self.max_hq_iter),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("lr", format!("must be > 0, got {}", self.lr)));
        }
        for (field, v) in [
            ("grad_steps", self.grad_steps),
            ("c_per_class", self.c_per_class),
            ("batch_k", self.batch_k),
            ("knn_k", self.knn_k),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be ≥ 1"));
            }
        }
        if self.folds < 2 {
            return Err(Error::config(
                "folds",
                format!("must be ≥ 2, got {}", self.folds),
            ));
        }
        if self.rank == Some(0) {
            return Err(Error::config("rank", "must be ≥ 1"));
        }
        if self.pca_dims == Some(0) {
            return Err(Error::config("pca_dims", "must be ≥ 1"));
        }
        if let Some(r) = self.removal_fraction {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::config(
                    "removal_fraction",
                    format!("must lie in [0, 1), got {r}"),
                ));
            }
        }
        Ok(())
    }

    /// `η` actually handed to the learner.
    pub fn effective_eta(&self) -> f64 {
        match self.algorithm.learner() {
            Some((_, false)) => self.eta,
            _ => 0.0,
        }
    }

    pub fn effective_removal_fraction(&self) -> f64 {
        self.removal_fraction.unwrap_or_else(|| {
            if self.algorithm.learner().is_some() && self.effective_eta() > 0.0 {
                self.nl
            } else {
                0.0
            }
        })
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::config("dataset", "no dataset path given"))?;
        load_dataset(path, self.format, &self.label_column)
    }
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DataFormat,
    label_column: &str,
) -> Result<Dataset> {
    match format {
        DataFormat::Csv => load_csv(path, label_column),
        DataFormat::Libsvm => load_libsvm(path),
    }
}

/// A trained model together with what Robust-kNN needs at query time.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub preprocessor: Preprocessor,
    pub metric: Metric,
    /// Training set after preprocessing and noise injection.
    pub train: Dataset,
    pub weights: Vec<f64>,
    pub classifier: RobustKnn,
    pub triplet_count: usize,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

struct Learned {
    metric: Metric,
    weights: Vec<f64>,
    records: Vec<TripletRecord>,
    triplet_count: usize,
}

fn learn(
    ds: &Dataset,
    config: &ExperimentConfig,
    seed: u64,
    keep_records: bool,
) -> Result<Learned> {
    let order = shuffled(ds.len(), seed.wrapping_add(1));
    let mut learner = match config.algorithm.learner() {
        Some((alg, _)) => Some(Learner::new(
            alg,
            RobustParams::new(config.c, config.effective_eta(), config.max_hq_iter)?,
            ds.dim(),
            LowRankOptions {
                rank: config.rank,
                lr: config.lr,
                grad_steps: config.grad_steps,
            },
        )?),
        None => None,
    };
    let (weights, records, triplet_count) = match config.triplet_source {
        TripletSource::Octg => {
            let options = OctgOptions {
                per_class: config.c_per_class,
                margin: config.margin,
                init_fraction: config.init_fraction,
                seed: seed.wrapping_add(2),
            };
            let run = run_octg(
                &ds.features,
                &ds.labels,
                &order,
                learner.as_mut(),
                &options,
                keep_records,
            )?;
            (run.weights, run.records, run.triplet_count)
        }
        TripletSource::Batch => {
            let triplets = batch_generate(&ds.features, &ds.labels, config.batch_k, config.margin)?;
            let count = triplets.len();
            let mut by_anchor: Vec<Vec<Triplet>> = vec![Vec::new(); ds.len()];
            for t in triplets {
                let a = t.provenance.map_or(0, |p| p.anchor);
                by_anchor[a].push(t);
            }
            let weights = match learner.as_mut() {
                Some(l) => {
                    train_online(l, order.iter().map(|&i| (&by_anchor[i][..], i)), ds.len())?
                }
                None => vec![1.0; ds.len()],
            };
            let records = if keep_records {
                order
                    .iter()
                    .flat_map(|&i| by_anchor[i].iter().cloned())
                    .map(|triplet| TripletRecord {
                        triplet,
                        outcome: None,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            (weights, records, count)
        }
    };
    let metric = match learner {
        Some(l) => l.into_metric(),
        None => FullRankMetric::identity(ds.dim(), MeasureKind::Distance).into(),
    };
    Ok(Learned {
        metric,
        weights,
        records,
        triplet_count,
    })
}

/// Fits preprocessing on `train`, corrupts its labels, streams it through the
/// triplet generator and learner, and builds the Robust-kNN classifier.
pub fn fit_pipeline(
    train: &Dataset,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<FittedPipeline> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::data("empty training set"));
    }
    let preprocessor = Preprocessor::fit(&train.features, config.normalize, config.pca_dims)?;
    let mut ds = train.clone();
    ds.features = preprocessor.apply(&train.features)?;
    let ds = inject_label_noise(&ds, config.nl, seed)?;
    let learned = learn(&ds, config, seed, false)?;
    let classifier = RobustKnn::new(
        &ds,
        &learned.weights,
        config.effective_removal_fraction(),
        config.knn_k,
        &learned.metric,
    )?;
    Ok(FittedPipeline {
        preprocessor,
        metric: learned.metric,
        triplet_count: learned.triplet_count,
        train: ds,
        weights: learned.weights,
        classifier,
    })
}

#[derive(Debug, Clone)]
pub struct TripletStatsRun {
    pub stats: TripletStats,
    pub noisy_flags: Vec<bool>,
    pub records: Vec<TripletRecord>,
    pub weights: Vec<f64>,
}

/// Corrupts the whole dataset, generates triplets with the configured source
/// and sorts them into noisy categories (hinge losses under the identity
/// metric).
pub fn triplet_stats(
    data: &Dataset,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<TripletStatsRun> {
    config.validate()?;
    let preprocessor = Preprocessor::fit(&data.features, config.normalize, config.pca_dims)?;
    let mut ds = data.clone();
    ds.features = preprocessor.apply(&data.features)?;
    let ds = inject_label_noise(&ds, config.nl, seed)?;
    let learned = learn(&ds, config, seed, true)?;
    let identity: Metric = FullRankMetric::identity(ds.dim(), MeasureKind::Distance).into();
    let triplets: Vec<Triplet> = learned.records.iter().map(|r| r.triplet.clone()).collect();
    let stats = classify_noisy(&triplets, &ds.noisy, &identity)?;
    Ok(TripletStatsRun {
        stats,
        noisy_flags: ds.noisy,
        records: learned.records,
        weights: learned.weights,
    })
}

/// One row of experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub algorithm: String,
    pub nl: f64,
    /// Fold index, or `mean` / `std` for aggregate rows.
    pub fold: String,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub specificity: f64,
    pub f1: f64,
    pub g_mean: f64,
    pub runtime_ms: f64,
    pub seed: u64,
}

/// Per-fold rows followed by `mean` and `std` rows.
pub fn result_records(
    dataset: &str,
    config: &ExperimentConfig,
    seed: u64,
    cv: &CvReport,
) -> Vec<ResultRecord> {
    let row =
        |fold: String, r: &crate::eval::MetricReport, runtime_ms: f64, seed: u64| ResultRecord {
            dataset: dataset.to_string(),
            algorithm: config.algorithm.name().to_string(),
            nl: config.nl,
            fold,
            accuracy: r.accuracy,
            sensitivity: r.sensitivity,
            precision: r.precision,
            specificity: r.specificity,
            f1: r.f1,
            g_mean: r.g_mean,
            runtime_ms,
            seed,
        };
    let total_ms: f64 = cv.folds.iter().map(|f| f.runtime_ms).sum();
    let mut out: Vec<ResultRecord> = cv
        .folds
        .iter()
        .map(|f| row(f.fold.to_string(), &f.report, f.runtime_ms, f.seed))
        .collect();
    out.push(row("mean".into(), &cv.mean, total_ms, seed));
    out.push(row("std".into(), &cv.std, 0.0, seed));
    out
}

/// Appends records to a CSV file, writing the header when the file is new.
pub fn append_results_csv(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let path = path.as_ref();
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
