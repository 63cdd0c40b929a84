//! Binary model files.
//!
//! Layout (little endian):
//!
//! ```text
//! magic   8 bytes  "OMLMODEL"
//! version u32
//! kind    u8       0 = distance, 1 = similarity
//! repr    u8       0 = full rank (M, d×d), 1 = low rank (L, d×r)
//! d, r    u64, u64
//! values  d·r f64  column-major
//! n       u64      instance weight count, then n f64
//! len     u64      pipeline JSON length (0 = none), then the bytes
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Pca, Preprocessor, ZScore};
use crate::error::{Error, Result};
use crate::eval::RobustKnn;
use crate::experiment::{ExperimentConfig, FittedPipeline};
use crate::model::{FullRankMetric, LowRankTransform, MeasureKind, Metric};

const MAGIC: &[u8; 8] = b"OMLMODEL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PcaState {
    mean: Vec<f64>,
    /// Column-major d×d'.
    basis: Vec<f64>,
    components: usize,
    explained_variance_ratio: Vec<f64>,
}

/// What `evaluate` needs besides the metric and weights: preprocessing and
/// the (noisy) training set the kNN searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub config: ExperimentConfig,
    pub seed: u64,
    zscore: Option<(Vec<f64>, Vec<f64>)>,
    pca: Option<PcaState>,
    pub train_features: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub metric: Metric,
    pub weights: Vec<f64>,
    pub pipeline: Option<PipelineState>,
}

impl ModelFile {
    pub fn from_pipeline(fit: &FittedPipeline, config: &ExperimentConfig, seed: u64) -> Self {
        let pre = &fit.preprocessor;
        let pipeline = PipelineState {
            config: config.clone(),
            seed,
            zscore: pre
                .zscore
                .as_ref()
                .map(|z| (z.means.clone(), z.stds.clone())),
            pca: pre.pca.as_ref().map(|p| PcaState {
                mean: p.mean.iter().copied().collect(),
                basis: p.basis.as_slice().to_vec(),
                components: p.components(),
                explained_variance_ratio: p.explained_variance_ratio.clone(),
            }),
            train_features: fit.train.features.clone(),
            train_labels: fit.train.labels.clone(),
            class_names: fit.train.class_names.clone(),
        };
        Self {
            metric: fit.metric.clone(),
            weights: fit.weights.clone(),
            pipeline: Some(pipeline),
        }
    }

    /// Rebuilds the preprocessor and Robust-kNN stored alongside the metric.
    pub fn classifier(&self) -> Result<(Preprocessor, RobustKnn)> {
        let state = self
            .pipeline
            .as_ref()
            .ok_or_else(|| Error::data("model file carries no training pipeline"))?;
        let zscore = state
            .zscore
            .clone()
            .map(|(means, stds)| ZScore { means, stds });
        let pca = match &state.pca {
            Some(p) => {
                let d = p.mean.len();
                if p.basis.len() != d * p.components {
                    return Err(Error::data("corrupt PCA basis in model file"));
                }
                Some(Pca {
                    mean: DVector::from_vec(p.mean.clone()),
                    basis: DMatrix::from_column_slice(d, p.components, &p.basis),
                    explained_variance_ratio: p.explained_variance_ratio.clone(),
                })
            }
            None => None,
        };
        let train = Dataset::with_class_names(
            state.train_features.clone(),
            state.train_labels.clone(),
            state.class_names.clone(),
        )?;
        let knn = RobustKnn::new(
            &train,
            &self.weights,
            state.config.effective_removal_fraction(),
            state.config.knn_k,
            &self.metric,
        )?;
        Ok((Preprocessor::from_parts(zscore, pca), knn))
    }
}

fn write_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn write_f64s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let kind = match model.metric.kind() {
        MeasureKind::Distance => 0u8,
        MeasureKind::Similarity => 1u8,
    };
    let (repr, values) = match &model.metric {
        Metric::Full(m) => (0u8, m.matrix()),
        Metric::LowRank(l) => (1u8, l.factor()),
    };
    buf.push(kind);
    buf.push(repr);
    write_u64(&mut buf, values.nrows())?;
    write_u64(&mut buf, values.ncols())?;
    write_f64s(&mut buf, values.iter().copied())?;
    write_u64(&mut buf, model.weights.len())?;
    write_f64s(&mut buf, model.weights.iter().copied())?;
    let json = match &model.pipeline {
        Some(p) => serde_json::to_vec(p)?,
        None => Vec::new(),
    };
    write_u64(&mut buf, json.len())?;
    buf.extend_from_slice(&json);
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::data("model file is truncated"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::data("model file size field overflows"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::data("model file size field overflows"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::data("not a model file (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::data(format!(
            "unsupported model file version {version}"
        )));
    }
    let kind = match r.u8()? {
        0 => MeasureKind::Distance,
        1 => MeasureKind::Similarity,
        k => return Err(Error::data(format!("unknown measure kind {k}"))),
    };
    let repr = r.u8()?;
    let d = r.u64()?;
    let cols = r.u64()?;
    let values = r.f64s(
        d.checked_mul(cols)
            .ok_or_else(|| Error::data("model dimensions overflow"))?,
    )?;
    let matrix = DMatrix::from_vec(d, cols, values);
    let metric = match repr {
        0 if d == cols => Metric::Full(FullRankMetric::from_raw(matrix, kind)?),
        1 => Metric::LowRank(LowRankTransform::from_factor(matrix, kind)?),
        _ => {
            return Err(Error::data(format!(
                "bad representation {repr} for {d}x{cols}"
            )))
        }
    };
    let n = r.u64()?;
    let weights = r.f64s(n)?;
    let len = r.u64()?;
    let pipeline = if len == 0 {
        None
    } else {
        Some(serde_json::from_slice(r.take(len)?)?)
    };
    if !r.bytes.is_empty() {
        return Err(Error::data("trailing bytes in model file"));
    }
    Ok(ModelFile {
        metric,
        weights,
        pipeline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(model: &ModelFile) -> ModelFile {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_model(&path, model).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = read_model(&path).unwrap();
        write_model(&path, &back).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        back
    }

    #[test]
    fn full_rank_roundtrip_is_bit_exact() {
        // deliberately asymmetric with awkward values
        let m = DMatrix::from_row_slice(2, 2, &[0.1 + 0.2, -1e-310, std::f64::consts::PI, 7.0]);
        let model = ModelFile {
            metric: FullRankMetric::from_raw(m.clone(), MeasureKind::Distance)
                .unwrap()
                .into(),
            weights: vec![1.0, 0.25, 5e-324],
            pipeline: None,
        };
        let back = roundtrip(&model);
        match &back.metric {
            Metric::Full(f) => {
                for (a, b) in f.matrix().iter().zip(m.iter()) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            _ => panic!("wrong representation"),
        }
        assert_eq!(back, model);
    }

    #[test]
    fn low_rank_roundtrip() {
        let l = DMatrix::from_fn(4, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let model = ModelFile {
            metric: LowRankTransform::from_factor(l, MeasureKind::Similarity)
                .unwrap()
                .into(),
            weights: vec![],
            pipeline: None,
        };
        assert_eq!(roundtrip(&model), model);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"OMLMODEL\x01\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_model(&path), Err(Error::Data(_))));
        std::fs::write(&path, b"nope").unwrap();
        assert!(read_model(&path).is_err());
    }
}
