//! Dataset ingestion, normalization, PCA and stratified splitting.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Dense labelled data with per-instance weights and noise flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    /// Contiguous class ids `0..n_classes`.
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub noisy: Vec<bool>,
    pub feature_names: Option<Vec<String>>,
    /// Original label text, indexed by class id.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::with_class_names(features, labels, class_names)
    }

    pub fn with_class_names(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        check_dim(features.len(), labels.len())?;
        if let Some(first) = features.first() {
            for row in &features {
                check_dim(first.len(), row.len())?;
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::data("features must be finite"));
                }
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::data(format!(
                "label {bad} outside {} declared classes",
                class_names.len()
            )));
        }
        let n = labels.len();
        Ok(Self {
            features,
            labels,
            weights: vec![1.0; n],
            noisy: vec![false; n],
            feature_names: None,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            noisy: indices.iter().map(|&i| self.noisy[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Renumbers labels so that class ids follow `class_names` (matched by
    /// label text). Needed when a held-out file lists classes in a different
    /// order than the training file.
    pub fn align_classes(&self, class_names: &[String]) -> Result<Self> {
        let lookup: HashMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let remap = self
            .class_names
            .iter()
            .map(|n| {
                lookup
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::data(format!("class `{n}` was not seen in training")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.clone();
        out.labels = self.labels.iter().map(|&y| remap[y]).collect();
        out.class_names = class_names.to_vec();
        Ok(out)
    }

    /// Writes a CSV readable by [`load_csv`] with label column `label`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = match &self.feature_names {
            Some(names) => names.clone(),
            None => (0..self.dim()).map(|j| format!("f{j}")).collect(),
        };
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &y) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.class_names[y].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a CSV with a header row. Labels are mapped to class ids in order of
/// first appearance; every other column must be numeric.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(parse_err(1, "missing header row".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| parse_err(1, format!("label column `{label_column}` not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric feature `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite feature `{cell}`")));
            }
            row.push(v);
        }
        let raw = record[label_idx].trim().to_string();
        let next = class_names.len();
        let id = *class_ids.entry(raw.clone()).or_insert_with(|| {
            class_names.push(raw);
            next
        });
        features.push(row);
        labels.push(id);
    }
    if labels.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let mut ds = Dataset::with_class_names(features, labels, class_names)?;
    ds.feature_names = Some(feature_names);
    Ok(ds)
}

/// Loads sparse `label idx:val ...` lines (1-based indices) into dense rows
/// sized by the largest index seen. Labels are numeric and mapped to class ids
/// in ascending order.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut raw_labels: Vec<(f64, String)> = Vec::new();
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_idx = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-numeric label `{label_tok}`")))?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("non-numeric value `{val}`")))?;
            if !val.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value `{val}`")));
            }
            max_idx = max_idx.max(idx);
            entries.push((idx - 1, val));
        }
        raw_labels.push((label, label_tok.to_string()));
        sparse.push(entries);
    }
    if sparse.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }

    let mut distinct: Vec<f64> = raw_labels.iter().map(|(v, _)| *v).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let class_names = distinct
        .iter()
        .map(|&v| {
            raw_labels
                .iter()
                .find(|(l, _)| *l == v)
                .map(|(_, s)| s.clone())
                .unwrap_or_default()
        })
        .collect();
    let labels = raw_labels
        .iter()
        .map(|(v, _)| distinct.iter().position(|d| d == v).unwrap_or(0))
        .collect();
    let features = sparse
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; max_idx];
            for (j, v) in entries {
                row[j] = v;
            }
            row
        })
        .collect();
    Dataset::with_class_names(features, labels, class_names)
}

/// Per-feature standardization with population statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ZScore {
    /// Zero-variance columns get std 1 so they map to 0.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::data("cannot fit normalization on zero rows"));
        }
        let d = rows[0].len();
        let mut means = vec![0.0; d];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut stds = vec![0.0; d];
        for row in rows {
            for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for (j, s) in stds.iter_mut().enumerate() {
            *s = (*s / n as f64).sqrt();
            if !(*s > 1e-12) {
                log::warn!("feature {j} has zero variance; leaving it unscaled");
                *s = 1.0;
            }
        }
        Ok(Self { means, stds })
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.means.len(), row.len())?;
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Projection onto the leading principal directions of the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// d×d' matrix with orthonormal columns, ordered by decreasing variance.
    pub basis: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    pub fn fit(rows: &[Vec<f64>], components: usize) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if components == 0 || n < 2 || components > (n - 1).min(d) {
            return Err(Error::contract(format!(
                "PCA needs 1 ≤ d' ≤ min(n−1, d) = {}, got {components}",
                n.saturating_sub(1).min(d)
            )));
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let basis = DMatrix::from_fn(d, components, |i, k| eig.eigenvectors[(i, order[k])]);
        let explained_variance_ratio = order[..components]
            .iter()
            .map(|&k| {
                if total > 0.0 {
                    eig.eigenvalues[k].max(0.0) / total
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            mean,
            basis,
            explained_variance_ratio,
        })
    }

    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.mean.len(), row.len())?;
        let centered = DVector::from_column_slice(row) - &self.mean;
        Ok(self.basis.tr_mul(&centered).iter().copied().collect())
    }
}

/// Optional z-scoring followed by optional PCA, fitted on training rows only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Preprocessor {
    pub zscore: Option<ZScore>,
    pub pca: Option<Pca>,
    fitted: bool,
}

impl Preprocessor {
    pub fn fit(train: &[Vec<f64>], normalize: bool, pca_components: Option<usize>) -> Result<Self> {
        let zscore = if normalize {
            Some(ZScore::fit(train)?)
        } else {
            None
        };
        let pca = match pca_components {
            Some(k) => {
                let rows = match &zscore {
                    Some(z) => train
                        .iter()
                        .map(|r| z.apply_row(r))
                        .collect::<Result<Vec<_>>>()?,
                    None => train.to_vec(),
                };
                Some(Pca::fit(&rows, k)?)
            }
            None => None,
        };
        Ok(Self {
            zscore,
            pca,
            fitted: true,
        })
    }

    /// Rebuilds a fitted preprocessor from stored parts.
    pub fn from_parts(zscore: Option<ZScore>, pca: Option<Pca>) -> Self {
        Self {
            zscore,
            pca,
            fitted: true,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.pca.as_ref().map_or(input_dim, Pca::components)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if !self.fitted {
            return Err(Error::contract("preprocessor applied before fit"));
        }
        let mut out = match &self.zscore {
            Some(z) => z.apply_row(row)?,
            None => row.to_vec(),
        };
        if let Some(p) = &self.pca {
            out = p.apply_row(&out)?;
        }
        Ok(out)
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

fn shuffled_by_class(labels: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    by_class
}

/// Stratified train/test split. Each class sends `round(ratio·n_c)` members
/// to train, keeping at least one on each side.
pub fn stratified_split(
    labels: &[usize],
    train_ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::contract(format!(
            "train ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, members) in shuffled_by_class(labels, seed).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::data(format!(
                "class {c} has a single instance; cannot split"
            )));
        }
        let k = ((train_ratio * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified k-fold assignment; returns the test indices of each fold.
///
/// Class members are shuffled and dealt round-robin with a running offset, so
/// each fold holds `⌊n_c/k⌋` or `⌈n_c/k⌉` members of class `c` and fold sizes
/// differ by at most one.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::contract(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > labels.len() {
        return Err(Error::data(format!(
            "cannot form {folds} folds from {} instances",
            labels.len()
        )));
    }
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for members in shuffled_by_class(labels, seed) {
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn align_classes_by_name() {
        let f = write_tmp("x,label\n1,b\n2,a\n3,b\n");
        let ds = load_csv(f.path(), "label").unwrap();
        assert_eq!(ds.labels, vec![0, 1, 0]);
        let aligned = ds
            .align_classes(&["a".to_string(), "b".to_string()])
            .unwrap();
        assert_eq!(aligned.labels, vec![1, 0, 1]);
        assert!(ds.align_classes(&["a".to_string()]).is_err());
    }

    #[test]
    fn csv_basic() {
        let f = write_tmp("x,y,label\n1,2,a\n3,4,b\n5,6,a\n");
        let ds = load_csv(f.path(), "label").unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.class_names, vec!["a", "b"]);
        assert_eq!(ds.features[1], vec![3.0, 4.0]);
    }

    #[test]
    fn csv_label_column_anywhere() {
        let f = write_tmp("cls,x\nb,1.5\na,2\n");
        let ds = load_csv(f.path(), "cls").unwrap();
        assert_eq!(ds.features, vec![vec![1.5], vec![2.0]]);
        assert_eq!(ds.labels, vec![0, 1]);
    }

    #[test]
    fn csv_errors() {
        assert!(load_csv(write_tmp("").path(), "label").is_err());
        assert!(load_csv(write_tmp("x,label\n").path(), "label").is_err());
        assert!(load_csv(write_tmp("x,y\n1,2\n").path(), "label").is_err());
        let err = load_csv(write_tmp("x,label\n1,a\nfoo,b\n").path(), "label").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = load_csv(write_tmp("x,label\n1,a\nNaN,b\n").path(), "label").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let f = write_tmp("x,y,label\n0.1,-2e-7,cat\n3.141592653589793,4,dog\n5,6,cat\n");
        let ds = load_csv(f.path(), "label").unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(out.path()).unwrap();
        let back = load_csv(out.path(), "label").unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn libsvm_basic() {
        let f = write_tmp("+1 1:0.5 3:2.0\n-1 2:1\n\n# comment\n+1 1:1\n");
        let ds = load_libsvm(f.path()).unwrap();
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.features[0], vec![0.5, 0.0, 2.0]);
        assert_eq!(ds.labels, vec![1, 0, 1]);
        assert_eq!(ds.class_names, vec!["-1", "+1"]);
    }

    #[test]
    fn libsvm_errors() {
        let err = load_libsvm(write_tmp("1 1:0.5\n1 2:abc\n").path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(load_libsvm(write_tmp("x 1:0.5\n").path()).is_err());
        assert!(load_libsvm(write_tmp("1 0:0.5\n").path()).is_err());
        assert!(load_libsvm(write_tmp("").path()).is_err());
    }

    #[test]
    fn zscore_examples() {
        let z = ZScore::fit(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(z.apply_row(&[0.0, 5.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(z.apply_row(&[2.0, 5.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(z.stds[1], 1.0);
    }

    #[test]
    fn zscore_train_columns_standardized() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                vec![
                    i as f64 * 0.3 + 7.0,
                    ((i * 7) % 11) as f64,
                    -(i as f64).sqrt(),
                ]
            })
            .collect();
        let z = ZScore::fit(&rows).unwrap();
        let out: Vec<Vec<f64>> = rows.iter().map(|r| z.apply_row(r).unwrap()).collect();
        for j in 0..3 {
            let mean = out.iter().map(|r| r[j]).sum::<f64>() / 40.0;
            let var = out.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn preprocessor_requires_fit() {
        let p = Preprocessor::default();
        assert!(p.apply_row(&[1.0]).is_err());
    }

    #[test]
    fn pca_line_reconstruction() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64, 2.0 * i as f64 + 1.0])
            .collect();
        let p = Pca::fit(&rows, 1).unwrap();
        for r in &rows {
            let c = p.apply_row(r).unwrap();
            let recon = &p.basis * DVector::from_vec(c) + &p.mean;
            assert!((recon[0] - r[0]).abs() < 1e-9 && (recon[1] - r[1]).abs() < 1e-9);
        }
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_rejects_too_many_components() {
        let rows = vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 2.0],
            vec![0.5, 0.5, 1.0],
        ];
        assert!(Pca::fit(&rows, 3).is_err());
        assert!(Pca::fit(&rows, 0).is_err());
        assert!(Pca::fit(&rows, 2).is_ok());
    }

    #[test]
    fn stratified_split_examples() {
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let (train, test) = stratified_split(&labels, 0.7, 3).unwrap();
        assert_eq!(train.iter().filter(|&&i| labels[i] == 0).count(), 7);
        assert_eq!(train.iter().filter(|&&i| labels[i] == 1).count(), 7);
        assert_eq!(test.len(), 6);
        assert_eq!(stratified_split(&labels, 0.7, 3).unwrap(), (train, test));
        assert!(stratified_split(&[0, 0, 1], 0.7, 1).is_err());
    }

    #[test]
    fn stratified_folds_examples() {
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let folds = stratified_folds(&labels, 5, 1).unwrap();
        for fold in &folds {
            assert_eq!(fold.iter().filter(|&&i| labels[i] == 0).count(), 2);
            assert_eq!(fold.iter().filter(|&&i| labels[i] == 1).count(), 2);
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(stratified_folds(&labels, 1, 1).is_err());
        assert!(stratified_folds(&labels, 21, 1).is_err());
    }
}
