//! Metric parameterizations and the measures computed from them.
//!
//! A [`FullRankMetric`] stores a d×d matrix `M` and is read either as a squared
//! Mahalanobis distance `(x−y)ᵀM(x−y)` or as a bilinear similarity `xᵀMy`.
//! A [`LowRankTransform`] stores a d×r factor `L` with `M = LLᵀ`, so both
//! measures are evaluated in the projected space `Lᵀx`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Which reading of the parameter matrix a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Distance,
    Similarity,
}

impl MeasureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::Distance => "distance",
            MeasureKind::Similarity => "similarity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullRankMetric {
    matrix: DMatrix<f64>,
    kind: MeasureKind,
}

impl FullRankMetric {
    pub fn identity(dim: usize, kind: MeasureKind) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            kind,
        }
    }

    /// Wraps a square matrix. Distance-kind matrices are symmetrized.
    pub fn from_matrix(matrix: DMatrix<f64>, kind: MeasureKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::contract(format!(
                "metric matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "metric matrix has non-finite entries".into(),
            ));
        }
        let mut metric = Self { matrix, kind };
        if kind == MeasureKind::Distance {
            metric.symmetrize();
        }
        Ok(metric)
    }

    /// Like `from_matrix` but keeps the entries untouched.
    pub(crate) fn from_raw(matrix: DMatrix<f64>, kind: MeasureKind) -> Result<Self> {
        if !matrix.is_square() || matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "stored metric matrix is not square and finite".into(),
            ));
        }
        Ok(Self { matrix, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.matrix
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Replaces `M` with `(M + Mᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let t = self.matrix.transpose();
        self.matrix += t;
        self.matrix *= 0.5;
    }

    /// Squared Mahalanobis distance `(x−y)ᵀM(x−y)`.
    pub fn mahalanobis_sq(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.require(MeasureKind::Distance)?;
        self.check(x, y)?;
        Ok(self.quad_diff(x, y, x, y))
    }

    /// Bilinear similarity `xᵀMy`. No symmetry is assumed.
    pub fn bilinear_sim(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.require(MeasureKind::Similarity)?;
        self.check(x, y)?;
        Ok(bilinear(&self.matrix, x, y))
    }

    /// `(a−b)ᵀ M (c−e)` without allocating the differences.
    fn quad_diff(&self, a: &[f64], b: &[f64], c: &[f64], e: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for j in 0..d {
            let right = c[j] - e[j];
            if right == 0.0 {
                continue;
            }
            let col = self.matrix.column(j);
            let mut s = 0.0;
            for i in 0..d {
                s += (a[i] - b[i]) * col[i];
            }
            acc += s * right;
        }
        acc
    }

    fn require(&self, kind: MeasureKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "{} measure requested from a {} metric",
                kind.as_str(),
                self.kind.as_str()
            )))
        }
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())
    }
}

fn bilinear(m: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (j, &yj) in y.iter().enumerate() {
        if yj == 0.0 {
            continue;
        }
        let col = m.column(j);
        let s: f64 = x.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
        acc += s * yj;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankTransform {
    factor: DMatrix<f64>,
    kind: MeasureKind,
}

impl LowRankTransform {
    /// First `rank` columns of the d×d identity.
    pub fn truncated_identity(dim: usize, rank: usize, kind: MeasureKind) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::contract(format!(
                "rank must lie in 1..={dim}, got {rank}"
            )));
        }
        Ok(Self {
            factor: DMatrix::identity(dim, rank),
            kind,
        })
    }

    pub fn from_factor(factor: DMatrix<f64>, kind: MeasureKind) -> Result<Self> {
        if factor.ncols() == 0 || factor.ncols() > factor.nrows() {
            return Err(Error::contract(format!(
                "factor must be d×r with 1 ≤ r ≤ d, got {}x{}",
                factor.nrows(),
                factor.ncols()
            )));
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("factor has non-finite entries".into()));
        }
        Ok(Self { factor, kind })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub(crate) fn factor_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.factor
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `Lᵀx`.
    pub fn project(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.factor.tr_mul(&DVector::from_column_slice(x)))
    }

    /// `‖Lᵀx − Lᵀy‖²`.
    pub fn dist_sq(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if self.kind != MeasureKind::Distance {
            return Err(Error::contract(
                "distance requested from a similarity transform",
            ));
        }
        check_dim(self.dim(), y.len())?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Ok(self.project(&diff)?.norm_squared())
    }

    /// `(Lᵀx)·(Lᵀy)`.
    pub fn sim(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if self.kind != MeasureKind::Similarity {
            return Err(Error::contract(
                "similarity requested from a distance transform",
            ));
        }
        Ok(self.project(x)?.dot(&self.project(y)?))
    }

    /// The full-rank metric `LLᵀ` this transform implies.
    pub fn implied_metric(&self) -> FullRankMetric {
        FullRankMetric {
            matrix: &self.factor * self.factor.transpose(),
            kind: self.kind,
        }
    }
}

/// Either parameterization, behind one interface for learners and evaluators.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Full(FullRankMetric),
    LowRank(LowRankTransform),
}

impl Metric {
    pub fn kind(&self) -> MeasureKind {
        match self {
            Metric::Full(m) => m.kind(),
            Metric::LowRank(l) => l.kind(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Metric::Full(m) => m.dim(),
            Metric::LowRank(l) => l.dim(),
        }
    }

    /// Distance (squared) or similarity between `x` and `y`, per [`Metric::kind`].
    pub fn measure(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match (self, self.kind()) {
            (Metric::Full(m), MeasureKind::Distance) => m.mahalanobis_sq(x, y),
            (Metric::Full(m), MeasureKind::Similarity) => m.bilinear_sim(x, y),
            (Metric::LowRank(l), MeasureKind::Distance) => l.dist_sq(x, y),
            (Metric::LowRank(l), MeasureKind::Similarity) => l.sim(x, y),
        }
    }

    /// Margin variable `z` of a triplet. Similarity: `S(a,p⁺) − S(a,p⁻)`;
    /// distance: `d²(a,p⁻) − d²(a,p⁺)`.
    pub fn margin_z(&self, t: &Triplet) -> Result<f64> {
        t.check_dim(self.dim())?;
        let (a, p, n) = (&t.anchor[..], &t.positive[..], &t.negative[..]);
        Ok(match self {
            Metric::Full(m) => match m.kind {
                // S(a,p) − S(a,n) = aᵀM(p−n)
                MeasureKind::Similarity => {
                    let diff: Vec<f64> = p.iter().zip(n).map(|(x, y)| x - y).collect();
                    bilinear(&m.matrix, a, &diff)
                }
                MeasureKind::Distance => m.quad_diff(a, n, a, n) - m.quad_diff(a, p, a, p),
            },
            Metric::LowRank(l) => {
                let pa = l.project(a)?;
                let pp = l.project(p)?;
                let pn = l.project(n)?;
                match l.kind {
                    MeasureKind::Similarity => pa.dot(&(pp - pn)),
                    MeasureKind::Distance => (&pa - pn).norm_squared() - (pa - pp).norm_squared(),
                }
            }
        })
    }
}

impl From<FullRankMetric> for Metric {
    fn from(m: FullRankMetric) -> Self {
        Metric::Full(m)
    }
}

impl From<LowRankTransform> for Metric {
    fn from(l: LowRankTransform) -> Self {
        Metric::LowRank(l)
    }
}

/// Where a triplet member came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Member {
    /// Row index into the training set.
    Instance(usize),
    /// Index into the cluster-center table, with the center's class.
    Center { index: usize, label: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub anchor: usize,
    pub positive: Member,
    pub negative: Member,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl Triplet {
    pub fn new(anchor: Vec<f64>, positive: Vec<f64>, negative: Vec<f64>) -> Result<Self> {
        check_dim(anchor.len(), positive.len())?;
        check_dim(anchor.len(), negative.len())?;
        Ok(Self {
            anchor,
            positive,
            negative,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Same triplet with positive and negative exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            anchor: self.anchor.clone(),
            positive: self.negative.clone(),
            negative: self.positive.clone(),
            provenance: None,
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        check_dim(dim, self.anchor.len())?;
        check_dim(dim, self.positive.len())?;
        check_dim(dim, self.negative.len())
    }
}
