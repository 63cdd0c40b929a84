//! Online learners driven by the half-quadratic loop.
//!
//! Every learner processes one triplet at a time. For each triplet the HQ loop
//! alternates between the closed-form auxiliary variable (which fixes the
//! triplet's aggressiveness `C_t`) and a metric update anchored at the model
//! the triplet arrived to:
//!
//! * full-rank similarity / distance: passive-aggressive closed form
//!   `M = M_t + τA_t`, `τ = min(C_t, loss/‖A_t‖²_F)`; the distance learner
//!   projects onto the p.s.d. cone once the loop ends;
//! * low-rank similarity / distance: a few subgradient steps on
//!   `½‖L − L_t‖²_F + C_t·hinge(z(L))`.
//!
//! Setting `η = 0` turns every learner into its plain-hinge baseline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{hinge, hq_auxiliary, triplet_weight, RobustParams};
use crate::model::{FullRankMetric, LowRankTransform, MeasureKind, Metric, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    RobustOasis,
    RobustOdml,
    RobustLosl,
    RobustLodml,
}

impl Algorithm {
    pub fn kind(self) -> MeasureKind {
        match self {
            Algorithm::RobustOasis | Algorithm::RobustLosl => MeasureKind::Similarity,
            Algorithm::RobustOdml | Algorithm::RobustLodml => MeasureKind::Distance,
        }
    }

    pub fn is_low_rank(self) -> bool {
        matches!(self, Algorithm::RobustLosl | Algorithm::RobustLodml)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RobustOasis => "robust_oasis",
            Algorithm::RobustOdml => "robust_odml",
            Algorithm::RobustLosl => "robust_losl",
            Algorithm::RobustLodml => "robust_lodml",
        }
    }
}

/// Settings for the low-rank inner optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowRankOptions {
    /// Rank `r`; `None` means `r = d`.
    pub rank: Option<usize>,
    pub lr: f64,
    pub grad_steps: usize,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        Self {
            rank: None,
            lr: 0.01,
            grad_steps: 5,
        }
    }
}

/// What the HQ loop concluded about one triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletOutcome {
    /// Hinge loss the last auxiliary variable was computed from.
    pub final_hinge_loss: f64,
    /// Aggressiveness `C_t` of the last HQ iteration.
    pub final_weight: f64,
    /// Model confidence `exp(−η·loss)` in `(0, 1]`; 1 in plain-hinge mode.
    pub normalized_weight: f64,
    /// Hinge loss of the triplet under the updated model, before any
    /// p.s.d. projection.
    pub loss_after: f64,
    /// PA step sizes taken (full-rank learners only).
    pub step_sizes: [f64; 10],
}

#[derive(Debug, Clone)]
pub struct Learner {
    algorithm: Algorithm,
    params: RobustParams,
    low_rank: LowRankOptions,
    metric: Metric,
    step_count: u64,
    psd_projection: bool,
}

impl Learner {
    /// Full-rank learners start from `I_d`, low-rank ones from the first `r`
    /// columns of `I_d`.
    pub fn new(
        algorithm: Algorithm,
        params: RobustParams,
        dim: usize,
        low_rank: LowRankOptions,
    ) -> Result<Self> {
        params.validate()?;
        if dim == 0 {
            return Err(Error::contract("dimension must be positive"));
        }
        let metric = if algorithm.is_low_rank() {
            if !(low_rank.lr.is_finite() && low_rank.lr > 0.0) {
                return Err(Error::config(
                    "lr",
                    format!("must be > 0, got {}", low_rank.lr),
                ));
            }
            if low_rank.grad_steps == 0 {
                return Err(Error::config("grad_steps", "must be ≥ 1"));
            }
            let rank = low_rank.rank.unwrap_or(dim);
            Metric::LowRank(LowRankTransform::truncated_identity(
                dim,
                rank,
                algorithm.kind(),
            )?)
        } else {
            Metric::Full(FullRankMetric::identity(dim, algorithm.kind()))
        };
        Ok(Self {
            algorithm,
            params,
            low_rank,
            metric,
            step_count: 0,
            psd_projection: true,
        })
    }

    /// Turns the distance learner's per-triplet p.s.d. projection on or off.
    /// Off leaves the raw PA iterate, useful for inspecting the update itself.
    pub fn with_psd_projection(mut self, on: bool) -> Self {
        self.psd_projection = on;
        self
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn params(&self) -> &RobustParams {
        &self.params
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn into_metric(self) -> Metric {
        self.metric
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    /// Processes one triplet.
    pub fn step(&mut self, t: &Triplet) -> Result<TripletOutcome> {
        t.check_dim(self.dim())?;
        let outcome = match self.algorithm {
            Algorithm::RobustOasis | Algorithm::RobustOdml => self.full_rank_step(t)?,
            Algorithm::RobustLosl | Algorithm::RobustLodml => self.low_rank_step(t)?,
        };
        self.step_count += 1;
        Ok(outcome)
    }

    fn full_rank_step(&mut self, t: &Triplet) -> Result<TripletOutcome> {
        let Metric::Full(metric) = &mut self.metric else {
            unreachable!("full-rank algorithm always holds a full-rank metric");
        };
        let a = match self.algorithm {
            Algorithm::RobustOasis => similarity_update_direction(t),
            _ => distance_update_direction(t),
        };
        let a_norm_sq = a.norm_squared();
        let z_start = checked_margin(metric.matrix().dot(&a))?;
        let loss_start = hinge(z_start);

        let mut current_loss = loss_start;
        let mut outcome = TripletOutcome {
            final_hinge_loss: loss_start,
            final_weight: 0.0,
            normalized_weight: 1.0,
            loss_after: loss_start,
            step_sizes: [0.0; 10],
        };
        for s in 0..self.params.max_hq_iter {
            let (c_t, w) = hq_weights(&self.params, current_loss)?;
            let tau = if loss_start == 0.0 || a_norm_sq == 0.0 {
                0.0
            } else {
                c_t.min(loss_start / a_norm_sq)
            };
            // z is linear in M: z(M_t + τA) = z(M_t) + τ‖A‖²
            let loss_next = hinge(z_start + tau * a_norm_sq);
            outcome.final_hinge_loss = current_loss;
            outcome.final_weight = c_t;
            outcome.normalized_weight = w;
            outcome.loss_after = loss_next;
            outcome.step_sizes[s] = tau;
            current_loss = loss_next;
        }
        let tau = outcome.step_sizes[self.params.max_hq_iter - 1];
        if tau > 0.0 {
            // every HQ iteration re-solves around M_t, so only the last τ lands
            *metric.matrix_mut() += &a * tau;
            if self.algorithm == Algorithm::RobustOdml && self.psd_projection {
                metric.symmetrize();
                let projected = psd_project(metric.matrix())?;
                metric.matrix_mut().copy_from(&projected);
            }
        }
        Ok(outcome)
    }

    fn low_rank_step(&mut self, t: &Triplet) -> Result<TripletOutcome> {
        let kind = self.algorithm.kind();
        let Metric::LowRank(transform) = &mut self.metric else {
            unreachable!("low-rank algorithm always holds a low-rank transform");
        };
        let anchor = transform.factor().clone();
        let mut current_loss = hinge(checked_margin(lowrank_margin(&anchor, t, kind))?);
        let mut outcome = TripletOutcome {
            final_hinge_loss: current_loss,
            final_weight: 0.0,
            normalized_weight: 1.0,
            loss_after: current_loss,
            step_sizes: [0.0; 10],
        };
        let lr = self.low_rank.lr;
        for _ in 0..self.params.max_hq_iter {
            let (c_t, w) = hq_weights(&self.params, current_loss)?;
            for _ in 0..self.low_rank.grad_steps {
                let grad = lowrank_gradient(transform.factor(), &anchor, t, c_t, kind);
                *transform.factor_mut() -= grad * lr;
            }
            if transform.factor().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(
                    "low-rank factor diverged; reduce lr or C".into(),
                ));
            }
            outcome.final_hinge_loss = current_loss;
            outcome.final_weight = c_t;
            outcome.normalized_weight = w;
            current_loss = hinge(checked_margin(lowrank_margin(transform.factor(), t, kind))?);
            outcome.loss_after = current_loss;
        }
        Ok(outcome)
    }
}

/// `hinge` maps NaN to 0, so an overflowing model would look passive.
fn checked_margin(z: f64) -> Result<f64> {
    if z.is_finite() {
        Ok(z)
    } else {
        Err(Error::Numeric(format!(
            "margin evaluated to {z}; the model has diverged (reduce lr or C)"
        )))
    }
}

/// `(C_t, w)` for a given hinge loss.
fn hq_weights(params: &RobustParams, loss: f64) -> Result<(f64, f64)> {
    if params.is_robust() {
        let v = hq_auxiliary(loss, params.eta)?;
        Ok((triplet_weight(params, v)?, -v))
    } else {
        Ok((params.c, 1.0))
    }
}

/// `A_t = p(p⁺ − p⁻)ᵀ`, so that `z(M) = ⟨M, A_t⟩` for the bilinear measure.
pub fn similarity_update_direction(t: &Triplet) -> DMatrix<f64> {
    let a = DVector::from_column_slice(&t.anchor);
    let diff = DVector::from_iterator(
        t.dim(),
        t.positive.iter().zip(&t.negative).map(|(p, n)| p - n),
    );
    &a * diff.transpose()
}

/// `A_t = (p − p⁻)(p − p⁻)ᵀ − (p − p⁺)(p − p⁺)ᵀ`, so that `z(M) = ⟨M, A_t⟩`
/// for the squared Mahalanobis distance.
pub fn distance_update_direction(t: &Triplet) -> DMatrix<f64> {
    let (u, w) = distance_pair(t);
    &u * u.transpose() - &w * w.transpose()
}

fn distance_pair(t: &Triplet) -> (DVector<f64>, DVector<f64>) {
    let d = t.dim();
    let u = DVector::from_iterator(d, t.anchor.iter().zip(&t.negative).map(|(a, n)| a - n));
    let w = DVector::from_iterator(d, t.anchor.iter().zip(&t.positive).map(|(a, p)| a - p));
    (u, w)
}

/// Frobenius-nearest p.s.d. matrix: eigendecompose and clamp negative
/// eigenvalues to zero. The input is symmetrized first.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::contract("p.s.d. projection needs a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "cannot project a matrix with non-finite entries".into(),
        ));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    let t = out.transpose();
    out += t;
    out *= 0.5;
    Ok(out)
}

/// Margin `z` for a low-rank factor, computed in the projected space.
pub fn lowrank_margin(factor: &DMatrix<f64>, t: &Triplet, kind: MeasureKind) -> f64 {
    let proj = |x: &[f64]| factor.tr_mul(&DVector::from_column_slice(x));
    let pa = proj(&t.anchor);
    let pp = proj(&t.positive);
    let pn = proj(&t.negative);
    match kind {
        MeasureKind::Similarity => pa.dot(&(pp - pn)),
        MeasureKind::Distance => (&pa - pn).norm_squared() - (pa - pp).norm_squared(),
    }
}

/// Inner objective `½‖L − L_t‖²_F + C_t·hinge(z(L))`.
pub fn lowrank_objective(
    factor: &DMatrix<f64>,
    anchor: &DMatrix<f64>,
    t: &Triplet,
    c_t: f64,
    kind: MeasureKind,
) -> f64 {
    0.5 * (factor - anchor).norm_squared() + c_t * hinge(lowrank_margin(factor, t, kind))
}

/// Subgradient of [`lowrank_objective`] with respect to `L`.
///
/// Similarity: `(L − L_t) − C_t(A + Aᵀ)L` with `A = p(p⁺ − p⁻)ᵀ`.
/// Distance: `(L − L_t) − 2C_t·A·L` with
/// `A = (p − p⁻)(p − p⁻)ᵀ − (p − p⁺)(p − p⁺)ᵀ`.
/// The hinge term contributes nothing where the hinge is flat.
pub fn lowrank_gradient(
    factor: &DMatrix<f64>,
    anchor: &DMatrix<f64>,
    t: &Triplet,
    c_t: f64,
    kind: MeasureKind,
) -> DMatrix<f64> {
    let mut grad = factor - anchor;
    if hinge(lowrank_margin(factor, t, kind)) <= 0.0 {
        return grad;
    }
    // rank-one expansions keep this O(d·r)
    match kind {
        MeasureKind::Similarity => {
            let a = DVector::from_column_slice(&t.anchor);
            let diff = DVector::from_iterator(
                t.dim(),
                t.positive.iter().zip(&t.negative).map(|(p, n)| p - n),
            );
            let at_l = factor.tr_mul(&a).transpose();
            let diff_l = factor.tr_mul(&diff).transpose();
            grad -= (&a * diff_l + &diff * at_l) * c_t;
        }
        MeasureKind::Distance => {
            let (u, w) = distance_pair(t);
            let u_l = factor.tr_mul(&u).transpose();
            let w_l = factor.tr_mul(&w).transpose();
            grad -= (&u * u_l - &w * w_l) * (2.0 * c_t);
        }
    }
    grad
}

/// Per-instance confidence: the minimum normalized weight over the triplets an
/// instance generated, 1 when it generated none.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceWeights(Vec<f64>);

impl InstanceWeights {
    pub fn new(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn record(&mut self, instance: usize, weight: f64) {
        let slot = &mut self.0[instance];
        *slot = slot.min(weight);
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Runs a learner over a precomputed stream of per-instance triplet sets and
/// returns the instance weights (length `n_instances`).
pub fn train_online<'a, I>(learner: &mut Learner, stream: I, n_instances: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = (&'a [Triplet], usize)>,
{
    let mut weights = InstanceWeights::new(n_instances);
    for (triplets, instance) in stream {
        if instance >= n_instances {
            return Err(Error::contract(format!(
                "instance index {instance} out of range for {n_instances} instances"
            )));
        }
        for t in triplets {
            let outcome = learner.step(t)?;
            weights.record(instance, outcome.normalized_weight);
        }
    }
    Ok(weights.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rand_triplet(rng: &mut ChaCha8Rng, d: usize) -> Triplet {
        Triplet::new(rand_vec(rng, d), rand_vec(rng, d), rand_vec(rng, d)).unwrap()
    }

    fn learner(alg: Algorithm, c: f64, eta: f64, iters: usize, d: usize) -> Learner {
        Learner::new(
            alg,
            RobustParams::new(c, eta, iters).unwrap(),
            d,
            LowRankOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn divergence_is_reported_not_hidden() {
        let params = RobustParams::new(30.0, 0.0, 3).unwrap();
        let opts = LowRankOptions {
            rank: None,
            lr: 1e6,
            grad_steps: 5,
        };
        let mut l = Learner::new(Algorithm::RobustLodml, params, 2, opts).unwrap();
        let t = Triplet::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.1]).unwrap();
        let err = (0..100)
            .find_map(|_| l.step(&t).err())
            .expect("should diverge");
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    /// Textbook OASIS / ODML with fixed aggressiveness, written directly from
    /// the closed form, as an oracle for the η → 0 limit.
    fn plain_pa_step(m: &mut DMatrix<f64>, t: &Triplet, c: f64, distance: bool) {
        let a = DVector::from_column_slice(&t.anchor);
        let p = DVector::from_column_slice(&t.positive);
        let n = DVector::from_column_slice(&t.negative);
        let (z, dir) = if distance {
            let u = &a - &n;
            let w = &a - &p;
            let z = (u.transpose() * &*m * &u)[0] - (w.transpose() * &*m * &w)[0];
            (z, &u * u.transpose() - &w * w.transpose())
        } else {
            let z = (a.transpose() * &*m * &p)[0] - (a.transpose() * &*m * &n)[0];
            (z, &a * (&p - &n).transpose())
        };
        let loss = (1.0 - z).max(0.0);
        let nsq = dir.norm_squared();
        if loss > 0.0 && nsq > 0.0 {
            *m += dir * c.min(loss / nsq);
        }
    }

    #[test]
    fn zero_loss_is_passive() {
        let mut l = learner(Algorithm::RobustOasis, 1.0, 1.0, 3, 2);
        let t = Triplet::new(vec![1.0, 0.0], vec![5.0, 0.0], vec![0.0, 1.0]).unwrap();
        let out = l.step(&t).unwrap();
        assert_eq!(out.normalized_weight, 1.0);
        assert_eq!(out.final_hinge_loss, 0.0);
        assert_eq!(
            l.metric(),
            &Metric::Full(FullRankMetric::identity(2, MeasureKind::Similarity))
        );

        let mut l = learner(Algorithm::RobustOdml, 1.0, 1.0, 3, 2);
        let t = Triplet::new(vec![0.0, 0.0], vec![0.1, 0.0], vec![3.0, 0.0]).unwrap();
        let out = l.step(&t).unwrap();
        assert_eq!(out.normalized_weight, 1.0);
        assert_eq!(
            l.metric(),
            &Metric::Full(FullRankMetric::identity(2, MeasureKind::Distance))
        );
    }

    #[test]
    fn identical_positive_and_negative_is_passive() {
        for alg in [
            Algorithm::RobustOasis,
            Algorithm::RobustOdml,
            Algorithm::RobustLosl,
            Algorithm::RobustLodml,
        ] {
            let mut l = learner(alg, 1.0, 1.0, 3, 3);
            let before = l.metric().clone();
            let t = Triplet::new(
                vec![1.0, 2.0, 3.0],
                vec![0.5, 0.5, 0.5],
                vec![0.5, 0.5, 0.5],
            )
            .unwrap();
            l.step(&t).unwrap();
            assert_eq!(l.metric(), &before, "{alg:?}");
        }
    }

    #[test]
    fn large_c_zeroes_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for alg in [Algorithm::RobustOasis, Algorithm::RobustOdml] {
            for _ in 0..50 {
                let mut l = learner(alg, 1e6, 0.0, 1, 4);
                let t = rand_triplet(&mut rng, 4);
                let out = l.step(&t).unwrap();
                assert!(out.loss_after <= 1e-9, "{alg:?}: {}", out.loss_after);
            }
        }
    }

    #[test]
    fn oasis_post_update_loss_recomputed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut l = learner(Algorithm::RobustOasis, 1e6, 0.0, 1, 5);
        let t = rand_triplet(&mut rng, 5);
        l.step(&t).unwrap();
        assert!(hinge(l.metric().margin_z(&t).unwrap()) <= 1e-9);
    }

    #[test]
    fn tiny_eta_matches_plain_pa() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (alg, distance) in [
            (Algorithm::RobustOasis, false),
            (Algorithm::RobustOdml, true),
        ] {
            let mut l = learner(alg, 0.05, 1e-6, 1, 4);
            let mut oracle = DMatrix::<f64>::identity(4, 4);
            for _ in 0..50 {
                let t = rand_triplet(&mut rng, 4);
                l.step(&t).unwrap();
                plain_pa_step(&mut oracle, &t, 0.05, distance);
                if distance {
                    oracle = psd_project(&oracle).unwrap();
                }
            }
            let Metric::Full(m) = l.metric() else {
                panic!()
            };
            let diff = (m.matrix() - &oracle).amax();
            assert!(diff < 1e-5, "{alg:?}: {diff}");
        }
    }

    #[test]
    fn step_size_bounded_by_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut l = learner(Algorithm::RobustOdml, 0.3, 2.0, 3, 4);
        for _ in 0..100 {
            let t = rand_triplet(&mut rng, 4);
            let out = l.step(&t).unwrap();
            assert!(out.step_sizes[..3].iter().all(|&tau| tau >= 0.0));
            assert!(out.step_sizes[2] <= out.final_weight);
        }
    }

    #[test]
    fn hq_objective_non_decreasing() {
        // J(M, v) = −½‖M − M_t‖² + Cβ(η·loss(M)·v − g(v)), evaluated after
        // each half-step of the alternating loop.
        use crate::loss::hq_objective;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, eta) = (0.5, 1.5);
        let params = RobustParams::new(c, eta, 5).unwrap();
        let beta = params.beta().unwrap();
        for _ in 0..30 {
            let t = rand_triplet(&mut rng, 3);
            let a = distance_update_direction(&t);
            let m_t = DMatrix::<f64>::identity(3, 3);
            let loss_of = |m: &DMatrix<f64>| hinge((m.component_mul(&a)).sum());
            let j = |m: &DMatrix<f64>, v: f64| {
                -0.5 * (m - &m_t).norm_squared() + c * beta * hq_objective(eta, loss_of(m), v)
            };
            let mut m = m_t.clone();
            let mut v = -1.0;
            let mut last = j(&m, v);
            for _ in 0..5 {
                v = hq_auxiliary(loss_of(&m), eta).unwrap();
                let after_v = j(&m, v);
                assert!(after_v >= last - 1e-12);
                let c_t = triplet_weight(&params, v).unwrap();
                let l0 = loss_of(&m_t);
                let tau = if l0 > 0.0 {
                    c_t.min(l0 / a.norm_squared())
                } else {
                    0.0
                };
                m = &m_t + &a * tau;
                let after_m = j(&m, v);
                assert!(after_m >= after_v - 1e-12);
                last = after_m;
            }
        }
    }

    #[test]
    fn psd_project_examples() {
        let out = psd_project(&dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap();
        assert!((out - dmatrix![1.0, 0.0; 0.0, 0.0]).amax() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let psd = &b * b.transpose();
        assert!((psd_project(&psd).unwrap() - &psd).amax() < 1e-9);
        assert!(psd_project(&dmatrix![f64::NAN, 0.0; 0.0, 1.0]).is_err());
    }

    #[test]
    fn psd_project_is_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let r = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let sym = (&r + r.transpose()) * 0.5;
            let proj = psd_project(&sym).unwrap();
            let eig = SymmetricEigen::new(proj.clone());
            assert!(eig.eigenvalues.min() >= -1e-10);
            let best = (&proj - &sym).norm();
            for _ in 0..100 {
                let b = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-0.3..0.3));
                let candidate = psd_project(&(&proj + &b * b.transpose())).unwrap();
                assert!((&candidate - &sym).norm() >= best - 1e-12);
            }
            assert!((psd_project(&proj).unwrap() - &proj).amax() < 1e-9);
        }
    }

    #[test]
    fn lowrank_inactive_triplet_is_passive() {
        let mut l = learner(Algorithm::RobustLodml, 1.0, 1.0, 3, 2);
        let t = Triplet::new(vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 0.0]).unwrap();
        let before = l.metric().clone();
        let out = l.step(&t).unwrap();
        assert_eq!(out.normalized_weight, 1.0);
        assert_eq!(l.metric(), &before);
    }

    #[test]
    fn lowrank_gradient_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for kind in [MeasureKind::Similarity, MeasureKind::Distance] {
            let mut checked = 0;
            while checked < 20 {
                let l_t = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
                let t = rand_triplet(&mut rng, 4);
                if hinge(lowrank_margin(&l_t, &t, kind)) <= 0.0 {
                    continue;
                }
                let c_t = rng.gen_range(0.1..2.0);
                let g = lowrank_gradient(&l_t, &l_t, &t, c_t, kind);
                let stepped = &l_t - &g * 1e-3;
                assert!(
                    lowrank_objective(&stepped, &l_t, &t, c_t, kind)
                        < lowrank_objective(&l_t, &l_t, &t, c_t, kind)
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn lodml_full_rank_step_does_not_increase_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut n = 0;
        while n < 20 {
            let t = rand_triplet(&mut rng, 3);
            let id = DMatrix::<f64>::identity(3, 3);
            if hinge(lowrank_margin(&id, &t, MeasureKind::Distance)) <= 0.0 {
                continue;
            }
            let mut l = Learner::new(
                Algorithm::RobustLodml,
                RobustParams::new(1.0, 0.5, 1).unwrap(),
                3,
                LowRankOptions {
                    rank: None,
                    lr: 1e-3,
                    grad_steps: 1,
                },
            )
            .unwrap();
            let out = l.step(&t).unwrap();
            assert!(out.loss_after <= out.final_hinge_loss);
            n += 1;
        }
    }

    #[test]
    fn train_online_min_rule() {
        let mut l = learner(Algorithm::RobustOdml, 1.0, 1.0, 1, 1);
        // two active triplets for instance 0 with losses 0.1 and 1.6 under I
        let easy = Triplet::new(vec![0.0], vec![1.0], vec![1.3]).unwrap();
        let hard = Triplet::new(vec![0.0], vec![1.0], vec![0.5]).unwrap();
        let both = [easy, hard];
        let w = train_online(&mut l, [(&both[..], 0usize)], 2).unwrap();
        assert_eq!(w[1], 1.0);
        assert!(w[0] < 1.0);
        // the second triplet is seen after the first update, so just check
        // the minimum picked the smaller weight
        assert!(w[0] < (-0.1f64).exp());
    }

    #[test]
    fn train_online_all_inactive() {
        let mut l = learner(Algorithm::RobustOasis, 1.0, 1.0, 3, 2);
        let t = Triplet::new(vec![1.0, 0.0], vec![5.0, 0.0], vec![0.0, 1.0]).unwrap();
        let set = [t.clone(), t];
        let w = train_online(&mut l, [(&set[..], 0usize), (&set[..1], 2usize)], 3).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
        assert_eq!(
            l.metric(),
            &Metric::Full(FullRankMetric::identity(2, MeasureKind::Similarity))
        );
        assert_eq!(
            train_online(&mut l, std::iter::empty(), 0).unwrap(),
            Vec::<f64>::new()
        );
    }

    #[test]
    fn instance_weights_min() {
        let mut w = InstanceWeights::new(2);
        w.record(0, 0.9);
        w.record(0, 0.2);
        assert_eq!(w.as_slice(), &[0.2, 1.0]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(16);
            let mut l = learner(Algorithm::RobustLosl, 0.5, 1.0, 3, 4);
            for _ in 0..40 {
                l.step(&rand_triplet(&mut rng, 4)).unwrap();
            }
            l.into_metric()
        };
        assert_eq!(run(), run());
    }
}
