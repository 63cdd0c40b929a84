//! Triplet generation from labelled data.
//!
//! [`ClusterCenters`] backs the one-pass cluster-based generator (OCTG): each
//! incoming instance is paired with its nearest same-class center, and every
//! other-class center that is not at least `margin` farther away becomes an
//! imposter. Memory stays at O(K·d) and past instances are never revisited.
//! [`batch_generate`] is the classic target-neighbor / imposter join over the
//! whole training set, kept as the reference generator.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::learners::{InstanceWeights, Learner, TripletOutcome};
use crate::loss::hinge;
use crate::model::{Member, Metric, Provenance, Triplet};

const MIN_CENTER_WEIGHT: f64 = 1e-12;
const KMEANS_MAX_ITER: usize = 100;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    pub position: Vec<f64>,
    pub label: usize,
    /// Accumulated weight of the points absorbed so far.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCenters {
    centers: Vec<Center>,
}

impl ClusterCenters {
    pub fn from_centers(centers: Vec<Center>) -> Result<Self> {
        if let Some(first) = centers.first() {
            for c in &centers {
                check_dim(first.position.len(), c.position.len())?;
            }
        }
        Ok(Self { centers })
    }

    pub fn centers(&self) -> &[Center] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, |c| c.position.len())
    }

    /// Nearest center with `label`, ties to the lowest index.
    pub fn nearest_of_class(&self, x: &[f64], label: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.centers.iter().enumerate() {
            if c.label != label {
                continue;
            }
            let d = euclidean(x, &c.position);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    /// OCTG triplets `(x, V_t, V_i)` for every imposter center `V_i`, i.e.
    /// every other-class center with `d(x, V_i) ≤ d(x, V_t) + margin`.
    pub fn octg_generate(
        &self,
        x: &[f64],
        label: usize,
        margin: f64,
        anchor_index: usize,
    ) -> Result<Vec<Triplet>> {
        check_dim(self.dim(), x.len())?;
        let (pos, d_pos) = self
            .nearest_of_class(x, label)
            .ok_or_else(|| Error::data(format!("no cluster center for class {label}")))?;
        let positive = &self.centers[pos];
        let mut out = Vec::new();
        for (i, c) in self.centers.iter().enumerate() {
            if c.label == label || euclidean(x, &c.position) > d_pos + margin {
                continue;
            }
            let t = Triplet::new(x.to_vec(), positive.position.clone(), c.position.clone())?
                .with_provenance(Provenance {
                    anchor: anchor_index,
                    positive: Member::Center { index: pos, label },
                    negative: Member::Center {
                        index: i,
                        label: c.label,
                    },
                });
            out.push(t);
        }
        Ok(out)
    }

    /// Moves the nearest same-class center toward `x` by a weighted
    /// incremental mean. Returns the index of the center that moved.
    pub fn update(&mut self, x: &[f64], label: usize, weight: f64) -> Result<usize> {
        check_dim(self.dim(), x.len())?;
        if !(weight <= 1.0) || weight.is_nan() {
            return Err(Error::contract(format!(
                "center weight must lie in (0, 1], got {weight}"
            )));
        }
        let w = weight.max(MIN_CENTER_WEIGHT);
        let (idx, _) = self
            .nearest_of_class(x, label)
            .ok_or_else(|| Error::data(format!("no cluster center for class {label}")))?;
        let c = &mut self.centers[idx];
        c.mass += w;
        let step = w / c.mass;
        for (v, xi) in c.position.iter_mut().zip(x) {
            *v += step * (xi - *v);
        }
        Ok(idx)
    }

    pub fn total_mass(&self) -> f64 {
        self.centers.iter().map(|c| c.mass).sum()
    }
}

/// Runs k-means independently inside each class of the sample.
///
/// Classes with at most `per_class` instances get one center per distinct
/// instance. Masses start at the member counts.
pub fn init_centers(
    features: &[Vec<f64>],
    labels: &[usize],
    per_class: usize,
    seed: u64,
) -> Result<ClusterCenters> {
    check_dim(features.len(), labels.len())?;
    if features.is_empty() {
        return Err(Error::data(
            "cannot initialize centers from an empty sample",
        ));
    }
    if per_class == 0 {
        return Err(Error::contract("need at least one center per class"));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut centers = Vec::new();
    for class in 0..n_classes {
        let members: Vec<&[f64]> = features
            .iter()
            .zip(labels)
            .filter(|&(_, &y)| y == class)
            .map(|(x, _)| x.as_slice())
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut distinct: Vec<(&[f64], usize)> = Vec::new();
        for m in &members {
            match distinct.iter_mut().find(|(d, _)| d == m) {
                Some((_, count)) => *count += 1,
                None => distinct.push((m, 1)),
            }
        }
        if distinct.len() <= per_class {
            centers.extend(distinct.into_iter().map(|(p, count)| Center {
                position: p.to_vec(),
                label: class,
                mass: count as f64,
            }));
            continue;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (positions, counts) = kmeans(&members, per_class, &mut rng);
        centers.extend(positions.into_iter().zip(counts).map(|(p, count)| Center {
            position: p,
            label: class,
            mass: count as f64,
        }));
    }
    ClusterCenters::from_centers(centers)
}

/// Lloyd iterations from a k-means++ seeding. Returns centers and member counts.
fn kmeans(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = points.len();
    let d = points[0].len();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].to_vec()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &c) in closest.iter().enumerate() {
                if target < c {
                    chosen = i;
                    break;
                }
                target -= c;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[pick].to_vec());
        for (c, p) in closest.iter_mut().zip(points) {
            *c = c.min(sq(p, &centers[centers.len() - 1]));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let dist = sq(p, c);
                if dist < best_d {
                    best_d = dist;
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for j in 0..k {
            // an emptied cluster keeps its previous position
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let mut counts = vec![0usize; k];
    for &a in &assign {
        counts[a] += 1;
    }
    (centers, counts)
}

/// Target-neighbor / imposter triplets over a whole labelled set.
///
/// For each instance, its `k` nearest same-class neighbors are targets; any
/// other-class instance within `d(target) + margin` is an imposter, and every
/// (target, imposter) pair yields a triplet.
pub fn batch_generate(
    features: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    margin: f64,
) -> Result<Vec<Triplet>> {
    check_dim(features.len(), labels.len())?;
    if k == 0 {
        return Err(Error::contract("k must be positive"));
    }
    let n = features.len();
    let mut out = Vec::new();
    for i in 0..n {
        let dists: Vec<f64> = (0..n)
            .map(|j| euclidean(&features[i], &features[j]))
            .collect();
        let mut same: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        same.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
        for &j in same.iter().take(k) {
            for l in 0..n {
                if labels[l] == labels[i] || dists[l] > dists[j] + margin {
                    continue;
                }
                out.push(
                    Triplet::new(
                        features[i].clone(),
                        features[j].clone(),
                        features[l].clone(),
                    )?
                    .with_provenance(Provenance {
                        anchor: i,
                        positive: Member::Instance(j),
                        negative: Member::Instance(l),
                    }),
                );
            }
        }
    }
    Ok(out)
}

/// Which members of a triplet carry a corrupted label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct NoisyMembers {
    pub anchor: bool,
    pub positive: bool,
    pub negative: bool,
}

impl NoisyMembers {
    pub fn of(provenance: &Provenance, noisy_flags: &[bool]) -> Result<Self> {
        let flag = |m: Member| -> Result<bool> {
            match m {
                Member::Instance(i) => noisy_flags
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::contract(format!("instance index {i} out of range"))),
                Member::Center { .. } => Ok(false),
            }
        };
        Ok(Self {
            anchor: flag(Member::Instance(provenance.anchor))?,
            positive: flag(provenance.positive)?,
            negative: flag(provenance.negative)?,
        })
    }

    pub fn is_noisy(self) -> bool {
        self.anchor || self.positive || self.negative
    }
}

impl fmt::Display for NoisyMembers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.is_noisy() {
            return f.write_str("clean");
        }
        let parts: Vec<&str> = [
            (self.anchor, "anchor"),
            (self.positive, "positive"),
            (self.negative, "negative"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        f.write_str(&parts.join("+"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct CategoryStats {
    pub count: usize,
    /// Mean hinge loss; `None` for an empty category.
    pub mean_hinge_loss: Option<f64>,
}

impl CategoryStats {
    fn from_losses(losses: &[f64]) -> Self {
        Self {
            count: losses.len(),
            mean_hinge_loss: (!losses.is_empty())
                .then(|| losses.iter().sum::<f64>() / losses.len() as f64),
        }
    }

    pub fn fraction_of(&self, total: &CategoryStats) -> f64 {
        if total.count == 0 {
            0.0
        } else {
            self.count as f64 / total.count as f64
        }
    }
}

/// Counts and mean hinge losses per noisy-triplet category. A triplet with
/// several noisy members counts once in `noisy` and once per member type.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct TripletStats {
    pub all: CategoryStats,
    pub normal: CategoryStats,
    pub noisy: CategoryStats,
    pub anchor_noisy: CategoryStats,
    pub positive_noisy: CategoryStats,
    pub negative_noisy: CategoryStats,
}

/// Sorts triplets into noisy categories and averages their hinge loss under
/// `metric`.
pub fn classify_noisy(
    triplets: &[Triplet],
    noisy_flags: &[bool],
    metric: &Metric,
) -> Result<TripletStats> {
    let mut all = Vec::new();
    let mut normal = Vec::new();
    let mut noisy = Vec::new();
    let mut anchor = Vec::new();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for t in triplets {
        let prov = t
            .provenance
            .as_ref()
            .ok_or_else(|| Error::contract("triplet has no provenance"))?;
        let kind = NoisyMembers::of(prov, noisy_flags)?;
        let loss = hinge(metric.margin_z(t)?);
        all.push(loss);
        if kind.is_noisy() {
            noisy.push(loss);
        } else {
            normal.push(loss);
        }
        if kind.anchor {
            anchor.push(loss);
        }
        if kind.positive {
            positive.push(loss);
        }
        if kind.negative {
            negative.push(loss);
        }
    }
    Ok(TripletStats {
        all: CategoryStats::from_losses(&all),
        normal: CategoryStats::from_losses(&normal),
        noisy: CategoryStats::from_losses(&noisy),
        anchor_noisy: CategoryStats::from_losses(&anchor),
        positive_noisy: CategoryStats::from_losses(&positive),
        negative_noisy: CategoryStats::from_losses(&negative),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctgOptions {
    pub per_class: usize,
    pub margin: f64,
    /// Leading fraction of the stream used to seed the centers.
    pub init_fraction: f64,
    pub seed: u64,
}

impl Default for OctgOptions {
    fn default() -> Self {
        Self {
            per_class: 3,
            margin: 1.0,
            init_fraction: 0.2,
            seed: 0,
        }
    }
}

/// One generated triplet together with what the learner made of it.
#[derive(Debug, Clone)]
pub struct TripletRecord {
    pub triplet: Triplet,
    pub outcome: Option<TripletOutcome>,
}

#[derive(Debug, Clone)]
pub struct OctgRun {
    /// Per-instance confidence, indexed like the input rows.
    pub weights: Vec<f64>,
    pub centers: ClusterCenters,
    /// Filled only when records were requested.
    pub records: Vec<TripletRecord>,
    pub triplet_count: usize,
}

/// One pass of OCTG over `order`, feeding each instance's triplets to the
/// learner (if any) and moving centers by the resulting instance weight.
///
/// Centers are seeded from the first `⌈init_fraction·n⌉` instances of the
/// stream. Without a learner every weight stays 1.
pub fn run_octg(
    features: &[Vec<f64>],
    labels: &[usize],
    order: &[usize],
    mut learner: Option<&mut Learner>,
    options: &OctgOptions,
    keep_records: bool,
) -> Result<OctgRun> {
    check_dim(features.len(), labels.len())?;
    if order.is_empty() {
        return Err(Error::data("empty training stream"));
    }
    let n_init =
        ((options.init_fraction * order.len() as f64).ceil() as usize).clamp(1, order.len());
    let (init_x, init_y): (Vec<Vec<f64>>, Vec<usize>) = order[..n_init]
        .iter()
        .map(|&i| (features[i].clone(), labels[i]))
        .unzip();
    let mut centers = init_centers(&init_x, &init_y, options.per_class, options.seed)?;

    let mut weights = InstanceWeights::new(features.len());
    let mut records = Vec::new();
    let mut triplet_count = 0;
    for &i in order {
        let x = &features[i];
        let y = labels[i];
        if centers.nearest_of_class(x, y).is_none() {
            // class unseen in the init sample: it founds its own center
            centers.centers.push(Center {
                position: x.clone(),
                label: y,
                mass: 1.0,
            });
            continue;
        }
        for t in centers.octg_generate(x, y, options.margin, i)? {
            triplet_count += 1;
            let outcome = match learner.as_deref_mut() {
                Some(l) => {
                    let o = l.step(&t)?;
                    weights.record(i, o.normalized_weight);
                    Some(o)
                }
                None => None,
            };
            if keep_records {
                records.push(TripletRecord {
                    triplet: t,
                    outcome,
                });
            }
        }
        centers.update(x, y, weights.as_slice()[i])?;
    }
    Ok(OctgRun {
        weights: weights.into_vec(),
        centers,
        records,
        triplet_count,
    })
}

fn describe(m: Member) -> String {
    match m {
        Member::Instance(i) => format!("instance:{i}"),
        Member::Center { index, label } => format!("center:{index}:class{label}"),
    }
}

/// Writes one tab-separated line per triplet:
/// `anchor_idx  positive  negative  hinge_loss  weight  noisy_kind`.
pub fn write_triplet_dump(
    path: impl AsRef<Path>,
    records: &[TripletRecord],
    noisy_flags: &[bool],
    metric: &Metric,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "anchor_idx\tpositive\tnegative\thinge_loss\tweight\tnoisy_kind"
    )?;
    for r in records {
        let prov = r
            .triplet
            .provenance
            .ok_or_else(|| Error::contract("triplet has no provenance"))?;
        let loss = hinge(metric.margin_z(&r.triplet)?);
        let weight = r.outcome.map_or(1.0, |o| o.normalized_weight);
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            prov.anchor,
            describe(prov.positive),
            describe(prov.negative),
            loss,
            weight,
            NoisyMembers::of(&prov, noisy_flags)?
        )?;
    }
    out.flush()?;
    Ok(())
}
