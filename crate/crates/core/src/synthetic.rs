//! Synthetic gated cytometries with a planted group structure.
//!
//! Each group has a base mixture of labelled Gaussian populations. Members of
//! a group perturb the base means and covariances and sample events from the
//! result; a fraction of uniform background events is labelled `noise`.
//! Every population of every group is kept at least `separation` away from
//! every other, so groups are far apart in similarity distance while members
//! of one group stay close.

use nalgebra::{DMatrix, DVector};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterModel, LabeledEvents};
use crate::templates::Template;
use crate::transport::SpdMatrix;

/// Label of background events.
pub const NOISE_LABEL: &str = "noise";

const PLACEMENT_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub groups: usize,
    pub per_group: usize,
    /// Populations per cytometry.
    pub clusters: usize,
    pub dim: usize,
    /// Standard deviation of the shift applied to each member mean.
    pub mean_jitter: f64,
    /// Standard deviation of the log-scale applied to each covariance axis.
    pub cov_jitter: f64,
    /// Fraction of background events, in `[0, 1)`.
    pub noise_fraction: f64,
    pub events_per_cytometry: usize,
    /// Minimum distance between any two base means. Population standard
    /// deviations lie between about 0.7 and 1.2.
    pub separation: f64,
    /// Side of the cube holding the base means.
    pub box_size: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            groups: 3,
            per_group: 9,
            clusters: 5,
            dim: 4,
            mean_jitter: 0.2,
            cov_jitter: 0.05,
            noise_fraction: 0.0,
            events_per_cytometry: 2000,
            separation: 10.0,
            box_size: 100.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("groups", self.groups),
            ("per_group", self.per_group),
            ("clusters", self.clusters),
            ("dim", self.dim),
            ("events_per_cytometry", self.events_per_cytometry),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.mean_jitter >= 0.0 && self.cov_jitter >= 0.0) {
            return Err(Error::invalid("jitter scales must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::invalid(format!("noise_fraction {} outside [0, 1)", self.noise_fraction)));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("separation must be positive"));
        }
        if !(self.box_size > 0.0 && self.box_size.is_finite()) {
            return Err(Error::invalid("box_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCytometry {
    pub id: String,
    pub group: usize,
    pub events: LabeledEvents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// Cytometries ordered by group, then member.
    pub cytometries: Vec<SyntheticCytometry>,
    /// Base mixture of each group.
    pub templates: Vec<Template>,
}

pub fn population_label(k: usize) -> String {
    format!("pop{}", k + 1)
}

pub fn cytometry_id(group: usize, member: usize) -> String {
    format!("g{group}-c{member:02}")
}

/// Generates the dataset described by `spec`; the same spec gives the same data.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = stream(spec.seed, 0);
    let means = place_means(spec, &mut rng)?;
    let templates = (0..spec.groups)
        .map(|g| {
            let raw: Vec<f64> = (0..spec.clusters).map(|_| rng.random_range(1.0..2.0)).collect();
            let total: f64 = raw.iter().sum();
            let clusters = (0..spec.clusters)
                .map(|k| {
                    let cov = random_cov(spec.dim, &mut rng);
                    ClusterModel::new(means[g * spec.clusters + k].clone(), cov, raw[k] / total, Some(population_label(k)))
                })
                .collect::<Result<Vec<_>>>()?;
            Template::new(g, clusters)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cytometries = Vec::with_capacity(spec.groups * spec.per_group);
    for (g, base) in templates.iter().enumerate() {
        for i in 0..spec.per_group {
            let mut rng = stream(spec.seed, (g * spec.per_group + i + 1) as u64);
            let events = sample_member(spec, base, &mut rng)?;
            cytometries.push(SyntheticCytometry {
                id: cytometry_id(g, i),
                group: g,
                events,
            });
        }
    }
    Ok(SyntheticDataset { cytometries, templates })
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Rejection sampling of `groups · clusters` means in a cube, pairwise at least `separation` apart.
fn place_means(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>> {
    let count = spec.groups * spec.clusters;
    let side = spec.box_size;
    let mut placed: Vec<DVector<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ok = None;
        for _ in 0..PLACEMENT_TRIES {
            let p = DVector::from_fn(spec.dim, |_, _| rng.random_range(0.0..side));
            if placed.iter().all(|q| (q - &p).norm() >= spec.separation) {
                ok = Some(p);
                break;
            }
        }
        match ok {
            Some(p) => placed.push(p),
            None => {
                return Err(Error::invalid(format!(
                    "could not place {count} populations {} apart in a cube of side {} in dimension {}",
                    spec.separation, spec.box_size, spec.dim
                )))
            }
        }
    }
    Ok(placed)
}

/// `Q diag(λ) Qᵀ` with a random rotation and `λ ∈ [0.5, 1.5]`.
fn random_cov(d: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let lambda = DVector::from_fn(d, |_, _| rng.random_range(0.5..1.5));
    let m = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    SpdMatrix::new(0.5 * (&m + m.transpose())).expect("rotation of a positive spectrum")
}

fn sample_member(spec: &SyntheticSpec, base: &Template, rng: &mut ChaCha8Rng) -> Result<LabeledEvents> {
    let d = spec.dim;
    let parts: Vec<(DVector<f64>, DMatrix<f64>)> = base
        .summary
        .clusters()
        .iter()
        .map(|c| {
            let shift = DVector::from_fn(d, |_, _| spec.mean_jitter * rng.sample::<f64, _>(StandardNormal));
            let scale =
                DVector::from_fn(d, |_, _| (0.5 * spec.cov_jitter * rng.sample::<f64, _>(StandardNormal)).exp());
            let cov = DMatrix::from_diagonal(&scale) * c.cov.as_matrix() * DMatrix::from_diagonal(&scale);
            let chol = cov.cholesky().expect("scaled covariance stays positive definite").l();
            (&c.mean + shift, chol)
        })
        .collect();
    let pick = WeightedIndex::new(base.summary.weights()).map_err(|e| Error::invalid(e.to_string()))?;

    let n = spec.events_per_cytometry;
    let n_noise = (spec.noise_fraction * n as f64).round() as usize;
    let mut x = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n - n_noise {
        let k = pick.sample(rng);
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        x.row_mut(i).copy_from(&(&parts[k].0 + &parts[k].1 * z).transpose());
        labels.push(population_label(k));
    }
    if n_noise > 0 {
        let body = x.rows(0, n - n_noise);
        let (lo, hi): (Vec<f64>, Vec<f64>) = if n_noise < n {
            (0..d).map(|j| (body.column(j).min(), body.column(j).max())).unzip()
        } else {
            (0..d).map(|j| (parts[0].0[j] - 1.0, parts[0].0[j] + 1.0)).unzip()
        };
        for i in n - n_noise..n {
            for j in 0..d {
                x[(i, j)] = if hi[j] > lo[j] { rng.random_range(lo[j]..hi[j]) } else { lo[j] };
            }
            labels.push(NOISE_LABEL.to_string());
        }
    }
    LabeledEvents::new(x, labels)
}
