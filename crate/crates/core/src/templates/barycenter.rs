use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ClusterModel;
use crate::transport::{symmetrize, SpdMatrix};

/// Settings shared by the barycenter and k-barycenter solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycenterOptions {
    pub max_iter: usize,
    /// Relative Frobenius change of the covariance between iterates.
    pub tol: f64,
    /// Fraction of models trimmed by the k-barycenter, in `[0, 1)`.
    pub trim_alpha: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-8,
            trim_alpha: 0.0,
            restarts: 10,
            seed: 0,
        }
    }
}

impl BarycenterOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("barycenter tol must be positive, got {}", self.tol)));
        }
        if !(0.0..1.0).contains(&self.trim_alpha) {
            return Err(Error::invalid(format!("trim_alpha must lie in [0, 1), got {}", self.trim_alpha)));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterFit {
    pub model: ClusterModel,
    pub iterations: usize,
    pub residual: f64,
}

/// 2-Wasserstein barycenter of Gaussians.
///
/// The mean is `Σ λᵢ mᵢ`. The covariance iterates
/// `S ← S^{-1/2} (Σ λᵢ (S^{1/2} Sᵢ S^{1/2})^{1/2})² S^{-1/2}`
/// from the moment-matched start `Σ λᵢ (Sᵢ + mᵢmᵢᵀ) − m̄m̄ᵀ` until the
/// relative Frobenius change drops below `opts.tol`. When every covariance
/// is identical it is returned as is. The output weight is `Σ λᵢ wᵢ`; its
/// label is kept only if all inputs share it.
pub fn gaussian_barycenter(
    models: &[ClusterModel],
    lambdas: &[f64],
    opts: &BarycenterOptions,
) -> Result<BarycenterFit> {
    if models.is_empty() {
        return Err(Error::invalid("barycenter of an empty set"));
    }
    if models.len() != lambdas.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            found: lambdas.len(),
        });
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::invalid(format!("barycenter weight {l} is negative or not finite")));
    }
    let total: f64 = lambdas.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("barycenter weights sum to {total}, expected 1")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("barycenter tol must be positive"));
    }
    let d = models[0].dim();
    if let Some(m) = models.iter().find(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.dim(),
        });
    }

    let active: Vec<(&ClusterModel, f64)> = models
        .iter()
        .zip(lambdas.iter().copied())
        .filter(|(_, l)| *l > 0.0)
        .collect();

    let mut mean = DVector::zeros(d);
    let mut weight = 0.0;
    for (m, l) in &active {
        mean += &m.mean * *l;
        weight += l * m.weight;
    }
    let first = active[0].0;
    let label = first
        .label
        .as_ref()
        .filter(|lab| models.iter().all(|m| m.label.as_ref() == Some(*lab)))
        .cloned();
    let finish = |cov: SpdMatrix, iterations: usize, residual: f64| -> Result<BarycenterFit> {
        let mean = if active.len() == 1 { first.mean.clone() } else { mean.clone() };
        let model = ClusterModel::new(mean, cov, weight.clamp(f64::MIN_POSITIVE, 1.0), label.clone())?;
        Ok(BarycenterFit {
            model,
            iterations,
            residual,
        })
    };

    if active.iter().all(|(m, _)| m.cov == first.cov) {
        return finish(first.cov.clone(), 0, 0.0);
    }

    let mut second_moment = DMatrix::zeros(d, d);
    for (m, l) in &active {
        second_moment += (m.cov.as_matrix() + &m.mean * m.mean.transpose()) * *l;
    }
    let mut cov = SpdMatrix::new(symmetrize(second_moment - &mean * mean.transpose()))?;

    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iter {
        let next = fixed_point_step(&cov, &active)?;
        let scale = cov.as_matrix().norm().max(f64::MIN_POSITIVE);
        residual = (next.as_matrix() - cov.as_matrix()).norm() / scale;
        cov = next;
        if residual < opts.tol {
            return finish(cov, iteration, residual);
        }
    }
    Err(Error::NotConverged {
        what: "Gaussian barycenter",
        iterations: opts.max_iter,
        residual,
    })
}

fn fixed_point_step(cov: &SpdMatrix, active: &[(&ClusterModel, f64)]) -> Result<SpdMatrix> {
    let root = cov.sqrt();
    let inv_root = cov.inv_sqrt()?;
    let d = cov.dim();
    let mut t = DMatrix::zeros(d, d);
    for (m, l) in active {
        let inner = symmetrize(root.as_matrix() * m.cov.as_matrix() * root.as_matrix());
        t += SpdMatrix::new(inner)?.sqrt().into_inner() * *l;
    }
    let next = inv_root.as_matrix() * &t * &t * inv_root.as_matrix();
    SpdMatrix::new(symmetrize(next))
}
