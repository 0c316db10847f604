//! Optimal transport primitives.
//!
//! - [`solve_discrete_ot`]: exact transportation simplex.
//! - [`sinkhorn`]: entropy-regularized transport, log-domain updates.
//! - [`gaussian_w2`]: closed-form 2-Wasserstein distance between Gaussians.
//! - [`SpdMatrix`], [`spd_sqrt`]: symmetric PSD matrices and their roots.

mod gaussian;
mod simplex;
mod sinkhorn;
mod spd;

pub use gaussian::{bures_trace_term, gaussian_w2, gaussian_w2_squared};
pub use simplex::solve_discrete_ot;
pub use sinkhorn::{default_gamma, sinkhorn, SinkhornOptions};
pub use spd::{spd_sqrt, SpdMatrix, EIGEN_CLAMP_REL, SYMMETRY_TOL};

pub(crate) use spd::{rebuild, symmetrize};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`DiscreteMeasure`].
pub const MASS_TOL: f64 = 1e-9;

/// Probability weights of a finite discrete measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure(Vec<f64>);

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("measure has no atoms"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("measure has invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!(
                "measure weights sum to {total}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    /// Rescales nonnegative masses to sum to one.
    pub fn normalized(masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("masses must have a positive finite sum"));
        }
        Self::new(masses.iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("measure has no atoms"));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Pairwise nonnegative finite costs between source and target atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(DMatrix<f64>);

impl CostMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if let Some(c) = entries.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::invalid(format!("cost matrix has invalid entry {c}")));
        }
        Ok(Self(entries))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(rows, cols, f))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.0.nrows() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: self.0.nrows(),
            });
        }
        if self.0.ncols() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: self.0.ncols(),
            });
        }
        Ok(())
    }
}

/// A coupling `w_kl` together with the objective value reported by its solver.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    plan: DMatrix<f64>,
    cost: f64,
}

impl TransportPlan {
    pub(crate) fn new(plan: DMatrix<f64>, cost: f64) -> Self {
        Self { plan, cost }
    }

    pub(crate) fn with_cost(plan: DMatrix<f64>, cost: &CostMatrix) -> Self {
        let c = plan.component_mul(cost.as_matrix()).sum();
        Self { plan, cost: c }
    }

    pub fn plan(&self) -> &DMatrix<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> DMatrix<f64> {
        self.plan
    }

    /// The solver objective: the transport cost for the exact solver, the
    /// regularized objective for Sinkhorn.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// `Σ w_kl c_kl`, the unregularized cost of this plan.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        self.plan.component_mul(cost.as_matrix()).sum()
    }

    /// Largest absolute deviation of row and column sums from the marginals.
    pub fn marginal_error(&self, source: &DiscreteMeasure, target: &DiscreteMeasure) -> f64 {
        let rows = (0..self.plan.nrows())
            .map(|i| (self.plan.row(i).sum() - source.weights()[i]).abs())
            .fold(0.0, f64::max);
        let cols = (0..self.plan.ncols())
            .map(|j| (self.plan.column(j).sum() - target.weights()[j]).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    pub fn check_marginals(
        &self,
        source: &DiscreteMeasure,
        target: &DiscreteMeasure,
        tol: f64,
    ) -> Result<()> {
        let err = self.marginal_error(source, target);
        if err > tol {
            return Err(Error::invalid(format!("marginal error {err:e} exceeds {tol:e}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![]).is_err());
        assert!(DiscreteMeasure::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::new(vec![1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![0.5, 0.5]).is_ok());
        let m = DiscreteMeasure::normalized(&[2.0, 6.0]).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
    }

    #[test]
    fn cost_validation() {
        assert!(CostMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, -1.0])).is_err());
        assert!(CostMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN])).is_err());
    }
}
