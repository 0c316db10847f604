use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::CytometrySummary;

use super::distance::PartitionMetric;

/// Symmetric matrix of distances between named items, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    entries: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(ids: Vec<String>, entries: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: entries.nrows().max(entries.ncols()),
            });
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::invalid(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..i {
                let v = entries[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("entry ({i}, {j}) = {v} is not a distance")));
                }
                if v != entries[(j, i)] {
                    return Err(Error::invalid(format!("entry ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(Self { ids, entries })
    }

    /// Builds from a function evaluated on `i < j` and mirrored.
    pub fn from_fn(ids: Vec<String>, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = ids.len();
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Self::new(ids, entries)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// All pairwise distances over a database; pairs are evaluated in parallel.
pub fn pairwise_distance_matrix(db: &[CytometrySummary], metric: PartitionMetric) -> Result<DistanceMatrix> {
    if db.len() < 2 {
        return Err(Error::invalid(format!(
            "pairwise distances need at least 2 summaries, got {}",
            db.len()
        )));
    }
    let d = db[0].dim();
    if let Some(s) = db.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: s.dim(),
        });
    }
    let n = db.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            metric.distance(&db[i], &db[j]).map_err(|e| Error::Pair {
                a: db[i].source_id.clone(),
                b: db[j].source_id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut entries = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        entries[(i, j)] = v;
        entries[(j, i)] = v;
    }
    DistanceMatrix::new(db.iter().map(|s| s.source_id.clone()).collect(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(DistanceMatrix::new(ids.clone(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0])).is_err());
        assert!(DistanceMatrix::new(ids.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).is_err());
        assert!(DistanceMatrix::new(ids, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).is_ok());
    }

    #[test]
    fn needs_two_entries() {
        assert!(pairwise_distance_matrix(&[], PartitionMetric::default()).is_err());
    }
}
