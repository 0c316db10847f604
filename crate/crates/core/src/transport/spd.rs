use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetry tolerance, relative to `max(1, max |entry|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues below this fraction of the largest eigenvalue are clamped to zero.
pub const EIGEN_CLAMP_REL: f64 = 1e-10;

/// A symmetric positive semi-definite matrix.
///
/// Construction symmetrizes the input exactly and repairs eigenvalues in
/// `[-1e-10·λmax, 0)` to zero. Larger negative eigenvalues are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("matrix has dimension 0"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::invalid(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let sym = symmetrize(m);
        let eig = SymmetricEigen::new(sym.clone());
        let max = eig.eigenvalues.max().max(0.0);
        let floor = -EIGEN_CLAMP_REL * max.max(1.0);
        let min = eig.eigenvalues.min();
        if min < floor {
            return Err(Error::invalid(format!(
                "matrix is not positive semi-definite (eigenvalue {min:e})"
            )));
        }
        if min < 0.0 {
            Ok(Self(rebuild(&eig.eigenvectors, &eig.eigenvalues.map(|e| e.max(0.0)))))
        } else {
            Ok(Self(sym))
        }
    }

    /// Wraps a matrix already known to be symmetric PSD, symmetrizing away rounding noise.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Eigenvalues (clamped at zero) and orthonormal eigenvectors.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.0.clone());
        (eig.eigenvalues.map(|e| e.max(0.0)), eig.eigenvectors)
    }

    /// Applies `f` to the spectrum: `U diag(f(λ)) Uᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let (vals, vecs) = self.eigen();
        rebuild(&vecs, &vals.map(f))
    }

    pub fn sqrt(&self) -> SpdMatrix {
        Self::from_trusted(self.map_spectrum(f64::sqrt))
    }

    /// `S^{-1/2}`; fails when the matrix is numerically singular.
    pub fn inv_sqrt(&self) -> Result<SpdMatrix> {
        let (vals, vecs) = self.eigen();
        let max = vals.max();
        let min = vals.min();
        if min <= EIGEN_CLAMP_REL * max || min <= 0.0 {
            return Err(Error::invalid(format!(
                "matrix is singular (eigenvalues in [{min:e}, {max:e}])"
            )));
        }
        Ok(Self::from_trusted(rebuild(&vecs, &vals.map(|e| 1.0 / e.sqrt()))))
    }

    pub fn is_positive_definite(&self) -> bool {
        let (vals, _) = self.eigen();
        vals.min() > EIGEN_CLAMP_REL * vals.max()
    }
}

impl TryFrom<DMatrix<f64>> for SpdMatrix {
    type Error = Error;

    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        Self::new(m)
    }
}

impl From<SpdMatrix> for DMatrix<f64> {
    fn from(m: SpdMatrix) -> Self {
        m.0
    }
}

impl AsRef<DMatrix<f64>> for SpdMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Principal square root of a symmetric PSD matrix.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<SpdMatrix> {
    Ok(SpdMatrix::new(m.clone())?.sqrt())
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn rebuild(vecs: &DMatrix<f64>, vals: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * vals[j]);
    symmetrize(scaled * vecs.transpose())
}
