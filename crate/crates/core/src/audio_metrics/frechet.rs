use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal loading applied to a covariance that is not positive definite.
pub const COVARIANCE_EPSILON: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-9;

/// `count × dim` embedding vectors from one source (reference or generated).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: DMatrix<f64>,
    pub source_id: String,
}

impl EmbeddingSet {
    pub fn from_rows(rows: &[Vec<f64>], source_id: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("embedding rows have differing lengths".into()));
        }
        Ok(Self {
            vectors: DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]),
            source_id: source_id.into(),
        })
    }

    pub fn count(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSetStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub count: usize,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Column mean and unbiased covariance (divisor `count - 1`), symmetrised.
/// If the smallest eigenvalue is not positive the covariance is loaded with
/// `COVARIANCE_EPSILON · I`.
pub fn embedding_stats(set: &EmbeddingSet) -> Result<EmbeddingSetStats> {
    let n = set.count();
    if n < 2 {
        return Err(Error::invalid(format!(
            "embedding set {:?} needs at least 2 vectors for a covariance, got {n}",
            set.source_id
        )));
    }
    if set.vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "embedding set {:?} contains non-finite values",
            set.source_id
        )));
    }
    let mu = set.vectors.row_mean().transpose();
    let mut centered = set.vectors.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let sigma = symmetrize(&((centered.transpose() * &centered) / (n as f64 - 1.0)));
    let min_eig = SymmetricEigen::new(sigma.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let sigma = if min_eig <= 0.0 {
        let dim = sigma.nrows();
        sigma + DMatrix::identity(dim, dim) * COVARIANCE_EPSILON
    } else {
        sigma
    };
    Ok(EmbeddingSetStats {
        mu,
        sigma,
        count: n,
    })
}

/// Principal square root of a symmetric positive semidefinite matrix via
/// eigendecomposition; negative eigenvalues are clipped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "sqrtm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::invalid(format!(
            "sqrtm needs a symmetric matrix (max asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok(symmetrize(&r))
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^½)`.
///
/// The cross term equals `tr sqrtm(Σa^½ Σb Σa^½)`, which is the sum of the
/// singular values of `Σb^½ Σa^½`. Taking singular values directly avoids
/// square roots of tiny, noisy eigenvalues when the covariances are rank
/// deficient.
pub fn frechet_distance(a: &EmbeddingSetStats, b: &EmbeddingSetStats) -> Result<f64> {
    let dim = a.mu.len();
    if b.mu.len() != dim || a.sigma.nrows() != dim || b.sigma.nrows() != dim {
        return Err(Error::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            a.mu.len(),
            b.mu.len()
        )));
    }
    let diff = &a.mu - &b.mu;
    let sqrt_a = sqrtm_psd(&a.sigma)?;
    let sqrt_b = sqrtm_psd(&b.sigma)?;
    let cross = (&sqrt_b * &sqrt_a).singular_values().sum();
    let d = diff.norm_squared() + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
    if d < -1e-8 {
        return Err(Error::Numerical(format!(
            "Fréchet distance came out negative ({d:e})"
        )));
    }
    Ok(d.max(0.0))
}
