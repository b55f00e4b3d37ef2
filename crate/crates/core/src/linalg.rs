//! Dense symmetric linear algebra shared by every estimator.
//!
//! Eigenvalues are always reported in ascending order; rank 1 is the
//! smallest eigenvalue and rank `p` the largest.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Point of the complex plane at which a Stieltjes transform is evaluated.
pub type ComplexPoint = Complex64;

/// Maximum asymmetry accepted by [`SymmetricMatrix::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Eigenvalues above `-PSD_CLAMP` are treated as numerical zeros.
pub const PSD_CLAMP: f64 = 1e-10;

const NORMALIZATION_TOLERANCE: f64 = 1e-8;
const TIE_TOLERANCE: f64 = 1e-10;

/// A real symmetric `p x p` matrix with finite entries.
///
/// Construction symmetrizes the storage exactly, so `m[(i, j)] == m[(j, i)]`
/// holds bitwise afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidMatrix(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if let Some(((i, j), v)) = indexed(&m).find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite entry {v} at ({i}, {j})")));
        }
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::InvalidMatrix(format!(
                        "asymmetric entries ({i}, {j}) = {a} and ({j}, {i}) = {b}"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages `m` with its transpose without any tolerance check.
    ///
    /// For internal products that are symmetric up to rounding.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Self(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidMatrix("rows are not all of length p".into()));
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    /// Largest absolute entry-wise difference to `other`.
    pub fn max_abs_diff(&self, other: &SymmetricMatrix) -> f64 {
        self.0.iter().zip(other.0.iter()).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// `P M P'` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.dim();
        let mut out = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                out[(perm[i], perm[j])] = self.0[(i, j)];
            }
        }
        Self(out)
    }
}

fn indexed(m: &DMatrix<f64>) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
    let rows = m.nrows();
    m.iter().enumerate().map(move |(k, v)| ((k % rows, k / rows), *v))
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.eigenvectors.as_slice()[i * p..(i + 1) * p]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }
}

/// Symmetric eigendecomposition with deterministic ordering.
///
/// Eigenvalues ascend. Eigenvalues within `1e-10` (relative to the spectral
/// scale) of each other form a tie group whose members are ordered by the
/// row index of their largest-magnitude component. Each eigenvector is signed
/// so that its largest-magnitude component is positive.
pub fn sym_eigen(m: &SymmetricMatrix) -> Result<SpectralDecomposition> {
    let p = m.dim();
    let eig = nalgebra::SymmetricEigen::new(m.0.clone());
    let vals = eig.eigenvalues;
    let vecs = eig.eigenvectors;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("eigensolver produced non-finite values".into()));
    }

    let peak: Vec<usize> = (0..p)
        .map(|c| {
            let col = vecs.column(c);
            let mut best = 0;
            for r in 1..p {
                if col[r].abs() > col[best].abs() {
                    best = r;
                }
            }
            best
        })
        .collect();

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let scale = vals.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let tol = TIE_TOLERANCE * scale;
    let mut start = 0;
    while start < p {
        let mut end = start + 1;
        while end < p && vals[order[end]] - vals[order[end - 1]] <= tol {
            end += 1;
        }
        order[start..end].sort_by_key(|&c| peak[c]);
        start = end;
    }

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&c| vals[c]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let sign = if vecs[(peak[src], src)] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            eigenvectors[(r, dst)] = sign * vecs[(r, src)];
        }
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// `sum_i xi[i] v_i v_i'` over the eigenvectors of `decomp`.
pub fn reconstruct(decomp: &SpectralDecomposition, xi: &[f64]) -> Result<SymmetricMatrix> {
    let p = decomp.dim();
    if xi.len() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: xi.len() });
    }
    if let Some(bad) = xi.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite eigenvalue {bad}")));
    }
    let v = &decomp.eigenvectors;
    let mut scaled = v.clone();
    for (c, &x) in xi.iter().enumerate() {
        scaled.column_mut(c).scale_mut(x);
    }
    Ok(SymmetricMatrix::symmetrized(scaled * v.transpose()))
}

/// Symmetric square root of a positive semi-definite matrix.
pub fn sqrt_spd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let decomp = sym_eigen(m)?;
    let min = decomp.min_eigenvalue();
    if min < -PSD_CLAMP {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    let roots: Vec<f64> = decomp.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    reconstruct(&decomp, &roots)
}

/// `G(z) = (1/p) sum_j 1 / (z - lambda_j)`.
pub fn stieltjes(eigenvalues: &[f64], z: ComplexPoint) -> Result<ComplexPoint> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidDimension("empty spectrum".into()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for &l in eigenvalues {
        let d = z - l;
        if d.re == 0.0 && d.im == 0.0 {
            return Err(Error::SingularPoint(l));
        }
        acc += d.inv();
    }
    Ok(acc / eigenvalues.len() as f64)
}

/// Inverse participation ratio `sum_j v_j^4` of a unit vector.
pub fn ipr(v: &[f64]) -> Result<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized(norm));
    }
    Ok(v.iter().map(|x| x.powi(4)).sum())
}
