//! Matrix loss functions and the analytic expectations of the KL loss for
//! Gaussian sample matrices.
//!
//! Inverses and log-determinants come from one spectral decomposition per
//! matrix ([`PreparedMatrix`]); a matrix whose smallest eigenvalue is not
//! above [`SINGULAR_FLOOR`] is rejected by every loss that needs its inverse
//! or determinant.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpectralDecomposition, SymmetricMatrix};

pub const SINGULAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Kl,
    InverseKl,
    Frobenius,
    InverseFrobenius,
    MinimumVariance,
    SymmetrizedStein,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Kl,
        LossKind::InverseKl,
        LossKind::Frobenius,
        LossKind::InverseFrobenius,
        LossKind::MinimumVariance,
        LossKind::SymmetrizedStein,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Kl => "kl",
            LossKind::InverseKl => "inverse_kl",
            LossKind::Frobenius => "frobenius",
            LossKind::InverseFrobenius => "inverse_frobenius",
            LossKind::MinimumVariance => "minimum_variance",
            LossKind::SymmetrizedStein => "symmetrized_stein",
        }
    }

    /// Short column header.
    pub fn label(&self) -> &'static str {
        match self {
            LossKind::Kl => "K",
            LossKind::InverseKl => "K_inv",
            LossKind::Frobenius => "F",
            LossKind::InverseFrobenius => "F_inv",
            LossKind::MinimumVariance => "MV",
            LossKind::SymmetrizedStein => "SS",
        }
    }

    pub fn is_kl_family(&self) -> bool {
        matches!(self, LossKind::Kl | LossKind::InverseKl)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == key || k.label().to_ascii_lowercase() == key)
            .or(match key.as_str() {
                "stein" => Some(LossKind::InverseKl),
                "mv" => Some(LossKind::MinimumVariance),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown loss '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub kind: LossKind,
    pub value: f64,
    /// KL family only: multiplied by `2/p`.
    pub scaled: bool,
}

#[derive(Debug, Clone)]
struct Inverse {
    inv: DMatrix<f64>,
    inv_sq: DMatrix<f64>,
    logdet: f64,
}

/// A symmetric matrix with its spectrum and, when positive definite, its
/// inverse, squared inverse and log-determinant.
#[derive(Debug, Clone)]
pub struct PreparedMatrix {
    matrix: SymmetricMatrix,
    decomp: SpectralDecomposition,
    inverse: Option<Inverse>,
}

impl PreparedMatrix {
    pub fn new(m: &SymmetricMatrix) -> Result<Self> {
        let decomp = linalg::sym_eigen(m)?;
        Ok(Self::assemble(m.clone(), decomp))
    }

    /// For a matrix already known as `sum_i values[i] v_i v_i'`, e.g. the
    /// output of a rotationally invariant estimator. Pairs are re-sorted by
    /// value so the stored spectrum ascends.
    pub fn from_spectrum(vectors: &DMatrix<f64>, values: &[f64]) -> Result<Self> {
        let p = values.len();
        if vectors.ncols() != p || vectors.nrows() != p {
            return Err(Error::DimensionMismatch { expected: p, actual: vectors.ncols() });
        }
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let eigenvalues = nalgebra::DVector::from_iterator(p, order.iter().map(|&i| values[i]));
        let eigenvectors = DMatrix::from_fn(p, p, |r, c| vectors[(r, order[c])]);
        let decomp = SpectralDecomposition { eigenvalues, eigenvectors };
        let matrix = linalg::reconstruct(&decomp, decomp.eigenvalues())?;
        Ok(Self::assemble(matrix, decomp))
    }

    fn assemble(matrix: SymmetricMatrix, decomp: SpectralDecomposition) -> Self {
        let inverse = (decomp.min_eigenvalue() > SINGULAR_FLOOR).then(|| {
            let v = &decomp.eigenvectors;
            let spectral = |f: &dyn Fn(f64) -> f64| {
                let mut scaled = v.clone();
                for (c, &l) in decomp.eigenvalues().iter().enumerate() {
                    scaled.column_mut(c).scale_mut(f(l));
                }
                let m = scaled * v.transpose();
                SymmetricMatrix::symmetrized(m).into_inner()
            };
            Inverse {
                inv: spectral(&|l| 1.0 / l),
                inv_sq: spectral(&|l| 1.0 / (l * l)),
                logdet: decomp.eigenvalues().iter().map(|l| l.ln()).sum(),
            }
        });
        Self { matrix, decomp, inverse }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomp
    }

    pub fn is_positive_definite(&self) -> bool {
        self.inverse.is_some()
    }

    fn inv(&self) -> Result<&Inverse> {
        self.inverse.as_ref().ok_or(Error::SingularMatrix { min_eigenvalue: self.decomp.min_eigenvalue() })
    }
}

/// `Tr(X Y)` for symmetric `X`, `Y`.
fn trace_prod(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

fn squared_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_dims(a: &PreparedMatrix, b: &PreparedMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(())
}

/// Evaluates `kind` on prepared operands. `scaled` applies the `2/p` factor
/// to the KL family and is ignored otherwise.
pub fn evaluate(kind: LossKind, a: &PreparedMatrix, b: &PreparedMatrix, scaled: bool) -> Result<f64> {
    check_dims(a, b)?;
    let p = a.dim() as f64;
    let kl_scale = if scaled { 2.0 / p } else { 1.0 };
    let (am, bm) = (a.matrix.as_matrix(), b.matrix.as_matrix());
    match kind {
        LossKind::Kl => {
            let (ai, bi) = (a.inv()?, b.inv()?);
            Ok(kl_scale * 0.5 * (bi.logdet - ai.logdet + trace_prod(&bi.inv, am) - p))
        }
        LossKind::InverseKl => {
            let (ai, bi) = (a.inv()?, b.inv()?);
            Ok(kl_scale * 0.5 * (ai.logdet - bi.logdet + trace_prod(bm, &ai.inv) - p))
        }
        LossKind::Frobenius => Ok(squared_distance(am, bm) / p),
        LossKind::InverseFrobenius => Ok(squared_distance(&a.inv()?.inv, &b.inv()?.inv) / p),
        LossKind::MinimumVariance => {
            let (ai, bi) = (a.inv()?, b.inv()?);
            let numerator = trace_prod(am, &bi.inv_sq) / p;
            let tr_b_inv = bi.inv.trace() / p;
            let tr_a_inv = ai.inv.trace() / p;
            Ok(numerator / (tr_b_inv * tr_b_inv) - 1.0 / tr_a_inv)
        }
        LossKind::SymmetrizedStein => {
            let (ai, bi) = (a.inv()?, b.inv()?);
            Ok((trace_prod(bm, &ai.inv) + trace_prod(&bi.inv, am)) / p - 2.0)
        }
    }
}

pub fn loss(kind: LossKind, a: &SymmetricMatrix, b: &SymmetricMatrix, scaled: bool) -> Result<LossValue> {
    let value = evaluate(kind, &PreparedMatrix::new(a)?, &PreparedMatrix::new(b)?, scaled)?;
    Ok(LossValue { kind, value, scaled: scaled && kind.is_kl_family() })
}

/// `K(A, B) = 1/2 [log det(B A^-1) + Tr(B^-1 A) - p]`, times `2/p` if `scaled`.
pub fn kl(a: &SymmetricMatrix, b: &SymmetricMatrix, scaled: bool) -> Result<f64> {
    Ok(loss(LossKind::Kl, a, b, scaled)?.value)
}

/// `K(A^-1, B^-1)`; the scaled form is Stein's loss.
pub fn inverse_kl(a: &SymmetricMatrix, b: &SymmetricMatrix, scaled: bool) -> Result<f64> {
    Ok(loss(LossKind::InverseKl, a, b, scaled)?.value)
}

/// `(1/p) Tr[(A - B)(A - B)']`.
pub fn frobenius(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(squared_distance(a.as_matrix(), b.as_matrix()) / a.dim() as f64)
}

pub fn inverse_frobenius(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    Ok(loss(LossKind::InverseFrobenius, a, b, false)?.value)
}

pub fn minimum_variance(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    Ok(loss(LossKind::MinimumVariance, a, b, false)?.value)
}

pub fn symmetrized_stein(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    Ok(loss(LossKind::SymmetrizedStein, a, b, false)?.value)
}

fn check_expectation_domain(p: usize, n: usize) -> Result<()> {
    if p == 0 || n <= p + 1 {
        return Err(Error::Undefined(format!("KL expectation needs n > p + 1 (p = {p}, n = {n})")));
    }
    Ok(())
}

/// Scaled `E[K(E1, E2)] = (p + 1) / (n - p - 1)` for independent Wishart
/// sample matrices.
pub fn expected_kl_pair(p: usize, n: usize) -> Result<f64> {
    check_expectation_domain(p, n)?;
    Ok((p as f64 + 1.0) / (n as f64 - p as f64 - 1.0))
}

/// Scaled `E[K(C, E)]`:
/// `(1/p) [p ln(2/n) + sum_{t=n-p+1}^{n} psi(t/2) + p(p+1)/(n-p-1)]`.
pub fn expected_kl_population(p: usize, n: usize) -> Result<f64> {
    check_expectation_domain(p, n)?;
    let (pf, nf) = (p as f64, n as f64);
    let mut psi_sum = 0.0;
    for t in (n - p + 1)..=n {
        psi_sum += digamma(t as f64 / 2.0)?;
    }
    Ok((pf * (2.0 / nf).ln() + psi_sum + pf * (pf + 1.0) / (nf - pf - 1.0)) / pf)
}

/// Digamma `psi(x) = Gamma'(x) / Gamma(x)` for `x > 0`, by upward recurrence
/// to `x >= 6` and the asymptotic Bernoulli series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidParameter(format!("digamma needs x > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // B_2k / (2k) for k = 1..7
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0 - r * (1.0 / 240.0 - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r / 12.0))))));
    Ok(acc + x.ln() - 0.5 / x - series)
}
