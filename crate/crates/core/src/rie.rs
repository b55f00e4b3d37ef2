//! Rotationally invariant estimators.
//!
//! Every estimator keeps the eigenvectors of the sample matrix and replaces
//! its eigenvalues `lambda_k` by shrunk values `xi_k`; the filtered matrix is
//! `sum_k xi_k v_k v_k'`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpectralDecomposition, SymmetricMatrix};
use crate::models::second_moment;

/// Below this `|Im u_k|` the nonlinear shrinkage formulas fall back to
/// `xi_k = lambda_k`.
pub const IM_U_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageResult {
    /// Shrunk eigenvalues paired with `decomp.eigenvalues` (ascending).
    pub xi: Vec<f64>,
    pub decomp: SpectralDecomposition,
    pub filtered: SymmetricMatrix,
    /// Negative `xi` values reset to zero.
    pub clamped: usize,
    /// Eigenvalues left unshrunk because `Im u_k` vanished.
    pub fallbacks: usize,
}

impl ShrinkageResult {
    /// Clamps negative `xi` to zero and reconstructs the filtered matrix.
    pub fn from_decomposition(decomp: SpectralDecomposition, xi: Vec<f64>) -> Result<Self> {
        if xi.len() != decomp.dim() {
            return Err(Error::DimensionMismatch { expected: decomp.dim(), actual: xi.len() });
        }
        Self::assemble(decomp, xi, 0)
    }

    fn assemble(decomp: SpectralDecomposition, mut xi: Vec<f64>, fallbacks: usize) -> Result<Self> {
        let mut clamped = 0;
        for x in xi.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
                clamped += 1;
            }
        }
        let filtered = linalg::reconstruct(&decomp, &xi)?;
        Ok(Self { xi, decomp, filtered, clamped, fallbacks })
    }

    pub fn warnings(&self) -> usize {
        self.clamped + self.fallbacks
    }
}

/// Imaginary offset used to evaluate the Stieltjes transform next to the
/// real axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub epsilon: f64,
    /// Keep the `j = k` pole in the sum for `G(lambda_k - i eps)`.
    pub include_self: bool,
}

impl Regularization {
    /// `epsilon = p^{-1/2}`, self term included.
    pub fn for_dim(p: usize) -> Self {
        Self { epsilon: (p as f64).powf(-0.5), include_self: true }
    }

    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, include_self: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)))
        }
    }
}

pub fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("q must be positive, got {q}")))
    }
}

pub fn naive(e: &SymmetricMatrix) -> Result<ShrinkageResult> {
    let decomp = linalg::sym_eigen(e)?;
    let mut xi = decomp.eigenvalues().to_vec();
    let mut clamped = 0;
    for x in xi.iter_mut().filter(|x| **x < 0.0) {
        *x = 0.0;
        clamped += 1;
    }
    Ok(ShrinkageResult { xi, decomp, filtered: e.clone(), clamped, fallbacks: 0 })
}

/// Upper edge `(1 + sqrt(q))^2` of the Marchenko-Pastur bulk.
pub fn marchenko_pastur_edge(q: f64) -> f64 {
    (1.0 + q.sqrt()).powi(2)
}

/// Eigenvalues below the Marchenko-Pastur edge are replaced by their mean.
pub fn clip_rmt(e: &SymmetricMatrix, q: f64) -> Result<ShrinkageResult> {
    check_q(q)?;
    let decomp = linalg::sym_eigen(e)?;
    let edge = marchenko_pastur_edge(q);
    let below = decomp.eigenvalues().iter().filter(|&&l| l < edge).count();
    let xi = clipped_eigenvalues(decomp.eigenvalues(), decomp.dim() - below);
    ShrinkageResult::assemble(decomp, xi, 0)
}

/// Keeps the `k` largest eigenvalues, replacing the rest by their mean.
pub fn clip_k(e: &SymmetricMatrix, k: usize) -> Result<ShrinkageResult> {
    let p = e.dim();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={p}")));
    }
    let decomp = linalg::sym_eigen(e)?;
    let xi = clipped_eigenvalues(decomp.eigenvalues(), k);
    ShrinkageResult::assemble(decomp, xi, 0)
}

/// Ascending `eigenvalues` with all but the top `keep` replaced by their
/// mean. `keep >= len` returns the input.
pub fn clipped_eigenvalues(eigenvalues: &[f64], keep: usize) -> Vec<f64> {
    let p = eigenvalues.len();
    let cut = p.saturating_sub(keep);
    let mut xi = eigenvalues.to_vec();
    if cut > 0 {
        let mean = eigenvalues[..cut].iter().sum::<f64>() / cut as f64;
        xi[..cut].iter_mut().for_each(|x| *x = mean);
    }
    xi
}

/// `u_k = q (lambda_k G(lambda_k - i eps) - 1)` for every sample eigenvalue.
pub fn spectral_u(eigenvalues: &[f64], q: f64, reg: Regularization) -> Vec<Complex64> {
    let p = eigenvalues.len() as f64;
    eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &lk)| {
            let z = Complex64::new(lk, -reg.epsilon);
            let mut g = Complex64::new(0.0, 0.0);
            for (j, &lj) in eigenvalues.iter().enumerate() {
                if j != k || reg.include_self {
                    g += (z - lj).inv();
                }
            }
            g /= p;
            q * (lk * g - 1.0)
        })
        .collect()
}

/// Nonlinear shrinkage `xi_k = lambda_k / |1 + u_k|^2`.
pub fn lp_shrink(e: &SymmetricMatrix, q: f64, reg: Regularization) -> Result<ShrinkageResult> {
    check_q(q)?;
    reg.validate()?;
    let decomp = linalg::sym_eigen(e)?;
    let (xi, fallbacks) = lp_eigenvalues_counted(decomp.eigenvalues(), q, reg);
    ShrinkageResult::assemble(decomp, xi, fallbacks)
}

/// Shrunk values for ascending sample `eigenvalues`, without
/// reconstruction.
pub fn lp_eigenvalues(eigenvalues: &[f64], q: f64, reg: Regularization) -> Vec<f64> {
    lp_eigenvalues_counted(eigenvalues, q, reg).0
}

/// Same fallback rule as the autocorrelation-aware formula: a null
/// eigenvalue at `q >= 1` sends `1 + u_k` to zero, so `xi_k = lambda_k`.
fn lp_eigenvalues_counted(eigenvalues: &[f64], q: f64, reg: Regularization) -> (Vec<f64>, usize) {
    let mut fallbacks = 0;
    let xi = eigenvalues
        .iter()
        .zip(spectral_u(eigenvalues, q, reg))
        .map(|(&l, u)| {
            if u.im.abs() < IM_U_FLOOR {
                fallbacks += 1;
                l
            } else {
                l / (1.0 + u).norm_sqr()
            }
        })
        .collect();
    (xi, fallbacks)
}

/// Z-transform of the autocorrelation matrix `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AutocorrKernel {
    /// `A = I`: `Z(z) = (z + 1) / z`.
    White,
    /// `A_ij = exp(-|i - j| / tau)`: `Z(z) = eta + sqrt(eta^2 - 1 + 1/z^2)`,
    /// `eta = coth(1/tau)`.
    Exponential { tau: f64 },
}

impl AutocorrKernel {
    pub fn eta(&self) -> Option<f64> {
        match *self {
            AutocorrKernel::White => None,
            AutocorrKernel::Exponential { tau } => Some(1.0 / (1.0 / tau).tanh()),
        }
    }

    /// Evaluates `Z(u)`. The square-root branch is the one whose imaginary
    /// part has the sign opposite to `Im u`, which is the branch continuous
    /// with `1 + 1/u` as `tau -> 0` and keeps `Im(1/Z) / Im(u)` positive.
    pub fn z_transform(&self, u: Complex64) -> Complex64 {
        match *self {
            AutocorrKernel::White => (u + 1.0) / u,
            AutocorrKernel::Exponential { .. } => {
                let eta = self.eta().expect("exponential kernel");
                let mut w = (Complex64::new(eta * eta - 1.0, 0.0) + (u * u).inv()).sqrt();
                if w.im * u.im > 0.0 || (w.im == 0.0 && w.re < 0.0) {
                    w = -w;
                }
                eta + w
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AutocorrKernel::Exponential { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")))
            }
            _ => Ok(()),
        }
    }
}

/// Autocorrelation-aware shrinkage with the exponential-decay kernel.
pub fn bj_shrink(e: &SymmetricMatrix, q: f64, tau: f64, reg: Regularization) -> Result<ShrinkageResult> {
    bj_shrink_with_kernel(e, q, AutocorrKernel::Exponential { tau }, reg)
}

/// `xi_k = lambda_k Im(1 / Z(u_k)) / Im(u_k)` for an arbitrary kernel.
pub fn bj_shrink_with_kernel(
    e: &SymmetricMatrix,
    q: f64,
    kernel: AutocorrKernel,
    reg: Regularization,
) -> Result<ShrinkageResult> {
    check_q(q)?;
    reg.validate()?;
    kernel.validate()?;
    let decomp = linalg::sym_eigen(e)?;
    let (xi, fallbacks) = bj_eigenvalues(decomp.eigenvalues(), q, kernel, reg);
    ShrinkageResult::assemble(decomp, xi, fallbacks)
}

/// Shrunk values and the number of `Im u_k` fallbacks.
pub fn bj_eigenvalues(eigenvalues: &[f64], q: f64, kernel: AutocorrKernel, reg: Regularization) -> (Vec<f64>, usize) {
    let mut fallbacks = 0;
    let xi = eigenvalues
        .iter()
        .zip(spectral_u(eigenvalues, q, reg))
        .map(|(&l, u)| {
            if u.im.abs() < IM_U_FLOOR {
                fallbacks += 1;
                l
            } else {
                l * kernel.z_transform(u).inv().im / u.im
            }
        })
        .collect();
    (xi, fallbacks)
}

/// Geometry of the moving-window cross-validation: fold `mu` trains on
/// columns `[mu * t_out, mu * t_out + t_train)` and tests on the following
/// `t_out` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MwcvPlan {
    pub t_total: usize,
    pub t_train: usize,
    pub t_out: usize,
}

impl MwcvPlan {
    pub fn new(t_total: usize, t_train: usize, t_out: usize) -> Result<Self> {
        let plan = Self { t_total, t_train, t_out };
        plan.validate()?;
        Ok(plan)
    }

    /// `t_total = multiplier * n`, `t_train = n`, `t_out` as given.
    pub fn from_multiplier(n: usize, multiplier: usize, t_out: usize) -> Result<Self> {
        Self::new(multiplier * n, n, t_out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_train == 0 || self.t_out == 0 {
            return Err(Error::InvalidPlan("train and test lengths must be positive".into()));
        }
        if self.t_total <= self.t_train {
            return Err(Error::InvalidPlan(format!(
                "total length {} leaves no test window after training length {}",
                self.t_total, self.t_train
            )));
        }
        if !(self.t_total - self.t_train).is_multiple_of(self.t_out) {
            return Err(Error::InvalidPlan(format!(
                "(T_total - T) = {} is not divisible by T_out = {}",
                self.t_total - self.t_train,
                self.t_out
            )));
        }
        Ok(())
    }

    pub fn folds(&self) -> usize {
        (self.t_total - self.t_train) / self.t_out
    }
}

/// Cross-validated oracle eigenvalues over the folds of `plan` applied to a
/// `p x t_total` series.
pub fn mwcv_shrink(series: &DMatrix<f64>, plan: MwcvPlan) -> Result<ShrinkageResult> {
    plan.validate()?;
    if series.ncols() != plan.t_total {
        return Err(Error::DimensionMismatch { expected: plan.t_total, actual: series.ncols() });
    }
    let folds: Vec<(SymmetricMatrix, SymmetricMatrix)> = (0..plan.folds())
        .map(|mu| {
            let start = mu * plan.t_out;
            let train = second_moment(&series.columns(start, plan.t_train).into_owned());
            let test = second_moment(&series.columns(start + plan.t_train, plan.t_out).into_owned());
            (train, test)
        })
        .collect();
    oracle_from_folds(&folds)
}

/// `xi_i = (1/K) sum_mu v_i' E_test v_i` with `v_i` the `i`-th ascending
/// eigenvector of each fold's training matrix. The result carries the last
/// fold's training decomposition.
pub fn oracle_from_folds(folds: &[(SymmetricMatrix, SymmetricMatrix)]) -> Result<ShrinkageResult> {
    let Some((first_train, _)) = folds.first() else {
        return Err(Error::InvalidPlan("no folds".into()));
    };
    let p = first_train.dim();
    for (train, test) in folds {
        for m in [train, test] {
            if m.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, actual: m.dim() });
            }
        }
    }
    let per_fold: Vec<(Vec<f64>, SpectralDecomposition)> = folds
        .par_iter()
        .map(|(train, test)| {
            let decomp = linalg::sym_eigen(train)?;
            let projected = test.as_matrix() * &decomp.eigenvectors;
            let quotients = (0..p).map(|i| decomp.eigenvectors.column(i).dot(&projected.column(i))).collect();
            Ok((quotients, decomp))
        })
        .collect::<Result<_>>()?;

    let mut sum = vec![0.0; p];
    let mut carry = vec![0.0; p];
    for (quotients, _) in &per_fold {
        for i in 0..p {
            let y = quotients[i] - carry[i];
            let t = sum[i] + y;
            carry[i] = (t - sum[i]) - y;
            sum[i] = t;
        }
    }
    let k = folds.len() as f64;
    let xi = sum.into_iter().map(|s| s / k).collect();
    let decomp = per_fold.into_iter().last().expect("at least one fold").1;
    ShrinkageResult::assemble(decomp, xi, 0)
}
