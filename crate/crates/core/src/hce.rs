//! Hierarchical clustering filter and the two-step composites.
//!
//! The filter runs average-linkage agglomeration on `D = 1 - E` and returns
//! `1 - rho`, where `rho` is the cophenetic (merge-height) ultrametric of the
//! resulting dendrogram.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::rie::{self, MwcvPlan, Regularization};

const CORRELATION_SLACK: f64 = 1e-12;

/// Symmetric dissimilarity with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissimilarity(DMatrix<f64>);

impl Dissimilarity {
    /// `D_ij = 1 - E_ij` off the diagonal, `D_ii = 0`.
    pub fn from_correlation(e: &SymmetricMatrix) -> Self {
        let p = e.dim();
        Self(DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { 1.0 - e.get(i, j) }))
    }

    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() || d.nrows() == 0 {
            return Err(Error::InvalidMatrix("dissimilarity must be square and non-empty".into()));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite dissimilarity".into()));
        }
        let p = d.nrows();
        for i in 0..p {
            if d[(i, i)] != 0.0 {
                return Err(Error::InvalidMatrix(format!("non-zero self-dissimilarity at {i}")));
            }
            for j in (i + 1)..p {
                if d[(i, j)] != d[(j, i)] {
                    return Err(Error::InvalidMatrix(format!("asymmetric dissimilarity at ({i}, {j})")));
                }
            }
        }
        Ok(Self(d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Merge of clusters `a < b` into cluster `id` at `height`. Leaves are
/// clusters `0..p`; the `t`-th merge creates cluster `p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub id: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serializes")
    }
}

/// Average-linkage agglomerative clustering.
///
/// Cluster distances follow the Lance-Williams recurrence
/// `d(k, a+b) = (n_a d(k,a) + n_b d(k,b)) / (n_a + n_b)`, which equals the
/// mean pairwise leaf dissimilarity. Among equally distant pairs the one
/// with the lexicographically smallest `(min id, max id)` merges first.
pub fn average_linkage(d: &Dissimilarity) -> Result<Dendrogram> {
    let p = d.dim();
    if d.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite dissimilarity".into()));
    }
    let mut dist = d.0.clone();
    let mut ids: Vec<usize> = (0..p).collect();
    let mut sizes = vec![1usize; p];
    let mut active: Vec<usize> = (0..p).collect();
    let mut merges = Vec::with_capacity(p.saturating_sub(1));
    let mut floor = f64::NEG_INFINITY;

    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (x, &sa) in active.iter().enumerate() {
            for &sb in &active[x + 1..] {
                let h = dist[(sa, sb)];
                let (lo, hi) = (ids[sa].min(ids[sb]), ids[sa].max(ids[sb]));
                let better = match best {
                    None => true,
                    Some((bh, blo, bhi, _, _)) => h < bh || (h == bh && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((h, lo, hi, sa, sb));
                }
            }
        }
        let (h, lo, hi, sa, sb) = best.expect("at least two active clusters");
        let (na, nb) = (sizes[sa] as f64, sizes[sb] as f64);
        for &k in &active {
            if k != sa && k != sb {
                let v = (na * dist[(k, sa)] + nb * dist[(k, sb)]) / (na + nb);
                dist[(k, sa)] = v;
                dist[(sa, k)] = v;
            }
        }
        // Average linkage is monotone; the max only absorbs rounding.
        floor = floor.max(h);
        let id = p + merges.len();
        sizes[sa] += sizes[sb];
        ids[sa] = id;
        active.retain(|&s| s != sb);
        merges.push(Merge { a: lo, b: hi, height: floor, id, size: sizes[sa] });
    }
    Ok(Dendrogram { leaves: p, merges })
}

/// Ultrametric of merge heights.
#[derive(Debug, Clone, PartialEq)]
pub struct CopheneticMatrix(DMatrix<f64>);

impl CopheneticMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// First triple violating `rho_ij <= max(rho_ik, rho_kj) + tol`.
    pub fn ultrametric_violation(&self, tol: f64) -> Option<(usize, usize, usize)> {
        let p = self.dim();
        for i in 0..p {
            for j in 0..p {
                for k in 0..p {
                    if self.get(i, j) > self.get(i, k).max(self.get(k, j)) + tol {
                        return Some((i, j, k));
                    }
                }
            }
        }
        None
    }
}

pub fn cophenetic(dend: &Dendrogram) -> CopheneticMatrix {
    let p = dend.leaves;
    let mut rho = DMatrix::zeros(p, p);
    let mut members: Vec<Vec<usize>> = (0..p).map(|i| vec![i]).collect();
    for m in &dend.merges {
        let a = std::mem::take(&mut members[m.a]);
        let b = std::mem::take(&mut members[m.b]);
        for &i in &a {
            for &j in &b {
                rho[(i, j)] = m.height;
                rho[(j, i)] = m.height;
            }
        }
        let mut joined = a;
        joined.extend(b);
        members.push(joined);
    }
    CopheneticMatrix(rho)
}

/// Average-linkage filter: `Xi_ij = 1 - rho_ij`, unit diagonal.
pub fn alca_filter(e: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let p = e.dim();
    for i in 0..p {
        for j in 0..p {
            if i != j && e.get(i, j) > 1.0 + CORRELATION_SLACK {
                return Err(Error::InvalidCorrelation { row: i, col: j, value: e.get(i, j) });
            }
        }
    }
    let dend = average_linkage(&Dissimilarity::from_correlation(e))?;
    let rho = cophenetic(&dend);
    SymmetricMatrix::new(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 1.0 - rho.get(i, j) }))
}

/// `R_ij / sqrt(R_ii R_jj)`.
pub fn unit_diagonal(r: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let diag = r.diagonal();
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, d)| **d <= 0.0) {
        return Err(Error::DegenerateFirstStep { index, value });
    }
    let scale: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    let p = r.dim();
    Ok(SymmetricMatrix::symmetrized(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            r.get(i, j) / (scale[i] * scale[j])
        }
    })))
}

/// Rescale a first-step estimate to unit diagonal, then apply the
/// hierarchical filter.
pub fn second_step(first: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    alca_filter(&unit_diagonal(first)?)
}

/// Shrinkage stage of a two-step estimator.
#[derive(Debug, Clone, Copy)]
pub enum FirstStep<'a> {
    /// Identity first step; reduces the composite to [`alca_filter`].
    Naive,
    /// Cross-validated oracle on a series; the sample matrix is unused.
    Mwcv {
        series: &'a DMatrix<f64>,
        plan: MwcvPlan,
    },
    Bj {
        q: f64,
        tau: f64,
        reg: Regularization,
    },
    Lp {
        q: f64,
        reg: Regularization,
    },
}

pub fn two_step(e: &SymmetricMatrix, first: FirstStep<'_>) -> Result<SymmetricMatrix> {
    let r = match first {
        FirstStep::Naive => e.clone(),
        FirstStep::Mwcv { series, plan } => rie::mwcv_shrink(series, plan)?.filtered,
        FirstStep::Bj { q, tau, reg } => rie::bj_shrink(e, q, tau, reg)?.filtered,
        FirstStep::Lp { q, reg } => rie::lp_shrink(e, q, reg)?.filtered,
    };
    second_step(&r)
}
