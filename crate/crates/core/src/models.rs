//! Population models and the multiplicative noise sampler.
//!
//! A population correlation matrix is built from a `p x b` loading matrix
//! `L` whose column `l` is `gamma_l` on the rows of block `l` and zero
//! elsewhere: `C = I + offdiag(L L')`. Samples follow
//! `Y = sqrt(C) X sqrt(A)` with i.i.d. standard normal `X` and an `n x n`
//! autocorrelation matrix `A`, and `E = Y Y' / n`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricMatrix};

/// Loading used by every block of the presets.
pub const PRESET_LOADING: f64 = 0.3;
/// Autocorrelation decay length of preset case 3.
pub const PRESET_TAU: f64 = 3.0;

const CASE1_SIZES: [usize; 12] = [3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 12, 13];
const CASE2_SUBBLOCKS: [[usize; 3]; 3] = [[6, 8, 11], [9, 12, 14], [11, 13, 16]];

const STREAM_SAMPLE: u64 = 0;
const STREAM_SERIES: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    /// First row (0-based) covered by the block.
    pub start: usize,
    pub size: usize,
    pub loading: f64,
}

impl BlockSpec {
    pub fn new(start: usize, size: usize, loading: f64) -> Self {
        Self { start, size, loading }
    }

    pub fn end(&self) -> usize {
        self.start + self.size
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Autocorrelation {
    #[default]
    Identity,
    /// `A_ij = exp(-|i - j| / tau)`.
    Exponential { tau: f64 },
}

impl Autocorrelation {
    /// `coth(1/tau)` for the exponential kernel.
    pub fn eta(&self) -> Option<f64> {
        match *self {
            Autocorrelation::Identity => None,
            Autocorrelation::Exponential { tau } => Some(1.0 / (1.0 / tau).tanh()),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Autocorrelation::Exponential { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(Error::InvalidParameter(format!("autocorrelation tau must be positive, got {tau}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub p: usize,
    #[serde(default)]
    pub blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub autocorr: Autocorrelation,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidDimension("p must be positive".into()));
        }
        for (l, b) in self.blocks.iter().enumerate() {
            if b.size == 0 || b.end() > self.p {
                return Err(Error::InvalidDimension(format!(
                    "block {l} [{}, {}) does not fit in dimension {}",
                    b.start,
                    b.end(),
                    self.p
                )));
            }
            if !(0.0..=1.0).contains(&b.loading) {
                return Err(Error::InvalidParameter(format!("block {l} loading {} outside [0, 1]", b.loading)));
            }
        }
        self.autocorr.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetCase {
    /// Twelve disjoint blocks, no memory.
    Case1,
    /// Three connected components, each a spanning block with three nested
    /// sub-blocks, no memory.
    Case2,
    /// Case 2 with exponential autocorrelation, `tau = 3`.
    Case3,
}

impl PresetCase {
    pub fn name(&self) -> &'static str {
        match self {
            PresetCase::Case1 => "case1",
            PresetCase::Case2 => "case2",
            PresetCase::Case3 => "case3",
        }
    }
}

impl fmt::Display for PresetCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "case1" | "1" => Ok(PresetCase::Case1),
            "case2" | "2" => Ok(PresetCase::Case2),
            "case3" | "3" => Ok(PresetCase::Case3),
            other => Err(Error::InvalidParameter(format!("unknown preset '{other}'"))),
        }
    }
}

/// Splits `p` into parts proportional to `base`, each at least 1, by the
/// largest-remainder rule. Returns `base` unchanged when `p` equals its sum.
fn apportion(base: &[usize], p: usize) -> Result<Vec<usize>> {
    if p < base.len() {
        return Err(Error::InvalidDimension(format!("dimension {p} cannot hold {} blocks", base.len())));
    }
    let total: usize = base.iter().sum();
    let target: Vec<f64> = base.iter().map(|&b| b as f64 * p as f64 / total as f64).collect();
    let mut alloc: Vec<usize> = target.iter().map(|t| (t.floor() as usize).max(1)).collect();
    let mut sum: usize = alloc.iter().sum();
    while sum > p {
        let i = (0..alloc.len())
            .filter(|&i| alloc[i] > 1)
            .max_by(|&a, &b| (alloc[a] as f64 - target[a]).total_cmp(&(alloc[b] as f64 - target[b])).then(b.cmp(&a)))
            .expect("p >= number of parts");
        alloc[i] -= 1;
        sum -= 1;
    }
    while sum < p {
        let i = (0..alloc.len())
            .max_by(|&a, &b| (target[a] - alloc[a] as f64).total_cmp(&(target[b] - alloc[b] as f64)).then(b.cmp(&a)))
            .expect("non-empty layout");
        alloc[i] += 1;
        sum += 1;
    }
    Ok(alloc)
}

/// Concrete block layout of the three benchmark cases, scaled to `p`.
///
/// At `p = 100` case 1 uses block sizes `[3, 4, 5, 6, 7, 8, 9, 10, 11, 12,
/// 12, 13]`; cases 2 and 3 use super-blocks `[25, 35, 40]` tiled by nested
/// sub-blocks `[6, 8, 11]`, `[9, 12, 14]`, `[11, 13, 16]`. Other dimensions
/// rescale these sizes proportionally.
pub fn preset_model(case: PresetCase, p: usize) -> Result<ModelSpec> {
    let gamma = PRESET_LOADING;
    let mut blocks = Vec::with_capacity(12);
    match case {
        PresetCase::Case1 => {
            let sizes = apportion(&CASE1_SIZES, p)?;
            let mut start = 0;
            for size in sizes {
                blocks.push(BlockSpec::new(start, size, gamma));
                start += size;
            }
        }
        PresetCase::Case2 | PresetCase::Case3 => {
            let flat: Vec<usize> = CASE2_SUBBLOCKS.iter().flatten().copied().collect();
            let sizes = apportion(&flat, p)?;
            let mut start = 0;
            for group in sizes.chunks(3) {
                let span: usize = group.iter().sum();
                blocks.push(BlockSpec::new(start, span, gamma));
                let mut sub_start = start;
                for &size in group {
                    blocks.push(BlockSpec::new(sub_start, size, gamma));
                    sub_start += size;
                }
                start += span;
            }
        }
    }
    let autocorr = match case {
        PresetCase::Case3 => Autocorrelation::Exponential { tau: PRESET_TAU },
        _ => Autocorrelation::Identity,
    };
    let spec = ModelSpec { p, blocks, autocorr };
    spec.validate()?;
    Ok(spec)
}

/// Population correlation matrix plus cached square roots for sampling.
#[derive(Debug)]
pub struct PopulationModel {
    pub spec: ModelSpec,
    pub c: SymmetricMatrix,
    sqrt_c: SymmetricMatrix,
    sqrt_a: Mutex<HashMap<usize, Arc<SymmetricMatrix>>>,
}

impl PopulationModel {
    pub fn dim(&self) -> usize {
        self.spec.p
    }

    pub fn sqrt_c(&self) -> &SymmetricMatrix {
        &self.sqrt_c
    }

    /// `sqrt(A)` for `n` observations; `None` when `A = I`.
    pub fn sqrt_autocorrelation(&self, n: usize) -> Result<Option<Arc<SymmetricMatrix>>> {
        if self.spec.autocorr == Autocorrelation::Identity {
            return Ok(None);
        }
        if let Some(hit) = self.sqrt_a.lock().expect("cache poisoned").get(&n) {
            return Ok(Some(Arc::clone(hit)));
        }
        let a = build_autocorrelation(self.spec.autocorr, n)?;
        let root = Arc::new(linalg::sqrt_spd(&a)?);
        let mut cache = self.sqrt_a.lock().expect("cache poisoned");
        Ok(Some(Arc::clone(cache.entry(n).or_insert(root))))
    }
}

pub fn build_population(spec: &ModelSpec) -> Result<PopulationModel> {
    spec.validate()?;
    let p = spec.p;
    let mut c = DMatrix::<f64>::identity(p, p);
    for b in &spec.blocks {
        let g2 = b.loading * b.loading;
        for i in b.start..b.end() {
            for j in b.start..b.end() {
                if i != j {
                    c[(i, j)] += g2;
                }
            }
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            if c[(i, j)] >= 1.0 {
                return Err(Error::InvalidLoading { row: i, col: j, value: c[(i, j)] });
            }
        }
    }
    let c = SymmetricMatrix::new(c)?;
    let sqrt_c = linalg::sqrt_spd(&c)?;
    Ok(PopulationModel { spec: spec.clone(), c, sqrt_c, sqrt_a: Mutex::new(HashMap::new()) })
}

pub fn build_autocorrelation(kind: Autocorrelation, n: usize) -> Result<SymmetricMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("autocorrelation needs n >= 1".into()));
    }
    kind.validate()?;
    match kind {
        Autocorrelation::Identity => Ok(SymmetricMatrix::identity(n)),
        Autocorrelation::Exponential { tau } => {
            let m = DMatrix::from_fn(n, n, |i, j| (-(i.abs_diff(j) as f64) / tau).exp());
            SymmetricMatrix::new(m)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleDraw {
    /// `p x n` observations.
    pub y: DMatrix<f64>,
    pub e: SymmetricMatrix,
    pub seed: u64,
    pub realization_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based generator for one realization: the ChaCha key comes from
/// `seed`, the stream id hashes `(index, purpose)`.
pub fn substream(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(splitmix64(index) ^ purpose.rotate_left(32)));
    rng
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Rescales each row to zero mean and unit variance (divisor `n`).
pub fn standardize_rows(y: &mut DMatrix<f64>) {
    let n = y.ncols() as f64;
    for mut row in y.row_iter_mut() {
        let mean = row.iter().sum::<f64>() / n;
        row.iter_mut().for_each(|x| *x -= mean);
        let sd = (row.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            row.iter_mut().for_each(|x| *x /= sd);
        }
    }
}

/// `Y Y' / n` for a `p x n` observation matrix.
pub fn second_moment(y: &DMatrix<f64>) -> SymmetricMatrix {
    let n = y.ncols() as f64;
    SymmetricMatrix::symmetrized(y * y.transpose() / n)
}

/// One draw of the multiplicative noise model, reproducible from
/// `(seed, realization_index)`.
pub fn generate_sample(
    model: &PopulationModel,
    n: usize,
    seed: u64,
    realization_index: u64,
    standardize: bool,
) -> Result<SampleDraw> {
    if n == 0 {
        return Err(Error::InvalidDimension("sample needs n >= 1".into()));
    }
    let mut rng = substream(seed, realization_index, STREAM_SAMPLE);
    let x = gaussian_matrix(&mut rng, model.dim(), n);
    let mut y = model.sqrt_c.as_matrix() * x;
    if let Some(root) = model.sqrt_autocorrelation(n)? {
        y *= root.as_matrix();
    }
    if standardize {
        standardize_rows(&mut y);
    }
    let e = second_moment(&y);
    Ok(SampleDraw { y, e, seed, realization_index })
}

/// A long `p x len` series from the same model on an independent substream.
///
/// The exponential kernel is realized by the AR(1) recursion
/// `z_t = b z_{t-1} + sqrt(1 - b^2) x_t`, `b = exp(-1/tau)`, whose
/// covariance is exactly `A`; this avoids a `len x len` square root.
pub fn generate_series(model: &PopulationModel, len: usize, seed: u64, realization_index: u64) -> Result<DMatrix<f64>> {
    if len == 0 {
        return Err(Error::InvalidDimension("series needs at least one column".into()));
    }
    let mut rng = substream(seed, realization_index, STREAM_SERIES);
    let mut z = gaussian_matrix(&mut rng, model.dim(), len);
    if let Autocorrelation::Exponential { tau } = model.spec.autocorr {
        let b = (-1.0 / tau).exp();
        let innovation = (1.0 - b * b).sqrt();
        for t in 1..len {
            for i in 0..model.dim() {
                z[(i, t)] = b * z[(i, t - 1)] + innovation * z[(i, t)];
            }
        }
    }
    Ok(model.sqrt_c.as_matrix() * z)
}

/// Eigenvalues of a `p_l x p_l` block with unit diagonal and constant
/// off-diagonal `a`: `(1 + a (p_l - 1), 1 - a)`; the second has
/// multiplicity `p_l - 1`.
pub fn block_eigenvalues(a: f64, p_l: usize) -> (f64, f64) {
    (1.0 + a * (p_l as f64 - 1.0), 1.0 - a)
}

/// Row-sum bounds on the spectral radius of a nested component of size
/// `p_k` built from blocks of loading-squared `a`.
pub fn nested_radius_bounds(a: f64, p_k: usize) -> (f64, f64) {
    let pk = p_k as f64;
    (1.0 + (pk - 1.0) * a, 1.0 + pk * (pk - 1.0) * a)
}

/// Connected components of the graph with an edge wherever `m_ij != 0`.
pub fn connected_components(m: &SymmetricMatrix) -> Vec<Vec<usize>> {
    let p = m.dim();
    let mut label = vec![usize::MAX; p];
    let mut components = Vec::new();
    for root in 0..p {
        if label[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![root];
        label[root] = id;
        let mut cursor = 0;
        while cursor < members.len() {
            let i = members[cursor];
            cursor += 1;
            for (j, l) in label.iter_mut().enumerate() {
                if *l == usize::MAX && m.get(i, j) != 0.0 {
                    *l = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Principal submatrix on `indices`.
pub fn submatrix(m: &SymmetricMatrix, indices: &[usize]) -> SymmetricMatrix {
    let k = indices.len();
    SymmetricMatrix::symmetrized(DMatrix::from_fn(k, k, |a, b| m.get(indices[a], indices[b])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;

    #[test]
    fn single_block() {
        let spec = ModelSpec { p: 3, blocks: vec![BlockSpec::new(0, 3, 0.3)], autocorr: Autocorrelation::Identity };
        let m = build_population(&spec).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.09 };
                assert!((m.c.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn no_blocks_is_identity() {
        let spec = ModelSpec { p: 4, blocks: vec![], autocorr: Autocorrelation::Identity };
        let m = build_population(&spec).unwrap();
        assert_eq!(m.c, SymmetricMatrix::identity(4));
    }

    #[test]
    fn nested_blocks_add_loadings() {
        let spec = ModelSpec {
            p: 4,
            blocks: vec![BlockSpec::new(0, 4, 0.3), BlockSpec::new(0, 2, 0.3)],
            autocorr: Autocorrelation::Identity,
        };
        let m = build_population(&spec).unwrap();
        assert!((m.c.get(0, 1) - 0.18).abs() < 1e-15);
        assert!((m.c.get(2, 3) - 0.09).abs() < 1e-15);
        assert!((m.c.get(0, 3) - 0.09).abs() < 1e-15);
        assert_eq!(m.c.get(1, 1), 1.0);
    }

    #[test]
    fn overlapping_blocks_rejected_when_correlation_reaches_one() {
        let spec = ModelSpec {
            p: 3,
            blocks: vec![BlockSpec::new(0, 2, 0.8), BlockSpec::new(0, 2, 0.8)],
            autocorr: Autocorrelation::Identity,
        };
        assert!(matches!(build_population(&spec), Err(Error::InvalidLoading { .. })));
    }

    #[test]
    fn spec_validation() {
        let out_of_bounds =
            ModelSpec { p: 3, blocks: vec![BlockSpec::new(2, 2, 0.3)], autocorr: Autocorrelation::Identity };
        assert!(matches!(out_of_bounds.validate(), Err(Error::InvalidDimension(_))));
        let bad_tau = ModelSpec { p: 3, blocks: vec![], autocorr: Autocorrelation::Exponential { tau: 0.0 } };
        assert!(matches!(bad_tau.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn presets_at_p100() {
        let c1 = preset_model(PresetCase::Case1, 100).unwrap();
        assert_eq!(c1.blocks.len(), 12);
        let sizes: Vec<usize> = c1.blocks.iter().map(|b| b.size).collect();
        assert_eq!(sizes, CASE1_SIZES);
        assert_eq!(sizes.iter().sum::<usize>(), 100);

        let c2 = preset_model(PresetCase::Case2, 100).unwrap();
        assert_eq!(c2.blocks.len(), 12);
        let spans: Vec<usize> = c2.blocks.iter().step_by(4).map(|b| b.size).collect();
        assert_eq!(spans, vec![25, 35, 40]);
        let m = build_population(&c2).unwrap();
        assert_eq!(connected_components(&m.c).len(), 3);

        let c3 = preset_model(PresetCase::Case3, 100).unwrap();
        assert_eq!(c3.autocorr, Autocorrelation::Exponential { tau: 3.0 });
        let eta = c3.autocorr.eta().unwrap();
        assert!((eta - 1.0 / (1.0f64 / 3.0).tanh()).abs() < 1e-12, "{eta}");
        assert!((eta - 3.11).abs() < 5e-3);
    }

    #[test]
    fn presets_scale_and_reject_tiny_dimensions() {
        for p in [12, 20, 40, 60, 500] {
            let spec = preset_model(PresetCase::Case1, p).unwrap();
            assert_eq!(spec.blocks.iter().map(|b| b.size).sum::<usize>(), p);
        }
        for p in [9, 20, 60, 500] {
            let spec = preset_model(PresetCase::Case2, p).unwrap();
            assert_eq!(spec.blocks.iter().step_by(4).map(|b| b.size).sum::<usize>(), p);
        }
        assert!(matches!(preset_model(PresetCase::Case1, 11), Err(Error::InvalidDimension(_))));
        assert!(matches!(preset_model(PresetCase::Case2, 8), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn autocorrelation_entries() {
        assert_eq!(build_autocorrelation(Autocorrelation::Identity, 5).unwrap(), SymmetricMatrix::identity(5));
        let a = build_autocorrelation(Autocorrelation::Exponential { tau: 3.0 }, 6).unwrap();
        assert!((a.get(0, 3) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((a.get(2, 5) - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(a.get(4, 4), 1.0);
        assert!(sym_eigen(&a).unwrap().min_eigenvalue() > 0.0);
        assert!(build_autocorrelation(Autocorrelation::Exponential { tau: -1.0 }, 3).is_err());
    }

    #[test]
    fn block_formulas() {
        let (top, bulk) = block_eigenvalues(0.09, 10);
        assert!((top - 1.81).abs() < 1e-14 && (bulk - 0.91).abs() < 1e-14);
        assert_eq!(block_eigenvalues(0.0, 7), (1.0, 1.0));
        let (top, _) = block_eigenvalues(0.09, 13);
        assert!((top - 2.08).abs() < 1e-14);
        let block = SymmetricMatrix::new(DMatrix::from_fn(13, 13, |i, j| if i == j { 1.0 } else { 0.09 })).unwrap();
        let d = sym_eigen(&block).unwrap();
        assert!((d.max_eigenvalue() - top).abs() < 1e-10);

        let (lo, hi) = nested_radius_bounds(0.09, 30);
        assert!((lo - 3.61).abs() < 1e-12 && (hi - 79.3).abs() < 1e-12);
        let (lo, hi) = nested_radius_bounds(0.09, 2);
        assert!((lo - 1.09).abs() < 1e-14 && (hi - 1.18).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_deterministic_and_rank_one_for_single_observation() {
        let model = build_population(&preset_model(PresetCase::Case3, 20).unwrap()).unwrap();
        let a = generate_sample(&model, 30, 11, 4, false).unwrap();
        let b = generate_sample(&model, 30, 11, 4, false).unwrap();
        assert_eq!(a.e, b.e);
        let c = generate_sample(&model, 30, 11, 5, false).unwrap();
        assert_ne!(a.e, c.e);

        let one = generate_sample(&model, 1, 3, 0, false).unwrap();
        let d = sym_eigen(&one.e).unwrap();
        let scale = d.max_eigenvalue();
        let nonzero = d.eigenvalues().iter().filter(|l| l.abs() > 1e-10 * scale).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn standardized_sample_has_unit_diagonal() {
        let model = build_population(&preset_model(PresetCase::Case1, 20).unwrap()).unwrap();
        let s = generate_sample(&model, 50, 1, 0, true).unwrap();
        for d in s.e.diagonal() {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn series_is_deterministic_and_independent_of_sample_stream() {
        let model = build_population(&preset_model(PresetCase::Case3, 12).unwrap()).unwrap();
        let a = generate_series(&model, 40, 9, 2).unwrap();
        assert_eq!(a, generate_series(&model, 40, 9, 2).unwrap());
        let s = generate_sample(&model, 40, 9, 2, false).unwrap();
        assert_ne!(a.column(0), s.y.column(0));
    }
}
