//! Seeded Monte Carlo experiments over the estimators.
//!
//! Realization `i` draws its sample (and, for the cross-validated
//! estimators, an independent long series) from substreams keyed by
//! `(seed, i)`. Stability is measured on the disjoint pairs `(2t, 2t + 1)`.
//! Work units are pairs; results are reduced in realization order, so
//! reports do not depend on the worker count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hce;
use crate::linalg::{self, SpectralDecomposition, SymmetricMatrix};
use crate::losses::{self, LossKind, PreparedMatrix};
use crate::models::{self, Autocorrelation, ModelSpec, PopulationModel, PresetCase};
use crate::rie::{self, AutocorrKernel, MwcvPlan, Regularization};

/// Fewer stability pairs than this raises a report warning.
pub const LOW_SAMPLE_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    Rmt,
    Alca,
    Lp,
    Bj,
    Mwcv,
    TwoStepI,
    TwoStepII,
    TwoStepIII,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::Naive,
        EstimatorKind::Rmt,
        EstimatorKind::Alca,
        EstimatorKind::Lp,
        EstimatorKind::Bj,
        EstimatorKind::Mwcv,
        EstimatorKind::TwoStepI,
        EstimatorKind::TwoStepII,
        EstimatorKind::TwoStepIII,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Rmt => "rmt",
            EstimatorKind::Alca => "alca",
            EstimatorKind::Lp => "lp",
            EstimatorKind::Bj => "bj",
            EstimatorKind::Mwcv => "mwcv",
            EstimatorKind::TwoStepI => "two-step-i",
            EstimatorKind::TwoStepII => "two-step-ii",
            EstimatorKind::TwoStepIII => "two-step-iii",
        }
    }

    /// Row label used in tables.
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Rmt => "RMT",
            EstimatorKind::Alca => "ALCA",
            EstimatorKind::Lp => "LP",
            EstimatorKind::Bj => "BJ",
            EstimatorKind::Mwcv => "mwcv",
            EstimatorKind::TwoStepI => "2-step (I)",
            EstimatorKind::TwoStepII => "2-step (II)",
            EstimatorKind::TwoStepIII => "2-step (III)",
        }
    }

    /// Needs a long series rather than the sample matrix alone.
    pub fn needs_series(&self) -> bool {
        matches!(self, EstimatorKind::Mwcv | EstimatorKind::TwoStepI)
    }

    pub fn is_rotationally_invariant(&self) -> bool {
        matches!(
            self,
            EstimatorKind::Naive | EstimatorKind::Rmt | EstimatorKind::Lp | EstimatorKind::Bj | EstimatorKind::Mwcv
        )
    }

    pub fn uses_clustering(&self) -> bool {
        !self.is_rotationally_invariant()
    }

    /// The default line-up: the autocorrelation-aware estimators are only
    /// run where the model has memory.
    pub fn defaults_for(case: PresetCase) -> Vec<EstimatorKind> {
        use EstimatorKind::*;
        match case {
            PresetCase::Case1 | PresetCase::Case2 => vec![Naive, Rmt, Alca, Lp, Mwcv, TwoStepI, TwoStepIII],
            PresetCase::Case3 => vec![Naive, Rmt, Alca, Lp, Bj, Mwcv, TwoStepI, TwoStepII, TwoStepIII],
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match key.as_str() {
            "clip" | "clipping" => Some(EstimatorKind::Rmt),
            "two-step-1" | "2-step-i" => Some(EstimatorKind::TwoStepI),
            "two-step-2" | "2-step-ii" => Some(EstimatorKind::TwoStepII),
            "two-step-3" | "2-step-iii" => Some(EstimatorKind::TwoStepIII),
            _ => None,
        };
        alias
            .or_else(|| EstimatorKind::ALL.into_iter().find(|k| k.name() == key))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MwcvSettings {
    /// `T_total = multiplier * n`.
    pub t_total_multiplier: usize,
    /// Test window length; defaults to `n`.
    #[serde(default)]
    pub t_out: Option<usize>,
}

impl Default for MwcvSettings {
    fn default() -> Self {
        Self { t_total_multiplier: 10, t_out: None }
    }
}

impl MwcvSettings {
    pub fn plan(&self, n: usize) -> Result<MwcvPlan> {
        MwcvPlan::from_multiplier(n, self.t_total_multiplier, self.t_out.unwrap_or(n))
    }
}

/// Estimator parameters; `None` picks the default for the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimatorParams {
    /// Aspect ratio; default `p / n`.
    #[serde(default)]
    pub q: Option<f64>,
    /// Kernel decay length; default the model's tau, else 3.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Stieltjes offset; default `p^{-1/2}`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Drop the self pole when evaluating the Stieltjes transform.
    #[serde(default)]
    pub exclude_self: bool,
    #[serde(default)]
    pub mwcv: MwcvSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Name of the preset `model` came from, if any.
    #[serde(default)]
    pub preset: Option<PresetCase>,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub losses: Vec<LossKind>,
    #[serde(default)]
    pub params: EstimatorParams,
    #[serde(default)]
    pub standardize: bool,
    /// Apply the `2/p` factor to the KL family.
    #[serde(default = "default_true")]
    pub scaled_kl: bool,
    /// Worker count; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Preset model with its default estimators and all six losses.
    pub fn preset(case: PresetCase, p: usize, n: usize, m: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            model: models::preset_model(case, p)?,
            preset: Some(case),
            n,
            m,
            seed,
            estimators: EstimatorKind::defaults_for(case),
            losses: LossKind::ALL.to_vec(),
            params: EstimatorParams::default(),
            standardize: false,
            scaled_kl: true,
            workers: None,
        })
    }

    pub fn p(&self) -> usize {
        self.model.p
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.m < 2 {
            return Err(Error::InvalidParameter(format!("m must be >= 2 to form a stability pair, got {}", self.m)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators requested".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be positive".into()));
        }
        let ctx = self.context()?;
        if self.estimators.iter().any(|e| e.needs_series()) {
            ctx.plan()?;
        }
        Ok(())
    }

    fn context(&self) -> Result<Context> {
        let p = self.p();
        let q = self.params.q.unwrap_or(p as f64 / self.n as f64);
        rie::check_q(q)?;
        let tau = self.params.tau.unwrap_or(match self.model.autocorr {
            Autocorrelation::Exponential { tau } => tau,
            Autocorrelation::Identity => models::PRESET_TAU,
        });
        let kernel = AutocorrKernel::Exponential { tau };
        kernel.validate()?;
        let mut reg = Regularization::for_dim(p);
        if let Some(eps) = self.params.epsilon {
            reg.epsilon = eps;
        }
        reg.include_self = !self.params.exclude_self;
        reg.validate()?;
        Ok(Context { q, kernel, reg, mwcv: self.params.mwcv, n: self.n })
    }

    fn pool(&self) -> Result<Option<rayon::ThreadPool>> {
        self.workers
            .map(|w| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Copy)]
struct Context {
    q: f64,
    kernel: AutocorrKernel,
    reg: Regularization,
    mwcv: MwcvSettings,
    n: usize,
}

impl Context {
    fn plan(&self) -> Result<MwcvPlan> {
        self.mwcv.plan(self.n)
    }
}

/// Mean and sample standard deviation over successful realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
    pub failed: usize,
}

impl Stats {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let ok: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
        let failed = values.len() - ok.len();
        let count = ok.len();
        if count == 0 {
            return Self { mean: None, std: None, count, failed };
        }
        let mean = ok.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: Some(mean), std: Some(std), count, failed }
    }

    pub fn std_error(&self) -> Option<f64> {
        self.std.map(|s| s / (self.count as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimator: EstimatorKind,
    pub loss: LossKind,
    /// `L(C, Xi_i)` over realizations.
    pub vs_population: Stats,
    /// `L(Xi_2t, Xi_2t+1)` over pairs.
    pub stability: Stats,
}

/// Rank-wise profiles; index 0 is the smallest eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorProfile {
    pub estimator: EstimatorKind,
    pub lambda_mean: Vec<f64>,
    pub lambda_std: Vec<f64>,
    pub xi_mean: Vec<f64>,
    pub xi_std: Vec<f64>,
    pub ipr_mean: Vec<f64>,
    pub ipr_std: Vec<f64>,
    pub realizations: usize,
    pub failures: usize,
    /// Clamped or fallback shrinkage events summed over realizations.
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_time_secs: f64,
    pub pairs: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metadata: Metadata,
    pub population_eigenvalues: Vec<f64>,
    pub population_ipr: Vec<f64>,
    pub cells: Vec<Cell>,
    pub profiles: Vec<EstimatorProfile>,
}

impl BenchReport {
    pub fn cell(&self, estimator: EstimatorKind, loss: LossKind) -> Option<&Cell> {
        self.cells.iter().find(|c| c.estimator == estimator && c.loss == loss)
    }

    pub fn profile(&self, estimator: EstimatorKind) -> Option<&EstimatorProfile> {
        self.profiles.iter().find(|p| p.estimator == estimator)
    }

    pub fn estimators(&self) -> &[EstimatorKind] {
        &self.metadata.config.estimators
    }

    pub fn losses(&self) -> &[LossKind] {
        &self.metadata.config.losses
    }
}

/// One estimator applied to one realization.
struct Filtered {
    prepared: PreparedMatrix,
    lambda: Vec<f64>,
    xi: Vec<f64>,
    warnings: usize,
}

impl Filtered {
    fn rotational(decomp: &SpectralDecomposition, xi: Vec<f64>, warnings: usize) -> Result<Self> {
        let mut clamped = 0;
        let xi: Vec<f64> = xi
            .into_iter()
            .map(|x| {
                if x < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    x
                }
            })
            .collect();
        Ok(Self {
            prepared: PreparedMatrix::from_spectrum(&decomp.eigenvectors, &xi)?,
            lambda: decomp.eigenvalues().to_vec(),
            xi,
            warnings: warnings + clamped,
        })
    }

    fn clustered(lambda: &[f64], filtered: &SymmetricMatrix) -> Result<Self> {
        let prepared = PreparedMatrix::new(filtered)?;
        let xi = prepared.decomposition().eigenvalues().to_vec();
        Ok(Self { prepared, lambda: lambda.to_vec(), xi, warnings: 0 })
    }

    fn ipr(&self) -> Vec<f64> {
        let d = self.prepared.decomposition();
        (0..d.dim()).map(|i| linalg::ipr(d.eigenvector(i)).unwrap_or(f64::NAN)).collect()
    }
}

struct Realization {
    outputs: Vec<Result<Filtered>>,
}

fn draw(config: &ExperimentConfig, model: &PopulationModel, ctx: &Context, index: u64) -> Result<Realization> {
    let sample = models::generate_sample(model, config.n, config.seed, index, config.standardize)?;
    let e = &sample.e;
    let decomp = linalg::sym_eigen(e)?;
    let lambda = decomp.eigenvalues().to_vec();

    let mwcv = if config.estimators.iter().any(|k| k.needs_series()) {
        let plan = ctx.plan()?;
        let mut series = models::generate_series(model, plan.t_total, config.seed, index)?;
        if config.standardize {
            models::standardize_rows(&mut series);
        }
        Some(rie::mwcv_shrink(&series, plan))
    } else {
        None
    };
    let mwcv_result =
        || -> Result<&rie::ShrinkageResult> { mwcv.as_ref().expect("series drawn").as_ref().map_err(Clone::clone) };

    let lp_xi = || rie::lp_eigenvalues(&lambda, ctx.q, ctx.reg);
    let bj_xi = || rie::bj_eigenvalues(&lambda, ctx.q, ctx.kernel, ctx.reg);
    let two_step = |xi: Vec<f64>| -> Result<Filtered> {
        let first = linalg::reconstruct(&decomp, &xi)?;
        Filtered::clustered(&lambda, &hce::second_step(&first)?)
    };

    let outputs = config
        .estimators
        .iter()
        .map(|kind| match kind {
            EstimatorKind::Naive => Filtered::rotational(&decomp, lambda.clone(), 0),
            EstimatorKind::Rmt => {
                let edge = rie::marchenko_pastur_edge(ctx.q);
                let keep = lambda.iter().filter(|&&l| l >= edge).count();
                Filtered::rotational(&decomp, rie::clipped_eigenvalues(&lambda, keep), 0)
            }
            EstimatorKind::Lp => Filtered::rotational(&decomp, lp_xi(), 0),
            EstimatorKind::Bj => {
                let (xi, fallbacks) = bj_xi();
                Filtered::rotational(&decomp, xi, fallbacks)
            }
            EstimatorKind::Mwcv => {
                let r = mwcv_result()?;
                Filtered::rotational(&r.decomp, r.xi.clone(), r.warnings())
            }
            EstimatorKind::Alca => Filtered::clustered(&lambda, &hce::alca_filter(e)?),
            EstimatorKind::TwoStepI => Filtered::clustered(&lambda, &hce::second_step(&mwcv_result()?.filtered)?),
            EstimatorKind::TwoStepII => two_step(bj_xi().0),
            EstimatorKind::TwoStepIII => two_step(lp_xi()),
        })
        .collect();
    Ok(Realization { outputs })
}

/// `(lambda, xi, ipr, warnings)` of one estimator on one realization.
type ProfileRow = (Vec<f64>, Vec<f64>, Vec<f64>, usize);

/// Per-pair results, in realization order.
struct PairOutcome {
    /// `[realization][estimator][loss]`
    population: Vec<Vec<Vec<Option<f64>>>>,
    /// `[estimator][loss]`; `None` for a trailing unpaired realization.
    stability: Option<Vec<Vec<Option<f64>>>>,
    /// `[realization][estimator]`: `(lambda, xi, ipr, warnings)`.
    profiles: Vec<Vec<Option<ProfileRow>>>,
}

fn run_pair(
    config: &ExperimentConfig,
    model: &PopulationModel,
    population: &PreparedMatrix,
    ctx: &Context,
    first: u64,
) -> Result<PairOutcome> {
    let last = (first + 2).min(config.m as u64);
    let draws: Vec<Realization> = (first..last).map(|i| draw(config, model, ctx, i)).collect::<Result<_>>()?;
    let eval = |kind: LossKind, a: &PreparedMatrix, b: &PreparedMatrix| {
        losses::evaluate(kind, a, b, config.scaled_kl).ok().filter(|v| v.is_finite())
    };

    let population_losses = draws
        .iter()
        .map(|r| {
            r.outputs
                .iter()
                .map(|out| match out {
                    Ok(f) => config.losses.iter().map(|&k| eval(k, population, &f.prepared)).collect(),
                    Err(_) => vec![None; config.losses.len()],
                })
                .collect()
        })
        .collect();

    let stability = (draws.len() == 2).then(|| {
        draws[0]
            .outputs
            .iter()
            .zip(&draws[1].outputs)
            .map(|pair| match pair {
                (Ok(a), Ok(b)) => config.losses.iter().map(|&k| eval(k, &a.prepared, &b.prepared)).collect(),
                _ => vec![None; config.losses.len()],
            })
            .collect()
    });

    let profiles = draws
        .iter()
        .map(|r| {
            r.outputs
                .iter()
                .map(|out| out.as_ref().ok().map(|f| (f.lambda.clone(), f.xi.clone(), f.ipr(), f.warnings)))
                .collect()
        })
        .collect();

    Ok(PairOutcome { population: population_losses, stability, profiles })
}

fn rankwise(rows: &[&Vec<f64>], p: usize) -> (Vec<f64>, Vec<f64>) {
    let stats: Vec<Stats> =
        (0..p).map(|r| Stats::from_values(&rows.iter().map(|row| Some(row[r])).collect::<Vec<_>>())).collect();
    (
        stats.iter().map(|s| s.mean.unwrap_or(f64::NAN)).collect(),
        stats.iter().map(|s| s.std.unwrap_or(f64::NAN)).collect(),
    )
}

fn population_spectrum(model: &PopulationModel) -> Result<(PreparedMatrix, Vec<f64>, Vec<f64>)> {
    let prepared = PreparedMatrix::new(&model.c)?;
    let d = prepared.decomposition();
    let eigenvalues = d.eigenvalues().to_vec();
    let ipr = (0..d.dim()).map(|i| linalg::ipr(d.eigenvector(i))).collect::<Result<_>>()?;
    Ok((prepared, eigenvalues, ipr))
}

fn in_pool<T: Send>(pool: &Option<rayon::ThreadPool>, job: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(pool) => pool.install(job),
        None => job(),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<BenchReport> {
    config.validate()?;
    let started = Instant::now();
    let ctx = config.context()?;
    let model = models::build_population(&config.model)?;
    let (population, population_eigenvalues, population_ipr) = population_spectrum(&model)?;
    let p = config.p();

    let firsts: Vec<u64> = (0..config.m as u64).step_by(2).collect();
    let pool = config.pool()?;
    let outcomes: Vec<PairOutcome> = in_pool(&pool, || {
        firsts.par_iter().map(|&first| run_pair(config, &model, &population, &ctx, first)).collect::<Result<_>>()
    })?;

    let pairs = outcomes.iter().filter(|o| o.stability.is_some()).count();
    let mut cells = Vec::with_capacity(config.estimators.len() * config.losses.len());
    for (e, &estimator) in config.estimators.iter().enumerate() {
        for (l, &loss) in config.losses.iter().enumerate() {
            let vs: Vec<Option<f64>> = outcomes.iter().flat_map(|o| o.population.iter().map(|r| r[e][l])).collect();
            let st: Vec<Option<f64>> = outcomes.iter().filter_map(|o| o.stability.as_ref().map(|s| s[e][l])).collect();
            cells.push(Cell {
                estimator,
                loss,
                vs_population: Stats::from_values(&vs),
                stability: Stats::from_values(&st),
            });
        }
    }

    let mut profiles = Vec::with_capacity(config.estimators.len());
    for (e, &estimator) in config.estimators.iter().enumerate() {
        let rows: Vec<&ProfileRow> =
            outcomes.iter().flat_map(|o| o.profiles.iter().filter_map(|r| r[e].as_ref())).collect();
        let (lambda_mean, lambda_std) = rankwise(&rows.iter().map(|r| &r.0).collect::<Vec<_>>(), p);
        let (xi_mean, xi_std) = rankwise(&rows.iter().map(|r| &r.1).collect::<Vec<_>>(), p);
        let (ipr_mean, ipr_std) = rankwise(&rows.iter().map(|r| &r.2).collect::<Vec<_>>(), p);
        profiles.push(EstimatorProfile {
            estimator,
            lambda_mean,
            lambda_std,
            xi_mean,
            xi_std,
            ipr_mean,
            ipr_std,
            realizations: rows.len(),
            failures: config.m - rows.len(),
            warnings: rows.iter().map(|r| r.3).sum(),
        });
    }

    let mut warnings = Vec::new();
    if pairs < LOW_SAMPLE_PAIRS {
        warnings.push(format!("stability estimated from only {pairs} pair(s)"));
    }
    if config.m % 2 == 1 {
        warnings.push("odd m: the last realization has no stability partner".into());
    }
    for c in cells.iter().filter(|c| c.vs_population.failed + c.stability.failed > 0) {
        warnings.push(format!(
            "{} / {}: {} population and {} stability evaluations failed",
            c.estimator.label(),
            c.loss.label(),
            c.vs_population.failed,
            c.stability.failed
        ));
    }

    Ok(BenchReport {
        metadata: Metadata {
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: started.elapsed().as_secs_f64(),
            pairs,
            warnings,
        },
        population_eigenvalues,
        population_ipr,
        cells,
        profiles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCell {
    pub loss: LossKind,
    pub vs_population: Stats,
    pub stability: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Number of top eigenvalues kept.
    pub k: usize,
    pub cells: Vec<CurveCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub config: ExperimentConfig,
    pub points: Vec<CurvePoint>,
    /// Population eigenvalues above the Marchenko-Pastur edge.
    pub population_spikes: usize,
    /// Mean number of sample eigenvalues above the edge (what clipping keeps).
    pub mean_sample_spikes: f64,
    pub wall_time_secs: f64,
}

impl CurveReport {
    pub fn cell(&self, k: usize, loss: LossKind) -> Option<&CurveCell> {
        self.points.get(k.checked_sub(1)?)?.cells.iter().find(|c| c.loss == loss)
    }

    /// `k` minimizing the mean population loss.
    pub fn argmin(&self, loss: LossKind) -> Option<usize> {
        self.points
            .iter()
            .filter_map(|pt| {
                let mean = pt.cells.iter().find(|c| c.loss == loss)?.vs_population.mean?;
                Some((pt.k, mean))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }
}

/// Loss of the clipping estimator as a function of the number of kept
/// eigenvalues, `k = 1..=p`.
pub fn run_rmt_curve(config: &ExperimentConfig) -> Result<CurveReport> {
    let mut config = config.clone();
    config.estimators = vec![EstimatorKind::Rmt];
    config.validate()?;
    let started = Instant::now();
    let ctx = config.context()?;
    let model = models::build_population(&config.model)?;
    let (population, population_eigenvalues, _) = population_spectrum(&model)?;
    let p = config.p();
    let edge = rie::marchenko_pastur_edge(ctx.q);
    let nl = config.losses.len();

    type PairCurve = (Vec<Vec<Vec<Option<f64>>>>, Option<Vec<Vec<Option<f64>>>>, Vec<usize>);
    let firsts: Vec<u64> = (0..config.m as u64).step_by(2).collect();
    let pool = config.pool()?;
    let outcomes: Vec<PairCurve> = in_pool(&pool, || {
        firsts
            .par_iter()
            .map(|&first| -> Result<PairCurve> {
                let last = (first + 2).min(config.m as u64);
                let decomps: Vec<SpectralDecomposition> = (first..last)
                    .map(|i| {
                        let s = models::generate_sample(&model, config.n, config.seed, i, config.standardize)?;
                        linalg::sym_eigen(&s.e)
                    })
                    .collect::<Result<_>>()?;
                let spikes = decomps.iter().map(|d| d.eigenvalues().iter().filter(|&&l| l >= edge).count()).collect();
                let mut vs = vec![vec![vec![None; nl]; p]; decomps.len()];
                let mut st = (decomps.len() == 2).then(|| vec![vec![None; nl]; p]);
                for k in 1..=p {
                    let prepared: Vec<Option<PreparedMatrix>> = decomps
                        .iter()
                        .map(|d| {
                            let xi = rie::clipped_eigenvalues(d.eigenvalues(), k);
                            PreparedMatrix::from_spectrum(&d.eigenvectors, &xi).ok()
                        })
                        .collect();
                    for (l, &loss) in config.losses.iter().enumerate() {
                        for (r, prep) in prepared.iter().enumerate() {
                            vs[r][k - 1][l] = prep
                                .as_ref()
                                .and_then(|b| losses::evaluate(loss, &population, b, config.scaled_kl).ok());
                        }
                        if let (Some(st), [Some(a), Some(b)]) = (st.as_mut(), prepared.as_slice()) {
                            st[k - 1][l] = losses::evaluate(loss, a, b, config.scaled_kl).ok();
                        }
                    }
                }
                Ok((vs, st, spikes))
            })
            .collect::<Result<_>>()
    })?;

    let points = (1..=p)
        .map(|k| CurvePoint {
            k,
            cells: config
                .losses
                .iter()
                .enumerate()
                .map(|(l, &loss)| {
                    let vs: Vec<Option<f64>> = outcomes.iter().flat_map(|o| o.0.iter().map(|r| r[k - 1][l])).collect();
                    let st: Vec<Option<f64>> =
                        outcomes.iter().filter_map(|o| o.1.as_ref().map(|s| s[k - 1][l])).collect();
                    CurveCell { loss, vs_population: Stats::from_values(&vs), stability: Stats::from_values(&st) }
                })
                .collect(),
        })
        .collect();
    let spikes: Vec<usize> = outcomes.iter().flat_map(|o| o.2.iter().copied()).collect();

    Ok(CurveReport {
        points,
        population_spikes: population_eigenvalues.iter().filter(|&&l| l >= edge).count(),
        mean_sample_spikes: spikes.iter().sum::<usize>() as f64 / spikes.len() as f64,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageProfile {
    pub estimator: EstimatorKind,
    pub lambda_mean: Vec<f64>,
    pub lambda_std: Vec<f64>,
    pub xi_mean: Vec<f64>,
    pub xi_std: Vec<f64>,
    /// Population eigenvalues at matching ranks.
    pub population: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IprProfile {
    pub estimator: EstimatorKind,
    pub ipr_mean: Vec<f64>,
    pub ipr_std: Vec<f64>,
    pub population: Vec<f64>,
}

fn single_estimator_run(config: &ExperimentConfig, estimator: EstimatorKind) -> Result<BenchReport> {
    let mut config = config.clone();
    config.estimators = vec![estimator];
    config.losses.clear();
    run_experiment(&config)
}

impl BenchReport {
    pub fn shrinkage_profile(&self, estimator: EstimatorKind) -> Option<ShrinkageProfile> {
        let p = self.profile(estimator)?;
        Some(ShrinkageProfile {
            estimator,
            lambda_mean: p.lambda_mean.clone(),
            lambda_std: p.lambda_std.clone(),
            xi_mean: p.xi_mean.clone(),
            xi_std: p.xi_std.clone(),
            population: self.population_eigenvalues.clone(),
        })
    }

    pub fn ipr_profile(&self, estimator: EstimatorKind) -> Option<IprProfile> {
        let p = self.profile(estimator)?;
        Some(IprProfile {
            estimator,
            ipr_mean: p.ipr_mean.clone(),
            ipr_std: p.ipr_std.clone(),
            population: self.population_ipr.clone(),
        })
    }
}

/// Rank-wise mean sample and shrunk eigenvalues of one estimator.
pub fn shrinkage_profile(config: &ExperimentConfig, estimator: EstimatorKind) -> Result<ShrinkageProfile> {
    Ok(single_estimator_run(config, estimator)?.shrinkage_profile(estimator).expect("estimator was run"))
}

/// Rank-wise mean IPR of the filtered matrices' eigenvectors.
pub fn ipr_profile(config: &ExperimentConfig, estimator: EstimatorKind) -> Result<IprProfile> {
    Ok(single_estimator_run(config, estimator)?.ipr_profile(estimator).expect("estimator was run"))
}

/// The mwcv estimator on a caller-provided series (external data path).
pub fn mwcv_on_series(series: &DMatrix<f64>, plan: MwcvPlan) -> Result<rie::ShrinkageResult> {
    rie::mwcv_shrink(series, plan)
}
