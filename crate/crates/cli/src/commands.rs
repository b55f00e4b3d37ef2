use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use corrfilter_core::bench::{self, CurveReport, EstimatorKind, ExperimentConfig};
use corrfilter_core::hce::{self, FirstStep};
use corrfilter_core::report::{self, TableFormat};
use corrfilter_core::rie::{self, AutocorrKernel, MwcvPlan, Regularization};
use corrfilter_core::SymmetricMatrix;

use crate::cli::{FilterArgs, RunArgs};
use crate::config::{self, CliConfig, RunPlan};
use crate::data;
use crate::error::{CliError, CliResult};

fn plan_from(args: &RunArgs) -> CliResult<RunPlan> {
    let cfg = match &args.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    config::resolve(&cfg, &args.overrides())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn announce(paths: &[PathBuf]) {
    let mut err = std::io::stderr().lock();
    for p in paths {
        let _ = writeln!(err, "wrote {}", p.display());
    }
}

pub fn benchmark(args: &RunArgs) -> CliResult<Vec<PathBuf>> {
    let plan = plan_from(args)?;
    let report = bench::run_experiment(&plan.experiment).map_err(CliError::runtime)?;
    let stem = format!("benchmark-{}", plan.stem());
    let mut written = Vec::new();
    for fmt in &plan.formats {
        let bytes = report::emit_tables(&report, *fmt).map_err(CliError::runtime)?;
        written.push(write_file(&plan.out_dir, &format!("{stem}.{}", fmt.extension()), &bytes)?);
    }
    let cells = report::emit_cells_csv(&report).map_err(CliError::runtime)?;
    written.push(write_file(&plan.out_dir, &format!("{stem}.cells.csv"), &cells)?);
    announce(&written);
    Ok(written)
}

fn curve_text(curve: &CurveReport) -> String {
    let mut out = String::new();
    let losses: Vec<_> = curve.config.losses.clone();
    out.push_str(&format!("{:>5}", "k"));
    for l in &losses {
        out.push_str(&format!(" {:>13}", l.label()));
    }
    out.push('\n');
    for pt in &curve.points {
        out.push_str(&format!("{:>5}", pt.k));
        for c in &pt.cells {
            out.push_str(&format!(" {:>13.6}", c.vs_population.mean.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "population eigenvalues above the Marchenko-Pastur edge: {}; sample mean: {:.2}\n",
        curve.population_spikes, curve.mean_sample_spikes
    ));
    for l in &losses {
        if let Some(k) = curve.argmin(*l) {
            out.push_str(&format!("argmin {}: k = {k}\n", l.label()));
        }
    }
    out
}

pub fn curve(args: &RunArgs) -> CliResult<Vec<PathBuf>> {
    let plan = plan_from(args)?;
    let curve = bench::run_rmt_curve(&plan.experiment).map_err(CliError::runtime)?;
    let stem = format!("curve-{}", plan.stem());
    let mut written = Vec::new();
    for fmt in &plan.formats {
        let bytes = match fmt {
            TableFormat::Csv => report::emit_curve_csv(&curve).map_err(CliError::runtime)?,
            TableFormat::Json => serde_json::to_vec_pretty(&curve).map_err(CliError::runtime)?,
            TableFormat::Text => curve_text(&curve).into_bytes(),
        };
        written.push(write_file(&plan.out_dir, &format!("{stem}.{}", fmt.extension()), &bytes)?);
    }
    announce(&written);
    Ok(written)
}

pub fn diagnose(args: &RunArgs) -> CliResult<Vec<PathBuf>> {
    let plan = plan_from(args)?;
    let mut experiment: ExperimentConfig = plan.experiment.clone();
    experiment.losses.clear();
    let report = bench::run_experiment(&experiment).map_err(CliError::runtime)?;
    let stem = format!("diagnose-{}", plan.stem());
    let mut written = Vec::new();
    for e in report.estimators() {
        let bytes = report::emit_profile_csv(&report, *e).map_err(CliError::runtime)?;
        written.push(write_file(&plan.out_dir, &format!("{stem}.profile-{}.csv", e.name()), &bytes)?);
    }
    if plan.formats.contains(&TableFormat::Json) {
        let profiles: Vec<_> =
            report.estimators().iter().map(|e| (report.shrinkage_profile(*e), report.ipr_profile(*e))).collect();
        let bytes = serde_json::to_vec_pretty(&serde_json::json!({
            "config": experiment,
            "population_eigenvalues": report.population_eigenvalues,
            "population_ipr": report.population_ipr,
            "profiles": profiles,
        }))
        .map_err(CliError::runtime)?;
        written.push(write_file(&plan.out_dir, &format!("{stem}.profiles.json"), &bytes)?);
    }
    announce(&written);
    Ok(written)
}

/// The last `t_train + K t_out` observations, with `K` as large as fits.
fn mwcv_window(n: usize, t_train: usize, t_out: usize) -> CliResult<(usize, MwcvPlan)> {
    if t_train == 0 || t_out == 0 || t_train + t_out > n {
        return Err(CliError::Usage(format!(
            "mwcv needs 0 < t-train and 0 < t-out with t-train + t-out <= n (got {t_train}, {t_out}, n = {n})"
        )));
    }
    let folds = (n - t_train) / t_out;
    let used = t_train + folds * t_out;
    Ok((n - used, MwcvPlan::new(used, t_train, t_out).map_err(CliError::usage)?))
}

pub fn filter_matrix(d: &data::DataMatrix, args: &FilterArgs) -> CliResult<SymmetricMatrix> {
    let p = d.p();
    let n = d.n();
    let e = d.correlation();
    let q = args.q.unwrap_or(p as f64 / n as f64);
    rie::check_q(q).map_err(CliError::usage)?;
    let mut reg = Regularization::for_dim(p);
    if let Some(eps) = args.epsilon {
        reg.epsilon = eps;
    }
    reg.include_self = !args.exclude_self;
    reg.validate().map_err(CliError::usage)?;
    let tau = args.tau.unwrap_or(corrfilter_core::models::PRESET_TAU);
    AutocorrKernel::Exponential { tau }.validate().map_err(CliError::usage)?;

    let series_plan = || -> CliResult<(nalgebra::DMatrix<f64>, MwcvPlan)> {
        let t_train = args.t_train.ok_or_else(|| CliError::Usage("mwcv needs --t-train".into()))?;
        let (skip, plan) = mwcv_window(n, t_train, args.t_out.unwrap_or(t_train))?;
        if skip > 0 {
            eprintln!("note: dropping the first {skip} observations to fit the fold layout");
        }
        Ok((d.standardized().columns(skip, n - skip).into_owned(), plan))
    };

    let out = match args.estimator {
        EstimatorKind::Naive => rie::naive(&e).map(|r| r.filtered),
        EstimatorKind::Rmt => rie::clip_rmt(&e, q).map(|r| r.filtered),
        EstimatorKind::Lp => rie::lp_shrink(&e, q, reg).map(|r| r.filtered),
        EstimatorKind::Bj => rie::bj_shrink(&e, q, tau, reg).map(|r| r.filtered),
        EstimatorKind::Alca => hce::alca_filter(&e),
        EstimatorKind::Mwcv => {
            let (series, plan) = series_plan()?;
            rie::mwcv_shrink(&series, plan).map(|r| r.filtered)
        }
        EstimatorKind::TwoStepI => {
            let (series, plan) = series_plan()?;
            hce::two_step(&e, FirstStep::Mwcv { series: &series, plan })
        }
        EstimatorKind::TwoStepII => hce::two_step(&e, FirstStep::Bj { q, tau, reg }),
        EstimatorKind::TwoStepIII => hce::two_step(&e, FirstStep::Lp { q, reg }),
    };
    out.map_err(CliError::runtime)
}

pub fn filter(args: &FilterArgs) -> CliResult<Option<PathBuf>> {
    let d = data::read_data(&args.data)?;
    let filtered = filter_matrix(&d, args)?;
    let bytes = data::write_labeled_matrix(&filtered, &d.labels)?;
    match &args.out {
        Some(dir) => {
            let stem = args.data.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
            let path = write_file(dir, &format!("filter-{}-{stem}.csv", args.estimator.name()), &bytes)?;
            announce(std::slice::from_ref(&path));
            Ok(Some(path))
        }
        None => {
            std::io::stdout().write_all(&bytes).map_err(CliError::runtime)?;
            Ok(None)
        }
    }
}
