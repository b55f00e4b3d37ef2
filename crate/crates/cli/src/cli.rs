use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use corrfilter_core::bench::EstimatorKind;
use corrfilter_core::losses::LossKind;
use corrfilter_core::models::PresetCase;
use corrfilter_core::report::TableFormat;

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "corrfilter", version, about = "Correlation matrix filtering and Monte Carlo benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every estimator over m realizations and write loss tables.
    Benchmark(RunArgs),
    /// Loss of eigenvalue clipping as a function of the number kept.
    Curve(RunArgs),
    /// Filter a CSV of observations (rows = time, columns = series).
    Filter(FilterArgs),
    /// Rank-wise shrinkage and IPR profiles per estimator.
    Diagnose(RunArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// case1, case2 or case3.
    #[arg(long)]
    pub preset: Option<PresetCase>,
    #[arg(long = "p")]
    pub p: Option<usize>,
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Number of realizations (at least 2).
    #[arg(long = "m")]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decay length of the exponential autocorrelation kernel.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Imaginary offset for the Stieltjes transform (default p^-1/2).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Standardize each sample's rows before forming E.
    #[arg(long)]
    pub standardize: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of csv,json,text.
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<TableFormat>,
    /// Comma-separated estimator names, e.g. naive,lp,two-step-iii.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Vec<EstimatorKind>,
    /// Comma-separated losses, e.g. kl,frobenius.
    #[arg(long, value_delimiter = ',')]
    pub losses: Vec<LossKind>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Report the KL family without the 2/p factor.
    #[arg(long)]
    pub raw_kl: bool,
}

impl RunArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset,
            p: self.p,
            n: self.n,
            m: self.m,
            seed: self.seed,
            tau: self.tau,
            epsilon: self.epsilon,
            standardize: self.standardize,
            out: self.out.clone(),
            formats: self.format.clone(),
            estimators: self.estimators.clone(),
            losses: self.losses.clone(),
            workers: self.workers,
            raw_kl: self.raw_kl,
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct FilterArgs {
    /// CSV with a header of series names; rows are observations.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "naive")]
    pub estimator: EstimatorKind,
    /// Aspect ratio; defaults to p/n of the file.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Drop the self pole from the Stieltjes sum.
    #[arg(long)]
    pub exclude_self: bool,
    /// Training window for mwcv and two-step-i.
    #[arg(long)]
    pub t_train: Option<usize>,
    /// Test window; defaults to the training window.
    #[arg(long)]
    pub t_out: Option<usize>,
    /// Output directory; the matrix goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
