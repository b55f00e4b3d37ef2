//! JSON run configuration and its resolution against command-line flags.

use std::path::{Path, PathBuf};

use corrfilter_core::bench::{EstimatorKind, EstimatorParams, ExperimentConfig, MwcvSettings};
use corrfilter_core::losses::LossKind;
use corrfilter_core::models::{self, Autocorrelation, BlockSpec, ModelSpec, PresetCase};
use corrfilter_core::report::TableFormat;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const THREADS_ENV: &str = "CORRFILTER_THREADS";
pub const DEFAULT_P: usize = 100;
pub const DEFAULT_M: usize = 200;
pub const DEFAULT_OUT_DIR: &str = "corrfilter-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimators: Vec<EstimatorEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub losses: Vec<String>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mwcv: Option<MwcvSection>,
}

/// Either `{"preset": "case2"}` or an explicit block list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSection {
    Preset(PresetModel),
    Explicit(ExplicitModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetModel {
    pub preset: PresetCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitModel {
    pub blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub autocorr: Autocorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "ParamOverrides::is_empty")]
    pub params: ParamOverrides,
}

/// Estimator parameters. They are shared by every estimator of a run, so
/// two entries may not set the same key to different values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_self: Option<bool>,
}

impl ParamOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub formats: Vec<TableFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MwcvSection {
    #[serde(rename = "T_total_multiplier", alias = "t_total_multiplier")]
    pub t_total_multiplier: usize,
    #[serde(rename = "T_out", alias = "t_out", default, skip_serializing_if = "Option::is_none")]
    pub t_out: Option<usize>,
}

impl CliConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<PresetCase>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub standardize: bool,
    pub out: Option<PathBuf>,
    pub formats: Vec<TableFormat>,
    pub estimators: Vec<EstimatorKind>,
    pub losses: Vec<LossKind>,
    pub workers: Option<usize>,
    pub raw_kl: bool,
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    pub formats: Vec<TableFormat>,
}

impl RunPlan {
    /// File stem carrying the model and seed, e.g. `case2-p60-n120-m200-seed7`.
    pub fn stem(&self) -> String {
        let c = &self.experiment;
        let model = c.preset.map_or("custom", |p| p.name());
        format!("{model}-p{}-n{}-m{}-seed{}", c.p(), c.n, c.m, c.seed)
    }
}

fn merge_param<T: PartialEq + Copy + std::fmt::Debug>(
    slot: &mut Option<T>,
    value: Option<T>,
    key: &str,
) -> CliResult<()> {
    match (*slot, value) {
        (Some(a), Some(b)) if a != b => {
            Err(CliError::Usage(format!("conflicting values for estimator parameter '{key}': {a:?} and {b:?}")))
        }
        (None, Some(b)) => {
            *slot = Some(b);
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Worker cap from the environment, if set.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

pub fn resolve(config: &CliConfig, o: &Overrides) -> CliResult<RunPlan> {
    let s = &config.sample;
    let (model, preset) = match (o.preset, &config.model) {
        (Some(case), _) | (None, &Some(ModelSection::Preset(PresetModel { preset: case }))) => {
            let p = o.p.or(s.p).unwrap_or(DEFAULT_P);
            (models::preset_model(case, p).map_err(CliError::usage)?, Some(case))
        }
        (None, Some(ModelSection::Explicit(m))) => {
            let p = o.p.or(s.p).ok_or_else(|| CliError::Usage("an explicit model needs sample.p or --p".into()))?;
            (ModelSpec { p, blocks: m.blocks.clone(), autocorr: m.autocorr }, None)
        }
        (None, None) => {
            let p = o.p.or(s.p).unwrap_or(DEFAULT_P);
            (models::preset_model(PresetCase::Case1, p).map_err(CliError::usage)?, Some(PresetCase::Case1))
        }
    };
    let p = model.p;
    let n = o.n.or(s.n).unwrap_or(2 * p);
    let m = o.m.or(s.m).unwrap_or(DEFAULT_M);
    let seed = o.seed.or(s.seed).unwrap_or(0);

    let mut estimators = o.estimators.clone();
    let mut params = EstimatorParams::default();
    let (mut q, mut tau, mut eps, mut excl) = (None, None, None, None);
    for entry in &config.estimators {
        let kind: EstimatorKind = entry.name.parse().map_err(CliError::usage)?;
        if o.estimators.is_empty() && !estimators.contains(&kind) {
            estimators.push(kind);
        }
        merge_param(&mut q, entry.params.q, "q")?;
        merge_param(&mut tau, entry.params.tau, "tau")?;
        merge_param(&mut eps, entry.params.epsilon, "epsilon")?;
        merge_param(&mut excl, entry.params.exclude_self, "exclude_self")?;
    }
    if estimators.is_empty() {
        let like = preset.unwrap_or(match model.autocorr {
            Autocorrelation::Exponential { .. } => PresetCase::Case3,
            Autocorrelation::Identity => PresetCase::Case1,
        });
        estimators = EstimatorKind::defaults_for(like);
    }
    params.q = q;
    params.tau = o.tau.or(tau);
    params.epsilon = o.epsilon.or(eps);
    params.exclude_self = excl.unwrap_or(false);
    if let Some(mw) = config.mwcv {
        params.mwcv = MwcvSettings { t_total_multiplier: mw.t_total_multiplier, t_out: mw.t_out };
    }

    let losses = if !o.losses.is_empty() {
        o.losses.clone()
    } else if !config.losses.is_empty() {
        config.losses.iter().map(|l| l.parse().map_err(CliError::usage)).collect::<CliResult<_>>()?
    } else {
        LossKind::ALL.to_vec()
    };

    let mut workers = o.workers.or(s.workers);
    if let Some(cap) = thread_cap()? {
        workers = Some(workers.map_or(cap, |w| w.min(cap)));
    }

    let experiment = ExperimentConfig {
        model,
        preset,
        n,
        m,
        seed,
        estimators,
        losses,
        params,
        standardize: o.standardize || s.standardize.unwrap_or(false),
        scaled_kl: !o.raw_kl,
        workers,
    };
    experiment.validate().map_err(CliError::usage)?;

    let formats = if !o.formats.is_empty() {
        o.formats.clone()
    } else if !config.output.formats.is_empty() {
        config.output.formats.clone()
    } else {
        vec![TableFormat::Csv, TableFormat::Json, TableFormat::Text]
    };
    let out_dir = o.out.clone().or_else(|| config.output.dir.clone()).unwrap_or_else(|| DEFAULT_OUT_DIR.into());
    Ok(RunPlan { experiment, out_dir, formats })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
        "model": {"preset": "case3"},
        "sample": {"p": 40, "n": 80, "m": 20, "seed": 7, "standardize": false},
        "estimators": [{"name": "lp", "params": {"epsilon": 0.2}}, {"name": "bj", "params": {"tau": 3.0}}, {"name": "two-step-ii"}],
        "losses": ["kl", "frobenius"],
        "output": {"dir": "out", "formats": ["csv", "text"]},
        "mwcv": {"T_total_multiplier": 6, "T_out": 80}
    }"#;

    #[test]
    fn parse_serialize_parse_is_fixed_point() {
        let a = CliConfig::from_json(FULL).unwrap();
        let b = CliConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let explicit = r#"{"model": {"blocks": [{"start": 0, "size": 3, "loading": 0.3}], "autocorr": {"kind": "exponential", "tau": 2.0}}, "sample": {"p": 5}}"#;
        let c = CliConfig::from_json(explicit).unwrap();
        assert!(matches!(c.model, Some(ModelSection::Explicit(_))));
        assert_eq!(CliConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            r#"{"sampel": {}}"#,
            r#"{"sample": {"p": 10, "q": 0.5}}"#,
            r#"{"model": {"preset": "case1", "extra": 1}}"#,
            r#"{"estimators": [{"name": "lp", "params": {"eta": 1}}]}"#,
            r#"{"mwcv": {"T_total_multiplier": 10, "folds": 3}}"#,
        ] {
            assert!(CliConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn resolution_prefers_flags() {
        let cfg = CliConfig::from_json(FULL).unwrap();
        let plan = resolve(&cfg, &Overrides { m: Some(4), epsilon: Some(0.3), ..Default::default() }).unwrap();
        let e = &plan.experiment;
        assert_eq!((e.p(), e.n, e.m, e.seed), (40, 80, 4, 7));
        assert_eq!(e.params.epsilon, Some(0.3));
        assert_eq!(e.params.tau, Some(3.0));
        assert_eq!(e.params.mwcv.t_total_multiplier, 6);
        assert_eq!(e.estimators, vec![EstimatorKind::Lp, EstimatorKind::Bj, EstimatorKind::TwoStepII]);
        assert_eq!(e.losses, vec![LossKind::Kl, LossKind::Frobenius]);
        assert_eq!(plan.stem(), "case3-p40-n80-m4-seed7");
        assert_eq!(plan.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn conflicting_parameters_are_usage_errors() {
        let cfg = CliConfig::from_json(
            r#"{"estimators": [{"name": "lp", "params": {"q": 0.5}}, {"name": "bj", "params": {"q": 0.4}}]}"#,
        )
        .unwrap();
        assert_eq!(resolve(&cfg, &Overrides::default()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn defaults_follow_the_preset() {
        let plan = resolve(
            &CliConfig::default(),
            &Overrides { preset: Some(PresetCase::Case2), p: Some(30), ..Default::default() },
        )
        .unwrap();
        assert_eq!(plan.experiment.n, 60);
        assert!(!plan.experiment.estimators.contains(&EstimatorKind::Bj));
        assert_eq!(plan.formats.len(), 3);
    }
}
