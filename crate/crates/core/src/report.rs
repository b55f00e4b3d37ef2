//! Rendering of benchmark, curve and profile reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::{BenchReport, CurveReport, EstimatorKind, Stats};
use crate::error::{Error, Result};
use crate::losses::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl TableFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
            TableFormat::Text => "txt",
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "text" | "txt" => Ok(TableFormat::Text),
            other => Err(Error::InvalidParameter(format!("unknown format '{other}'"))),
        }
    }
}

/// Which statistic a table block shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Population,
    Stability,
}

impl Block {
    pub fn name(&self) -> &'static str {
        match self {
            Block::Population => "population",
            Block::Stability => "stability",
        }
    }

    fn stats<'a>(&self, cell: &'a crate::bench::Cell) -> &'a Stats {
        match self {
            Block::Population => &cell.vs_population,
            Block::Stability => &cell.stability,
        }
    }
}

/// Mean of one table cell; `None` when missing or every realization failed.
pub fn table_value(report: &BenchReport, block: Block, estimator: EstimatorKind, loss: LossKind) -> Option<f64> {
    report.cell(estimator, loss).and_then(|c| block.stats(c).mean)
}

/// Estimators attaining each loss column's minimum, in loss order.
pub fn column_minima(report: &BenchReport, block: Block) -> Vec<Vec<EstimatorKind>> {
    report
        .losses()
        .iter()
        .map(|&loss| {
            let values: Vec<(EstimatorKind, f64)> = report
                .estimators()
                .iter()
                .filter_map(|&e| table_value(report, block, e, loss).map(|v| (e, v)))
                .collect();
            let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            values.into_iter().filter(|v| v.1 == min).map(|v| v.0).collect()
        })
        .collect()
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |v| format!("{v:.16e}"))
}

/// One row per estimator and block, one column per loss. The `minima`
/// column lists the losses for which the row attains the column minimum.
pub fn emit_tables(report: &BenchReport, format: TableFormat) -> Result<Vec<u8>> {
    match format {
        TableFormat::Json => {
            serde_json::to_vec_pretty(report).map_err(|e| Error::InvalidParameter(format!("json: {e}")))
        }
        TableFormat::Csv => emit_csv(report),
        TableFormat::Text => Ok(emit_text(report).into_bytes()),
    }
}

pub fn parse_json_report(bytes: &[u8]) -> Result<BenchReport> {
    serde_json::from_slice(bytes).map_err(|e| Error::InvalidParameter(format!("json: {e}")))
}

fn emit_csv(report: &BenchReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["block".to_string(), "estimator".to_string()];
    header.extend(report.losses().iter().map(|l| l.label().to_string()));
    header.push("minima".into());
    w.write_record(&header).map_err(csv_err)?;
    for block in [Block::Population, Block::Stability] {
        let minima = column_minima(report, block);
        for &e in report.estimators() {
            let mut row = vec![block.name().to_string(), e.label().to_string()];
            row.extend(report.losses().iter().map(|&l| fmt_value(table_value(report, block, e, l))));
            let marks: Vec<&str> =
                report.losses().iter().zip(&minima).filter(|(_, m)| m.contains(&e)).map(|(l, _)| l.label()).collect();
            row.push(marks.join(";"));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))
}

fn emit_text(report: &BenchReport) -> String {
    let mut out = String::new();
    let width = report.estimators().iter().map(|e| e.label().len()).max().unwrap_or(9).max(9);
    for block in [Block::Population, Block::Stability] {
        let title = match block {
            Block::Population => "<L(C, Xi_i)>",
            Block::Stability => "<L(Xi_i, Xi_j)>",
        };
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:width$}", "");
        for l in report.losses() {
            let _ = write!(out, " {:>13}", l.label());
        }
        out.push('\n');
        let minima = column_minima(report, block);
        for &e in report.estimators() {
            let _ = write!(out, "{:width$}", e.label());
            for (&l, mins) in report.losses().iter().zip(&minima) {
                let v = table_value(report, block, e, l).map_or_else(|| "NaN".into(), |v| format!("{v:.6}"));
                let mark = if mins.contains(&e) { "*" } else { " " };
                let _ = write!(out, " {v:>12}{mark}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "m = {}, pairs = {}, wall time {:.2}s; * marks column minima",
        report.metadata.config.m, report.metadata.pairs, report.metadata.wall_time_secs
    );
    for w in &report.metadata.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Long form: every statistic of every cell.
pub fn emit_cells_csv(report: &BenchReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "loss", "block", "mean", "std", "std_error", "count", "failed"]).map_err(csv_err)?;
    for c in &report.cells {
        for block in [Block::Population, Block::Stability] {
            let s = block.stats(c);
            w.write_record([
                c.estimator.name().to_string(),
                c.loss.name().to_string(),
                block.name().to_string(),
                fmt_value(s.mean),
                fmt_value(s.std),
                fmt_value(s.std_error()),
                s.count.to_string(),
                s.failed.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))
}

/// Rank-wise profile of one estimator; rank 1 is the smallest eigenvalue.
pub fn emit_profile_csv(report: &BenchReport, estimator: EstimatorKind) -> Result<Vec<u8>> {
    let prof = report
        .profile(estimator)
        .ok_or_else(|| Error::InvalidParameter(format!("estimator {estimator} not in report")))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rank",
        "lambda_mean",
        "lambda_std",
        "xi_mean",
        "xi_std",
        "ipr_mean",
        "ipr_std",
        "population_eigenvalue",
        "population_ipr",
    ])
    .map_err(csv_err)?;
    for r in 0..prof.xi_mean.len() {
        let mut row = vec![(r + 1).to_string()];
        row.extend(
            [
                prof.lambda_mean[r],
                prof.lambda_std[r],
                prof.xi_mean[r],
                prof.xi_std[r],
                prof.ipr_mean[r],
                prof.ipr_std[r],
                report.population_eigenvalues[r],
                report.population_ipr[r],
            ]
            .map(|v| fmt_value(Some(v))),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))
}

/// One row per `(k, loss)`.
pub fn emit_curve_csv(curve: &CurveReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "loss", "mean", "std", "stability_mean", "stability_std", "count", "failed"])
        .map_err(csv_err)?;
    for pt in &curve.points {
        for c in &pt.cells {
            w.write_record([
                pt.k.to_string(),
                c.loss.name().to_string(),
                fmt_value(c.vs_population.mean),
                fmt_value(c.vs_population.std),
                fmt_value(c.stability.mean),
                fmt_value(c.stability.std),
                c.vs_population.count.to_string(),
                c.vs_population.failed.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{run_experiment, ExperimentConfig};
    use crate::models::PresetCase;

    fn report(estimators: Vec<EstimatorKind>) -> BenchReport {
        let mut c = ExperimentConfig::preset(PresetCase::Case1, 12, 40, 4, 3).unwrap();
        c.estimators = estimators;
        run_experiment(&c).unwrap()
    }

    #[test]
    fn one_estimator_gives_one_row_per_block() {
        let r = report(vec![EstimatorKind::Lp]);
        let csv = String::from_utf8(emit_tables(&r, TableFormat::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("block,estimator,K,K_inv,F,F_inv,MV,SS,minima"));
        assert!(lines[1].starts_with("population,LP,"));
    }

    #[test]
    fn minima_match_a_rescan() {
        let r = report(vec![EstimatorKind::Naive, EstimatorKind::Rmt, EstimatorKind::Lp, EstimatorKind::Alca]);
        let minima = column_minima(&r, Block::Population);
        for (l, mins) in r.losses().iter().zip(&minima) {
            let best = r
                .estimators()
                .iter()
                .min_by(|a, b| {
                    let va = r.cell(**a, *l).unwrap().vs_population.mean.unwrap();
                    let vb = r.cell(**b, *l).unwrap().vs_population.mean.unwrap();
                    va.total_cmp(&vb)
                })
                .unwrap();
            assert!(mins.contains(best));
        }
        let text = emit_text(&r);
        assert_eq!(text.matches('*').count(), 2 * 6 + 1);
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let r = report(vec![EstimatorKind::Naive, EstimatorKind::Alca]);
        let back = parse_json_report(&emit_tables(&r, TableFormat::Json).unwrap()).unwrap();
        for (a, b) in r.cells.iter().zip(&back.cells) {
            assert_eq!(a.vs_population.mean.unwrap().to_bits(), b.vs_population.mean.unwrap().to_bits());
            assert_eq!(a.stability.std.unwrap().to_bits(), b.stability.std.unwrap().to_bits());
        }
        assert_eq!(r, back);
    }

    #[test]
    fn csv_values_reparse_exactly() {
        let r = report(vec![EstimatorKind::Rmt]);
        let csv = emit_tables(&r, TableFormat::Csv).unwrap();
        let mut rd = csv::Reader::from_reader(csv.as_slice());
        let row = rd.records().next().unwrap().unwrap();
        let k: f64 = row[2].parse().unwrap();
        assert_eq!(k, r.cell(EstimatorKind::Rmt, LossKind::Kl).unwrap().vs_population.mean.unwrap());
    }
}
