//! Plain-text reports rebuilt from a run directory's measurement stream.

use crate::config::{parse_config, Experiment};
use crate::output::{
    num, read_stream, StreamError, CHECK_PREFIX, CONFIG_FILE, FLAG_PREFIX, STREAM_FILE,
};
use sigma_core::analysis::TrendReport;
use sigma_core::mcmc::Summary;
use sigma_core::stats::MeasurementRecord;
use std::fmt::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum ReportStatus {
    Ok,
    /// Identity checks recorded as failed.
    Violations(usize),
    NoData,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub status: ReportStatus,
    pub text: String,
}

fn is_derived(name: &str) -> bool {
    name.contains('/')
}

/// Per-observable summaries of the per-sweep series, in order of first appearance.
pub fn series_summaries(records: &[MeasurementRecord]) -> Vec<(String, Summary)> {
    let mut names: Vec<&str> = Vec::new();
    for r in records.iter().filter(|r| !is_derived(&r.observable)) {
        if !names.contains(&r.observable.as_str()) {
            names.push(&r.observable);
        }
    }
    names
        .into_iter()
        .map(|n| {
            let series: Vec<f64> = records
                .iter()
                .filter(|r| r.observable == n)
                .map(|r| r.value)
                .collect();
            (n.to_string(), Summary::of(&series))
        })
        .collect()
}

/// Rows keyed by the `sweep` field, one column per per-row observable.
fn pivot(records: &[MeasurementRecord]) -> (Vec<String>, Vec<Vec<Option<(f64, f64)>>>) {
    let mut cols: Vec<String> = Vec::new();
    let mut rows: Vec<u64> = Vec::new();
    for r in records.iter().filter(|r| !is_derived(&r.observable)) {
        if !cols.contains(&r.observable) {
            cols.push(r.observable.clone());
        }
        if !rows.contains(&r.sweep) {
            rows.push(r.sweep);
        }
    }
    rows.sort_unstable();
    let mut table = vec![vec![None; cols.len()]; rows.len()];
    for r in records.iter().filter(|r| !is_derived(&r.observable)) {
        let i = rows.binary_search(&r.sweep).expect("row present");
        let j = cols
            .iter()
            .position(|c| *c == r.observable)
            .expect("column present");
        table[i][j] = Some((r.value, r.error));
    }
    (cols, table)
}

fn column<'a>(
    cols: &[String],
    rows: &'a [Vec<Option<(f64, f64)>>],
    name: &str,
) -> Option<Vec<(f64, f64)>> {
    let j = cols.iter().position(|c| c == name)?;
    rows.iter().map(|r| r[j]).collect()
}

/// Render the report for `dir`. Every number is recomputed from the stream.
pub fn report(dir: &Path) -> Result<Report, StreamError> {
    let records = read_stream(&dir.join(STREAM_FILE))?.unwrap_or_default();
    if records.is_empty() {
        return Ok(Report {
            status: ReportStatus::NoData,
            text: format!("run directory: {}\nstatus: no data\n", dir.display()),
        });
    }
    let experiment = std::fs::read_to_string(dir.join(CONFIG_FILE))
        .ok()
        .and_then(|t| parse_config(&t, None).ok())
        .map(|c| (c.experiment(), c.hash()));
    let mut s = String::new();
    let hashes: Vec<&str> = {
        let mut h: Vec<&str> = records.iter().map(|r| r.config_hash.as_str()).collect();
        h.sort_unstable();
        h.dedup();
        h
    };
    writeln!(s, "run directory: {}", dir.display()).ok();
    match &experiment {
        Some((e, h)) => {
            writeln!(s, "experiment: {}", e.name()).ok();
            if hashes != [h.as_str()] {
                writeln!(
                    s,
                    "warning: stream hashes {hashes:?} differ from the config hash {h}"
                )
                .ok();
            }
        }
        None => {
            writeln!(s, "experiment: unknown (no readable {CONFIG_FILE})").ok();
        }
    }
    writeln!(s, "config_hash: {}", hashes.join(",")).ok();
    writeln!(s, "records: {}", records.len()).ok();

    let checks: Vec<&MeasurementRecord> = records
        .iter()
        .filter(|r| r.observable.starts_with(CHECK_PREFIX) || r.observable.starts_with(FLAG_PREFIX))
        .collect();
    let violations = checks
        .iter()
        .filter(|r| r.observable.starts_with(CHECK_PREFIX) && r.value != 1.0)
        .count();
    let warnings = checks
        .iter()
        .filter(|r| r.observable.starts_with(FLAG_PREFIX) && r.value != 1.0)
        .count();
    if !checks.is_empty() {
        writeln!(
            s,
            "\n## checklist ({} checks, {violations} violations, {warnings} warnings)",
            checks.len()
        )
        .ok();
        for r in &checks {
            let label = match (r.observable.starts_with(CHECK_PREFIX), r.value == 1.0) {
                (_, true) => "PASS",
                (true, false) => "FAIL",
                (false, false) => "WARN",
            };
            writeln!(s, "{label} {}", r.observable).ok();
        }
    }

    let kind = experiment.as_ref().map(|e| e.0);
    let series_like = matches!(
        kind,
        Some(Experiment::McmcRun) | Some(Experiment::GffSample)
    );
    if series_like {
        writeln!(s, "\n## series\nobservable\tmean\terror\ttau_int\tn_eff").ok();
        for (o, sm) in series_summaries(&records) {
            writeln!(
                s,
                "{o}\t{}\t{}\t{}\t{}",
                num(sm.mean),
                num(sm.error),
                num(sm.tau_int),
                num(sm.n_eff)
            )
            .ok();
        }
    } else {
        let (cols, rows) = pivot(&records);
        if !cols.is_empty() {
            writeln!(s, "\n## table\n{}", cols.join("\t")).ok();
            for r in &rows {
                let cells: Vec<String> = r
                    .iter()
                    .map(|c| c.map_or("-".into(), |(v, _)| num(v)))
                    .collect();
                writeln!(s, "{}", cells.join("\t")).ok();
            }
        }
        trends(&mut s, &cols, &rows);
    }
    let derived: Vec<&MeasurementRecord> = records
        .iter()
        .filter(|r| {
            is_derived(&r.observable)
                && !r.observable.starts_with(CHECK_PREFIX)
                && !r.observable.starts_with(FLAG_PREFIX)
        })
        .collect();
    if !derived.is_empty() {
        writeln!(s, "\n## derived").ok();
        for r in derived {
            writeln!(s, "{} = {} ± {}", r.observable, num(r.value), num(r.error)).ok();
        }
    }
    let status = if violations > 0 {
        ReportStatus::Violations(violations)
    } else {
        ReportStatus::Ok
    };
    writeln!(
        s,
        "\nstatus: {}",
        if violations > 0 { "violations" } else { "ok" }
    )
    .ok();
    Ok(Report { status, text: s })
}

fn trends(s: &mut String, cols: &[String], rows: &[Vec<Option<(f64, f64)>>]) {
    if let (Some(b), Some(y)) = (column(cols, rows, "beta"), column(cols, rows, "ln_m_star")) {
        if let Ok(t) = TrendReport::new(
            "beta",
            "ln_m_star",
            b.iter().map(|v| v.0).collect(),
            y.iter().map(|v| v.0).collect(),
            None,
            false,
            None,
        ) {
            let two_pi = 2.0 * std::f64::consts::PI;
            writeln!(s, "\n## trend: ln m* vs beta\n{}", t.to_columns()).ok();
            writeln!(
                s,
                "slope {} vs -2pi = {}: relative deviation {:.3e}",
                num(t.fit.slope),
                num(-two_pi),
                t.fit.slope / -two_pi - 1.0
            )
            .ok();
        }
    }
    if let (Some(n), Some(k)) = (
        column(cols, rows, "components"),
        column(cols, rows, "kappa4"),
    ) {
        let t = TrendReport::new(
            "N",
            "abs_kappa4",
            n.iter().map(|v| v.0).collect(),
            k.iter().map(|v| v.0.abs()).collect(),
            Some(k.iter().map(|v| v.1).collect()),
            true,
            None,
        );
        match t {
            Ok(t) => {
                writeln!(s, "\n## trend: |kappa4| vs N (log-log)\n{}", t.to_columns()).ok();
            }
            Err(e) => {
                writeln!(s, "\n## trend: |kappa4| vs N\nno fit: {e}").ok();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summaries_skip_derived_records() {
        let mut rs: Vec<MeasurementRecord> = (0..50)
            .map(|i| MeasurementRecord::new("a", i, i as f64, 0.0, 1.0))
            .collect();
        rs.push(MeasurementRecord::new("a/mean", 50, 0.0, 0.0, 0.0));
        let s = series_summaries(&rs);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].1.mean, 24.5);
    }

    #[test]
    fn pivot_builds_rows_by_index() {
        let rs = vec![
            MeasurementRecord::new("beta", 0, 0.1, 0.0, 0.0),
            MeasurementRecord::new("ln_m_star", 0, -0.6, 0.0, 0.0),
            MeasurementRecord::new("beta", 1, 0.2, 0.0, 0.0),
            MeasurementRecord::new("ln_m_star", 1, -1.2, 0.0, 0.0),
        ];
        let (cols, rows) = pivot(&rs);
        assert_eq!(cols, ["beta", "ln_m_star"]);
        assert_eq!(
            column(&cols, &rows, "ln_m_star").unwrap(),
            [(-0.6, 0.0), (-1.2, 0.0)]
        );
    }
}
