//! CSV and JSON renderings of metrics tables.
//!
//! CSV rows are `scope,method,metric` followed by one column per
//! action × condition cell and a final `overall` column. Missing values are
//! written as `–` in CSV and `null` in JSON.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{Cell, MetricsTable, Overall};
use crate::error::{Error, Result};

pub const MISSING: &str = "–";
pub const AGGREGATE_SCOPE: &str = "aggregate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// One detector table for a single fold and training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub seed: u64,
    pub held_out_room: String,
    pub w_backsub: f64,
    pub table: MetricsTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seeds: Vec<u64>,
    pub tables: Vec<MetricsTable>,
    pub folds: Vec<FoldEntry>,
}

type Metric = (&'static str, fn(&Cell) -> Option<f64>, fn(&Overall) -> Option<f64>);

const METRICS: [Metric; 3] = [
    ("mae_deg", |c| c.mae_deg, |o| o.mae_deg),
    ("distance_accuracy", |c| c.distance_accuracy, |o| o.distance_accuracy),
    ("presence_accuracy", |c| c.presence_accuracy, |o| o.presence_accuracy),
];

fn value(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.4}"))
}

fn rows(out: &mut csv::Writer<Vec<u8>>, scope: &str, table: &MetricsTable) -> csv::Result<()> {
    for (name, cell, overall) in METRICS {
        let mut record = vec![scope.to_string(), table.method.clone(), name.to_string()];
        record.extend(table.cells.iter().map(|c| value(cell(c))));
        record.push(value(overall(&table.overall)));
        out.write_record(&record)?;
    }
    Ok(())
}

fn csv_bytes(report: &Report) -> csv::Result<Vec<u8>> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scope".to_string(), "method".into(), "metric".into()];
    header.extend(MetricsTable::layout().into_iter().map(|(a, c)| format!("{a}_{c}")));
    header.push("overall".into());
    out.write_record(&header)?;
    for t in &report.tables {
        rows(&mut out, AGGREGATE_SCOPE, t)?;
    }
    for f in &report.folds {
        rows(&mut out, &format!("seed{}:{}", f.seed, f.held_out_room), &f.table)?;
    }
    out.into_inner().map_err(|e| e.into_error().into())
}

impl Report {
    pub fn to_csv(&self) -> String {
        let bytes = csv_bytes(self).expect("in-memory csv cannot fail");
        String::from_utf8(bytes).expect("csv output is utf-8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render(format)).map_err(|e| Error::io(path, e))
    }

    pub fn table(&self, method: &str) -> Option<&MetricsTable> {
        self.tables.iter().find(|t| t.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::Outcome;
    use crate::manifest::{Action, RobotCondition};

    fn sample_report() -> Report {
        let o = Outcome {
            action: Action::Quiet,
            condition: RobotCondition::Dynamic,
            true_deg: Some(12.5),
            pred_deg: Some(40.123456789),
            true_near: Some(true),
            pred_near: Some(false),
            true_presence: true,
            pred_presence: Some(true),
        };
        let t = MetricsTable::from_outcomes("detector", &[o]);
        Report {
            seeds: vec![0],
            tables: vec![t.clone()],
            folds: vec![FoldEntry {
                seed: 0,
                held_out_room: "room0".into(),
                w_backsub: 0.5,
                table: t,
            }],
        }
    }

    #[test]
    fn csv_layout_and_missing_cells() {
        let csv = sample_report().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + 3);
        let header: Vec<&str> = lines[0].split(',').collect();
        assert_eq!(header.len(), 3 + 8 + 1);
        assert_eq!(header[3], "empty_static");
        let mae: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(mae[..3], ["aggregate", "detector", "mae_deg"]);
        let col = header.iter().position(|h| *h == "quiet_dynamic").unwrap();
        assert_eq!(mae[col], "27.6235");
        assert_eq!(mae[3], MISSING);
        assert!(lines[4].starts_with("seed0:room0,"));
    }

    #[test]
    fn json_round_trip_and_nulls() {
        let r = sample_report();
        let json = r.to_json();
        assert!(json.contains("\"mae_deg\": null"));
        assert_eq!(Report::from_json(&json).unwrap(), r);
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(sample_report().to_csv(), sample_report().to_csv());
        assert_eq!(sample_report().to_json(), sample_report().to_json());
    }

    #[test]
    fn write_to_missing_dir_is_io_error() {
        let err = sample_report().write("/nonexistent/dir/report.csv", ReportFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn format_parses() {
        assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
