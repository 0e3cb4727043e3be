use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub configuration: String,
    pub statistic: String,
    pub value: f64,
    pub std_error: f64,
    pub n_draws: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub wall_time_secs: f64,
    /// Total bridge evaluations spent by the estimators.
    pub kappa_total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    pub fn new(seed: u64) -> Self {
        BenchmarkReport {
            metadata: ReportMetadata {
                seed,
                ..Default::default()
            },
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, configuration: impl Into<String>, statistic: impl Into<String>, value: f64, std_error: f64, n_draws: u64) {
        self.rows.push(ReportRow {
            configuration: configuration.into(),
            statistic: statistic.into(),
            value,
            std_error,
            n_draws,
        });
    }

    /// First row with the given configuration and statistic.
    pub fn find(&self, configuration: &str, statistic: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.configuration == configuration && r.statistic == statistic)
    }

    /// As [`BenchmarkReport::find`], further restricted to a sample size.
    pub fn find_n(&self, configuration: &str, statistic: &str, n_draws: u64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.configuration == configuration && r.statistic == statistic && r.n_draws == n_draws)
    }

    pub fn merge(&mut self, other: BenchmarkReport) {
        self.metadata.kappa_total += other.metadata.kappa_total;
        self.rows.extend(other.rows);
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// CSV rows preceded by a `#` metadata line.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        let m = &self.metadata;
        writeln!(out, "# seed={} wall_time_secs={} kappa_total={}", m.seed, m.wall_time_secs, m.kappa_total).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(body).map_err(|e| Error::Parse(e.to_string()))?);
        Ok(out)
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        Ok(std::fs::write(path, self.render(format)?)?)
    }
}

/// Renders any serialisable records as CSV (with a header row) or a JSON array.
pub fn render_records<T: Serialize>(records: &[T], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(records).map_err(|e| Error::Parse(e.to_string())),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
            }
            let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            String::from_utf8(body).map_err(|e| Error::Parse(e.to_string()))
        }
    }
}
