//! Metrics CSV: mandatory header, one row per iteration, missing values as
//! empty fields.

use thiserror::Error;

use crate::curriculum::IterationMetrics;

pub const METRICS_HEADER: &str = "iteration,phase,episodes,goals,collisions,timeouts,truncated,\
goal_rate,goal_rate_ma5,mean_return,mean_ep_len,policy_loss,value_loss,mean_kl,entropy,kl_coeff";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metrics CSV header mismatch: expected `{METRICS_HEADER}`")]
    Header,
    /// `row` counts data rows from 1; the header is not counted.
    #[error("metrics CSV row {row}: {message}")]
    Row { row: usize, message: String },
}

/// One CSV line, newline-terminated.
pub fn format_metrics_row(row: &IterationMetrics) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(row).expect("metrics row serializes");
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

pub fn write_metrics_csv(rows: &[IterationMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for row in rows {
        out.push_str(&format_metrics_row(row));
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<IterationMetrics>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header_ok = reader
        .headers()
        .map(|h| h.iter().collect::<Vec<_>>().join(",") == METRICS_HEADER)
        .unwrap_or(false);
    if !header_ok {
        return Err(MetricsError::Header);
    }
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<IterationMetrics>().enumerate() {
        let row = record.map_err(|e| MetricsError::Row {
            row: i + 1,
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        let accounted = row.goals + row.collisions + row.timeouts + row.truncated;
        if accounted != row.episodes {
            return Err(MetricsError::Row {
                row: i + 1,
                message: format!("outcome counts sum to {accounted}, episodes is {}", row.episodes),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}
