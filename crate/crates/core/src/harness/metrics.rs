use serde::{Deserialize, Serialize};

use crate::engine::RootRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iter,root,v_root,residual,return,queries,wall_ms";

/// One metrics line per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: u64,
    pub root: usize,
    pub v_root: f64,
    pub residual: f64,
    /// Return of the episode that ended at this iteration, if any.
    #[serde(rename = "return")]
    pub episode_return: Option<f64>,
    pub queries: u64,
    pub wall_ms: u64,
}

impl From<&RootRecord> for MetricsRow {
    fn from(r: &RootRecord) -> Self {
        Self {
            iter: r.iter,
            root: r.root,
            v_root: r.v_root,
            residual: r.residual,
            episode_return: r.episode_return,
            queries: r.queries,
            wall_ms: r.wall_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Csv,
    Json,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn emit_metrics(rows: &[MetricsRow], format: MetricsFormat) -> Result<Vec<u8>> {
    match format {
        MetricsFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER.split(',')).map_err(csv_error)?;
            for r in rows {
                w.write_record([
                    r.iter.to_string(),
                    r.root.to_string(),
                    r.v_root.to_string(),
                    r.residual.to_string(),
                    r.episode_return.map(|g| g.to_string()).unwrap_or_default(),
                    r.queries.to_string(),
                    r.wall_ms.to_string(),
                ])
                .map_err(csv_error)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.to_string()))
        }
        MetricsFormat::Json => serde_json::to_vec(rows).map_err(|e| Error::Io(e.to_string())),
    }
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = record.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing column {i}") })?;
    raw.parse().map_err(|_| Error::Parse { line, message: format!("bad value {raw:?} in column {i}") })
}

/// Inverse of CSV [`emit_metrics`].
pub fn parse_metrics_csv(bytes: &[u8]) -> Result<Vec<MetricsRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse { line: 1, message: format!("unexpected header {header:?}") });
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = i + 2;
        let ret = record.get(4).unwrap_or("");
        rows.push(MetricsRow {
            iter: field(&record, 0, line)?,
            root: field(&record, 1, line)?,
            v_root: field(&record, 2, line)?,
            residual: field(&record, 3, line)?,
            episode_return: if ret.is_empty() { None } else { Some(field(&record, 4, line)?) },
            queries: field(&record, 5, line)?,
            wall_ms: field(&record, 6, line)?,
        });
    }
    Ok(rows)
}
