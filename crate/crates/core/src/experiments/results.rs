use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["scenario", "x_axis", "metric", "mean", "stderr", "n", "seed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    /// SNR (dB), transmit power (dBm), pilot count or element count.
    pub x_axis: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Mean and standard error of the mean (`s / √n`, zero for one sample).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_summary(&mut self, scenario: &str, x_axis: f64, metric: impl Into<String>, values: &[f64], seed: u64) {
        let (mean, stderr) = mean_stderr(values);
        self.rows.push(ResultRow {
            scenario: scenario.to_owned(),
            x_axis,
            metric: metric.into(),
            mean,
            stderr,
            n: values.len(),
            seed,
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// First row matching `metric` at `x_axis`.
    pub fn find(&self, x_axis: f64, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.x_axis == x_axis && r.metric == metric)
    }

    /// `(x_axis, mean)` of every row with this metric, in table order.
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.metric == metric).map(|r| (r.x_axis, r.mean)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !r.mean.is_finite() || !(r.stderr >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {}@{} has mean {} and stderr {}",
                    r.metric, r.x_axis, r.mean, r.stderr
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv flush: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::InvalidArgument(format!("unexpected csv header {header:?}")));
        }
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(Self { rows })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Writes the table as CSV, creating parent directories.
pub fn emit_results(table: &ResultTable, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let file = std::fs::File::create(path).map_err(io_err)?;
    table.write_csv(std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::InvalidArgument(message) => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_results(path: &Path) -> Result<ResultTable> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ResultTable::read_csv(file).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
