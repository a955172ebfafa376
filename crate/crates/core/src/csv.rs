//! CSV tables with `#`-prefixed metadata lines ahead of the header.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Numeric table; values are written in shortest round-trip scientific notation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    /// Header of an optional leading text column.
    pub label_column: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// One per row when `label_column` is set.
    pub labels: Vec<String>,
}

/// Shortest representation that parses back to the same f64; `inf`/`-inf`/`NaN` otherwise.
pub fn format_number(v: f64) -> String {
    format!("{v:e}")
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            metadata: Vec::new(),
            label_column: None,
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Table whose rows start with a text label.
    pub fn labelled<S: Into<String>>(label_column: impl Into<String>, columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            label_column: Some(label_column.into()),
            ..Self::new(columns)
        }
    }

    pub fn push_labelled(&mut self, label: impl Into<String>, row: Vec<f64>) {
        debug_assert!(self.label_column.is_some());
        self.labels.push(label.into());
        self.push(row);
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.metadata.push((key.into(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in &self.metadata {
            // metadata values never span lines
            let v = v.replace(['\r', '\n'], " ");
            write!(out, "# {k}: {v}\r\n").expect("writing to a Vec cannot fail");
        }
        let mut w = ::csv::WriterBuilder::new().terminator(::csv::Terminator::CRLF).from_writer(out);
        let header = self.label_column.iter().chain(&self.columns);
        w.write_record(header).expect("in-memory CSV write");
        for (i, row) in self.rows.iter().enumerate() {
            let label = self.label_column.as_ref().map(|_| self.labels[i].clone());
            let record = label.into_iter().chain(row.iter().map(|&v| format_number(v)));
            w.write_record(record).expect("in-memory CSV write");
        }
        w.into_inner().expect("in-memory CSV flush")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `time_s, amplitude` rows for the observation window of `ts`.
pub fn time_series_table(ts: &TimeSeries) -> Table {
    let mut t = Table::new(["time_s", "amplitude"]);
    t.meta("sample_rate_hz", format_number(ts.sample_rate()));
    t.meta("valid_samples", ts.valid_len().to_string());
    for (i, &v) in ts.valid().iter().enumerate() {
        t.push(vec![ts.time(i), v]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_has_metadata_and_header() {
        let mut t = Table::new(["a", "b"]);
        t.meta("model_hash", "abc");
        assert_eq!(String::from_utf8(t.to_bytes()).unwrap(), "# model_hash: abc\r\na,b\r\n");
    }

    #[test]
    fn numbers_round_trip() {
        let mut t = Table::new(["x"]);
        let vals = [0.1 + 0.2, -1e-300, 62e3, 39.6e-6, f64::INFINITY, 0.0];
        for v in vals {
            t.push(vec![v]);
        }
        let text = String::from_utf8(t.to_bytes()).unwrap();
        let parsed: Vec<f64> = text.lines().skip(1).map(|l| l.trim().parse().unwrap()).collect();
        assert_eq!(parsed, vals);
        assert!(text.contains("inf"));
    }

    #[test]
    fn labels_lead_each_row() {
        let mut t = Table::labelled("check", ["value"]);
        t.push_labelled("kramers, kronig", vec![0.5]);
        assert_eq!(String::from_utf8(t.to_bytes()).unwrap(), "check,value\r\n\"kramers, kronig\",5e-1\r\n");
    }

    #[test]
    fn io_failure_names_destination() {
        let t = Table::new(["x"]);
        let err = t.write(Path::new("/nonexistent-dir/out.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
    }
}
