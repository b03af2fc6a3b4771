//! Column-oriented CSV output with `#` comment headers.

use std::fmt::Write as _;
use std::path::Path;

use crate::{io_error, CliResult};

/// A CSV document: comment lines, one header row and numeric rows.
pub struct Table {
    comments: Vec<String>,
    columns: Vec<String>,
    body: String,
}

impl Table {
    /// `columns` pairs a column name with its unit.
    pub fn new(title: &str, columns: &[(&str, &str)]) -> Self {
        let mut comments = vec![title.to_string()];
        comments.extend(columns.iter().map(|(name, unit)| format!("{name}: {unit}")));
        Self {
            comments,
            columns: columns.iter().map(|(n, _)| n.to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns.len());
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            write!(self.body, "{}", number(*v)).unwrap();
        }
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            writeln!(out, "# {c}").unwrap();
        }
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        out.push_str(&self.body);
        out
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render()).map_err(|e| io_error(path, e))
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Power in dB relative to `reference`, floored at −300 dB.
pub fn decibels(power: f64, reference: f64) -> f64 {
    (10.0 * (power / reference).log10()).max(-300.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            assert_eq!(number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(number(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn rendering() {
        let mut t = Table::new("demo", &[("u", "dimensionless"), ("power_db", "dB")]);
        t.row(&[0.5, -3.0]);
        let text = t.render();
        assert_eq!(
            text,
            "# demo\n# u: dimensionless\n# power_db: dB\nu,power_db\n5.0000000000000000e-1,-3.0000000000000000e0\n"
        );
    }
}
