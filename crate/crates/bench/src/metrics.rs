//! Relative error, percentiles and the per-cell table.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// References closer to zero than this switch to absolute error.
pub const ZERO_REFERENCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelError {
    /// Percent, or the raw absolute error when `absolute` is set.
    pub value: f64,
    pub absolute: bool,
}

/// `max(0, achieved - reference) / |reference| * 100`.
pub fn relative_error(achieved: f64, reference: f64) -> RelError {
    let excess = (achieved - reference).max(0.0);
    if reference.abs() < ZERO_REFERENCE {
        RelError {
            value: excess,
            absolute: true,
        }
    } else {
        RelError {
            value: excess / reference.abs() * 100.0,
            absolute: false,
        }
    }
}

/// Nearest-rank percentile of unsorted data; `q` in `(0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty data");
    assert!(q > 0.0 && q <= 100.0, "percentile rank {q}");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub m: usize,
    pub n: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p100: f64,
    /// Instances whose reference was near zero and used absolute error.
    pub absolute_fallbacks: usize,
}

impl TableRow {
    pub fn from_errors(m: usize, n: usize, errors: &[RelError]) -> Self {
        let values: Vec<f64> = errors.iter().map(|e| e.value).collect();
        Self {
            m,
            n,
            p25: percentile(&values, 25.0),
            p50: percentile(&values, 50.0),
            p75: percentile(&values, 75.0),
            p100: percentile(&values, 100.0),
            absolute_fallbacks: errors.iter().filter(|e| e.absolute).count(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelErrorTable {
    pub rows: Vec<TableRow>,
}

impl RelErrorTable {
    pub fn row(&self, m: usize, n: usize) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.m == m && r.n == n)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "n", "p25", "p50", "p75", "p100"])?;
        for r in &self.rows {
            w.write_record([
                r.m.to_string(),
                r.n.to_string(),
                format!("{:.3e}", r.p25),
                format!("{:.3e}", r.p50),
                format!("{:.3e}", r.p75),
                format!("{:.3e}", r.p100),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

impl std::fmt::Display for RelErrorTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:>5} {:>4} {:>10} {:>10} {:>10} {:>10}", "m", "n", "25%", "50%", "75%", "100%")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>5} {:>4} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e}",
                r.m, r.n, r.p25, r.p50, r.p75, r.p100
            )?;
        }
        Ok(())
    }
}
