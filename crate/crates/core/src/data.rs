//! Panel and proxy matrices, and their CSV representation.
//!
//! Files are comma separated. In the default `series-in-rows` layout the
//! first row holds time labels (after a corner cell) and the first column
//! holds series labels; `series-in-columns` is the transpose.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    SeriesInRows,
    SeriesInColumns,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" | "series-in-rows" => Ok(Orientation::SeriesInRows),
            "columns" | "cols" | "series-in-columns" => Ok(Orientation::SeriesInColumns),
            other => Err(Error::config(format!("unknown orientation {other:?}"))),
        }
    }
}

/// A labelled real matrix as read from disk, series × time.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub values: DMatrix<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

/// The large panel `x_it`, N series × T periods.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMatrix {
    values: DMatrix<f64>,
    series_ids: Vec<String>,
    time_ids: Vec<String>,
}

/// Observed proxies `w_t`, d × T.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMatrix {
    values: DMatrix<f64>,
    proxy_ids: Vec<String>,
    time_ids: Vec<String>,
}

fn check_labels(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn check_rows(values: &DMatrix<f64>, labels: &[String]) -> Result<()> {
    for (i, row) in values.row_iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumeric {
                row: i + 1,
                column: j + 1,
                value: row[j].to_string(),
            });
        }
        let t = row.len() as f64;
        let mean = row.sum() / t;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        if !(var > 0.0) {
            return Err(Error::ZeroVariance(labels[i].clone()));
        }
    }
    Ok(())
}

fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl PanelMatrix {
    pub fn new(values: DMatrix<f64>, series_ids: Vec<String>, time_ids: Vec<String>) -> Result<Self> {
        let (n, t) = values.shape();
        if series_ids.len() != n {
            return Err(Error::Dimension { what: "series labels", expected: n, actual: series_ids.len() });
        }
        if time_ids.len() != t {
            return Err(Error::Dimension { what: "time labels", expected: t, actual: time_ids.len() });
        }
        if n < 2 || t < 2 {
            return Err(Error::TooFewObservations(format!("panel is {n}x{t}, need at least 2x2")));
        }
        check_labels(&series_ids)?;
        check_labels(&time_ids)?;
        check_rows(&values, &series_ids)?;
        Ok(PanelMatrix { values, series_ids, time_ids })
    }

    /// Build with generated labels `s1..sN`, `t1..tT`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let (n, t) = values.shape();
        Self::new(values, default_ids("s", n), default_ids("t", t))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn series_ids(&self) -> &[String] {
        &self.series_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn t(&self) -> usize {
        self.values.ncols()
    }

    /// Copy with every series scaled to zero mean and unit variance.
    pub fn standardized(&self) -> Self {
        PanelMatrix {
            values: standardize_rows(&self.values),
            series_ids: self.series_ids.clone(),
            time_ids: self.time_ids.clone(),
        }
    }

    /// Restrict to the periods in `range`. Fails if a series becomes constant.
    pub fn window(&self, range: Range<usize>) -> Result<Self> {
        let cols = self.values.columns(range.start, range.len()).into_owned();
        Self::new(cols, self.series_ids.clone(), self.time_ids[range].to_vec())
    }

    /// Append the rows of `other` below this panel. Time axes must agree.
    pub fn stacked(&self, other: &DMatrix<f64>, other_ids: &[String]) -> Result<Self> {
        if other.ncols() != self.t() {
            return Err(Error::Dimension { what: "stacked rows", expected: self.t(), actual: other.ncols() });
        }
        let mut values = DMatrix::zeros(self.n() + other.nrows(), self.t());
        values.rows_mut(0, self.n()).copy_from(&self.values);
        values.rows_mut(self.n(), other.nrows()).copy_from(other);
        let mut ids = self.series_ids.clone();
        ids.extend(other_ids.iter().cloned());
        Self::new(values, ids, self.time_ids.clone())
    }
}

impl ProxyMatrix {
    pub fn new(values: DMatrix<f64>, proxy_ids: Vec<String>, time_ids: Vec<String>) -> Result<Self> {
        let (d, t) = values.shape();
        if proxy_ids.len() != d {
            return Err(Error::Dimension { what: "proxy labels", expected: d, actual: proxy_ids.len() });
        }
        if time_ids.len() != t {
            return Err(Error::Dimension { what: "time labels", expected: t, actual: time_ids.len() });
        }
        if d < 1 || t < 2 {
            return Err(Error::TooFewObservations(format!("proxies are {d}x{t}")));
        }
        check_labels(&proxy_ids)?;
        check_labels(&time_ids)?;
        check_rows(&values, &proxy_ids)?;
        Ok(ProxyMatrix { values, proxy_ids, time_ids })
    }

    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let (d, t) = values.shape();
        Self::new(values, default_ids("w", d), default_ids("t", t))
    }

    /// Proxies labelled on the same time axis as `panel`.
    pub fn for_panel(values: DMatrix<f64>, panel: &PanelMatrix) -> Result<Self> {
        let d = values.nrows();
        Self::new(values, default_ids("w", d), panel.time_ids().to_vec())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn proxy_ids(&self) -> &[String] {
        &self.proxy_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn d(&self) -> usize {
        self.values.nrows()
    }

    pub fn t(&self) -> usize {
        self.values.ncols()
    }

    pub fn check_aligned(&self, panel: &PanelMatrix) -> Result<()> {
        if self.time_ids != panel.time_ids {
            return Err(Error::TimeMismatch("proxies".into(), "panel".into()));
        }
        Ok(())
    }

    pub fn window(&self, range: Range<usize>) -> Result<Self> {
        let cols = self.values.columns(range.start, range.len()).into_owned();
        Self::new(cols, self.proxy_ids.clone(), self.time_ids[range].to_vec())
    }

    /// Keep only the proxies at `rows`.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows);
        let ids = rows.iter().map(|&r| self.proxy_ids[r].clone()).collect();
        Self::new(values, ids, self.time_ids.clone())
    }
}

pub(crate) fn standardize_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.ncols() as f64;
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / t;
        let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t).sqrt();
        let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        row.apply(|v| *v = (*v - mean) * scale);
    }
    out
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    if source.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::Io { path: path.to_path_buf(), source }
    }
}

/// Read a labelled matrix and normalise it to series × time.
pub fn read_labeled(path: &Path, orientation: Orientation) -> Result<LabeledMatrix> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push(rec);
    }
    let Some(header) = records.first() else {
        return Err(Error::Csv(format!("{} is empty", path.display())));
    };
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = col_ids.len();
    let mut row_ids = Vec::with_capacity(records.len() - 1);
    let mut data = Vec::with_capacity((records.len() - 1) * width);
    let mut incomplete = Vec::new();
    for (r, rec) in records.iter().enumerate().skip(1) {
        let label = rec.get(0).unwrap_or_default().to_string();
        let cells: Vec<&str> = rec.iter().skip(1).collect();
        if cells.len() != width || cells.iter().any(|c| c.is_empty()) {
            incomplete.push(label);
            continue;
        }
        for (c, cell) in cells.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => {
                    return Err(Error::NonNumeric {
                        row: r + 1,
                        column: c + 2,
                        value: cell.to_string(),
                    })
                }
            }
        }
        row_ids.push(label);
    }
    if !incomplete.is_empty() {
        return Err(Error::MissingCells(incomplete));
    }
    let values = DMatrix::from_row_slice(row_ids.len(), width, &data);
    Ok(match orientation {
        Orientation::SeriesInRows => LabeledMatrix { values, row_ids, col_ids },
        Orientation::SeriesInColumns => LabeledMatrix {
            values: values.transpose(),
            row_ids: col_ids,
            col_ids: row_ids,
        },
    })
}

pub fn load_panel(path: &Path, orientation: Orientation) -> Result<PanelMatrix> {
    let m = read_labeled(path, orientation)?;
    PanelMatrix::new(m.values, m.row_ids, m.col_ids)
}

pub fn load_proxies(path: &Path, orientation: Orientation) -> Result<ProxyMatrix> {
    let m = read_labeled(path, orientation)?;
    ProxyMatrix::new(m.values, m.row_ids, m.col_ids)
}

/// Read one labelled series (e.g. a forecast target) from a matrix file.
pub fn load_series(path: &Path, orientation: Orientation, label: &str) -> Result<(DVector<f64>, Vec<String>)> {
    let m = read_labeled(path, orientation)?;
    let row = m
        .row_ids
        .iter()
        .position(|r| r == label)
        .ok_or_else(|| Error::config(format!("series {label:?} not found in {}", path.display())))?;
    Ok((m.values.row(row).transpose(), m.col_ids))
}

/// Write a labelled matrix (series × time) in the given layout.
///
/// Values are written in Rust's shortest round-trip form, so reading the file
/// back reproduces every `f64` exactly.
pub fn write_labeled(
    path: &Path,
    orientation: Orientation,
    corner: &str,
    values: &DMatrix<f64>,
    row_ids: &[String],
    col_ids: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let (outer, inner, mat) = match orientation {
        Orientation::SeriesInRows => (row_ids, col_ids, values.clone()),
        Orientation::SeriesInColumns => (col_ids, row_ids, values.transpose()),
    };
    let mut header = vec![corner.to_string()];
    header.extend(inner.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, label) in outer.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(mat.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn save_panel(panel: &PanelMatrix, path: &Path, orientation: Orientation) -> Result<()> {
    write_labeled(path, orientation, "series", &panel.values, &panel.series_ids, &panel.time_ids)
}

pub fn save_proxies(proxies: &ProxyMatrix, path: &Path, orientation: Orientation) -> Result<()> {
    write_labeled(path, orientation, "proxy", &proxies.values, &proxies.proxy_ids, &proxies.time_ids)
}
