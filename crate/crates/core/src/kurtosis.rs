//! Heavy-tail diagnostics.

use std::path::Path;

use crate::data::PanelMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_KURTOSIS_THRESHOLD: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KurtosisReport {
    pub series_ids: Vec<String>,
    pub per_series_excess_kurtosis: Vec<f64>,
    pub threshold: f64,
    /// Number of series strictly above `threshold`.
    pub count_exceeding: usize,
}

/// Sample excess kurtosis `m4 / m2^2 - 3` with central moments `m_k`.
pub fn sample_excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(a, b), v| {
        let d2 = (v - mean) * (v - mean);
        (a + d2, b + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    m4 / (m2 * m2) - 3.0
}

pub fn excess_kurtosis(panel: &PanelMatrix, threshold: f64) -> Result<KurtosisReport> {
    if panel.t() < 4 {
        return Err(Error::TooFewObservations(format!(
            "kurtosis needs T >= 4, got {}",
            panel.t()
        )));
    }
    let values: Vec<f64> = panel
        .values()
        .row_iter()
        .map(|r| sample_excess_kurtosis(&r.iter().copied().collect::<Vec<_>>()))
        .collect();
    let count_exceeding = values.iter().filter(|&&k| k > threshold).count();
    Ok(KurtosisReport {
        series_ids: panel.series_ids().to_vec(),
        per_series_excess_kurtosis: values,
        threshold,
        count_exceeding,
    })
}

impl KurtosisReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{} of {} series have excess kurtosis above {}",
            self.count_exceeding,
            self.per_series_excess_kurtosis.len(),
            self.threshold
        )
    }

    /// Two-column CSV: `series_id,excess_kurtosis`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["series_id", "excess_kurtosis"]).map_err(csv_err)?;
        for (id, k) in self.series_ids.iter().zip(&self.per_series_excess_kurtosis) {
            w.write_record([id.as_str(), &k.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }
}
