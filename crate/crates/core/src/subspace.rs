//! Rotation-invariant accuracy measures for estimated loadings and factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor::FactorFit;

/// Canonical correlations between two column spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceMetric {
    /// Descending, each in `[0, 1]`.
    pub canonical_correlations: Vec<f64>,
    pub median: f64,
}

fn orthonormal_basis(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.ncols() == 0 || a.ncols() > a.nrows() {
        return Err(Error::RankDeficient(format!("{what}: {}x{} has no full column rank", a.nrows(), a.ncols())));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) || diag.iter().any(|&d| d <= 1e-10 * top) {
        return Err(Error::RankDeficient(format!("{what} is not of full column rank")));
    }
    Ok(qr.q())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Singular values of `Q_A'Q_B` for orthonormal bases of the two column
/// spaces, which equal those of `(A'A)^{-1/2} A'B (B'B)^{-1/2}`.
pub fn canonical_correlations(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SubspaceMetric> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension { what: "canonical correlation rows", expected: a.nrows(), actual: b.nrows() });
    }
    let qa = orthonormal_basis(a, "first argument")?;
    let qb = orthonormal_basis(b, "second argument")?;
    let cross = qa.tr_mul(&qb);
    let mut sv: Vec<f64> = cross
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let median = median(&sv);
    Ok(SubspaceMetric { canonical_correlations: sv, median })
}

/// `‖Λ̂F̂' − ΛF'‖²_F / ‖Λ̃F̃' − ΛF'‖²_F` for a fit against a baseline fit.
pub fn relative_estimation_error(fit: &FactorFit, baseline: &FactorFit, truth: &DMatrix<f64>) -> Result<f64> {
    relative_error_of(&fit.common_component(), &baseline.common_component(), truth)
}

pub fn relative_error_of(estimate: &DMatrix<f64>, baseline: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    for m in [estimate, baseline] {
        if m.shape() != truth.shape() {
            return Err(Error::Dimension { what: "common component", expected: truth.len(), actual: m.len() });
        }
    }
    let num = (estimate - truth).norm_squared();
    let den = (baseline - truth).norm_squared();
    if !(den > 0.0) {
        return Err(Error::Degenerate("baseline reproduces the truth exactly".into()));
    }
    Ok(num / den)
}
