//! Test of `H₀: cov(γ_t) = 0`, idiosyncratic covariance estimators, and
//! plug-in confidence ellipsoids for the unexplained factor part `γ_t`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::factor::FactorFit;
use crate::huber::robust_location;
use crate::linalg::{spd_inverse, sym_eigen_desc, symmetrized};
use crate::par;
use crate::sieve::SieveDesign;

/// Floor applied to nonpositive idiosyncratic variances.
pub const VARIANCE_FLOOR: f64 = 1e-12;
pub const DEFAULT_TAU_C: f64 = 2.0;
pub const LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaUMode {
    Diagonal,
    SoftThreshold,
}

impl FromStr for SigmaUMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" | "diagonal" => Ok(SigmaUMode::Diagonal),
            "soft" | "soft-threshold" => Ok(SigmaUMode::SoftThreshold),
            other => Err(Error::config(format!("unknown idiosyncratic covariance mode '{other}'"))),
        }
    }
}

impl fmt::Display for SigmaUMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaUMode::Diagonal => "diag",
            SigmaUMode::SoftThreshold => "soft",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdiosyncraticCovariance {
    pub matrix: DMatrix<f64>,
    pub mode: SigmaUMode,
    /// `τ_ij` (soft-threshold mode only; zero on the diagonal).
    pub thresholds: Option<DMatrix<f64>>,
    /// Series whose variance estimate was floored.
    pub floored: Vec<usize>,
}

/// `diag{(1/T) Σ_t û_it²}`.
pub fn diag_sigma_u(fit: &FactorFit) -> IdiosyncraticCovariance {
    let u = &fit.residuals;
    let t = u.ncols() as f64;
    let mut floored = Vec::new();
    let diag = DVector::from_fn(u.nrows(), |i, _| {
        let v = u.row(i).norm_squared() / t;
        if v > VARIANCE_FLOOR {
            v
        } else {
            floored.push(i);
            VARIANCE_FLOOR
        }
    });
    if !floored.is_empty() {
        log::warn!("{} series have zero residual variance; floored at {VARIANCE_FLOOR:e}", floored.len());
    }
    IdiosyncraticCovariance { matrix: DMatrix::from_diagonal(&diag), mode: SigmaUMode::Diagonal, thresholds: None, floored }
}

/// `sgn(x)(|x| − τ)₊`.
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Robust entries `σ̂_ij` (Huber location of `û_it û_jt` at threshold
/// `alpha`), soft-thresholded off the diagonal at
/// `τ_ij = c √(ln N / T) √(σ̂_ii σ̂_jj)`.
pub fn soft_threshold_sigma_u(fit: &FactorFit, alpha: f64, c: f64) -> Result<IdiosyncraticCovariance> {
    if !(alpha > 0.0) || !(c >= 0.0) {
        return Err(Error::config("soft thresholding needs alpha > 0 and c >= 0"));
    }
    let u = &fit.residuals;
    let (n, t) = u.shape();
    if t < 2 {
        return Err(Error::TooFewObservations("robust covariance needs T >= 2".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let raw = par::map_range(pairs.len(), |p| {
        let (i, j) = pairs[p];
        let prod: Vec<f64> = (0..t).map(|s| u[(i, s)] * u[(j, s)]).collect();
        robust_location(&prod, alpha)
    });
    let mut sigma = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(raw) {
        sigma[(i, j)] = v;
        sigma[(j, i)] = v;
    }
    let mut floored = Vec::new();
    for i in 0..n {
        if !(sigma[(i, i)] > VARIANCE_FLOOR) {
            sigma[(i, i)] = VARIANCE_FLOOR;
            floored.push(i);
        }
    }
    let rate = c * ((n as f64).ln() / t as f64).sqrt();
    let mut taus = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let tau = rate * (sigma[(i, i)] * sigma[(j, j)]).sqrt();
                taus[(i, j)] = tau;
            }
        }
    }
    let mut out = sigma.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[(i, j)] = soft_threshold(sigma[(i, j)], taus[(i, j)]);
            }
        }
    }
    Ok(IdiosyncraticCovariance { matrix: out, mode: SigmaUMode::SoftThreshold, thresholds: Some(taus), floored })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub s: f64,
    pub k: usize,
    pub t: usize,
    pub z: f64,
    pub p_value: f64,
    /// `(level, reject)` for 1%, 5% and 10%.
    pub reject_at: Vec<(f64, bool)>,
    pub mode: SigmaUMode,
}

impl TestReport {
    pub fn rejects(&self, level: f64) -> bool {
        let crit = Normal::standard().inverse_cdf(1.0 - level);
        self.z > crit
    }
}

/// `(1/N) Λ̂' Σ̂_u Λ̂`.
pub fn q_hat(fit: &FactorFit, sigma_u: &IdiosyncraticCovariance) -> Result<DMatrix<f64>> {
    let n = fit.n();
    if sigma_u.matrix.nrows() != n {
        return Err(Error::Dimension { what: "idiosyncratic covariance", expected: n, actual: sigma_u.matrix.nrows() });
    }
    Ok(symmetrized(&(fit.loadings.tr_mul(&(&sigma_u.matrix * &fit.loadings)) / n as f64)))
}

/// Weighted quadratic statistic `S = (N/T) Σ_t γ̂_t' Ŵ γ̂_t` with
/// `Ŵ = ((1/N) Λ̂' Σ̂_u Λ̂)⁻¹`, standardised as `z = √(T/2K)(S − K)` and
/// referred to the upper tail of `N(0, 1)`.
pub fn test_statistic(fit: &FactorFit, sigma_u: &IdiosyncraticCovariance) -> Result<TestReport> {
    let w = spd_inverse(&q_hat(fit, sigma_u)?, "weight matrix (1/N) L' Su L")?;
    let (n, t, k) = (fit.n() as f64, fit.t(), fit.k);
    let g = &fit.residual_components;
    let quad: f64 = (0..t)
        .map(|s| {
            let row = g.row(s).transpose();
            row.dot(&(&w * &row))
        })
        .sum();
    let stat = n / t as f64 * quad;
    let z = (t as f64 / (2.0 * k as f64)).sqrt() * (stat - k as f64);
    let normal = Normal::standard();
    let p_value = normal.sf(z).clamp(0.0, 1.0);
    let reject_at = LEVELS.iter().map(|&a| (a, z > normal.inverse_cdf(1.0 - a))).collect();
    Ok(TestReport { s: stat, k, t, z, p_value, reject_at, mode: sigma_u.mode })
}

/// Sample plug-ins shared by every period.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPlugins {
    pub sigma_f: DMatrix<f64>,
    pub sigma_lambda: DMatrix<f64>,
    /// K × J.
    pub g_hat: DMatrix<f64>,
    /// J × J.
    pub s_hat: DMatrix<f64>,
    pub cov_gamma: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
    sigma_f_inv: DMatrix<f64>,
    n: usize,
    t: usize,
}

impl GammaPlugins {
    pub fn new(fit: &FactorFit, design: &SieveDesign, sigma_u: &IdiosyncraticCovariance) -> Result<Self> {
        let (n, t) = (fit.n(), fit.t());
        if design.t() != t {
            return Err(Error::Dimension { what: "sieve design periods", expected: t, actual: design.t() });
        }
        let tf = t as f64;
        let phi = design.phi();
        let sigma_f = symmetrized(&(fit.explained.tr_mul(&fit.explained) / tf));
        let sigma_f_inv = spd_inverse(&sigma_f, "explained-factor second moment")?;
        let sigma_lambda = symmetrized(&(fit.loadings.tr_mul(&fit.loadings) / n as f64));
        let g_hat = fit.factors.tr_mul(&phi.transpose()) / tf;
        let s_hat = spd_inverse(&(phi * phi.transpose() / tf), "sieve gram matrix")?;
        let cov_gamma = symmetrized(&(fit.residual_components.tr_mul(&fit.residual_components) / tf));
        let q_hat = q_hat(fit, sigma_u)?;
        Ok(GammaPlugins { sigma_f, sigma_lambda, g_hat, s_hat, cov_gamma, q_hat, sigma_f_inv, n, t })
    }
}

/// Confidence ellipsoid `{γ : (γ̂_t − γ)' V_t⁻¹ (γ̂_t − γ) ≤ r²}` for one
/// period.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaRegion {
    pub t: usize,
    pub gamma_hat: DVector<f64>,
    pub alpha_t: DVector<f64>,
    pub beta_t: DVector<f64>,
    pub m_t: DMatrix<f64>,
    pub v_t: DMatrix<f64>,
    pub radius_sq: f64,
    /// A ridge or eigenvalue clip was needed to make `V_t` positive definite.
    pub regularized: bool,
    v_inv: DMatrix<f64>,
}

impl GammaRegion {
    /// Squared Mahalanobis distance of `gamma` from the centre.
    pub fn distance_sq(&self, gamma: &DVector<f64>) -> f64 {
        let d = &self.gamma_hat - gamma;
        d.dot(&(&self.v_inv * &d))
    }

    pub fn contains(&self, gamma: &DVector<f64>) -> bool {
        self.distance_sq(gamma) <= self.radius_sq
    }
}

/// Positive-definite version of a symmetric matrix: unchanged if possible,
/// then with a `1e-10·trace` ridge, finally with eigenvalues clipped.
fn make_pd(v: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, bool) {
    let v = symmetrized(&v);
    if let Ok(inv) = spd_inverse(&v, "") {
        return (v, inv, false);
    }
    let k = v.nrows();
    let ridge = 1e-10 * v.trace().abs().max(f64::MIN_POSITIVE);
    let ridged = &v + DMatrix::identity(k, k) * ridge;
    if let Ok(inv) = spd_inverse(&ridged, "") {
        log::warn!("confidence-region covariance needed a ridge of {ridge:e}");
        return (ridged, inv, true);
    }
    let eig = sym_eigen_desc(&v);
    let floor = (1e-10 * eig.values.amax()).max(f64::MIN_POSITIVE);
    let vals = eig.values.map(|x| x.max(floor));
    let clipped = symmetrized(&(&eig.vectors * DMatrix::from_diagonal(&vals) * eig.vectors.transpose()));
    let inv = symmetrized(&(&eig.vectors * DMatrix::from_diagonal(&vals.map(|x| 1.0 / x)) * eig.vectors.transpose()));
    log::warn!("confidence-region covariance was indefinite; eigenvalues clipped at {floor:e}");
    (clipped, inv, true)
}

impl GammaPlugins {
    pub fn region(&self, fit: &FactorFit, design: &SieveDesign, t: usize, level: f64) -> Result<GammaRegion> {
        if t >= self.t {
            return Err(Error::Dimension { what: "time index", expected: self.t, actual: t });
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::config(format!("confidence level must be in (0, 1), got {level}")));
        }
        let k = fit.k;
        let gamma_hat = fit.residual_components.row(t).transpose();
        let phi_t = design.phi().column(t).into_owned();
        let beta_t = &self.sigma_f_inv * &gamma_hat;
        let alpha_t = &phi_t - self.g_hat.tr_mul(&beta_t);
        let s_alpha = &self.s_hat * &alpha_t;
        let cb = &self.cov_gamma * &beta_t;
        let cross = &cb * (self.g_hat.clone() * &s_alpha).transpose();
        let gsg = &self.g_hat * &self.s_hat * self.g_hat.transpose();
        let m_t = &self.cov_gamma * alpha_t.dot(&s_alpha) - &cross - cross.transpose()
            + gsg * beta_t.dot(&(&self.cov_gamma * &beta_t));
        let m_t = symmetrized(&m_t);
        let v = &self.sigma_lambda * &m_t * &self.sigma_lambda / self.t as f64 + &self.q_hat / self.n as f64;
        let (v_t, v_inv, regularized) = make_pd(v);
        let radius_sq = ChiSquared::new(k as f64)
            .map_err(|e| Error::config(e.to_string()))?
            .inverse_cdf(level);
        Ok(GammaRegion { t, gamma_hat, alpha_t, beta_t, m_t, v_t, radius_sq, regularized, v_inv })
    }
}

/// Plug-in confidence ellipsoid for `γ_t` (identified up to rotation) at
/// confidence `level`.
pub fn gamma_inference(
    fit: &FactorFit,
    design: &SieveDesign,
    sigma_u: &IdiosyncraticCovariance,
    t: usize,
    level: f64,
) -> Result<(GammaPlugins, GammaRegion)> {
    let plugins = GammaPlugins::new(fit, design, sigma_u)?;
    let region = plugins.region(fit, design, t, level)?;
    Ok((plugins, region))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_formula() {
        assert!((soft_threshold(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.1, 0.2), 0.0);
        assert!((soft_threshold(-0.5, 0.2) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("diag".parse::<SigmaUMode>().unwrap(), SigmaUMode::Diagonal);
        assert_eq!("soft".parse::<SigmaUMode>().unwrap(), SigmaUMode::SoftThreshold);
        assert!("full".parse::<SigmaUMode>().is_err());
    }
}
