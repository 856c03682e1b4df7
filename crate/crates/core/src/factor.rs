//! Conditional second moments, loading/factor extraction, factor-count
//! selection and the principal-components baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::PanelMatrix;
use crate::error::{Error, Result};
use crate::huber::{fit_coefficients, fit_coefficients_at, CoefficientMatrix, HuberConfig, SolverControls};
use crate::linalg::{sym_eigen_desc, symmetrized};
use crate::sieve::SieveDesign;

/// Relative eigenvalue level below which a direction counts as numerically
/// absent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Rpr,
    SieveLs,
    Pca,
    /// PCA on the panel with standardized proxies appended as extra series.
    Pca2,
    Int,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Rpr => "rpr",
            Estimator::SieveLs => "sievels",
            Estimator::Pca => "pca",
            Estimator::Pca2 => "pca2",
            Estimator::Int => "int",
        }
    }

    pub fn uses_proxies(self) -> bool {
        !matches!(self, Estimator::Pca)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rpr" => Ok(Estimator::Rpr),
            "sievels" | "sieve-ls" | "sieve_ls" => Ok(Estimator::SieveLs),
            "pca" => Ok(Estimator::Pca),
            "pca2" => Ok(Estimator::Pca2),
            "int" => Ok(Estimator::Int),
            other => Err(Error::config(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    RobustHuber,
    SieveLs,
}

/// `(1/T) Σ Ê(x_t|w_t) Ê(x_t|w_t)'` together with the fitted conditional
/// means it was built from.
#[derive(Debug, Clone)]
pub struct ConditionalSecondMoment {
    pub sigma: DMatrix<f64>,
    pub method: MomentMethod,
    /// N × T matrix of fitted conditional means.
    pub fitted: DMatrix<f64>,
    /// Huber diagnostics; `None` for the least-squares moment.
    pub coefficients: Option<CoefficientMatrix>,
}

fn second_moment(fitted: &DMatrix<f64>) -> DMatrix<f64> {
    let t = fitted.ncols() as f64;
    symmetrized(&((fitted * fitted.transpose()) / t))
}

fn check_periods(panel: &PanelMatrix, design: &SieveDesign) -> Result<()> {
    if panel.t() != design.t() {
        return Err(Error::Dimension { what: "sieve design periods", expected: panel.t(), actual: design.t() });
    }
    Ok(())
}

/// Robust moment from Huber-regressed sieve coefficients.
pub fn robust_sigma(panel: &PanelMatrix, design: &SieveDesign, config: &HuberConfig) -> Result<ConditionalSecondMoment> {
    check_periods(panel, design)?;
    let coef = fit_coefficients(panel, design, config)?;
    Ok(robust_from_coefficients(coef, design))
}

/// Robust moment at an explicit Huber threshold `alpha`.
pub fn robust_sigma_at(
    panel: &PanelMatrix,
    design: &SieveDesign,
    alpha: f64,
    controls: SolverControls,
) -> Result<ConditionalSecondMoment> {
    check_periods(panel, design)?;
    let coef = fit_coefficients_at(panel.values(), design.phi(), alpha, controls)?;
    Ok(robust_from_coefficients(coef, design))
}

fn robust_from_coefficients(coef: CoefficientMatrix, design: &SieveDesign) -> ConditionalSecondMoment {
    let fitted = &coef.b * design.phi();
    ConditionalSecondMoment {
        sigma: second_moment(&fitted),
        method: MomentMethod::RobustHuber,
        fitted,
        coefficients: Some(coef),
    }
}

/// Least-squares sieve projection `X P` with `P = Φ'(ΦΦ')⁻¹Φ`.
pub fn sieve_projection(x: &DMatrix<f64>, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = phi * phi.transpose();
    let chol = symmetrized(&gram)
        .cholesky()
        .ok_or_else(|| Error::Singular("sieve gram matrix".into()))?;
    // coefficients B' = (ΦΦ')⁻¹ Φ X'
    let bt = chol.solve(&(phi * x.transpose()));
    Ok(bt.transpose() * phi)
}

pub fn sieve_ls_sigma(panel: &PanelMatrix, design: &SieveDesign) -> Result<ConditionalSecondMoment> {
    check_periods(panel, design)?;
    let fitted = sieve_projection(panel.values(), design.phi())?;
    Ok(ConditionalSecondMoment {
        sigma: second_moment(&fitted),
        method: MomentMethod::SieveLs,
        fitted,
        coefficients: None,
    })
}

/// Estimated loadings, factors and their proxy decomposition.
#[derive(Debug, Clone)]
pub struct FactorFit {
    /// N × K, normalised so that `Λ̂'Λ̂/N = I`.
    pub loadings: DMatrix<f64>,
    /// T × K, row t is `f̂_t`.
    pub factors: DMatrix<f64>,
    /// T × K, row t is `ĝ(w_t)`.
    pub explained: DMatrix<f64>,
    /// T × K, `factors − explained`.
    pub residual_components: DMatrix<f64>,
    /// N × T idiosyncratic residuals `x_it − λ̂_i'f̂_t`.
    pub residuals: DMatrix<f64>,
    /// Leading K eigenvalues of the second-moment matrix, descending.
    pub eigenvalues: DVector<f64>,
    pub k: usize,
    pub method: Estimator,
}

impl FactorFit {
    pub fn n(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn t(&self) -> usize {
        self.factors.nrows()
    }

    /// `Λ̂F̂'`, N × T.
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.loadings * self.factors.transpose()
    }
}

/// Leading-K loadings from a symmetric second-moment matrix.
pub(crate) fn leading_loadings(sigma: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = sigma.nrows();
    if k == 0 || k > n {
        return Err(Error::config(format!("number of factors must be in 1..={n}, got {k}")));
    }
    let eig = sym_eigen_desc(sigma);
    let top = eig.values[0];
    if !(top > 0.0) || eig.values[k - 1] <= RANK_TOL * top {
        return Err(Error::RankDeficient(format!(
            "second-moment matrix has numerical rank below K={k} (eigenvalue {} of {top:e} is {:e})",
            k,
            eig.values[k - 1]
        )));
    }
    let loadings = eig.vectors.columns(0, k) * (n as f64).sqrt();
    Ok((loadings, eig.values.rows(0, k).into_owned()))
}

/// Eigen-extraction from raw panel values and fitted conditional means.
pub(crate) fn extract_from(
    x: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    fitted: &DMatrix<f64>,
    k: usize,
    method: Estimator,
) -> Result<FactorFit> {
    let (loadings, eigenvalues) = leading_loadings(sigma, k)?;
    let n = x.nrows() as f64;
    let explained = fitted.tr_mul(&loadings) / n;
    let factors = x.tr_mul(&loadings) / n;
    let residual_components = &factors - &explained;
    let residuals = x - &loadings * factors.transpose();
    Ok(FactorFit { loadings, factors, explained, residual_components, residuals, eigenvalues, k, method })
}

pub fn extract_fit(panel: &PanelMatrix, moment: &ConditionalSecondMoment, k: usize) -> Result<FactorFit> {
    if moment.fitted.shape() != panel.values().shape() {
        return Err(Error::Dimension {
            what: "fitted conditional means",
            expected: panel.n() * panel.t(),
            actual: moment.fitted.len(),
        });
    }
    let method = match moment.method {
        MomentMethod::RobustHuber => Estimator::Rpr,
        MomentMethod::SieveLs => Estimator::SieveLs,
    };
    extract_from(panel.values(), &moment.sigma, &moment.fitted, k, method)
}

/// Principal components of `(1/T)XX'`; the explained part equals the
/// factors and the residual components are zero.
pub fn pca_fit(panel: &PanelMatrix, k: usize) -> Result<FactorFit> {
    pca_fit_matrix(panel.values(), k)
}

pub(crate) fn pca_fit_matrix(x: &DMatrix<f64>, k: usize) -> Result<FactorFit> {
    let sigma = second_moment(x);
    extract_from(x, &sigma, x, k, Estimator::Pca)
}

/// Information criterion `IC_p2(k)` for `k = 1..=k_max`.
pub fn ic_p2_table(panel: &PanelMatrix, k_max: usize) -> Result<Vec<f64>> {
    let (n, t) = (panel.n(), panel.t());
    if k_max == 0 || k_max > n.min(t) / 2 {
        return Err(Error::config(format!(
            "k_max must be in 1..={}, got {k_max}",
            n.min(t) / 2
        )));
    }
    let x = panel.values();
    let eig = sym_eigen_desc(&second_moment(x));
    let total = x.norm_squared();
    let (nf, tf) = (n as f64, t as f64);
    let penalty = (nf + tf) / (nf * tf) * nf.min(tf).ln();
    let mut explained = 0.0;
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        explained += eig.values[k - 1];
        let v = (total - tf * explained) / (nf * tf);
        if !(v > 0.0) {
            return Err(Error::Degenerate(format!("panel is fitted exactly by {k} principal components")));
        }
        out.push(v.ln() + k as f64 * penalty);
    }
    Ok(out)
}

/// Number of factors minimising `IC_p2` (smallest k on ties).
pub fn select_k(panel: &PanelMatrix, k_max: usize) -> Result<usize> {
    let ic = ic_p2_table(panel, k_max)?;
    let mut best = 0;
    for (i, v) in ic.iter().enumerate() {
        if *v < ic[best] {
            best = i;
        }
    }
    Ok(best + 1)
}
