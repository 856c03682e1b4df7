//! Least-squares interactive-effects baseline:
//! `min (1/T) Σ ‖x_t − h(w_t) − Λγ_t‖²` with `h` in the sieve span, fitted by
//! alternating least squares.

use nalgebra::DMatrix;

use crate::data::PanelMatrix;
use crate::error::{Error, Result};
use crate::factor::{leading_loadings, sieve_projection, Estimator, FactorFit};
use crate::sieve::SieveDesign;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntStart {
    /// `h` starts at the least-squares sieve fit of the panel.
    SieveFit,
    /// `Λ, γ` start at the principal components of the panel.
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub start: IntStart,
}

impl Default for IntConfig {
    fn default() -> Self {
        IntConfig { max_iter: 500, tol: 1e-8, start: IntStart::SieveFit }
    }
}

#[derive(Debug, Clone)]
pub struct IntFit {
    pub fit: FactorFit,
    /// N × T fitted additive part `ĥ(w_t)`.
    pub additive: DMatrix<f64>,
    /// `Λ̂` and `γ̂` of the interactive term itself (N × K and T × K).
    pub interactive_loadings: DMatrix<f64>,
    pub interactive_gamma: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every half-step (the first entry is the start).
    pub objective_trace: Vec<f64>,
}

fn objective(x: &DMatrix<f64>, h: &DMatrix<f64>, lg: &DMatrix<f64>) -> f64 {
    (x - h - lg).norm_squared() / x.ncols() as f64
}

/// Best rank-K fit `ΛΓ'` of `r` with `Λ'Λ/N = I`.
fn rank_k(r: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = r.ncols() as f64;
    let sigma = (r * r.transpose()) / t;
    let (lambda, _) = leading_loadings(&sigma, k)?;
    let gamma = r.tr_mul(&lambda) / r.nrows() as f64;
    Ok((lambda, gamma))
}

pub fn int_fit(panel: &PanelMatrix, design: &SieveDesign, k: usize, config: IntConfig) -> Result<IntFit> {
    if panel.t() != design.t() {
        return Err(Error::Dimension { what: "sieve design periods", expected: panel.t(), actual: design.t() });
    }
    if config.max_iter == 0 || !(config.tol > 0.0) {
        return Err(Error::config("alternating least squares needs max_iter >= 1 and tol > 0"));
    }
    let x = panel.values();
    let phi = design.phi();
    let (mut h, mut lambda, mut gamma) = match config.start {
        IntStart::SieveFit => {
            let h = sieve_projection(x, phi)?;
            let (l, g) = rank_k(&(x - &h), k)?;
            (h, l, g)
        }
        IntStart::Pca => {
            let (l, g) = rank_k(x, k)?;
            let h = sieve_projection(&(x - &l * g.transpose()), phi)?;
            (h, l, g)
        }
    };
    let mut lg = &lambda * gamma.transpose();
    let mut obj = objective(x, &h, &lg);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let (l, g) = rank_k(&(x - &h), k)?;
        lambda = l;
        gamma = g;
        lg = &lambda * gamma.transpose();
        trace.push(objective(x, &h, &lg));
        h = sieve_projection(&(x - &lg), phi)?;
        let next = objective(x, &h, &lg);
        trace.push(next);
        let change = (obj - next).abs() / obj.max(f64::MIN_POSITIVE);
        obj = next;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("interactive-effects fit stopped after {iterations} iterations without converging");
    }
    // Express the fit in factor form: loadings are the leading eigenvectors
    // of the fitted systematic part ĥ + Λ̂γ̂', which has rank up to J + K.
    let systematic = &h + &lg;
    let t = x.ncols() as f64;
    let (loadings, eigenvalues) = leading_loadings(&((&systematic * systematic.transpose()) / t), k)?;
    let n = x.nrows() as f64;
    let explained = h.tr_mul(&loadings) / n;
    let factors = x.tr_mul(&loadings) / n;
    let residual_components = &factors - &explained;
    let residuals = x - &loadings * factors.transpose();
    let fit = FactorFit {
        loadings,
        factors,
        explained,
        residual_components,
        residuals,
        eigenvalues,
        k,
        method: Estimator::Int,
    };
    Ok(IntFit {
        fit,
        additive: h,
        interactive_loadings: lambda,
        interactive_gamma: gamma,
        converged,
        iterations,
        objective_trace: trace,
    })
}
