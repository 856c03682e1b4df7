//! One-call factor estimation for any of the supported estimators.

use nalgebra::DMatrix;

use crate::data::{standardize_rows, PanelMatrix, ProxyMatrix};
use crate::error::{Error, Result};
use crate::factor::{extract_fit, pca_fit, robust_sigma, sieve_ls_sigma, Estimator, FactorFit};
use crate::huber::HuberConfig;
use crate::interactive::{int_fit, IntConfig};
use crate::sieve::{SieveDesign, SieveSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub estimator: Estimator,
    pub k: usize,
    pub sieve: SieveSpec,
    pub huber: HuberConfig,
    pub int: IntConfig,
}

impl EstimationConfig {
    pub fn new(estimator: Estimator, k: usize) -> Self {
        EstimationConfig {
            estimator,
            k,
            sieve: SieveSpec::fourier(5),
            huber: HuberConfig::default(),
            int: IntConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub fit: FactorFit,
    /// Sieve design the fit was built on, when the estimator uses proxies.
    pub design: Option<SieveDesign>,
    /// Huber tuning constant actually used (robust estimator only).
    pub chosen_c: Option<f64>,
    pub alpha_t: Option<f64>,
}

/// Fit factors on a panel with optional proxies (required for everything
/// except plain PCA).
pub fn estimate_factors(panel: &PanelMatrix, proxies: Option<&ProxyMatrix>, config: &EstimationConfig) -> Result<Estimate> {
    let need = || proxies.ok_or_else(|| Error::config(format!("estimator {} needs proxies", config.estimator)));
    if let Some(w) = proxies {
        if w.t() != panel.t() {
            return Err(Error::Dimension { what: "proxy periods", expected: panel.t(), actual: w.t() });
        }
    }
    match config.estimator {
        Estimator::Pca => Ok(Estimate { fit: pca_fit(panel, config.k)?, design: None, chosen_c: None, alpha_t: None }),
        Estimator::Pca2 => {
            let w = need()?;
            let extra = standardize_rows(w.values());
            let ids: Vec<String> = w.proxy_ids().iter().map(|s| format!("proxy:{s}")).collect();
            let stacked = panel.stacked(&extra, &ids)?;
            let mut fit = pca_fit(&stacked, config.k)?;
            fit.method = Estimator::Pca2;
            Ok(Estimate { fit, design: None, chosen_c: None, alpha_t: None })
        }
        Estimator::Rpr => {
            let design = SieveDesign::build(need()?, config.sieve)?;
            let moment = robust_sigma(panel, &design, &config.huber)?;
            let coef = moment.coefficients.as_ref().expect("robust moment carries coefficients");
            let (c, a) = (coef.chosen_c, coef.alpha_t);
            let fit = extract_fit(panel, &moment, config.k)?;
            Ok(Estimate { fit, design: Some(design), chosen_c: Some(c), alpha_t: Some(a) })
        }
        Estimator::SieveLs => {
            let design = SieveDesign::build(need()?, config.sieve)?;
            let moment = sieve_ls_sigma(panel, &design)?;
            let fit = extract_fit(panel, &moment, config.k)?;
            Ok(Estimate { fit, design: Some(design), chosen_c: None, alpha_t: None })
        }
        Estimator::Int => {
            let design = SieveDesign::build(need()?, config.sieve)?;
            let fit = int_fit(panel, &design, config.k, config.int)?.fit;
            Ok(Estimate { fit, design: Some(design), chosen_c: None, alpha_t: None })
        }
    }
}

/// Same as [`estimate_factors`] on raw matrices (N × T panel, d × T proxies).
pub fn estimate_from_matrices(x: &DMatrix<f64>, w: Option<&DMatrix<f64>>, config: &EstimationConfig) -> Result<Estimate> {
    let panel = PanelMatrix::from_values(x.clone())?;
    let proxies = match w {
        Some(w) => Some(ProxyMatrix::for_panel(w.clone(), &panel)?),
        None => None,
    };
    estimate_factors(&panel, proxies.as_ref(), config)
}
