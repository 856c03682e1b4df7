//! Rolling-window forecasts from estimated factors and proxies.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::{standardize_rows, PanelMatrix, ProxyMatrix};
use crate::error::{Error, Result};
use crate::estimate::{estimate_from_matrices, EstimationConfig};
use crate::factor::Estimator;
use crate::par;
use crate::sir::{fit_multi_index, SirConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkModel {
    Linear,
    MultiIndex,
}

impl FromStr for LinkModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LinkModel::Linear),
            "mindex" | "multi-index" => Ok(LinkModel::MultiIndex),
            other => Err(Error::config(format!("unknown forecast model '{other}'"))),
        }
    }
}

impl fmt::Display for LinkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkModel::Linear => "linear",
            LinkModel::MultiIndex => "mindex",
        })
    }
}

/// Which predictors enter `z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorForm {
    /// Estimated factors only.
    F,
    /// Factors and all proxies.
    FW,
    /// Factors and one proxy (zero-based row).
    FWi(usize),
    /// Proxies only.
    W,
}

impl PredictorForm {
    pub fn uses_factors(self) -> bool {
        !matches!(self, PredictorForm::W)
    }

    pub fn uses_proxies(self) -> bool {
        !matches!(self, PredictorForm::F)
    }
}

impl FromStr for PredictorForm {
    type Err = Error;

    /// `f`, `fw`, `w`, or `fwi:<i>` with a one-based proxy number.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f" => Ok(PredictorForm::F),
            "fw" => Ok(PredictorForm::FW),
            "w" => Ok(PredictorForm::W),
            _ => {
                let i = s
                    .strip_prefix("fwi:")
                    .and_then(|v| v.parse::<usize>().ok())
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| Error::config(format!("unknown predictor form '{s}'")))?;
                Ok(PredictorForm::FWi(i - 1))
            }
        }
    }
}

impl fmt::Display for PredictorForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorForm::F => f.write_str("f"),
            PredictorForm::FW => f.write_str("fw"),
            PredictorForm::FWi(i) => write!(f, "fwi:{}", i + 1),
            PredictorForm::W => f.write_str("w"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub window: usize,
    pub model: LinkModel,
    pub form: PredictorForm,
    pub estimation: EstimationConfig,
    /// z-score every panel series (and proxies used as predictors) within
    /// each window.
    pub standardize: bool,
    pub sir: SirConfig,
}

impl ForecastConfig {
    pub fn new(window: usize, estimation: EstimationConfig) -> Self {
        let sir = SirConfig { l_max: estimation.k, ..SirConfig::default() };
        ForecastConfig { window, model: LinkModel::Linear, form: PredictorForm::F, estimation, standardize: true, sir }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Column of the target in the input series.
    pub index: usize,
    pub time: String,
    pub y: f64,
    pub yhat: f64,
    /// In-window mean of `y` at this origin.
    pub window_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub predictions: Vec<Prediction>,
    pub oos_r2: f64,
    pub window_t: usize,
    pub model: LinkModel,
    pub form: PredictorForm,
    pub estimator: Estimator,
}

impl ForecastReport {
    pub fn sse(&self) -> f64 {
        self.predictions.iter().map(|p| (p.y - p.yhat).powi(2)).sum()
    }
}

/// Least squares of `y` on `[1, z]`, returned as (intercept, slopes).
fn linear_fit(z: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    let (p, n) = z.shape();
    let design = DMatrix::from_fn(n, p + 1, |t, j| if j == 0 { 1.0 } else { z[(j - 1, t)] });
    design
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-12)
        .map_err(|e| Error::Singular(format!("forecast regression: {e}")))
}

/// Predictor matrix `z` (p × W) for one window.
fn window_predictors(
    x: &DMatrix<f64>,
    w: Option<&DMatrix<f64>>,
    config: &ForecastConfig,
) -> Result<DMatrix<f64>> {
    let form = config.form;
    let factors = if form.uses_factors() {
        Some(estimate_from_matrices(x, w, &config.estimation)?.fit.factors.transpose())
    } else {
        None
    };
    let proxies = if form.uses_proxies() {
        let w = w.ok_or_else(|| Error::config(format!("predictor form {form} needs proxies")))?;
        let w = if config.standardize { standardize_rows(w) } else { w.clone() };
        Some(match form {
            PredictorForm::FWi(i) => {
                if i >= w.nrows() {
                    return Err(Error::config(format!("proxy {} requested but only {} available", i + 1, w.nrows())));
                }
                w.rows(i, 1).into_owned()
            }
            _ => w,
        })
    } else {
        None
    };
    Ok(match (factors, proxies) {
        (Some(f), Some(w)) => {
            let mut z = DMatrix::zeros(f.nrows() + w.nrows(), f.ncols());
            z.rows_mut(0, f.nrows()).copy_from(&f);
            z.rows_mut(f.nrows(), w.nrows()).copy_from(&w);
            z
        }
        (Some(f), None) => f,
        (None, Some(w)) => w,
        (None, None) => unreachable!("every predictor form uses factors or proxies"),
    })
}

fn forecast_origin(
    panel: &DMatrix<f64>,
    proxies: Option<&DMatrix<f64>>,
    y: &DVector<f64>,
    start: usize,
    config: &ForecastConfig,
) -> Result<(f64, f64)> {
    let win = config.window;
    let x = panel.columns(start, win).into_owned();
    let x = if config.standardize { standardize_rows(&x) } else { x };
    let w = proxies.map(|w| w.columns(start, win).into_owned());
    let z = window_predictors(&x, w.as_ref(), config)?;
    let pairs = z.columns(0, win - 1).into_owned();
    let targets: Vec<f64> = (1..win).map(|t| y[start + t]).collect();
    let last = z.column(win - 1).into_owned();
    let yhat = match config.model {
        LinkModel::Linear => {
            let b = linear_fit(&pairs, &targets)?;
            b[0] + b.rows(1, last.len()).dot(&last)
        }
        LinkModel::MultiIndex => {
            let sir = SirConfig { l_max: config.sir.l_max.min(z.nrows().saturating_sub(1)).max(1), ..config.sir };
            fit_multi_index(&pairs, &targets, sir)?.predict(&last)?
        }
    };
    let mean = y.rows(start, win).mean();
    Ok((yhat, mean))
}

/// One-step-ahead rolling forecasts. At origin `s` the window covers periods
/// `s..s+W`; the model is fitted on pairs `(z_t, y_{t+1})` inside it and
/// `y_{s+W}` is predicted from `z_{s+W−1}`.
pub fn rolling_forecast(
    panel: &PanelMatrix,
    proxies: Option<&ProxyMatrix>,
    y: &DVector<f64>,
    config: &ForecastConfig,
) -> Result<ForecastReport> {
    rolling_forecast_matrices(panel.values(), proxies.map(|p| p.values()), y, panel.time_ids(), config)
}

pub fn rolling_forecast_matrices(
    panel: &DMatrix<f64>,
    proxies: Option<&DMatrix<f64>>,
    y: &DVector<f64>,
    time_ids: &[String],
    config: &ForecastConfig,
) -> Result<ForecastReport> {
    let t = panel.ncols();
    if y.len() != t {
        return Err(Error::Dimension { what: "target series length", expected: t, actual: y.len() });
    }
    if let Some(w) = proxies {
        if w.ncols() != t {
            return Err(Error::Dimension { what: "proxy periods", expected: t, actual: w.ncols() });
        }
    }
    let needs_sieve = config.form.uses_factors()
        && matches!(config.estimation.estimator, Estimator::Rpr | Estimator::SieveLs | Estimator::Int);
    let j = match (needs_sieve, proxies) {
        (true, Some(w)) => config.estimation.sieve.dimension(w.nrows()),
        _ => 0,
    };
    let k = if config.form.uses_factors() { config.estimation.k } else { 0 };
    let min_window = j + k + 5;
    if config.window < min_window {
        return Err(Error::config(format!("window {} shorter than J+K+5 = {min_window}", config.window)));
    }
    if t <= config.window {
        return Err(Error::TooFewObservations(format!(
            "{t} periods leave no forecast target after a window of {}",
            config.window
        )));
    }
    let origins = t - config.window;
    let out = par::try_map_range(origins, |s| forecast_origin(panel, proxies, y, s, config))?;
    let predictions: Vec<Prediction> = out
        .iter()
        .enumerate()
        .map(|(s, &(yhat, mean))| {
            let index = s + config.window;
            Prediction {
                index,
                time: time_ids.get(index).cloned().unwrap_or_else(|| index.to_string()),
                y: y[index],
                yhat,
                window_mean: mean,
            }
        })
        .collect();
    let sse: f64 = predictions.iter().map(|p| (p.y - p.yhat).powi(2)).sum();
    let sst: f64 = predictions.iter().map(|p| (p.y - p.window_mean).powi(2)).sum();
    let oos_r2 = if sst > 0.0 { 1.0 - sse / sst } else { f64::NEG_INFINITY };
    Ok(ForecastReport {
        predictions,
        oos_r2,
        window_t: config.window,
        model: config.model,
        form: config.form,
        estimator: config.estimation.estimator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn form_parsing() {
        assert_eq!("fwi:2".parse::<PredictorForm>().unwrap(), PredictorForm::FWi(1));
        assert_eq!(PredictorForm::FWi(1).to_string(), "fwi:2");
        assert!("fwi:0".parse::<PredictorForm>().is_err());
        assert!("g".parse::<PredictorForm>().is_err());
        assert_eq!("mindex".parse::<LinkModel>().unwrap(), LinkModel::MultiIndex);
    }
}
