//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use proxyfactor::estimate::EstimationConfig;
use proxyfactor::factor::Estimator;
use proxyfactor::huber::{SolverControls, TuningConstant};
use proxyfactor::{BasisFamily, Error, HuberConfig, Orientation, Result, SieveSpec};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "proxyfactor", version, about = "Robust proxy-regressed factor models")]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Excess-kurtosis screen of a panel.
    Diagnose(DiagnoseArgs),
    /// Estimate loadings and factors.
    Estimate(EstimateArgs),
    /// Test whether the proxies fully explain the factors.
    Test(TestArgs),
    /// Rolling one-step-ahead forecasts from estimated factors.
    Forecast(ForecastArgs),
    /// Monte Carlo comparison of the estimators.
    Simulate(SimulateArgs),
    /// Write a synthetic panel, proxies and target series.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Panel CSV (series labels in the first column by default).
    #[arg(long)]
    pub panel: PathBuf,
    /// Layout of every input CSV: `rows` (series in rows) or `columns`.
    #[arg(long, default_value = "rows", value_parser = parse_orientation)]
    #[serde(serialize_with = "ser_debug")]
    pub orientation: Orientation,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Excess kurtosis above which a series is flagged.
    #[arg(long, default_value_t = proxyfactor::kurtosis::DEFAULT_KURTOSIS_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Proxy CSV, same time axis as the panel.
    #[arg(long)]
    pub proxies: Option<PathBuf>,
    #[arg(long, default_value = "rpr")]
    pub estimator: String,
    /// Number of factors.
    #[arg(long, conflicts_with = "select_k")]
    pub k: Option<usize>,
    /// Choose the number of factors by the IC_p2 criterion.
    #[arg(long)]
    pub select_k: bool,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    /// Skip per-series z-scoring of the panel.
    #[arg(long)]
    pub no_standardize: bool,
    /// Sieve family: fourier, poly or linear.
    #[arg(long, default_value = "fourier")]
    pub basis: String,
    /// Terms per covariate.
    #[arg(long, default_value_t = 5)]
    pub terms: usize,
    #[arg(long)]
    pub no_intercept: bool,
    /// Huber tuning constant, or `cv` for cross-validation over the grid.
    #[arg(long = "huber-c", default_value = "cv")]
    pub huber_c: String,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    /// Comma-separated candidate constants for cross-validation.
    #[arg(long, default_value = "0.5,1,2,4,8", value_delimiter = ',')]
    pub huber_grid: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Idiosyncratic covariance: `diag` or `soft`.
    #[arg(long, default_value = "diag")]
    pub sigma_u: String,
    /// Threshold constant for `--sigma-u soft`.
    #[arg(long, default_value_t = proxyfactor::spectest::DEFAULT_TAU_C)]
    pub tau_c: f64,
    /// Also write per-period confidence ellipsoids for γ_t at this level.
    #[arg(long)]
    pub regions: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Label of the series to forecast.
    #[arg(long)]
    pub target: String,
    /// File holding the target (default: the panel file).
    #[arg(long)]
    pub target_file: Option<PathBuf>,
    #[arg(long)]
    pub window: usize,
    /// `linear` or `mindex`.
    #[arg(long = "model", default_value = "linear")]
    pub link: String,
    /// `f`, `fw`, `fwi:<i>` (1-based proxy index) or `w`.
    #[arg(long, default_value = "f")]
    pub predictors: String,
    /// Slice count for the multi-index model.
    #[arg(long, default_value_t = proxyfactor::sir::DEFAULT_SLICES)]
    pub slices: usize,
    /// Centre predictors before whitening.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Comma-separated models: I, II, III.
    #[arg(long, default_value = "I", value_delimiter = ',')]
    pub model: Vec<String>,
    /// Comma-separated error laws: gaussian8, mixn, t3x2, logn.
    #[arg(long, default_value = "t3x2", value_delimiter = ',')]
    pub errors: Vec<String>,
    /// Comma-separated proxy-noise scales.
    #[arg(long, default_value = "0.01", value_delimiter = ',')]
    pub sigma: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub t: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub horizon: usize,
    /// Comma-separated estimators from rpr, sievels, pca, int.
    #[arg(long, default_value = "rpr,sievels,pca,int", value_delimiter = ',')]
    pub estimators: Vec<String>,
    /// Skip the rolling forecast comparison.
    #[arg(long)]
    pub no_forecast: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 131)]
    pub n: usize,
    #[arg(long, default_value_t = 480)]
    pub t: usize,
    /// Number of proxies (equal to the number of factors).
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value = "t3x2")]
    pub errors: String,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_orientation(s: &str) -> std::result::Result<Orientation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn ser_debug<S: serde::Serializer, T: std::fmt::Debug>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:?}"))
}

impl ModelArgs {
    pub fn estimator(&self) -> Result<Estimator> {
        self.estimator.parse()
    }

    pub fn sieve(&self) -> Result<SieveSpec> {
        let family: BasisFamily = self.basis.parse()?;
        let per_covariate_terms = if family == BasisFamily::Linear { 1 } else { self.terms };
        if per_covariate_terms == 0 {
            return Err(Error::Config("--terms must be at least 1".into()));
        }
        Ok(SieveSpec { family, per_covariate_terms, include_intercept: !self.no_intercept })
    }

    pub fn huber(&self) -> Result<HuberConfig> {
        let constant = if self.huber_c.eq_ignore_ascii_case("cv") {
            TuningConstant::CrossValidate
        } else {
            let c: f64 = self
                .huber_c
                .parse()
                .map_err(|_| Error::Config(format!("--huber-c must be a number or 'cv', got {:?}", self.huber_c)))?;
            TuningConstant::Fixed(c)
        };
        let config = HuberConfig {
            constant,
            cv_folds: self.cv_folds,
            grid: self.huber_grid.clone(),
            controls: SolverControls { max_iter: self.max_iter, tol: self.tol },
        };
        config.validate()?;
        Ok(config)
    }

    /// Estimation settings for a known number of factors.
    pub fn estimation(&self, k: usize) -> Result<EstimationConfig> {
        let mut config = EstimationConfig::new(self.estimator()?, k);
        config.sieve = self.sieve()?;
        config.huber = self.huber()?;
        Ok(config)
    }
}
