//! Monte Carlo designs for proxy-explained factor models and the
//! aggregation of their accuracy metrics.
//!
//! Data follow `x_t = Λf_t + u_t`, `f_t = g(w_t) + γ_t`, with Λ and w iid
//! standard normal, `γ_t ~ N(0, σ²I)` and a forecast target
//! `y_{t+1} = β'f_t + ε_t`. Every replication draws from its own ChaCha
//! stream, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT, Uniform};

use crate::error::{Error, Result};
use crate::estimate::{estimate_from_matrices, EstimationConfig};
use crate::factor::Estimator;
use crate::forecast::{rolling_forecast_matrices, ForecastConfig, LinkModel, PredictorForm};
use crate::huber::{HuberConfig, TuningConstant};
use crate::interactive::IntConfig;
use crate::par;
use crate::sieve::SieveSpec;
use crate::subspace::{canonical_correlations, relative_error_of};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SimModel {
    /// `g(w) = D w` with `D_kj ~ U[1, 2]`.
    I,
    /// `g(w) = sin(0.5πw)` elementwise.
    II,
    /// `g(w) = 0`.
    III,
}

impl FromStr for SimModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(SimModel::I),
            "II" | "2" => Ok(SimModel::II),
            "III" | "3" => Ok(SimModel::III),
            other => Err(Error::config(format!("unknown model '{other}'"))),
        }
    }
}

impl fmt::Display for SimModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimModel::I => "I",
            SimModel::II => "II",
            SimModel::III => "III",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorLaw {
    /// `N(0, 8)`, variance 8.
    Gaussian8,
    /// `0.5·N(−1, 4) + 0.5·N(8, 1)` minus its mean 3.5.
    MixN,
    /// `2·t₃`.
    T3x2,
    /// `e^{1+2Z}` minus its mean `e³`.
    LogN,
}

impl ErrorLaw {
    pub const ALL: [ErrorLaw; 4] = [ErrorLaw::Gaussian8, ErrorLaw::MixN, ErrorLaw::T3x2, ErrorLaw::LogN];

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Gaussian8 => 8f64.sqrt() * rng.sample::<f64, _>(StandardNormal),
            ErrorLaw::MixN => {
                let z: f64 = rng.sample(StandardNormal);
                let raw = if rng.random::<bool>() { -1.0 + 2.0 * z } else { 8.0 + z };
                raw - 3.5
            }
            ErrorLaw::T3x2 => 2.0 * StudentT::new(3.0).expect("valid degrees of freedom").sample(rng),
            ErrorLaw::LogN => {
                let z: f64 = rng.sample(StandardNormal);
                (1.0 + 2.0 * z).exp() - 3f64.exp()
            }
        }
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian8" | "normal" | "gaussian" => Ok(ErrorLaw::Gaussian8),
            "mixn" => Ok(ErrorLaw::MixN),
            "t3x2" | "2t3" => Ok(ErrorLaw::T3x2),
            "logn" => Ok(ErrorLaw::LogN),
            other => Err(Error::config(format!("unknown error law '{other}'"))),
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorLaw::Gaussian8 => "gaussian8",
            ErrorLaw::MixN => "mixn",
            ErrorLaw::T3x2 => "t3x2",
            ErrorLaw::LogN => "logn",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub d: usize,
    pub model: SimModel,
    pub errors: ErrorLaw,
    pub sigma_gamma: f64,
    pub replications: usize,
    pub seed: u64,
    pub forecast_horizon: usize,
    pub estimators: Vec<Estimator>,
    pub sieve: SieveSpec,
    pub huber: HuberConfig,
    pub int: IntConfig,
    /// Run the rolling forecast comparison (the most expensive metric).
    pub forecast: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 50,
            t: 100,
            k: 5,
            d: 5,
            model: SimModel::I,
            errors: ErrorLaw::Gaussian8,
            sigma_gamma: 0.01,
            replications: 200,
            seed: 20_240_601,
            forecast_horizon: 50,
            estimators: vec![Estimator::Rpr, Estimator::SieveLs, Estimator::Pca, Estimator::Int],
            sieve: SieveSpec::fourier(5),
            huber: HuberConfig::default(),
            int: IntConfig::default(),
            forecast: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 2 || self.k == 0 || self.d == 0 {
            return Err(Error::config("simulation dimensions must be positive (N, T >= 2)"));
        }
        if !(self.sigma_gamma >= 0.0) {
            return Err(Error::config("sigma_gamma must be nonnegative"));
        }
        if matches!(self.model, SimModel::I | SimModel::II) && self.k != self.d {
            return Err(Error::config(format!("model {} needs K = d, got K={} d={}", self.model, self.k, self.d)));
        }
        if self.replications == 0 {
            return Err(Error::config("need at least one replication"));
        }
        if self.estimators.is_empty() || self.estimators.contains(&Estimator::Pca2) {
            return Err(Error::config("estimators must be a nonempty subset of rpr, sievels, pca, int"));
        }
        self.huber.validate()
    }

    fn estimation(&self, estimator: Estimator) -> EstimationConfig {
        EstimationConfig { estimator, k: self.k, sieve: self.sieve, huber: self.huber.clone(), int: self.int }
    }
}

/// Ground truth of one draw. Time runs over `T + horizon` periods; the
/// first `T` are the estimation sample.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub lambda: DMatrix<f64>,
    /// d × (T + horizon).
    pub w: DMatrix<f64>,
    /// (T + horizon) × K.
    pub f: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// `ΛF'` over the estimation sample, N × T.
    pub common: DMatrix<f64>,
    pub beta: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SimDraw {
    pub truth: SimTruth,
    /// N × (T + horizon).
    pub x: DMatrix<f64>,
    /// `y[t] = β'f_{t−1} + ε_t`; `y[0]` uses a pre-sample period.
    pub y: DVector<f64>,
}

/// Independent stream `rep` under `seed`.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // filled row by row so the draw order is easy to reason about
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    m
}

pub fn generate<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<SimDraw> {
    config.validate()?;
    let (n, k, d) = (config.n, config.k, config.d);
    let total = config.t + config.forecast_horizon;
    let lambda = normal_matrix(rng, n, k, 1.0);
    let unit = Uniform::new(1.0, 2.0).expect("valid range");
    let dmat = DMatrix::from_fn(k, d, |_, _| 0.0);
    let dmat = if config.model == SimModel::I {
        let mut m = dmat;
        for i in 0..k {
            for j in 0..d {
                m[(i, j)] = unit.sample(rng);
            }
        }
        m
    } else {
        dmat
    };
    let beta_law = Uniform::new(0.5, 1.5).expect("valid range");
    let beta = DVector::from_fn(k, |_, _| beta_law.sample(rng));
    // column 0 is the pre-sample period
    let w_all = normal_matrix(rng, d, total + 1, 1.0);
    let gamma_all = normal_matrix(rng, total + 1, k, config.sigma_gamma);
    let g_all = match config.model {
        SimModel::I => (&dmat * &w_all).transpose(),
        SimModel::II => w_all.map(|v| (0.5 * std::f64::consts::PI * v).sin()).transpose(),
        SimModel::III => DMatrix::zeros(total + 1, k),
    };
    let f_all = &g_all + &gamma_all;
    let mut u = DMatrix::zeros(n, total);
    for i in 0..n {
        for t in 0..total {
            u[(i, t)] = config.errors.sample(rng);
        }
    }
    let eps: Vec<f64> = (0..total).map(|_| rng.sample(StandardNormal)).collect();
    let f = f_all.rows(1, total).into_owned();
    let x = &lambda * f.transpose() + u;
    let y = DVector::from_fn(total, |t, _| f_all.row(t).transpose().dot(&beta) + eps[t]);
    let common = &lambda * f.rows(0, config.t).transpose();
    let truth = SimTruth {
        lambda,
        w: w_all.columns(1, total).into_owned(),
        gamma: gamma_all.rows(1, total).into_owned(),
        f,
        common,
        beta,
    };
    Ok(SimDraw { truth, x, y })
}

/// Order-sensitive FNV-1a digest of the bit patterns of a matrix.
pub fn checksum(m: &DMatrix<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in m.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMetrics {
    pub estimator: Estimator,
    pub relative_error: f64,
    pub loading_cc: f64,
    pub factor_cc: f64,
    /// Forecast squared-error sum relative to PCA's.
    pub forecast_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub metrics: Vec<EstimatorMetrics>,
    pub panel_checksum: u64,
    pub chosen_c: Option<f64>,
}

impl ReplicationResult {
    pub fn get(&self, e: Estimator) -> Option<&EstimatorMetrics> {
        self.metrics.iter().find(|m| m.estimator == e)
    }
}

/// Fit every requested estimator (plus the PCA benchmark) on one draw.
pub fn run_replication(config: &SimConfig, rep: usize) -> Result<ReplicationResult> {
    let mut rng = replication_rng(config.seed, rep);
    let draw = generate(config, &mut rng)?;
    let t = config.t;
    let x_in = draw.x.columns(0, t).into_owned();
    let w_in = draw.truth.w.columns(0, t).into_owned();
    let f_in = draw.truth.f.rows(0, t).into_owned();
    let digest = checksum(&draw.x);

    let mut order: Vec<Estimator> = vec![Estimator::Pca];
    order.extend(config.estimators.iter().copied().filter(|e| *e != Estimator::Pca));
    let mut fits = Vec::new();
    let mut chosen_c = None;
    for &e in &order {
        let est = estimate_from_matrices(&x_in, Some(&w_in), &config.estimation(e))?;
        if e == Estimator::Rpr {
            chosen_c = est.chosen_c;
        }
        fits.push((e, est.fit));
    }
    let pca_common = fits[0].1.common_component();

    let forecast_sse = if config.forecast && config.forecast_horizon > 0 {
        let sses = order
            .iter()
            .map(|&e| {
                let mut est = config.estimation(e);
                if let (Estimator::Rpr, Some(c)) = (e, chosen_c) {
                    // the constant is chosen once on the estimation sample
                    est.huber.constant = TuningConstant::Fixed(c);
                }
                let fc = ForecastConfig {
                    window: t,
                    model: LinkModel::Linear,
                    form: PredictorForm::F,
                    standardize: false,
                    ..ForecastConfig::new(t, est)
                };
                let ids: Vec<String> = (0..draw.x.ncols()).map(|i| i.to_string()).collect();
                Ok(rolling_forecast_matrices(&draw.x, Some(&draw.truth.w), &draw.y, &ids, &fc)?.sse())
            })
            .collect::<Result<Vec<f64>>>()?;
        Some(sses)
    } else {
        None
    };

    if checksum(&draw.x) != digest {
        return Err(Error::Degenerate("panel changed between estimator runs".into()));
    }
    let mut metrics = Vec::new();
    for (i, (e, fit)) in fits.iter().enumerate() {
        if !config.estimators.contains(e) {
            continue;
        }
        let relative_error = relative_error_of(&fit.common_component(), &pca_common, &draw.truth.common)?;
        let loading_cc = canonical_correlations(&draw.truth.lambda, &fit.loadings)?.median;
        let factor_cc = canonical_correlations(&f_in, &fit.factors)?.median;
        let forecast_ratio = forecast_sse.as_ref().map(|s| s[i] / s[0]);
        metrics.push(EstimatorMetrics { estimator: *e, relative_error, loading_cc, factor_cc, forecast_ratio });
    }
    Ok(ReplicationResult { replication: rep, metrics, panel_checksum: digest, chosen_c })
}

/// Mean and standard error of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> MeanSe {
        let m = values.len() as f64;
        if values.is_empty() {
            return MeanSe { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / m;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            f64::NAN
        };
        MeanSe { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub relative_error: MeanSe,
    pub loading_cc: MeanSe,
    pub factor_cc: MeanSe,
    pub forecast_ratio: Option<MeanSe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimCell {
    pub model: SimModel,
    pub errors: ErrorLaw,
    pub sigma_gamma: f64,
    pub requested: usize,
    pub replications: Vec<ReplicationResult>,
    pub failures: Vec<(usize, String)>,
    pub summaries: Vec<EstimatorSummary>,
}

impl SimCell {
    /// More than 5% of the replications failed.
    pub fn partial(&self) -> bool {
        self.failures.len() * 20 > self.requested
    }

    pub fn summary(&self, e: Estimator) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == e)
    }
}

fn summarize(estimators: &[Estimator], reps: &[ReplicationResult]) -> Vec<EstimatorSummary> {
    estimators
        .iter()
        .map(|&e| {
            let ms: Vec<&EstimatorMetrics> = reps.iter().filter_map(|r| r.get(e)).collect();
            let col = |f: fn(&EstimatorMetrics) -> f64| MeanSe::of(&ms.iter().map(|m| f(m)).collect::<Vec<_>>());
            let fr: Vec<f64> = ms.iter().filter_map(|m| m.forecast_ratio).collect();
            EstimatorSummary {
                estimator: e,
                relative_error: col(|m| m.relative_error),
                loading_cc: col(|m| m.loading_cc),
                factor_cc: col(|m| m.factor_cc),
                forecast_ratio: if fr.is_empty() { None } else { Some(MeanSe::of(&fr)) },
            }
        })
        .collect()
}

/// All replications of one design cell, aggregated in replication order.
pub fn run_cell(config: &SimConfig) -> Result<SimCell> {
    config.validate()?;
    let results = par::map_range(config.replications, |rep| run_replication(config, rep));
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => replications.push(r),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push((rep, e.to_string()));
            }
        }
    }
    let summaries = summarize(&config.estimators, &replications);
    let cell = SimCell {
        model: config.model,
        errors: config.errors,
        sigma_gamma: config.sigma_gamma,
        requested: config.replications,
        replications,
        failures,
        summaries,
    };
    if cell.partial() {
        log::warn!(
            "cell model {} / {} / sigma {} is partial: {} of {} replications failed",
            cell.model,
            cell.errors,
            cell.sigma_gamma,
            cell.failures.len(),
            cell.requested
        );
    }
    Ok(cell)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimReport {
    pub cells: Vec<SimCell>,
}

#[derive(Clone, Copy)]
enum Metric {
    RelativeError,
    LoadingCc,
    FactorCc,
    ForecastRatio,
}

impl Metric {
    fn file(self) -> &'static str {
        match self {
            Metric::RelativeError => "relative_error.csv",
            Metric::LoadingCc => "loading_cc.csv",
            Metric::FactorCc => "factor_cc.csv",
            Metric::ForecastRatio => "forecast_ratio.csv",
        }
    }

    fn layout(self) -> (Vec<SimModel>, Vec<Estimator>) {
        use Estimator::*;
        match self {
            Metric::RelativeError | Metric::ForecastRatio => {
                (vec![SimModel::I, SimModel::II, SimModel::III], vec![Rpr, SieveLs, Int])
            }
            Metric::LoadingCc | Metric::FactorCc => (vec![SimModel::I, SimModel::II], vec![Rpr, SieveLs, Pca, Int]),
        }
    }

    fn value(self, s: &EstimatorSummary) -> Option<f64> {
        match self {
            Metric::RelativeError => Some(s.relative_error.mean),
            Metric::LoadingCc => Some(s.loading_cc.mean),
            Metric::FactorCc => Some(s.factor_cc.mean),
            Metric::ForecastRatio => s.forecast_ratio.map(|m| m.mean),
        }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// Write one CSV per metric in the layout rows = (error law, σ),
/// columns = model × estimator, plus a long-format `cells.csv`.
pub fn emit_tables(report: &SimReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut rows: BTreeMap<(ErrorLaw, u64), BTreeMap<SimModel, &SimCell>> = BTreeMap::new();
    for c in &report.cells {
        rows.entry((c.errors, c.sigma_gamma.to_bits())).or_default().insert(c.model, c);
    }
    let mut written = Vec::new();
    for metric in [Metric::RelativeError, Metric::LoadingCc, Metric::FactorCc, Metric::ForecastRatio] {
        let path = dir.join(metric.file());
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        let (models, estimators) = metric.layout();
        let mut header = vec!["errors".to_string(), "sigma".to_string()];
        for m in &models {
            for e in &estimators {
                header.push(format!("{m}_{e}"));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for ((law, sigma_bits), by_model) in &rows {
            let mut rec = vec![law.to_string(), f64::from_bits(*sigma_bits).to_string()];
            for m in &models {
                for e in &estimators {
                    let v = by_model
                        .get(m)
                        .and_then(|c| c.summary(*e))
                        .and_then(|s| metric.value(s));
                    rec.push(v.map(|v| format!("{v:.4}")).unwrap_or_default());
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(io(&path))?;
        written.push(path);
    }
    let path = dir.join("cells.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record([
        "model", "errors", "sigma", "estimator", "replications", "failures", "partial",
        "relative_error", "relative_error_se", "loading_cc", "loading_cc_se", "factor_cc", "factor_cc_se",
        "forecast_ratio", "forecast_ratio_se",
    ])
    .map_err(csv_err)?;
    for c in &report.cells {
        for s in &c.summaries {
            let (fr, fr_se) = s
                .forecast_ratio
                .map(|m| (m.mean.to_string(), m.se.to_string()))
                .unwrap_or_default();
            w.write_record([
                c.model.to_string(),
                c.errors.to_string(),
                c.sigma_gamma.to_string(),
                s.estimator.to_string(),
                c.replications.len().to_string(),
                c.failures.len().to_string(),
                c.partial().to_string(),
                s.relative_error.mean.to_string(),
                s.relative_error.se.to_string(),
                s.loading_cc.mean.to_string(),
                s.loading_cc.se.to_string(),
                s.factor_cc.mean.to_string(),
                s.factor_cc.se.to_string(),
                fr,
                fr_se,
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io(&path))?;
    written.push(path);
    Ok(written)
}
