//! One function per subcommand. Each returns the stdout summary line.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use proxyfactor::data::{load_panel, load_proxies, load_series, save_panel, save_proxies, write_labeled};
use proxyfactor::estimate::{estimate_factors, Estimate};
use proxyfactor::factor::{select_k, Estimator, FactorFit};
use proxyfactor::forecast::{rolling_forecast, ForecastConfig, LinkModel, PredictorForm};
use proxyfactor::huber::tuning_alpha;
use proxyfactor::kurtosis::excess_kurtosis;
use proxyfactor::sim::{emit_tables, generate, replication_rng, run_cell, ErrorLaw, SimConfig, SimModel, SimReport};
use proxyfactor::sir::SirConfig;
use proxyfactor::spectest::{diag_sigma_u, soft_threshold_sigma_u, test_statistic, GammaPlugins, SigmaUMode};
use proxyfactor::{Error, Orientation, PanelMatrix, ProxyMatrix, Result};

use crate::args::{DiagnoseArgs, EstimateArgs, ForecastArgs, InputArgs, ModelArgs, SimulateArgs, SynthArgs, TestArgs};
use crate::manifest::{io_error, RunManifest};

/// Write the manifest, run `body`, then finalize the manifest either way.
fn with_manifest<F>(
    command: &str,
    flags: &impl serde::Serialize,
    inputs: &[&Path],
    seed: Option<u64>,
    out_dir: &Path,
    body: F,
) -> Result<String>
where
    F: FnOnce() -> Result<(String, Vec<PathBuf>)>,
{
    let manifest = RunManifest::begin(command, flags, inputs, seed, out_dir)?;
    let outcome = body();
    manifest.finish(outcome.as_ref().map(|(_, files)| files.as_slice()))?;
    outcome.map(|(summary, _)| summary)
}

fn input_paths<'a>(input: &'a InputArgs, model: Option<&'a ModelArgs>, extra: Option<&'a Path>) -> Vec<&'a Path> {
    let mut paths = vec![input.panel.as_path()];
    if let Some(p) = model.and_then(|m| m.proxies.as_deref()) {
        paths.push(p);
    }
    if let Some(p) = extra {
        if !paths.contains(&p) {
            paths.push(p);
        }
    }
    paths
}

fn load_inputs(input: &InputArgs, model: &ModelArgs) -> Result<(PanelMatrix, Option<ProxyMatrix>)> {
    let panel = load_panel(&input.panel, input.orientation)?;
    let proxies = match &model.proxies {
        Some(path) => {
            let w = load_proxies(path, input.orientation)?;
            w.check_aligned(&panel)?;
            Some(w)
        }
        None => None,
    };
    Ok((panel, proxies))
}

fn resolve_k(model: &ModelArgs, panel: &PanelMatrix) -> Result<usize> {
    match (model.k, model.select_k) {
        (Some(k), _) if k >= 1 => Ok(k),
        (Some(_), _) => Err(Error::Config("--k must be at least 1".into())),
        (None, true) => select_k(panel, model.k_max),
        (None, false) => Err(Error::Config("give --k or --select-k".into())),
    }
}

fn fit_model(input: &InputArgs, model: &ModelArgs) -> Result<(PanelMatrix, Estimate)> {
    let (panel, proxies) = load_inputs(input, model)?;
    let panel = if model.no_standardize { panel } else { panel.standardized() };
    let k = resolve_k(model, &panel)?;
    let config = model.estimation(k)?;
    if config.estimator.uses_proxies() && proxies.is_none() {
        return Err(Error::Config(format!("estimator {} needs --proxies", config.estimator)));
    }
    let estimate = estimate_factors(&panel, proxies.as_ref(), &config)?;
    Ok((panel, estimate))
}

fn factor_ids(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("f{i}")).collect()
}

fn write_matrix(dir: &Path, name: &str, corner: &str, m: &DMatrix<f64>, rows: &[String], cols: &[String]) -> Result<PathBuf> {
    let path = dir.join(name);
    write_labeled(&path, Orientation::SeriesInRows, corner, m, rows, cols)?;
    Ok(path)
}

fn write_fit(dir: &Path, panel: &PanelMatrix, fit: &FactorFit) -> Result<Vec<PathBuf>> {
    let ids = factor_ids(fit.k);
    let times = panel.time_ids();
    let eig = DMatrix::from_column_slice(fit.k, 1, fit.eigenvalues.as_slice());
    Ok(vec![
        write_matrix(dir, "loadings.csv", "series", &fit.loadings, panel.series_ids(), &ids)?,
        write_matrix(dir, "factors.csv", "time", &fit.factors, times, &ids)?,
        write_matrix(dir, "explained.csv", "time", &fit.explained, times, &ids)?,
        write_matrix(dir, "gamma.csv", "time", &fit.residual_components, times, &ids)?,
        write_matrix(dir, "eigenvalues.csv", "factor", &eig, &ids, &["eigenvalue".to_string()])?,
    ])
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<String> {
    let input = &args.input;
    with_manifest("diagnose", args, &[&input.panel], None, &input.out_dir, || {
        let panel = load_panel(&input.panel, input.orientation)?;
        let report = excess_kurtosis(&panel, args.threshold)?;
        let path = input.out_dir.join("kurtosis.csv");
        report.write_csv(&path)?;
        for (id, k) in report.series_ids.iter().zip(&report.per_series_excess_kurtosis) {
            if *k > report.threshold {
                log::info!("heavy-tailed series {id}: excess kurtosis {k:.3}");
            }
        }
        Ok((report.summary_line(), vec![path]))
    })
}

pub fn estimate(args: &EstimateArgs) -> Result<String> {
    let inputs = input_paths(&args.input, Some(&args.model), None);
    with_manifest("estimate", args, &inputs, None, &args.input.out_dir, || {
        let (panel, est) = fit_model(&args.input, &args.model)?;
        let files = write_fit(&args.input.out_dir, &panel, &est.fit)?;
        let mut summary = format!("estimator={} K={} N={} T={}", est.fit.method, est.fit.k, panel.n(), panel.t());
        if let (Some(c), Some(a)) = (est.chosen_c, est.alpha_t) {
            summary.push_str(&format!(" C={c} alpha={a:.4}"));
        }
        Ok((summary, files))
    })
}

pub fn test(args: &TestArgs) -> Result<String> {
    let inputs = input_paths(&args.input, Some(&args.model), None);
    let dir = &args.input.out_dir;
    with_manifest("test", args, &inputs, None, dir, || {
        let mode: SigmaUMode = args.sigma_u.parse()?;
        let (panel, est) = fit_model(&args.input, &args.model)?;
        let fit = &est.fit;
        let sigma_u = match mode {
            SigmaUMode::Diagonal => diag_sigma_u(fit),
            SigmaUMode::SoftThreshold => {
                let j = est.design.as_ref().map_or(1, |d| d.dim());
                let alpha = match est.alpha_t {
                    Some(a) => a,
                    None => tuning_alpha(1.0, fit.t(), fit.n(), j)?,
                };
                soft_threshold_sigma_u(fit, alpha, args.tau_c)?
            }
        };
        let report = test_statistic(fit, &sigma_u)?;
        let mut files = write_fit(dir, &panel, fit)?;

        let csv_path = dir.join("test.csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Csv(e.to_string()))?;
        let mut header = vec!["s".to_string(), "k".into(), "t".into(), "z".into(), "p_value".into()];
        header.extend(report.reject_at.iter().map(|(a, _)| format!("reject_{a}")));
        header.push("sigma_u".into());
        let mut row = vec![report.s.to_string(), report.k.to_string(), report.t.to_string(), report.z.to_string(), report.p_value.to_string()];
        row.extend(report.reject_at.iter().map(|(_, r)| r.to_string()));
        row.push(report.mode.to_string());
        w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
        w.write_record(&row).map_err(|e| Error::Csv(e.to_string()))?;
        w.flush().map_err(|e| io_error(&csv_path, e))?;
        files.push(csv_path);

        let decisions: Vec<String> = report
            .reject_at
            .iter()
            .map(|(a, r)| format!("{:.0}%: {}", a * 100.0, if *r { "reject" } else { "do not reject" }))
            .collect();
        let text = format!(
            "S = {:.6}\nK = {}\nT = {}\nz = {:.6}\np = {:.6}\nsigma_u = {}\n{}\n",
            report.s,
            report.k,
            report.t,
            report.z,
            report.p_value,
            report.mode,
            decisions.join("\n")
        );
        let txt_path = dir.join("test.txt");
        std::fs::write(&txt_path, text).map_err(|e| io_error(&txt_path, e))?;
        files.push(txt_path);

        if let Some(level) = args.regions {
            let design = est
                .design
                .as_ref()
                .ok_or_else(|| Error::Config("--regions needs a proxy-based estimator".into()))?;
            let plugins = GammaPlugins::new(fit, design, &sigma_u)?;
            let mut rows = Vec::with_capacity(fit.t());
            let mut regularized = 0;
            for t in 0..fit.t() {
                let region = plugins.region(fit, design, t, level)?;
                regularized += usize::from(region.regularized);
                let mut r: Vec<f64> = region.gamma_hat.iter().copied().collect();
                r.push(region.radius_sq);
                r.push(if region.regularized { 1.0 } else { 0.0 });
                rows.push(r);
            }
            if regularized > 0 {
                log::warn!("{regularized} periods needed a regularized V_t");
            }
            let width = fit.k + 2;
            let m = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
            let mut cols: Vec<String> = (1..=fit.k).map(|i| format!("gamma_{i}")).collect();
            cols.push("radius_sq".into());
            cols.push("regularized".into());
            files.push(write_matrix(dir, "gamma_regions.csv", "time", &m, panel.time_ids(), &cols)?);
        }

        let summary = format!(
            "S={:.4} z={:.4} p={:.4} reject@5%={} sigma_u={}",
            report.s,
            report.z,
            report.p_value,
            report.rejects(0.05),
            report.mode
        );
        Ok((summary, files))
    })
}

pub fn forecast(args: &ForecastArgs) -> Result<String> {
    let target_file = args.target_file.clone().unwrap_or_else(|| args.input.panel.clone());
    let inputs = input_paths(&args.input, Some(&args.model), Some(&target_file));
    let dir = &args.input.out_dir;
    with_manifest("forecast", args, &inputs, None, dir, || {
        let link: LinkModel = args.link.parse()?;
        let form: PredictorForm = args.predictors.parse()?;
        let (panel, proxies) = load_inputs(&args.input, &args.model)?;
        let (y, times) = load_series(&target_file, args.input.orientation, &args.target)?;
        if times != panel.time_ids() {
            return Err(Error::TimeMismatch(target_file.display().to_string(), args.input.panel.display().to_string()));
        }
        if form.uses_proxies() && proxies.is_none() {
            return Err(Error::Config(format!("predictors {form} need --proxies")));
        }
        if args.window >= panel.t() {
            return Err(Error::Config(format!("window {} leaves no forecast target in {} periods", args.window, panel.t())));
        }
        let k = match (args.model.k, args.model.select_k) {
            // selection only sees the first window, so no later data leaks in
            (None, true) => select_k(&panel.window(0..args.window)?.standardized(), args.model.k_max)?,
            _ => resolve_k(&args.model, &panel)?,
        };
        let estimation = args.model.estimation(k)?;
        if form.uses_factors() && estimation.estimator.uses_proxies() && proxies.is_none() {
            return Err(Error::Config(format!("estimator {} needs --proxies", estimation.estimator)));
        }
        let sir = SirConfig { slices: args.slices, l_max: k, center: args.center, l_fixed: None };
        let config = ForecastConfig {
            window: args.window,
            model: link,
            form,
            estimation,
            standardize: !args.model.no_standardize,
            sir,
        };
        let report = rolling_forecast(&panel, proxies.as_ref(), &y, &config)?;

        let path = dir.join("predictions.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Csv(e.to_string()))?;
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["time", "y", "yhat"]).map_err(csv_err)?;
        for p in &report.predictions {
            w.write_record([p.time.clone(), p.y.to_string(), p.yhat.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| io_error(&path, e))?;
        let summary = format!(
            "oos_R2={:.4} predictions={} window={} model={} predictors={} estimator={} K={k}",
            report.oos_r2,
            report.predictions.len(),
            report.window_t,
            report.model,
            report.form,
            report.estimator
        );
        let summary_path = dir.join("summary.txt");
        std::fs::write(&summary_path, format!("{summary}\n")).map_err(|e| io_error(&summary_path, e))?;
        Ok((summary, vec![path, summary_path]))
    })
}

pub fn simulate(args: &SimulateArgs) -> Result<String> {
    with_manifest("simulate", args, &[], Some(args.seed), &args.out_dir, || {
        let models = args.model.iter().map(|m| m.parse()).collect::<Result<Vec<SimModel>>>()?;
        let laws = args.errors.iter().map(|e| e.parse()).collect::<Result<Vec<ErrorLaw>>>()?;
        let estimators = args.estimators.iter().map(|e| e.parse()).collect::<Result<Vec<Estimator>>>()?;
        let mut report = SimReport::default();
        for &model in &models {
            for &errors in &laws {
                for &sigma_gamma in &args.sigma {
                    let config = SimConfig {
                        n: args.n,
                        t: args.t,
                        k: args.k,
                        d: args.k,
                        model,
                        errors,
                        sigma_gamma,
                        replications: args.reps,
                        seed: args.seed,
                        forecast_horizon: if args.no_forecast { 0 } else { args.horizon },
                        estimators: estimators.clone(),
                        forecast: !args.no_forecast,
                        ..SimConfig::default()
                    };
                    let cell = run_cell(&config)?;
                    if cell.partial() {
                        log::warn!(
                            "cell model {model} {errors} sigma {sigma_gamma}: {} of {} replications failed",
                            cell.failures.len(),
                            cell.requested
                        );
                    }
                    report.cells.push(cell);
                }
            }
        }
        let files = emit_tables(&report, &args.out_dir)?;
        let summary = format!("{} cells x {} replications -> {}", report.cells.len(), args.reps, args.out_dir.display());
        Ok((summary, files))
    })
}

pub fn synth(args: &SynthArgs) -> Result<String> {
    with_manifest("synth", args, &[], Some(args.seed), &args.out_dir, || {
        let config = SimConfig {
            n: args.n,
            t: args.t,
            k: args.d,
            d: args.d,
            errors: args.errors.parse()?,
            sigma_gamma: args.sigma,
            forecast_horizon: 0,
            replications: 1,
            ..SimConfig::default()
        };
        let draw = generate(&config, &mut replication_rng(args.seed, 0))?;
        let times: Vec<String> = (1..=args.t).map(|t| format!("t{t:04}")).collect();
        let series: Vec<String> = (1..=args.n).map(|i| format!("x{i:03}")).collect();
        let proxies_ids: Vec<String> = (1..=args.d).map(|i| format!("w{i}")).collect();
        let panel = PanelMatrix::new(draw.x, series, times.clone())?;
        let proxies = ProxyMatrix::new(draw.truth.w, proxies_ids, times.clone())?;
        let dir = &args.out_dir;
        let files = vec![dir.join("panel.csv"), dir.join("proxies.csv"), dir.join("target.csv")];
        save_panel(&panel, &files[0], Orientation::SeriesInRows)?;
        save_proxies(&proxies, &files[1], Orientation::SeriesInRows)?;
        let y = DMatrix::from_row_slice(1, args.t, draw.y.as_slice());
        write_labeled(&files[2], Orientation::SeriesInRows, "series", &y, &["y".to_string()], &times)?;
        Ok((format!("wrote {}x{} panel, {} proxies and target y to {}", args.n, args.t, args.d, dir.display()), files))
    })
}
