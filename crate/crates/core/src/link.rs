//! Additive link `y ≈ α + Σ_l θ_l g_l(v_l)` fitted by backfitting with
//! local-linear smoothers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_CYCLES: usize = 50;
pub const CYCLE_TOL: f64 = 1e-6;
const BANDWIDTH_GRID: usize = 10;

fn gauss(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

/// Local-linear estimate at `x0` with weights from a Gaussian kernel.
/// Returns the estimate and the weight placed on observation `own` (if any).
fn local_linear(xs: &[f64], ys: &[f64], bw: f64, x0: f64, own: Option<usize>) -> (f64, f64) {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let d = x - x0;
        let w = gauss(d / bw);
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        t0 += w * y;
        t1 += w * d * y;
    }
    let det = s0 * s2 - s1 * s1;
    if det > 1e-10 * s0 * s2 && det > 0.0 {
        let est = (s2 * t0 - s1 * t1) / det;
        let lev = own.map_or(0.0, |i| {
            let d = xs[i] - x0;
            gauss(d / bw) * (s2 - s1 * d) / det
        });
        (est, lev)
    } else {
        // too few effective neighbours for a slope: local constant
        let lev = own.map_or(0.0, |i| gauss((xs[i] - x0) / bw) / s0);
        (t0 / s0, lev)
    }
}

fn loo_score(xs: &[f64], ys: &[f64], bw: f64) -> f64 {
    let mut sse = 0.0;
    for i in 0..xs.len() {
        let (fit, lev) = local_linear(xs, ys, bw, xs[i], Some(i));
        let denom = 1.0 - lev;
        if denom <= 1e-8 {
            return f64::INFINITY;
        }
        let r = (ys[i] - fit) / denom;
        sse += r * r;
    }
    sse
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Leave-one-out choice among 10 log-spaced bandwidths spanning
/// `[0.1, 2] × sd(x)`.
pub fn select_bandwidth(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let s = sd(xs);
    if !(s > 0.0) {
        return Err(Error::Degenerate("index values are all equal; no bandwidth".into()));
    }
    let (lo, hi) = ((0.1 * s).ln(), (2.0 * s).ln());
    let mut best = (f64::INFINITY, 2.0 * s);
    for k in 0..BANDWIDTH_GRID {
        let bw = (lo + (hi - lo) * k as f64 / (BANDWIDTH_GRID - 1) as f64).exp();
        let score = loo_score(xs, ys, bw);
        if score < best.0 {
            best = (score, bw);
        }
    }
    Ok(best.1)
}

/// One fitted additive component, evaluable at new index values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkComponent {
    /// Training index values.
    pub grid: Vec<f64>,
    /// Smoothed targets at the training index values.
    pub values: Vec<f64>,
    pub bandwidth: f64,
    /// Subtracted so the component has mean zero over the sample.
    pub center: f64,
    targets: Vec<f64>,
}

impl LinkComponent {
    fn zero(grid: Vec<f64>) -> Self {
        let n = grid.len();
        LinkComponent { grid, values: vec![0.0; n], bandwidth: 1.0, center: 0.0, targets: vec![0.0; n] }
    }

    fn smooth(grid: &[f64], targets: Vec<f64>, bandwidth: f64) -> Self {
        let raw: Vec<f64> = grid.iter().map(|&x| local_linear(grid, &targets, bandwidth, x, None).0).collect();
        let center = raw.iter().sum::<f64>() / raw.len() as f64;
        let values = raw.iter().map(|v| v - center).collect();
        LinkComponent { grid: grid.to_vec(), values, bandwidth, center, targets }
    }

    /// `g_l(v)`, with `v` clamped to the training range.
    pub fn eval(&self, v: f64) -> f64 {
        if self.targets.iter().all(|t| *t == 0.0) {
            return 0.0;
        }
        let lo = self.grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        local_linear(&self.grid, &self.targets, self.bandwidth, v.clamp(lo, hi), None).0 - self.center
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkFit {
    pub components: Vec<LinkComponent>,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub fitted: Vec<f64>,
    /// Residual sum of squares at the start and after each accepted cycle.
    pub rss_trace: Vec<f64>,
    pub cycles: usize,
    pub converged: bool,
}

impl LinkFit {
    pub fn predict(&self, v: &[f64]) -> f64 {
        self.alpha
            + self
                .components
                .iter()
                .zip(&self.theta)
                .zip(v)
                .map(|((g, th), x)| th * g.eval(*x))
                .sum::<f64>()
    }
}

fn rss(y: &[f64], fitted: &[f64]) -> f64 {
    y.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn combine(alpha: f64, theta: &[f64], comps: &[LinkComponent], n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| alpha + comps.iter().zip(theta).map(|(g, th)| th * g.values[t]).sum::<f64>())
        .collect()
}

/// Least-squares `(α, θ)` of `y` on the current component values.
fn refresh_weights(y: &[f64], comps: &[LinkComponent]) -> (f64, Vec<f64>) {
    let n = y.len();
    let l = comps.len();
    let design = DMatrix::from_fn(n, l + 1, |t, j| if j == 0 { 1.0 } else { comps[j - 1].values[t] });
    let rhs = DVector::from_column_slice(y);
    let sol = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(l + 1));
    (sol[0], sol.iter().skip(1).cloned().collect())
}

/// Backfit the additive link on index values (L × n) and responses.
pub fn fit_link(indices: &DMatrix<f64>, y: &[f64]) -> Result<LinkFit> {
    let (l, n) = indices.shape();
    if y.len() != n {
        return Err(Error::Dimension { what: "response length", expected: n, actual: y.len() });
    }
    if l == 0 {
        return Err(Error::config("link needs at least one index"));
    }
    if n <= 20 * l {
        return Err(Error::TooFewObservations(format!("{n} observations for {l} indices (need more than {})", 20 * l)));
    }
    let grids: Vec<Vec<f64>> = (0..l).map(|i| indices.row(i).iter().cloned().collect()).collect();
    let alpha0 = y.iter().sum::<f64>() / n as f64;
    let mut comps: Vec<LinkComponent> = grids.iter().map(|g| LinkComponent::zero(g.clone())).collect();
    if y.iter().all(|v| *v == y[0]) {
        return Ok(LinkFit {
            components: comps,
            theta: vec![0.0; l],
            alpha: y[0],
            fitted: vec![y[0]; n],
            rss_trace: vec![0.0],
            cycles: 0,
            converged: true,
        });
    }
    for g in &grids {
        if !(sd(g) > 0.0) {
            return Err(Error::Degenerate("index values are all equal; no bandwidth".into()));
        }
    }
    let mut alpha = alpha0;
    let mut theta: Vec<f64> = vec![1.0; l];
    let mut fitted = vec![alpha; n];
    let mut trace = vec![rss(y, &fitted)];
    let mut bandwidths: Vec<Option<f64>> = vec![None; l];
    let mut converged = false;
    let mut cycles = 0;
    while cycles < MAX_CYCLES {
        let mut next = comps.clone();
        let mut next_theta = theta.clone();
        for j in 0..l {
            let scale = if next_theta[j].abs() > 1e-12 { next_theta[j] } else { 1.0 };
            let targets: Vec<f64> = (0..n)
                .map(|t| {
                    let others: f64 = (0..l)
                        .filter(|&m| m != j)
                        .map(|m| next_theta[m] * next[m].values[t])
                        .sum();
                    (y[t] - alpha - others) / scale
                })
                .collect();
            let bw = match bandwidths[j] {
                Some(b) => b,
                None => {
                    let b = select_bandwidth(&grids[j], &targets)?;
                    bandwidths[j] = Some(b);
                    b
                }
            };
            next[j] = LinkComponent::smooth(&grids[j], targets, bw);
            next_theta[j] = scale;
        }
        let (next_alpha, refreshed) = refresh_weights(y, &next);
        let next_fitted = combine(next_alpha, &refreshed, &next, n);
        let next_rss = rss(y, &next_fitted);
        let last = *trace.last().unwrap();
        if next_rss > last {
            // a smoothing pass is not a projection; keep the better iterate
            converged = true;
            break;
        }
        cycles += 1;
        let change = fitted.iter().zip(&next_fitted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        comps = next;
        theta = refreshed;
        alpha = next_alpha;
        fitted = next_fitted;
        trace.push(next_rss);
        if change < CYCLE_TOL {
            converged = true;
            break;
        }
    }
    Ok(LinkFit { components: comps, theta, alpha, fitted, rss_trace: trace, cycles, converged })
}
