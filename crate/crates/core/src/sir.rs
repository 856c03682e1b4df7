//! Sliced inverse regression for the index space of a multi-index model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::link::LinkFit;
use crate::linalg::{row_means, sym_eigen_desc, sym_sqrt_pair, symmetrized};

/// Relative eigenvalue level at which a second moment counts as singular.
pub const WHITEN_TOL: f64 = 1e-10;
pub const DEFAULT_SLICES: usize = 10;

/// `z̃ = M̂⁻¹(z − c)` with `M̂ = ((1/T) Σ (z_t − c)(z_t − c)')^{1/2}`; the
/// centre `c` is zero unless centring was requested.
#[derive(Debug, Clone)]
pub struct WhitenedPredictors {
    pub m_hat: DMatrix<f64>,
    pub m_inv: DMatrix<f64>,
    pub z_tilde: DMatrix<f64>,
    pub center: DVector<f64>,
    pub p: usize,
}

impl WhitenedPredictors {
    pub fn transform(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.p {
            return Err(Error::Dimension { what: "predictor length", expected: self.p, actual: z.len() });
        }
        Ok(&self.m_inv * (z - &self.center))
    }
}

pub fn whiten(z: &DMatrix<f64>) -> Result<WhitenedPredictors> {
    whiten_with(z, false)
}

pub fn whiten_with(z: &DMatrix<f64>, center: bool) -> Result<WhitenedPredictors> {
    let (p, t) = z.shape();
    if p == 0 || t == 0 {
        return Err(Error::TooFewObservations("whitening needs a nonempty predictor matrix".into()));
    }
    let c = if center { row_means(z) } else { DVector::zeros(p) };
    let mut zc = z.clone();
    for mut col in zc.column_iter_mut() {
        col -= &c;
    }
    let moment = symmetrized(&((&zc * zc.transpose()) / t as f64));
    let (m_hat, m_inv) = sym_sqrt_pair(&moment, WHITEN_TOL, "predictor second moment")?;
    let z_tilde = &m_inv * &zc;
    Ok(WhitenedPredictors { m_hat, m_inv, z_tilde, center: c, p })
}

/// Slice labels by empirical-CDF cut points; values tied with a cut point
/// fall in the lower slice. Returns labels renumbered over nonempty slices
/// and the number of such slices.
pub fn slice_labels(y: &[f64], h: usize) -> (Vec<usize>, usize) {
    let n = y.len();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..h)
        .map(|k| {
            let idx = (k * n).div_ceil(h).max(1);
            sorted[idx - 1]
        })
        .collect();
    let raw: Vec<usize> = y.iter().map(|v| cuts.iter().take_while(|c| v > c).count()).collect();
    let mut used = vec![false; h];
    for &r in &raw {
        used[r] = true;
    }
    let mut remap = vec![usize::MAX; h];
    let mut next = 0;
    for (s, u) in used.iter().enumerate() {
        if *u {
            remap[s] = next;
            next += 1;
        }
    }
    (raw.iter().map(|&r| remap[r]).collect(), next)
}

/// `(1/H) Σ_h m_h m_h'` over slice means `m_h` of the whitened predictors.
#[derive(Debug, Clone)]
pub struct SlicedMoment {
    pub sigma: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub slices_used: usize,
}

pub fn sliced_moment(z_tilde: &DMatrix<f64>, y: &[f64], h: usize) -> Result<SlicedMoment> {
    let (p, n) = z_tilde.shape();
    if y.len() != n {
        return Err(Error::Dimension { what: "response length", expected: n, actual: y.len() });
    }
    if h < 2 {
        return Err(Error::config("slicing needs at least 2 slices"));
    }
    if n < 2 * h {
        return Err(Error::TooFewObservations(format!("{n} observations for {h} slices")));
    }
    let (labels, used) = slice_labels(y, h);
    if used < h {
        log::warn!("{} of {h} slices empty because of ties in the response; using {used}", h - used);
    }
    if used < 2 {
        return Err(Error::Degenerate("response takes a single value; fewer than 2 effective slices".into()));
    }
    let mut sums = DMatrix::zeros(p, used);
    let mut counts = vec![0usize; used];
    for (t, &l) in labels.iter().enumerate() {
        let mut col = sums.column_mut(l);
        col += z_tilde.column(t);
        counts[l] += 1;
    }
    let mut sigma = DMatrix::zeros(p, p);
    for (l, &c) in counts.iter().enumerate() {
        let m = sums.column(l) / c as f64;
        sigma += &m * m.transpose();
    }
    let sigma = symmetrized(&(sigma / used as f64));
    let eig = sym_eigen_desc(&sigma);
    Ok(SlicedMoment { sigma, eigenvalues: eig.values, eigenvectors: eig.vectors, slices_used: used })
}

/// Ratio estimator: `argmax_{1≤l≤L_max} λ_l / λ_{l+1}` with eigenvalues
/// floored at 1e-12; the smallest `l` wins ties.
pub fn select_l(eigenvalues: &[f64], l_max: usize) -> Result<usize> {
    if l_max == 0 || eigenvalues.len() < l_max + 1 {
        return Err(Error::config(format!(
            "ratio selection needs 1 <= L_max < number of eigenvalues ({}), got {l_max}",
            eigenvalues.len()
        )));
    }
    let ev: Vec<f64> = eigenvalues.iter().map(|v| v.max(1e-12)).collect();
    let mut best = 1;
    let mut best_ratio = ev[0] / ev[1];
    for l in 2..=l_max {
        let r = ev[l - 1] / ev[l];
        if r > best_ratio {
            best = l;
            best_ratio = r;
        }
    }
    Ok(best)
}

/// Whitening, index directions and (optionally) the fitted link.
#[derive(Debug, Clone)]
pub struct IndexModel {
    pub whitening: WhitenedPredictors,
    /// p × L orthonormal columns.
    pub directions: DMatrix<f64>,
    pub l: usize,
    pub slice_count: usize,
    pub sliced_moment: DMatrix<f64>,
    pub slice_eigenvalues: DVector<f64>,
    pub link: Option<LinkFit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirConfig {
    pub slices: usize,
    /// Upper bound for the number of indices; clipped to `p − 1`.
    pub l_max: usize,
    pub center: bool,
    /// Fixed number of indices, bypassing ratio selection.
    pub l_fixed: Option<usize>,
}

impl Default for SirConfig {
    fn default() -> Self {
        SirConfig { slices: DEFAULT_SLICES, l_max: 5, center: false, l_fixed: None }
    }
}

impl IndexModel {
    /// Index values `ψ̂' M̂⁻¹ z` for raw predictors (p × n).
    pub fn indices(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.nrows() != self.whitening.p {
            return Err(Error::Dimension { what: "predictor rows", expected: self.whitening.p, actual: z.nrows() });
        }
        let mut zc = z.clone();
        for mut col in zc.column_iter_mut() {
            col -= &self.whitening.center;
        }
        Ok(self.directions.tr_mul(&(&self.whitening.m_inv * zc)))
    }

    pub fn predict(&self, z: &DVector<f64>) -> Result<f64> {
        let link = self
            .link
            .as_ref()
            .ok_or_else(|| Error::config("index model has no fitted link"))?;
        let v = self.directions.tr_mul(&self.whitening.transform(z)?);
        Ok(link.predict(v.as_slice()))
    }
}

/// Estimate the index space of `y` given predictors `z` (p × n).
pub fn fit_index_space(z: &DMatrix<f64>, y: &[f64], config: SirConfig) -> Result<IndexModel> {
    let w = whiten_with(z, config.center)?;
    let sm = sliced_moment(&w.z_tilde, y, config.slices)?;
    let p = w.p;
    let l = match config.l_fixed {
        Some(l) if l >= 1 && l <= p => l,
        Some(l) => return Err(Error::config(format!("number of indices must be in 1..={p}, got {l}"))),
        None if p == 1 => 1,
        None => select_l(sm.eigenvalues.as_slice(), config.l_max.clamp(1, p - 1))?,
    };
    Ok(IndexModel {
        directions: sm.eigenvectors.columns(0, l).into_owned(),
        l,
        slice_count: sm.slices_used,
        sliced_moment: sm.sigma,
        slice_eigenvalues: sm.eigenvalues,
        whitening: w,
        link: None,
    })
}

/// Index space plus additive link fitted on the in-sample indices.
pub fn fit_multi_index(z: &DMatrix<f64>, y: &[f64], config: SirConfig) -> Result<IndexModel> {
    let mut model = fit_index_space(z, y, config)?;
    let v = model.directions.tr_mul(&model.whitening.z_tilde);
    model.link = Some(crate::link::fit_link(&v, y)?);
    Ok(model)
}
