//! Additive sieve bases `Φ(w_t)` for the conditional-mean regressions.

use nalgebra::{DMatrix, DVector};

use crate::data::ProxyMatrix;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    /// `sin(kπŵ), cos(kπŵ)` on covariates rescaled to `[0, 1]`.
    AdditiveFourier,
    /// `ŵ, ŵ², …` on covariates rescaled to `[0, 1]`.
    AdditivePolynomial,
    /// Raw covariates, one term each.
    Linear,
}

impl std::str::FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(BasisFamily::AdditiveFourier),
            "poly" | "polynomial" => Ok(BasisFamily::AdditivePolynomial),
            "linear" => Ok(BasisFamily::Linear),
            other => Err(Error::config(format!("unknown basis family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SieveSpec {
    pub family: BasisFamily,
    pub per_covariate_terms: usize,
    pub include_intercept: bool,
}

impl SieveSpec {
    pub fn fourier(terms: usize) -> Self {
        SieveSpec { family: BasisFamily::AdditiveFourier, per_covariate_terms: terms, include_intercept: true }
    }

    pub fn linear() -> Self {
        SieveSpec { family: BasisFamily::Linear, per_covariate_terms: 1, include_intercept: true }
    }

    /// Total basis dimension `J` for `d` covariates.
    pub fn dimension(&self, d: usize) -> usize {
        usize::from(self.include_intercept) + d * self.per_covariate_terms
    }

    fn validate(&self, d: usize, t: usize) -> Result<()> {
        if self.per_covariate_terms == 0 {
            return Err(Error::config("sieve needs at least one term per covariate"));
        }
        if self.family == BasisFamily::Linear && self.per_covariate_terms != 1 {
            return Err(Error::config("the linear sieve has exactly one term per covariate"));
        }
        let j = self.dimension(d);
        if 2 * j > t {
            return Err(Error::config(format!("sieve dimension J={j} exceeds T/2 with T={t}")));
        }
        Ok(())
    }
}

/// A fitted basis: the `J × T` design plus the covariate ranges needed to
/// evaluate it at new points.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveDesign {
    phi: DMatrix<f64>,
    spec: SieveSpec,
    ranges: Vec<(f64, f64)>,
}

impl SieveDesign {
    pub fn build(proxies: &ProxyMatrix, spec: SieveSpec) -> Result<Self> {
        Self::from_matrix(proxies.values(), spec)
    }

    /// Build from a raw `d × T` covariate matrix.
    pub fn from_matrix(w: &DMatrix<f64>, spec: SieveSpec) -> Result<Self> {
        let (d, t) = w.shape();
        spec.validate(d, t)?;
        let ranges: Vec<(f64, f64)> = w
            .row_iter()
            .map(|r| (r.min(), r.max()))
            .collect();
        let j = spec.dimension(d);
        let mut phi = DMatrix::zeros(j, t);
        let mut buf = vec![0.0; j];
        for (c, col) in w.column_iter().enumerate() {
            fill_basis(&spec, &ranges, col.iter().copied(), &mut buf);
            phi.set_column(c, &DVector::from_column_slice(&buf));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite sieve value".into()));
        }
        let gram = &phi * phi.transpose() / t as f64;
        let eig = sym_eigen_desc(&gram);
        let smallest = eig.values[j - 1];
        if !(smallest > 1e-10) {
            return Err(Error::RankDeficient(format!(
                "sieve gram matrix has smallest eigenvalue {smallest:e}"
            )));
        }
        Ok(SieveDesign { phi, spec, ranges })
    }

    /// `J × T` design; column `t` is `Φ(w_t)`.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn spec(&self) -> SieveSpec {
        self.spec
    }

    pub fn covariate_ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn t(&self) -> usize {
        self.phi.ncols()
    }

    /// `Φ(w_new)` using the stored ranges; covariates outside the training
    /// range are clamped to it first.
    pub fn evaluate(&self, w_new: &[f64]) -> Result<DVector<f64>> {
        if w_new.len() != self.ranges.len() {
            return Err(Error::Dimension { what: "proxy vector", expected: self.ranges.len(), actual: w_new.len() });
        }
        let mut buf = vec![0.0; self.dim()];
        let clamped = w_new.iter().zip(&self.ranges).map(|(&v, &(lo, hi))| v.clamp(lo, hi));
        fill_basis(&self.spec, &self.ranges, clamped, &mut buf);
        Ok(DVector::from_vec(buf))
    }
}

fn fill_basis(
    spec: &SieveSpec,
    ranges: &[(f64, f64)],
    w: impl Iterator<Item = f64>,
    out: &mut [f64],
) {
    let mut k = 0;
    if spec.include_intercept {
        out[0] = 1.0;
        k = 1;
    }
    let terms = spec.per_covariate_terms;
    for (v, &(lo, hi)) in w.zip(ranges) {
        let slot = &mut out[k..k + terms];
        let scaled = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        match spec.family {
            BasisFamily::Linear => slot[0] = v,
            BasisFamily::AdditivePolynomial => {
                let mut p = 1.0;
                for s in slot.iter_mut() {
                    p *= scaled;
                    *s = p;
                }
            }
            BasisFamily::AdditiveFourier => {
                for (m, s) in slot.iter_mut().enumerate() {
                    let freq = (m / 2 + 1) as f64 * std::f64::consts::PI;
                    *s = if m % 2 == 0 { (freq * scaled).sin() } else { (freq * scaled).cos() };
                }
            }
        }
        k += terms;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_proxies(d: usize, t: usize, seed: u64) -> ProxyMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ProxyMatrix::from_values(DMatrix::from_fn(d, t, |_, _| rng.random::<f64>() * 4.0 - 2.0)).unwrap()
    }

    #[test]
    fn linear_with_intercept() {
        let w = ProxyMatrix::from_values(DMatrix::from_row_slice(1, 4, &[0.5, -1.0, 2.0, 3.0])).unwrap();
        let s = SieveDesign::build(&w, SieveSpec::linear()).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.phi().column(1).as_slice(), &[1.0, -1.0]);
        assert_eq!(s.evaluate(&[0.0]).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn fourier_dimension_and_order() {
        let w = random_proxies(5, 100, 1);
        let s = SieveDesign::build(&w, SieveSpec::fourier(5)).unwrap();
        assert_eq!(s.dim(), 26);
        let (lo, hi) = s.covariate_ranges()[0];
        let v = w.values()[(0, 7)];
        let u = (v - lo) / (hi - lo);
        let pi = std::f64::consts::PI;
        let expect = [(pi * u).sin(), (pi * u).cos(), (2. * pi * u).sin(), (2. * pi * u).cos(), (3. * pi * u).sin()];
        for (m, e) in expect.iter().enumerate() {
            assert!((s.phi()[(1 + m, 7)] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        let mut vals = random_proxies(2, 40, 2).values().clone();
        vals.row_mut(1).fill(3.0);
        assert!(matches!(
            SieveDesign::from_matrix(&vals, SieveSpec::fourier(3)),
            Err(Error::RankDeficient(_))
        ));
        assert!(matches!(
            SieveDesign::from_matrix(&vals, SieveSpec::linear()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn too_many_terms() {
        let w = random_proxies(3, 20, 3);
        assert!(matches!(SieveDesign::build(&w, SieveSpec::fourier(5)), Err(Error::Config(_))));
    }

    #[test]
    fn evaluate_matches_training_column_and_clamps() {
        let w = random_proxies(3, 60, 4);
        let s = SieveDesign::build(&w, SieveSpec::fourier(4)).unwrap();
        let col: Vec<f64> = w.values().column(11).iter().copied().collect();
        assert_eq!(s.evaluate(&col).unwrap(), s.phi().column(11).into_owned());
        let mins: Vec<f64> = s.covariate_ranges().iter().map(|r| r.0).collect();
        let below: Vec<f64> = mins.iter().map(|m| m - 10.0).collect();
        assert_eq!(s.evaluate(&below).unwrap(), s.evaluate(&mins).unwrap());
        assert!(matches!(s.evaluate(&[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn additive_rows_are_separable() {
        let w = random_proxies(3, 60, 5);
        let base = SieveDesign::build(&w, SieveSpec::fourier(3)).unwrap();
        let mut vals = w.values().clone();
        // perturb covariate 1 strictly inside its range
        let (lo, hi) = base.covariate_ranges()[1];
        for t in 0..60 {
            let v = vals[(1, t)];
            if v > lo && v < hi {
                vals[(1, t)] = lo + (hi - lo) * 0.5 + 0.3 * (v - (lo + hi) / 2.0);
            }
        }
        let changed = SieveDesign::build(&ProxyMatrix::from_values(vals).unwrap(), SieveSpec::fourier(3)).unwrap();
        let diff = base.phi() - changed.phi();
        for r in 0..base.dim() {
            let moved = diff.row(r).amax() > 0.0;
            assert_eq!(moved, (4..7).contains(&r), "row {r}");
        }
    }
}
