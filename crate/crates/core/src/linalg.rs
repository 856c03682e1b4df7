//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-pairs of a symmetric matrix, eigenvalues in descending order.
///
/// Each eigenvector is flipped so that its largest-magnitude entry is
/// positive (first such entry on exact ties), which makes the output
/// deterministic.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen_desc(m: &DMatrix<f64>) -> SortedEigen {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrized(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    SortedEigen { values, vectors }
}

/// Flip `v` so that its largest-|entry| coordinate is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    Ok(chol.solve(b))
}

pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = symmetrized(a)
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    Ok(symmetrized(&chol.inverse()))
}

/// Symmetric square root and inverse square root of a positive definite
/// matrix. Fails when the smallest eigenvalue is below `rel_tol` times the
/// largest.
pub fn sym_sqrt_pair(
    m: &DMatrix<f64>,
    rel_tol: f64,
    what: &str,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = sym_eigen_desc(m);
    let n = m.nrows();
    let top = eig.values[0];
    let bottom = eig.values[n - 1];
    if !(top > 0.0) || bottom < rel_tol * top {
        return Err(Error::Singular(format!(
            "{what}: eigenvalue ratio {bottom:e}/{top:e} below {rel_tol:e}"
        )));
    }
    let v = &eig.vectors;
    let root = v * DMatrix::from_diagonal(&eig.values.map(f64::sqrt)) * v.transpose();
    let inv_root = v * DMatrix::from_diagonal(&eig.values.map(|x| 1.0 / x.sqrt())) * v.transpose();
    Ok((symmetrized(&root), symmetrized(&inv_root)))
}

/// Least-squares coefficients of `y` on the rows of `design` (p×T).
pub fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = design * design.transpose();
    let rhs = design * y;
    spd_solve(&gram, &rhs, "least-squares gram matrix")
}

/// Column means of a matrix.
pub fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let t = m.ncols() as f64;
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_signed() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0]);
        let e = sym_eigen_desc(&m);
        assert_eq!(e.values.as_slice(), &[5.0, 2.0, 1.0]);
        assert_eq!(e.vectors.column(0).as_slice(), &[0.0, 1.0, 0.0]);
        for j in 0..3 {
            let c = e.vectors.column(j);
            let imax = c.iamax();
            assert!(c[imax] > 0.0);
        }
    }

    #[test]
    fn sqrt_pair_inverts() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (r, ir) = sym_sqrt_pair(&m, 1e-10, "m").unwrap();
        assert!((&r * &r - &m).norm() < 1e-12);
        assert!((&r * &ir - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn singular_sqrt_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(sym_sqrt_pair(&m, 1e-10, "m"), Err(Error::Singular(_))));
    }
}
