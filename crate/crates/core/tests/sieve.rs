use nalgebra::DMatrix;
use proptest::prelude::*;
use proxyfactor::{BasisFamily, Error, ProxyMatrix, SieveDesign, SieveSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn uniform(d: usize, t: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    DMatrix::from_fn(d, t, |_, _| rng.random_range(-2.0..2.0))
}

#[test]
fn linear_basis_is_intercept_plus_covariate() {
    let w = ProxyMatrix::from_values(DMatrix::from_row_slice(1, 5, &[0.3, -1.0, 2.0, 0.0, 4.5])).unwrap();
    let design = SieveDesign::build(&w, SieveSpec::linear()).unwrap();
    assert_eq!(design.dim(), 2);
    for t in 0..5 {
        assert_eq!(design.phi().column(t).as_slice(), &[1.0, w.values()[(0, t)]]);
    }
    assert_eq!(design.evaluate(&[0.0]).unwrap().as_slice(), &[1.0, 0.0]);
}

#[test]
fn five_fourier_terms_on_five_proxies_give_26_rows() {
    let design = SieveDesign::from_matrix(&uniform(5, 100, 1), SieveSpec::fourier(5)).unwrap();
    assert_eq!(design.dim(), 26);
    assert_eq!(SieveSpec::fourier(5).dimension(5), 26);
    assert!(design.phi().row(0).iter().all(|&v| v == 1.0));
}

#[test]
fn degenerate_designs_are_rejected() {
    let mut w = uniform(2, 50, 2);
    w.row_mut(0).fill(1.5);
    assert!(matches!(SieveDesign::from_matrix(&w, SieveSpec::fourier(2)), Err(Error::RankDeficient(_))));
    assert!(matches!(SieveDesign::from_matrix(&uniform(4, 30, 3), SieveSpec::fourier(4)), Err(Error::Config(_))));
    let no_terms = SieveSpec { family: BasisFamily::AdditivePolynomial, per_covariate_terms: 0, include_intercept: true };
    assert!(matches!(SieveDesign::from_matrix(&uniform(1, 30, 3), no_terms), Err(Error::Config(_))));
}

#[test]
fn polynomial_basis_powers_the_rescaled_covariate() {
    let w = DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 2.0, 3.0, 4.0]);
    let spec = SieveSpec { family: BasisFamily::AdditivePolynomial, per_covariate_terms: 2, include_intercept: false };
    let design = SieveDesign::from_matrix(&w, spec).unwrap();
    assert_eq!(design.phi().column(2).as_slice(), &[0.5, 0.25]);
}

#[test]
fn evaluation_reproduces_training_columns_and_clamps() {
    let w = uniform(3, 80, 4);
    let design = SieveDesign::from_matrix(&w, SieveSpec::fourier(3)).unwrap();
    for t in [0, 17, 79] {
        let col: Vec<f64> = w.column(t).iter().copied().collect();
        assert_eq!(design.evaluate(&col).unwrap(), design.phi().column(t).into_owned());
    }
    let hi: Vec<f64> = design.covariate_ranges().iter().map(|r| r.1).collect();
    let above: Vec<f64> = hi.iter().map(|v| v + 3.0).collect();
    assert_eq!(design.evaluate(&above).unwrap(), design.evaluate(&hi).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn build_is_deterministic(seed in any::<u64>(), terms in 1usize..4) {
        let w = uniform(3, 60, seed);
        let a = SieveDesign::from_matrix(&w, SieveSpec::fourier(terms)).unwrap();
        let b = SieveDesign::from_matrix(&w, SieveSpec::fourier(terms)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn perturbing_one_covariate_only_moves_its_rows(seed in any::<u64>(), c in 0usize..3, terms in 1usize..4) {
        let w = uniform(3, 60, seed);
        let mut moved = w.clone();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
        moved.row_mut(c).apply(|v| *v += rng.random_range(-0.5..0.5));
        let a = SieveDesign::from_matrix(&w, SieveSpec::fourier(terms)).unwrap();
        let b = SieveDesign::from_matrix(&moved, SieveSpec::fourier(terms)).unwrap();
        let own = 1 + c * terms..1 + (c + 1) * terms;
        for r in 0..a.dim() {
            if !own.contains(&r) {
                prop_assert_eq!(a.phi().row(r), b.phi().row(r));
            }
        }
    }
}
