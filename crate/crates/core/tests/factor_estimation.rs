use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proxyfactor::estimate::{estimate_factors, EstimationConfig};
use proxyfactor::factor::{
    extract_fit, ic_p2_table, pca_fit, robust_sigma_at, select_k, sieve_ls_sigma, sieve_projection, Estimator,
};
use proxyfactor::interactive::{int_fit, IntConfig};
use proxyfactor::linalg::sym_eigen_desc;
use proxyfactor::subspace::{canonical_correlations, relative_error_of, relative_estimation_error};
use proxyfactor::{PanelMatrix, ProxyMatrix, SieveDesign, SieveSpec, SolverControls};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn gaussian(r: usize, c: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn proxies(d: usize, t: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    DMatrix::from_fn(d, t, |_, _| rng.random_range(-2.0..2.0))
}

/// Panel `x = Λ g(w) + noise` with `g` inside a fourier(3) span.
fn proxy_panel(n: usize, t: usize, k: usize, noise: f64, seed: u64) -> (PanelMatrix, SieveDesign, DMatrix<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = proxies(2, t, &mut rng);
    let design = SieveDesign::from_matrix(&w, SieveSpec::fourier(3)).unwrap();
    let lambda = gaussian(n, k, &mut rng);
    let g = gaussian(k, design.dim(), &mut rng) * design.phi();
    let x = &lambda * g + gaussian(n, t, &mut rng) * noise;
    (PanelMatrix::from_values(x).unwrap(), design, lambda)
}

#[test]
fn sieve_projection_examples() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let design = SieveDesign::from_matrix(&proxies(2, 40, &mut rng), SieveSpec::fourier(2)).unwrap();
    let x = design.phi().rows(1, 4).into_owned();
    let fitted = sieve_projection(&x, design.phi()).unwrap();
    assert!((&fitted - &x).amax() < 1e-10);

    let intercept = DMatrix::from_element(1, 40, 1.0);
    let y = gaussian(3, 40, &mut rng);
    let means = sieve_projection(&y, &intercept).unwrap();
    for i in 0..3 {
        let m = y.row(i).mean();
        assert!(means.row(i).iter().all(|v| (v - m).abs() < 1e-12));
    }
}

#[test]
fn sieve_moment_is_psd_with_rank_at_most_j() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let design = SieveDesign::from_matrix(&proxies(1, 60, &mut rng), SieveSpec::fourier(4)).unwrap();
    let panel = PanelMatrix::from_values(gaussian(20, 60, &mut rng)).unwrap();
    let moment = sieve_ls_sigma(&panel, &design).unwrap();
    assert_eq!(moment.sigma, moment.sigma.transpose());
    let eig = sym_eigen_desc(&moment.sigma);
    let scale = eig.values[0];
    assert!(eig.values.iter().all(|&v| v >= -1e-8 * scale));
    let rank = eig.values.iter().filter(|&&v| v > 1e-10 * scale).count();
    assert!(rank <= design.dim(), "rank {rank}");
}

#[test]
fn huge_alpha_robust_moment_equals_sieve_moment() {
    let (panel, design, _) = proxy_panel(15, 80, 2, 1.0, 3);
    let robust = robust_sigma_at(&panel, &design, 1e9, SolverControls::default()).unwrap();
    let ls = sieve_ls_sigma(&panel, &design).unwrap();
    assert!((&robust.sigma - &ls.sigma).norm() <= 1e-6 * ls.sigma.norm());
}

#[test]
fn exact_proxy_model_recovers_the_loading_space() {
    let (panel, design, lambda) = proxy_panel(30, 100, 3, 0.0, 4);
    let fit = extract_fit(&panel, &sieve_ls_sigma(&panel, &design).unwrap(), 3).unwrap();
    let cc = canonical_correlations(&lambda, &fit.loadings).unwrap();
    assert!(cc.canonical_correlations.iter().all(|c| (c - 1.0).abs() < 1e-6), "{cc:?}");
    assert!(fit.residual_components.amax() < 1e-8);
}

#[test]
fn rank_deficient_moment_is_rejected() {
    let (panel, design, _) = proxy_panel(10, 60, 1, 0.0, 5);
    let moment = sieve_ls_sigma(&panel, &design).unwrap();
    assert!(extract_fit(&panel, &moment, 2).is_err());
}

#[test]
fn loadings_follow_the_sign_convention() {
    let (panel, design, _) = proxy_panel(25, 90, 3, 0.5, 6);
    let fit = extract_fit(&panel, &sieve_ls_sigma(&panel, &design).unwrap(), 3).unwrap();
    for col in fit.loadings.column_iter() {
        let idx = col.iamax();
        assert!(col[idx] > 0.0);
    }
    assert!(fit.eigenvalues.as_slice().windows(2).all(|p| p[0] >= p[1] && p[1] > 0.0));
}

#[test]
fn pca_recovers_an_exact_low_rank_panel() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let truth = gaussian(30, 2, &mut rng) * gaussian(2, 50, &mut rng);
    let fit = pca_fit(&PanelMatrix::from_values(truth.clone()).unwrap(), 2).unwrap();
    assert!((fit.common_component() - &truth).amax() < 1e-8);
    assert_eq!(fit.residual_components.amax(), 0.0);
    assert_eq!(relative_error_of(&truth, &fit.common_component().add_scalar(1.0), &truth).unwrap(), 0.0);
}

#[test]
fn pca_leading_eigenvalue_matches_the_svd() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let x = gaussian(20, 1, &mut rng) * gaussian(1, 70, &mut rng) + gaussian(20, 70, &mut rng) * 0.3;
    let fit = pca_fit(&PanelMatrix::from_values(x.clone()).unwrap(), 1).unwrap();
    let s = x.singular_values().max();
    assert!((fit.eigenvalues[0] - s * s / 70.0).abs() < 1e-9 * s * s);
}

#[test]
fn pca_ignores_proxies() {
    let (panel, _, _) = proxy_panel(12, 60, 2, 1.0, 9);
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let w = ProxyMatrix::for_panel(proxies(2, 60, &mut rng), &panel).unwrap();
    let config = EstimationConfig::new(Estimator::Pca, 2);
    let with = estimate_factors(&panel, Some(&w), &config).unwrap().fit;
    let without = estimate_factors(&panel, None, &config).unwrap().fit;
    assert_eq!(with.loadings, without.loadings);
    assert_eq!(with.factors, without.factors);
}

#[test]
fn relative_error_of_a_fit_against_itself_is_one() {
    let (panel, design, _) = proxy_panel(12, 60, 2, 1.0, 11);
    let fit = extract_fit(&panel, &sieve_ls_sigma(&panel, &design).unwrap(), 2).unwrap();
    assert_eq!(relative_estimation_error(&fit, &fit, &DMatrix::zeros(12, 60)).unwrap(), 1.0);
    assert!(relative_estimation_error(&fit, &fit, &fit.common_component()).is_err());
}

#[test]
fn information_criterion_finds_three_strong_factors() {
    // oracle: 100 of 100 replications select 3
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let hits = (0..100)
        .filter(|_| {
            let x = gaussian(100, 3, &mut rng) * gaussian(3, 100, &mut rng) + gaussian(100, 100, &mut rng);
            select_k(&PanelMatrix::from_values(x).unwrap(), 8).unwrap() == 3
        })
        .count();
    assert!(hits >= 95, "{hits} of 100");
}

#[test]
fn information_criterion_matches_a_brute_force_table() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let x = gaussian(30, 40, &mut rng);
    let panel = PanelMatrix::from_values(x.clone()).unwrap();
    assert_eq!(select_k(&panel, 1).unwrap(), 1);
    let table = ic_p2_table(&panel, 6).unwrap();
    let (n, t) = (30.0, 40.0);
    for k in 1..=6 {
        let fit = pca_fit(&panel, k).unwrap();
        let v = (&x - fit.common_component()).norm_squared() / (n * t);
        let ic = v.ln() + k as f64 * (n + t) / (n * t) * n.min(t).ln();
        assert!((ic - table[k - 1]).abs() < 1e-9, "k={k}");
    }
    let best = (0..6).min_by(|&a, &b| table[a].total_cmp(&table[b])).unwrap() + 1;
    assert_eq!(select_k(&panel, 6).unwrap(), best);
    assert!(select_k(&panel, 16).is_err());
}

#[test]
fn interactive_effects_recover_a_pure_interactive_panel() {
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let design = SieveDesign::from_matrix(&proxies(2, 120, &mut rng), SieveSpec::fourier(2)).unwrap();
    let lambda = gaussian(25, 2, &mut rng);
    // γ orthogonal to the sieve span, so the additive part is identified as zero
    let raw = gaussian(2, 120, &mut rng) * 5.0;
    let gamma = &raw - sieve_projection(&raw, design.phi()).unwrap();
    let truth = &lambda * &gamma;
    let panel = PanelMatrix::from_values(truth.clone()).unwrap();
    let out = int_fit(&panel, &design, 2, IntConfig::default()).unwrap();
    let product = &out.interactive_loadings * out.interactive_gamma.transpose();
    assert!((&product - &truth).norm() <= 1e-4 * truth.norm());
    for pair in out.objective_trace.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-10) + 1e-12);
    }
}

#[test]
fn interactive_objective_is_monotone_on_noisy_data() {
    let (panel, design, _) = proxy_panel(20, 80, 2, 1.0, 15);
    let out = int_fit(&panel, &design, 2, IntConfig::default()).unwrap();
    assert!(out.objective_trace.len() >= 3);
    for pair in out.objective_trace.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-10));
    }
}

#[test]
fn canonical_correlation_edge_cases() {
    let mut a = DMatrix::zeros(6, 2);
    let mut b = DMatrix::zeros(6, 2);
    a[(0, 0)] = 1.0;
    a[(1, 1)] = 2.0;
    b[(3, 0)] = -1.0;
    b[(4, 1)] = 1.0;
    b[(5, 1)] = 1.0;
    let cc = canonical_correlations(&a, &b).unwrap();
    assert!(cc.canonical_correlations.iter().all(|c| c.abs() < 1e-10));
    assert!(canonical_correlations(&a, &DMatrix::zeros(6, 2)).is_err());
}

#[test]
fn first_canonical_correlation_matches_a_grid_search() {
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let a = gaussian(4, 2, &mut rng);
    let b = gaussian(4, 2, &mut rng);
    let cc = canonical_correlations(&a, &b).unwrap();
    let steps = 2000;
    let dirs: Vec<(DVector<f64>, DVector<f64>)> = (0..steps)
        .map(|i| {
            let th = std::f64::consts::PI * i as f64 / steps as f64;
            let u = DVector::from_vec(vec![th.cos(), th.sin()]);
            let (p, q) = (&a * &u, &b * &u);
            (p.normalize(), q.normalize())
        })
        .collect();
    let mut best: f64 = 0.0;
    for (p, _) in &dirs {
        for (_, q) in &dirs {
            best = best.max(p.dot(q).abs());
        }
    }
    assert!((best - cc.canonical_correlations[0]).abs() < 1e-4, "{best} vs {:?}", cc.canonical_correlations);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loadings_are_normalised_and_decomposition_is_exact(seed in any::<u64>(), k in 1usize..4) {
        let (panel, design, _) = proxy_panel(18, 70, 3, 1.0, seed);
        let fit = extract_fit(&panel, &sieve_ls_sigma(&panel, &design).unwrap(), k).unwrap();
        let gram = fit.loadings.tr_mul(&fit.loadings) / 18.0;
        prop_assert!((gram - DMatrix::identity(k, k)).amax() < 1e-8);
        prop_assert_eq!(&fit.residual_components, &(&fit.factors - &fit.explained));
    }

    #[test]
    fn permuting_series_permutes_loadings(seed in any::<u64>()) {
        let (panel, design, _) = proxy_panel(12, 60, 2, 0.5, seed);
        let fit = extract_fit(&panel, &sieve_ls_sigma(&panel, &design).unwrap(), 2).unwrap();
        let order: Vec<usize> = (0..12).rev().collect();
        let permuted = PanelMatrix::from_values(panel.values().select_rows(&order)).unwrap();
        let refit = extract_fit(&permuted, &sieve_ls_sigma(&permuted, &design).unwrap(), 2).unwrap();
        prop_assert!((refit.loadings.select_rows(&order) - &fit.loadings).amax() < 1e-8);
    }

    #[test]
    fn scaling_the_panel(seed in any::<u64>(), s in 0.1..10.0f64) {
        let (panel, design, _) = proxy_panel(12, 60, 2, 0.5, seed);
        let scaled = PanelMatrix::from_values(panel.values() * s).unwrap();
        let a = extract_fit(&panel, &sieve_ls_sigma(&panel, &design).unwrap(), 2).unwrap();
        let b = extract_fit(&scaled, &sieve_ls_sigma(&scaled, &design).unwrap(), 2).unwrap();
        prop_assert!((&b.eigenvalues - &a.eigenvalues * (s * s)).amax() < 1e-8 * s * s * a.eigenvalues[0]);
        prop_assert!((&b.loadings - &a.loadings).amax() < 1e-7);
        prop_assert!((&b.factors - &a.factors * s).amax() < 1e-7 * s * (1.0 + a.factors.amax()));
    }

    #[test]
    fn canonical_correlations_are_rotation_invariant_and_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = gaussian(30, 3, &mut rng);
        let b = gaussian(30, 3, &mut rng);
        let r = gaussian(3, 3, &mut rng) + DMatrix::identity(3, 3) * 3.0;
        let base = canonical_correlations(&a, &b).unwrap().canonical_correlations;
        let rotated = canonical_correlations(&(&a * &r), &(&b * r.transpose())).unwrap().canonical_correlations;
        let swapped = canonical_correlations(&b, &a).unwrap().canonical_correlations;
        for i in 0..3 {
            prop_assert!((base[i] - rotated[i]).abs() < 1e-10);
            prop_assert!((base[i] - swapped[i]).abs() < 1e-10);
        }
        let same = canonical_correlations(&a, &(&a * &r)).unwrap();
        prop_assert!(same.canonical_correlations.iter().all(|c| (c - 1.0).abs() < 1e-10));
    }
}
