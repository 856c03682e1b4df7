use std::fs;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proxyfactor::data::{load_panel, load_proxies, save_panel};
use proxyfactor::kurtosis::{excess_kurtosis, sample_excess_kurtosis};
use proxyfactor::{Error, Orientation, PanelMatrix, ProxyMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StudentT};

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn small_panel_parses_in_both_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let rows = write(&dir, "rows.csv", "series,t1,t2,t3,t4\na,1,2,3,5\nb,0,1,0,2\nc,9,8,7,7.5\n");
    let panel = load_panel(&rows, Orientation::SeriesInRows).unwrap();
    assert_eq!((panel.n(), panel.t()), (3, 4));
    assert_eq!(panel.series_ids(), ["a", "b", "c"]);
    assert_eq!(panel.values()[(2, 3)], 7.5);

    let cols = write(&dir, "cols.csv", "time,a,b,c\nt1,1,0,9\nt2,2,1,8\nt3,3,0,7\nt4,5,2,7.5\n");
    let transposed = load_panel(&cols, Orientation::SeriesInColumns).unwrap();
    assert_eq!(transposed, panel);
}

#[test]
fn missing_and_non_numeric_cells_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let na = write(&dir, "na.csv", "series,t1,t2,t3\na,1,NA,3\nb,0,1,0\n");
    match load_panel(&na, Orientation::SeriesInRows) {
        Err(Error::NonNumeric { row, column, value }) => assert_eq!((row, column, value.as_str()), (2, 3, "NA")),
        other => panic!("expected a non-numeric error, got {other:?}"),
    }
    let gap = write(&dir, "gap.csv", "series,t1,t2,t3\na,1,,3\nb,0,1,0\n");
    assert!(matches!(load_panel(&gap, Orientation::SeriesInRows), Err(Error::MissingCells(r)) if r == ["a"]));
}

#[test]
fn duplicate_labels_and_flat_series_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let dup = write(&dir, "dup.csv", "series,t1,t2,t3\na,1,2,3\na,0,1,0\n");
    assert!(matches!(load_panel(&dup, Orientation::SeriesInRows), Err(Error::DuplicateLabel(l)) if l == "a"));
    let flat = write(&dir, "flat.csv", "series,t1,t2,t3\na,1,2,3\nb,4,4,4\n");
    assert!(matches!(load_panel(&flat, Orientation::SeriesInRows), Err(Error::ZeroVariance(l)) if l == "b"));
    let missing = dir.path().join("absent.csv");
    assert!(matches!(load_panel(&missing, Orientation::SeriesInRows), Err(Error::MissingFile(_))));
}

#[test]
fn proxies_must_share_the_time_axis() {
    let dir = tempfile::tempdir().unwrap();
    let panel = load_panel(&write(&dir, "p.csv", "series,t1,t2,t3\na,1,2,3\nb,0,1,0\n"), Orientation::SeriesInRows).unwrap();
    let good = load_proxies(&write(&dir, "w.csv", "proxy,t1,t2,t3\nw,1,0,2\n"), Orientation::SeriesInRows).unwrap();
    good.check_aligned(&panel).unwrap();
    let shifted = load_proxies(&write(&dir, "w2.csv", "proxy,t2,t3,t4\nw,1,0,2\n"), Orientation::SeriesInRows).unwrap();
    assert!(matches!(shifted.check_aligned(&panel), Err(Error::TimeMismatch(..))));
    assert!(ProxyMatrix::from_values(DMatrix::zeros(0, 3)).is_err());
}

#[test]
fn alternating_series_has_excess_kurtosis_minus_two() {
    let x: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
    assert!((sample_excess_kurtosis(&x) + 2.0).abs() < 1e-12);
}

#[test]
fn kurtosis_needs_four_periods() {
    let panel = PanelMatrix::from_values(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 0.0, 1.0, 0.0])).unwrap();
    assert!(matches!(excess_kurtosis(&panel, 6.0), Err(Error::TooFewObservations(_))));
}

#[test]
fn laplace_kurtosis_is_close_to_three() {
    // difference of two unit exponentials is standard Laplace, excess kurtosis 3
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..100_000).map(|_| rng.sample::<f64, _>(Exp1) - rng.sample::<f64, _>(Exp1)).collect();
    let k = sample_excess_kurtosis(&x);
    assert!((k - 3.0).abs() <= 0.8, "excess kurtosis {k}");
}

#[test]
fn student_t5_sample_is_heavier_than_normal() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let law = StudentT::new(5.0).unwrap();
    let x: Vec<f64> = (0..100_000).map(|_| rng.sample(law)).collect();
    assert!(sample_excess_kurtosis(&x) > 2.0);
}

#[test]
fn threshold_count_is_strict() {
    let heavy: Vec<f64> = (0..200).map(|i| if i == 7 { 40.0 } else { (i % 3) as f64 - 1.0 }).collect();
    let light: Vec<f64> = (0..200).map(|i| ((i * 13 % 17) as f64).sin()).collect();
    let mut data = heavy.clone();
    data.extend(light);
    let panel = PanelMatrix::from_values(DMatrix::from_row_slice(2, 200, &data)).unwrap();
    let report = excess_kurtosis(&panel, 6.0).unwrap();
    assert_eq!(report.count_exceeding, 1);
    let exact = excess_kurtosis(&panel, report.per_series_excess_kurtosis[0]).unwrap();
    assert_eq!(exact.count_exceeding, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_then_load_is_exact(seed in any::<u64>(), n in 2usize..6, t in 2usize..9, columns in any::<bool>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let values = DMatrix::from_fn(n, t, |_, _| rng.random_range(-1e6..1e6) * rng.random::<f64>().powi(7));
        let panel = PanelMatrix::from_values(values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let layout = if columns { Orientation::SeriesInColumns } else { Orientation::SeriesInRows };
        save_panel(&panel, &path, layout).unwrap();
        prop_assert_eq!(load_panel(&path, layout).unwrap(), panel);
    }

    #[test]
    fn kurtosis_is_affine_invariant(seed in any::<u64>(), a in prop_oneof![-50.0..-0.1f64, 0.1..50.0f64], b in -100.0..100.0f64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0f64).powi(3)).collect();
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((sample_excess_kurtosis(&x) - sample_excess_kurtosis(&y)).abs() < 1e-10);
    }
}
