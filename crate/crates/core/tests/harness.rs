use std::f64::consts::PI;

use gestalt_core::gabor::GaborConfig;
use gestalt_core::geometry::Domain;
use gestalt_core::harness::{
    bin_bounds, bin_index, h0_montecarlo, rates_csv, run_dataset, trials_csv, wilson, H0Detector,
    BIN_COUNT, WILSON_Z95,
};
use gestalt_core::stimulus::{derive_seed, generate, StimulusSpec};
use proptest::prelude::*;

const DOMAIN: Domain = Domain {
    width: 496.0,
    height: 496.0,
};

#[test]
fn small_epsilon_controls_false_alarms() {
    let s = h0_montecarlo(H0Detector::Refined, 60, 30, 0.01, 8, None).unwrap();
    assert!(s.pass, "{}", s.line());
    assert!(s.mean - s.ci_half <= 0.01);
    assert!(h0_montecarlo(H0Detector::Basic, 60, 29, 1.0, 8, None).is_err());
}

#[test]
fn negative_batch_false_alarms_match_h0() {
    let recs: Vec<_> = (0..30)
        .map(|s| generate(&StimulusSpec::negative(120, DOMAIN, derive_seed(21, s))).unwrap())
        .collect();
    let report = run_dataset(&recs, &GaborConfig::default(), 1.0, 0).unwrap();
    let alarms = report.trials.iter().filter(|t| t.detected).count();
    let h0 = h0_montecarlo(H0Detector::Gabor, 120, 30, 1.0, 21, Some(DOMAIN)).unwrap();
    // a field with an alarm has at least one meaningful candidate
    assert!(alarms as f64 / 30.0 <= h0.mean + h0.ci_half + 1e-12);
    assert!(report.by_jitter.is_empty());
    assert!(report.trials.iter().all(|t| !t.positive && t.localization_error.is_none()));
}

#[test]
fn easy_batch_is_detected_and_localized() {
    let recs: Vec<_> = (0..20)
        .map(|s| generate(&StimulusSpec::positive(200, DOMAIN, 10, 0.0, derive_seed(31, s))).unwrap())
        .collect();
    let report = run_dataset(&recs, &GaborConfig::default(), 1.0, 0).unwrap();
    assert_eq!(report.by_cell.len(), 1);
    assert!(report.by_cell[0].rate >= 0.95, "{:?}", report.by_cell[0]);
    let spacing = 496.0 / 200f64.sqrt();
    for t in report.trials.iter().filter(|t| t.detected) {
        assert!(t.localization_error.unwrap() < spacing, "{t:?}");
    }
}

#[test]
fn dataset_runs_are_repeatable() {
    let recs: Vec<_> = [(4, PI / 3.0), (4, 0.0), (8, PI), (8, PI / 5.0)]
        .iter()
        .enumerate()
        .map(|(k, &(l, j))| generate(&StimulusSpec::positive(100, DOMAIN, l, j, k as u64)).unwrap())
        .collect();
    let before = recs.clone();
    let a = run_dataset(&recs, &GaborConfig::default(), 1.0, 2).unwrap();
    let b = run_dataset(&recs, &GaborConfig::default(), 1.0, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(recs, before);
    assert_eq!(a.skipped_rows, 2);
    assert_eq!(a.curve.total(), 4);
    assert_eq!(a.by_length.iter().map(|r| r.length).collect::<Vec<_>>(), vec![Some(4), Some(8)]);
    assert_eq!(trials_csv(&a.trials).lines().count(), 5);
    assert!(rates_csv(&a.by_cell).starts_with("length,jitter,n,detected,rate,wilson_low,wilson_high\n"));
}

#[test]
fn wilson_interval_reference() {
    let (lo, hi) = wilson(8, 10, WILSON_Z95);
    assert!((lo - 0.490162).abs() < 1e-5 && (hi - 0.943318).abs() < 1e-5, "{lo} {hi}");
    let (lo, hi) = wilson(0, 20, WILSON_Z95);
    assert_eq!(lo, 0.0);
    assert!((hi - 0.161125).abs() < 1e-5, "{hi}");
}

#[test]
fn bin_edges() {
    assert_eq!(bin_index(-100.0), 0);
    assert_eq!(bin_index(-5.0), 1);
    assert_eq!(bin_index(-0.5), 5);
    assert_eq!(bin_index(0.0), 6);
    assert_eq!(bin_index(1.999), 7);
    assert_eq!(bin_index(2.0), 8);
    assert_eq!(bin_index(f64::INFINITY), 8);
    assert_eq!(bin_index(f64::NEG_INFINITY), 0);
}

proptest! {
    #[test]
    fn every_value_lands_in_exactly_one_bin(x in -50.0f64..50.0) {
        let hits: Vec<usize> = (0..BIN_COUNT)
            .filter(|&b| {
                let (lo, hi) = bin_bounds(b);
                lo <= x && x < hi
            })
            .collect();
        prop_assert_eq!(hits, vec![bin_index(x)]);
    }
}
