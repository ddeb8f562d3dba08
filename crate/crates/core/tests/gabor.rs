use std::f64::consts::PI;

use gestalt_core::gabor::{
    aligned_probability, detect_gabor, tau_aligned, GaborConfig, GaborElement, GaborField,
    GaborScorer,
};
use gestalt_core::geometry::Domain;
use gestalt_core::masking::{find_unstable_pair, masking_filter};
use gestalt_core::stimulus::{generate, gen_negative, StimulusSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

const SIDE: f64 = 496.0;

/// Ten-fold precision ladder under which three aligned elements among 200
/// give an NFA of 99.5 and ten give about 1e-5.
fn tenths() -> GaborConfig {
    GaborConfig {
        width: None,
        precisions: [1.0, 2.0, 4.0, 6.0, 8.0].iter().map(|k| k * PI / 20.0).collect(),
    }
}

/// `k` horizontal elements along y = 248 plus background kept 60 px away.
fn field_with_row(k: usize, total: usize, seed: u64) -> GaborField {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut els: Vec<GaborElement> = (0..k)
        .map(|i| GaborElement {
            x: 60.0 + 35.0 * i as f64,
            y: 248.0,
            theta: 0.0,
        })
        .collect();
    while els.len() < total {
        let (x, y) = (rng.gen::<f64>() * SIDE, rng.gen::<f64>() * SIDE);
        if (y - 248.0).abs() > 60.0 {
            els.push(GaborElement {
                x,
                y,
                theta: rng.gen::<f64>() * PI,
            });
        }
    }
    GaborField::new(Domain::new(SIDE, SIDE), els).unwrap()
}

#[test]
fn tau_alignment_examples() {
    assert!(tau_aligned(0.7, 0.7, 1e-6));
    assert!(tau_aligned((0.7 + PI) % PI, 0.7, 0.01));
    assert!(tau_aligned(PI - 0.01, 0.0, 0.02));
    assert!(!tau_aligned(0.9, 0.7, 0.1));
    assert_eq!(aligned_probability(PI / 2.0), 1.0);
    assert!((aligned_probability(PI / 20.0) - 0.1).abs() < 1e-15);
}

#[test]
fn three_aligned_give_ninety_nine_and_a_half() {
    let field = field_with_row(3, 200, 1);
    let scorer = GaborScorer::new(&field, &tenths()).unwrap();
    let c = scorer.candidate(0, 2).unwrap();
    assert_eq!((c.n(), c.aligned[0]), (3, 3));
    let (nfa, tau) = scorer.score(&c);
    assert!((nfa.nfa() - 99.5).abs() < 1e-6, "{}", nfa.nfa());
    assert_eq!(tau, PI / 20.0);
    assert!(!nfa.is_meaningful(1.0));
}

#[test]
fn ten_aligned_give_about_one_in_a_hundred_thousand() {
    let field = field_with_row(10, 200, 2);
    let scorer = GaborScorer::new(&field, &tenths()).unwrap();
    let c = scorer.candidate(0, 9).unwrap();
    assert_eq!((c.n(), c.aligned[0]), (10, 10));
    let (nfa, _) = scorer.score(&c);
    assert!((nfa.value() - (9.95e-6f64).log10()).abs() < 1e-9, "{nfa}");
    assert!(nfa.is_meaningful(1.0));
}

#[test]
fn default_precisions_on_the_same_rows() {
    let three = field_with_row(3, 200, 1);
    let s = GaborScorer::new(&three, &GaborConfig::default()).unwrap();
    let (nfa, _) = s.score(&s.candidate(0, 2).unwrap());
    // 19900 * 4 / 16^3
    assert!((nfa.nfa() - 79600.0 / 4096.0).abs() < 1e-6);
    let ten = field_with_row(10, 200, 2);
    let report = detect_gabor(&ten, &GaborConfig::default(), 1.0).unwrap();
    assert!(report.best_nfa.value() < -7.0, "{}", report.best_nfa);
}

#[test]
fn half_pi_precision_never_detects() {
    let field = field_with_row(10, 60, 3);
    let cfg = GaborConfig {
        width: None,
        precisions: vec![PI / 2.0],
    };
    let report = detect_gabor(&field, &cfg, 1.0).unwrap();
    assert!(report.detections.is_empty());
    assert!(report.best_nfa.value() >= (60.0 * 59.0 / 2.0f64).log10() - 1e-12);
}

#[test]
fn best_is_minimum_over_detections() {
    let rec = generate(&StimulusSpec::positive(200, Domain::new(SIDE, SIDE), 10, 0.0, 17)).unwrap();
    let report = detect_gabor(&rec.field, &GaborConfig::default(), 1.0).unwrap();
    assert!(report.best_nfa.value() < -3.0, "{}", report.best_nfa);
    assert_eq!(report.detections.first().map(|d| d.nfa), Some(report.best_nfa));
    assert!(report.detections.windows(2).all(|w| w[0].nfa <= w[1].nfa));

    let scorer = GaborScorer::new(&rec.field, &GaborConfig::default()).unwrap();
    let kept = masking_filter(&report.detections, &scorer, 1.0);
    assert!(!kept.is_empty() && kept.len() < report.detections.len());
    assert_eq!(find_unstable_pair(&report.detections, &kept, &scorer, 1.0), None);
}

#[test]
fn rejects_bad_fields() {
    let one = GaborField::new(
        Domain::new(10.0, 10.0),
        vec![GaborElement { x: 1.0, y: 1.0, theta: 0.0 }],
    )
    .unwrap();
    assert_eq!(
        GaborScorer::new(&one, &GaborConfig::default()).unwrap_err().to_string(),
        "elements: at least 2 required"
    );
    let outside = GaborField::new(
        Domain::new(10.0, 10.0),
        vec![GaborElement { x: 11.0, y: 1.0, theta: 0.0 }],
    );
    assert!(outside.is_err());
    let bad = GaborConfig {
        width: None,
        precisions: vec![2.0],
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn aligned_counts_grow_with_precision(seed in any::<u64>()) {
        let rec = gen_negative(&StimulusSpec::negative(40, Domain::new(SIDE, SIDE), seed)).unwrap();
        let scorer = GaborScorer::new(&rec.field, &GaborConfig::default()).unwrap();
        for a in 0..rec.field.len() {
            for b in a + 1..rec.field.len() {
                let c = scorer.candidate(a, b).unwrap();
                prop_assert!(c.aligned.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(c.aligned.iter().all(|&k| k <= c.n()));
            }
        }
    }

    #[test]
    fn rigid_rotation_keeps_counts(seed in any::<u64>(), phi in 0.0f64..(2.0 * PI)) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let centre = SIDE / 2.0;
        let els: Vec<GaborElement> = (0..40)
            .map(|_| {
                let r = 200.0 * rng.gen::<f64>().sqrt();
                let a = rng.gen::<f64>() * 2.0 * PI;
                GaborElement { x: centre + r * a.cos(), y: centre + r * a.sin(), theta: rng.gen::<f64>() * PI }
            })
            .collect();
        let turned: Vec<GaborElement> = els
            .iter()
            .map(|e| {
                let (dx, dy) = (e.x - centre, e.y - centre);
                GaborElement {
                    x: centre + dx * phi.cos() - dy * phi.sin(),
                    y: centre + dx * phi.sin() + dy * phi.cos(),
                    theta: e.theta + phi,
                }
            })
            .collect();
        let dom = Domain::new(SIDE, SIDE);
        let (f1, f2) = (GaborField::new(dom, els).unwrap(), GaborField::new(dom, turned).unwrap());
        let cfg = GaborConfig { width: Some(30.0), ..GaborConfig::default() };
        let (s1, s2) = (GaborScorer::new(&f1, &cfg).unwrap(), GaborScorer::new(&f2, &cfg).unwrap());
        let mut mismatched = 0;
        for a in 0..40 {
            for b in a + 1..40 {
                let (c1, c2) = (s1.candidate(a, b).unwrap(), s2.candidate(a, b).unwrap());
                let mut in1 = c1.inside.clone();
                let mut in2 = c2.inside.clone();
                in1.sort_unstable();
                in2.sort_unstable();
                if in1 != in2 || c1.aligned != c2.aligned {
                    mismatched += 1;
                } else {
                    prop_assert!((s1.score(&c1).0.value() - s2.score(&c2).0.value()).abs() < 1e-9);
                }
            }
        }
        // an element within rounding of a band edge or a tolerance may flip
        prop_assert!(mismatched <= 1, "{} of 780 pairs differ", mismatched);
    }
}
