use std::f64::consts::PI;

use gestalt_core::dots::{detect, DetectorMode, DotConfig};
use gestalt_core::gabor::{detect_gabor, GaborConfig};
use gestalt_core::geometry::{orientation_distance, Domain, Point};
use gestalt_core::harness::scenes;
use gestalt_core::stimulus::{
    balanced_grid, derive_seed, gen_dot_scene, gen_negative, gen_positive, generate,
    jitter_levels, DotRecipe, StimulusKind, StimulusSpec,
};
use proptest::prelude::*;

const DOMAIN: Domain = Domain {
    width: 496.0,
    height: 496.0,
};

/// Pearson statistic of `values` in `[0, pi)` against `bins` equal cells.
fn chi_square(values: &[f64], bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for v in values {
        counts[((v / PI * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Upper 1% point of chi-square with 19 degrees of freedom.
const CHI2_19_99: f64 = 36.191;

fn min_pair_distance(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            best = best.min(points[i].dist(points[j]));
        }
    }
    best
}

#[test]
fn same_seed_same_field() {
    let neg = StimulusSpec::negative(200, DOMAIN, 42);
    assert_eq!(gen_negative(&neg).unwrap(), gen_negative(&neg).unwrap());
    let pos = StimulusSpec::positive(200, DOMAIN, 7, PI / 3.0, 42);
    let (a, b) = (gen_positive(&pos).unwrap(), gen_positive(&pos).unwrap());
    assert_eq!(a, b);
    let other = gen_positive(&StimulusSpec { seed: 43, ..pos }).unwrap();
    assert_ne!(a.field, other.field);
}

#[test]
fn background_orientations_are_uniform() {
    let thetas: Vec<f64> = (0..50)
        .flat_map(|s| {
            let rec = gen_negative(&StimulusSpec::negative(200, DOMAIN, derive_seed(5, s))).unwrap();
            rec.field.elements().iter().map(|e| e.theta).collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(thetas.len(), 10_000);
    let stat = chi_square(&thetas, 20);
    assert!(stat < CHI2_19_99, "chi2 = {stat}");
}

#[test]
fn full_jitter_planted_orientations_are_isotropic() {
    let thetas: Vec<f64> = (0..400)
        .flat_map(|s| {
            let spec = StimulusSpec::positive(60, DOMAIN, 10, PI, derive_seed(6, s));
            let rec = gen_positive(&spec).unwrap();
            let truth = rec.truth.unwrap();
            truth
                .members
                .iter()
                .map(|&m| rec.field.elements()[m].theta)
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(thetas.len(), 4000);
    let stat = chi_square(&thetas, 20);
    assert!(stat < CHI2_19_99, "chi2 = {stat}");
}

#[test]
fn zero_jitter_planted_orientations_are_exact() {
    for s in 0..20 {
        let rec = gen_positive(&StimulusSpec::positive(200, DOMAIN, 8, 0.0, s)).unwrap();
        let truth = rec.truth.unwrap();
        assert_eq!(truth.members.len(), 8);
        for &m in &truth.members {
            assert_eq!(rec.field.elements()[m].theta, truth.direction);
        }
    }
}

#[test]
fn jittered_planted_orientations_stay_in_interval() {
    for s in 0..20 {
        let j = PI / 3.0;
        let rec = gen_positive(&StimulusSpec::positive(200, DOMAIN, 10, j, s)).unwrap();
        let truth = rec.truth.unwrap();
        for &m in &truth.members {
            let d = orientation_distance(rec.field.elements()[m].theta, truth.direction);
            assert!(d <= j / 2.0 + 1e-9, "{d}");
        }
    }
}

#[test]
fn planted_elements_are_evenly_spaced_on_the_segment() {
    let mut worst = 0.0f64;
    for s in 0..50 {
        let spec = StimulusSpec::positive(200, DOMAIN, 10, PI / 4.0, s);
        let rec = gen_positive(&spec).unwrap();
        let truth = rec.truth.unwrap();
        let (a, b) = truth.endpoints();
        let len = a.dist(b);
        let spacing = spec.resolved_spacing();
        assert!((len - 9.0 * spacing).abs() < 1e-9);
        let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
        let mut along: Vec<f64> = truth
            .members
            .iter()
            .map(|&m| {
                let p = rec.field.elements()[m].position();
                let (dx, dy) = (p.x - a.x, p.y - a.y);
                worst = worst.max((dx * uy - dy * ux).abs());
                dx * ux + dy * uy
            })
            .collect();
        along.sort_by(f64::total_cmp);
        for (k, u) in along.iter().enumerate() {
            worst = worst.max((u - k as f64 * spacing).abs());
        }
        for (name, p) in [("a", a), ("b", b)] {
            let m = spec.resolved_min_spacing();
            assert!(p.x >= m && p.y >= m && p.x <= 496.0 - m && p.y <= 496.0 - m, "{name}");
        }
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn grid_cells_are_balanced() {
    let specs = balanced_grid(200, DOMAIN, 3, 9);
    assert_eq!(specs.len(), 9 * 8 * 3);
    for j in jitter_levels() {
        for l in 3..=10 {
            let n = specs.iter().filter(|s| s.jitter == j && s.length == l).count();
            assert_eq!(n, 3, "J={j} L={l}");
        }
    }
    assert!(specs.iter().all(|s| s.kind == StimulusKind::Positive));
    let mut seeds: Vec<u64> = specs.iter().map(|s| s.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), specs.len());
}

#[test]
fn infeasible_spacing_fails_cleanly() {
    let spec = StimulusSpec {
        min_spacing: Some(100.0),
        ..StimulusSpec::negative(200, DOMAIN, 1)
    };
    assert!(generate(&spec).is_err());
    let long = StimulusSpec {
        spacing: Some(200.0),
        ..StimulusSpec::positive(200, DOMAIN, 10, 0.0, 1)
    };
    assert!(generate(&long).is_err());
    assert!(gen_negative(&StimulusSpec::positive(200, DOMAIN, 10, 0.0, 1)).is_err());
    assert!(generate(&StimulusSpec::positive(5, DOMAIN, 10, 0.0, 1)).is_err());
    assert!(generate(&StimulusSpec::positive(200, DOMAIN, 10, 4.0, 1)).is_err());
}

#[test]
fn clean_long_alignment_is_detected() {
    for s in 0..3 {
        let rec = generate(&StimulusSpec::positive(200, DOMAIN, 10, 0.0, derive_seed(77, s))).unwrap();
        let report = detect_gabor(&rec.field, &GaborConfig::default(), 1.0).unwrap();
        assert!(report.best_nfa.value() < -3.0, "seed {s}: {}", report.best_nfa);
    }
}

#[test]
fn dot_scene_recipes() {
    let grid = gen_dot_scene(
        Domain::new(80.0, 80.0),
        &DotRecipe::Grid {
            rows: 7,
            cols: 7,
            spacing: 10.0,
        },
        0,
    )
    .unwrap();
    assert_eq!(grid.pattern.len(), 49);
    let mut xs: Vec<f64> = grid.pattern.points().iter().map(|p| p.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    assert_eq!(xs.len(), 7);
    assert!(xs.windows(2).all(|w| (w[1] - w[0] - 10.0).abs() < 1e-9));

    let planted = gen_dot_scene(
        Domain::new(512.0, 512.0),
        &DotRecipe::Planted {
            k: 5,
            noise: 44,
            spacing: 20.0,
            lines: 1,
        },
        1,
    )
    .unwrap();
    assert_eq!(planted.pattern.len(), 49);
    assert_eq!(planted.planted, vec![vec![0, 1, 2, 3, 4]]);

    let clusters = scenes::clusters(3).unwrap();
    let basic = detect(&clusters.pattern, &DotConfig::default(), DetectorMode::Basic, 1.0).unwrap();
    let refined = detect(&clusters.pattern, &DotConfig::default(), DetectorMode::Refined, 1.0).unwrap();
    assert!(!basic.is_empty());
    assert!(refined.is_empty(), "{}", refined.len());
}

#[test]
fn planted_runs_keep_apart() {
    for s in 0..30 {
        let scene = scenes::redundant(s).unwrap();
        let pts = scene.pattern.points();
        for a in &scene.planted[0] {
            for b in &scene.planted[1] {
                assert!(pts[*a].dist(pts[*b]) >= 4.0 * 15.0 - 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spacing_is_respected(seed in any::<u64>(), positive in any::<bool>(), l in 3usize..=10) {
        let spec = if positive {
            StimulusSpec::positive(200, DOMAIN, l, PI / 5.0, seed)
        } else {
            StimulusSpec::negative(200, DOMAIN, seed)
        };
        let rec = generate(&spec).unwrap();
        let pts: Vec<Point> = rec.field.elements().iter().map(|e| e.position()).collect();
        prop_assert_eq!(pts.len(), 200);
        prop_assert!(min_pair_distance(&pts) >= spec.resolved_min_spacing() - 1e-9);
        prop_assert!(rec.field.elements().iter().all(|e| (0.0..PI).contains(&e.theta)));
    }
}
