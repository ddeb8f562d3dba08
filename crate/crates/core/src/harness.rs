//! Batch experiments: false-alarm Monte Carlo, stimulus datasets binned by
//! NFA, and the reference masking scenes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dots::{DetectorMode, DotConfig, DotDetection, DotPattern, DotScorer, FlankDensity};
use crate::error::{Error, Result};
use crate::gabor::{GaborConfig, GaborScorer};
use crate::geometry::{point_segment_distance, Domain, Point};
use crate::masking::{exclusion_filter, find_unstable_pair, masking_filter, Accepted};
use crate::stimulus::{
    derive_seed, gen_dot_scene, gen_negative, DotRecipe, DotScene, StimulusRecord, StimulusSpec,
};

pub const BIN_COUNT: usize = 9;

/// Bin of a log10 NFA: `(-inf, -5)`, then `[k, k+1)` for `k = -5..=1`, then
/// `[2, inf)`.
pub fn bin_index(log10_nfa: f64) -> usize {
    if log10_nfa < -5.0 {
        0
    } else if log10_nfa >= 2.0 {
        BIN_COUNT - 1
    } else {
        (log10_nfa.floor() as i64 + 6) as usize
    }
}

pub fn bin_bounds(index: usize) -> (f64, f64) {
    match index {
        0 => (f64::NEG_INFINITY, -5.0),
        i if i == BIN_COUNT - 1 => (2.0, f64::INFINITY),
        i => (i as f64 - 6.0, i as f64 - 5.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// `mean -+ 2 std / sqrt(n)`.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub bins: Vec<BinStats>,
}

impl BinnedCurve {
    /// Bin `(log10_nfa, response)` samples.
    pub fn from_samples(samples: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); BIN_COUNT];
        for (nfa, x) in samples {
            groups[bin_index(nfa)].push(x);
        }
        let bins = groups
            .iter()
            .enumerate()
            .map(|(i, xs)| {
                let (lower, upper) = bin_bounds(i);
                let (mean, std) = mean_std(xs);
                let half = match (std, xs.len()) {
                    (Some(s), n) if n > 0 => Some(2.0 * s / (n as f64).sqrt()),
                    _ => None,
                };
                BinStats {
                    lower,
                    upper,
                    n: xs.len(),
                    mean,
                    std,
                    ci_low: mean.zip(half).map(|(m, h)| m - h),
                    ci_high: mean.zip(half).map(|(m, h)| m + h),
                }
            })
            .collect();
        BinnedCurve { bins }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.n).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lower,upper,n,mean,std,ci_low,ci_high\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for b in &self.bins {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                b.lower,
                b.upper,
                b.n,
                opt(b.mean),
                opt(b.std),
                opt(b.ci_low),
                opt(b.ci_high)
            );
        }
        s
    }
}

/// Mean and sample standard deviation; the deviation is zero for one sample.
pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (n, p) = (n as f64, k as f64 / n as f64);
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub const WILSON_Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum H0Detector {
    Basic,
    Refined,
    Gabor,
}

impl H0Detector {
    pub fn default_domain(self) -> Domain {
        match self {
            H0Detector::Gabor => Domain::new(496.0, 496.0),
            _ => Domain::new(512.0, 512.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H0Summary {
    pub detector: H0Detector,
    pub n: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub mean: f64,
    pub std: f64,
    /// `2 std / sqrt(trials)`.
    pub ci_half: f64,
    pub pass: bool,
    pub counts: Vec<usize>,
}

impl H0Summary {
    pub fn line(&self) -> String {
        let name = match self.detector {
            H0Detector::Basic => "basic",
            H0Detector::Refined => "refined",
            H0Detector::Gabor => "gabor",
        };
        format!(
            "{} detector={name} n={} trials={} epsilon={} mean={:.4} ci=+-{:.4}",
            if self.pass { "PASS" } else { "FAIL" },
            self.n,
            self.trials,
            self.epsilon,
            self.mean,
            self.ci_half
        )
    }
}

/// Number of meaningful raw candidates on one background sample.
pub fn h0_count(detector: H0Detector, n: usize, domain: Domain, epsilon: f64, seed: u64) -> Result<usize> {
    match detector {
        H0Detector::Basic | H0Detector::Refined => {
            let scene = gen_dot_scene(domain, &DotRecipe::Noise { n }, seed)?;
            let mode = if detector == H0Detector::Basic {
                DetectorMode::Basic
            } else {
                DetectorMode::Refined
            };
            let scorer = DotScorer::new(&scene.pattern, DotConfig::default(), mode)?;
            Ok(scorer.detect(epsilon).len())
        }
        H0Detector::Gabor => {
            let record = gen_negative(&StimulusSpec::negative(n, domain, seed))?;
            let scorer = GaborScorer::new(&record.field, &GaborConfig::default())?;
            Ok(scorer.detect(epsilon).detections.len())
        }
    }
}

/// Mean number of meaningful detections on background samples. Passes when
/// `mean - 2 s / sqrt(trials) <= epsilon`.
pub fn h0_montecarlo(
    detector: H0Detector,
    n: usize,
    trials: usize,
    epsilon: f64,
    seed: u64,
    domain: Option<Domain>,
) -> Result<H0Summary> {
    if trials < 30 {
        return Err(Error::InvalidConfig(format!("at least 30 trials required, got {trials}")));
    }
    let domain = domain.unwrap_or(detector.default_domain());
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| h0_count(detector, n, domain, epsilon, derive_seed(seed, t as u64)))
        .collect::<Result<Vec<usize>>>()?;
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (mean, std) = mean_std(&xs);
    let (mean, std) = (mean.unwrap_or(0.0), std.unwrap_or(0.0));
    let ci_half = 2.0 * std / (trials as f64).sqrt();
    Ok(H0Summary {
        detector,
        n,
        trials,
        epsilon,
        mean,
        std,
        ci_half,
        pass: mean - ci_half <= epsilon,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub id: String,
    pub positive: bool,
    pub length: usize,
    pub jitter: f64,
    pub best_log10_nfa: f64,
    /// `best NFA < epsilon`.
    pub detected: bool,
    /// Distance from the midpoint of the best rectangle's axis to the
    /// planted segment, for detected positives.
    pub localization_error: Option<f64>,
}

pub fn run_trial(record: &StimulusRecord, config: &GaborConfig, epsilon: f64) -> Result<TrialResult> {
    let scorer = GaborScorer::new(&record.field, config)?;
    let report = scorer.detect(epsilon);
    let detected = report.detected(epsilon);
    let localization_error = match (&record.truth, &report.best, detected) {
        (Some(truth), Some(best), true) => {
            let el = record.field.elements();
            let (p, q) = (el[best.candidate.i].position(), el[best.candidate.j].position());
            let mid = Point::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0);
            let (a, b) = truth.endpoints();
            Some(point_segment_distance(mid, a, b))
        }
        _ => None,
    };
    Ok(TrialResult {
        id: record.id.clone(),
        positive: record.truth.is_some(),
        length: if record.truth.is_some() { record.spec.length } else { 0 },
        jitter: record.spec.jitter,
        best_log10_nfa: report.best_nfa.value(),
        detected,
        localization_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub length: Option<usize>,
    pub jitter: Option<f64>,
    pub n: usize,
    pub detected: usize,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl RateRow {
    fn new(length: Option<usize>, jitter: Option<f64>, trials: &[&TrialResult]) -> Self {
        let n = trials.len();
        let detected = trials.iter().filter(|t| t.detected).count();
        let (lo, hi) = wilson(detected, n, WILSON_Z95);
        RateRow {
            length,
            jitter,
            n,
            detected,
            rate: if n == 0 { 0.0 } else { detected as f64 / n as f64 },
            wilson_low: lo,
            wilson_high: hi,
        }
    }
}

/// Adjacent jitter levels at one length where the rate rises with
/// non-overlapping Wilson intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendViolation {
    pub length: usize,
    pub lower_jitter: RateRow,
    pub higher_jitter: RateRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub epsilon: f64,
    pub trials: Vec<TrialResult>,
    /// Detection rate per NFA bin.
    pub curve: BinnedCurve,
    pub by_jitter: Vec<RateRow>,
    pub by_length: Vec<RateRow>,
    pub by_cell: Vec<RateRow>,
    pub trend_violations: Vec<TrendViolation>,
    pub skipped_rows: usize,
}

fn jitter_key(j: f64) -> i64 {
    (j * 1e9).round() as i64
}

pub fn run_dataset(
    records: &[StimulusRecord],
    config: &GaborConfig,
    epsilon: f64,
    skipped_rows: usize,
) -> Result<DatasetReport> {
    let trials = records
        .par_iter()
        .map(|r| run_trial(r, config, epsilon))
        .collect::<Result<Vec<_>>>()?;
    let curve = BinnedCurve::from_samples(
        trials
            .iter()
            .map(|t| (t.best_log10_nfa, if t.detected { 1.0 } else { 0.0 })),
    );

    let positives: Vec<&TrialResult> = trials.iter().filter(|t| t.positive).collect();
    let mut jitter_groups: BTreeMap<i64, Vec<&TrialResult>> = BTreeMap::new();
    let mut length_groups: BTreeMap<usize, Vec<&TrialResult>> = BTreeMap::new();
    let mut cells: BTreeMap<(usize, i64), Vec<&TrialResult>> = BTreeMap::new();
    for &t in &positives {
        jitter_groups.entry(jitter_key(t.jitter)).or_default().push(t);
        length_groups.entry(t.length).or_default().push(t);
        cells.entry((t.length, jitter_key(t.jitter))).or_default().push(t);
    }
    let by_jitter = jitter_groups
        .values()
        .map(|g| RateRow::new(None, Some(g[0].jitter), g))
        .collect();
    let by_length = length_groups
        .iter()
        .map(|(&l, g)| RateRow::new(Some(l), None, g))
        .collect();
    let by_cell: Vec<RateRow> = cells
        .values()
        .map(|g| RateRow::new(Some(g[0].length), Some(g[0].jitter), g))
        .collect();

    let mut trend_violations = Vec::new();
    for pair in by_cell.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        if lo.length == hi.length && hi.rate > lo.rate && hi.wilson_low > lo.wilson_high {
            trend_violations.push(TrendViolation {
                length: lo.length.unwrap_or(0),
                lower_jitter: lo.clone(),
                higher_jitter: hi.clone(),
            });
        }
    }

    Ok(DatasetReport {
        epsilon,
        trials,
        curve,
        by_jitter,
        by_length,
        by_cell,
        trend_violations,
        skipped_rows,
    })
}

pub fn trials_csv(trials: &[TrialResult]) -> String {
    let mut s = String::from("id,positive,length,jitter,best_log10_nfa,detected,localization_error\n");
    for t in trials {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t.id,
            t.positive,
            t.length,
            t.jitter,
            t.best_log10_nfa,
            t.detected,
            t.localization_error.map_or(String::new(), |d| format!("{d}"))
        );
    }
    s
}

pub fn rates_csv(rows: &[RateRow]) -> String {
    let mut s = String::from("length,jitter,n,detected,rate,wilson_low,wilson_high\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.length.map_or(String::new(), |l| l.to_string()),
            r.jitter.map_or(String::new(), |j| j.to_string()),
            r.n,
            r.detected,
            r.rate,
            r.wilson_low,
            r.wilson_high
        );
    }
    s
}

/// Reference scenes for the masking phenomena.
pub mod scenes {
    use super::*;

    pub const DOT_DOMAIN: Domain = Domain::new(512.0, 512.0);

    /// Seven collinear dots 20 apart, with 20 (sparse) or 600 (dense) noise
    /// dots. The planted dots do not depend on the noise count.
    pub fn texture(seed: u64, dense: bool) -> Result<DotScene> {
        let noise = if dense { 600 } else { 20 };
        gen_dot_scene(
            DOT_DOMAIN,
            &DotRecipe::Planted {
                k: 7,
                noise,
                spacing: 20.0,
                lines: 1,
            },
            seed,
        )
    }

    /// A dense square block inside a sparse background.
    pub fn density_step(seed: u64) -> Result<DotScene> {
        gen_dot_scene(
            DOT_DOMAIN,
            &DotRecipe::DensityStep {
                dense: 250,
                sparse: 40,
                block: 0.5,
            },
            seed,
        )
    }

    /// Two runs of 15 dots in light noise.
    pub fn redundant(seed: u64) -> Result<DotScene> {
        gen_dot_scene(
            DOT_DOMAIN,
            &DotRecipe::Planted {
                k: 15,
                noise: 30,
                spacing: 15.0,
                lines: 2,
            },
            seed,
        )
    }

    /// Two tight clusters of ten dots and no alignment.
    pub fn clusters(seed: u64) -> Result<DotScene> {
        gen_dot_scene(
            DOT_DOMAIN,
            &DotRecipe::Clusters {
                clusters: 2,
                size: 10,
                sigma: 3.0,
                noise: 30,
            },
            seed,
        )
    }

    /// A 10 x 10 lattice with unit margin cells.
    pub fn grid() -> Result<DotScene> {
        gen_dot_scene(
            Domain::new(110.0, 110.0),
            &DotRecipe::Grid {
                rows: 10,
                cols: 10,
                spacing: 10.0,
            },
            0,
        )
    }
}

/// Direction class of an accepted alignment on an axis-parallel lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
    Oblique,
}

pub fn orientation_of(pattern: &DotPattern, det: &DotDetection) -> Orientation {
    let (a, b) = (
        pattern.points()[det.candidate.i],
        pattern.points()[det.candidate.j],
    );
    if (a.y - b.y).abs() < 1e-6 {
        Orientation::Horizontal
    } else if (a.x - b.x).abs() < 1e-6 {
        Orientation::Vertical
    } else {
        Orientation::Oblique
    }
}

/// Horizontal and vertical counts among accepted detections.
pub fn family_counts(pattern: &DotPattern, raw: &[DotDetection], accepted: &[Accepted]) -> (usize, usize) {
    let mut h = 0;
    let mut v = 0;
    for a in accepted {
        match orientation_of(pattern, &raw[a.index]) {
            Orientation::Horizontal => h += 1,
            Orientation::Vertical => v += 1,
            Orientation::Oblique => {}
        }
    }
    (h, v)
}

/// Lattice outcome under both filters.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub pattern: DotPattern,
    pub raw: Vec<DotDetection>,
    pub masking: Vec<Accepted>,
    pub exclusion: Vec<Accepted>,
    /// First accepted pair `(a, b)` under masking where `b` stops being
    /// meaningful without the members of `a`.
    pub unstable: Option<(usize, usize)>,
}

pub fn grid_outcome(epsilon: f64) -> Result<GridOutcome> {
    let pattern = scenes::grid()?.pattern;
    let scorer = DotScorer::new(&pattern, DotConfig::default(), DetectorMode::Basic)?;
    let raw = scorer.detect(epsilon);
    let masking = masking_filter(&raw, &scorer, epsilon);
    let exclusion = exclusion_filter(&raw, &scorer, epsilon);
    let unstable = find_unstable_pair(&raw, &masking, &scorer, epsilon);
    Ok(GridOutcome {
        pattern,
        raw,
        masking,
        exclusion,
        unstable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub seeds: usize,
    pub passed: bool,
    pub scenarios: Vec<ScenarioResult>,
}

fn fires(pattern: &DotPattern, mode: DetectorMode, config: DotConfig) -> Result<bool> {
    Ok(!DotScorer::new(pattern, config, mode)?.detect(1.0).is_empty())
}

fn rate(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&f| f).count() as f64 / flags.len().max(1) as f64
}

fn seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(base, i)).collect()
}

/// Planted run detected on sparse noise and lost in dense noise.
pub fn texture_rates(base_seed: u64, count: usize) -> Result<(f64, f64)> {
    let outcomes = seeds(base_seed, count)
        .into_par_iter()
        .map(|s| {
            let sparse = fires(&scenes::texture(s, false)?.pattern, DetectorMode::Basic, DotConfig::default())?;
            let dense = fires(&scenes::texture(s, true)?.pattern, DetectorMode::Basic, DotConfig::default())?;
            Ok((sparse, dense))
        })
        .collect::<Result<Vec<(bool, bool)>>>()?;
    let sparse: Vec<bool> = outcomes.iter().map(|o| o.0).collect();
    let dense_silent: Vec<bool> = outcomes.iter().map(|o| !o.1).collect();
    Ok((rate(&sparse), rate(&dense_silent)))
}

/// Firing rates of the basic and refined detectors on two-cluster scenes.
pub fn cluster_rates(base_seed: u64, count: usize) -> Result<(f64, f64)> {
    let outcomes = seeds(base_seed, count)
        .into_par_iter()
        .map(|s| {
            let p = scenes::clusters(s)?.pattern;
            Ok((
                fires(&p, DetectorMode::Basic, DotConfig::default())?,
                fires(&p, DetectorMode::Refined, DotConfig::default())?,
            ))
        })
        .collect::<Result<Vec<(bool, bool)>>>()?;
    Ok((
        rate(&outcomes.iter().map(|o| o.0).collect::<Vec<_>>()),
        rate(&outcomes.iter().map(|o| o.1).collect::<Vec<_>>()),
    ))
}

/// Firing rates on the density step: basic, refined with mean flank
/// density, refined with max flank density.
pub fn density_step_rates(base_seed: u64, count: usize) -> Result<(f64, f64, f64)> {
    let mean_cfg = DotConfig {
        flank_density: FlankDensity::Mean,
        ..DotConfig::default()
    };
    let outcomes = seeds(base_seed, count)
        .into_par_iter()
        .map(|s| {
            let p = scenes::density_step(s)?.pattern;
            Ok((
                fires(&p, DetectorMode::Basic, DotConfig::default())?,
                fires(&p, DetectorMode::Refined, mean_cfg)?,
                fires(&p, DetectorMode::Refined, DotConfig::default())?,
            ))
        })
        .collect::<Result<Vec<(bool, bool, bool)>>>()?;
    Ok((
        rate(&outcomes.iter().map(|o| o.0).collect::<Vec<_>>()),
        rate(&outcomes.iter().map(|o| o.1).collect::<Vec<_>>()),
        rate(&outcomes.iter().map(|o| o.2).collect::<Vec<_>>()),
    ))
}

/// Whether masking leaves exactly one rectangle per planted run, each
/// covering all but at most two of the run's dots.
pub fn one_per_alignment(scene: &DotScene, accepted: &[Accepted]) -> bool {
    if accepted.len() != scene.planted.len() {
        return false;
    }
    let mut used = vec![false; scene.planted.len()];
    for a in accepted {
        let hit = scene.planted.iter().enumerate().find(|(k, run)| {
            !used[*k] && run.iter().filter(|m| a.members.binary_search(m).is_ok()).count() + 2 >= run.len()
        });
        match hit {
            Some((k, _)) => used[k] = true,
            None => return false,
        }
    }
    true
}

/// Fraction of redundant-detection scenes where the refined detector plus
/// masking yields one rectangle per planted run, and the mean raw count.
pub fn redundancy_rates(base_seed: u64, count: usize) -> Result<(f64, f64)> {
    let outcomes = seeds(base_seed, count)
        .into_par_iter()
        .map(|s| {
            let scene = scenes::redundant(s)?;
            let scorer = DotScorer::new(&scene.pattern, DotConfig::default(), DetectorMode::Refined)?;
            let raw = scorer.detect(1.0);
            let accepted = masking_filter(&raw, &scorer, 1.0);
            Ok((one_per_alignment(&scene, &accepted), raw.len() as f64))
        })
        .collect::<Result<Vec<(bool, f64)>>>()?;
    let ok: Vec<bool> = outcomes.iter().map(|o| o.0).collect();
    let raw_mean = outcomes.iter().map(|o| o.1).sum::<f64>() / outcomes.len().max(1) as f64;
    Ok((rate(&ok), raw_mean))
}

fn metrics<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Run every reference scene over `count` seeds derived from `base_seed`.
pub fn figure_suite(base_seed: u64, count: usize) -> Result<FigureReport> {
    let mut scenarios = Vec::new();

    let (sparse, dense_silent) = texture_rates(base_seed, count)?;
    scenarios.push(ScenarioResult {
        name: "texture".into(),
        passed: sparse >= 0.95 && dense_silent >= 0.9,
        detail: "basic detector: planted run found on sparse noise, masked by dense noise".into(),
        metrics: metrics([("sparse_detected", sparse), ("dense_undetected", dense_silent)]),
    });

    let (basic, mean, max) = density_step_rates(base_seed, count)?;
    scenarios.push(ScenarioResult {
        name: "density_step".into(),
        passed: max <= 0.1 && max <= mean && max <= basic,
        detail: "density step: refined detector with max flank density stays silent".into(),
        metrics: metrics([
            ("basic_fires", basic),
            ("refined_mean_fires", mean),
            ("refined_max_fires", max),
        ]),
    });

    let (ok, raw_mean) = redundancy_rates(base_seed, count)?;
    scenarios.push(ScenarioResult {
        name: "redundancy".into(),
        passed: ok >= 0.8,
        detail: "refined detector + masking: one rectangle per planted run".into(),
        metrics: metrics([("one_per_alignment", ok), ("raw_detections_mean", raw_mean)]),
    });

    let (basic, refined) = cluster_rates(base_seed, count)?;
    scenarios.push(ScenarioResult {
        name: "clusters".into(),
        passed: basic >= 0.8 && refined <= 0.1,
        detail: "two clusters: basic detector fires, refined does not".into(),
        metrics: metrics([("basic_fires", basic), ("refined_fires", refined)]),
    });

    let grid = grid_outcome(1.0)?;
    let (mh, mv) = family_counts(&grid.pattern, &grid.raw, &grid.masking);
    let (eh, ev) = family_counts(&grid.pattern, &grid.raw, &grid.exclusion);
    scenarios.push(ScenarioResult {
        name: "grid".into(),
        passed: mh >= 10 && mv >= 10 && (eh < 10 || ev < 10) && grid.unstable.is_none(),
        detail: "10 x 10 lattice: masking keeps rows and columns, exclusion loses a family".into(),
        metrics: metrics([
            ("masking_horizontal", mh as f64),
            ("masking_vertical", mv as f64),
            ("masking_total", grid.masking.len() as f64),
            ("exclusion_horizontal", eh as f64),
            ("exclusion_vertical", ev as f64),
            ("unstable_pairs", grid.unstable.is_some() as u8 as f64),
        ]),
    });

    Ok(FigureReport {
        seeds: count,
        passed: scenarios.iter().all(|s| s.passed),
        scenarios,
    })
}
