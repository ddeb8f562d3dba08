//! Dot alignment detectors.
//!
//! Every pair of dots defines an axis; each axis is tested with a geometric
//! family of widths. Two scoring modes are provided:
//!
//! * [`DetectorMode::Basic`] counts dots inside the rectangle against the
//!   global dot density of the domain.
//! * [`DetectorMode::Refined`] estimates the background from the two flanking
//!   bands (taking the denser side), splits the rectangle lengthwise into `c`
//!   boxes and counts occupied boxes, minimizing the tail over a family of `c`.
//!
//! The basic test conditions on the two defining dots: they are reported as
//! members but the tail is evaluated on the remaining `N - 2` dots, since the
//! rectangle was placed on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisFrame, Domain, Point, GEOM_TOL};
use crate::stats::{ln_at_least_one, log10_binom_tail, nfa_from, BinTailParams, LogNfa};

/// A bounded rectangular domain holding a set of dots.
#[derive(Debug, Clone, PartialEq)]
pub struct DotPattern {
    domain: Domain,
    points: Vec<Point>,
}

impl DotPattern {
    pub fn new(domain: Domain, points: Vec<Point>) -> Result<Self> {
        check_domain(domain)?;
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::NonFinite {
                    field: format!("points[{i}]"),
                });
            }
            if !domain.contains(*p) {
                return Err(Error::OutsideDomain {
                    field: format!("points[{i}]"),
                });
            }
        }
        Ok(DotPattern { domain, points })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub(crate) fn check_domain(domain: Domain) -> Result<()> {
    let ok = |v: f64| v.is_finite() && v > 0.0;
    if ok(domain.width) && ok(domain.height) {
        Ok(())
    } else {
        Err(Error::InvalidDomain {
            width: domain.width,
            height: domain.height,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    Basic,
    Refined,
}

/// How the flanking bands are turned into a window population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlankDensity {
    /// `2 * max(M1, M3) + M2`: the alignment must beat both sides.
    Max,
    /// `M1 + M2 + M3`: a single local density over the whole window.
    Mean,
}

/// Box counts tried on each refined candidate. Both families have
/// `ceil(sqrt(N))` members before deduplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxFamily {
    /// Geometric ladder from 2 to N.
    Geometric,
    /// `2, 3, ..., ceil(sqrt(N)) + 1`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DotConfig {
    /// Narrowest tested width.
    pub min_width: f64,
    /// Ratio between consecutive widths.
    pub width_ratio: f64,
    /// Widths stop at `length / length_cap`.
    pub length_cap: f64,
    /// Flank band width as a multiple of the candidate width.
    pub band_factor: f64,
    pub box_family: BoxFamily,
    pub flank_density: FlankDensity,
}

impl Default for DotConfig {
    fn default() -> Self {
        DotConfig {
            min_width: 1.0,
            width_ratio: 2.0,
            length_cap: 4.0,
            band_factor: 1.0,
            box_family: BoxFamily::Geometric,
            flank_density: FlankDensity::Max,
        }
    }
}

impl DotConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.min_width > 0.0 && self.min_width.is_finite()) {
            return bad("min_width must be positive");
        }
        if !(self.width_ratio > 1.0 && self.width_ratio.is_finite()) {
            return bad("width_ratio must exceed 1");
        }
        if !(self.length_cap > 0.0 && self.length_cap.is_finite()) {
            return bad("length_cap must be positive");
        }
        if !(self.band_factor > 0.0 && self.band_factor.is_finite()) {
            return bad("band_factor must be positive");
        }
        Ok(())
    }

    /// Widths tested on an axis of the given length.
    pub fn widths_for_length(&self, length: f64) -> Vec<f64> {
        let cap = length / self.length_cap;
        let mut out = Vec::new();
        let mut w = self.min_width;
        while w <= cap + GEOM_TOL {
            out.push(w);
            w *= self.width_ratio;
        }
        out
    }

    pub fn box_counts(&self, n_points: usize) -> Vec<usize> {
        let size = ((n_points as f64).sqrt().ceil() as usize).max(1);
        match self.box_family {
            BoxFamily::Linear => (2..size + 2).collect(),
            BoxFamily::Geometric => {
                let top = n_points.max(2) as f64;
                let mut out: Vec<usize> = (0..size)
                    .map(|t| {
                        if size == 1 {
                            2
                        } else {
                            let f = t as f64 / (size - 1) as f64;
                            (2.0 * (top / 2.0).powf(f)).round() as usize
                        }
                    })
                    .collect();
                out.dedup();
                out
            }
        }
    }
}

/// An oriented rectangle centered on the segment between two dots.
///
/// `i` is always the lexicographically smaller endpoint (by coordinates, then
/// index), so the geometry does not depend on how the input was ordered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectCandidate {
    pub i: usize,
    pub j: usize,
    pub width: f64,
}

impl RectCandidate {
    pub fn new(pattern: &DotPattern, a: usize, b: usize, width: f64) -> Self {
        let (i, j) = orient(pattern.points(), a, b);
        RectCandidate { i, j, width }
    }

    pub fn frame(&self, pattern: &DotPattern) -> Option<AxisFrame> {
        AxisFrame::new(pattern.points[self.i], pattern.points[self.j])
    }

    pub fn length(&self, pattern: &DotPattern) -> f64 {
        pattern.points[self.i].dist(pattern.points[self.j])
    }

    pub fn area(&self, pattern: &DotPattern) -> f64 {
        self.length(pattern) * self.width
    }
}

fn orient(points: &[Point], a: usize, b: usize) -> (usize, usize) {
    match points[a].lex_cmp(points[b]).then(a.cmp(&b)) {
        std::cmp::Ordering::Greater => (b, a),
        _ => (a, b),
    }
}

#[inline]
fn in_core(v: f64, width: f64) -> bool {
    v.abs() <= width / 2.0 + GEOM_TOL
}

/// Dots inside the candidate rectangle, boundary inclusive.
pub fn count_in_rect(pattern: &DotPattern, candidate: &RectCandidate) -> usize {
    members_in_rect(pattern, candidate).len()
}

pub fn members_in_rect(pattern: &DotPattern, candidate: &RectCandidate) -> Vec<usize> {
    let Some(frame) = candidate.frame(pattern) else {
        return Vec::new();
    };
    pattern
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let (u, v) = frame.project(**p);
            frame.spans(u) && in_core(v, candidate.width)
        })
        .map(|(k, _)| k)
        .collect()
}

/// Summary of the width family over all dot pairs of a pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthFamily {
    pub config: DotConfig,
    /// Non-degenerate pairs.
    pub pairs: usize,
    /// Sum of per-pair width counts.
    pub total_widths: usize,
}

impl WidthFamily {
    /// `W`: average number of widths tested per pair.
    pub fn mean_widths(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.total_widths as f64 / self.pairs as f64
        }
    }

    pub fn widths(&self, length: f64) -> Vec<f64> {
        self.config.widths_for_length(length)
    }
}

pub fn width_family(pattern: &DotPattern, config: &DotConfig) -> WidthFamily {
    let pts = &pattern.points;
    let (mut pairs, mut total) = (0usize, 0usize);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let len = pts[i].dist(pts[j]);
            if len <= GEOM_TOL {
                continue;
            }
            pairs += 1;
            total += config.widths_for_length(len).len();
        }
    }
    WidthFamily {
        config: *config,
        pairs,
        total_widths: total,
    }
}

/// Dot counts in the three bands of a refined local window.
///
/// `R2` is the candidate itself, `R1` the band on its left, `R3` on its
/// right. `r1_scale`/`r3_scale` convert a band's count into its
/// full-band-equivalent when the band is clipped by the domain; `None`
/// marks a band lying entirely outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalWindow {
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub r1_scale: Option<f64>,
    pub r3_scale: Option<f64>,
}

impl LocalWindow {
    /// `n(r, x)`, the assumed window population.
    pub fn population(&self, mode: FlankDensity) -> f64 {
        let s1 = self.r1_scale.map(|s| self.m1 as f64 * s);
        let s3 = self.r3_scale.map(|s| self.m3 as f64 * s);
        let flanks = match (s1, s3) {
            (Some(a), Some(b)) => match mode {
                FlankDensity::Max => 2.0 * a.max(b),
                FlankDensity::Mean => a + b,
            },
            (Some(a), None) | (None, Some(a)) => 2.0 * a,
            (None, None) => 0.0,
        };
        flanks + self.m2 as f64
    }
}

/// `2 * max(M1, M3) + M2` for unclipped bands.
pub fn max_side_population(m1: usize, m2: usize, m3: usize) -> usize {
    2 * m1.max(m3) + m2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxScore {
    pub c: usize,
    pub occupied: usize,
    pub p1: f64,
    pub log10_tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotDetection {
    pub candidate: RectCandidate,
    pub nfa: LogNfa,
    /// Dots inside the rectangle, ascending.
    pub members: Vec<usize>,
    pub mode: DetectorMode,
}

/// Deterministic order: NFA, then fewer members, then `(i, j, width)`.
pub fn detection_order(a: &DotDetection, b: &DotDetection) -> std::cmp::Ordering {
    a.nfa
        .cmp(&b.nfa)
        .then(a.members.len().cmp(&b.members.len()))
        .then(a.candidate.i.cmp(&b.candidate.i))
        .then(a.candidate.j.cmp(&b.candidate.j))
        .then(a.candidate.width.total_cmp(&b.candidate.width))
}

/// Scores rectangles of one pattern under a fixed test family.
///
/// The number of tests is frozen at construction, so rescoring a reduced
/// member set keeps the original `N_tests`.
#[derive(Debug, Clone)]
pub struct DotScorer<'a> {
    pattern: &'a DotPattern,
    config: DotConfig,
    mode: DetectorMode,
    family: WidthFamily,
    box_counts: Vec<usize>,
    log10_tests: Option<f64>,
}

struct Projected {
    idx: usize,
    u: f64,
    v: f64,
}

impl<'a> DotScorer<'a> {
    pub fn new(pattern: &'a DotPattern, config: DotConfig, mode: DetectorMode) -> Result<Self> {
        config.validate()?;
        if pattern.len() < 2 {
            return Err(Error::TooFewElements { field: "points" });
        }
        let family = width_family(pattern, &config);
        let n = pattern.len() as f64;
        let mut tests = n * (n - 1.0) / 2.0 * family.mean_widths();
        if mode == DetectorMode::Refined {
            tests *= n.sqrt();
        }
        // no testable rectangle at all leaves log10_tests unset
        let log10_tests = nfa_from(tests, 0.0).ok().map(|l| l.value());
        Ok(DotScorer {
            pattern,
            box_counts: config.box_counts(pattern.len()),
            config,
            mode,
            family,
            log10_tests,
        })
    }

    pub fn mode(&self) -> DetectorMode {
        self.mode
    }

    pub fn family(&self) -> &WidthFamily {
        &self.family
    }

    pub fn box_counts(&self) -> &[usize] {
        &self.box_counts
    }

    pub fn log10_tests(&self) -> Option<f64> {
        self.log10_tests
    }

    pub fn pattern(&self) -> &DotPattern {
        self.pattern
    }

    /// Flank and core counts for a candidate, with clipped-band rescaling.
    pub fn local_window(&self, candidate: &RectCandidate) -> Option<LocalWindow> {
        let frame = candidate.frame(self.pattern)?;
        let proj = self.project_all(&frame);
        Some(self.window_from(&frame, &proj, candidate.width))
    }

    /// `n(r, x)` under the configured flank rule.
    pub fn local_count(&self, candidate: &RectCandidate) -> Option<f64> {
        self.local_window(candidate)
            .map(|w| w.population(self.config.flank_density))
    }

    /// Box occupancy for every `c` in the family, given the core members.
    pub fn box_scores(&self, candidate: &RectCandidate, members: &[usize]) -> Option<Vec<BoxScore>> {
        let frame = candidate.frame(self.pattern)?;
        let proj = self.project_all(&frame);
        let window = self.window_from(&frame, &proj, candidate.width);
        let us: Vec<f64> = members
            .iter()
            .map(|&m| frame.project(self.pattern.points[m]).0)
            .collect();
        let window = LocalWindow {
            m2: members.len(),
            ..window
        };
        Some(self.boxes(&window, &us, frame.length))
    }

    /// Full evaluation of one candidate. `None` for degenerate axes or when
    /// the pattern has no testable rectangle.
    pub fn evaluate(&self, candidate: &RectCandidate) -> Option<(LogNfa, Vec<usize>)> {
        let members = members_in_rect(self.pattern, candidate);
        let nfa = self.rescore(candidate, &members)?;
        Some((nfa, members))
    }

    /// NFA of the candidate counting only `members` inside the rectangle.
    ///
    /// In basic mode the defining dots never contribute to the tail. In
    /// refined mode the flanks are recounted from the whole pattern while the
    /// core count and box occupancy use `members` only.
    pub fn rescore(&self, candidate: &RectCandidate, members: &[usize]) -> Option<LogNfa> {
        let log_tests = self.log10_tests?;
        let frame = candidate.frame(self.pattern)?;
        let tail = match self.mode {
            DetectorMode::Basic => {
                let extra = members
                    .iter()
                    .filter(|&&m| m != candidate.i && m != candidate.j)
                    .count();
                self.basic_tail(frame.length, candidate.width, extra)
            }
            DetectorMode::Refined => {
                let proj = self.project_all(&frame);
                let window = LocalWindow {
                    m2: members.len(),
                    ..self.window_from(&frame, &proj, candidate.width)
                };
                let us: Vec<f64> = members
                    .iter()
                    .map(|&m| frame.project(self.pattern.points[m]).0)
                    .collect();
                min_tail(&self.boxes(&window, &us, frame.length))
            }
        };
        Some(LogNfa::new(log_tests + tail))
    }

    fn project_all(&self, frame: &AxisFrame) -> Vec<Projected> {
        self.pattern
            .points
            .iter()
            .enumerate()
            .filter_map(|(idx, p)| {
                let (u, v) = frame.project(*p);
                frame.spans(u).then_some(Projected { idx, u, v })
            })
            .collect()
    }

    fn basic_tail(&self, length: f64, width: f64, extra: usize) -> f64 {
        let p = (length * width / self.pattern.domain.area()).min(1.0);
        let n = self.pattern.len() as u64 - 2;
        let params = BinTailParams::new(n, (extra as u64).min(n), p).expect("valid tail");
        log10_binom_tail(params)
    }

    fn band_scale(&self, frame: &AxisFrame, v_lo: f64, v_hi: f64) -> Option<f64> {
        let corners = frame.strip(v_lo, v_hi);
        let full = frame.length * (v_hi - v_lo);
        if corners.iter().all(|c| self.pattern.domain.contains(*c)) {
            return Some(1.0);
        }
        let clipped = self.pattern.domain.clipped_area(&corners);
        if clipped <= full * 1e-9 {
            None
        } else {
            Some(full / clipped)
        }
    }

    fn window_from(&self, frame: &AxisFrame, proj: &[Projected], width: f64) -> LocalWindow {
        let inner = width / 2.0 + GEOM_TOL;
        let outer = width / 2.0 + self.config.band_factor * width + GEOM_TOL;
        let (mut m1, mut m2, mut m3) = (0, 0, 0);
        for p in proj {
            if p.v.abs() <= inner {
                m2 += 1;
            } else if p.v > 0.0 && p.v <= outer {
                m1 += 1;
            } else if p.v < 0.0 && p.v >= -outer {
                m3 += 1;
            }
        }
        let band = self.config.band_factor * width;
        LocalWindow {
            m1,
            m2,
            m3,
            r1_scale: self.band_scale(frame, width / 2.0, width / 2.0 + band),
            r3_scale: self.band_scale(frame, -width / 2.0 - band, -width / 2.0),
        }
    }

    fn boxes(&self, window: &LocalWindow, us: &[f64], length: f64) -> Vec<BoxScore> {
        let n = window.population(self.config.flank_density);
        let window_factor = 1.0 + 2.0 * self.config.band_factor;
        let mut seen = Vec::new();
        self.box_counts
            .iter()
            .map(|&c| {
                let p0 = 1.0 / (c as f64 * window_factor);
                let p1 = ln_at_least_one(n, p0).exp().min(1.0);
                seen.clear();
                seen.resize(c, false);
                let mut occupied = 0;
                for &u in us {
                    let b = ((u / length * c as f64).floor().max(0.0) as usize).min(c - 1);
                    if !seen[b] {
                        seen[b] = true;
                        occupied += 1;
                    }
                }
                let log10_tail = log10_binom_tail(
                    BinTailParams::new(c as u64, occupied as u64, p1).expect("valid tail"),
                );
                BoxScore {
                    c,
                    occupied,
                    p1,
                    log10_tail,
                }
            })
            .collect()
    }

    fn sweep_pair(&self, a: usize, b: usize, epsilon_log: f64, out: &mut Vec<DotDetection>) {
        let Some(log_tests) = self.log10_tests else {
            return;
        };
        let (i, j) = orient(&self.pattern.points, a, b);
        let Some(frame) = AxisFrame::new(self.pattern.points[i], self.pattern.points[j]) else {
            return;
        };
        let widths = self.config.widths_for_length(frame.length);
        let Some(&w_max) = widths.last() else {
            return;
        };
        let reach = match self.mode {
            DetectorMode::Basic => w_max / 2.0,
            DetectorMode::Refined => w_max / 2.0 + self.config.band_factor * w_max,
        } + GEOM_TOL;
        let proj: Vec<Projected> = self
            .pattern
            .points
            .iter()
            .enumerate()
            .filter_map(|(idx, p)| {
                let (u, v) = frame.project(*p);
                (frame.spans(u) && v.abs() <= reach).then_some(Projected { idx, u, v })
            })
            .collect();

        let mut us = Vec::new();
        for &width in &widths {
            let tail = match self.mode {
                DetectorMode::Basic => {
                    let inside = proj.iter().filter(|p| in_core(p.v, width)).count();
                    self.basic_tail(frame.length, width, inside.saturating_sub(2))
                }
                DetectorMode::Refined => {
                    let window = self.window_from(&frame, &proj, width);
                    us.clear();
                    us.extend(proj.iter().filter(|p| in_core(p.v, width)).map(|p| p.u));
                    min_tail(&self.boxes(&window, &us, frame.length))
                }
            };
            let nfa = LogNfa::new(log_tests + tail);
            if nfa.value() < epsilon_log {
                let mut members: Vec<usize> = proj
                    .iter()
                    .filter(|p| in_core(p.v, width))
                    .map(|p| p.idx)
                    .collect();
                members.sort_unstable();
                out.push(DotDetection {
                    candidate: RectCandidate { i, j, width },
                    nfa,
                    members,
                    mode: self.mode,
                });
            }
        }
    }

    /// All candidates with `NFA < epsilon`, in [`detection_order`].
    pub fn detect(&self, epsilon: f64) -> Vec<DotDetection> {
        let eps_log = epsilon.log10();
        let n = self.pattern.len();
        let mut found: Vec<DotDetection> = (0..n)
            .into_par_iter()
            .flat_map_iter(|a| {
                let mut out = Vec::new();
                for b in a + 1..n {
                    self.sweep_pair(a, b, eps_log, &mut out);
                }
                out
            })
            .collect();
        found.sort_by(detection_order);
        found
    }
}

fn min_tail(scores: &[BoxScore]) -> f64 {
    scores
        .iter()
        .map(|s| s.log10_tail)
        .fold(0.0, f64::min)
}

pub fn detect_basic(pattern: &DotPattern, config: &DotConfig, epsilon: f64) -> Result<Vec<DotDetection>> {
    Ok(DotScorer::new(pattern, *config, DetectorMode::Basic)?.detect(epsilon))
}

pub fn detect_refined(pattern: &DotPattern, config: &DotConfig, epsilon: f64) -> Result<Vec<DotDetection>> {
    Ok(DotScorer::new(pattern, *config, DetectorMode::Refined)?.detect(epsilon))
}

pub fn detect(
    pattern: &DotPattern,
    config: &DotConfig,
    mode: DetectorMode,
    epsilon: f64,
) -> Result<Vec<DotDetection>> {
    Ok(DotScorer::new(pattern, *config, mode)?.detect(epsilon))
}
