//! Alignment detection on fields of oriented (Gabor) elements.
//!
//! Positions define the candidate rectangles; only orientations carry the
//! statistics. Under the background model every orientation is uniform on
//! `[0, pi)`, so an element inside a rectangle is `tau`-aligned with
//! probability `2 tau / pi`, independently of the others.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dots::check_domain;
use crate::error::{Error, Result};
use crate::geometry::{orientation_distance, wrap_pi, AxisFrame, Domain, Point, GEOM_TOL};
use crate::stats::{log10_binom_tail, nfa_from, BinTailParams, LogNfa};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborElement {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl GaborElement {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborField {
    domain: Domain,
    elements: Vec<GaborElement>,
}

impl GaborField {
    /// Orientations are reduced modulo `pi`.
    pub fn new(domain: Domain, elements: Vec<GaborElement>) -> Result<Self> {
        check_domain(domain)?;
        let mut elements = elements;
        for (i, e) in elements.iter_mut().enumerate() {
            if !(e.x.is_finite() && e.y.is_finite() && e.theta.is_finite()) {
                return Err(Error::NonFinite {
                    field: format!("elements[{i}]"),
                });
            }
            if !domain.contains(e.position()) {
                return Err(Error::OutsideDomain {
                    field: format!("elements[{i}]"),
                });
            }
            e.theta = wrap_pi(e.theta);
        }
        Ok(GaborField { domain, elements })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn elements(&self) -> &[GaborElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// `true` iff `theta` is within `tau` of the axis direction, modulo `pi`.
pub fn tau_aligned(theta: f64, axis_angle: f64, tau: f64) -> bool {
    orientation_distance(theta, axis_angle) < tau
}

/// Probability of being `tau`-aligned under uniform orientations.
pub fn aligned_probability(tau: f64) -> f64 {
    (2.0 * tau / PI).min(1.0)
}

pub fn default_precisions() -> Vec<f64> {
    vec![PI / 32.0, PI / 16.0, PI / 8.0, PI / 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaborConfig {
    /// Rectangle width; `None` uses `domain_width / sqrt(N)`.
    pub width: Option<f64>,
    /// Angular precisions `tau`, each in `(0, pi/2]`.
    pub precisions: Vec<f64>,
}

impl Default for GaborConfig {
    fn default() -> Self {
        GaborConfig {
            width: None,
            precisions: default_precisions(),
        }
    }
}

impl GaborConfig {
    pub fn validate(&self) -> Result<()> {
        if self.precisions.is_empty() {
            return Err(Error::InvalidConfig("at least one precision required".into()));
        }
        if let Some(&t) = self
            .precisions
            .iter()
            .find(|&&t| !(t > 0.0 && t <= PI / 2.0 + 1e-12))
        {
            return Err(Error::InvalidConfig(format!("precision {t} outside (0, pi/2]")));
        }
        if let Some(w) = self.width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig("width must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn resolved_width(&self, field: &GaborField) -> f64 {
        self.width
            .unwrap_or_else(|| field.domain.width / (field.len().max(1) as f64).sqrt())
    }
}

/// A rectangle of fixed width spanning two elements.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborCandidate {
    pub i: usize,
    pub j: usize,
    pub width: f64,
    /// Elements inside the rectangle, ascending. `n(r, g)` is its length.
    pub inside: Vec<usize>,
    /// `k_tau` for each precision, in configuration order.
    pub aligned: Vec<usize>,
}

impl GaborCandidate {
    pub fn n(&self) -> usize {
        self.inside.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborDetection {
    pub candidate: GaborCandidate,
    pub nfa: LogNfa,
    /// Precision achieving the minimum tail.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborDetectionReport {
    /// Smallest NFA over all candidates and precisions; `+inf` when no pair
    /// could be tested.
    pub best_nfa: LogNfa,
    pub best: Option<GaborDetection>,
    /// Candidates with `NFA < epsilon`, ascending.
    pub detections: Vec<GaborDetection>,
}

impl GaborDetectionReport {
    pub fn detected(&self, epsilon: f64) -> bool {
        self.best_nfa.is_meaningful(epsilon)
    }
}

pub fn gabor_order(a: &GaborDetection, b: &GaborDetection) -> std::cmp::Ordering {
    a.nfa
        .cmp(&b.nfa)
        .then(a.candidate.n().cmp(&b.candidate.n()))
        .then(a.candidate.i.cmp(&b.candidate.i))
        .then(a.candidate.j.cmp(&b.candidate.j))
}

#[derive(Debug, Clone)]
pub struct GaborScorer<'a> {
    field: &'a GaborField,
    width: f64,
    precisions: Vec<f64>,
    log10_tests: f64,
}

impl<'a> GaborScorer<'a> {
    pub fn new(field: &'a GaborField, config: &GaborConfig) -> Result<Self> {
        config.validate()?;
        if field.len() < 2 {
            return Err(Error::TooFewElements { field: "elements" });
        }
        let n = field.len() as f64;
        let tests = n * (n - 1.0) / 2.0 * config.precisions.len() as f64;
        Ok(GaborScorer {
            field,
            width: config.resolved_width(field),
            precisions: config.precisions.clone(),
            log10_tests: nfa_from(tests, 0.0)?.value(),
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn log10_tests(&self) -> f64 {
        self.log10_tests
    }

    fn frame(&self, a: usize, b: usize) -> Option<(usize, usize, AxisFrame)> {
        let pts = &self.field.elements;
        let (i, j) = match pts[a]
            .position()
            .lex_cmp(pts[b].position())
            .then(a.cmp(&b))
        {
            std::cmp::Ordering::Greater => (b, a),
            _ => (a, b),
        };
        AxisFrame::new(pts[i].position(), pts[j].position()).map(|f| (i, j, f))
    }

    /// Count elements and aligned elements for the pair `(a, b)`.
    pub fn candidate(&self, a: usize, b: usize) -> Option<GaborCandidate> {
        let (i, j, frame) = self.frame(a, b)?;
        let half = self.width / 2.0 + GEOM_TOL;
        let inside: Vec<usize> = self
            .field
            .elements
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                let (u, v) = frame.project(e.position());
                frame.spans(u) && v.abs() <= half
            })
            .map(|(k, _)| k)
            .collect();
        let aligned = self.aligned_counts(&frame, &inside);
        Some(GaborCandidate {
            i,
            j,
            width: self.width,
            inside,
            aligned,
        })
    }

    fn aligned_counts(&self, frame: &AxisFrame, members: &[usize]) -> Vec<usize> {
        let axis = frame.angle_mod_pi();
        self.precisions
            .iter()
            .map(|&tau| {
                members
                    .iter()
                    .filter(|&&m| tau_aligned(self.field.elements[m].theta, axis, tau))
                    .count()
            })
            .collect()
    }

    fn score_counts(&self, n: usize, aligned: &[usize]) -> (LogNfa, f64) {
        let (tail, tau) = self
            .precisions
            .iter()
            .zip(aligned)
            .map(|(&tau, &k)| {
                let params = BinTailParams::new(n as u64, k as u64, aligned_probability(tau))
                    .expect("k <= n");
                (log10_binom_tail(params), tau)
            })
            .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best });
        (LogNfa::new(self.log10_tests + tail), tau)
    }

    pub fn score(&self, candidate: &GaborCandidate) -> (LogNfa, f64) {
        self.score_counts(candidate.n(), &candidate.aligned)
    }

    /// NFA counting only `members` as the elements inside.
    pub fn rescore(&self, candidate: &GaborCandidate, members: &[usize]) -> LogNfa {
        match self.frame(candidate.i, candidate.j) {
            Some((_, _, frame)) => {
                let aligned = self.aligned_counts(&frame, members);
                self.score_counts(members.len(), &aligned).0
            }
            None => LogNfa::new(f64::INFINITY),
        }
    }

    pub fn detect(&self, epsilon: f64) -> GaborDetectionReport {
        let eps_log = epsilon.log10();
        let n = self.field.len();
        let per_anchor: Vec<(Option<GaborDetection>, Vec<GaborDetection>)> = (0..n)
            .into_par_iter()
            .map(|a| {
                let mut best: Option<GaborDetection> = None;
                let mut hits = Vec::new();
                for b in a + 1..n {
                    let Some(candidate) = self.candidate(a, b) else {
                        continue;
                    };
                    let (nfa, tau) = self.score(&candidate);
                    let det = GaborDetection { candidate, nfa, tau };
                    if nfa.value() < eps_log {
                        hits.push(det.clone());
                    }
                    if best.as_ref().is_none_or(|cur| gabor_order(&det, cur).is_lt()) {
                        best = Some(det);
                    }
                }
                (best, hits)
            })
            .collect();

        let mut best: Option<GaborDetection> = None;
        let mut detections = Vec::new();
        for (b, hits) in per_anchor {
            detections.extend(hits);
            if let Some(b) = b {
                if best.as_ref().is_none_or(|cur| gabor_order(&b, cur).is_lt()) {
                    best = Some(b);
                }
            }
        }
        detections.sort_by(gabor_order);
        GaborDetectionReport {
            best_nfa: best.as_ref().map_or(LogNfa::new(f64::INFINITY), |d| d.nfa),
            best,
            detections,
        }
    }
}

pub fn detect_gabor(field: &GaborField, config: &GaborConfig, epsilon: f64) -> Result<GaborDetectionReport> {
    Ok(GaborScorer::new(field, config)?.detect(epsilon))
}
