//! Detection followed by redundancy filtering, with a stable JSON output
//! shared by the command line and the service.

use serde::{Deserialize, Serialize};

use crate::dots::{DetectorMode, DotConfig, DotDetection, DotPattern, DotScorer};
use crate::error::{Error, Result};
use crate::format::{to_json, PatternFile};
use crate::gabor::{GaborConfig, GaborDetection, GaborField, GaborScorer};
use crate::masking::{apply_filter, Accepted, Filter};
use crate::stats::LogNfa;

/// Detector settings carried by a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectOptions {
    pub mode: DetectorMode,
    pub filter: Filter,
    pub epsilon: f64,
    /// Rectangle width for oriented elements.
    pub width: Option<f64>,
    /// Flank band width as a multiple of the rectangle width.
    pub band_factor: Option<f64>,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            mode: DetectorMode::Refined,
            filter: Filter::None,
            epsilon: 1.0,
            width: None,
            band_factor: None,
        }
    }
}

impl DetectOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::schema("epsilon", "must be positive"));
        }
        Ok(())
    }

    pub fn dot_config(&self) -> DotConfig {
        let mut cfg = DotConfig::default();
        if let Some(b) = self.band_factor {
            cfg.band_factor = b;
        }
        cfg
    }

    pub fn gabor_config(&self) -> GaborConfig {
        GaborConfig {
            width: self.width,
            ..GaborConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectJson {
    pub ax: f64,
    pub ay: f64,
    pub bx: f64,
    pub by: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionJson {
    pub rect: RectJson,
    pub log10_nfa: f64,
    pub members: Vec<usize>,
    /// Angular precision of the best test, oriented elements only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

/// Serialized detection list, newline terminated.
pub fn detections_json(detections: &[DetectionJson]) -> String {
    let mut s = to_json(&detections);
    s.push('\n');
    s
}

fn rect(points: (crate::geometry::Point, crate::geometry::Point), width: f64) -> RectJson {
    let (a, b) = points;
    RectJson {
        ax: a.x,
        ay: a.y,
        bx: b.x,
        by: b.y,
        width,
    }
}

fn sorted(mut out: Vec<DetectionJson>) -> Vec<DetectionJson> {
    // stable: equal NFAs keep detector order
    out.sort_by(|a, b| a.log10_nfa.total_cmp(&b.log10_nfa));
    out
}

/// Raw detections and the filtered selection for one dot pattern.
#[derive(Debug, Clone)]
pub struct DotRun {
    pub raw: Vec<DotDetection>,
    pub accepted: Vec<Accepted>,
}

pub fn run_dots(pattern: &DotPattern, options: &DetectOptions) -> Result<DotRun> {
    options.validate()?;
    let scorer = DotScorer::new(pattern, options.dot_config(), options.mode)?;
    let raw = scorer.detect(options.epsilon);
    let accepted = apply_filter(&raw, &scorer, options.filter, options.epsilon);
    Ok(DotRun { raw, accepted })
}

impl DotRun {
    pub fn to_json(&self, pattern: &DotPattern) -> Vec<DetectionJson> {
        let pts = pattern.points();
        sorted(
            self.accepted
                .iter()
                .map(|a| {
                    let c = &self.raw[a.index].candidate;
                    DetectionJson {
                        rect: rect((pts[c.i], pts[c.j]), c.width),
                        log10_nfa: a.log_nfa.value(),
                        members: a.members.clone(),
                        tau: None,
                    }
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct GaborRun {
    /// Smallest NFA over every tested rectangle.
    pub best_nfa: LogNfa,
    pub raw: Vec<GaborDetection>,
    pub accepted: Vec<Accepted>,
}

pub fn run_gabor(field: &GaborField, options: &DetectOptions) -> Result<GaborRun> {
    options.validate()?;
    let scorer = GaborScorer::new(field, &options.gabor_config())?;
    let report = scorer.detect(options.epsilon);
    let accepted = apply_filter(&report.detections, &scorer, options.filter, options.epsilon);
    Ok(GaborRun {
        best_nfa: report.best_nfa,
        raw: report.detections,
        accepted,
    })
}

impl GaborRun {
    pub fn to_json(&self, field: &GaborField) -> Vec<DetectionJson> {
        let el = field.elements();
        sorted(
            self.accepted
                .iter()
                .map(|a| {
                    let d = &self.raw[a.index];
                    let c = &d.candidate;
                    DetectionJson {
                        rect: rect((el[c.i].position(), el[c.j].position()), c.width),
                        log10_nfa: a.log_nfa.value(),
                        members: a.members.clone(),
                        tau: Some(d.tau),
                    }
                })
                .collect(),
        )
    }
}

/// Detect on any pattern file and return the detection JSON document.
/// Oriented elements use the orientation test; dots use `options.mode`.
pub fn detect_pattern(pattern: &PatternFile, options: &DetectOptions) -> Result<String> {
    let list = match pattern {
        PatternFile::Dots(p) => run_dots(p, options)?.to_json(p),
        PatternFile::Elements { field, .. } => run_gabor(field, options)?.to_json(field),
    };
    Ok(detections_json(&list))
}
