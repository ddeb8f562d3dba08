//! JSON pattern files, stimulus manifests and CSV import.
//!
//! Pattern file, dots:
//!
//! ```json
//! {"domain": {"width": 512.0, "height": 512.0}, "points": [[10.5, 20.0], [30.0, 40.0]]}
//! ```
//!
//! Pattern file, oriented elements (`theta` in `[0, pi)`), with an optional
//! `truth` block when the field is a generated stimulus:
//!
//! ```json
//! {"domain": {"width": 496.0, "height": 496.0}, "elements": [{"x": 1.0, "y": 2.0, "theta": 0.5}]}
//! ```
//!
//! A manifest holds one stimulus record per line: the element pattern plus
//! `id` and `spec`.
//!
//! Every float written by this module is rounded to 12 significant digits.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::dots::DotPattern;
use crate::error::{Error, Result};
use crate::gabor::{GaborElement, GaborField};
use crate::geometry::{Domain, Point};
use crate::stimulus::{quantize, DomainSpec, PlantedTruth, StimulusRecord, StimulusSpec};

/// Serialize compactly with floats rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("serializable value");
    round_floats(&mut v);
    serde_json::to_string(&v).expect("value serializes")
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = quantize(n.as_f64().expect("f64 number"));
            *v = Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Deserialize, reporting the path of the offending field on failure.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(path_error)
}

pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(path_error)
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    let message = e.inner().to_string();
    // "missing field `x` at line 1 column 9" names a child of the path
    if let Some(name) = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
    {
        let field = if path == "." { name.to_string() } else { format!("{path}.{name}") };
        return Error::schema(field, "missing field");
    }
    let field = if path == "." { "document".to_string() } else { path };
    Error::schema(field, message)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternFile {
    Dots(DotPattern),
    Elements {
        field: GaborField,
        truth: Option<PlantedTruth>,
    },
}

impl PatternFile {
    pub fn domain(&self) -> Domain {
        match self {
            PatternFile::Dots(p) => p.domain(),
            PatternFile::Elements { field, .. } => field.domain(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PatternFile::Dots(p) => p.len(),
            PatternFile::Elements { field, .. } => field.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dot positions; oriented elements are reduced to their centers.
    pub fn to_dots(&self) -> DotPattern {
        match self {
            PatternFile::Dots(p) => p.clone(),
            PatternFile::Elements { field, .. } => DotPattern::new(
                field.domain(),
                field.elements().iter().map(|e| e.position()).collect(),
            )
            .expect("element positions already validated"),
        }
    }

    pub fn to_json(&self) -> String {
        to_json(&RawPattern::from(self))
    }
}

/// Wire form shared by pattern files, manifests and service payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPattern {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<StimulusSpec>,
    pub domain: DomainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<GaborElement>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PlantedTruth>,
}

impl From<&PatternFile> for RawPattern {
    fn from(p: &PatternFile) -> Self {
        let (points, elements, truth) = match p {
            PatternFile::Dots(d) => (
                Some(d.points().iter().map(|p| [p.x, p.y]).collect()),
                None,
                None,
            ),
            PatternFile::Elements { field, truth } => {
                (None, Some(field.elements().to_vec()), truth.clone())
            }
        };
        RawPattern {
            id: None,
            spec: None,
            domain: p.domain().into(),
            points,
            elements,
            truth,
        }
    }
}

impl RawPattern {
    pub fn validate(self) -> Result<PatternFile> {
        let domain: Domain = self.domain.into();
        match (self.points, self.elements) {
            (Some(points), None) => {
                if self.truth.is_some() {
                    return Err(Error::schema("truth", "only allowed with elements"));
                }
                let points = points.into_iter().map(|[x, y]| Point::new(x, y)).collect();
                Ok(PatternFile::Dots(DotPattern::new(domain, points)?))
            }
            (None, Some(elements)) => {
                for (i, e) in elements.iter().enumerate() {
                    if !(0.0..std::f64::consts::PI).contains(&e.theta) {
                        return Err(Error::schema(
                            format!("elements[{i}].theta"),
                            "must be in [0, pi)",
                        ));
                    }
                }
                let field = GaborField::new(domain, elements)?;
                if let Some(t) = &self.truth {
                    if let Some(&m) = t.members.iter().find(|&&m| m >= field.len()) {
                        return Err(Error::schema(
                            "truth.members",
                            format!("index {m} out of range"),
                        ));
                    }
                }
                Ok(PatternFile::Elements {
                    field,
                    truth: self.truth,
                })
            }
            (Some(_), Some(_)) => Err(Error::schema(
                "points",
                "a pattern holds either points or elements, not both",
            )),
            (None, None) => Err(Error::schema("points", "missing points or elements")),
        }
    }
}

pub fn parse_pattern(text: &str) -> Result<PatternFile> {
    from_json::<RawPattern>(text)?.validate()
}

pub fn parse_dots(text: &str) -> Result<DotPattern> {
    match parse_pattern(text)? {
        PatternFile::Dots(p) => Ok(p),
        PatternFile::Elements { .. } => Err(Error::schema("points", "expected a dot pattern")),
    }
}

pub fn parse_field(text: &str) -> Result<(GaborField, Option<PlantedTruth>)> {
    match parse_pattern(text)? {
        PatternFile::Elements { field, truth } => Ok((field, truth)),
        PatternFile::Dots(_) => Err(Error::schema("elements", "expected oriented elements")),
    }
}

pub fn dots_json(pattern: &DotPattern) -> String {
    PatternFile::Dots(pattern.clone()).to_json()
}

pub fn record_json(record: &StimulusRecord) -> String {
    to_json(&RawPattern {
        id: Some(record.id.clone()),
        spec: Some(record.spec.clone()),
        domain: record.field.domain().into(),
        points: None,
        elements: Some(record.field.elements().to_vec()),
        truth: record.truth.clone(),
    })
}

pub fn parse_record(text: &str) -> Result<StimulusRecord> {
    let raw: RawPattern = from_json(text)?;
    let id = raw.id.clone().ok_or_else(|| Error::schema("id", "missing field"))?;
    let spec = raw.spec.clone().ok_or_else(|| Error::schema("spec", "missing field"))?;
    match raw.validate()? {
        PatternFile::Elements { field, truth } => Ok(StimulusRecord {
            id,
            spec,
            field,
            truth,
        }),
        PatternFile::Dots(_) => Err(Error::schema("elements", "expected oriented elements")),
    }
}

#[derive(Debug, Default)]
pub struct Manifest {
    pub records: Vec<StimulusRecord>,
    /// One-based line number and reason for every skipped row.
    pub skipped: Vec<(usize, String)>,
}

pub fn write_manifest(records: &[StimulusRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&record_json(r));
        out.push('\n');
    }
    out
}

/// Blank lines are ignored; malformed rows are skipped and reported.
pub fn read_manifest(text: &str) -> Manifest {
    let mut m = Manifest::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line) {
            Ok(r) => m.records.push(r),
            Err(e) => m.skipped.push((i + 1, e.to_string())),
        }
    }
    m
}

/// Import `x,y` or `x,y,theta` rows (theta in radians). Blank lines and
/// lines starting with `#` are ignored, as is a non-numeric first row. When
/// `domain` is `None` it is taken as `[0, ceil(max x)] x [0, ceil(max y)]`.
pub fn parse_csv(text: &str, domain: Option<Domain>) -> Result<PatternFile> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut arity = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && arity.is_none() => {
                arity = Some(fields.len());
                continue;
            }
            Err(e) => return Err(Error::schema(format!("line {}", i + 1), e.to_string())),
        };
        if !(values.len() == 2 || values.len() == 3) {
            return Err(Error::schema(
                format!("line {}", i + 1),
                format!("expected 2 or 3 fields, got {}", values.len()),
            ));
        }
        if rows.first().is_some_and(|r| r.len() != values.len()) {
            return Err(Error::schema(
                format!("line {}", i + 1),
                "mixed row lengths",
            ));
        }
        rows.push(values);
    }
    let domain = domain.unwrap_or_else(|| {
        let max = |k: usize| rows.iter().map(|r| r[k]).fold(1.0_f64, f64::max).ceil();
        Domain::new(max(0), max(1))
    });
    if rows.first().is_some_and(|r| r.len() == 3) {
        let elements = rows
            .into_iter()
            .map(|r| GaborElement {
                x: r[0],
                y: r[1],
                theta: r[2],
            })
            .collect();
        Ok(PatternFile::Elements {
            field: GaborField::new(domain, elements)?,
            truth: None,
        })
    } else {
        let points = rows.into_iter().map(|r| Point::new(r[0], r[1])).collect();
        Ok(PatternFile::Dots(DotPattern::new(domain, points)?))
    }
}
