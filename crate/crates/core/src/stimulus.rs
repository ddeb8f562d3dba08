//! Seeded generators for dot scenes and oriented-element stimuli.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with a 64-bit value, and
//! every sampling step draws from the stream in a fixed order, so a spec and
//! a seed fully determine the output on every platform.
//!
//! Coordinates and orientations are rounded to 12 significant digits as
//! they are generated. That is the precision of the file format, so writing
//! a generated pattern and reading it back is lossless.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dots::{check_domain, DotPattern};
use crate::error::{Error, Result};
use crate::gabor::{GaborElement, GaborField};
use crate::geometry::{point_segment_distance, Domain, Point};

/// Rejection attempts allowed per placed element.
pub const MAX_ATTEMPTS_PER_ELEMENT: usize = 10_000;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive the seed of the `index`-th item of a batch.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Round to 12 significant digits.
pub fn quantize(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn quantize_angle(theta: f64) -> f64 {
    let t = quantize(crate::geometry::wrap_pi(theta));
    if t >= PI {
        0.0
    } else {
        t
    }
}

fn quantize_point(p: Point) -> Point {
    Point::new(quantize(p.x), quantize(p.y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StimulusKind {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub width: f64,
    pub height: f64,
}

impl From<DomainSpec> for Domain {
    fn from(d: DomainSpec) -> Self {
        Domain::new(d.width, d.height)
    }
}

impl From<Domain> for DomainSpec {
    fn from(d: Domain) -> Self {
        DomainSpec {
            width: d.width,
            height: d.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub kind: StimulusKind,
    /// Total number of elements.
    pub n: usize,
    pub domain: DomainSpec,
    /// Number of planted elements; ignored for negative stimuli.
    #[serde(default)]
    pub length: usize,
    /// Size of the orientation interval of planted elements, in radians.
    #[serde(default)]
    pub jitter: f64,
    /// Minimum distance between any two elements. `None` uses half the
    /// expected spacing, `width / sqrt(n) / 2`.
    #[serde(default)]
    pub min_spacing: Option<f64>,
    /// Distance between consecutive planted elements. `None` uses the
    /// expected spacing `width / sqrt(n)`.
    #[serde(default)]
    pub spacing: Option<f64>,
    pub seed: u64,
}

impl StimulusSpec {
    pub fn negative(n: usize, domain: Domain, seed: u64) -> Self {
        StimulusSpec {
            kind: StimulusKind::Negative,
            n,
            domain: domain.into(),
            length: 0,
            jitter: 0.0,
            min_spacing: None,
            spacing: None,
            seed,
        }
    }

    pub fn positive(n: usize, domain: Domain, length: usize, jitter: f64, seed: u64) -> Self {
        StimulusSpec {
            kind: StimulusKind::Positive,
            length,
            jitter,
            ..Self::negative(n, domain, seed)
        }
    }

    /// The spec as it reads back from a file: every float rounded to 12
    /// significant digits.
    pub fn normalized(&self) -> Self {
        StimulusSpec {
            domain: DomainSpec {
                width: quantize(self.domain.width),
                height: quantize(self.domain.height),
            },
            jitter: quantize(self.jitter),
            min_spacing: self.min_spacing.map(quantize),
            spacing: self.spacing.map(quantize),
            ..self.clone()
        }
    }

    fn expected_spacing(&self) -> f64 {
        self.domain.width / (self.n.max(1) as f64).sqrt()
    }

    pub fn resolved_min_spacing(&self) -> f64 {
        self.min_spacing.unwrap_or_else(|| self.expected_spacing() / 2.0)
    }

    pub fn resolved_spacing(&self) -> f64 {
        self.spacing.unwrap_or_else(|| self.expected_spacing())
    }

    pub fn validate(&self) -> Result<()> {
        check_domain(self.domain.into())?;
        let min_spacing = self.resolved_min_spacing();
        if !(min_spacing >= 0.0 && min_spacing.is_finite()) {
            return Err(Error::InvalidConfig("min_spacing must be non-negative".into()));
        }
        if self.kind == StimulusKind::Positive {
            if self.length < 2 || self.length > self.n {
                return Err(Error::InvalidConfig(format!(
                    "length must be in [2, n], got {} with n = {}",
                    self.length, self.n
                )));
            }
            // pi itself reads back from a file rounded up
            if !(0.0..=quantize(PI)).contains(&self.jitter) {
                return Err(Error::InvalidConfig(format!(
                    "jitter must be in [0, pi], got {}",
                    self.jitter
                )));
            }
            let spacing = self.resolved_spacing();
            if !(spacing.is_finite() && spacing > 0.0) {
                return Err(Error::InvalidConfig("spacing must be positive".into()));
            }
            if quantize(spacing) < min_spacing {
                return Err(Error::InvalidConfig(format!(
                    "planted spacing {spacing} below min_spacing {min_spacing}"
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth of a positive stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// First and last planted element positions.
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Segment direction in `[0, pi)`.
    pub direction: f64,
    /// Planted element indices, ascending.
    pub members: Vec<usize>,
}

impl PlantedTruth {
    pub fn endpoints(&self) -> (Point, Point) {
        (
            Point::new(self.a[0], self.a[1]),
            Point::new(self.b[0], self.b[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusRecord {
    pub id: String,
    pub spec: StimulusSpec,
    pub field: GaborField,
    pub truth: Option<PlantedTruth>,
}

pub fn stimulus_id(spec: &StimulusSpec) -> String {
    match spec.kind {
        StimulusKind::Negative => format!("neg-n{}-{:016x}", spec.n, spec.seed),
        StimulusKind::Positive => format!(
            "pos-n{}-l{}-j{:.4}-{:016x}",
            spec.n, spec.length, spec.jitter, spec.seed
        ),
    }
}

/// Uniform rejection sampler honoring a minimum distance to every point
/// already in `placed`.
fn place_uniform(
    rng: &mut ChaCha8Rng,
    domain: Domain,
    count: usize,
    min_spacing: f64,
    placed: &mut Vec<Point>,
) -> Result<()> {
    for _ in 0..count {
        let mut attempts = 0;
        loop {
            if attempts == MAX_ATTEMPTS_PER_ELEMENT {
                return Err(Error::Infeasible(format!(
                    "could not place element {} with min_spacing {min_spacing} in {} x {}",
                    placed.len(),
                    domain.width,
                    domain.height
                )));
            }
            attempts += 1;
            let p = quantize_point(Point::new(
                rng.gen::<f64>() * domain.width,
                rng.gen::<f64>() * domain.height,
            ));
            if min_spacing <= 0.0 || placed.iter().all(|q| q.dist(p) >= min_spacing) {
                placed.push(p);
                break;
            }
        }
    }
    Ok(())
}

/// Sample a segment of the given length whose points, widened by `margin`,
/// stay inside the domain. Returns the start point and direction angle.
fn place_segment(
    rng: &mut ChaCha8Rng,
    domain: Domain,
    length: f64,
    margin: f64,
) -> Result<(Point, f64)> {
    for _ in 0..MAX_ATTEMPTS_PER_ELEMENT {
        let alpha = rng.gen::<f64>() * PI;
        let (hx, hy) = (alpha.cos().abs() * length / 2.0, alpha.sin() * length / 2.0);
        let (lo_x, hi_x) = (margin + hx, domain.width - margin - hx);
        let (lo_y, hi_y) = (margin + hy, domain.height - margin - hy);
        if lo_x > hi_x || lo_y > hi_y {
            continue;
        }
        let cx = lo_x + rng.gen::<f64>() * (hi_x - lo_x);
        let cy = lo_y + rng.gen::<f64>() * (hi_y - lo_y);
        let start = Point::new(cx - alpha.cos() * length / 2.0, cy - alpha.sin() * length / 2.0);
        return Ok((start, alpha));
    }
    Err(Error::Infeasible(format!(
        "segment of length {length} with margin {margin} does not fit in {} x {}",
        domain.width, domain.height
    )))
}

/// Minimum distance between two planted runs, in dot spacings.
const RUN_CLEARANCE: f64 = 4.0;

fn segment_distance(s: (Point, Point), t: (Point, Point)) -> f64 {
    let crosses = {
        let side = |p: Point, q: Point, r: Point| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
        side(s.0, s.1, t.0) * side(s.0, s.1, t.1) < 0.0 && side(t.0, t.1, s.0) * side(t.0, t.1, s.1) < 0.0
    };
    if crosses {
        return 0.0;
    }
    point_segment_distance(s.0, t.0, t.1)
        .min(point_segment_distance(s.1, t.0, t.1))
        .min(point_segment_distance(t.0, s.0, s.1))
        .min(point_segment_distance(t.1, s.0, s.1))
}

fn collinear_points(start: Point, alpha: f64, count: usize, spacing: f64) -> Vec<Point> {
    let (c, s) = (alpha.cos(), alpha.sin());
    (0..count)
        .map(|k| {
            let t = k as f64 * spacing;
            quantize_point(Point::new(start.x + t * c, start.y + t * s))
        })
        .collect()
}

pub fn gen_negative(spec: &StimulusSpec) -> Result<StimulusRecord> {
    let spec = &spec.normalized();
    if spec.kind != StimulusKind::Negative {
        return Err(Error::InvalidConfig("gen_negative requires kind = negative".into()));
    }
    spec.validate()?;
    let domain: Domain = spec.domain.into();
    let mut rng = rng_from_seed(spec.seed);
    let mut placed = Vec::with_capacity(spec.n);
    place_uniform(&mut rng, domain, spec.n, spec.resolved_min_spacing(), &mut placed)?;
    let elements = placed
        .into_iter()
        .map(|p| GaborElement {
            x: p.x,
            y: p.y,
            theta: quantize_angle(rng.gen::<f64>() * PI),
        })
        .collect();
    Ok(StimulusRecord {
        id: stimulus_id(spec),
        spec: spec.clone(),
        field: GaborField::new(domain, elements)?,
        truth: None,
    })
}

pub fn gen_positive(spec: &StimulusSpec) -> Result<StimulusRecord> {
    let spec = &spec.normalized();
    if spec.kind != StimulusKind::Positive {
        return Err(Error::InvalidConfig("gen_positive requires kind = positive".into()));
    }
    spec.validate()?;
    let domain: Domain = spec.domain.into();
    let min_spacing = spec.resolved_min_spacing();
    let spacing = spec.resolved_spacing();
    let mut rng = rng_from_seed(spec.seed);

    let seg_len = (spec.length - 1) as f64 * spacing;
    let (start, alpha) = place_segment(&mut rng, domain, seg_len, min_spacing)?;
    let direction = quantize_angle(alpha);
    let mut placed = collinear_points(start, alpha, spec.length, spacing);
    place_uniform(
        &mut rng,
        domain,
        spec.n - spec.length,
        min_spacing,
        &mut placed,
    )?;

    let mut elements: Vec<(GaborElement, bool)> = placed
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let planted = k < spec.length;
            let theta = if planted {
                if spec.jitter == 0.0 {
                    direction
                } else {
                    quantize_angle(alpha + spec.jitter * (rng.gen::<f64>() - 0.5))
                }
            } else {
                quantize_angle(rng.gen::<f64>() * PI)
            };
            (GaborElement { x: p.x, y: p.y, theta }, planted)
        })
        .collect();
    // element order must not reveal which elements are planted
    elements.shuffle(&mut rng);

    let members: Vec<usize> = elements
        .iter()
        .enumerate()
        .filter(|(_, (_, planted))| *planted)
        .map(|(k, _)| k)
        .collect();
    let (a, b) = (placed[0], placed[spec.length - 1]);
    Ok(StimulusRecord {
        id: stimulus_id(spec),
        spec: spec.clone(),
        field: GaborField::new(domain, elements.into_iter().map(|(e, _)| e).collect())?,
        truth: Some(PlantedTruth {
            a: [a.x, a.y],
            b: [b.x, b.y],
            direction,
            members,
        }),
    })
}

pub fn generate(spec: &StimulusSpec) -> Result<StimulusRecord> {
    match spec.kind {
        StimulusKind::Negative => gen_negative(spec),
        StimulusKind::Positive => gen_positive(spec),
    }
}

/// The nine jitter levels of the psychophysics grid, in radians.
pub fn jitter_levels() -> [f64; 9] {
    [
        0.0,
        PI / 5.0,
        PI / 4.0,
        PI / 3.0,
        PI / 2.0,
        2.0 * PI / 3.0,
        3.0 * PI / 4.0,
        4.0 * PI / 5.0,
        PI,
    ]
}

/// Aligned-element counts of the psychophysics grid.
pub fn grid_lengths() -> std::ops::RangeInclusive<usize> {
    3..=10
}

/// Positive specs for every (jitter, length) cell, `per_cell` seeds each,
/// ordered by jitter, then length, then replicate.
pub fn balanced_grid(n: usize, domain: Domain, per_cell: usize, base_seed: u64) -> Vec<StimulusSpec> {
    let mut specs = Vec::new();
    for &jitter in &jitter_levels() {
        for length in grid_lengths() {
            for _ in 0..per_cell {
                let seed = derive_seed(base_seed, specs.len() as u64);
                specs.push(StimulusSpec::positive(n, domain, length, jitter, seed));
            }
        }
    }
    specs
}

/// Recipes for synthetic dot scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case")]
pub enum DotRecipe {
    /// Uniform dots.
    Noise { n: usize },
    /// `lines` straight runs of `k` equally spaced dots, kept at least four
    /// spacings apart, then `noise` uniform dots.
    Planted {
        k: usize,
        noise: usize,
        spacing: f64,
        #[serde(default = "one")]
        lines: usize,
    },
    /// Gaussian clusters with standard deviation `sigma` whose centers are
    /// at least a third of the domain width apart, plus uniform noise.
    Clusters {
        clusters: usize,
        size: usize,
        sigma: f64,
        noise: usize,
    },
    /// Lattice centered in the domain. The seed is unused.
    Grid {
        rows: usize,
        cols: usize,
        spacing: f64,
    },
    /// `dense` uniform dots inside a centered block covering `block` of each
    /// side, plus `sparse` uniform dots over the whole domain.
    DensityStep {
        dense: usize,
        sparse: usize,
        block: f64,
    },
}

fn one() -> usize {
    1
}

/// A generated dot scene. `planted` lists the indices of each planted run,
/// or each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct DotScene {
    pub pattern: DotPattern,
    pub planted: Vec<Vec<usize>>,
}

pub fn gen_dot_scene(domain: Domain, recipe: &DotRecipe, seed: u64) -> Result<DotScene> {
    check_domain(domain)?;
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::new();
    let mut planted = Vec::new();
    match *recipe {
        DotRecipe::Noise { n } => place_uniform(&mut rng, domain, n, 0.0, &mut points)?,
        DotRecipe::Planted {
            k,
            noise,
            spacing,
            lines,
        } => {
            if k < 2 || !(spacing > 0.0 && spacing.is_finite()) {
                return Err(Error::InvalidConfig("planted needs k >= 2 and spacing > 0".into()));
            }
            let clearance = RUN_CLEARANCE * spacing;
            let mut segments: Vec<(Point, Point)> = Vec::new();
            for _ in 0..lines {
                let mut placed = None;
                for _ in 0..MAX_ATTEMPTS_PER_ELEMENT {
                    let (start, alpha) =
                        place_segment(&mut rng, domain, (k - 1) as f64 * spacing, spacing / 2.0)?;
                    let run = collinear_points(start, alpha, k, spacing);
                    let seg = (run[0], run[k - 1]);
                    let apart = segments.iter().all(|&(a, b)| {
                        segment_distance(seg, (a, b)) >= clearance
                    });
                    if apart {
                        placed = Some((run, seg));
                        break;
                    }
                }
                let (run, seg) = placed.ok_or_else(|| {
                    Error::Infeasible(format!("{lines} runs of {k} dots do not fit apart"))
                })?;
                segments.push(seg);
                let first = points.len();
                points.extend(run);
                planted.push((first..points.len()).collect());
            }
            place_uniform(&mut rng, domain, noise, 0.0, &mut points)?;
        }
        DotRecipe::Clusters {
            clusters,
            size,
            sigma,
            noise,
        } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidConfig("clusters need sigma > 0".into()));
            }
            let margin = (3.0 * sigma).min(domain.width.min(domain.height) / 4.0);
            let inner = Domain::new(domain.width - 2.0 * margin, domain.height - 2.0 * margin);
            let mut centers: Vec<Point> = Vec::new();
            place_uniform(&mut rng, inner, clusters, domain.width / 3.0, &mut centers)?;
            for c in centers {
                let c = Point::new(c.x + margin, c.y + margin);
                let first = points.len();
                for _ in 0..size {
                    points.push(gaussian_in_domain(&mut rng, domain, c, sigma)?);
                }
                planted.push((first..points.len()).collect());
            }
            place_uniform(&mut rng, domain, noise, 0.0, &mut points)?;
        }
        DotRecipe::Grid {
            rows,
            cols,
            spacing,
        } => {
            let (span_x, span_y) = (
                cols.saturating_sub(1) as f64 * spacing,
                rows.saturating_sub(1) as f64 * spacing,
            );
            if !(spacing > 0.0) || span_x > domain.width || span_y > domain.height {
                return Err(Error::Infeasible(format!(
                    "{rows} x {cols} grid with spacing {spacing} does not fit"
                )));
            }
            let (x0, y0) = ((domain.width - span_x) / 2.0, (domain.height - span_y) / 2.0);
            for r in 0..rows {
                for c in 0..cols {
                    points.push(quantize_point(Point::new(
                        x0 + c as f64 * spacing,
                        y0 + r as f64 * spacing,
                    )));
                }
            }
        }
        DotRecipe::DensityStep {
            dense,
            sparse,
            block,
        } => {
            if !(block > 0.0 && block <= 1.0) {
                return Err(Error::InvalidConfig("block must be in (0, 1]".into()));
            }
            let inner = Domain::new(domain.width * block, domain.height * block);
            let (ox, oy) = (
                (domain.width - inner.width) / 2.0,
                (domain.height - inner.height) / 2.0,
            );
            let mut block_pts = Vec::new();
            place_uniform(&mut rng, inner, dense, 0.0, &mut block_pts)?;
            points.extend(
                block_pts
                    .into_iter()
                    .map(|p| quantize_point(Point::new(p.x + ox, p.y + oy))),
            );
            planted.push((0..points.len()).collect());
            place_uniform(&mut rng, domain, sparse, 0.0, &mut points)?;
        }
    }
    Ok(DotScene {
        pattern: DotPattern::new(domain, points)?,
        planted,
    })
}

fn gaussian_in_domain(rng: &mut ChaCha8Rng, domain: Domain, center: Point, sigma: f64) -> Result<Point> {
    for _ in 0..MAX_ATTEMPTS_PER_ELEMENT {
        // Box-Muller
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = sigma * (-2.0 * u1.ln()).sqrt();
        let p = quantize_point(Point::new(
            center.x + r * (2.0 * PI * u2).cos(),
            center.y + r * (2.0 * PI * u2).sin(),
        ));
        if domain.contains(p) {
            return Ok(p);
        }
    }
    Err(Error::Infeasible("cluster center too far outside the domain".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_is_idempotent() {
        for x in [0.1, 1.0 / 3.0, 495.99999999999994, 1e-7, PI] {
            let q = quantize(x);
            assert_eq!(quantize(q), q);
            assert!((q - x).abs() <= x.abs() * 1e-11);
        }
    }

    #[test]
    fn derive_seed_spreads() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
    }

    #[test]
    fn grid_scene() {
        let scene = gen_dot_scene(
            Domain::new(100.0, 100.0),
            &DotRecipe::Grid {
                rows: 7,
                cols: 7,
                spacing: 10.0,
            },
            0,
        )
        .unwrap();
        assert_eq!(scene.pattern.len(), 49);
        for p in scene.pattern.points() {
            let (gx, gy) = ((p.x - 20.0) / 10.0, (p.y - 20.0) / 10.0);
            assert!((gx - gx.round()).abs() < 1e-12 && (gy - gy.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_cardinality() {
        let scene = gen_dot_scene(
            Domain::new(200.0, 200.0),
            &DotRecipe::Planted {
                k: 5,
                noise: 44,
                spacing: 15.0,
                lines: 1,
            },
            3,
        )
        .unwrap();
        assert_eq!(scene.pattern.len(), 49);
        assert_eq!(scene.planted, vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn infeasible_spacing_errors() {
        let mut spec = StimulusSpec::negative(200, Domain::new(50.0, 50.0), 1);
        spec.min_spacing = Some(20.0);
        assert!(matches!(gen_negative(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn kind_mismatch_rejected() {
        let spec = StimulusSpec::negative(20, Domain::new(100.0, 100.0), 1);
        assert!(gen_positive(&spec).is_err());
    }
}
