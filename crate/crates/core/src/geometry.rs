//! Planar primitives shared by the detectors.

use std::cmp::Ordering;

/// Absolute tolerance for boundary-inclusive membership tests, in length units.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Lexicographic order on (x, y); used to orient candidate axes
    /// independently of point indexing.
    pub fn lex_cmp(self, other: Point) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub width: f64,
    pub height: f64,
}

impl Domain {
    pub const fn new(width: f64, height: f64) -> Self {
        Domain { width, height }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    /// Area of the intersection of a convex polygon with the domain.
    pub fn clipped_area(&self, polygon: &[Point]) -> f64 {
        polygon_area(&clip_to_box(polygon, self.width, self.height))
    }
}

/// Local frame of a segment: `u` runs along the axis from `origin`, `v` is
/// the signed offset to the left of the direction of travel.
#[derive(Debug, Clone, Copy)]
pub struct AxisFrame {
    pub origin: Point,
    pub dir: (f64, f64),
    pub length: f64,
}

impl AxisFrame {
    /// `None` when the endpoints coincide within tolerance.
    pub fn new(a: Point, b: Point) -> Option<Self> {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let length = dx.hypot(dy);
        if length <= GEOM_TOL {
            return None;
        }
        Some(AxisFrame {
            origin: a,
            dir: (dx / length, dy / length),
            length,
        })
    }

    #[inline]
    pub fn project(&self, p: Point) -> (f64, f64) {
        let (rx, ry) = (p.x - self.origin.x, p.y - self.origin.y);
        (rx * self.dir.0 + ry * self.dir.1, ry * self.dir.0 - rx * self.dir.1)
    }

    pub fn at(&self, u: f64, v: f64) -> Point {
        Point::new(
            self.origin.x + u * self.dir.0 - v * self.dir.1,
            self.origin.y + u * self.dir.1 + v * self.dir.0,
        )
    }

    #[inline]
    pub fn spans(&self, u: f64) -> bool {
        u >= -GEOM_TOL && u <= self.length + GEOM_TOL
    }

    /// Axis direction as an angle in `[0, pi)`.
    pub fn angle_mod_pi(&self) -> f64 {
        wrap_pi(self.dir.1.atan2(self.dir.0))
    }

    /// Corners of the strip `v in [v_lo, v_hi]` over the full axis length.
    pub fn strip(&self, v_lo: f64, v_hi: f64) -> [Point; 4] {
        [
            self.at(0.0, v_lo),
            self.at(self.length, v_lo),
            self.at(self.length, v_hi),
            self.at(0.0, v_hi),
        ]
    }
}

/// Reduce an angle to `[0, pi)`.
pub fn wrap_pi(theta: f64) -> f64 {
    let t = theta.rem_euclid(std::f64::consts::PI);
    if t >= std::f64::consts::PI {
        0.0
    } else {
        t
    }
}

/// Distance between two orientations taken modulo `pi`, in `[0, pi/2]`.
pub fn orientation_distance(a: f64, b: f64) -> f64 {
    let d = wrap_pi(a - b);
    d.min(std::f64::consts::PI - d)
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        twice += p.x * q.y - q.x * p.y;
    }
    twice.abs() / 2.0
}

// Sutherland-Hodgman against [0,w] x [0,h]
fn clip_to_box(poly: &[Point], w: f64, h: f64) -> Vec<Point> {
    let edges: [(fn(Point, f64) -> f64, f64); 4] = [
        (|p, _| p.x, 0.0),
        (|p, w| w - p.x, w),
        (|p, _| p.y, 0.0),
        (|p, h| h - p.y, h),
    ];
    let mut out = poly.to_vec();
    for (inside, bound) in edges {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        for (i, &cur) in input.iter().enumerate() {
            let prev = input[(i + input.len() - 1) % input.len()];
            let (dc, dp) = (inside(cur, bound), inside(prev, bound));
            if dc >= 0.0 {
                if dp < 0.0 {
                    out.push(lerp(prev, cur, dp / (dp - dc)));
                }
                out.push(cur);
            } else if dp >= 0.0 {
                out.push(lerp(prev, cur, dp / (dp - dc)));
            }
        }
    }
    out
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn frame_projection() {
        let f = AxisFrame::new(Point::new(1.0, 1.0), Point::new(4.0, 5.0)).unwrap();
        assert!((f.length - 5.0).abs() < 1e-12);
        let (u, v) = f.project(Point::new(4.0, 5.0));
        assert!((u - 5.0).abs() < 1e-12 && v.abs() < 1e-12);
        let p = f.at(2.0, 3.0);
        let (u, v) = f.project(p);
        assert!((u - 2.0).abs() < 1e-12 && (v - 3.0).abs() < 1e-12);
        assert!(AxisFrame::new(Point::new(2.0, 2.0), Point::new(2.0, 2.0)).is_none());
    }

    #[test]
    fn positive_offset_is_left_of_travel() {
        let f = AxisFrame::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0)).unwrap();
        assert!(f.project(Point::new(0.5, 1.0)).1 > 0.0);
    }

    #[test]
    fn clipping() {
        let d = Domain::new(10.0, 10.0);
        let inside = [
            Point::new(1.0, 1.0),
            Point::new(3.0, 1.0),
            Point::new(3.0, 2.0),
            Point::new(1.0, 2.0),
        ];
        assert!((d.clipped_area(&inside) - 2.0).abs() < 1e-12);
        let half_out = [
            Point::new(-1.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 3.0),
            Point::new(-1.0, 3.0),
        ];
        assert!((d.clipped_area(&half_out) - 2.0).abs() < 1e-12);
        let outside = [
            Point::new(-5.0, -5.0),
            Point::new(-1.0, -5.0),
            Point::new(-1.0, -1.0),
            Point::new(-5.0, -1.0),
        ];
        assert_eq!(d.clipped_area(&outside), 0.0);
        // diamond poking over a corner
        let diamond = [
            Point::new(0.0, -1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(-1.0, 0.0),
        ];
        assert!((d.clipped_area(&diamond) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orientation_wraps_mod_pi() {
        assert!(orientation_distance(0.1, 0.1 + PI).abs() < 1e-12);
        assert!((orientation_distance(0.05, PI - 0.05) - 0.1).abs() < 1e-12);
        assert!((orientation_distance(0.0, PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_pi(-PI), 0.0);
        assert!(wrap_pi(-0.5) > 2.6);
    }

    #[test]
    fn segment_distance() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(point_segment_distance(Point::new(5.0, 0.0), a, b), 0.0);
        assert!((point_segment_distance(Point::new(5.0, 3.0), a, b) - 3.0).abs() < 1e-12);
        assert!((point_segment_distance(Point::new(13.0, 4.0), a, b) - 5.0).abs() < 1e-12);
    }
}
