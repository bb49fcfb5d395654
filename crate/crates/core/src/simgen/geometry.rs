//! Scene geometry in base units: a 64×48 side view, y pointing down.
//!
//! Containers are open polylines (left rim → bottom → right rim). Their
//! silhouette, used for masks and occlusion, is the polygon closed across the
//! rim, thickened by the wall radius.

use serde::{Deserialize, Serialize};

use crate::simgen::scenario::{BowlShape, CupShape, Scenario};

pub const BASE_WIDTH: f64 = 64.0;
pub const BASE_HEIGHT: f64 = 48.0;
/// y of the table top; the floor for particles.
pub const TABLE_Y: f64 = 44.0;
/// Half-thickness of container walls.
pub const WALL_RADIUS: f64 = 0.5;

const BOWL_CENTER_X: f64 = 44.0;
const BOWL_BOTTOM_Y: f64 = 43.0;
const PIVOT_OFFSET_X: f64 = -3.0;
const PIVOT_Y: f64 = 16.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }
    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
    /// Rotation that appears clockwise on screen (y down); `angle` in radians.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(self.x * c - self.y * s, self.x * s + self.y * c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    /// Closest point on the segment to `p`.
    pub fn closest(&self, p: Vec2) -> Vec2 {
        let d = self.b.sub(self.a);
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return self.a;
        }
        let t = (p.sub(self.a).dot(d) / len2).clamp(0.0, 1.0);
        self.a.add(d.scale(t))
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        p.sub(self.closest(p)).norm()
    }

    /// Proper or touching intersection of the open path `p → q` with this segment.
    pub fn crosses(&self, p: Vec2, q: Vec2) -> bool {
        let r = q.sub(p);
        let s = self.b.sub(self.a);
        let denom = r.cross(s);
        if denom.abs() < 1e-12 {
            return false;
        }
        let ap = self.a.sub(p);
        let t = ap.cross(s) / denom;
        let u = ap.cross(r) / denom;
        (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
    }
}

pub fn point_in_polygon(poly: &[Vec2], p: Vec2) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>().abs() / 2.0
}

/// An open container outline.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub outline: Vec<Vec2>,
}

impl Container {
    pub fn walls(&self) -> impl Iterator<Item = Segment> + '_ {
        self.outline.windows(2).map(|w| Segment { a: w[0], b: w[1] })
    }

    /// Whether `p` lies in the silhouette (interior or wall).
    pub fn covers(&self, p: Vec2, extra_radius: f64) -> bool {
        point_in_polygon(&self.outline, p)
            || self.walls().any(|s| s.distance(p) <= WALL_RADIUS + extra_radius)
    }

    pub fn transformed(&self, pivot: Vec2, angle: f64) -> Container {
        Container {
            outline: self.outline.iter().map(|p| p.rotate(angle).add(pivot)).collect(),
        }
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.outline {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }
}

/// Cup outline in its own frame: origin at the pouring (right) lip.
pub fn cup_outline(shape: CupShape) -> Container {
    let pts: &[(f64, f64)] = match shape {
        CupShape::Straight => &[(-8.0, 0.0), (-8.0, 11.0), (0.0, 11.0), (0.0, 0.0)],
        CupShape::Tapered => &[(-9.0, 0.0), (-7.0, 11.0), (-2.0, 11.0), (0.0, 0.0)],
        CupShape::NarrowNeck => &[
            (-3.0, 0.0),
            (-3.0, 2.5),
            (-8.0, 5.0),
            (-8.0, 11.0),
            (1.0, 11.0),
            (1.0, 5.0),
            (0.0, 2.5),
            (0.0, 0.0),
        ],
    };
    Container {
        outline: pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
    }
}

pub fn bowl_outline(shape: BowlShape) -> Container {
    // (rim half-width, bottom half-width, depth)
    let (rim, bottom, depth) = match shape {
        BowlShape::Wide => (14.0, 10.0, 9.0),
        BowlShape::Shallow => (15.0, 12.0, 6.0),
        BowlShape::Tall => (9.0, 7.0, 13.0),
    };
    let (cx, by) = (BOWL_CENTER_X, BOWL_BOTTOM_Y);
    Container {
        outline: vec![
            Vec2::new(cx - rim, by - depth),
            Vec2::new(cx - bottom, by),
            Vec2::new(cx + bottom, by),
            Vec2::new(cx + rim, by - depth),
        ],
    }
}

/// Static description of one scenario's scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGeometry {
    pub cup_local: Container,
    pub bowl: Container,
    pub pivot: Vec2,
}

impl SceneGeometry {
    pub fn new(scenario: &Scenario) -> Self {
        SceneGeometry {
            cup_local: cup_outline(scenario.cup_shape),
            bowl: bowl_outline(scenario.bowl_shape),
            pivot: Vec2::new(BOWL_CENTER_X + PIVOT_OFFSET_X, PIVOT_Y),
        }
    }

    pub fn cup_at(&self, tilt: f64) -> Container {
        self.cup_local.transformed(self.pivot, tilt)
    }

    /// Interior of the bowl closed across its rim.
    pub fn bowl_interior_contains(&self, p: Vec2) -> bool {
        point_in_polygon(&self.bowl.outline, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clockwise_rotation_turns_up_to_right() {
        let up = Vec2::new(0.0, -1.0).rotate(std::f64::consts::FRAC_PI_2);
        assert!((up.x - 1.0).abs() < 1e-12 && up.y.abs() < 1e-12);
    }

    #[test]
    fn crossing_detects_tunnelling() {
        let wall = Segment {
            a: Vec2::new(0.0, 0.0),
            b: Vec2::new(0.0, 10.0),
        };
        assert!(wall.crosses(Vec2::new(-1.0, 5.0), Vec2::new(1.0, 5.0)));
        assert!(!wall.crosses(Vec2::new(1.0, 5.0), Vec2::new(2.0, 5.0)));
    }

    #[test]
    fn containers_fit_the_scene() {
        for c in CupShape::ALL {
            for b in BowlShape::ALL {
                let s = Scenario::example(c, b);
                let g = SceneGeometry::new(&s);
                for tilt in [0.0f64, 75.0, 135.0] {
                    let (lo, hi) = g.cup_at(tilt.to_radians()).bounds();
                    assert!(lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= BASE_WIDTH && hi.y < TABLE_Y, "{c:?} {tilt}");
                }
                let (_, bowl_hi) = g.bowl.bounds();
                let (bowl_lo, _) = g.bowl.bounds();
                let (_, cup_hi) = g.cup_at(0.0).bounds();
                assert!(cup_hi.y < bowl_lo.y, "upright {c:?} intersects {b:?}");
                assert!(bowl_hi.y < TABLE_Y);
                assert!(g.bowl_interior_contains(Vec2::new(g.pivot.x, bowl_hi.y - 1.0)));
            }
        }
    }

    #[test]
    fn polygon_area_of_unit_square() {
        let sq = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
        assert_eq!(polygon_area(&sq), 1.0);
        assert!(point_in_polygon(&sq, Vec2::new(0.5, 0.5)));
        assert!(!point_in_polygon(&sq, Vec2::new(1.5, 0.5)));
    }
}
