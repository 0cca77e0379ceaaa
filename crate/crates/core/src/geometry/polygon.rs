use serde::{Deserialize, Serialize};

use super::{orient2d, point_segment_distance, Isometry, Point2, EPS_GEOM};
use crate::error::{DrumError, Result};

/// Simple polygon with a counterclockwise ring. The closing edge is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonRepr", into = "PolygonRepr")]
pub struct Polygon {
    ring: Vec<Point2>,
    area: f64,
}

#[derive(Serialize, Deserialize)]
struct PolygonRepr {
    ring: Vec<Point2>,
}

impl TryFrom<PolygonRepr> for Polygon {
    type Error = DrumError;
    fn try_from(r: PolygonRepr) -> Result<Self> {
        Polygon::new(r.ring)
    }
}

impl From<Polygon> for PolygonRepr {
    fn from(p: Polygon) -> Self {
        PolygonRepr { ring: p.ring }
    }
}

pub fn polygon_area(p: &Polygon) -> f64 {
    p.area
}

fn shoelace(ring: &[Point2]) -> f64 {
    let n = ring.len();
    0.5 * (0..n).map(|i| ring[i].cross(ring[(i + 1) % n])).sum::<f64>()
}

impl Polygon {
    /// Validates simplicity and orients the ring counterclockwise.
    pub fn new(mut ring: Vec<Point2>) -> Result<Self> {
        if ring.len() >= 2 && ring.first().unwrap().dist(*ring.last().unwrap()) <= EPS_GEOM {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(DrumError::GeometryInvalid(format!("ring has {} vertices", ring.len())));
        }
        if ring.iter().any(|p| !p.is_finite()) {
            return Err(DrumError::GeometryInvalid("non-finite vertex".into()));
        }
        check_simple(&ring)?;
        let mut area = shoelace(&ring);
        if area.abs() <= EPS_GEOM {
            return Err(DrumError::GeometryDegenerate("polygon has zero area".into()));
        }
        if area < 0.0 {
            ring.reverse();
            area = -area;
        }
        Ok(Polygon { ring, area })
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Polygon::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn ring(&self) -> &[Point2] {
        &self.ring
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.ring.len();
        (0..n).map(move |i| (self.ring[i], self.ring[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed-set membership with tolerance `tol`.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        if self.distance_to_boundary(p) <= tol {
            return true;
        }
        self.winding(p) != 0
    }

    /// Strictly inside, at distance more than `tol` from the boundary.
    pub fn contains_strictly(&self, p: Point2, tol: f64) -> bool {
        self.distance_to_boundary(p) > tol && self.winding(p) != 0
    }

    fn winding(&self, p: Point2) -> i32 {
        let mut w = 0;
        for (a, b) in self.edges() {
            if a.y <= p.y {
                if b.y > p.y && orient2d(a, b, p) > 0.0 {
                    w += 1;
                }
            } else if b.y <= p.y && orient2d(a, b, p) < 0.0 {
                w -= 1;
            }
        }
        w
    }

    pub fn transformed(&self, iso: &Isometry) -> Result<Polygon> {
        Polygon::new(self.ring.iter().map(|p| iso.apply(*p)).collect())
    }

    /// Ring with collinear intermediate vertices removed.
    pub fn simplified(&self, tol: f64) -> Vec<Point2> {
        let mut ring = self.ring.clone();
        loop {
            let n = ring.len();
            let drop = (0..n).find(|&i| {
                let a = ring[(i + n - 1) % n];
                let b = ring[i];
                let c = ring[(i + 1) % n];
                orient2d(a, b, c).abs() / a.dist(c).max(EPS_GEOM) <= tol && (b.sub(a).dot(c.sub(b)) > 0.0)
            });
            match drop {
                Some(i) if n > 3 => {
                    ring.remove(i);
                }
                _ => return ring,
            }
        }
    }

    /// Sorted multiset of side lengths after merging collinear sides.
    pub fn side_lengths(&self) -> Vec<f64> {
        let ring = self.simplified(1e-9);
        let n = ring.len();
        let mut s: Vec<f64> = (0..n).map(|i| ring[i].dist(ring[(i + 1) % n])).collect();
        s.sort_by(f64::total_cmp);
        s
    }

    /// Congruence of polygons: the cyclic (side length, turning angle)
    /// sequences agree up to rotation of the start vertex and reversal.
    pub fn is_congruent_to(&self, other: &Polygon, tol: f64) -> bool {
        let a = signature(&self.simplified(tol));
        let b = signature(&other.simplified(tol));
        if a.len() != b.len() || (self.area - other.area).abs() > tol * self.area.max(1.0) {
            return false;
        }
        let mut rev = b.clone();
        rev.reverse();
        // reversing the traversal shifts which angle follows which side
        let rev: Vec<(f64, f64)> = (0..rev.len())
            .map(|i| (rev[i].0, rev[(i + 1) % rev.len()].1))
            .collect();
        for cand in [&b, &rev] {
            for shift in 0..a.len() {
                if a.iter().enumerate().all(|(i, (l, t))| {
                    let (l2, t2) = cand[(i + shift) % a.len()];
                    (l - l2).abs() <= tol && (t - t2).abs() <= tol
                }) {
                    return true;
                }
            }
        }
        false
    }
}

/// `(length of side i, exterior turning angle at the end of side i)`.
fn signature(ring: &[Point2]) -> Vec<(f64, f64)> {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            let c = ring[(i + 2) % n];
            let u = b.sub(a);
            let v = c.sub(b);
            (u.norm(), u.cross(v).atan2(u.dot(v)))
        })
        .collect()
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let tol = EPS_GEOM;
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    if ((o1 > tol && o2 < -tol) || (o1 < -tol && o2 > tol)) && ((o3 > tol && o4 < -tol) || (o3 < -tol && o4 > tol)) {
        return true;
    }
    point_segment_distance(c, a, b) <= tol
        || point_segment_distance(d, a, b) <= tol
        || point_segment_distance(a, c, d) <= tol
        || point_segment_distance(b, c, d) <= tol
}

fn check_simple(ring: &[Point2]) -> Result<()> {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if a.dist(b) <= EPS_GEOM {
            return Err(DrumError::GeometryInvalid(format!("repeated vertex at index {i}")));
        }
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if adjacent {
                // adjacent sides may only share their common vertex
                let (shared, far_a, far_b) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                let u = far_a.sub(shared);
                let v = far_b.sub(shared);
                if u.cross(v).abs() <= EPS_GEOM * u.norm() * v.norm() && u.dot(v) > 0.0 {
                    return Err(DrumError::GeometryInvalid(format!("sides {i} and {j} fold back")));
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return Err(DrumError::GeometryInvalid(format!("sides {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_area() {
        let sq = Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(polygon_area(&sq), 1.0);
    }

    #[test]
    fn clockwise_ring_is_reoriented() {
        let p = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.8, 2.4),
            Point2::new(5.0, 0.0),
        ])
        .unwrap();
        assert_eq!(p.area(), 6.0);
        assert!(shoelace(p.ring()) > 0.0);
    }

    #[test]
    fn bow_tie_is_rejected() {
        let err = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap_err();
        assert!(matches!(err, DrumError::GeometryInvalid(_)));
    }

    #[test]
    fn congruence_detects_rigid_copies_and_mirror_images() {
        let l = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 3.0),
            Point2::new(0.0, 3.0),
        ])
        .unwrap();
        let moved = l.transformed(&Isometry::rotation(1.1, Point2::new(4.0, -2.0))).unwrap();
        let mirrored = l
            .transformed(&Isometry::reflection(Point2::new(0.0, 0.0), Point2::new(0.3, 1.0)).unwrap())
            .unwrap();
        assert!(l.is_congruent_to(&moved, 1e-9));
        assert!(l.is_congruent_to(&mirrored, 1e-9));
        let sq = Polygon::rectangle(0.0, 0.0, 1.0, 5.0).unwrap();
        assert!(!l.is_congruent_to(&sq, 1e-9));
    }

    #[test]
    fn containment() {
        let sq = Polygon::rectangle(0.0, 0.0, 1.2, 1.2).unwrap();
        assert!(sq.contains_strictly(Point2::new(0.1, 0.1), 1e-9));
        assert!(!sq.contains_strictly(Point2::new(0.0, 0.5), 1e-9));
        assert!(sq.contains(Point2::new(0.0, 0.5), 1e-9));
        assert!(!sq.contains(Point2::new(1.3, 0.5), 1e-9));
    }
}
