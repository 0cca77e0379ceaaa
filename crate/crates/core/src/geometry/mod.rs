//! Planar points, triangles, rigid motions and simple polygons.

mod fit;
mod layout;
mod polygon;

use serde::{Deserialize, Serialize};

use crate::error::{DrumError, Result};

pub use fit::{fit_isometry, fit_isometry_1d};
pub use layout::{
    build_propeller_pair, CopyLayout, CopyPlacement, EdgeTag, Gluing, ReflectionTree,
    PROPELLER_TREE_1, PROPELLER_TREE_2,
};
pub use polygon::{polygon_area, Polygon};

/// Absolute tolerance for degeneracy tests, in input length units.
pub const EPS_GEOM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Point2 { x: p[0], y: p[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }

    pub fn lerp(self, o: Point2, s: f64) -> Point2 {
        Point2::new(self.x + s * (o.x - self.x), self.y + s * (o.y - self.y))
    }

    pub fn midpoint(self, o: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Twice the signed area of `(a, b, c)`; positive for counterclockwise order.
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> f64 {
    b.sub(a).cross(c.sub(a))
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let s = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, s))
}

/// A nondegenerate triangle. Edge `e` joins vertex `e` to vertex `(e + 1) % 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TriangleRepr", into = "TriangleRepr")]
pub struct Triangle {
    pub a: Point2,
    pub b: Point2,
    pub c: Point2,
}

#[derive(Serialize, Deserialize)]
struct TriangleRepr {
    a: Point2,
    b: Point2,
    c: Point2,
}

impl TryFrom<TriangleRepr> for Triangle {
    type Error = DrumError;
    fn try_from(r: TriangleRepr) -> Result<Self> {
        Triangle::new(r.a, r.b, r.c)
    }
}

impl From<Triangle> for TriangleRepr {
    fn from(t: Triangle) -> Self {
        TriangleRepr { a: t.a, b: t.b, c: t.c }
    }
}

impl Triangle {
    pub fn new(a: Point2, b: Point2, c: Point2) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(DrumError::GeometryDegenerate("non-finite vertex".into()));
        }
        let t = Triangle { a, b, c };
        if t.area() <= EPS_GEOM {
            return Err(DrumError::GeometryDegenerate(format!(
                "triangle area {:.3e} below tolerance",
                t.area()
            )));
        }
        Ok(t)
    }

    pub fn vertices(&self) -> [Point2; 3] {
        [self.a, self.b, self.c]
    }

    pub fn vertex(&self, i: usize) -> Point2 {
        self.vertices()[i % 3]
    }

    pub fn edge(&self, e: usize) -> (Point2, Point2) {
        (self.vertex(e), self.vertex(e + 1))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * orient2d(self.a, self.b, self.c)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// +1 for counterclockwise vertex order, -1 for clockwise.
    pub fn orientation(&self) -> i8 {
        if self.signed_area() >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn side_lengths(&self) -> [f64; 3] {
        [0, 1, 2].map(|e| {
            let (p, q) = self.edge(e);
            p.dist(q)
        })
    }

    pub fn diameter(&self) -> f64 {
        self.side_lengths().into_iter().fold(0.0, f64::max)
    }

    pub fn is_scalene(&self) -> bool {
        let [l0, l1, l2] = self.side_lengths();
        (l0 - l1).abs() > EPS_GEOM && (l1 - l2).abs() > EPS_GEOM && (l0 - l2).abs() > EPS_GEOM
    }

    pub fn transformed(&self, iso: &Isometry) -> Triangle {
        Triangle {
            a: iso.apply(self.a),
            b: iso.apply(self.b),
            c: iso.apply(self.c),
        }
    }

    /// Interiors intersect by more than `tol` along every separating axis.
    pub fn interiors_overlap(&self, other: &Triangle, tol: f64) -> bool {
        for tri in [self, other] {
            for e in 0..3 {
                let (p, q) = tri.edge(e);
                let d = q.sub(p);
                let n = Point2::new(-d.y, d.x).scale(1.0 / d.norm());
                let (lo1, hi1) = project(self, n);
                let (lo2, hi2) = project(other, n);
                if hi1 <= lo2 + tol || hi2 <= lo1 + tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let s = self.orientation() as f64;
        (0..3).all(|e| {
            let (u, v) = self.edge(e);
            s * orient2d(u, v, p) / u.dist(v) >= -tol
        })
    }
}

fn project(t: &Triangle, n: Point2) -> (f64, f64) {
    let v = t.vertices().map(|p| p.dot(n));
    (v[0].min(v[1]).min(v[2]), v[0].max(v[1]).max(v[2]))
}

/// Mirror image of `tri` across its edge `edge`; vertex order is preserved so
/// the result has the opposite orientation.
pub fn reflect_across_edge(tri: &Triangle, edge: usize) -> Result<Triangle> {
    if edge > 2 {
        return Err(DrumError::InvalidArgument(format!("edge index {edge} out of range")));
    }
    let tri = Triangle::new(tri.a, tri.b, tri.c)?;
    let (p, q) = tri.edge(edge);
    let r = Isometry::reflection(p, q)?;
    let mut out = tri.transformed(&r);
    // the mirror edge is fixed pointwise; keep it bit-identical
    match edge {
        0 => {
            out.a = tri.a;
            out.b = tri.b;
        }
        1 => {
            out.b = tri.b;
            out.c = tri.c;
        }
        _ => {
            out.c = tri.c;
            out.a = tri.a;
        }
    }
    Ok(out)
}

/// Rigid motion `x -> q x + t` with `q` orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub q: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Default for Isometry {
    fn default() -> Self {
        Isometry::identity()
    }
}

impl Isometry {
    pub const fn identity() -> Self {
        Isometry {
            q: [[1.0, 0.0], [0.0, 1.0]],
            t: [0.0, 0.0],
        }
    }

    /// Checked constructor: `q^T q = I` to 1e-12.
    pub fn new(q: [[f64; 2]; 2], t: [f64; 2]) -> Result<Self> {
        let iso = Isometry { q, t };
        if iso.orthogonality_error() > 1e-12 {
            return Err(DrumError::InvalidArgument(format!(
                "matrix is not orthogonal (error {:.3e})",
                iso.orthogonality_error()
            )));
        }
        Ok(iso)
    }

    pub fn rotation(theta: f64, t: Point2) -> Self {
        let (s, c) = theta.sin_cos();
        Isometry {
            q: [[c, -s], [s, c]],
            t: [t.x, t.y],
        }
    }

    pub fn translation(t: Point2) -> Self {
        Isometry {
            t: [t.x, t.y],
            ..Isometry::identity()
        }
    }

    /// Reflection across the line through `p` and `q`.
    pub fn reflection(p: Point2, q: Point2) -> Result<Self> {
        let d = q.sub(p);
        let len = d.norm();
        if len <= EPS_GEOM {
            return Err(DrumError::GeometryDegenerate("reflection line has zero length".into()));
        }
        let (ux, uy) = (d.x / len, d.y / len);
        let m = [[2.0 * ux * ux - 1.0, 2.0 * ux * uy], [2.0 * ux * uy, 2.0 * uy * uy - 1.0]];
        let mp = Point2::new(m[0][0] * p.x + m[0][1] * p.y, m[1][0] * p.x + m[1][1] * p.y);
        Ok(Isometry {
            q: m,
            t: [p.x - mp.x, p.y - mp.y],
        })
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.q[0][0] * p.x + self.q[0][1] * p.y + self.t[0],
            self.q[1][0] * p.x + self.q[1][1] * p.y + self.t[1],
        )
    }

    pub fn apply_linear(&self, v: Point2) -> Point2 {
        Point2::new(
            self.q[0][0] * v.x + self.q[0][1] * v.y,
            self.q[1][0] * v.x + self.q[1][1] * v.y,
        )
    }

    pub fn inverse(&self) -> Isometry {
        let q = [[self.q[0][0], self.q[1][0]], [self.q[0][1], self.q[1][1]]];
        let t = Point2::new(
            -(q[0][0] * self.t[0] + q[0][1] * self.t[1]),
            -(q[1][0] * self.t[0] + q[1][1] * self.t[1]),
        );
        Isometry { q, t: [t.x, t.y] }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let mut q = [[0.0; 2]; 2];
        for (i, row) in q.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.q[i][0] * other.q[0][j] + self.q[i][1] * other.q[1][j];
            }
        }
        let t = self.apply(Point2::new(other.t[0], other.t[1]));
        Isometry { q, t: [t.x, t.y] }
    }

    pub fn det(&self) -> f64 {
        self.q[0][0] * self.q[1][1] - self.q[0][1] * self.q[1][0]
    }

    /// Sign of `det(q)`.
    pub fn orientation(&self) -> i8 {
        if self.det() >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// `max |q^T q - I|` entrywise.
    pub fn orthogonality_error(&self) -> f64 {
        let q = &self.q;
        let g00 = q[0][0] * q[0][0] + q[1][0] * q[1][0] - 1.0;
        let g11 = q[0][1] * q[0][1] + q[1][1] * q[1][1] - 1.0;
        let g01 = q[0][0] * q[0][1] + q[1][0] * q[1][1];
        g00.abs().max(g11.abs()).max(g01.abs())
    }

    /// Largest entrywise difference in `q` and `t`.
    pub fn distance(&self, other: &Isometry) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.q[i][j] - other.q[i][j]).abs());
            }
            d = d.max((self.t[i] - other.t[i]).abs());
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn fig1() -> Triangle {
        Triangle::new(p(0.0, 0.0), p(5.0, 0.0), p(1.8, 2.4)).unwrap()
    }

    #[test]
    fn reflect_unit_right_triangle_across_x_axis() {
        let t = Triangle::new(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)).unwrap();
        let r = reflect_across_edge(&t, 0).unwrap();
        assert_eq!(r.a, p(0.0, 0.0));
        assert_eq!(r.b, p(1.0, 0.0));
        assert!(r.c.dist(p(0.0, -1.0)) < 1e-15);
        assert_eq!(r.orientation(), -t.orientation());
    }

    #[test]
    fn reflection_is_an_involution_and_preserves_area() {
        let t = fig1();
        for e in 0..3 {
            let r = reflect_across_edge(&t, e).unwrap();
            assert!((r.area() - 6.0).abs() < 1e-12);
            let back = reflect_across_edge(&r, e).unwrap();
            for (u, v) in back.vertices().iter().zip(t.vertices()) {
                assert!(u.dist(v) < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let err = Triangle::new(p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)).unwrap_err();
        assert!(matches!(err, DrumError::GeometryDegenerate(_)));
        let t = Triangle { a: p(0.0, 0.0), b: p(1.0, 0.0), c: p(2.0, 1e-12) };
        assert!(matches!(reflect_across_edge(&t, 0), Err(DrumError::GeometryDegenerate(_))));
    }

    #[test]
    fn fig1_triangle_is_scalene_with_area_six() {
        let t = fig1();
        assert!((t.area() - 6.0).abs() < 1e-15);
        assert!(t.is_scalene());
        let mut s = t.side_lengths();
        s.sort_by(f64::total_cmp);
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 4.0).abs() < 1e-12 && (s[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn isometry_inverse_and_compose() {
        let a = Isometry::rotation(0.7, p(1.0, -2.0));
        let b = Isometry::reflection(p(0.3, 0.1), p(-1.0, 2.0)).unwrap();
        let ab = a.compose(&b);
        let x = p(0.25, 3.5);
        assert!(ab.apply(x).dist(a.apply(b.apply(x))) < 1e-14);
        assert!(ab.inverse().apply(ab.apply(x)).dist(x) < 1e-14);
        assert_eq!(ab.orientation(), -1);
        assert!(Isometry::new([[1.0, 0.1], [0.0, 1.0]], [0.0, 0.0]).is_err());
    }
}
