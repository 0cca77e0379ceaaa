use std::collections::HashMap;

use super::{edge_key, Cells, Mesh, DEFAULT_TAG};
use crate::error::{DrumError, Result};
use crate::geometry::{orient2d, Point2, Polygon, Triangle};

/// Uniform red refinement of the single cell `{t}`: `4^levels` cells.
pub fn mesh_triangle(t: &Triangle, levels: usize) -> Result<Mesh> {
    let t = Triangle::new(t.a, t.b, t.c)?;
    let base = Mesh::from_triangles(t.vertices().to_vec(), vec![[0, 1, 2]], |_, _| DEFAULT_TAG.into())?;
    refine_n(base, levels)
}

/// Axis-aligned rectangle split along the (x0,y0)-(x1,y1) diagonal, refined.
pub fn mesh_rectangle(x0: f64, y0: f64, x1: f64, y1: f64, levels: usize) -> Result<Mesh> {
    if !(x1 > x0 && y1 > y0) {
        return Err(DrumError::GeometryDegenerate(format!("empty rectangle [{x0},{x1}]x[{y0},{y1}]")));
    }
    let v = vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ];
    let base = Mesh::from_triangles(v, vec![[0, 1, 2], [0, 2, 3]], |_, _| DEFAULT_TAG.into())?;
    refine_n(base, levels)
}

/// Ear-clipping triangulation of a simple polygon followed by `levels` red
/// refinements.
pub fn mesh_polygon(p: &Polygon, levels: usize) -> Result<Mesh> {
    let ring = p.ring().to_vec();
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    let mut cells = Vec::with_capacity(ring.len() - 2);
    while idx.len() > 3 {
        let n = idx.len();
        let mut best: Option<(usize, f64)> = None;
        for k in 0..n {
            let (a, b, c) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let area = orient2d(ring[a], ring[b], ring[c]);
            if area <= 0.0 {
                continue;
            }
            let t = [ring[a], ring[b], ring[c]];
            let blocked = idx.iter().any(|&o| o != a && o != b && o != c && in_closed_triangle(&t, ring[o]));
            if blocked {
                continue;
            }
            // prefer the fattest ear to keep refined cells well shaped
            let q = ear_quality(&t);
            if best.map_or(true, |(_, bq)| q > bq) {
                best = Some((k, q));
            }
        }
        let (k, _) = best.ok_or_else(|| DrumError::GeometryInvalid("ear clipping found no ear".into()))?;
        cells.push([idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]]);
        idx.remove(k);
    }
    cells.push([idx[0], idx[1], idx[2]]);
    let base = Mesh::from_triangles(ring, cells, |_, _| DEFAULT_TAG.into())?;
    refine_n(base, levels)
}

fn in_closed_triangle(t: &[Point2; 3], p: Point2) -> bool {
    (0..3).all(|i| orient2d(t[i], t[(i + 1) % 3], p) >= 0.0)
}

fn ear_quality(t: &[Point2; 3]) -> f64 {
    let area = orient2d(t[0], t[1], t[2]);
    let s: f64 = (0..3).map(|i| t[i].dist(t[(i + 1) % 3]).powi(2)).sum();
    area / s
}

/// Uniform mesh of the interval [a, b] with `n` segments.
pub fn mesh_interval(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(DrumError::MeshInvalid(format!("an interval mesh needs n >= 2 segments, got {n}")));
    }
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(DrumError::MeshInvalid(format!("bad interval [{a}, {b}]")));
    }
    let h = (b - a) / n as f64;
    let vertices = (0..=n)
        .map(|k| Point2::new(if k == n { b } else { a + k as f64 * h }, 0.0))
        .collect();
    let cells = (0..n).map(|k| [k, k + 1]).collect();
    Mesh::from_segments(vertices, cells, |_| DEFAULT_TAG.into())
}

fn refine_n(mut m: Mesh, levels: usize) -> Result<Mesh> {
    for _ in 0..levels {
        m = refine(&m)?;
    }
    Ok(m)
}

/// Red refinement: every triangle splits into four similar children (every
/// segment into two); boundary tags are inherited by the halves.
pub fn refine(m: &Mesh) -> Result<Mesh> {
    let mut vertices = m.vertices.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point2>| -> usize {
        *mid.entry(edge_key(a, b)).or_insert_with(|| {
            vertices.push(vertices[a].midpoint(vertices[b]));
            vertices.len() - 1
        })
    };
    let tags = m.tag_lookup();
    match &m.cells {
        Cells::Segments(c) => {
            let mut cells = Vec::with_capacity(2 * c.len());
            for &[a, b] in c {
                let ab = midpoint(a, b, &mut vertices);
                cells.push([a, ab]);
                cells.push([ab, b]);
            }
            Mesh::from_segments(vertices, cells, |v| tags.get(&(v, v)).cloned().unwrap_or_else(|| DEFAULT_TAG.into()))
        }
        Cells::Triangles(c) => {
            let mut cells = Vec::with_capacity(4 * c.len());
            let mut child_tags: HashMap<(usize, usize), String> = HashMap::new();
            for &[a, b, cc] in c {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, cc, &mut vertices);
                let ca = midpoint(cc, a, &mut vertices);
                cells.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, cc], [ab, bc, ca]]);
            }
            for (&(a, b), tag) in &tags {
                let h = mid[&(a, b)];
                child_tags.insert(edge_key(a, h), tag.clone());
                child_tags.insert(edge_key(h, b), tag.clone());
            }
            Mesh::from_triangles(vertices, cells, |a, b| {
                child_tags.get(&edge_key(a, b)).cloned().unwrap_or_else(|| DEFAULT_TAG.into())
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1() -> Triangle {
        Triangle::new(Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), Point2::new(1.8, 2.4)).unwrap()
    }

    #[test]
    fn red_refinement_counts() {
        let m0 = mesh_triangle(&fig1(), 0).unwrap();
        assert_eq!((m0.n_cells(), m0.n_vertices()), (1, 3));
        let m2 = mesh_triangle(&fig1(), 2).unwrap();
        assert_eq!((m2.n_cells(), m2.n_vertices()), (16, 15));
        m2.audit().unwrap();
    }

    #[test]
    fn refinement_preserves_area_and_halves_h() {
        let mut m = mesh_triangle(&fig1(), 0).unwrap();
        for _ in 0..5 {
            let r = refine(&m).unwrap();
            assert!((r.measure() - 6.0).abs() <= 1e-12 * 6.0);
            assert!((r.mesh_size() - 0.5 * m.mesh_size()).abs() <= 1e-14 * m.mesh_size());
            r.audit().unwrap();
            m = r;
        }
    }

    #[test]
    fn square_two_cells_refine_to_eight() {
        let m = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 0).unwrap();
        assert_eq!(m.n_cells(), 2);
        let r = refine(&m).unwrap();
        assert_eq!(r.n_cells(), 8);
        let inner = r.interior_vertex_ids().to_vec();
        assert_eq!(inner.len(), 1);
        assert_eq!(r.vertices()[inner[0]], Point2::new(0.5, 0.5));
        let rr = refine(&r).unwrap();
        assert!(!rr.is_boundary_vertex(inner[0]));
    }

    #[test]
    fn interval_mesh() {
        let m = mesh_interval(0.0, std::f64::consts::PI, 4).unwrap();
        assert_eq!(m.n_vertices(), 5);
        for (k, v) in m.vertices().iter().enumerate() {
            assert!((v.x - k as f64 * std::f64::consts::PI / 4.0).abs() < 1e-15);
        }
        assert_eq!(m.boundary_vertex_ids(), vec![0, 4]);
        assert!((m.measure() - std::f64::consts::PI).abs() < 1e-14);
        assert!(matches!(mesh_interval(0.0, 1.0, 1), Err(DrumError::MeshInvalid(_))));
        assert_eq!(refine(&m).unwrap().n_cells(), 8);
    }

    #[test]
    fn ear_clipping_l_shape() {
        let p = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        let m = mesh_polygon(&p, 2).unwrap();
        m.audit().unwrap();
        assert!((m.measure() - 3.0).abs() < 1e-12);
        assert!(m.boundary_polygon().unwrap().is_congruent_to(&p, 1e-9));
    }

    proptest! {
        #[test]
        fn random_triangles_partition_exactly(
            ax in -3.0..3.0f64, ay in -3.0..3.0f64,
            bx in -3.0..3.0f64, by in -3.0..3.0f64,
            cx in -3.0..3.0f64, cy in -3.0..3.0f64,
            levels in 0usize..4,
        ) {
            let a = Point2::new(ax, ay);
            let b = Point2::new(bx, by);
            let c = Point2::new(cx, cy);
            prop_assume!(orient2d(a, b, c).abs() > 1e-2);
            let t = if orient2d(a, b, c) > 0.0 { Triangle::new(a, b, c) } else { Triangle::new(a, c, b) }.unwrap();
            let m = mesh_triangle(&t, levels).unwrap();
            prop_assert_eq!(m.n_cells(), 4usize.pow(levels as u32));
            prop_assert!((m.measure() - t.area()).abs() <= 1e-12 * t.area());
            prop_assert!(m.audit().is_ok());
        }
    }
}
