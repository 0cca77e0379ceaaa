use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Isometry, Point2, Polygon, Triangle, EPS_GEOM};
use crate::error::{DrumError, Result};

/// Placement of one copy: `iso` maps the copy onto the template triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopyPlacement {
    /// 1-based copy index.
    pub i: usize,
    #[serde(flatten)]
    pub iso: Isometry,
}

/// Shared-edge record: edge `edge_a` of copy `copy_a` coincides with edge
/// `edge_b` of copy `copy_b`. Serialized as `[i, e, j, f]` with 1-based copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct Gluing {
    pub copy_a: usize,
    pub edge_a: usize,
    pub copy_b: usize,
    pub edge_b: usize,
}

impl From<[usize; 4]> for Gluing {
    fn from(g: [usize; 4]) -> Self {
        Gluing {
            copy_a: g[0],
            edge_a: g[1],
            copy_b: g[2],
            edge_b: g[3],
        }
    }
}

impl From<Gluing> for [usize; 4] {
    fn from(g: Gluing) -> Self {
        [g.copy_a, g.edge_a, g.copy_b, g.edge_b]
    }
}

/// Boundary tag override for edge `edge` of copy `copy`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTag {
    pub copy: usize,
    pub edge: usize,
    pub tag: String,
}

/// Copies of a template triangle assembled into a polygonal domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyLayout {
    pub template: Triangle,
    pub copies: Vec<CopyPlacement>,
    pub gluing: Vec<Gluing>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<EdgeTag>,
}

/// A reflection tree: `(parent, side, child)` means copy `child` is the mirror
/// image of copy `parent` across its edge `side`. Copies are 1-based and copy 1
/// is the template itself.
pub type ReflectionTree = [(usize, usize, usize)];

// Both tables come from `cargo run --release --example derive_propeller`, which
// enumerates all edge-coloured reflection trees on seven copies and keeps the
// pairs admitting a Dirichlet transplantation with three signed entries per
// row. Seven pairs qualify; three of them embed without overlap for the
// template (0,0), (5,0), (1.8,2.4). This is one of those three.
pub const PROPELLER_TREE_1: [(usize, usize, usize); 6] =
    [(1, 0, 2), (1, 1, 3), (1, 2, 4), (2, 1, 5), (4, 0, 6), (5, 2, 7)];
pub const PROPELLER_TREE_2: [(usize, usize, usize); 6] =
    [(1, 0, 2), (1, 1, 3), (1, 2, 4), (2, 2, 5), (3, 0, 6), (5, 1, 7)];

/// The isospectral pair assembled from seven copies of `template`.
pub fn build_propeller_pair(template: &Triangle) -> Result<(CopyLayout, CopyLayout)> {
    let t = Triangle::new(template.a, template.b, template.c)?;
    Ok((
        CopyLayout::from_reflection_tree(&t, &PROPELLER_TREE_1)?,
        CopyLayout::from_reflection_tree(&t, &PROPELLER_TREE_2)?,
    ))
}

impl CopyLayout {
    /// Places copies by reflecting across edges and validates the embedding.
    pub fn from_reflection_tree(template: &Triangle, tree: &ReflectionTree) -> Result<Self> {
        let n = tree.len() + 1;
        let mut iso: Vec<Option<Isometry>> = vec![None; n + 1];
        iso[1] = Some(Isometry::identity());
        let mut queue = VecDeque::from([1usize]);
        while let Some(p) = queue.pop_front() {
            for &(parent, side, child) in tree.iter().filter(|e| e.0 == p) {
                if child == 0 || child > n || side > 2 || iso[child].is_some() {
                    return Err(DrumError::InvalidArgument(format!(
                        "malformed reflection tree entry ({parent}, {side}, {child})"
                    )));
                }
                let (a, b) = template.edge(side);
                let mirror = Isometry::reflection(a, b)?;
                iso[child] = Some(mirror.compose(&iso[parent].unwrap()));
                queue.push_back(child);
            }
        }
        let copies = (1..=n)
            .map(|i| {
                iso[i].map(|iso| CopyPlacement { i, iso }).ok_or_else(|| {
                    DrumError::InvalidArgument(format!("copy {i} is not reachable from copy 1"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let gluing = tree
            .iter()
            .map(|&(p, s, c)| Gluing {
                copy_a: p,
                edge_a: s,
                copy_b: c,
                edge_b: s,
            })
            .collect();
        let layout = CopyLayout {
            template: *template,
            copies,
            gluing,
            tags: Vec::new(),
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn n_copies(&self) -> usize {
        self.copies.len()
    }

    /// The isometry of 1-based copy `i` (copy -> template).
    pub fn iso(&self, i: usize) -> &Isometry {
        &self.copies[self.position(i)].iso
    }

    fn position(&self, i: usize) -> usize {
        self.copies
            .iter()
            .position(|c| c.i == i)
            .unwrap_or_else(|| panic!("no copy with index {i}"))
    }

    /// World-space triangle of 1-based copy `i`; its edge `e` is the image of
    /// template edge `e`.
    pub fn copy_triangle(&self, i: usize) -> Triangle {
        self.template.transformed(&self.iso(i).inverse())
    }

    pub fn area(&self) -> f64 {
        (1..=self.n_copies()).map(|i| self.copy_triangle(i).area()).sum()
    }

    /// Partner copy across template side `side`, per 1-based copy (index 0 unused).
    pub fn involution(&self, side: usize) -> Vec<Option<usize>> {
        let mut partner = vec![None; self.n_copies() + 1];
        for g in &self.gluing {
            if g.edge_a == side && g.edge_b == side {
                partner[g.copy_a] = Some(g.copy_b);
                partner[g.copy_b] = Some(g.copy_a);
            }
        }
        partner
    }

    /// Checks disjoint interiors, exact glued edges, and a simple boundary.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_copies();
        let mut seen = vec![false; n + 1];
        for c in &self.copies {
            if c.i == 0 || c.i > n || seen[c.i] {
                return Err(DrumError::InvalidArgument(format!("bad copy index {}", c.i)));
            }
            seen[c.i] = true;
            if c.iso.orthogonality_error() > 1e-12 {
                return Err(DrumError::InvalidArgument(format!("copy {} has a non-orthogonal map", c.i)));
            }
        }
        let tris: Vec<Triangle> = (1..=n).map(|i| self.copy_triangle(i)).collect();
        let scale = self.template.diameter();
        for i in 0..n {
            for j in i + 1..n {
                if tris[i].interiors_overlap(&tris[j], EPS_GEOM * scale.max(1.0)) {
                    return Err(DrumError::LayoutOverlap(format!(
                        "copies {} and {} overlap",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for g in &self.gluing {
            if g.copy_a == 0 || g.copy_a > n || g.copy_b == 0 || g.copy_b > n || g.edge_a > 2 || g.edge_b > 2 {
                return Err(DrumError::InvalidArgument(format!("bad gluing record {g:?}")));
            }
            let (p, q) = tris[g.copy_a - 1].edge(g.edge_a);
            let (r, s) = tris[g.copy_b - 1].edge(g.edge_b);
            if !same_segment((p, q), (r, s)) {
                return Err(DrumError::LayoutOverlap(format!("gluing record {g:?} does not match geometry")));
            }
        }
        self.union_polygon().map(|_| ())
    }

    /// Boundary of the union of copies as a simple polygon.
    pub fn union_polygon(&self) -> Result<Polygon> {
        let n = self.n_copies();
        let tris: Vec<Triangle> = (1..=n).map(|i| self.copy_triangle(i)).collect();
        let mut edges: Vec<(usize, usize, Point2, Point2)> = Vec::new();
        for (k, t) in tris.iter().enumerate() {
            for e in 0..3 {
                let (p, q) = t.edge(e);
                edges.push((k + 1, e, p, q));
            }
        }
        let mut boundary = Vec::new();
        for (idx, &(k, e, p, q)) in edges.iter().enumerate() {
            let matches: Vec<_> = edges
                .iter()
                .enumerate()
                .filter(|(j, o)| *j != idx && same_segment((p, q), (o.2, o.3)))
                .map(|(_, o)| (o.0, o.1))
                .collect();
            match matches.as_slice() {
                [] => {
                    // orient along the ccw boundary of its own copy
                    let t = &tris[k - 1];
                    if t.orientation() > 0 {
                        boundary.push((p, q));
                    } else {
                        boundary.push((q, p));
                    }
                }
                [(j, f)] => {
                    let glued = self.gluing.iter().any(|g| {
                        (g.copy_a == k && g.edge_a == e && g.copy_b == *j && g.edge_b == *f)
                            || (g.copy_b == k && g.edge_b == e && g.copy_a == *j && g.edge_a == *f)
                    });
                    if !glued {
                        return Err(DrumError::LayoutOverlap(format!(
                            "copies {k} and {j} touch along an unglued edge"
                        )));
                    }
                }
                _ => {
                    return Err(DrumError::LayoutOverlap(format!("edge {e} of copy {k} is shared by three copies")));
                }
            }
        }
        // chain boundary edges into a single ring
        let mut ring = vec![boundary[0].0];
        let mut used = vec![false; boundary.len()];
        used[0] = true;
        let mut cur = boundary[0].1;
        let start = boundary[0].0;
        while cur.dist(start) > EPS_GEOM {
            let next: Vec<usize> = (0..boundary.len())
                .filter(|&i| !used[i] && boundary[i].0.dist(cur) <= EPS_GEOM)
                .collect();
            if next.len() != 1 {
                return Err(DrumError::LayoutOverlap(
                    "union boundary is not a simple closed curve".into(),
                ));
            }
            used[next[0]] = true;
            ring.push(cur);
            cur = boundary[next[0]].1;
        }
        if used.iter().any(|u| !u) {
            return Err(DrumError::LayoutOverlap("union boundary has several components".into()));
        }
        Polygon::new(ring).map_err(|e| DrumError::LayoutOverlap(format!("union boundary: {e}")))
    }
}

fn same_segment(a: (Point2, Point2), b: (Point2, Point2)) -> bool {
    (a.0.dist(b.0) <= EPS_GEOM && a.1.dist(b.1) <= EPS_GEOM) || (a.0.dist(b.1) <= EPS_GEOM && a.1.dist(b.0) <= EPS_GEOM)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> Triangle {
        Triangle::new(Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), Point2::new(1.8, 2.4)).unwrap()
    }

    #[test]
    fn propeller_layouts_have_seven_copies_and_area_42() {
        let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
        for l in [&l1, &l2] {
            assert_eq!(l.n_copies(), 7);
            assert!((l.area() - 42.0).abs() < 1e-9);
            assert!((l.union_polygon().unwrap().area() - 42.0).abs() < 1e-9 * 42.0);
        }
    }

    #[test]
    fn propeller_layouts_are_not_congruent() {
        let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
        let p1 = l1.union_polygon().unwrap();
        let p2 = l2.union_polygon().unwrap();
        assert!(!p1.is_congruent_to(&p2, 1e-9));
    }

    #[test]
    fn reflected_copies_carry_negative_orientation() {
        let (l1, _) = build_propeller_pair(&fig1()).unwrap();
        assert_eq!(l1.iso(1).orientation(), 1);
        for &(_, _, child) in &PROPELLER_TREE_1 {
            let depth_parity = l1.iso(child).orientation();
            assert_eq!(depth_parity, l1.copy_triangle(child).orientation());
        }
    }

    #[test]
    fn overlapping_tree_is_rejected() {
        // four copies around the right-angle vertex of the 3-4-5 template
        // close up and touch along an unglued edge
        let tree = [(1, 1, 2), (2, 2, 3), (3, 1, 4)];
        let err = CopyLayout::from_reflection_tree(&fig1(), &tree).unwrap_err();
        assert!(matches!(err, DrumError::LayoutOverlap(_)), "{err:?}");
    }

    #[test]
    fn json_round_trip() {
        let (l1, _) = build_propeller_pair(&fig1()).unwrap();
        let s = serde_json::to_string(&l1).unwrap();
        assert!(s.contains("\"gluing\":[[1,0,2,0]"));
        let back: CopyLayout = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l1);
    }
}
