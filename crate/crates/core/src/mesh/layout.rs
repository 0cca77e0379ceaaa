use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{edge_key, mesh_triangle, Mesh, VertexMerger, DEFAULT_TAG, MERGE_TOL};
use crate::error::{DrumError, Result};
use crate::geometry::{point_segment_distance, CopyLayout};

/// Per-copy maps from template-mesh vertex ids to layout-mesh vertex ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCorrespondence {
    pub template: Mesh,
    /// `maps[i][v]` is the layout vertex of template vertex `v` in copy `i + 1`.
    pub maps: Vec<Vec<usize>>,
    /// Orientation (+1 or -1) of each copy's isometry.
    pub orientation: Vec<i8>,
}

impl NodeCorrespondence {
    pub fn n_copies(&self) -> usize {
        self.maps.len()
    }

    /// Largest distance between a pulled-back layout vertex and its template vertex.
    pub fn pullback_error(&self, layout: &CopyLayout, mesh: &Mesh) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, map) in self.maps.iter().enumerate() {
            let iso = layout.iso(k + 1);
            for (v, &w) in map.iter().enumerate() {
                worst = worst.max(iso.apply(mesh.vertices()[w]).dist(self.template.vertices()[v]));
            }
        }
        worst
    }
}

/// Meshes every copy with the same refined template mesh, transported by the
/// inverse copy isometry, and merges the vertices of glued edges.
pub fn mesh_layout(layout: &CopyLayout, levels: usize) -> Result<(Mesh, NodeCorrespondence)> {
    layout.validate()?;
    let template = mesh_triangle(&layout.template, levels)?;
    let n = layout.n_copies();
    let tv = template.vertices();

    // template vertices on each template edge
    let on_edge: Vec<Vec<usize>> = (0..3)
        .map(|e| {
            let (a, b) = layout.template.edge(e);
            (0..tv.len())
                .filter(|&v| point_segment_distance(tv[v], a, b) <= MERGE_TOL)
                .collect()
        })
        .collect();

    let mut merger = VertexMerger::new(MERGE_TOL);
    let mut maps = Vec::with_capacity(n);
    let mut orientation = Vec::with_capacity(n);
    let mut owners: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for i in 1..=n {
        let inv = layout.iso(i).inverse();
        orientation.push(layout.iso(i).orientation());
        let map = tv
            .iter()
            .map(|&p| merger.insert(inv.apply(p)))
            .collect::<Result<Vec<usize>>>()?;
        for &w in &map {
            owners.entry(w).or_default().insert(i);
        }
        maps.push(map);
    }

    // every glued edge must merge vertex-for-vertex
    let mut glued_vertices: BTreeSet<usize> = BTreeSet::new();
    for g in &layout.gluing {
        let a: BTreeSet<usize> = on_edge[g.edge_a].iter().map(|&v| maps[g.copy_a - 1][v]).collect();
        let b: BTreeSet<usize> = on_edge[g.edge_b].iter().map(|&v| maps[g.copy_b - 1][v]).collect();
        if a != b {
            return Err(DrumError::MeshGluingError(format!(
                "edge {} of copy {} and edge {} of copy {} did not merge",
                g.edge_a, g.copy_a, g.edge_b, g.copy_b
            )));
        }
        glued_vertices.extend(a);
    }
    if let Some((&w, _)) = owners.iter().find(|(w, o)| o.len() > 1 && !glued_vertices.contains(w)) {
        return Err(DrumError::MeshGluingError(format!("vertex {w} merged away from any glued edge")));
    }

    // boundary tags from per-copy edge overrides
    let mut tags: HashMap<(usize, usize), String> = HashMap::new();
    for t in &layout.tags {
        if t.copy == 0 || t.copy > n || t.edge > 2 {
            return Err(DrumError::InvalidArgument(format!("bad edge tag {t:?}")));
        }
        let map = &maps[t.copy - 1];
        for f in template.boundary() {
            if on_edge[t.edge].contains(&f.v[0]) && on_edge[t.edge].contains(&f.v[1]) {
                tags.insert(edge_key(map[f.v[0]], map[f.v[1]]), t.tag.clone());
            }
        }
    }

    let mut cells = Vec::with_capacity(n * template.n_cells());
    for map in &maps {
        for c in template.triangles() {
            cells.push([map[c[0]], map[c[1]], map[c[2]]]);
        }
    }
    let mesh = Mesh::from_triangles(merger.into_points(), cells, |a, b| {
        tags.get(&edge_key(a, b)).cloned().unwrap_or_else(|| DEFAULT_TAG.into())
    })?;
    Ok((
        mesh,
        NodeCorrespondence {
            template,
            maps,
            orientation,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_propeller_pair, EdgeTag, Point2, Triangle};

    fn fig1() -> Triangle {
        Triangle::new(Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), Point2::new(1.8, 2.4)).unwrap()
    }

    #[test]
    fn level_zero_vertex_count_matches_gluing_table() {
        let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
        for l in [&l1, &l2] {
            let (m, nc) = mesh_layout(l, 0).unwrap();
            // each of the 6 glued edges merges 2 vertex pairs, but a vertex
            // shared by several copies merges once per extra copy
            let owners: usize = nc.maps.iter().map(|m| m.len()).sum();
            assert_eq!(owners, 21);
            assert!(m.n_vertices() < 21);
            assert_eq!(m.n_cells(), 7);
            m.audit().unwrap();
        }
    }

    #[test]
    fn cell_count_and_pullback() {
        let (l1, _) = build_propeller_pair(&fig1()).unwrap();
        for levels in 0..4 {
            let (m, nc) = mesh_layout(&l1, levels).unwrap();
            assert_eq!(m.n_cells(), 7 * 4usize.pow(levels as u32));
            assert!(nc.pullback_error(&l1, &m) <= 1e-10);
            assert!((m.measure() - 42.0).abs() < 1e-9);
            m.audit().unwrap();
        }
    }

    #[test]
    fn edge_tags_reach_the_layout_mesh() {
        let (mut l1, _) = build_propeller_pair(&fig1()).unwrap();
        // copy 2's edge 2 is on the boundary of the first layout
        l1.tags.push(EdgeTag {
            copy: 2,
            edge: 2,
            tag: "robin".into(),
        });
        let (m, _) = mesh_layout(&l1, 2).unwrap();
        assert_eq!(m.boundary().iter().filter(|f| f.tag == "robin").count(), 4);
    }
}
