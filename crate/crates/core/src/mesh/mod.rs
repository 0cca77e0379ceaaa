//! Conforming simplicial meshes.
//!
//! One container serves two topologies. Triangle meshes store counterclockwise
//! vertex triples. Interval meshes store segments `[i, j]` with `x_i < x_j`,
//! all vertices on the line `y = 0`, and their boundary "edges" are the two
//! degenerate facets `[v, v]` at the end points.

mod build;
mod layout;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DrumError, Result};
use crate::geometry::{orient2d, point_segment_distance, Isometry, Point2, Polygon};

pub use build::{mesh_interval, mesh_polygon, mesh_rectangle, mesh_triangle, refine};
pub use layout::{mesh_layout, NodeCorrespondence};

pub const DEFAULT_TAG: &str = "dirichlet";
/// Absolute tolerance for identifying coincident vertices.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Cells {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryFacet {
    pub v: [usize; 2],
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point2>,
    cells: Cells,
    boundary: Vec<BoundaryFacet>,
    interior: Vec<usize>,
    on_boundary: Vec<bool>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a triangle mesh; cells are reoriented counterclockwise and the
    /// boundary is derived from edge incidence. `tag` names boundary edges.
    pub fn from_triangles(
        vertices: Vec<Point2>,
        mut cells: Vec<[usize; 3]>,
        tag: impl Fn(usize, usize) -> String,
    ) -> Result<Self> {
        let n = vertices.len();
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(DrumError::MeshInvalid(format!("non-finite vertex {p:?}")));
        }
        for c in cells.iter_mut() {
            if c.iter().any(|&v| v >= n) || c[0] == c[1] || c[1] == c[2] || c[0] == c[2] {
                return Err(DrumError::MeshInvalid(format!("bad cell {c:?}")));
            }
            let a = orient2d(vertices[c[0]], vertices[c[1]], vertices[c[2]]);
            if a.abs() <= f64::EPSILON * scale_of(&[vertices[c[0]], vertices[c[1]], vertices[c[2]]]) {
                return Err(DrumError::MeshInvalid(format!("degenerate cell {c:?}")));
            }
            if a < 0.0 {
                c.swap(1, 2);
            }
        }
        let mut count: BTreeMap<(usize, usize), (usize, usize, usize)> = BTreeMap::new();
        for c in &cells {
            for e in 0..3 {
                let (a, b) = (c[e], c[(e + 1) % 3]);
                let entry = count.entry(edge_key(a, b)).or_insert((0, a, b));
                entry.0 += 1;
                entry.1 = a;
                entry.2 = b;
            }
        }
        let mut boundary = Vec::new();
        for (&(_, _), &(k, a, b)) in &count {
            match k {
                1 => boundary.push(BoundaryFacet { v: [a, b], tag: tag(a, b) }),
                2 => {}
                _ => return Err(DrumError::MeshInvalid(format!("edge ({a}, {b}) has {k} incident cells"))),
            }
        }
        Mesh::assemble(vertices, Cells::Triangles(cells), boundary)
    }

    /// Builds an interval mesh from segments; end points become boundary facets.
    pub fn from_segments(vertices: Vec<Point2>, mut cells: Vec<[usize; 2]>, tag: impl Fn(usize) -> String) -> Result<Self> {
        let n = vertices.len();
        let mut degree = vec![0usize; n];
        for c in cells.iter_mut() {
            if c.iter().any(|&v| v >= n) || c[0] == c[1] {
                return Err(DrumError::MeshInvalid(format!("bad segment {c:?}")));
            }
            if vertices[c[0]].y != 0.0 || vertices[c[1]].y != 0.0 {
                return Err(DrumError::MeshInvalid("interval vertices must have y = 0".into()));
            }
            if vertices[c[0]].x > vertices[c[1]].x {
                c.swap(0, 1);
            }
            if vertices[c[1]].x - vertices[c[0]].x <= 0.0 {
                return Err(DrumError::MeshInvalid(format!("zero-length segment {c:?}")));
            }
            degree[c[0]] += 1;
            degree[c[1]] += 1;
        }
        if let Some(v) = degree.iter().position(|&d| d > 2) {
            return Err(DrumError::MeshInvalid(format!("vertex {v} has {} incident segments", degree[v])));
        }
        let boundary = (0..n)
            .filter(|&v| degree[v] == 1)
            .map(|v| BoundaryFacet { v: [v, v], tag: tag(v) })
            .collect();
        Mesh::assemble(vertices, Cells::Segments(cells), boundary)
    }

    fn assemble(vertices: Vec<Point2>, cells: Cells, mut boundary: Vec<BoundaryFacet>) -> Result<Self> {
        let n = vertices.len();
        let mut used = vec![false; n];
        match &cells {
            Cells::Segments(c) => c.iter().flatten().for_each(|&v| used[v] = true),
            Cells::Triangles(c) => c.iter().flatten().for_each(|&v| used[v] = true),
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(DrumError::MeshInvalid(format!("vertex {v} belongs to no cell")));
        }
        if n == 0 {
            return Err(DrumError::MeshInvalid("empty mesh".into()));
        }
        boundary.sort();
        let mut on_boundary = vec![false; n];
        for f in &boundary {
            on_boundary[f.v[0]] = true;
            on_boundary[f.v[1]] = true;
        }
        let interior = (0..n).filter(|&v| !on_boundary[v]).collect();
        Ok(Mesh {
            vertices,
            cells,
            boundary,
            interior,
            on_boundary,
        })
    }

    pub fn dim(&self) -> usize {
        match self.cells {
            Cells::Segments(_) => 1,
            Cells::Triangles(_) => 2,
        }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cells(&self) -> &Cells {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        match &self.cells {
            Cells::Segments(c) => c.len(),
            Cells::Triangles(c) => c.len(),
        }
    }

    /// Vertex ids of cell `k` (2 or 3 entries).
    pub fn cell(&self, k: usize) -> &[usize] {
        match &self.cells {
            Cells::Segments(c) => &c[k],
            Cells::Triangles(c) => &c[k],
        }
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        match &self.cells {
            Cells::Triangles(c) => c,
            Cells::Segments(_) => &[],
        }
    }

    pub fn boundary(&self) -> &[BoundaryFacet] {
        &self.boundary
    }

    pub fn interior_vertex_ids(&self) -> &[usize] {
        &self.interior
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_vertex_ids(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.on_boundary[v]).collect()
    }

    /// Length (1D) or area (2D) of cell `k`.
    pub fn cell_measure(&self, k: usize) -> f64 {
        let c = self.cell(k);
        let p = |i: usize| self.vertices[c[i]];
        match self.cells {
            Cells::Segments(_) => p(1).x - p(0).x,
            Cells::Triangles(_) => 0.5 * orient2d(p(0), p(1), p(2)),
        }
    }

    pub fn measure(&self) -> f64 {
        (0..self.n_cells()).map(|k| self.cell_measure(k)).sum()
    }

    pub fn cell_diameter(&self, k: usize) -> f64 {
        let c = self.cell(k);
        let mut d: f64 = 0.0;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                d = d.max(self.vertices[c[i]].dist(self.vertices[c[j]]));
            }
        }
        d
    }

    /// Mesh size `h`: the largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_cells()).map(|k| self.cell_diameter(k)).fold(0.0, f64::max)
    }

    pub fn boundary_measure(&self) -> f64 {
        self.boundary
            .iter()
            .map(|f| self.vertices[f.v[0]].dist(self.vertices[f.v[1]]))
            .sum()
    }

    /// Sorted neighbour lists of the vertex graph.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_vertices()];
        for k in 0..self.n_cells() {
            let c = self.cell(k);
            for &a in c {
                for &b in c {
                    if a != b {
                        nb[a].push(b);
                    }
                }
            }
        }
        for l in nb.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// Breadth-first hop distance from the given source vertices.
    pub fn hop_distance(&self, sources: &[usize]) -> Vec<usize> {
        hop_distance(&self.vertex_neighbors(), sources)
    }

    /// Cells incident to each vertex.
    pub fn vertex_cells(&self) -> Vec<Vec<usize>> {
        let mut vc = vec![Vec::new(); self.n_vertices()];
        for k in 0..self.n_cells() {
            for &v in self.cell(k) {
                vc[v].push(k);
            }
        }
        vc
    }

    /// Pairs of cells sharing a facet (edge in 2D, vertex in 1D).
    pub fn cell_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_cells()];
        match &self.cells {
            Cells::Segments(_) => {
                for cs in self.vertex_cells() {
                    if let [a, b] = cs[..] {
                        adj[a].push(b);
                        adj[b].push(a);
                    }
                }
            }
            Cells::Triangles(c) => {
                let mut by_edge: HashMap<(usize, usize), usize> = HashMap::new();
                for (k, t) in c.iter().enumerate() {
                    for e in 0..3 {
                        let key = edge_key(t[e], t[(e + 1) % 3]);
                        if let Some(o) = by_edge.insert(key, k) {
                            adj[k].push(o);
                            adj[o].push(k);
                        }
                    }
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
        }
        adj
    }

    /// Checks every structural invariant: positive cells, at most two cells
    /// per edge, boundary exactly the one-cell edges forming closed curves,
    /// and no vertex hanging in the middle of a boundary edge.
    pub fn audit(&self) -> Result<()> {
        for k in 0..self.n_cells() {
            if self.cell_measure(k) <= 0.0 {
                return Err(DrumError::MeshInvalid(format!("cell {k} has non-positive measure")));
            }
        }
        match &self.cells {
            Cells::Segments(c) => {
                let mut deg = vec![0; self.n_vertices()];
                for s in c {
                    deg[s[0]] += 1;
                    deg[s[1]] += 1;
                }
                for f in &self.boundary {
                    if f.v[0] != f.v[1] || deg[f.v[0]] != 1 {
                        return Err(DrumError::MeshInvalid(format!("bad 1D boundary facet {f:?}")));
                    }
                }
                if deg.iter().filter(|&&d| d == 1).count() != self.boundary.len() {
                    return Err(DrumError::MeshInvalid("boundary facets incomplete".into()));
                }
            }
            Cells::Triangles(c) => {
                let mut count: HashMap<(usize, usize), usize> = HashMap::new();
                for t in c {
                    for e in 0..3 {
                        *count.entry(edge_key(t[e], t[(e + 1) % 3])).or_default() += 1;
                    }
                }
                if let Some((e, k)) = count.iter().find(|(_, &k)| k > 2) {
                    return Err(DrumError::MeshInvalid(format!("edge {e:?} has {k} cells")));
                }
                let one: usize = count.values().filter(|&&k| k == 1).count();
                if one != self.boundary.len()
                    || self.boundary.iter().any(|f| count.get(&edge_key(f.v[0], f.v[1])) != Some(&1))
                {
                    return Err(DrumError::MeshInvalid("boundary edges differ from one-cell edges".into()));
                }
                let mut deg = vec![0usize; self.n_vertices()];
                for f in &self.boundary {
                    deg[f.v[0]] += 1;
                    deg[f.v[1]] += 1;
                }
                if deg.iter().any(|d| d % 2 == 1) {
                    return Err(DrumError::MeshInvalid("boundary is not a union of closed curves".into()));
                }
                self.check_hanging_nodes()?;
            }
        }
        Ok(())
    }

    fn check_hanging_nodes(&self) -> Result<()> {
        let h = self.mesh_size().max(f64::MIN_POSITIVE);
        let grid = VertexGrid::new(&self.vertices, h);
        for f in &self.boundary {
            let (a, b) = (self.vertices[f.v[0]], self.vertices[f.v[1]]);
            for v in grid.near_segment(a, b) {
                if v == f.v[0] || v == f.v[1] {
                    continue;
                }
                if point_segment_distance(self.vertices[v], a, b) <= MERGE_TOL {
                    return Err(DrumError::MeshInvalid(format!("vertex {v} hangs on boundary edge {:?}", f.v)));
                }
            }
        }
        Ok(())
    }

    /// Image under an isometry; cell orientation is restored for reflections.
    pub fn transformed(&self, iso: &Isometry) -> Result<Mesh> {
        let vertices: Vec<Point2> = self.vertices.iter().map(|&p| iso.apply(p)).collect();
        let tags = self.tag_lookup();
        match &self.cells {
            Cells::Triangles(c) => Mesh::from_triangles(vertices, c.clone(), |a, b| {
                tags.get(&edge_key(a, b)).cloned().unwrap_or_else(|| DEFAULT_TAG.into())
            }),
            Cells::Segments(c) => {
                if iso.q[1][0].abs() > 1e-12 || iso.q[0][1].abs() > 1e-12 || iso.t[1] != 0.0 {
                    return Err(DrumError::InvalidArgument(
                        "isometry does not preserve the line of an interval mesh".into(),
                    ));
                }
                let vertices = vertices.into_iter().map(|p| Point2::new(p.x, 0.0)).collect();
                Mesh::from_segments(vertices, c.clone(), |v| {
                    tags.get(&(v, v)).cloned().unwrap_or_else(|| DEFAULT_TAG.into())
                })
            }
        }
    }

    /// Copy with every boundary facet retagged by `tag(facet)`.
    pub fn retagged(&self, tag: impl Fn(&BoundaryFacet, Point2, Point2) -> String) -> Mesh {
        let mut m = self.clone();
        for f in m.boundary.iter_mut() {
            f.tag = tag(f, self.vertices[f.v[0]], self.vertices[f.v[1]]);
        }
        m.boundary.sort();
        m
    }

    fn tag_lookup(&self) -> HashMap<(usize, usize), String> {
        self.boundary
            .iter()
            .map(|f| (edge_key(f.v[0], f.v[1]), f.tag.clone()))
            .collect()
    }

    /// The outer boundary as a simple polygon (2D meshes with one boundary curve).
    pub fn boundary_polygon(&self) -> Result<Polygon> {
        if self.dim() != 2 {
            return Err(DrumError::InvalidArgument("boundary polygon of an interval mesh".into()));
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for f in &self.boundary {
            // boundary facets keep their cell orientation, so the domain is on the left
            if next.insert(f.v[0], f.v[1]).is_some() {
                return Err(DrumError::GeometryInvalid("boundary touches itself".into()));
            }
        }
        let start = self.boundary[0].v[0];
        let mut ring = vec![self.vertices[start]];
        let mut cur = next[&start];
        while cur != start {
            ring.push(self.vertices[cur]);
            cur = *next
                .get(&cur)
                .ok_or_else(|| DrumError::GeometryInvalid("open boundary chain".into()))?;
            if ring.len() > self.boundary.len() {
                return Err(DrumError::GeometryInvalid("boundary chain does not close".into()));
            }
        }
        if ring.len() != self.boundary.len() {
            return Err(DrumError::GeometryInvalid("mesh boundary has several components".into()));
        }
        Polygon::new(ring)
    }

    /// Glues meshes along coincident vertices (within `MERGE_TOL`). Returns the
    /// merged mesh and, per input mesh, its vertex map into the result.
    pub fn merge(parts: &[Mesh]) -> Result<(Mesh, Vec<Vec<usize>>)> {
        let first = parts.first().ok_or_else(|| DrumError::InvalidArgument("nothing to merge".into()))?;
        let dim = first.dim();
        if parts.iter().any(|m| m.dim() != dim) {
            return Err(DrumError::MeshMismatch("cannot merge meshes of different dimension".into()));
        }
        let mut merger = VertexMerger::new(MERGE_TOL);
        let mut maps = Vec::with_capacity(parts.len());
        for m in parts {
            maps.push(m.vertices.iter().map(|&p| merger.insert(p)).collect::<Result<Vec<usize>>>()?);
        }
        let mut tags: HashMap<(usize, usize), String> = HashMap::new();
        for (m, map) in parts.iter().zip(&maps) {
            for f in &m.boundary {
                tags.entry(edge_key(map[f.v[0]], map[f.v[1]])).or_insert_with(|| f.tag.clone());
            }
        }
        let vertices = merger.points;
        let tag = |a: usize, b: usize| tags.get(&edge_key(a, b)).cloned().unwrap_or_else(|| DEFAULT_TAG.into());
        let merged = match dim {
            1 => {
                let cells = parts
                    .iter()
                    .zip(&maps)
                    .flat_map(|(m, map)| {
                        let Cells::Segments(c) = &m.cells else { unreachable!() };
                        c.iter().map(|s| [map[s[0]], map[s[1]]]).collect::<Vec<_>>()
                    })
                    .collect();
                Mesh::from_segments(vertices, cells, |v| tag(v, v))?
            }
            _ => {
                let cells = parts
                    .iter()
                    .zip(&maps)
                    .flat_map(|(m, map)| m.triangles().iter().map(|t| [map[t[0]], map[t[1]], map[t[2]]]).collect::<Vec<_>>())
                    .collect();
                Mesh::from_triangles(vertices, cells, tag)?
            }
        };
        Ok((merged, maps))
    }

    /// Index of the vertex within `tol` of `p`, if any (linear scan).
    pub fn find_vertex(&self, p: Point2, tol: f64) -> Option<usize> {
        self.vertices.iter().position(|q| q.dist(p) <= tol)
    }

    /// A lookup structure for repeated vertex queries.
    pub fn locator(&self) -> VertexLocator<'_> {
        VertexLocator {
            mesh: self,
            grid: VertexGrid::new(&self.vertices, self.mesh_size().max(1e-12)),
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("mesh serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Mesh> {
        Ok(serde_json::from_str(s)?)
    }

    /// Vertex adjacency (cells as cliques) in Matrix Market pattern-free form.
    pub fn write_adjacency_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        let nb = self.vertex_neighbors();
        let nnz: usize = nb.iter().enumerate().map(|(i, l)| l.iter().filter(|&&j| j < i).count()).sum();
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n_vertices(), self.n_vertices(), nnz)?;
        for (i, l) in nb.iter().enumerate() {
            for &j in l.iter().filter(|&&j| j < i) {
                writeln!(w, "{} {} 1", i + 1, j + 1)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn hop_distance(nb: &[Vec<usize>], sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; nb.len()];
    let mut queue = std::collections::VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &nb[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

fn scale_of(p: &[Point2]) -> f64 {
    let s = p.iter().map(|q| q.x.abs().max(q.y.abs())).fold(1.0, f64::max);
    s * s
}

#[derive(Serialize, Deserialize)]
struct MeshRepr {
    vertices: Vec<Point2>,
    cells: Vec<Vec<usize>>,
    boundary: Vec<(usize, usize, String)>,
}

impl Serialize for Mesh {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeshRepr {
            vertices: self.vertices.clone(),
            cells: (0..self.n_cells()).map(|k| self.cell(k).to_vec()).collect(),
            boundary: self.boundary.iter().map(|f| (f.v[0], f.v[1], f.tag.clone())).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mesh {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = MeshRepr::deserialize(d)?;
        let tags: HashMap<(usize, usize), String> =
            r.boundary.iter().map(|(a, b, t)| (edge_key(*a, *b), t.clone())).collect();
        let tag = |a: usize, b: usize| tags.get(&edge_key(a, b)).cloned().unwrap_or_else(|| DEFAULT_TAG.into());
        let mesh = match r.cells.first().map(|c| c.len()) {
            Some(2) => {
                let cells = r
                    .cells
                    .iter()
                    .map(|c| <[usize; 2]>::try_from(c.as_slice()).map_err(|_| D::Error::custom("mixed cell sizes")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Mesh::from_segments(r.vertices, cells, |v| tag(v, v))
            }
            Some(3) => {
                let cells = r
                    .cells
                    .iter()
                    .map(|c| <[usize; 3]>::try_from(c.as_slice()).map_err(|_| D::Error::custom("mixed cell sizes")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Mesh::from_triangles(r.vertices, cells, tag)
            }
            _ => return Err(D::Error::custom("cells must be pairs or triples")),
        }
        .map_err(D::Error::custom)?;
        let derived: std::collections::HashSet<(usize, usize)> =
            mesh.boundary.iter().map(|f| edge_key(f.v[0], f.v[1])).collect();
        if let Some((a, b, _)) = r.boundary.iter().find(|(a, b, _)| !derived.contains(&edge_key(*a, *b))) {
            return Err(D::Error::custom(format!("listed boundary edge ({a}, {b}) is not on the boundary")));
        }
        Ok(mesh)
    }
}

/// Uniform hash grid over points for proximity queries.
struct VertexGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl VertexGrid {
    fn new(points: &[Point2], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        VertexGrid { cell, buckets }
    }

    fn key(p: &Point2, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    fn near(&self, p: Point2) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = Self::key(&p, self.cell);
        (i - 1..=i + 1)
            .flat_map(move |a| (j - 1..=j + 1).map(move |b| (a, b)))
            .filter_map(|k| self.buckets.get(&k))
            .flatten()
            .copied()
    }

    fn near_segment(&self, a: Point2, b: Point2) -> Vec<usize> {
        let (i0, j0) = Self::key(&Point2::new(a.x.min(b.x), a.y.min(b.y)), self.cell);
        let (i1, j1) = Self::key(&Point2::new(a.x.max(b.x), a.y.max(b.y)), self.cell);
        let mut out = Vec::new();
        for i in i0 - 1..=i1 + 1 {
            for j in j0 - 1..=j1 + 1 {
                if let Some(b) = self.buckets.get(&(i, j)) {
                    out.extend_from_slice(b);
                }
            }
        }
        out
    }
}

pub struct VertexLocator<'a> {
    mesh: &'a Mesh,
    grid: VertexGrid,
}

impl VertexLocator<'_> {
    /// Nearest vertex within `tol` of `p`; `tol` must not exceed the mesh size.
    pub fn find(&self, p: Point2, tol: f64) -> Option<usize> {
        self.grid
            .near(p)
            .map(|v| (v, self.mesh.vertices[v].dist(p)))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(v, _)| v)
    }
}

/// Incremental point deduplication with a near-miss guard: points closer
/// than 1000 tolerances but farther than one tolerance are a gluing error.
pub(crate) struct VertexMerger {
    tol: f64,
    points: Vec<Point2>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl VertexMerger {
    pub(crate) fn new(tol: f64) -> Self {
        VertexMerger {
            tol,
            points: Vec::new(),
            buckets: HashMap::new(),
        }
    }

    fn cell(&self) -> f64 {
        1e3 * self.tol
    }

    pub(crate) fn insert(&mut self, p: Point2) -> Result<usize> {
        let c = self.cell();
        let (i, j) = ((p.x / c).floor() as i64, (p.y / c).floor() as i64);
        let mut hit = None;
        for a in i - 1..=i + 1 {
            for b in j - 1..=j + 1 {
                for &k in self.buckets.get(&(a, b)).into_iter().flatten() {
                    let d = self.points[k].dist(p);
                    if d <= self.tol {
                        hit = Some(hit.map_or(k, |h: usize| h.min(k)));
                    } else if d < c {
                        return Err(DrumError::MeshGluingError(format!(
                            "points {:?} and {:?} are {d:.3e} apart: neither distinct nor coincident",
                            self.points[k], p
                        )));
                    }
                }
            }
        }
        if let Some(k) = hit {
            return Ok(k);
        }
        self.points.push(p);
        self.buckets.entry((i, j)).or_default().push(self.points.len() - 1);
        Ok(self.points.len() - 1)
    }

    pub(crate) fn into_points(self) -> Vec<Point2> {
        self.points
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Triangle;

    #[test]
    fn json_round_trip_keeps_tags() {
        let m = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 1).unwrap();
        let m = m.retagged(|_, a, b| if a.y == 0.0 && b.y == 0.0 { "robin".into() } else { DEFAULT_TAG.into() });
        let back = Mesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.boundary().iter().filter(|f| f.tag == "robin").count(), 2);
        assert_eq!(back.hash(), m.hash());
    }

    #[test]
    fn bad_json_boundary_is_rejected() {
        let s = r#"{"vertices":[[0,0],[1,0],[0,1],[1,1]],"cells":[[0,1,2],[1,3,2]],"boundary":[[1,2,"x"]]}"#;
        assert!(Mesh::from_json(s).is_err());
    }

    #[test]
    fn reflected_mesh_stays_counterclockwise() {
        let t = Triangle::new(Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(0.3, 1.0)).unwrap();
        let m = mesh_triangle(&t, 2).unwrap();
        let r = m.transformed(&Isometry::reflection(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap()).unwrap();
        r.audit().unwrap();
        assert!((r.measure() - m.measure()).abs() < 1e-12);
    }

    #[test]
    fn merge_glues_two_squares() {
        let a = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 2).unwrap();
        let b = a.transformed(&Isometry::translation(Point2::new(1.0, 0.0))).unwrap();
        let (m, maps) = Mesh::merge(&[a.clone(), b]).unwrap();
        m.audit().unwrap();
        assert_eq!(m.n_vertices(), 2 * a.n_vertices() - 5);
        assert_eq!(maps[0].len(), a.n_vertices());
        assert!((m.boundary_polygon().unwrap().area() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn near_miss_is_a_gluing_error() {
        let mut merger = VertexMerger::new(1e-9);
        merger.insert(Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(merger.insert(Point2::new(1e-10, 0.0)).unwrap(), 0);
        assert!(matches!(merger.insert(Point2::new(1e-7, 0.0)), Err(DrumError::MeshGluingError(_))));
    }

    #[test]
    fn audit_finds_hanging_node() {
        // a big triangle next to two small ones: vertex 4 hangs on edge 1-2
        let v = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.5, 0.5),
        ];
        let r = Mesh::from_triangles(v, vec![[0, 1, 2], [1, 3, 4], [4, 3, 2]], |_, _| DEFAULT_TAG.into());
        match r {
            Ok(m) => assert!(m.audit().is_err()),
            Err(e) => assert!(matches!(e, DrumError::MeshInvalid(_))),
        }
    }
}
