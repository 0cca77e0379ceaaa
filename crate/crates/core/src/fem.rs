//! P1 finite elements for the Dirichlet, Neumann and Robin Laplacians.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DrumError, Result};
use crate::geometry::{point_segment_distance, Point2};
use crate::mesh::{Cells, Mesh};
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
    Robin,
}

impl std::str::FromStr for BcKind {
    type Err = DrumError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(BcKind::Dirichlet),
            "neumann" => Ok(BcKind::Neumann),
            "robin" => Ok(BcKind::Robin),
            _ => Err(DrumError::InvalidArgument(format!("unknown boundary condition {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    /// Every mesh vertex carries a degree of freedom.
    Full,
    /// Boundary vertices are eliminated (discrete H¹₀).
    Dirichlet,
}

/// Degrees of freedom of a nodal space: `nodes[dof]` is a mesh vertex, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodalSpace {
    pub kind: SpaceKind,
    pub nodes: Vec<usize>,
    pub n_vertices: usize,
}

impl NodalSpace {
    pub fn new(mesh: &Mesh, kind: SpaceKind) -> Self {
        let nodes = match kind {
            SpaceKind::Full => (0..mesh.n_vertices()).collect(),
            SpaceKind::Dirichlet => mesh.interior_vertex_ids().to_vec(),
        };
        NodalSpace {
            kind,
            nodes,
            n_vertices: mesh.n_vertices(),
        }
    }

    pub fn for_kind(mesh: &Mesh, kind: BcKind) -> Self {
        match kind {
            BcKind::Dirichlet => NodalSpace::new(mesh, SpaceKind::Dirichlet),
            _ => NodalSpace::new(mesh, SpaceKind::Full),
        }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Inverse map, vertex -> dof.
    pub fn dof_of(&self) -> Vec<Option<usize>> {
        let mut d = vec![None; self.n_vertices];
        for (k, &v) in self.nodes.iter().enumerate() {
            d[v] = Some(k);
        }
        d
    }

    /// Restricts per-vertex values to the dofs.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&v| values[v]).collect()
    }

    /// Extends dof values to all vertices, zero on eliminated vertices.
    pub fn extend(&self, dofs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vertices];
        for (&v, &x) in self.nodes.iter().zip(dofs) {
            out[v] = x;
        }
        out
    }
}

/// Boundary coefficient β for the Robin form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryFunction {
    /// One value on every boundary edge.
    Constant(f64),
    /// Constant per boundary tag; edges with an unlisted tag have no data.
    ByTag(BTreeMap<String, f64>),
    /// Values sampled at mesh vertices (only boundary entries are read),
    /// interpolated linearly along each edge.
    PerVertex(Vec<f64>),
}

impl BoundaryFunction {
    /// Samples `f` at every vertex of `mesh`.
    pub fn sample(mesh: &Mesh, f: impl Fn(Point2) -> f64) -> Self {
        BoundaryFunction::PerVertex(mesh.vertices().iter().map(|&p| f(p)).collect())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BoundaryFunction::Constant(b) => *b == 0.0,
            BoundaryFunction::ByTag(m) => m.values().all(|&b| b == 0.0),
            BoundaryFunction::PerVertex(v) => v.iter().all(|&b| b == 0.0),
        }
    }

    /// β values at the two ends of a boundary facet.
    fn on_facet(&self, v: [usize; 2], tag: &str) -> Result<(f64, f64)> {
        let (a, b) = match self {
            BoundaryFunction::Constant(b) => (*b, *b),
            BoundaryFunction::ByTag(m) => {
                let b = *m
                    .get(tag)
                    .ok_or_else(|| DrumError::BoundaryDataMissing(format!("no β for boundary tag {tag:?}")))?;
                (b, b)
            }
            BoundaryFunction::PerVertex(vals) => {
                let get = |i: usize| {
                    vals.get(i)
                        .copied()
                        .ok_or_else(|| DrumError::BoundaryDataMissing(format!("no β sample at vertex {i}")))
                };
                (get(v[0])?, get(v[1])?)
            }
        };
        if !a.is_finite() || !b.is_finite() {
            return Err(DrumError::BoundaryDataMissing(format!("non-finite β on facet {v:?}")));
        }
        Ok((a, b))
    }

    /// β at a point on the boundary of `mesh` (within `tol` of a facet).
    pub fn eval_at(&self, mesh: &Mesh, p: Point2, tol: f64) -> Result<f64> {
        let vs = mesh.vertices();
        let mut best: Option<(f64, f64)> = None;
        for f in mesh.boundary() {
            let (a, b) = (vs[f.v[0]], vs[f.v[1]]);
            let d = point_segment_distance(p, a, b);
            if d <= tol && best.map_or(true, |(bd, _)| d < bd) {
                let (ba, bb) = self.on_facet(f.v, &f.tag)?;
                let len2 = b.sub(a).dot(b.sub(a));
                let s = if len2 > 0.0 { (p.sub(a).dot(b.sub(a)) / len2).clamp(0.0, 1.0) } else { 0.0 };
                best = Some((d, ba + s * (bb - ba)));
            }
        }
        best.map(|(_, v)| v)
            .ok_or_else(|| DrumError::InvalidArgument(format!("point {p:?} is not on the mesh boundary")))
    }

    /// β sampled at every boundary vertex (NaN elsewhere).
    pub fn boundary_samples(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        let mut out = vec![f64::NAN; mesh.n_vertices()];
        for f in mesh.boundary() {
            let (a, b) = self.on_facet(f.v, &f.tag)?;
            out[f.v[0]] = a;
            out[f.v[1]] = b;
        }
        Ok(out)
    }
}

/// Element-wise triplets in cell order, optionally computed in parallel;
/// concatenation preserves cell order so the merged matrix is reproducible.
fn collect_triplets<F>(n_items: usize, per_item: F) -> Vec<(usize, usize, f64)>
where
    F: Fn(usize) -> Vec<(usize, usize, f64)> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n_items > 4096 {
            return (0..n_items).into_par_iter().map(per_item).flatten().collect();
        }
    }
    (0..n_items).flat_map(per_item).collect()
}

/// P1 stiffness matrix over all vertices.
pub fn assemble_stiffness(m: &Mesh) -> SparseSymMatrix {
    let vs = m.vertices();
    let t = match m.cells() {
        Cells::Triangles(c) => collect_triplets(c.len(), |k| {
            let [i, j, l] = c[k];
            let (p, q, r) = (vs[i], vs[j], vs[l]);
            let b = [q.y - r.y, r.y - p.y, p.y - q.y];
            let cc = [r.x - q.x, p.x - r.x, q.x - p.x];
            let area = 0.5 * (cc[2] * b[1] - cc[1] * b[2]);
            let ids = [i, j, l];
            let mut out = Vec::with_capacity(6);
            for a in 0..3 {
                for bb in a..3 {
                    out.push((ids[a], ids[bb], (b[a] * b[bb] + cc[a] * cc[bb]) / (4.0 * area)));
                }
            }
            out
        }),
        Cells::Segments(c) => collect_triplets(c.len(), |k| {
            let [i, j] = c[k];
            let h = vs[j].x - vs[i].x;
            vec![(i, i, 1.0 / h), (i, j, -1.0 / h), (j, j, 1.0 / h)]
        }),
    };
    SparseSymMatrix::from_triplets(m.n_vertices(), t).expect("stiffness entries are finite")
}

/// Consistent P1 mass matrix over all vertices.
pub fn assemble_mass(m: &Mesh) -> SparseSymMatrix {
    let vs = m.vertices();
    let t = match m.cells() {
        Cells::Triangles(c) => collect_triplets(c.len(), |k| {
            let ids = c[k];
            let s = crate::geometry::orient2d(vs[ids[0]], vs[ids[1]], vs[ids[2]]) * 0.5;
            let mut out = Vec::with_capacity(6);
            for a in 0..3 {
                for b in a..3 {
                    out.push((ids[a], ids[b], if a == b { s / 6.0 } else { s / 12.0 }));
                }
            }
            out
        }),
        Cells::Segments(c) => collect_triplets(c.len(), |k| {
            let [i, j] = c[k];
            let h = vs[j].x - vs[i].x;
            vec![(i, i, h / 3.0), (i, j, h / 6.0), (j, j, h / 3.0)]
        }),
    };
    SparseSymMatrix::from_triplets(m.n_vertices(), t).expect("mass entries are finite")
}

/// β-weighted boundary mass ∫ β u v dσ with β linear along each edge. In 1D
/// the boundary is two points and the form reduces to β(a)u(a)v(a) + β(b)u(b)v(b).
pub fn assemble_boundary_mass(m: &Mesh, beta: &BoundaryFunction) -> Result<SparseSymMatrix> {
    let vs = m.vertices();
    let mut t = Vec::with_capacity(3 * m.boundary().len());
    for f in m.boundary() {
        let (ba, bb) = beta.on_facet(f.v, &f.tag)?;
        let [i, j] = f.v;
        if i == j {
            t.push((i, i, ba));
            continue;
        }
        let l = vs[i].dist(vs[j]);
        t.push((i, i, l / 12.0 * (3.0 * ba + bb)));
        t.push((i, j, l / 12.0 * (ba + bb)));
        t.push((j, j, l / 12.0 * (ba + 3.0 * bb)));
    }
    SparseSymMatrix::from_triplets(m.n_vertices(), t)
}

/// A discretized Laplacian: the generalized pencil (A, M) on a nodal space.
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    pub kind: BcKind,
    /// Stiffness, including the boundary term for Robin.
    pub stiffness: SparseSymMatrix,
    pub mass: SparseSymMatrix,
    pub space: NodalSpace,
    pub beta: Option<BoundaryFunction>,
    pub mesh: Arc<Mesh>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianMeta {
    pub kind: BcKind,
    pub n_dof: usize,
    pub mesh_hash: String,
}

impl DiscreteLaplacian {
    pub fn n_dof(&self) -> usize {
        self.space.dim()
    }

    pub fn metadata(&self) -> LaplacianMeta {
        LaplacianMeta {
            kind: self.kind,
            n_dof: self.n_dof(),
            mesh_hash: self.mesh.hash(),
        }
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metadata())?)
    }
}

/// Assembles the Laplacian of the given kind. Robin requires β; the boundary
/// condition applies to the whole boundary, tags only select β values.
pub fn build_laplacian(m: Arc<Mesh>, kind: BcKind, beta: Option<BoundaryFunction>) -> Result<DiscreteLaplacian> {
    let a = assemble_stiffness(&m);
    let mass = assemble_mass(&m);
    let space = NodalSpace::for_kind(&m, kind);
    let (stiffness, mass, beta) = match kind {
        BcKind::Dirichlet => (a.restrict(&space.nodes), mass.restrict(&space.nodes), None),
        BcKind::Neumann => (a, mass, None),
        BcKind::Robin => {
            let beta = beta.ok_or_else(|| DrumError::BoundaryDataMissing("Robin Laplacian needs β".into()))?;
            let b = assemble_boundary_mass(&m, &beta)?;
            (a.add_scaled(&b, 1.0)?, mass, Some(beta))
        }
    };
    Ok(DiscreteLaplacian {
        kind,
        stiffness,
        mass,
        space,
        beta,
        mesh: m,
    })
}
