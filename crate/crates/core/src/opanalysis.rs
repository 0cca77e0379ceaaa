//! Analysis of an operator between nodal spaces: disjointness testing, the
//! factorization `Uf(y) = h(y) f(τ(y))`, local-isometry checks, component
//! decomposition, the modulus operator and a range test.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DrumError, Result};
use crate::fem::SpaceKind;
use crate::geometry::{fit_isometry, fit_isometry_1d, orient2d, point_segment_distance, Isometry, Point2};
use crate::mesh::{Cells, Mesh};
use crate::transplant::OperatorMatrix;

/// Overlap at or below this is read as exact disjointness.
pub const PRESERVING_MAX: f64 = 1e-8;
/// Overlap above this is a violation.
pub const VIOLATING_MIN: f64 = 1e-3;
pub const DEFAULT_TRIALS: usize = 64;
pub const DEFAULT_SEED: u64 = 0x0d15_7017;
/// Relative threshold separating structural zeros of `U` from data.
const EPS_REL: f64 = 1e-10;
/// Adjacent cells whose τ-Jacobians differ by more than this belong to
/// different components.
const JACOBIAN_JUMP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Preserving,
    Violating,
    Inconclusive,
}

/// Two source functions with disjoint supports whose images overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Source-mesh vertices where f is nonzero.
    pub f_support: Vec<usize>,
    pub g_support: Vec<usize>,
    /// Target-mesh vertex where `|Uf · Ug|` peaks.
    pub at_vertex: usize,
    pub overlap: f64,
    /// "random" for a sampled bump pair, "structural" for a row check.
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointnessReport {
    pub trials: usize,
    /// Trials skipped because no disjoint pair fitted in the mesh.
    pub skipped: usize,
    pub max_overlap: f64,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub zero_operator: bool,
    /// Rows of U whose nonzero columns do not share a cell of the source mesh.
    pub structural_violations: usize,
}

fn check_meshes(u: &OperatorMatrix, m1: &Mesh, m2: &Mesh) -> Result<()> {
    if u.src.n_vertices != m1.n_vertices() || u.dst.n_vertices != m2.n_vertices() {
        return Err(DrumError::InvalidArgument(format!(
            "operator spaces have {} and {} vertices, meshes {} and {}",
            u.src.n_vertices,
            u.dst.n_vertices,
            m1.n_vertices(),
            m2.n_vertices()
        )));
    }
    Ok(())
}

/// Nodal overlap `max|Uf·Ug| / (max|Uf| max|Ug|)` and where it peaks.
fn overlap(uf: &[f64], ug: &[f64]) -> (f64, usize) {
    let nf = uf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ng = ug.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if nf == 0.0 || ng == 0.0 {
        return (0.0, 0);
    }
    let (mut best, mut at) = (0.0, 0);
    for (i, (a, b)) in uf.iter().zip(ug).enumerate() {
        let p = (a * b).abs();
        if p > best {
            best = p;
            at = i;
        }
    }
    (best / (nf * ng + f64::MIN_POSITIVE), at)
}

/// Hat bump of hop radius `r` around `center`, on source dofs.
fn bump(dist: &[usize], r: usize, dof_of: &[Option<usize>], n_dof: usize) -> (Vec<f64>, Vec<usize>) {
    let mut v = vec![0.0; n_dof];
    let mut support = Vec::new();
    for (x, &d) in dist.iter().enumerate() {
        if d <= r {
            if let Some(k) = dof_of[x] {
                v[k] = 1.0 - d as f64 / (r + 1) as f64;
                support.push(x);
            }
        }
    }
    (v, support)
}

fn run_trial(
    u: &OperatorMatrix,
    nb: &[Vec<usize>],
    dof_of: &[Option<usize>],
    seed: u64,
    trial: usize,
) -> Option<(f64, Witness)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let nodes = &u.src.nodes;
    if nodes.is_empty() {
        return None;
    }
    let cf = nodes[rng.gen_range(0..nodes.len())];
    let mut rf = rng.gen_range(0..=3usize);
    let mut rg = rng.gen_range(0..=3usize);
    let df = crate::mesh::hop_distance(nb, &[cf]);
    // supports at hop distance ≥ 2 share no cell, so the P1 functions are disjoint
    let far: Vec<usize> = loop {
        let far: Vec<usize> = nodes.iter().copied().filter(|&x| df[x] != usize::MAX && df[x] >= rf + rg + 2).collect();
        if !far.is_empty() || (rf == 0 && rg == 0) {
            break far;
        }
        rf = rf.saturating_sub(1);
        rg = rg.saturating_sub(1);
    };
    if far.is_empty() {
        return None;
    }
    let cg = far[rng.gen_range(0..far.len())];
    let dg = crate::mesh::hop_distance(nb, &[cg]);
    let (f, fs) = bump(&df, rf, dof_of, nodes.len());
    let (g, gs) = bump(&dg, rg, dof_of, nodes.len());
    let (ov, at) = overlap(&u.apply(&f), &u.apply(&g));
    Some((
        ov,
        Witness {
            f_support: fs,
            g_support: gs,
            at_vertex: u.dst.nodes.get(at).copied().unwrap_or(0),
            overlap: ov,
            origin: "random".into(),
        },
    ))
}

/// Randomized test of `f·g = 0 ⟹ Uf·Ug = 0` on hat bumps with disjoint
/// supports, plus a deterministic row check: a row with two nonzero columns
/// that share no source cell yields a witness pair of hat functions.
pub fn test_disjointness(u: &OperatorMatrix, m1: &Mesh, m2: &Mesh, trials: usize, seed: u64) -> Result<DisjointnessReport> {
    check_meshes(u, m1, m2)?;
    if trials == 0 {
        return Err(DrumError::InvalidArgument("at least one trial is needed".into()));
    }
    let umax = u.max_abs();
    if umax == 0.0 {
        return Ok(DisjointnessReport {
            trials,
            skipped: trials,
            max_overlap: 0.0,
            verdict: Verdict::Preserving,
            witness: None,
            zero_operator: true,
            structural_violations: 0,
        });
    }
    let nb = m1.vertex_neighbors();
    let dof_of = u.src.dof_of();
    let results: Vec<Option<(f64, Witness)>> = par_map(trials, |t| run_trial(u, &nb, &dof_of, seed, t));
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let mut best: Option<(f64, Witness)> = None;
    for (ov, w) in results.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| ov > b.0) {
            best = Some((ov, w));
        }
    }

    let (violations, structural) = structural_check(u, &nb, umax);
    if let Some((ov, w)) = structural {
        if best.as_ref().map_or(true, |b| ov > b.0) {
            best = Some((ov, w));
        }
    }
    let max_overlap = best.as_ref().map_or(0.0, |b| b.0);
    let verdict = if max_overlap <= PRESERVING_MAX {
        Verdict::Preserving
    } else if max_overlap > VIOLATING_MIN {
        Verdict::Violating
    } else {
        Verdict::Inconclusive
    };
    Ok(DisjointnessReport {
        trials,
        skipped,
        max_overlap,
        verdict,
        witness: best.filter(|b| b.0 > PRESERVING_MAX).map(|b| b.1),
        zero_operator: false,
        structural_violations: violations,
    })
}

fn structural_check(u: &OperatorMatrix, nb: &[Vec<usize>], umax: f64) -> (usize, Option<(f64, Witness)>) {
    let eps = EPS_REL * umax;
    let csr = u.to_csr();
    let src_nodes = &u.src.nodes;
    let mut colmax = vec![0.0f64; csr.ncols()];
    for (_, j, v) in csr.triplets() {
        colmax[j] = colmax[j].max(v.abs());
    }
    let mut violations = 0;
    let mut best: Option<(f64, usize, usize)> = None;
    for r in 0..csr.nrows() {
        let (cols, vals) = csr.row(r);
        let Some((k, _)) = vals
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > eps)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        else {
            continue;
        };
        let (cstar, astar) = (cols[k], vals[k]);
        let vstar = src_nodes[cstar];
        let mut bad = false;
        for (&c, &a) in cols.iter().zip(vals) {
            if c == cstar || a.abs() <= eps {
                continue;
            }
            let v = src_nodes[c];
            if nb[vstar].binary_search(&v).is_ok() {
                continue;
            }
            bad = true;
            let score = (astar * a).abs() / (colmax[cstar] * colmax[c]);
            if best.map_or(true, |b| score > b.0) {
                best = Some((score, cstar, c));
            }
        }
        violations += bad as usize;
    }
    let witness = best.map(|(_, c1, c2)| {
        let n = csr.ncols();
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; n];
        f[c1] = 1.0;
        g[c2] = 1.0;
        let (ov, at) = overlap(&u.apply(&f), &u.apply(&g));
        (
            ov,
            Witness {
                f_support: vec![src_nodes[c1]],
                g_support: vec![src_nodes[c2]],
                at_vertex: u.dst.nodes[at],
                overlap: ov,
                origin: "structural".into(),
            },
        )
    });
    (violations, witness)
}

/// Maps `f` over `0..n`, in parallel when the feature is on; output order is
/// the index order either way.
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// The data `(h, τ)` of `Uf(y) = h(y) f(τ(y))`, per target-mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredOperator {
    pub support_mask: Vec<bool>,
    pub h: Vec<f64>,
    pub tau: Vec<Option<Point2>>,
    /// Support vertices whose τ lands within one source mesh size of ∂Ω₁.
    pub boundary_hits: Vec<usize>,
    /// Target dofs with a nonzero row that the plateau function cannot see
    /// (images of the near-boundary ring of Ω₁).
    pub unanalyzed: Vec<usize>,
    /// Nonzero rows outside the support that the ring does not explain.
    pub stray_rows: Vec<usize>,
    pub eps_h: f64,
    pub dim: usize,
    pub src_kind: SpaceKind,
    pub disjointness: DisjointnessReport,
}

impl FactoredOperator {
    pub fn support_size(&self) -> usize {
        self.support_mask.iter().filter(|&&b| b).count()
    }

    /// Per-vertex table `vertex,x,y,h,tau_x,tau_y` of the support.
    pub fn to_csv(&self, m2: &Mesh) -> String {
        let mut s = String::from("vertex,x,y,h,tau_x,tau_y\n");
        for (v, t) in self.tau.iter().enumerate() {
            if let (true, Some(t)) = (self.support_mask[v], t) {
                let p = m2.vertices()[v];
                s.push_str(&format!("{v},{:e},{:e},{:e},{:e},{:e}\n", p.x, p.y, self.h[v], t.x, t.y));
            }
        }
        s
    }
}

/// Factors a disjointness-preserving operator: `h = U p` with `p` the ones
/// function (the plateau that vanishes within two hops of ∂Ω₁ for Dirichlet
/// sources) and `τⱼ = U(xⱼ p) / h` on the support `{|h| > ε_h}`.
pub fn factor_operator(u: &OperatorMatrix, m1: &Mesh, m2: &Mesh) -> Result<FactoredOperator> {
    let report = test_disjointness(u, m1, m2, DEFAULT_TRIALS, DEFAULT_SEED)?;
    factor_with_report(u, m1, m2, report)
}

/// As `factor_operator`, reusing an existing disjointness report.
pub fn factor_with_report(u: &OperatorMatrix, m1: &Mesh, m2: &Mesh, report: DisjointnessReport) -> Result<FactoredOperator> {
    check_meshes(u, m1, m2)?;
    if report.verdict != Verdict::Preserving {
        return Err(DrumError::NotDisjointnessPreserving {
            max_overlap: report.max_overlap,
        });
    }
    let eps_h = EPS_REL * u.max_abs();
    let src = &u.src;
    let plateau: Vec<f64> = match src.kind {
        SpaceKind::Full => vec![1.0; src.dim()],
        SpaceKind::Dirichlet => {
            let d = m1.hop_distance(&m1.boundary_vertex_ids());
            src.nodes.iter().map(|&v| if d[v] >= 3 { 1.0 } else { 0.0 }).collect()
        }
    };
    let h_dof = u.apply(&plateau);
    let coord = |j: usize| -> Vec<f64> {
        src.nodes
            .iter()
            .zip(&plateau)
            .map(|(&v, &p)| p * if j == 0 { m1.vertices()[v].x } else { m1.vertices()[v].y })
            .collect()
    };
    let tx = u.apply(&coord(0));
    let ty = u.apply(&coord(1));

    let n2 = m2.n_vertices();
    let mut support_mask = vec![false; n2];
    let mut h = vec![0.0; n2];
    let mut tau = vec![None; n2];
    for (k, &y) in u.dst.nodes.iter().enumerate() {
        if h_dof[k].abs() > eps_h {
            support_mask[y] = true;
            h[y] = h_dof[k];
            tau[y] = Some(Point2::new(tx[k] / h_dof[k], ty[k] / h_dof[k]));
        }
    }

    // rows that are nonzero but invisible to the plateau
    let csr = u.to_csr();
    let mut unanalyzed = Vec::new();
    let mut stray_rows = Vec::new();
    for (k, &y) in u.dst.nodes.iter().enumerate() {
        if support_mask[y] {
            continue;
        }
        let (cols, vals) = csr.row(k);
        let live: Vec<usize> = cols.iter().zip(vals).filter(|(_, v)| v.abs() > eps_h).map(|(&c, _)| c).collect();
        if live.is_empty() {
            continue;
        }
        if live.iter().all(|&c| plateau[c] == 0.0) {
            unanalyzed.push(y);
        } else {
            stray_rows.push(y);
        }
    }

    let h1 = m1.mesh_size();
    let bdist = BoundaryDistance::new(m1);
    let boundary_hits = (0..n2)
        .filter(|&y| tau[y].is_some_and(|t| bdist.distance(t) <= h1))
        .collect();
    Ok(FactoredOperator {
        support_mask,
        h,
        tau,
        boundary_hits,
        unanalyzed,
        stray_rows,
        eps_h,
        dim: m1.dim(),
        src_kind: src.kind,
        disjointness: report,
    })
}

/// Distance to the boundary of a mesh.
pub(crate) struct BoundaryDistance {
    segments: Vec<(Point2, Point2)>,
}

impl BoundaryDistance {
    pub(crate) fn new(m: &Mesh) -> Self {
        let vs = m.vertices();
        BoundaryDistance {
            segments: m.boundary().iter().map(|f| (vs[f.v[0]], vs[f.v[1]])).collect(),
        }
    }

    pub(crate) fn distance(&self, p: Point2) -> f64 {
        self.segments
            .iter()
            .map(|&(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub cell: usize,
    pub gram_deviation: f64,
    pub grad_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalIsometryReport {
    /// `max |∇τⱼ·∇τₖ − δⱼₖ|` over checked cells.
    pub gram_deviation: f64,
    pub grad_h: f64,
    pub cells_checked: usize,
    /// Support cells skipped because h or τ jumps across them.
    pub cells_excluded: usize,
    pub per_cell: Vec<CellCheck>,
}

/// Cell-wise P1 data of a factored operator.
struct CellField {
    /// Rows of the Jacobian of τ (one row in 1D).
    jac: [[f64; 2]; 2],
    grad_h: [f64; 2],
}

fn cell_field(f: &FactoredOperator, m2: &Mesh, k: usize) -> Option<CellField> {
    let c = m2.cell(k);
    if !c.iter().all(|&v| f.support_mask[v]) {
        return None;
    }
    let vs = m2.vertices();
    let hmax = c.iter().map(|&v| f.h[v]).fold(f64::NEG_INFINITY, f64::max);
    let hmin = c.iter().map(|&v| f.h[v]).fold(f64::INFINITY, f64::min);
    if hmax - hmin > 10.0 * f.eps_h.max(1e-14 * hmax.abs()) {
        return None;
    }
    let t: Vec<Point2> = c.iter().map(|&v| f.tau[v].unwrap()).collect();
    // an edge stretched far beyond its length straddles two components
    for a in 0..c.len() {
        for b in a + 1..c.len() {
            if t[a].dist(t[b]) > 2.0 * vs[c[a]].dist(vs[c[b]]) + 1e-12 {
                return None;
            }
        }
    }
    match m2.cells() {
        Cells::Segments(_) => {
            let dx = vs[c[1]].x - vs[c[0]].x;
            Some(CellField {
                jac: [[(t[1].x - t[0].x) / dx, 0.0], [0.0, 0.0]],
                grad_h: [(f.h[c[1]] - f.h[c[0]]) / dx, 0.0],
            })
        }
        Cells::Triangles(_) => {
            let (pa, pb, pc) = (vs[c[0]], vs[c[1]], vs[c[2]]);
            let d = orient2d(pa, pb, pc);
            let grad = |fa: f64, fb: f64, fc: f64| -> [f64; 2] {
                [
                    (fa * (pb.y - pc.y) + fb * (pc.y - pa.y) + fc * (pa.y - pb.y)) / d,
                    (fa * (pc.x - pb.x) + fb * (pa.x - pc.x) + fc * (pb.x - pa.x)) / d,
                ]
            };
            Some(CellField {
                jac: [grad(t[0].x, t[1].x, t[2].x), grad(t[0].y, t[1].y, t[2].y)],
                grad_h: grad(f.h[c[0]], f.h[c[1]], f.h[c[2]]),
            })
        }
    }
}

fn gram_deviation(j: &[[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return (j[0][0] * j[0][0] - 1.0).abs();
    }
    let mut e: f64 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let g = j[a][0] * j[b][0] + j[a][1] * j[b][1];
            e = e.max((g - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    e
}

/// Gram identities of the P1 gradients of τ and the size of ∇h, over cells
/// inside the support that no component interface crosses.
pub fn verify_local_isometry(f: &FactoredOperator, m2: &Mesh) -> Result<LocalIsometryReport> {
    if f.support_size() == 0 {
        return Err(DrumError::EmptySupport);
    }
    let mut per_cell = Vec::new();
    let mut excluded = 0;
    for k in 0..m2.n_cells() {
        let in_support = m2.cell(k).iter().all(|&v| f.support_mask[v]);
        match cell_field(f, m2, k) {
            Some(cf) => per_cell.push(CellCheck {
                cell: k,
                gram_deviation: gram_deviation(&cf.jac, m2.dim()),
                grad_h: cf.grad_h[0].hypot(cf.grad_h[1]),
            }),
            None => excluded += in_support as usize,
        }
    }
    Ok(LocalIsometryReport {
        gram_deviation: per_cell.iter().map(|c| c.gram_deviation).fold(0.0, f64::max),
        grad_h: per_cell.iter().map(|c| c.grad_h).fold(0.0, f64::max),
        cells_checked: per_cell.len(),
        cells_excluded: excluded,
        per_cell,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub vertices: Vec<usize>,
    pub cells: Vec<usize>,
    /// Fitted rigid motion Ω₂ → Ω₁ on the component.
    pub isometry: Isometry,
    pub constant: f64,
    pub fit_rms: f64,
    pub area: f64,
    /// The component grown over cells where U still acts as `c f∘τ̄`,
    /// including the near-boundary ring the plateau cannot see.
    pub extended_cells: Vec<usize>,
    pub extended_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDecomposition {
    pub components: Vec<Component>,
    /// Support vertices outside every component (interfaces and isolated points).
    pub residual_vertices: Vec<usize>,
    pub mesh_size: f64,
    pub dim: usize,
    pub local_isometry: LocalIsometryReport,
}

impl ComponentDecomposition {
    pub fn constants(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.constant).collect()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Splits the support into maximal cell-connected regions on which h is
/// constant and τ has one Jacobian, then fits a rigid motion per region.
pub fn decompose_components(f: &FactoredOperator, m2: &Mesh) -> Result<ComponentDecomposition> {
    let li = verify_local_isometry(f, m2)?;
    let hsize = m2.mesh_size();
    if li.gram_deviation > 100.0 * hsize {
        return Err(DrumError::NotLocallyIsometric(format!(
            "Gram deviation {:.3e} exceeds 100 × mesh size {hsize:.3e}",
            li.gram_deviation
        )));
    }
    let fields: HashMap<usize, CellField> = li
        .per_cell
        .iter()
        .map(|c| (c.cell, cell_field(f, m2, c.cell).unwrap()))
        .collect();
    let adj = m2.cell_adjacency();
    let mut label: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut order: Vec<usize> = fields.keys().copied().collect();
    order.sort_unstable();
    for &seed in &order {
        if label.contains_key(&seed) {
            continue;
        }
        let g = groups.len();
        let mut stack = vec![seed];
        label.insert(seed, g);
        let mut cells = Vec::new();
        while let Some(k) = stack.pop() {
            cells.push(k);
            for &n in &adj[k] {
                if label.contains_key(&n) {
                    continue;
                }
                let Some(fnb) = fields.get(&n) else { continue };
                let fk = &fields[&k];
                let same_h = (f.h[m2.cell(k)[0]] - f.h[m2.cell(n)[0]]).abs() <= 10.0 * f.eps_h.max(1e-14);
                let same_j = (0..2).all(|a| (0..2).all(|b| (fk.jac[a][b] - fnb.jac[a][b]).abs() <= JACOBIAN_JUMP));
                if same_h && same_j {
                    label.insert(n, g);
                    stack.push(n);
                }
            }
        }
        cells.sort_unstable();
        groups.push(cells);
    }

    // vertices claimed by exactly one group
    let mut owners: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (g, cells) in groups.iter().enumerate() {
        for &k in cells {
            for &v in m2.cell(k) {
                owners.entry(v).or_default().insert(g);
            }
        }
    }
    let mut comps = Vec::new();
    for (g, cells) in groups.iter().enumerate() {
        let mut vertices: Vec<usize> = owners
            .iter()
            .filter(|(_, o)| o.len() == 1 && o.contains(&g))
            .map(|(&v, _)| v)
            .collect();
        vertices.sort_unstable();
        let src: Vec<Point2> = vertices.iter().map(|&v| m2.vertices()[v]).collect();
        let dst: Vec<Point2> = vertices.iter().map(|&v| f.tau[v].unwrap()).collect();
        let fit = if m2.dim() == 1 {
            fit_isometry_1d(&src.iter().map(|p| p.x).collect::<Vec<_>>(), &dst.iter().map(|p| p.x).collect::<Vec<_>>())
        } else {
            fit_isometry(&src, &dst)
        };
        let (isometry, fit_rms) = match fit {
            Ok(r) => r,
            // too few private vertices to pin a motion down: leave as residual
            Err(DrumError::InsufficientPoints(_)) => continue,
            Err(e) => return Err(e),
        };
        let constant = median(vertices.iter().map(|&v| f.h[v]).collect());
        let area = cells.iter().map(|&k| m2.cell_measure(k)).sum();
        comps.push(Component {
            vertices,
            cells: cells.clone(),
            isometry,
            constant,
            fit_rms,
            area,
            extended_cells: Vec::new(),
            extended_area: 0.0,
        });
    }
    comps.sort_by(|a, b| b.vertices.len().cmp(&a.vertices.len()).then(a.vertices[0].cmp(&b.vertices[0])));
    for (i, c) in comps.iter().enumerate() {
        if c.fit_rms > 10.0 * hsize {
            return Err(DrumError::ComponentNotRigid { index: i, rms: c.fit_rms });
        }
    }
    let in_comp: BTreeSet<usize> = comps.iter().flat_map(|c| c.vertices.iter().copied()).collect();
    let residual_vertices = (0..m2.n_vertices())
        .filter(|&v| f.support_mask[v] && !in_comp.contains(&v))
        .collect();
    Ok(ComponentDecomposition {
        components: comps,
        residual_vertices,
        mesh_size: hsize,
        dim: m2.dim(),
        local_isometry: li,
    })
}

/// Grows every component over the cells of Ω₂ on which U acts as
/// `c f∘τ̄` (rows equal to `c e_{τ̄(y)}`, or zero where τ̄(y) is on ∂Ω₁) and
/// whose image lies in Ω₁, and records the grown area.
pub fn extend_components(dec: &mut ComponentDecomposition, u: &OperatorMatrix, m1: &Mesh, m2: &Mesh) -> Result<()> {
    check_meshes(u, m1, m2)?;
    let csr = u.to_csr();
    let src_dof = u.src.dof_of();
    let dst_dof = u.dst.dof_of();
    let loc = m1.locator();
    let adj = m2.cell_adjacency();
    let tol = 1e-7 * m1.mesh_size().max(1.0);
    let eps = EPS_REL * u.max_abs();
    for comp in dec.components.iter_mut() {
        let tol = tol + 10.0 * comp.fit_rms;
        let consistent: Vec<bool> = (0..m2.n_vertices())
            .map(|y| {
                let Some(x) = loc.find(comp.isometry.apply(m2.vertices()[y]), tol) else {
                    return false;
                };
                match (dst_dof[y], src_dof[x]) {
                    (None, None) => true,
                    (None, Some(_)) => false,
                    (Some(r), sx) => {
                        let (cols, vals) = csr.row(r);
                        let mut ok = true;
                        for (&c, &v) in cols.iter().zip(vals) {
                            let want = if Some(c) == sx { comp.constant } else { 0.0 };
                            ok &= (v - want).abs() <= eps.max(1e-12 * comp.constant.abs());
                        }
                        // the expected entry may be missing from the sparsity pattern
                        if let Some(cx) = sx {
                            ok &= cols.contains(&cx);
                        }
                        ok
                    }
                }
            })
            .collect();
        let good = |k: usize| m2.cell(k).iter().all(|&v| consistent[v]);
        let mut seen: BTreeSet<usize> = comp.cells.iter().copied().collect();
        let mut stack: Vec<usize> = comp.cells.clone();
        while let Some(k) = stack.pop() {
            for &n in &adj[k] {
                if !seen.contains(&n) && good(n) {
                    seen.insert(n);
                    stack.push(n);
                }
            }
        }
        comp.extended_cells = seen.into_iter().collect();
        comp.extended_area = comp.extended_cells.iter().map(|&k| m2.cell_measure(k)).sum();
    }
    Ok(())
}

/// Entrywise `|U|`; for a disjointness-preserving U each row has one source
/// point, so `|U| f = |U f|` for `f ≥ 0`.
pub fn modulus_operator(u: &OperatorMatrix) -> OperatorMatrix {
    let mut m = u.map_entries(f64::abs);
    m.tag = format!("|{}|", u.tag);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeCheck {
    pub dense: bool,
    pub rank: usize,
    pub rank_deficiency: usize,
    pub sigma_max: f64,
}

/// Numerical row rank from singular values above `tol · σ_max`; the range is
/// dense iff the rank equals the number of target dofs.
pub fn dense_range_check(u: &OperatorMatrix, tol: f64) -> RangeCheck {
    let n2 = u.nrows();
    let csr = u.to_csr();
    // zero rows can never be reached
    let live: Vec<usize> = (0..n2).filter(|&r| csr.row(r).1.iter().any(|&v| v != 0.0)).collect();
    if live.is_empty() {
        return RangeCheck {
            dense: n2 == 0,
            rank: 0,
            rank_deficiency: n2,
            sigma_max: 0.0,
        };
    }
    let dense = u.to_dense();
    let sub = DMatrix::from_fn(live.len(), u.ncols(), |i, j| dense[(live[i], j)]);
    let sv = if sub.nrows() <= sub.ncols() {
        sub.transpose().singular_values()
    } else {
        sub.singular_values()
    };
    let smax = sv.iter().fold(0.0f64, |m, &s| m.max(s));
    let rank = sv.iter().filter(|&&s| s > tol * smax).count();
    RangeCheck {
        dense: rank == n2,
        rank,
        rank_deficiency: n2 - rank,
        sigma_max: smax,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::BcKind;
    use crate::mesh::{mesh_interval, mesh_rectangle};
    use crate::transplant::{multi_copy_operator, reflection_operator_1d, Parity, Storage};
    use std::f64::consts::PI;

    fn rotated_square_pair(level: usize) -> (Mesh, Mesh, Isometry) {
        let m1 = mesh_rectangle(0.0, 0.0, 1.0, 1.0, level).unwrap();
        // Ω₂ = g(Ω₁) with g a rotation by 90° plus a shift; τ = g⁻¹
        let g = Isometry::rotation(PI / 2.0, Point2::new(3.0, 1.0));
        let m2 = m1.transformed(&g).unwrap();
        (m1, m2, g.inverse())
    }

    #[test]
    fn single_isometry_factors_exactly() {
        let (m1, m2, tau) = rotated_square_pair(4);
        let u = multi_copy_operator(&[tau], &[-2.5], &m1, &m2, BcKind::Dirichlet).unwrap();
        let f = factor_operator(&u, &m1, &m2).unwrap();
        assert_eq!(f.disjointness.verdict, Verdict::Preserving);
        for y in 0..m2.n_vertices() {
            if f.support_mask[y] {
                assert!((f.h[y] + 2.5).abs() < 1e-10);
                assert!(f.tau[y].unwrap().dist(tau.apply(m2.vertices()[y])) < 1e-10);
            }
        }
        assert!(!f.unanalyzed.is_empty());
        assert!(f.stray_rows.is_empty());
        let li = verify_local_isometry(&f, &m2).unwrap();
        assert!(li.gram_deviation < 1e-9 && li.grad_h < 1e-9);
        let mut dec = decompose_components(&f, &m2).unwrap();
        assert_eq!(dec.components.len(), 1);
        assert!(dec.components[0].isometry.distance(&tau) < 1e-9);
        extend_components(&mut dec, &u, &m1, &m2).unwrap();
        assert!((dec.components[0].extended_area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_tau_is_detected() {
        let (m1, m2, tau) = rotated_square_pair(4);
        let u = multi_copy_operator(&[tau], &[1.0], &m1, &m2, BcKind::Neumann).unwrap();
        let mut f = factor_operator(&u, &m1, &m2).unwrap();
        for t in f.tau.iter_mut().flatten() {
            *t = t.scale(1.1);
        }
        let li = verify_local_isometry(&f, &m2).unwrap();
        assert!((li.gram_deviation - 0.21).abs() < 1e-6, "{}", li.gram_deviation);
    }

    #[test]
    fn even_reflection_factors_as_fold() {
        let m1 = mesh_interval(0.0, PI, 64).unwrap();
        let m2 = mesh_interval(0.0, 2.0 * PI, 128).unwrap();
        let u = reflection_operator_1d(Parity::Even, &m1, &m2).unwrap();
        let f = factor_operator(&u, &m1, &m2).unwrap();
        for (y, p) in m2.vertices().iter().enumerate() {
            assert!(f.support_mask[y]);
            assert!((f.h[y] - 1.0).abs() < 1e-12);
            let want = if p.x <= PI { p.x } else { 2.0 * PI - p.x };
            assert!((f.tau[y].unwrap().x - want).abs() < 1e-12);
        }
        let dec = decompose_components(&f, &m2).unwrap();
        assert_eq!(dec.components.len(), 2);
        assert_eq!(dec.residual_vertices, vec![64]);
    }

    #[test]
    fn odd_reflection_modulus_is_even_reflection() {
        let m1 = mesh_interval(0.0, PI, 32).unwrap();
        let m2 = mesh_interval(0.0, 2.0 * PI, 64).unwrap();
        let odd = reflection_operator_1d(Parity::Odd, &m1, &m2).unwrap();
        let even = reflection_operator_1d(Parity::Even, &m1, &m2).unwrap();
        let m = modulus_operator(&odd);
        // restrict the even operator to the Dirichlet dofs
        let e = even.to_dense();
        let r = DMatrix::from_fn(odd.nrows(), odd.ncols(), |i, j| e[(odd.dst.nodes[i], odd.src.nodes[j])]);
        assert_eq!(m.to_dense().into_owned(), r);
    }

    #[test]
    fn range_check_cases() {
        let m1 = mesh_interval(0.0, PI, 16).unwrap();
        let m2 = mesh_interval(0.0, 2.0 * PI, 32).unwrap();
        let odd = reflection_operator_1d(Parity::Odd, &m1, &m2).unwrap();
        let rc = dense_range_check(&odd, 1e-10);
        assert!(!rc.dense);
        assert_eq!(rc.rank, 15);
        let sq = crate::fem::NodalSpace::new(&m1, SpaceKind::Full);
        let inv = OperatorMatrix::new(
            Storage::Dense(DMatrix::from_fn(17, 17, |i, j| if i == j { 2.0 } else if j == i + 1 { 1.0 } else { 0.0 })),
            sq.clone(),
            sq,
            "bidiagonal",
        )
        .unwrap();
        assert!(dense_range_check(&inv, 1e-10).dense);
    }

    #[test]
    fn zero_operator_is_flagged() {
        let m1 = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 2).unwrap();
        let s = crate::fem::NodalSpace::new(&m1, SpaceKind::Dirichlet);
        let z = OperatorMatrix::new(Storage::Dense(DMatrix::zeros(s.dim(), s.dim())), s.clone(), s, "zero").unwrap();
        let r = test_disjointness(&z, &m1, &m1, 4, 1).unwrap();
        assert!(r.zero_operator);
        assert_eq!(r.verdict, Verdict::Preserving);
    }
}
