//! Intertwining operators between two nodal spaces: transplantation between
//! copy layouts, the spectral intertwiner, and piecewise-isometric fixtures.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::eigen::Spectrum;
use crate::error::{DrumError, Result};
use crate::fem::{BcKind, DiscreteLaplacian, NodalSpace};
use crate::geometry::{CopyLayout, Isometry, Point2};
use crate::mesh::{Cells, Mesh, NodeCorrespondence};
use crate::sparse::{read_matrix_market, write_dense_matrix_market, CsrMatrix, MarketMatrix, SparseSymMatrix};

/// Nodal values below this are treated as structural zeros when lifting.
const LIFT_DROP: f64 = 1e-14;
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

/// A linear map from the dofs of `src` (on Ω₁) to the dofs of `dst` (on Ω₂).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub storage: Storage,
    pub src: NodalSpace,
    pub dst: NodalSpace,
    pub tag: String,
    /// Rank of the subspace the operator is defined on, when it is not the
    /// whole source space.
    pub rank: Option<usize>,
    pub src_mesh: Option<String>,
    pub dst_mesh: Option<String>,
    pub notes: Vec<String>,
}

impl OperatorMatrix {
    pub fn new(storage: Storage, src: NodalSpace, dst: NodalSpace, tag: &str) -> Result<Self> {
        let (r, c) = match &storage {
            Storage::Dense(m) => (m.nrows(), m.ncols()),
            Storage::Sparse(m) => (m.nrows(), m.ncols()),
        };
        if r != dst.dim() || c != src.dim() {
            return Err(DrumError::InvalidArgument(format!(
                "operator is {r}×{c} but the spaces have {} and {} dofs",
                dst.dim(),
                src.dim()
            )));
        }
        let finite = match &storage {
            Storage::Dense(m) => m.iter().all(|v| v.is_finite()),
            Storage::Sparse(m) => m.triplets().all(|t| t.2.is_finite()),
        };
        if !finite {
            return Err(DrumError::InvalidArgument("operator has non-finite entries".into()));
        }
        Ok(OperatorMatrix {
            storage,
            src,
            dst,
            tag: tag.to_string(),
            rank: None,
            src_mesh: None,
            dst_mesh: None,
            notes: Vec::new(),
        })
    }

    pub fn with_meshes(mut self, m1: &Mesh, m2: &Mesh) -> Self {
        self.src_mesh = Some(m1.hash());
        self.dst_mesh = Some(m2.hash());
        self
    }

    pub fn nrows(&self) -> usize {
        self.dst.dim()
    }

    pub fn ncols(&self) -> usize {
        self.src.dim()
    }

    pub fn to_csr(&self) -> Cow<'_, CsrMatrix> {
        match &self.storage {
            Storage::Sparse(m) => Cow::Borrowed(m),
            Storage::Dense(m) => Cow::Owned(CsrMatrix::from_dense(m)),
        }
    }

    pub fn to_dense(&self) -> Cow<'_, DMatrix<f64>> {
        match &self.storage {
            Storage::Dense(m) => Cow::Borrowed(m),
            Storage::Sparse(m) => Cow::Owned(m.to_dense()),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.storage {
            Storage::Sparse(m) => m.mul_vec(x),
            Storage::Dense(m) => (m * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(m) => m.max_abs(),
            Storage::Dense(m) => m.amax(),
        }
    }

    /// Applies `f` to every stored entry.
    pub fn map_entries(&self, f: impl Fn(f64) -> f64) -> OperatorMatrix {
        let storage = match &self.storage {
            Storage::Sparse(m) => Storage::Sparse(m.map_values(f)),
            Storage::Dense(m) => Storage::Dense(m.map(f)),
        };
        OperatorMatrix {
            storage,
            ..self.clone()
        }
    }

    pub fn write_matrix_market<W: Write>(&self, w: W) -> Result<()> {
        match &self.storage {
            Storage::Sparse(m) => m.write_matrix_market(w),
            Storage::Dense(m) => write_dense_matrix_market(m, w),
        }
    }

    /// Reads an operator written by `write_matrix_market`; the spaces fix its shape.
    pub fn read_matrix_market<R: BufRead>(r: R, src: NodalSpace, dst: NodalSpace, tag: &str) -> Result<Self> {
        let storage = match read_matrix_market(r)? {
            MarketMatrix::Array(m) => Storage::Dense(m),
            m @ MarketMatrix::Coordinate { .. } => Storage::Sparse(CsrMatrix::from_dense(&m.into_dense())),
        };
        OperatorMatrix::new(storage, src, dst, tag)
    }
}

/// `‖A₂U − UA₁‖_F / ‖A₁‖_F`.
pub fn intertwining_residual(u: &OperatorMatrix, l1: &DiscreteLaplacian, l2: &DiscreteLaplacian) -> Result<f64> {
    check_dims(u, l1, l2)?;
    Ok(ratio(commutator(u, &l1.stiffness, &l2.stiffness), l1.stiffness.frobenius_norm()))
}

/// `‖M₂U − UM₁‖_F / ‖M₁‖_F`.
pub fn mass_residual(u: &OperatorMatrix, l1: &DiscreteLaplacian, l2: &DiscreteLaplacian) -> Result<f64> {
    check_dims(u, l1, l2)?;
    Ok(ratio(commutator(u, &l1.mass, &l2.mass), l1.mass.frobenius_norm()))
}

fn commutator(u: &OperatorMatrix, a1: &SparseSymMatrix, a2: &SparseSymMatrix) -> f64 {
    let u = u.to_csr();
    a2.to_csr().mul_csr(&u).sub(&u.mul_csr(&a1.to_csr())).frobenius_norm()
}

/// `max |UᵀU − I|`.
pub fn orthogonality_error(u: &OperatorMatrix) -> f64 {
    let u = u.to_csr();
    u.transpose().mul_csr(&u).sub(&CsrMatrix::identity(u.ncols())).max_abs()
}

/// `‖UᵀM₂U − M₁‖_F / ‖M₁‖_F`, the L² isometry defect.
pub fn mass_isometry_error(u: &OperatorMatrix, m1: &SparseSymMatrix, m2: &SparseSymMatrix) -> f64 {
    let u = u.to_csr();
    let g = u.transpose().mul_csr(&m2.to_csr().mul_csr(&u));
    ratio(g.sub(&m1.to_csr()).frobenius_norm(), m1.frobenius_norm())
}

/// `a / b`, with an empty problem (`a = 0`) counting as exact.
fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn check_dims(u: &OperatorMatrix, l1: &DiscreteLaplacian, l2: &DiscreteLaplacian) -> Result<()> {
    if u.ncols() != l1.n_dof() || u.nrows() != l2.n_dof() {
        return Err(DrumError::InvalidArgument(format!(
            "operator is {}×{} but the Laplacians have {} and {} dofs",
            u.nrows(),
            u.ncols(),
            l2.n_dof(),
            l1.n_dof()
        )));
    }
    Ok(())
}

/// Per copy, the partner across each template side (`None` on the boundary).
pub type SidePartners = Vec<[Option<usize>; 3]>;

/// Side partners of a layout, 0-based copies.
pub fn side_partners(layout: &CopyLayout) -> Result<SidePartners> {
    if let Some(g) = layout.gluing.iter().find(|g| g.edge_a != g.edge_b) {
        return Err(DrumError::InvalidArgument(format!(
            "gluing {g:?} joins different template sides; transplantation needs reflection gluings"
        )));
    }
    let n = layout.n_copies();
    let mut p = vec![[None; 3]; n];
    for s in 0..3 {
        for (i, q) in layout.involution(s).iter().enumerate().skip(1) {
            p[i - 1][s] = q.map(|j| j - 1);
        }
    }
    Ok(p)
}

/// A signed integer matrix `t` (rows: copies of Ω₂, columns: copies of Ω₁)
/// with `t P¹ₛ = P²ₛ t` for the side involutions of both layouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransplantationMatrix {
    pub t: Vec<Vec<i32>>,
    /// Nonzeros per row.
    pub weight: usize,
    pub kind: BcKind,
}

impl TransplantationMatrix {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// `t tᵀ` in integer arithmetic.
    pub fn gram(&self) -> Vec<Vec<i64>> {
        let n = self.n();
        let mut g = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = (0..n).map(|k| self.t[i][k] as i64 * self.t[j][k] as i64).sum();
            }
        }
        g
    }

    /// `tᵀ t` in integer arithmetic.
    pub fn cogram(&self) -> Vec<Vec<i64>> {
        let n = self.n();
        let mut g = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = (0..n).map(|k| self.t[k][i] as i64 * self.t[k][j] as i64).sum();
            }
        }
        g
    }

    /// Whether `t tᵀ = tᵀ t = w I` exactly.
    pub fn is_scaled_orthogonal(&self, w: i64) -> bool {
        let n = self.n();
        let ok = |g: Vec<Vec<i64>>| (0..n).all(|i| (0..n).all(|j| g[i][j] == if i == j { w } else { 0 }));
        ok(self.gram()) && ok(self.cogram())
    }

    /// Exact determinant (fraction-free elimination).
    pub fn det(&self) -> i128 {
        let n = self.n();
        let mut a: Vec<Vec<i128>> = self.t.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n {
            if a[k][k] == 0 {
                match (k + 1..n).find(|&r| a[r][k] != 0) {
                    Some(r) => {
                        a.swap(k, r);
                        sign = -sign;
                    }
                    None => return 0,
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
                }
            }
            prev = a[k][k];
        }
        sign * a[n - 1][n - 1]
    }

    pub fn nonzeros_per_row(&self) -> Vec<usize> {
        self.t.iter().map(|r| r.iter().filter(|&&x| x != 0).count()).collect()
    }

    pub fn nonzeros_per_column(&self) -> Vec<usize> {
        (0..self.n()).map(|j| self.t.iter().filter(|r| r[j] != 0).count()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.t[i][j] as f64)
    }

    /// `t / √weight`.
    pub fn normalized(&self) -> DMatrix<f64> {
        self.to_dense() / (self.weight as f64).sqrt()
    }

    /// The orthogonal polar factor `(t tᵀ)^{-1/2} t`. It still intertwines the
    /// side involutions because `t tᵀ` commutes with every `P²ₛ`.
    pub fn orthogonalized(&self) -> DMatrix<f64> {
        let t = self.to_dense();
        let g = &t * t.transpose();
        let eig = SymmetricEigen::new(g);
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * t
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.t)?)
    }
}

/// Outcome of an exhaustive transplantation search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransplantSearch {
    /// All solutions up to a global sign, in lexicographic order of row 1.
    pub solutions: Vec<TransplantationMatrix>,
    /// First-row patterns examined.
    pub candidates: usize,
    pub log: Vec<String>,
}

fn boundary_sign(kind: BcKind) -> i32 {
    match kind {
        BcKind::Dirichlet => -1,
        _ => 1,
    }
}

/// `row · P¹ₛ`: permute the row by the side-s involution of Ω₁, flipping
/// the sign of boundary copies for Dirichlet conditions.
fn act(row: &[i32], p1: &SidePartners, s: usize, sign: i32) -> Vec<i32> {
    (0..row.len())
        .map(|k| match p1[k][s] {
            Some(j) => row[j],
            None => sign * row[k],
        })
        .collect()
}

/// Enumerates every first row with `weight` signed nonzeros, propagates it
/// through the gluing graph of Ω₂ and keeps the nonsingular matrices that
/// satisfy all side constraints.
pub fn search_transplantations(p1: &SidePartners, p2: &SidePartners, kind: BcKind, weight: usize) -> Result<TransplantSearch> {
    let n = p1.len();
    if p2.len() != n || n == 0 {
        return Err(DrumError::InvalidArgument(format!(
            "layouts have {} and {} copies",
            p1.len(),
            p2.len()
        )));
    }
    if weight == 0 || weight > n {
        return Err(DrumError::InvalidArgument(format!("row weight {weight} out of range")));
    }
    let sign = boundary_sign(kind);
    let mut log = vec![format!(
        "search: {n} copies, kind {kind:?}, weight {weight}, C({n},{weight})·2^{} first rows up to sign",
        weight - 1
    )];
    // BFS order of Ω₂ from copy 0
    let mut order = vec![(0usize, None::<(usize, usize)>)];
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut q = VecDeque::from([0usize]);
    while let Some(i) = q.pop_front() {
        for s in 0..3 {
            if let Some(j) = p2[i][s] {
                if !seen[j] {
                    seen[j] = true;
                    order.push((j, Some((i, s))));
                    q.push_back(j);
                }
            }
        }
    }
    if order.len() != n {
        return Err(DrumError::InvalidArgument("the second layout is not connected".into()));
    }

    let mut solutions = Vec::new();
    let mut candidates = 0;
    for support in combinations(n, weight) {
        for mask in 0..(1u32 << (weight - 1)) {
            candidates += 1;
            let mut row0 = vec![0i32; n];
            for (b, &c) in support.iter().enumerate() {
                row0[c] = if b > 0 && mask >> (b - 1) & 1 == 1 { -1 } else { 1 };
            }
            let mut t = vec![Vec::new(); n];
            t[0] = row0;
            for &(j, via) in &order[1..] {
                let (i, s) = via.unwrap();
                t[j] = act(&t[i], p1, s, sign);
            }
            let consistent = (0..n).all(|i| {
                (0..3).all(|s| {
                    let moved = act(&t[i], p1, s, sign);
                    match p2[i][s] {
                        Some(j) => moved == t[j],
                        None => moved.iter().zip(&t[i]).all(|(&a, &b)| a == sign * b),
                    }
                })
            });
            if !consistent {
                continue;
            }
            let m = TransplantationMatrix { t, weight, kind };
            let det = m.det();
            if det == 0 {
                log.push(format!("row1 {:?}: consistent but singular", m.t[0]));
                continue;
            }
            log.push(format!("row1 {:?}: solution, det {det}, gram {:?}", m.t[0], m.gram()));
            solutions.push(m);
        }
    }
    log.push(format!("{candidates} first rows examined, {} solutions", solutions.len()));
    Ok(TransplantSearch {
        solutions,
        candidates,
        log,
    })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in start..n {
            cur.push(c);
            rec(c + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// The first Dirichlet transplantation with three nonzeros per row.
pub fn find_transplantation_matrix(layout1: &CopyLayout, layout2: &CopyLayout) -> Result<TransplantationMatrix> {
    find_transplantation_matrix_with(layout1, layout2, BcKind::Dirichlet, 3).map(|(t, _)| t)
}

pub fn find_transplantation_matrix_with(
    layout1: &CopyLayout,
    layout2: &CopyLayout,
    kind: BcKind,
    weight: usize,
) -> Result<(TransplantationMatrix, TransplantSearch)> {
    if layout1.template.side_lengths() != layout2.template.side_lengths() {
        return Err(DrumError::InvalidArgument("layouts use different templates".into()));
    }
    let search = search_transplantations(&side_partners(layout1)?, &side_partners(layout2)?, kind, weight)?;
    match search.solutions.first() {
        Some(t) => Ok((t.clone(), search)),
        None => Err(DrumError::TransplantationNotFound),
    }
}

/// Lifts a transplantation matrix to nodal values: the value at a vertex of
/// copy i of Ω₂ is `Σⱼ W[i][j] f(vertex of copy j of Ω₁ at the same template
/// point)`, with `W` the orthogonal polar factor of `t`. Every copy that
/// contains a merged vertex must produce the same row.
pub fn lift_transplantation(
    t: &TransplantationMatrix,
    nc1: &NodeCorrespondence,
    m1: &Mesh,
    nc2: &NodeCorrespondence,
    m2: &Mesh,
) -> Result<OperatorMatrix> {
    let n = t.n();
    if nc1.n_copies() != n || nc2.n_copies() != n {
        return Err(DrumError::InvalidArgument("copy counts differ from the matrix size".into()));
    }
    if nc1.template.vertices() != nc2.template.vertices() {
        return Err(DrumError::MeshMismatch("correspondences use different template meshes".into()));
    }
    let w = t.orthogonalized();
    let src = NodalSpace::for_kind(m1, t.kind);
    let dst = NodalSpace::for_kind(m2, t.kind);
    let src_dof = src.dof_of();
    let dst_dof = dst.dof_of();
    let scale = w.amax();

    let mut rows: HashMap<usize, (usize, BTreeMap<usize, f64>)> = HashMap::new();
    for (i, map2) in nc2.maps.iter().enumerate() {
        for (v, &y) in map2.iter().enumerate() {
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for j in 0..n {
                if w[(i, j)].abs() <= LIFT_DROP {
                    continue;
                }
                if let Some(c) = src_dof[nc1.maps[j][v]] {
                    *row.entry(c).or_default() += w[(i, j)];
                }
            }
            row.retain(|_, x| x.abs() > LIFT_DROP * scale);
            if dst_dof[y].is_none() {
                // eliminated vertex: the transplanted value must vanish there
                if let Some((c, x)) = row.iter().find(|(_, x)| x.abs() > MATCH_TOL) {
                    return Err(DrumError::TransplantationInconsistent(format!(
                        "boundary vertex {y} of Ω₂ receives {x:e} from dof {c} via copy {}",
                        i + 1
                    )));
                }
                continue;
            }
            match rows.get(&y) {
                None => {
                    rows.insert(y, (i, row));
                }
                Some((first, prev)) => {
                    let keys: HashSet<usize> = prev.keys().chain(row.keys()).copied().collect();
                    let diff = keys
                        .iter()
                        .map(|k| (prev.get(k).unwrap_or(&0.0) - row.get(k).unwrap_or(&0.0)).abs())
                        .fold(0.0, f64::max);
                    if diff > MATCH_TOL {
                        return Err(DrumError::TransplantationInconsistent(format!(
                            "vertex {y}: copies {} and {} disagree by {diff:e}",
                            first + 1,
                            i + 1
                        )));
                    }
                }
            }
        }
    }
    let mut triplets = Vec::new();
    for (y, (_, row)) in rows {
        let r = dst_dof[y].unwrap();
        triplets.extend(row.into_iter().map(|(c, x)| (r, c, x)));
    }
    let op = CsrMatrix::from_triplets(dst.dim(), src.dim(), triplets);
    Ok(OperatorMatrix::new(Storage::Sparse(op), src, dst, "transplantation")?.with_meshes(m1, m2))
}

/// `U = Φ₂ Φ₁ᵀ M₁`: maps the k-th eigenvector of Ω₁ to that of Ω₂ and
/// vanishes on the M₁-orthogonal complement of the computed eigenspace.
pub fn spectral_intertwiner(
    s1: &Spectrum,
    s2: &Spectrum,
    m1: &SparseSymMatrix,
    m2: &SparseSymMatrix,
) -> Result<OperatorMatrix> {
    if s1.n_converged != s2.n_converged {
        return Err(DrumError::InvalidArgument(format!(
            "spectra have {} and {} converged pairs",
            s1.n_converged, s2.n_converged
        )));
    }
    if m1.dim() != s1.eigenvectors.nrows() || m2.dim() != s2.eigenvectors.nrows() {
        return Err(DrumError::InvalidArgument("mass matrices do not match the spectra".into()));
    }
    let k = s1.n_converged;
    let phi1 = s1.eigenvectors.columns(0, k);
    let phi2 = s2.eigenvectors.columns(0, k);
    let m1phi1 = m1.to_csr().mul_dense(&phi1.into_owned());
    let u = phi2 * m1phi1.transpose();
    let mut notes = Vec::new();
    let (c1, c2) = (s1.cluster_values(), s2.cluster_values());
    let sizes1: Vec<usize> = s1.clusters().iter().map(|r| r.len()).collect();
    let sizes2: Vec<usize> = s2.clusters().iter().map(|r| r.len()).collect();
    if sizes1 != sizes2 {
        notes.push(format!("cluster multiplicities differ: {sizes1:?} vs {sizes2:?}"));
    }
    let tol = 10.0 * (s1.tol + s2.tol).max(1e-10);
    for (idx, (a, b)) in c1.iter().zip(&c2).enumerate() {
        let gap = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        if gap > tol {
            notes.push(format!("cluster {} eigenvalues differ: {a} vs {b} (relative gap {gap:.3e})", idx + 1));
        }
    }
    let mut op = OperatorMatrix::new(Storage::Dense(u), s1.space.clone(), s2.space.clone(), "spectral")?;
    op.rank = Some(k);
    op.notes = notes;
    Ok(op)
}

/// `‖A₂UΦ₁ − M₂UΦ₁Λ₁‖_F / ‖M₂UΦ₁Λ₁‖_F`: intertwining on the eigen-subspace.
pub fn subspace_residual(u: &OperatorMatrix, s1: &Spectrum, l2: &DiscreteLaplacian) -> f64 {
    let k = s1.n_converged;
    let phi1 = s1.eigenvectors.columns(0, k).into_owned();
    let uphi = u.to_csr().mul_dense(&phi1);
    let au = l2.stiffness.to_csr().mul_dense(&uphi);
    let mut mu = l2.mass.to_csr().mul_dense(&uphi);
    for (c, &lam) in s1.eigenvalues[..k].iter().enumerate() {
        mu.column_mut(c).scale_mut(lam);
    }
    (au - &mu).norm() / mu.norm().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

/// Extension from (0, π) to (0, 2π) by reflection in x = π: `Uf(x) = f(x)`
/// on (0, π] and `∓f(2π − x)` beyond. Odd uses Dirichlet spaces, even the
/// full (Neumann) spaces.
pub fn reflection_operator_1d(parity: Parity, m1: &Mesh, m2: &Mesh) -> Result<OperatorMatrix> {
    use std::f64::consts::PI;
    let (iso_left, iso_right) = (
        Isometry::identity(),
        Isometry::new([[-1.0, 0.0], [0.0, 1.0]], [2.0 * PI, 0.0])?,
    );
    let sign = match parity {
        Parity::Odd => -1.0,
        Parity::Even => 1.0,
    };
    let kind = match parity {
        Parity::Odd => BcKind::Dirichlet,
        Parity::Even => BcKind::Neumann,
    };
    if m1.dim() != 1 || m2.dim() != 1 {
        return Err(DrumError::MeshMismatch("reflection operator needs interval meshes".into()));
    }
    let src = NodalSpace::for_kind(m1, kind);
    let dst = NodalSpace::for_kind(m2, kind);
    let src_dof = src.dof_of();
    let loc = m1.locator();
    let mut triplets = Vec::new();
    for (r, &y) in dst.nodes.iter().enumerate() {
        let x = m2.vertices()[y].x;
        let (iso, c) = if x <= PI + MATCH_TOL { (&iso_left, 1.0) } else { (&iso_right, sign) };
        let p = iso.apply(m2.vertices()[y]);
        let v = loc.find(p, MATCH_TOL).ok_or_else(|| {
            DrumError::MeshMismatch(format!("no vertex of the source mesh at x = {}", p.x))
        })?;
        if let Some(col) = src_dof[v] {
            triplets.push((r, col, c));
        }
    }
    let op = CsrMatrix::from_triplets(dst.dim(), src.dim(), triplets);
    let tag = match parity {
        Parity::Odd => "reflection-odd",
        Parity::Even => "reflection-even",
    };
    Ok(OperatorMatrix::new(Storage::Sparse(op), src, dst, tag)?.with_meshes(m1, m2))
}

/// `(Uf)(y) = cᵢ f(τᵢ(y))` on the region of Ω₂ that τᵢ maps into Ω₁, zero
/// elsewhere. A cell of `m2` belongs to copy i when τᵢ maps its centroid
/// into a cell of `m1`; its vertices must then land on vertices of `m1`.
/// Where regions share a vertex the first listed copy defines the row.
pub fn multi_copy_operator(
    isometries: &[Isometry],
    constants: &[f64],
    m1: &Mesh,
    m2: &Mesh,
    kind: BcKind,
) -> Result<OperatorMatrix> {
    if isometries.len() != constants.len() || isometries.is_empty() {
        return Err(DrumError::InvalidArgument(format!(
            "{} isometries but {} constants",
            isometries.len(),
            constants.len()
        )));
    }
    if m1.dim() != m2.dim() {
        return Err(DrumError::MeshMismatch("meshes of different dimension".into()));
    }
    let src = NodalSpace::for_kind(m1, kind);
    let dst = NodalSpace::for_kind(m2, kind);
    let src_dof = src.dof_of();
    let dst_dof = dst.dof_of();
    let vloc = m1.locator();
    let cloc = CellLocator::new(m1);
    let mut assigned: Vec<Option<(usize, usize)>> = vec![None; m2.n_vertices()];
    for (i, iso) in isometries.iter().enumerate() {
        let mut hits = 0;
        for k in 0..m2.n_cells() {
            let cell = m2.cell(k);
            let centroid = centroid(m2, cell);
            if !cloc.contains(iso.apply(centroid)) {
                continue;
            }
            hits += 1;
            for &y in cell {
                if assigned[y].is_some() {
                    continue;
                }
                let p = iso.apply(m2.vertices()[y]);
                let x = vloc.find(p, MATCH_TOL).ok_or_else(|| {
                    DrumError::MeshMismatch(format!(
                        "copy {}: image ({}, {}) of vertex {y} is not a source vertex",
                        i + 1,
                        p.x,
                        p.y
                    ))
                })?;
                assigned[y] = Some((i, x));
            }
        }
        if hits == 0 {
            return Err(DrumError::MeshMismatch(format!("copy {} maps no cell into the source domain", i + 1)));
        }
    }
    let mut triplets = Vec::new();
    for (y, a) in assigned.iter().enumerate() {
        if let (Some((i, x)), Some(r)) = (a, dst_dof[y]) {
            if let Some(c) = src_dof[*x] {
                triplets.push((r, c, constants[*i]));
            }
        }
    }
    let op = CsrMatrix::from_triplets(dst.dim(), src.dim(), triplets);
    Ok(OperatorMatrix::new(Storage::Sparse(op), src, dst, "multi-copy")?.with_meshes(m1, m2))
}

fn centroid(m: &Mesh, cell: &[usize]) -> Point2 {
    let s = cell.iter().fold(Point2::new(0.0, 0.0), |acc, &v| acc.add(m.vertices()[v]));
    s.scale(1.0 / cell.len() as f64)
}

/// Bucketed point-in-cell queries on a mesh.
struct CellLocator<'a> {
    mesh: &'a Mesh,
    h: f64,
    origin: Point2,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> CellLocator<'a> {
    fn new(mesh: &'a Mesh) -> Self {
        let h = mesh.mesh_size().max(1e-12);
        let origin = mesh.vertices()[0];
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for k in 0..mesh.n_cells() {
            let c = mesh.cell(k);
            let (mut lo, mut hi) = (mesh.vertices()[c[0]], mesh.vertices()[c[0]]);
            for &v in c {
                let p = mesh.vertices()[v];
                lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
            let (a, b) = (key(lo, origin, h), key(hi, origin, h));
            for i in a.0..=b.0 {
                for j in a.1..=b.1 {
                    buckets.entry((i, j)).or_default().push(k);
                }
            }
        }
        CellLocator { mesh, h, origin, buckets }
    }

    /// Whether `p` lies in the interior of some cell.
    fn contains(&self, p: Point2) -> bool {
        let Some(cells) = self.buckets.get(&key(p, self.origin, self.h)) else {
            return false;
        };
        let vs = self.mesh.vertices();
        cells.iter().any(|&k| {
            let c = self.mesh.cell(k);
            match self.mesh.cells() {
                Cells::Segments(_) => {
                    let (a, b) = (vs[c[0]].x.min(vs[c[1]].x), vs[c[0]].x.max(vs[c[1]].x));
                    p.y.abs() <= MATCH_TOL && p.x > a + MATCH_TOL && p.x < b - MATCH_TOL
                }
                Cells::Triangles(_) => {
                    (0..3).all(|e| crate::geometry::orient2d(vs[c[e]], vs[c[(e + 1) % 3]], p) > 1e-12 * self.h * self.h)
                }
            }
        })
    }
}

fn key(p: Point2, o: Point2, h: f64) -> (i64, i64) {
    (((p.x - o.x) / h).floor() as i64, ((p.y - o.y) / h).floor() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_laplacian;
    use crate::geometry::{build_propeller_pair, CopyLayout, Triangle, PROPELLER_TREE_1};
    use crate::mesh::{mesh_interval, mesh_layout, mesh_rectangle};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn fig1() -> Triangle {
        Triangle::new(Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), Point2::new(1.8, 2.4)).unwrap()
    }

    #[test]
    fn propeller_search_finds_three_term_rows() {
        let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
        let t = find_transplantation_matrix(&l1, &l2).unwrap();
        assert_eq!(t.nonzeros_per_row(), vec![3; 7]);
        assert_eq!(t.nonzeros_per_column(), vec![3; 7]);
        assert_ne!(t.det(), 0);
        // 3⁷ is not a square, so no integer t can have t tᵀ = 3I
        assert!(!t.is_scaled_orthogonal(3));
        let w = t.orthogonalized();
        assert!((&w * w.transpose() - DMatrix::identity(7, 7)).amax() < 1e-12);
    }

    #[test]
    fn identical_layouts_give_signed_permutation() {
        let l1 = CopyLayout::from_reflection_tree(&fig1(), &PROPELLER_TREE_1).unwrap();
        let (t, _) = find_transplantation_matrix_with(&l1, &l1, BcKind::Dirichlet, 1).unwrap();
        assert!(t.is_scaled_orthogonal(1));
        assert_eq!(t.t, (0..7).map(|i| (0..7).map(|j| (i == j) as i32).collect::<Vec<i32>>()).collect::<Vec<_>>());
    }

    #[test]
    fn unrelated_gluing_has_no_transplantation() {
        // a chain of seven copies against the first propeller layout
        let p1 = side_partners(&CopyLayout::from_reflection_tree(&fig1(), &PROPELLER_TREE_1).unwrap()).unwrap();
        let mut chain = vec![[None; 3]; 7];
        for i in 0..6 {
            let s = i % 2;
            chain[i][s] = Some(i + 1);
            chain[i + 1][s] = Some(i);
        }
        let s = search_transplantations(&p1, &chain, BcKind::Dirichlet, 3).unwrap();
        assert!(s.solutions.is_empty());
        assert_eq!(s.candidates, 35 * 4);
    }

    #[test]
    fn determinant_matches_dense() {
        let t = TransplantationMatrix {
            t: vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]],
            weight: 2,
            kind: BcKind::Dirichlet,
        };
        assert_eq!(t.det(), 2);
    }

    #[test]
    fn lifted_transplantation_intertwines() {
        let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
        let t = find_transplantation_matrix(&l1, &l2).unwrap();
        for levels in 0..3 {
            let (m1, nc1) = mesh_layout(&l1, levels).unwrap();
            let (m2, nc2) = mesh_layout(&l2, levels).unwrap();
            let u = lift_transplantation(&t, &nc1, &m1, &nc2, &m2).unwrap();
            let a1 = build_laplacian(Arc::new(m1), BcKind::Dirichlet, None).unwrap();
            let a2 = build_laplacian(Arc::new(m2), BcKind::Dirichlet, None).unwrap();
            let r = intertwining_residual(&u, &a1, &a2).unwrap();
            assert!(r < 1e-12, "level {levels}: {r} ({} dofs)", a1.n_dof());
            assert!(mass_residual(&u, &a1, &a2).unwrap() < 1e-12);
            assert!(orthogonality_error(&u) < 1e-12);
        }
    }

    #[test]
    fn neumann_transplantation_is_an_l2_isometry() {
        let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
        let (t, _) = find_transplantation_matrix_with(&l1, &l2, BcKind::Neumann, 3).unwrap();
        let (m1, nc1) = mesh_layout(&l1, 2).unwrap();
        let (m2, nc2) = mesh_layout(&l2, 2).unwrap();
        let u = lift_transplantation(&t, &nc1, &m1, &nc2, &m2).unwrap();
        let a1 = build_laplacian(Arc::new(m1), BcKind::Neumann, None).unwrap();
        let a2 = build_laplacian(Arc::new(m2), BcKind::Neumann, None).unwrap();
        assert!(mass_isometry_error(&u, &a1.mass, &a2.mass) < 1e-12);
        // energy is preserved as well, so the quadratic forms agree
        let x: Vec<f64> = (0..u.ncols()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let ux = u.apply(&x);
        let e1 = a1.stiffness.quad_form(&x);
        let e2 = a2.stiffness.quad_form(&ux);
        assert!((e1 - e2).abs() < 1e-10 * e1);
    }

    #[test]
    fn reflection_1d_matches_example() {
        let m1 = mesh_interval(0.0, PI, 50).unwrap();
        let m2 = mesh_interval(0.0, 2.0 * PI, 100).unwrap();
        let u = reflection_operator_1d(Parity::Odd, &m1, &m2).unwrap();
        let f: Vec<f64> = u.src.nodes.iter().map(|&v| m1.vertices()[v].x.sin()).collect();
        let g = u.apply(&f);
        for (&v, gv) in u.dst.nodes.iter().zip(&g) {
            assert!((gv - m2.vertices()[v].x.sin()).abs() < 1e-12);
        }
        let e = reflection_operator_1d(Parity::Even, &m1, &m2).unwrap();
        assert!(e.apply(&vec![1.0; e.ncols()]).iter().all(|&x| x == 1.0));
        let bad = mesh_interval(0.0, 2.0 * PI, 99).unwrap();
        assert!(matches!(reflection_operator_1d(Parity::Odd, &m1, &bad), Err(DrumError::MeshMismatch(_))));
    }

    #[test]
    fn multi_copy_identity_block() {
        let m1 = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 2).unwrap();
        let m2 = crate::mesh::Mesh::merge(&[
            m1.clone(),
            m1.transformed(&Isometry::translation(Point2::new(1.0, 0.0))).unwrap(),
        ])
        .unwrap()
        .0;
        let u = multi_copy_operator(&[Isometry::identity()], &[1.0], &m1, &m2, BcKind::Neumann).unwrap();
        let csr = u.to_csr();
        let mut zero_rows = 0;
        for r in 0..csr.nrows() {
            let (c, v) = csr.row(r);
            match c.len() {
                0 => zero_rows += 1,
                1 => assert_eq!(v[0], 1.0),
                _ => panic!("row {r} has {} entries", c.len()),
            }
        }
        assert_eq!(zero_rows, m2.n_vertices() - m1.n_vertices());
    }
}
