//! Congruence decisions from a component decomposition, plus probes for the
//! nested-domain, Robin-transport and Weyl-law statements.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eigen::{solve_eigs, weyl_fit, Spectrum, WeylFit};
use crate::error::{DrumError, Result};
use crate::fem::{build_laplacian, BcKind, BoundaryFunction, DiscreteLaplacian};
use crate::geometry::{Isometry, Polygon};
use crate::mesh::{mesh_polygon, Mesh};
use crate::opanalysis::{dense_range_check, ComponentDecomposition, DisjointnessReport, RangeCheck};
use crate::transplant::OperatorMatrix;

pub const EXIT_CONGRUENT: i32 = 0;
pub const EXIT_NOT_CONGRUENT: i32 = 10;
pub const EXIT_REFUSED: i32 = 20;
pub const EXIT_INCONSISTENT: i32 = 30;

/// Exit code for a failed analysis.
pub fn exit_code_for(e: &DrumError) -> i32 {
    match e {
        DrumError::NotDisjointnessPreserving { .. } => EXIT_REFUSED,
        _ => EXIT_INCONSISTENT,
    }
}

/// A domain, for its measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Polygon(Polygon),
    Interval(f64, f64),
}

impl Region {
    pub fn measure(&self) -> f64 {
        match self {
            Region::Polygon(p) => p.area(),
            Region::Interval(a, b) => (b - a).abs(),
        }
    }

    pub fn from_mesh(m: &Mesh) -> Result<Region> {
        if m.dim() == 1 {
            let xs = m.vertices().iter().map(|p| p.x);
            let lo = xs.clone().fold(f64::INFINITY, f64::min);
            let hi = xs.fold(f64::NEG_INFINITY, f64::max);
            return Ok(Region::Interval(lo, hi));
        }
        m.boundary_polygon().map(Region::Polygon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    EqualMeasure,
    SharedEigenvalue,
    DenseRange,
    MutualOperator,
    Lambda1Match,
    None,
}

/// Evaluation of one criterion; `holds` is `None` when it was not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRecord {
    pub criterion: Criterion,
    pub holds: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongruenceResult {
    pub congruent: bool,
    pub criterion_fired: Criterion,
    /// Rigid motion Ω₂ → Ω₁ of the single covering component.
    pub isometry: Option<Isometry>,
    pub constant: Option<f64>,
    pub fit_rms: Option<f64>,
    pub n_components: usize,
    pub diagnostics: Vec<CriterionRecord>,
    /// Why the analysis stopped before a decomposition existed.
    pub refusal: Option<String>,
    /// Hausdorff distance between τ̄(V₂) and V₁.
    pub hausdorff: Option<f64>,
    pub range: Option<RangeCheck>,
    pub weyl: Option<(WeylFit, WeylFit)>,
}

impl CongruenceResult {
    pub fn exit_code(&self) -> i32 {
        if self.refusal.is_some() {
            EXIT_REFUSED
        } else if self.congruent {
            EXIT_CONGRUENT
        } else {
            EXIT_NOT_CONGRUENT
        }
    }

    /// Result for an operator that failed the disjointness test.
    pub fn refused(report: &DisjointnessReport) -> Self {
        let mut why = format!("operator is not disjointness-preserving: verdict {:?}, max overlap {:.3e}", report.verdict, report.max_overlap);
        if let Some(w) = &report.witness {
            why.push_str(&format!(
                "; witness f on {:?}, g on {:?} overlap at vertex {}",
                w.f_support, w.g_support, w.at_vertex
            ));
        }
        CongruenceResult {
            congruent: false,
            criterion_fired: Criterion::None,
            isometry: None,
            constant: None,
            fit_rms: None,
            n_components: 0,
            diagnostics: Vec::new(),
            refusal: Some(why),
            hausdorff: None,
            range: None,
            weyl: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongruenceOptions {
    /// Relative tolerance on areas.
    pub area_tol: f64,
    /// Relative singular-value cutoff of the range check.
    pub range_tol: f64,
    /// Boundary condition of the operator's spaces; λ₁ matching is Dirichlet only.
    pub kind: BcKind,
    /// Discretization error estimate added to the λ₁ band.
    pub lambda1_discretization: f64,
}

impl Default for CongruenceOptions {
    fn default() -> Self {
        CongruenceOptions {
            area_tol: 0.01,
            range_tol: 1e-10,
            kind: BcKind::Dirichlet,
            lambda1_discretization: 0.0,
        }
    }
}

fn inconsistent(msg: String, diagnostics: &[CriterionRecord]) -> DrumError {
    let trail: Vec<String> = diagnostics
        .iter()
        .map(|d| format!("{:?}={:?} ({})", d.criterion, d.holds, d.detail))
        .collect();
    DrumError::InternalInconsistency(format!("{msg}; diagnostics: {}", trail.join("; ")))
}

/// Decides congruence of Ω₁ and Ω₂ from the decomposition of a
/// disjointness-preserving operator. Ω₂ is congruent to Ω₁ when one
/// component covers Ω₂ and one of the criteria holds: equal measure, dense
/// range, or equal principal Dirichlet eigenvalue. A criterion that holds
/// while the decomposition has no single covering component is an error.
pub fn decide_congruence(
    dec: &ComponentDecomposition,
    r1: &Region,
    r2: &Region,
    s1: Option<&Spectrum>,
    s2: Option<&Spectrum>,
    u: &OperatorMatrix,
    opts: &CongruenceOptions,
) -> Result<CongruenceResult> {
    let (a1, a2) = (r1.measure(), r2.measure());
    let close = |x: f64, y: f64| (x - y).abs() <= opts.area_tol * x.abs().max(y.abs());
    let mut diag = Vec::new();

    let single = dec.components.len() == 1;
    let covered = dec.components.first().map_or(0.0, |c| c.extended_area.max(c.area));
    let covers = single && close(covered, a2);
    diag.push(CriterionRecord {
        criterion: Criterion::None,
        holds: Some(covers),
        detail: format!(
            "{} component(s); first covers {covered:.6e} of |Ω₂| = {a2:.6e}",
            dec.components.len()
        ),
    });

    let equal_measure = close(a1, a2);
    diag.push(CriterionRecord {
        criterion: Criterion::EqualMeasure,
        holds: Some(equal_measure),
        detail: format!("|Ω₁| = {a1:.6e}, |Ω₂| = {a2:.6e}"),
    });
    if equal_measure && !covers {
        return Err(inconsistent(
            format!(
                "equal measures but the decomposition has {} component(s) covering {covered:.6e}",
                dec.components.len()
            ),
            &diag,
        ));
    }

    let range = dense_range_check(u, opts.range_tol);
    diag.push(CriterionRecord {
        criterion: Criterion::DenseRange,
        holds: Some(range.dense),
        detail: format!("rank {} of {} rows", range.rank, u.nrows()),
    });
    if range.dense && !covers {
        return Err(inconsistent("dense range without a single covering component".into(), &diag));
    }

    let lambda1 = match (opts.kind, s1, s2) {
        (BcKind::Dirichlet, Some(s1), Some(s2)) if s1.n_converged > 0 && s2.n_converged > 0 => {
            let (l1, l2) = (s1.eigenvalues[0], s2.eigenvalues[0]);
            let band = 3.0 * (s1.residuals[0] * l1.abs().max(1.0) + s2.residuals[0] * l2.abs().max(1.0))
                + opts.lambda1_discretization;
            let holds = (l1 - l2).abs() <= band;
            diag.push(CriterionRecord {
                criterion: Criterion::Lambda1Match,
                holds: Some(holds),
                detail: format!("λ₁ = {l1:.9e} vs {l2:.9e}, band {band:.3e}"),
            });
            holds
        }
        _ => {
            diag.push(CriterionRecord {
                criterion: Criterion::Lambda1Match,
                holds: None,
                detail: "needs Dirichlet spectra of both domains".into(),
            });
            false
        }
    };
    if lambda1 && !covers {
        return Err(inconsistent("equal λ₁ without a single covering component".into(), &diag));
    }
    diag.push(CriterionRecord {
        criterion: Criterion::SharedEigenvalue,
        holds: None,
        detail: "exact equality of a k-th eigenvalue is not decidable numerically".into(),
    });

    let fired = if !covers {
        Criterion::None
    } else if equal_measure {
        Criterion::EqualMeasure
    } else if range.dense {
        Criterion::DenseRange
    } else if lambda1 {
        Criterion::Lambda1Match
    } else {
        Criterion::None
    };
    let congruent = fired != Criterion::None;
    if congruent && !equal_measure {
        return Err(inconsistent(
            format!("{fired:?} asserts congruence but |Ω₁| = {a1:.6e} and |τ(Ω₂)| = {covered:.6e}"),
            &diag,
        ));
    }
    let c = dec.components.first();
    Ok(CongruenceResult {
        congruent,
        criterion_fired: fired,
        isometry: c.filter(|_| congruent).map(|c| c.isometry),
        constant: c.filter(|_| single).map(|c| c.constant),
        fit_rms: c.filter(|_| single).map(|c| c.fit_rms),
        n_components: dec.components.len(),
        diagnostics: diag,
        refusal: None,
        hausdorff: None,
        range: Some(range),
        weyl: None,
    })
}

/// Operators in both directions: congruent when each decomposes into a
/// single component covering its target.
pub fn decide_mutual(
    forward: &ComponentDecomposition,
    backward: &ComponentDecomposition,
    r1: &Region,
    r2: &Region,
    area_tol: f64,
) -> CongruenceResult {
    let covers = |d: &ComponentDecomposition, target: f64| {
        d.components.len() == 1 && {
            let a = d.components[0].extended_area.max(d.components[0].area);
            (a - target).abs() <= area_tol * target
        }
    };
    let f = covers(forward, r2.measure());
    let b = covers(backward, r1.measure());
    let congruent = f && b;
    let c = forward.components.first();
    CongruenceResult {
        congruent,
        criterion_fired: if congruent { Criterion::MutualOperator } else { Criterion::None },
        isometry: c.filter(|_| congruent).map(|c| c.isometry),
        constant: c.map(|c| c.constant),
        fit_rms: c.map(|c| c.fit_rms),
        n_components: forward.components.len(),
        diagnostics: vec![CriterionRecord {
            criterion: Criterion::MutualOperator,
            holds: Some(congruent),
            detail: format!("forward single and covering: {f}; backward: {b}"),
        }],
        refusal: None,
        hausdorff: None,
        range: None,
        weyl: None,
    }
}

/// Symmetric Hausdorff distance between `iso(V₂)` and `V₁`.
pub fn hausdorff_distance(iso: &Isometry, m1: &Mesh, m2: &Mesh) -> f64 {
    let a: Vec<_> = m2.vertices().iter().map(|&p| iso.apply(p)).collect();
    let b = m1.vertices();
    let one_way = |xs: &[crate::geometry::Point2], ys: &[crate::geometry::Point2]| {
        xs.iter()
            .map(|&p| ys.iter().map(|&q| p.dist(q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(&a, b).max(one_way(b, &a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedProbe {
    pub k: usize,
    pub levels: Vec<usize>,
    /// `gaps[ℓ][j] = λⱼ(inner) − λⱼ(outer)` for `j < k` at `levels[ℓ]`.
    pub gaps: Vec<Vec<f64>>,
    pub inner: Vec<Vec<f64>>,
    pub outer: Vec<Vec<f64>>,
}

/// Dirichlet eigenvalue gaps between a domain and one containing it, per
/// refinement level. Domain monotonicity makes them nonnegative, and
/// positive when the inclusion is proper.
pub fn nested_rigidity_probe(inner: &Polygon, outer: &Polygon, k: usize, levels: &[usize]) -> Result<NestedProbe> {
    if k == 0 || levels.is_empty() {
        return Err(DrumError::InvalidArgument("need k ≥ 1 and at least one level".into()));
    }
    let tol = 1e-9 * outer.perimeter();
    if let Some(p) = inner.ring().iter().find(|&&p| !outer.contains(p, tol)) {
        return Err(DrumError::InvalidArgument(format!("inner vertex {p:?} lies outside the outer domain")));
    }
    let solve = |p: &Polygon, level: usize| -> Result<Vec<f64>> {
        let m = Arc::new(mesh_polygon(p, level)?);
        let l = build_laplacian(m, BcKind::Dirichlet, None)?;
        Ok(solve_eigs(&l, k, 1e-10)?.eigenvalues[..k].to_vec())
    };
    let mut probe = NestedProbe {
        k,
        levels: levels.to_vec(),
        gaps: Vec::new(),
        inner: Vec::new(),
        outer: Vec::new(),
    };
    for &level in levels {
        let li = solve(inner, level)?;
        let lo = solve(outer, level)?;
        probe.gaps.push(li.iter().zip(&lo).map(|(a, b)| a - b).collect());
        probe.inner.push(li);
        probe.outer.push(lo);
    }
    Ok(probe)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobinTransport {
    /// `max |β₂(y) − β₁(τ(y))|` over boundary vertices y of Ω₂.
    pub max_difference: f64,
    pub worst_vertex: usize,
}

/// Compares the boundary coefficient of `l2` against `β₁ ∘ τ` on ∂Ω₂; a
/// Neumann `l2` has `β₂ = 0`.
pub fn robin_transport_check(
    beta1: &BoundaryFunction,
    m1: &Mesh,
    tau: &Isometry,
    m2: &Mesh,
    l2: &DiscreteLaplacian,
) -> Result<RobinTransport> {
    if l2.mesh.n_vertices() != m2.n_vertices() {
        return Err(DrumError::MeshMismatch("Laplacian was built on a different mesh".into()));
    }
    let beta2 = match (&l2.kind, &l2.beta) {
        (BcKind::Robin, Some(b)) => b.boundary_samples(m2)?,
        (BcKind::Neumann, _) => vec![0.0; m2.n_vertices()],
        _ => return Err(DrumError::InvalidArgument("transport check needs a Neumann or Robin Laplacian".into())),
    };
    let tol = 1e-8 * m1.mesh_size().max(1.0);
    let mut worst = (0.0f64, 0usize);
    for v in m2.boundary_vertex_ids() {
        let p = tau.apply(m2.vertices()[v]);
        let b1 = beta1.eval_at(m1, p, tol).map_err(|_| {
            DrumError::InvalidArgument(format!("τ maps boundary vertex {v} to {p:?}, off ∂Ω₁"))
        })?;
        let d = (beta2[v] - b1).abs();
        if d > worst.0 {
            worst = (d, v);
        }
    }
    Ok(RobinTransport {
        max_difference: worst.0,
        worst_vertex: worst.1,
    })
}

/// Dimension and volume read off the eigenvalue counting function.
pub fn dimension_volume_report(s: &Spectrum) -> Result<WeylFit> {
    weyl_fit(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::mesh::mesh_rectangle;
    use std::f64::consts::PI;

    #[test]
    fn nested_squares_gap_is_positive() {
        let inner = Polygon::rectangle(0.1, 0.1, 1.1, 1.1).unwrap();
        let outer = Polygon::rectangle(0.0, 0.0, 1.2, 1.2).unwrap();
        let p = nested_rigidity_probe(&inner, &outer, 1, &[3]).unwrap();
        let want = 2.0 * PI * PI * (1.0 - 1.0 / 1.44);
        assert!((p.gaps[0][0] - want).abs() < 0.05 * want, "{:?}", p.gaps);
        let same = nested_rigidity_probe(&outer, &outer, 1, &[2]).unwrap();
        assert!(same.gaps[0][0].abs() < 1e-8);
        assert!(nested_rigidity_probe(&outer, &inner, 1, &[1]).is_err());
    }

    #[test]
    fn robin_transport_detects_offset() {
        let m1 = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap();
        let g = Isometry::rotation(PI / 2.0, Point2::new(2.0, 0.0));
        let m2 = m1.transformed(&g).unwrap();
        let tau = g.inverse();
        let beta1 = BoundaryFunction::sample(&m1, |p| p.x);
        let pulled = BoundaryFunction::sample(&m2, |p| tau.apply(p).x);
        let l2 = build_laplacian(Arc::new(m2.clone()), BcKind::Robin, Some(pulled)).unwrap();
        let r = robin_transport_check(&beta1, &m1, &tau, &m2, &l2).unwrap();
        assert!(r.max_difference <= 1e-12);
        let shifted = BoundaryFunction::sample(&m2, |p| tau.apply(p).x + 0.5);
        let l2 = build_laplacian(Arc::new(m2.clone()), BcKind::Robin, Some(shifted)).unwrap();
        let r = robin_transport_check(&beta1, &m1, &tau, &m2, &l2).unwrap();
        assert!((r.max_difference - 0.5).abs() < 1e-10);
        let bad = Isometry::translation(Point2::new(0.3, 0.0)).compose(&tau);
        assert!(robin_transport_check(&beta1, &m1, &bad, &m2, &l2).is_err());
    }
}
