//! The full analysis: disjointness test, factorization, local-isometry
//! check, decomposition and congruence decision.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::congruence::{
    decide_congruence, exit_code_for, hausdorff_distance, CongruenceOptions, CongruenceResult, Region, EXIT_NOT_CONGRUENT,
};
use crate::eigen::{solve_eigs, Spectrum};
use crate::error::{DrumError, Result};
use crate::fem::{build_laplacian, BcKind, SpaceKind};
use crate::mesh::{refine, Mesh};
use crate::opanalysis::{
    decompose_components, extend_components, factor_with_report, test_disjointness, ComponentDecomposition,
    DisjointnessReport, FactoredOperator, LocalIsometryReport, Verdict, DEFAULT_SEED, DEFAULT_TRIALS,
};
use crate::transplant::OperatorMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub trials: usize,
    pub seed: u64,
    /// Solve for λ₁ of both domains (Dirichlet operators only).
    pub lambda1: bool,
    pub area_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            lambda1: true,
            area_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub disjointness: Option<DisjointnessReport>,
    pub factored: Option<FactoredOperator>,
    pub local_isometry: Option<LocalIsometryReport>,
    pub decomposition: Option<ComponentDecomposition>,
    pub congruence: Option<CongruenceResult>,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl AnalysisReport {
    fn failed(mut self, e: DrumError) -> Self {
        self.exit_code = exit_code_for(&e);
        self.error = Some(e.to_string());
        self
    }
}

/// λ₁ on the mesh and on its refinement; the refined value and the
/// Richardson estimate of its error for an O(h²) method.
fn lambda1_with_error(m: &Mesh) -> Result<(Spectrum, f64)> {
    let coarse = solve_eigs(&build_laplacian(Arc::new(m.clone()), BcKind::Dirichlet, None)?, 1, 1e-10)?;
    let fine = solve_eigs(&build_laplacian(Arc::new(refine(m)?), BcKind::Dirichlet, None)?, 1, 1e-10)?;
    let err = (coarse.eigenvalues[0] - fine.eigenvalues[0]).abs() / 3.0;
    Ok((fine, err))
}

/// Runs every stage and records how far it got. Errors end the run with
/// exit code 20 (refused) or 30 (inconsistent); an empty support is not an
/// error but yields no congruence.
pub fn analyze(u: &OperatorMatrix, m1: &Mesh, m2: &Mesh, opts: &AnalysisOptions) -> AnalysisReport {
    let mut rep = AnalysisReport {
        disjointness: None,
        factored: None,
        local_isometry: None,
        decomposition: None,
        congruence: None,
        exit_code: EXIT_NOT_CONGRUENT,
        error: None,
    };
    let dj = match test_disjointness(u, m1, m2, opts.trials, opts.seed) {
        Ok(d) => d,
        Err(e) => return rep.failed(e),
    };
    rep.disjointness = Some(dj.clone());
    if dj.verdict != Verdict::Preserving {
        let refused = CongruenceResult::refused(&dj);
        rep.exit_code = refused.exit_code();
        rep.error = refused.refusal.clone();
        rep.congruence = Some(refused);
        return rep;
    }
    let f = match factor_with_report(u, m1, m2, dj) {
        Ok(f) => f,
        Err(e) => return rep.failed(e),
    };
    rep.factored = Some(f.clone());
    let mut dec = match decompose_components(&f, m2) {
        Ok(d) => d,
        Err(DrumError::EmptySupport) => {
            rep.error = Some("operator vanishes on the plateau function; nothing to decompose".into());
            return rep;
        }
        Err(e) => return rep.failed(e),
    };
    rep.local_isometry = Some(dec.local_isometry.clone());
    if let Err(e) = extend_components(&mut dec, u, m1, m2) {
        return rep.failed(e);
    }
    rep.decomposition = Some(dec.clone());

    let regions = Region::from_mesh(m1).and_then(|r1| Ok((r1, Region::from_mesh(m2)?)));
    let (r1, r2) = match regions {
        Ok(r) => r,
        Err(e) => return rep.failed(e),
    };
    let kind = match u.src.kind {
        SpaceKind::Dirichlet => BcKind::Dirichlet,
        SpaceKind::Full => BcKind::Neumann,
    };
    let mut copts = CongruenceOptions {
        area_tol: opts.area_tol,
        kind,
        ..CongruenceOptions::default()
    };
    let spectra = if opts.lambda1 && kind == BcKind::Dirichlet {
        match lambda1_with_error(m1).and_then(|a| Ok((a, lambda1_with_error(m2)?))) {
            Ok(((s1, e1), (s2, e2))) => {
                copts.lambda1_discretization = e1 + e2;
                Some((s1, s2))
            }
            Err(e) => return rep.failed(e),
        }
    } else {
        None
    };
    let (s1, s2) = match &spectra {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    match decide_congruence(&dec, &r1, &r2, s1, s2, u, &copts) {
        Ok(mut c) => {
            if let Some(iso) = &c.isometry {
                c.hausdorff = Some(hausdorff_distance(iso, m1, m2));
            }
            rep.exit_code = c.exit_code();
            rep.congruence = Some(c);
            rep
        }
        Err(e) => rep.failed(e),
    }
}
