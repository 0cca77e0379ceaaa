//! The generalized eigenproblem `A x = λ M x`, heat semigroups and Weyl asymptotics.

mod chol;
mod heat;
mod lanczos;
mod weyl;

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DrumError, Result};
use crate::fem::{BcKind, DiscreteLaplacian, NodalSpace};
use crate::sparse::SparseSymMatrix;

pub use chol::{rcm_ordering, EnvelopeCholesky, Factor, DENSE_FACTOR_LIMIT};
pub use heat::{expm, heat_apply, heat_apply_spectral, heat_semigroup_dense, HeatApply, HeatMethod, DENSE_HEAT_LIMIT};
pub use weyl::{counting_function, weyl_constant, weyl_fit, weyl_fit_values, WeylFit};

pub const DEFAULT_SEED: u64 = 0x5eed;
/// Relative gap below which neighbouring eigenvalues form one cluster.
pub const CLUSTER_REL_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// M-orthonormal eigenvectors as columns, in dof numbering.
    pub eigenvectors: DMatrix<f64>,
    /// Leading pairs whose residual met the tolerance.
    pub n_converged: usize,
    /// `‖A x − λ M x‖ / (max(1, |λ|) ‖x‖_M)` per pair.
    pub residuals: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
    pub shift: f64,
    pub space: NodalSpace,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn converged_values(&self) -> &[f64] {
        &self.eigenvalues[..self.n_converged]
    }

    /// Index ranges of eigenvalue clusters (relative gap below `rel_gap`).
    pub fn clusters_with(&self, rel_gap: f64) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let vals = self.converged_values();
        let mut start = 0;
        for i in 1..=vals.len() {
            let split = i == vals.len() || (vals[i] - vals[i - 1]) > rel_gap * vals[i].abs().max(1e-300);
            if split {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    pub fn clusters(&self) -> Vec<Range<usize>> {
        self.clusters_with(CLUSTER_REL_GAP)
    }

    /// Mean eigenvalue of each cluster.
    pub fn cluster_values(&self) -> Vec<f64> {
        self.clusters()
            .into_iter()
            .map(|r| self.eigenvalues[r.clone()].iter().sum::<f64>() / r.len() as f64)
            .collect()
    }

    /// Eigenvector `k` extended to all mesh vertices.
    pub fn mode_on_vertices(&self, k: usize) -> Vec<f64> {
        self.space.extend(self.eigenvectors.column(k).as_slice())
    }

    /// `max |xᵢᵀ M xⱼ − δᵢⱼ|`.
    pub fn orthonormality_error(&self, mass: &SparseSymMatrix) -> f64 {
        let mx = mass.to_csr().mul_dense(&self.eigenvectors);
        let g = self.eigenvectors.tr_mul(&mx);
        let mut e: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                e = e.max((g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        e
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,lambda,residual")?;
        for (k, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            writeln!(w, "{},{:e},{:e}", k + 1, l, r)?;
        }
        Ok(())
    }
}

/// Reads the eigenvalue column of a `k,lambda,residual` CSV.
pub fn read_spectrum_csv(s: &str) -> Result<Vec<f64>> {
    let mut lines = s.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| DrumError::InsufficientData("empty spectrum file".into()))?;
    let col = header
        .split(',')
        .position(|h| h.trim() == "lambda")
        .ok_or_else(|| DrumError::Parse("spectrum CSV lacks a lambda column".into()))?;
    lines
        .map(|l| {
            l.split(',')
                .nth(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| DrumError::Parse(format!("bad spectrum row: {l}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub seed: u64,
    pub block: usize,
    /// Upper bound on the Krylov basis; `None` picks one from `k`.
    pub max_basis: Option<usize>,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            seed: DEFAULT_SEED,
            block: 4,
            max_basis: None,
        }
    }
}

/// The `k` smallest eigenpairs by shift-invert Lanczos.
pub fn solve_eigs(l: &DiscreteLaplacian, k: usize, tol: f64) -> Result<Spectrum> {
    solve_eigs_with(l, k, tol, &EigOptions::default())
}

pub fn solve_eigs_with(l: &DiscreteLaplacian, k: usize, tol: f64, opts: &EigOptions) -> Result<Spectrum> {
    let n = l.n_dof();
    if k == 0 || k > n {
        return Err(DrumError::InvalidArgument(format!("requested {k} eigenpairs of a {n}-dof problem")));
    }
    if !(tol > 0.0) {
        return Err(DrumError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let (factor, shift) = factor_shifted(l)?;
    let a = l.stiffness.to_csr();
    let m = l.mass.to_csr();
    let max_basis = opts.max_basis.unwrap_or((3 * k + 40).max(2 * k + 8 * opts.block));
    let ritz = lanczos::lanczos(&lanczos::LanczosProblem {
        a: &a,
        m: &m,
        factor: &factor,
        k,
        tol,
        seed: opts.seed,
        block: opts.block.max(1),
        max_basis,
    });
    let mut vectors = ritz.vectors;
    normalize_signs(&mut vectors);
    let spectrum = Spectrum {
        eigenvalues: ritz.values,
        eigenvectors: vectors,
        n_converged: ritz.converged.min(k),
        residuals: ritz.residuals,
        tol,
        seed: opts.seed,
        shift,
        space: l.space.clone(),
    };
    if spectrum.n_converged < k {
        return Err(DrumError::SolverNoConvergence {
            requested: k,
            partial: Box::new(spectrum),
        });
    }
    let ortho = spectrum.orthonormality_error(&l.mass);
    if ortho > 1e-8 {
        return Err(DrumError::SolverNoConvergence {
            requested: k,
            partial: Box::new(Spectrum { n_converged: 0, ..spectrum }),
        });
    }
    Ok(spectrum)
}

/// Dense generalized eigensolver: the reference route for small problems.
pub fn solve_eigs_dense(l: &DiscreteLaplacian, k: usize) -> Result<Spectrum> {
    let n = l.n_dof();
    if k == 0 || k > n {
        return Err(DrumError::InvalidArgument(format!("requested {k} eigenpairs of a {n}-dof problem")));
    }
    let a = l.stiffness.to_dense();
    let chol = nalgebra::Cholesky::new(l.mass.to_dense())
        .ok_or_else(|| DrumError::SolverSingular("mass matrix is not positive definite".into()))?;
    let lo = chol.l();
    let linv_a = lo.solve_lower_triangular(&a).expect("nonsingular factor");
    let c = lo
        .solve_lower_triangular(&linv_a.transpose())
        .expect("nonsingular factor");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = lo.transpose();
    let mut vectors = DMatrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let x = lt.solve_upper_triangular(&eig.eigenvectors.column(i).into_owned()).expect("nonsingular");
        vectors.set_column(c, &x);
        values.push(eig.eigenvalues[i]);
    }
    normalize_signs(&mut vectors);
    let residuals = residuals(l, &values, &vectors);
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
        n_converged: k,
        residuals,
        tol: 0.0,
        seed: 0,
        shift: 0.0,
        space: l.space.clone(),
    })
}

fn residuals(l: &DiscreteLaplacian, values: &[f64], vectors: &DMatrix<f64>) -> Vec<f64> {
    let a = l.stiffness.to_csr();
    let m = l.mass.to_csr();
    values
        .iter()
        .enumerate()
        .map(|(k, &lam)| {
            let x = vectors.column(k).into_owned();
            let r = a.mul_dvec(&x) - m.mul_dvec(&x) * lam;
            let xm = x.dot(&m.mul_dvec(&x)).sqrt();
            r.norm() / (lam.abs().max(1.0) * xm)
        })
        .collect()
}

/// Makes the largest-magnitude entry of each column positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let (mut best, mut idx) = (0.0f64, 0);
        for (i, x) in col.iter().enumerate() {
            // ties go to the lowest index so the choice is reproducible
            if x.abs() > best * (1.0 + 1e-12) {
                best = x.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Upper bound on the second Neumann eigenvalue: the Rayleigh quotient of
/// the mean-free coordinate functions.
fn lambda2_estimate(l: &DiscreteLaplacian) -> f64 {
    let mesh = &l.mesh;
    let mut best = f64::INFINITY;
    let ones = vec![1.0; l.n_dof()];
    let m1 = l.mass.mul_vec(&ones);
    let area: f64 = m1.iter().sum();
    for coord in 0..mesh.dim() {
        let x: Vec<f64> = l
            .space
            .nodes
            .iter()
            .map(|&v| if coord == 0 { mesh.vertices()[v].x } else { mesh.vertices()[v].y })
            .collect();
        let mean = x.iter().zip(&m1).map(|(a, b)| a * b).sum::<f64>() / area;
        let xc: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let den = l.mass.quad_form(&xc);
        if den > 0.0 {
            best = best.min(l.stiffness.quad_form(&xc) / den);
        }
    }
    if best.is_finite() && best > 0.0 {
        best
    } else {
        1.0
    }
}

/// Factors `A − σM` with σ just below the bottom of the spectrum.
fn factor_shifted(l: &DiscreteLaplacian) -> Result<(Factor, f64)> {
    let n = l.n_dof() as f64;
    let lam2 = lambda2_estimate(l);
    let mut sigma = match l.kind {
        BcKind::Neumann => -1e-3 * lam2,
        _ => -1e-6 * l.stiffness.norm_one() / n,
    };
    for _ in 0..40 {
        let k = l.stiffness.add_scaled(&l.mass, -sigma)?;
        if let Some(f) = Factor::new(&k) {
            return Ok((f, sigma));
        }
        // negative Robin coefficients can push eigenvalues below zero
        sigma = 2.0 * sigma - lam2;
    }
    Err(DrumError::SolverSingular(format!(
        "A − σM is not positive definite down to σ = {sigma:e}"
    )))
}
