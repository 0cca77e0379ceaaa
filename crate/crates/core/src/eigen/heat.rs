//! Heat semigroup `e^{−t M⁻¹A}` on nodal vectors.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{solve_eigs, Spectrum};
use crate::error::{DrumError, Result};
use crate::fem::DiscreteLaplacian;

/// Problems up to this many dofs use the dense matrix exponential.
pub const DENSE_HEAT_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatMethod {
    DenseExpm,
    Truncated { modes: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatApply {
    pub values: Vec<f64>,
    pub method: HeatMethod,
    /// Bound on the M-norm of the discarded part (0 for the dense route).
    pub remainder_bound: f64,
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm1 = a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > THETA_13 { (norm1 / THETA_13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    let mut r = (&v - &u).lu().solve(&(&v + &u)).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Dense `e^{−t M⁻¹A}` through the symmetric form `L⁻¹ A L⁻ᵀ` with `M = L Lᵀ`.
pub fn heat_semigroup_dense(l: &DiscreteLaplacian, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(DrumError::InvalidArgument(format!("heat time must be nonnegative, got {t}")));
    }
    let chol = Cholesky::new(l.mass.to_dense())
        .ok_or_else(|| DrumError::SolverSingular("mass matrix is not positive definite".into()))?;
    let lo = chol.l();
    let a = l.stiffness.to_dense();
    let x = lo.solve_lower_triangular(&a).expect("nonsingular");
    let c = lo.solve_lower_triangular(&x.transpose()).expect("nonsingular");
    let c = (&c + c.transpose()) * (-0.5 * t);
    let e = expm(&c);
    // e^{−tM⁻¹A} = L⁻ᵀ e^{−tC} Lᵀ
    let right = e * lo.transpose();
    Ok(lo.transpose().solve_upper_triangular(&right).expect("nonsingular"))
}

/// Applies the heat semigroup to dof values `v`: densely for small problems,
/// otherwise through the lowest 50 eigenpairs with a remainder bound.
pub fn heat_apply(l: &DiscreteLaplacian, t: f64, v: &[f64]) -> Result<HeatApply> {
    if !(t >= 0.0) {
        return Err(DrumError::InvalidArgument(format!("heat time must be nonnegative, got {t}")));
    }
    if v.len() != l.n_dof() {
        return Err(DrumError::InvalidArgument("vector length differs from dof count".into()));
    }
    if l.n_dof() <= DENSE_HEAT_LIMIT {
        let s = heat_semigroup_dense(l, t)?;
        let out = s * DVector::from_column_slice(v);
        return Ok(HeatApply {
            values: out.as_slice().to_vec(),
            method: HeatMethod::DenseExpm,
            remainder_bound: 0.0,
        });
    }
    let s = solve_eigs(l, 50.min(l.n_dof()), 1e-9)?;
    heat_apply_spectral(&s, l, t, v)
}

/// Truncated eigen-expansion `Σ e^{−λₖt} ⟨v, ψₖ⟩_M ψₖ`. The discarded
/// component decays at least like `e^{−λ_K t}` with λ_K the largest computed
/// eigenvalue; `remainder_bound` is that factor times its M-norm.
pub fn heat_apply_spectral(s: &Spectrum, l: &DiscreteLaplacian, t: f64, v: &[f64]) -> Result<HeatApply> {
    if !(t >= 0.0) {
        return Err(DrumError::InvalidArgument(format!("heat time must be nonnegative, got {t}")));
    }
    let m = l.mass.to_csr();
    let vv = DVector::from_column_slice(v);
    let phi = s.eigenvectors.columns(0, s.n_converged);
    let coeff = phi.tr_mul(&m.mul_dvec(&vv));
    let decayed = DVector::from_fn(coeff.len(), |k, _| coeff[k] * (-s.eigenvalues[k] * t).exp());
    let projected = &phi * &coeff;
    let rest = &vv - projected;
    let rest_norm = rest.dot(&m.mul_dvec(&rest)).max(0.0).sqrt();
    let lam_max = s.eigenvalues[..s.n_converged].last().copied().unwrap_or(0.0);
    let out = phi * decayed;
    Ok(HeatApply {
        values: out.as_slice().to_vec(),
        method: HeatMethod::Truncated { modes: s.n_converged },
        remainder_bound: rest_norm * (-lam_max * t).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_eigs_dense;
    use crate::fem::{build_laplacian, BcKind};
    use crate::mesh::mesh_rectangle;
    use std::sync::Arc;

    #[test]
    fn expm_of_rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 3.0, 0.0]);
        let e = expm(&a);
        let want = DMatrix::from_row_slice(2, 2, &[3f64.cos(), -3f64.sin(), 3f64.sin(), 3f64.cos()]);
        assert!((e - want).abs().max() < 1e-13);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-40.0, 0.5, 2.0]));
        let e = expm(&d);
        for (i, x) in [-40.0f64, 0.5, 2.0].iter().enumerate() {
            assert!((e[(i, i)] - x.exp()).abs() <= 1e-13 * x.exp().max(1.0));
        }
    }

    #[test]
    fn semigroup_identities() {
        let m = Arc::new(mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap());
        let l = build_laplacian(m.clone(), BcKind::Dirichlet, None).unwrap();
        let v: Vec<f64> = (0..l.n_dof()).map(|i| (i as f64).cos()).collect();
        assert_eq!(heat_apply(&l, 0.0, &v).unwrap().values.len(), v.len());
        let h0 = heat_apply(&l, 0.0, &v).unwrap().values;
        assert!(h0.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12));
        let s = solve_eigs_dense(&l, 1).unwrap();
        let psi = s.eigenvectors.column(0).as_slice().to_vec();
        let out = heat_apply(&l, 0.1, &psi).unwrap().values;
        let f = (-0.1 * s.eigenvalues[0]).exp();
        assert!(out.iter().zip(&psi).all(|(a, b)| (a - f * b).abs() < 1e-10));
        assert!(matches!(heat_apply(&l, -1.0, &v), Err(DrumError::InvalidArgument(_))));

        let n = build_laplacian(m, BcKind::Neumann, None).unwrap();
        let ones = vec![1.0; n.n_dof()];
        for t in [0.01, 1.0, 10.0] {
            let out = heat_apply(&n, t, &ones).unwrap().values;
            assert!(out.iter().all(|x| (x - 1.0).abs() < 1e-10));
        }
    }
}
