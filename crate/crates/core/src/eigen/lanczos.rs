//! Block shift-invert Lanczos in the M-inner product with full
//! reorthogonalization, followed by Rayleigh-Ritz on the pencil (A, M).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::chol::Factor;
use crate::sparse::CsrMatrix;

pub(crate) struct RitzPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub converged: usize,
    /// Coordinates of the Ritz vectors in the Lanczos basis.
    coefficients: DMatrix<f64>,
}

pub(crate) struct LanczosProblem<'a> {
    pub a: &'a CsrMatrix,
    pub m: &'a CsrMatrix,
    pub factor: &'a Factor,
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub block: usize,
    pub max_basis: usize,
}

struct Basis {
    n: usize,
    v: DMatrix<f64>,
    mv: DMatrix<f64>,
    len: usize,
}

impl Basis {
    /// M-orthogonalizes `w` against the basis (two classical Gram-Schmidt
    /// passes) and appends it. Returns false if `w` lies in the span.
    fn push(&mut self, m: &CsrMatrix, mut w: DVector<f64>) -> bool {
        let mut mw = m.mul_dvec(&w);
        let norm0 = w.dot(&mw).max(0.0).sqrt();
        if norm0 == 0.0 || !norm0.is_finite() {
            return false;
        }
        for _ in 0..2 {
            if self.len > 0 {
                let c = self.mv.columns(0, self.len).tr_mul(&w);
                w -= self.v.columns(0, self.len) * &c;
            }
        }
        mw = m.mul_dvec(&w);
        let norm = w.dot(&mw).max(0.0).sqrt();
        if norm <= 1e-10 * norm0 {
            return false;
        }
        w /= norm;
        mw /= norm;
        self.v.set_column(self.len, &w);
        self.mv.set_column(self.len, &mw);
        self.len += 1;
        true
    }
}

/// Restarts allowed once the basis is full.
const MAX_RESTARTS: usize = 30;

pub(crate) fn lanczos(p: &LanczosProblem) -> RitzPairs {
    let n = p.m.nrows();
    let max_basis = p.max_basis.min(n).max(p.k.min(n));
    let mut basis = Basis {
        n,
        v: DMatrix::zeros(n, max_basis),
        mv: DMatrix::zeros(n, max_basis),
        len: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let random_vec = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    // H = Vᵀ A V, grown column by column
    let mut h = DMatrix::<f64>::zeros(max_basis, max_basis);
    let mut h_done = 0;
    let mut last_block: Vec<usize> = Vec::new();
    let mut next_check = (p.k + p.block).min(max_basis);
    let mut restarts = 0;

    loop {
        while basis.len < max_basis {
            let start = basis.len;
            if last_block.is_empty() {
                // seed block: random vectors pushed through the operator once
                for _ in 0..p.block {
                    if basis.len >= max_basis {
                        break;
                    }
                    let r = random_vec(&mut rng);
                    let w = DVector::from_vec(p.factor.solve(&p.m.mul_vec(r.as_slice())));
                    if !basis.push(p.m, w) {
                        basis.push(p.m, random_vec(&mut rng));
                    }
                }
            } else {
                for &j in &last_block {
                    if basis.len >= max_basis {
                        break;
                    }
                    let w = DVector::from_vec(p.factor.solve(basis.mv.column(j).as_slice()));
                    if !basis.push(p.m, w) {
                        // invariant subspace reached: continue with a fresh direction
                        let mut tries = 0;
                        while tries < 5 && !basis.push(p.m, random_vec(&mut rng)) {
                            tries += 1;
                        }
                    }
                }
            }
            last_block = (start..basis.len).collect();
            if last_block.is_empty() {
                break;
            }
            for j in h_done..basis.len {
                let av = p.a.mul_dvec(&basis.v.column(j).into_owned());
                let col = basis.v.columns(0, j + 1).tr_mul(&av);
                for i in 0..=j {
                    h[(i, j)] = col[i];
                    h[(j, i)] = col[i];
                }
            }
            h_done = basis.len;
            if basis.len >= next_check && basis.len < max_basis {
                let ritz = rayleigh_ritz(p, &basis, &h, p.k);
                if ritz.converged >= p.k.min(basis.len) {
                    return ritz;
                }
                next_check = (basis.len + (basis.len / 5).max(p.block)).min(max_basis);
            }
        }

        let ritz = rayleigh_ritz(p, &basis, &h, p.k);
        let stalled = last_block.is_empty() && basis.len < max_basis;
        if ritz.converged >= p.k.min(basis.len) || basis.len >= n || restarts >= MAX_RESTARTS || stalled {
            return ritz;
        }
        // thick restart: keep the leading Ritz vectors, expand along the unconverged ones
        restarts += 1;
        let keep = (p.k + 2 * p.block).min(max_basis.saturating_sub(p.block)).max(p.k);
        let kept = rayleigh_ritz(p, &basis, &h, keep);
        let mx = basis.mv.columns(0, basis.len) * &kept.coefficients;
        basis.v.columns_mut(0, keep).copy_from(&kept.vectors);
        basis.mv.columns_mut(0, keep).copy_from(&mx);
        basis.len = keep;
        h.fill(0.0);
        for (i, &theta) in kept.values.iter().enumerate() {
            h[(i, i)] = theta;
        }
        h_done = keep;
        let first = ritz.converged.min(keep);
        last_block = (first..(first + p.block).min(keep)).collect();
        next_check = (keep + p.block).min(max_basis);
    }
}

fn rayleigh_ritz(p: &LanczosProblem, basis: &Basis, h: &DMatrix<f64>, count: usize) -> RitzPairs {
    let m = basis.len;
    let hm = h.view((0, 0), (m, m)).into_owned();
    let eig = SymmetricEigen::new(hm);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let k = count.min(m);
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(basis.n, k);
    let mut coefficients = DMatrix::zeros(m, k);
    let mut residuals = Vec::with_capacity(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let theta = eig.eigenvalues[i];
        let y = eig.eigenvectors.column(i);
        let x = basis.v.columns(0, m) * y;
        let mx = basis.mv.columns(0, m) * y;
        let ax = p.a.mul_dvec(&x);
        let r = (ax - mx * theta).norm();
        values.push(theta);
        residuals.push(r / theta.abs().max(1.0));
        vectors.set_column(c, &x);
        coefficients.set_column(c, &y);
    }
    let converged = residuals.iter().take_while(|&&r| r <= p.tol).count();
    RitzPairs {
        values,
        vectors,
        residuals,
        converged,
        coefficients,
    }
}
