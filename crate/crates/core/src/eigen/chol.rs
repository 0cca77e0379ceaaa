//! Cholesky factorizations of the shifted operator `A − σM`.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DVector, Dyn};

use crate::sparse::SparseSymMatrix;

/// Systems up to this size are factored densely.
pub const DENSE_FACTOR_LIMIT: usize = 2000;

pub enum Factor {
    Dense(Cholesky<f64, Dyn>),
    Envelope(EnvelopeCholesky),
}

impl Factor {
    /// `None` if the matrix is not numerically positive definite.
    pub fn new(k: &SparseSymMatrix) -> Option<Factor> {
        if k.dim() <= DENSE_FACTOR_LIMIT {
            let c = Cholesky::new(k.to_dense())?;
            let d = c.l_dirty().diagonal();
            let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
            // reject near-singular factors that would blow up shift-invert
            if !(lo > 1e-7 * hi) {
                return None;
            }
            Some(Factor::Dense(c))
        } else {
            EnvelopeCholesky::new(k).map(Factor::Envelope)
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factor::Dense(c) => c.solve(&DVector::from_column_slice(b)).as_slice().to_vec(),
            Factor::Envelope(e) => e.solve(b),
        }
    }
}

fn adjacency(k: &SparseSymMatrix) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); k.dim()];
    for &(i, j, _) in k.entries() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// BFS from `seed`; returns the lowest-degree vertex of the last level and
/// the number of levels.
fn bfs_last_level(seed: usize, adj: &[Vec<usize>], seen: &mut [bool]) -> (usize, usize) {
    let mut level = vec![seed];
    let mut mark = vec![seed];
    seen[seed] = true;
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &level {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    mark.push(w);
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
        depth += 1;
    }
    for v in mark {
        seen[v] = false;
    }
    let best = *level.iter().min_by_key(|&&v| (adj[v].len(), v)).unwrap();
    (best, depth)
}

/// Reverse Cuthill-McKee ordering of the sparsity graph, component by component.
pub fn rcm_ordering(k: &SparseSymMatrix) -> Vec<usize> {
    let n = k.dim();
    let adj = adjacency(k);
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut scratch = vec![false; n];
    for seed in 0..n {
        if seen[seed] {
            continue;
        }
        // a vertex on the last BFS level approximates a peripheral one
        let (mut start, mut depth) = bfs_last_level(seed, &adj, &mut scratch);
        for _ in 0..3 {
            let (s2, d2) = bfs_last_level(start, &adj, &mut scratch);
            if d2 <= depth {
                break;
            }
            start = s2;
            depth = d2;
        }
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            nb.sort_by_key(|&w| (adj[w].len(), w));
            for w in nb {
                seen[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Variable-band (skyline) Cholesky `P K Pᵀ = L Lᵀ` with RCM ordering.
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    /// first column of row `i` inside the envelope
    first: Vec<usize>,
    /// row `i` of L occupies `data[start[i]..start[i + 1]]`, columns `first[i]..=i`
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn new(k: &SparseSymMatrix) -> Option<EnvelopeCholesky> {
        let n = k.dim();
        let perm = rcm_ordering(k);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in k.entries() {
            let (a, b) = (inv[i], inv[j]);
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            first[r] = first[r].min(c);
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for &(i, j, v) in k.entries() {
            let (a, b) = (inv[i], inv[j]);
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            data[start[r] + c - first[r]] = v;
        }
        let mut max_diag: f64 = 0.0;
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = &data[start[i] + lo - fi..start[i] + j - fi];
                let rj = &data[start[j] + lo - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                if j == i {
                    if !(s > 0.0) {
                        return None;
                    }
                    let d = s.sqrt();
                    max_diag = max_diag.max(d);
                    if d <= 1e-7 * max_diag {
                        return None;
                    }
                    data[start[i] + i - fi] = d;
                } else {
                    data[start[i] + j - fi] = s / data[start[j] + j - fj];
                }
            }
        }
        Some(EnvelopeCholesky { perm, first, start, data })
    }

    /// Stored entries of the factor.
    pub fn profile(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (c, a) in (fi..i).zip(&row[..i - fi]) {
                y[c] -= a * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_laplacian, BcKind};
    use crate::mesh::mesh_rectangle;
    use std::sync::Arc;

    #[test]
    fn envelope_solves_like_dense() {
        let m = Arc::new(mesh_rectangle(0.0, 0.0, 2.0, 1.0, 3).unwrap());
        let l = build_laplacian(m, BcKind::Dirichlet, None).unwrap();
        let k = l.stiffness.add_scaled(&l.mass, 0.5).unwrap();
        let e = EnvelopeCholesky::new(&k).unwrap();
        let b: Vec<f64> = (0..k.dim()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let x = e.solve(&b);
        let r = k.mul_vec(&x);
        let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
        assert!(e.profile() < k.dim() * k.dim() / 4);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let m = Arc::new(mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap());
        let l = build_laplacian(m, BcKind::Neumann, None).unwrap();
        let mut p = rcm_ordering(&l.stiffness);
        p.sort_unstable();
        assert_eq!(p, (0..l.n_dof()).collect::<Vec<_>>());
    }

    #[test]
    fn indefinite_is_rejected() {
        let k = SparseSymMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(Factor::new(&k).is_none());
        assert!(EnvelopeCholesky::new(&k).is_none());
    }
}
