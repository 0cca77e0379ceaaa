//! Coordinate and compressed-row sparse storage, plus Matrix Market I/O.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{DrumError, Result};

/// Symmetric matrix stored as its upper triangle (`row <= col`), sorted and
/// merged. Duplicate triplets are summed in input order, so the result is
/// bit-reproducible for a fixed assembly order. Exact zeros are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSymMatrix {
    pub fn zeros(n: usize) -> Self {
        SparseSymMatrix { n, entries: Vec::new() }
    }

    /// Builds from arbitrary triplets; lower-triangle entries are mirrored.
    pub fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        if let Some(&(i, j, _)) = t.iter().find(|&&(_, j, _)| j >= n) {
            return Err(DrumError::InvalidArgument(format!("entry ({i}, {j}) outside {n}x{n}")));
        }
        if t.iter().any(|e| !e.2.is_finite()) {
            return Err(DrumError::InvalidArgument("non-finite matrix entry".into()));
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => entries.push((i, j, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        Ok(SparseSymMatrix { n, entries })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Upper-triangle entries in (row, col) order.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map(|k| self.entries[k].2)
            .unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            if i == j {
                d[i] = v;
            }
        }
        d
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &SparseSymMatrix, s: f64) -> Result<SparseSymMatrix> {
        if self.n != other.n {
            return Err(DrumError::InvalidArgument("dimension mismatch in matrix sum".into()));
        }
        let mut t = self.entries.clone();
        t.extend(other.entries.iter().map(|&(i, j, v)| (i, j, s * v)));
        SparseSymMatrix::from_triplets(self.n, t)
    }

    /// Principal submatrix on `keep` (ascending), renumbered 0..keep.len().
    pub fn restrict(&self, keep: &[usize]) -> SparseSymMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let entries = self
            .entries
            .iter()
            .filter(|e| map[e.0] != usize::MAX && map[e.1] != usize::MAX)
            .map(|&(i, j, v)| {
                let (a, b) = (map[i], map[j]);
                if a <= b {
                    (a, b, v)
                } else {
                    (b, a, v)
                }
            })
            .collect::<Vec<_>>();
        // renumbering preserves order when keep is ascending
        SparseSymMatrix { n: keep.len(), entries }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * x[i] * x[i] } else { 2.0 * v * x[i] * x[j] })
            .sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Full symmetric pattern in CSR form.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, v) in &self.entries {
            t.push((i, j, v));
            if i != j {
                t.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.n, self.n, t)
    }

    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            col[j] += v.abs();
            if i != j {
                col[i] += v.abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.entries.len())?;
        // Matrix Market symmetric storage is the lower triangle
        let mut lower: Vec<_> = self.entries.iter().map(|&(i, j, v)| (j, i, v)).collect();
        lower.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        for (i, j, v) in lower {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// General sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicates in input order and drops exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        let mut indptr = vec![0usize; nrows + 1];
        for &(i, _, _) in &merged {
            indptr[i + 1] += 1;
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices: merged.iter().map(|e| e.1).collect(),
            data: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        CsrMatrix::from_triplets(m.nrows(), m.ncols(), t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn mul_dvec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }

    /// `self * b` for a dense `b`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for k in 0..b.ncols() {
                out[(i, k)] = c.iter().zip(v).map(|(&j, &a)| a * b[(j, k)]).sum();
            }
        }
        out
    }

    /// Sparse product `self * b`.
    pub fn mul_csr(&self, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, b.nrows);
        let mut acc = vec![0.0; b.ncols];
        let mut hit = vec![false; b.ncols];
        let mut cols = Vec::new();
        let mut t = Vec::new();
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&k, &a) in c.iter().zip(v) {
                let (bc, bv) = b.row(k);
                for (&j, &x) in bc.iter().zip(bv) {
                    if !hit[j] {
                        hit[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * x;
                }
            }
            for &j in &cols {
                t.push((i, j, acc[j]));
                acc[j] = 0.0;
                hit[j] = false;
            }
            cols.clear();
        }
        CsrMatrix::from_triplets(self.nrows, b.ncols, t)
    }

    /// `self − b`.
    pub fn sub(&self, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (b.nrows, b.ncols));
        let t = self.triplets().chain(b.triplets().map(|(i, j, v)| (i, j, -v))).collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)).collect())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// Parsed Matrix Market content.
#[derive(Debug, Clone)]
pub enum MarketMatrix {
    Coordinate(CsrMatrix),
    Array(DMatrix<f64>),
}

impl MarketMatrix {
    pub fn into_dense(self) -> DMatrix<f64> {
        match self {
            MarketMatrix::Coordinate(c) => c.to_dense(),
            MarketMatrix::Array(a) => a,
        }
    }
}

/// Reads `coordinate` (general or symmetric) and `array` real matrices.
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<MarketMatrix> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| DrumError::Parse("empty Matrix Market file".into()))??;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(DrumError::Parse(format!("bad Matrix Market header: {header}")));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(DrumError::Parse(format!("unsupported field type {}", h[3])));
    }
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(DrumError::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut body = lines.filter(|l| match l {
        Ok(s) => !s.trim_start().starts_with('%') && !s.trim().is_empty(),
        Err(_) => true,
    });
    let size = body.next().ok_or_else(|| DrumError::Parse("missing size line".into()))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| DrumError::Parse(format!("bad size line: {size}"))))
        .collect::<Result<_>>()?;
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| DrumError::Parse(format!("bad number {s}"))) };
    match h[2].as_str() {
        "coordinate" => {
            let [nr, nc, nnz] = dims[..] else {
                return Err(DrumError::Parse("coordinate size line needs 3 fields".into()));
            };
            let mut t = Vec::with_capacity(nnz);
            for line in body.take(nnz) {
                let line = line?;
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() < 3 {
                    return Err(DrumError::Parse(format!("bad entry line: {line}")));
                }
                let i: usize = f[0].parse().map_err(|_| DrumError::Parse(line.clone()))?;
                let j: usize = f[1].parse().map_err(|_| DrumError::Parse(line.clone()))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(DrumError::Parse(format!("index out of range: {line}")));
                }
                let v = num(f[2])?;
                t.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    t.push((j - 1, i - 1, v));
                }
            }
            if t.len() < nnz {
                return Err(DrumError::Parse("fewer entries than declared".into()));
            }
            Ok(MarketMatrix::Coordinate(CsrMatrix::from_triplets(nr, nc, t)))
        }
        "array" => {
            let [nr, nc] = dims[..] else {
                return Err(DrumError::Parse("array size line needs 2 fields".into()));
            };
            let vals: Vec<f64> = body
                .take(nr * nc)
                .map(|l| l.map_err(DrumError::from).and_then(|l| num(l.trim())))
                .collect::<Result<_>>()?;
            if vals.len() != nr * nc {
                return Err(DrumError::Parse("array has too few values".into()));
            }
            // column-major, as in the format
            Ok(MarketMatrix::Array(DMatrix::from_column_slice(nr, nc, &vals)))
        }
        other => Err(DrumError::Parse(format!("unsupported format {other}"))),
    }
}

pub fn write_dense_matrix_market<W: Write>(m: &DMatrix<f64>, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}
