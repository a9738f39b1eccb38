//! Small dense matrices and the eigensolver bridge.
//!
//! Per-momentum objects are `2d x 2d` with `d <= 8`, so matrices are plain
//! row-major `Vec`s with explicit loops. Dense eigendecompositions (general
//! complex for the dynamical matrices, self-adjoint for covariance work) are
//! delegated to `faer`, pinned to sequential execution so results do not
//! depend on the host's thread count.

use std::ops::{Index, IndexMut};
use std::sync::Once;

use num_complex::Complex64;

use crate::error::{QbhError, Result};

pub type C64 = Complex64;

static FAER_SEQ: Once = Once::new();

fn faer_seq() {
    FAER_SEQ.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![C64::new(0.0, 0.0); nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        Self::from_fn(nrows, ncols, |i, j| rows[i][j])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn mul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.ncols, rhs.nrows);
        let mut out = CMat::zeros(self.nrows, rhs.ncols);
        for i in 0..self.nrows {
            for l in 0..self.ncols {
                let a = self[(i, l)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..rhs.ncols {
                    out[(i, j)] += a * rhs[(l, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.ncols, v.len());
        let mut out = vec![C64::new(0.0, 0.0); self.nrows];
        for i in 0..self.nrows {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..self.ncols {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn add(&self, rhs: &CMat) -> CMat {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, rhs: &CMat) -> CMat {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn scale(&self, s: C64) -> CMat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = a.conj();
        }
        out
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[C64]) {
        assert_eq!(v.len(), self.nrows);
        for i in 0..self.nrows {
            self[(i, j)] = v[i];
        }
    }

    pub fn re_part(&self) -> RMat {
        RMat::from_fn(self.nrows, self.ncols, |i, j| self[(i, j)].re)
    }

    pub fn im_max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn hermitian_residual(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    pub fn symmetric_residual(&self) -> f64 {
        self.sub(&self.transpose()).max_abs()
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl RMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn mul(&self, rhs: &RMat) -> RMat {
        assert_eq!(self.ncols, rhs.nrows);
        let mut out = RMat::zeros(self.nrows, rhs.ncols);
        for i in 0..self.nrows {
            for l in 0..self.ncols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.ncols {
                    out[(i, j)] += a * rhs[(l, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &RMat) -> RMat {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, rhs: &RMat) -> RMat {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> RMat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn transpose(&self) -> RMat {
        RMat::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn symmetric_residual(&self) -> f64 {
        self.sub(&self.transpose()).max_abs()
    }

    pub fn to_cmat(&self) -> CMat {
        CMat::from_fn(self.nrows, self.ncols, |i, j| C64::new(self[(i, j)], 0.0))
    }

    /// Principal submatrix on the given (sorted) index set.
    pub fn submatrix(&self, idx: &[usize]) -> RMat {
        RMat::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }
}

impl Index<(usize, usize)> for RMat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for RMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

// ---------------------------------------------------------------------------
// vector helpers
// ---------------------------------------------------------------------------

/// Euclidean inner product `<a, b> = sum conj(a_i) b_i`.
pub fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Indefinite inner product `<a, b>_eta = sum eta_i conj(a_i) b_i` for a
/// diagonal metric given by its signs.
pub fn metric_dot(signs: &[f64], a: &[C64], b: &[C64]) -> C64 {
    signs
        .iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(s, (x, y))| *s * x.conj() * y)
        .sum()
}

/// Rotate `v` by a global phase so its largest-magnitude entry is real
/// positive (ties break to the lowest index). Gives deterministic output for
/// golden tests and finite-difference stencils.
pub fn phase_canonicalize(v: &mut [C64]) {
    let mut imax = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        let n = z.norm();
        if n > best + 1e-300 {
            best = n;
            imax = i;
        }
    }
    if best <= 0.0 {
        return;
    }
    let phase = v[imax] / C64::new(best, 0.0);
    let rot = phase.conj();
    for z in v.iter_mut() {
        *z *= rot;
    }
}

// ---------------------------------------------------------------------------
// eigensolver bridge
// ---------------------------------------------------------------------------

fn to_faer_c(a: &CMat) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        faer::c64::new(z.re, z.im)
    })
}

fn to_faer_r(a: &RMat) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigendecomposition of a general complex square matrix. Returns unordered
/// eigenvalues and the matching eigenvector columns (Euclidean-normalized by
/// the backend, no further convention imposed here).
pub fn eig(a: &CMat) -> Result<(Vec<C64>, CMat)> {
    faer_seq();
    assert_eq!(a.nrows(), a.ncols());
    let n = a.nrows();
    let m = to_faer_c(a);
    let e = m
        .eigen()
        .map_err(|_| QbhError::EigenFailure { k: Vec::new() })?;
    let values = (0..n)
        .map(|i| {
            let z = e.S()[i];
            C64::new(z.re, z.im)
        })
        .collect();
    let vectors = CMat::from_fn(n, n, |i, j| {
        let z = e.U()[(i, j)];
        C64::new(z.re, z.im)
    });
    Ok((values, vectors))
}

/// Eigendecomposition of a real symmetric matrix; eigenvalues ascending.
pub fn eigh_real(a: &RMat) -> (Vec<f64>, RMat) {
    faer_seq();
    assert_eq!(a.nrows(), a.ncols());
    let n = a.nrows();
    let e = to_faer_r(a)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("self-adjoint eigendecomposition of a real symmetric matrix");
    let values: Vec<f64> = (0..n).map(|i| e.S()[i]).collect();
    let vectors = RMat::from_fn(n, n, |i, j| e.U()[(i, j)]);
    (values, vectors)
}

/// Eigenvalues of a complex Hermitian matrix, ascending.
pub fn eigh_complex_values(a: &CMat) -> Vec<f64> {
    faer_seq();
    assert_eq!(a.nrows(), a.ncols());
    let n = a.nrows();
    let e = to_faer_c(a)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("self-adjoint eigendecomposition of a Hermitian matrix");
    (0..n).map(|i| e.S()[i].re).collect()
}

// ---------------------------------------------------------------------------
// metric-orthonormal eigenbases
// ---------------------------------------------------------------------------

/// Normalize an eigenbasis of a pseudo-Hermitian matrix against a diagonal
/// indefinite metric: each vector is scaled to `<v, v>_eta = +-1` and tagged
/// with that sign, and vectors inside a degenerate same-sign cluster are
/// Gram-Schmidt orthogonalized in the metric. Vectors whose metric norm is
/// below `rigidity_floor * ||v||^2` are left Euclidean-normalized with sign 0
/// (coalescing eigenvectors at an exceptional point).
///
/// `values` must be real up to `imag_tol` for the signs to be meaningful;
/// complex-paired vectors get sign 0 as well.
pub fn normalize_metric_basis(
    values: &[C64],
    vectors: &mut CMat,
    signs: &[f64],
    imag_tol: f64,
    cluster_tol: f64,
    rigidity_floor: f64,
) -> Vec<i8> {
    let n = values.len();
    let mut sig = vec![0i8; n];

    // Euclidean-normalize everything first.
    for j in 0..n {
        let mut v = vectors.col(j);
        let nrm = norm_sqr(&v).sqrt();
        if nrm > 0.0 {
            for z in v.iter_mut() {
                *z /= nrm;
            }
        }
        vectors.set_col(j, &v);
    }

    // Cluster indices by eigenvalue (real spectrum assumed for clustering).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .re
            .partial_cmp(&values[b].re)
            .unwrap()
            .then(values[a].im.partial_cmp(&values[b].im).unwrap())
    });

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &j in &order {
        match clusters.last_mut() {
            Some(c) if (values[*c.last().unwrap()] - values[j]).norm() <= cluster_tol => c.push(j),
            _ => clusters.push(vec![j]),
        }
    }

    for cluster in &clusters {
        // Inside a cluster, orthogonalize in the metric against the members
        // already accepted, separately per sign.
        let mut done: Vec<usize> = Vec::new();
        for &j in cluster {
            if values[j].im.abs() > imag_tol {
                continue; // complex pair: sign stays 0
            }
            let mut v = vectors.col(j);
            for &i in &done {
                let si = sig[i] as f64;
                let w = vectors.col(i);
                let c = metric_dot(signs, &w, &v) * si;
                for (z, wz) in v.iter_mut().zip(w.iter()) {
                    *z -= c * wz;
                }
            }
            let nv = norm_sqr(&v);
            if nv == 0.0 {
                continue;
            }
            let s = metric_dot(signs, &v, &v).re;
            if s.abs() < rigidity_floor * nv {
                // not normalizable in the metric
                let nrm = nv.sqrt();
                for z in v.iter_mut() {
                    *z /= nrm;
                }
                phase_canonicalize(&mut v);
                vectors.set_col(j, &v);
                continue;
            }
            let scale = s.abs().sqrt();
            for z in v.iter_mut() {
                *z /= scale;
            }
            phase_canonicalize(&mut v);
            vectors.set_col(j, &v);
            sig[j] = if s > 0.0 { 1 } else { -1 };
            done.push(j);
        }
    }

    sig
}
