//! Dense and banded linear algebra used by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;
/// Bound on `|x'x v - rq v| / rq` at the unit iterate; with a small top gap
/// the Rayleigh-quotient change drops below `POWER_TOL` too early.
const POWER_RESIDUAL_TOL: f64 = 1e-9;

/// Largest singular value of `x`, by power iteration on `x'x`.
///
/// The start vector is the normalized all-ones vector. If the iterate
/// collapses to zero (start vector in the null space) the iteration restarts
/// from the coordinate vector of the column with the largest norm, which
/// cannot be annihilated unless `x` is zero.
pub fn spectral_norm(x: &DMatrix<f64>) -> f64 {
    let n = x.ncols();
    if n == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let scale = x.norm_squared();
    if scale == 0.0 {
        return 0.0;
    }
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    if let Some(lambda) = power_gram(x, ones, scale) {
        return lambda.sqrt();
    }
    let best = x
        .column_iter()
        .enumerate()
        .fold((0, -1.0), |acc, (j, c)| {
            let v = c.norm_squared();
            if v > acc.1 {
                (j, v)
            } else {
                acc
            }
        })
        .0;
    let mut start = DVector::zeros(n);
    start[best] = 1.0;
    power_gram(x, start, scale).unwrap_or(0.0).sqrt()
}

/// Power iteration on `x'x`; `None` when the iterate stagnates at zero.
fn power_gram(x: &DMatrix<f64>, mut v: DVector<f64>, scale: f64) -> Option<f64> {
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = x.tr_mul(&(x * &v));
        let rq = v.dot(&w);
        let norm = w.norm();
        if norm <= 1e-300 || rq <= f64::EPSILON * f64::EPSILON * scale {
            return None;
        }
        let residual = (&w - &v * rq).norm();
        v = w / norm;
        let done = (rq - lambda).abs() <= POWER_TOL * rq && residual <= POWER_RESIDUAL_TOL * rq;
        lambda = rq;
        if done {
            break;
        }
    }
    // Rayleigh quotient at the final normalized iterate.
    Some((x * &v).norm_squared())
}

/// Symmetric matrix stored by its lower band: `band[i][d] = a[i, i - d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d > self.bandwidth {
            0.0
        } else {
            self.data[i * (self.bandwidth + 1) + d]
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror). Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        assert!(d <= self.bandwidth, "entry ({i}, {j}) outside band");
        self.data[i * (self.bandwidth + 1) + d] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            let hi = (i + self.bandwidth + 1).min(self.n);
            y[i] = (lo..hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        y
    }
}

/// Cholesky factor `L` of a banded SPD matrix, same band layout as the input.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: SymBand,
    condition_estimate: f64,
}

/// Largest acceptable condition estimate before a system is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

impl BandedCholesky {
    /// Factors `a = L L'` in `O(n * bandwidth^2)`.
    pub fn factor(a: &SymBand) -> Result<Self> {
        let n = a.n;
        let bw = a.bandwidth;
        let w = bw + 1;
        let mut l = SymBand::zeros(n, bw);
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut s = a.get(j, j);
            for p in lo..j {
                let v = l.data[j * w + (j - p)];
                s -= v * v;
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::SingularSystem(format!(
                    "non-positive pivot {s:e} at row {j} of a {n}x{n} band-{bw} system"
                )));
            }
            let d = s.sqrt();
            l.data[j * w] = d;
            dmin = dmin.min(d);
            dmax = dmax.max(d);
            for i in (j + 1)..(j + w).min(n) {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = a.get(i, j);
                for p in lo_i..j {
                    s -= l.data[i * w + (i - p)] * l.data[j * w + (j - p)];
                }
                l.data[i * w + (i - j)] = s / d;
            }
        }
        let condition_estimate = (dmax / dmin).powi(2);
        if condition_estimate > MAX_CONDITION {
            return Err(Error::SingularSystem(format!(
                "condition estimate {condition_estimate:e} of a {n}x{n} band-{bw} system exceeds {MAX_CONDITION:e}"
            )));
        }
        Ok(Self {
            factor: l,
            condition_estimate,
        })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = &self.factor;
        let (n, bw, w) = (l.n, l.bandwidth, l.bandwidth + 1);
        let mut y = b.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for p in lo..i {
                s -= l.data[i * w + (i - p)] * y[p];
            }
            y[i] = s / l.data[i * w];
        }
        for i in (0..n).rev() {
            let hi = (i + w).min(n);
            let mut s = y[i];
            for p in (i + 1)..hi {
                s -= l.data[p * w + (p - i)] * y[p];
            }
            y[i] = s / l.data[i * w];
        }
        y
    }
}

/// Flips each column so its first entry with magnitude above `tol` is positive.
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let tol = col.amax() * 1e-12;
        if let Some(first) = col.iter().find(|v| v.abs() > tol).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending,
/// eigenvectors with deterministic sign.
pub fn sym_eigen_desc(a: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_signs(&mut vectors);
    (values, vectors)
}

/// Full eigendecomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eigen_desc(a: DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

const SUBSPACE_MIN_DIM: usize = 48;
const SUBSPACE_OVERSAMPLE: usize = 6;
const SUBSPACE_MAX_ITER: usize = 400;
const SUBSPACE_TOL: f64 = 1e-13;

/// Leading `q` eigenpairs of a Hermitian positive semidefinite matrix.
///
/// Small matrices go straight to the dense solver. Larger ones use block
/// subspace iteration with Rayleigh-Ritz, optionally warm-started from
/// `warm` (e.g. the eigenvectors at a neighbouring frequency); if the
/// residuals do not drop below tolerance within the iteration cap the dense
/// solver is used instead. The result is a deterministic function of the
/// inputs.
pub fn hermitian_top_eigen(
    a: &DMatrix<Complex64>,
    q: usize,
    warm: Option<&DMatrix<Complex64>>,
) -> (DVector<f64>, DMatrix<Complex64>) {
    let n = a.nrows();
    let q = q.min(n);
    let block = q + SUBSPACE_OVERSAMPLE;
    if n < SUBSPACE_MIN_DIM || block * 4 > n {
        let (vals, vecs) = hermitian_eigen_desc(a.clone());
        return (vals.rows(0, q).into_owned(), vecs.columns(0, q).into_owned());
    }
    if let Some(found) = subspace_iteration(a, q, block, warm) {
        return found;
    }
    let (vals, vecs) = hermitian_eigen_desc(a.clone());
    (vals.rows(0, q).into_owned(), vecs.columns(0, q).into_owned())
}

fn subspace_iteration(
    a: &DMatrix<Complex64>,
    q: usize,
    block: usize,
    warm: Option<&DMatrix<Complex64>>,
) -> Option<(DVector<f64>, DMatrix<Complex64>)> {
    let n = a.nrows();
    let mut start = seed_block(n, block);
    if let Some(w) = warm.filter(|w| w.nrows() == n) {
        for c in 0..w.ncols().min(block) {
            start.set_column(c, &w.column(c));
        }
    }
    if a.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return None;
    }
    let split = SplitComplex::new(a);
    let mut av = split.mul(&start);
    for _ in 0..SUBSPACE_MAX_ITER {
        let basis = av.qr().q();
        let ab = split.mul(&basis);
        let h = basis.adjoint() * &ab;
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let (vals, y) = hermitian_eigen_desc(h);
        let v = &basis * &y;
        av = &ab * &y;
        let top = vals[0].abs().max(f64::MIN_POSITIVE);
        let converged = (0..q).all(|l| {
            let resid = av.column(l) - v.column(l) * Complex64::new(vals[l], 0.0);
            resid.norm() <= SUBSPACE_TOL * top
        });
        if converged {
            return Some((vals.rows(0, q).into_owned(), v.columns(0, q).into_owned()));
        }
    }
    None
}

/// A complex matrix held as separate real and imaginary parts, so products
/// run on the real GEMM kernel.
struct SplitComplex {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl SplitComplex {
    fn new(a: &DMatrix<Complex64>) -> Self {
        Self {
            re: a.map(|z| z.re),
            im: a.map(|z| z.im),
        }
    }

    fn mul(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let (xr, xi) = (x.map(|z| z.re), x.map(|z| z.im));
        let re = &self.re * &xr - &self.im * &xi;
        let im = &self.re * &xi + &self.im * &xr;
        re.zip_map(&im, Complex64::new)
    }
}

/// Deterministic dense start block from a fixed splitmix64 stream.
fn seed_block(n: usize, block: usize) -> DMatrix<Complex64> {
    let mut state = 0x5eed_0f_b10c_u64;
    let mut next = || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let z = crate::rng::splitmix64_mix(state);
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    DMatrix::from_fn(n, block, |_, _| Complex64::new(next(), next()))
}

/// Symmetric-definite generalized eigenproblem `a v = mu b v`.
///
/// Reduces through the Cholesky factor of `b` to a standard symmetric
/// problem. Eigenvalues are descending; eigenvectors are `b`-orthonormal
/// with the first nonzero coordinate positive.
pub fn generalized_sym_eigen(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let l = cholesky_lower(b)?;
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let (vals, u) = sym_eigen_desc(c);
    let mut v = l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
    fix_signs(&mut v);
    Ok((vals, v))
}

/// Leading `r` generalized eigenpairs of `(f f', b)` for a tall factor `f`.
///
/// Same reduction as [`generalized_sym_eigen`], but the reduced matrix
/// `W W'` with `W = L^{-1} f` is diagonalized through the small `W'W`.
/// Returns the `r` leading eigenvalues, `b`-orthonormal eigenvectors, and
/// the full list of nonzero-rank eigenvalues for diagnostics.
pub fn generalized_lowrank_eigen(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: usize,
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    let m = b.nrows();
    if f.nrows() != m || r > m {
        return Err(Error::Eigen(format!(
            "factor is {}x{}, pencil is {m}x{m}, requested {r} pairs",
            f.nrows(),
            f.ncols()
        )));
    }
    let l = cholesky_lower(b)?;
    let w = l
        .solve_lower_triangular(f)
        .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
    let (vals, u, all_vals) = lowrank_reduced_eigen(&w, r);
    let mut v = l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
    fix_signs(&mut v);
    Ok((vals, v, all_vals))
}

/// [`generalized_lowrank_eigen`] for a diagonal right-hand matrix given by
/// its positive diagonal `d`; nothing of size `m x m` is formed.
pub fn generalized_lowrank_eigen_diag(
    f: &DMatrix<f64>,
    d: &DVector<f64>,
    r: usize,
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    let m = d.len();
    if f.nrows() != m || r > m {
        return Err(Error::Eigen(format!(
            "factor is {}x{}, pencil is {m}x{m}, requested {r} pairs",
            f.nrows(),
            f.ncols()
        )));
    }
    if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Eigen("right-hand matrix of the pencil is not positive definite".into()));
    }
    let inv_sqrt = d.map(|v| 1.0 / v.sqrt());
    let mut w = f.clone();
    for (mut row, s) in w.row_iter_mut().zip(inv_sqrt.iter()) {
        row *= *s;
    }
    let (vals, mut v, all_vals) = lowrank_reduced_eigen(&w, r);
    for (mut row, s) in v.row_iter_mut().zip(inv_sqrt.iter()) {
        row *= *s;
    }
    fix_signs(&mut v);
    Ok((vals, v, all_vals))
}

/// Leading `r` eigenpairs of `w w'` through the small `w'w`, completing
/// zero eigenvalues with an orthonormal basis of the complement.
fn lowrank_reduced_eigen(w: &DMatrix<f64>, r: usize) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let m = w.nrows();
    let small = w.tr_mul(&w);
    let (all_vals, s) = sym_eigen_desc((&small + small.transpose()) * 0.5);
    let p = all_vals.len();
    let top = all_vals.iter().copied().fold(0.0, f64::max);
    let mut u = DMatrix::zeros(m, r);
    let mut vals = DVector::zeros(r);
    let mut filled = 0;
    for l_idx in 0..p.min(r) {
        let mu = all_vals[l_idx];
        if mu <= top * 1e-14 {
            break;
        }
        let col = w * s.column(l_idx) / mu.sqrt();
        u.set_column(l_idx, &col);
        vals[l_idx] = mu;
        filled += 1;
    }
    if filled < r {
        // Eigenvalue zero: complete with an orthonormal basis of the
        // complement of the computed range, Gram-Schmidt on coordinate vectors.
        let mut e = 0;
        while filled < r && e < m {
            let mut cand = DVector::zeros(m);
            cand[e] = 1.0;
            for c in 0..filled {
                let proj = u.column(c).dot(&cand);
                cand -= u.column(c) * proj;
            }
            for c in 0..filled {
                let proj = u.column(c).dot(&cand);
                cand -= u.column(c) * proj;
            }
            let nrm = cand.norm();
            if nrm > 1e-8 {
                u.set_column(filled, &(cand / nrm));
                filled += 1;
            }
            e += 1;
        }
    }
    (vals, u, all_vals)
}

fn cholesky_lower(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(b.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::Eigen("right-hand matrix of the pencil is not positive definite".into()))
}
