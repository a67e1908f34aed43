//! Frequency-domain estimate of the common part.
//!
//! The pipeline estimates the spectral density matrix with a Bartlett lag
//! window, keeps the `q` leading dynamic eigenpairs at every frequency,
//! integrates the resulting common and idiosyncratic spectra back to lag-zero
//! covariances, and projects the data on the `r` leading generalized
//! eigenvectors of the pair (common covariance, diagonal of the idiosyncratic
//! covariance).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{generalized_lowrank_eigen_diag, hermitian_top_eigen, sym_eigen_desc};
use crate::panel::{autocovariance_centered, center, PanelMatrix};
use crate::sw::{CommonPartEstimate, Method};

/// Relative ridge added to the idiosyncratic variances before the
/// generalized eigensolve.
pub const IDIO_RIDGE: f64 = 1e-8;

/// Spectral density estimates on the grid `theta_h = 2 pi h / (2M+1)`,
/// `h = -M, ..., M` (stored in that order).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub frequencies: Vec<f64>,
    pub spectra: Vec<DMatrix<Complex64>>,
    pub window: usize,
}

impl SpectralEstimate {
    /// Spectral matrix at grid index `h` in `-M..=M`.
    pub fn at(&self, h: i64) -> &DMatrix<Complex64> {
        &self.spectra[(h + self.window as i64) as usize]
    }
}

/// Bartlett lag-window weight `1 - |u| / (M+1)`.
pub fn bartlett_weight(u: i64, window: usize) -> f64 {
    1.0 - u.unsigned_abs() as f64 / (window as f64 + 1.0)
}

pub fn grid_frequency(h: i64, window: usize) -> f64 {
    2.0 * PI * h as f64 / (2 * window + 1) as f64
}

/// Lag-window covariances prepared for fast evaluation at any frequency:
/// `sym[u] = w_u (G(u) + G(u)')` and `anti[u] = w_u (G(u)' - G(u))`.
struct LagWindow {
    gamma0: DMatrix<f64>,
    sym: Vec<DMatrix<f64>>,
    anti: Vec<DMatrix<f64>>,
}

impl LagWindow {
    fn new(xc: &DMatrix<f64>, window: usize) -> Result<Self> {
        let gamma0 = autocovariance_centered(xc, 0)?;
        let mut sym = Vec::with_capacity(window);
        let mut anti = Vec::with_capacity(window);
        for u in 1..=window {
            let g = autocovariance_centered(xc, u as i64)?;
            let w = bartlett_weight(u as i64, window);
            let gt = g.transpose();
            sym.push((&g + &gt) * w);
            anti.push((gt - g) * w);
        }
        Ok(Self { gamma0, sym, anti })
    }

    /// `(1/2pi) sum_{|u|<=M} w_u G(u) e^{-i u theta}`.
    fn spectrum(&self, theta: f64) -> DMatrix<Complex64> {
        let mut re = self.gamma0.clone();
        let (m, _) = re.shape();
        let mut im = DMatrix::<f64>::zeros(m, m);
        for (i, (sym, anti)) in self.sym.iter().zip(&self.anti).enumerate() {
            let u = (i + 1) as f64;
            let (s, c) = (u * theta).sin_cos();
            re.zip_apply(sym, |acc, v| *acc += c * v);
            im.zip_apply(anti, |acc, v| *acc += s * v);
        }
        let norm = 1.0 / (2.0 * PI);
        re.zip_map(&im, |a, b| Complex64::new(a * norm, b * norm))
    }
}

/// Bartlett lag-window estimate of the spectral density matrix of the
/// centered panel at the `2M+1` Fourier frequencies.
pub fn estimate_spectral_density(z: &PanelMatrix, window: usize) -> Result<SpectralEstimate> {
    check_window(z.t(), window)?;
    let (xc, _) = center(z.values());
    let lags = LagWindow::new(&xc, window)?;
    let hs = -(window as i64)..=(window as i64);
    let frequencies: Vec<f64> = hs.map(|h| grid_frequency(h, window)).collect();
    let spectra = frequencies.iter().map(|&th| lags.spectrum(th)).collect();
    Ok(SpectralEstimate {
        frequencies,
        spectra,
        window,
    })
}

fn check_window(t: usize, window: usize) -> Result<()> {
    if window < 1 || window >= t {
        return Err(Error::OutOfRange {
            what: "M",
            value: window,
            min: 1,
            max: t - 1,
        });
    }
    Ok(())
}

/// Leading `q` dynamic eigenpairs at every grid frequency, each solve
/// warm-started from the previous frequency.
fn dynamic_eigen(
    spectra: &[DMatrix<Complex64>],
    q: usize,
) -> Vec<(DVector<f64>, DMatrix<Complex64>)> {
    let mut out: Vec<(DVector<f64>, DMatrix<Complex64>)> = Vec::with_capacity(spectra.len());
    for s in spectra {
        let warm = out.last().map(|(_, v)| v);
        out.push(hermitian_top_eigen(s, q, warm));
    }
    out
}

fn outer(vals: &DVector<f64>, vecs: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut scaled = vecs.clone();
    for (mut col, &v) in scaled.column_iter_mut().zip(vals.iter()) {
        col *= Complex64::new(v, 0.0);
    }
    scaled * vecs.adjoint()
}

/// Splits each spectral matrix into its rank-`q` dynamic principal component
/// part and the remainder.
pub fn dynamic_pca_split(
    estimate: &SpectralEstimate,
    q: usize,
) -> Result<(Vec<DMatrix<Complex64>>, Vec<DMatrix<Complex64>>)> {
    let m = estimate.spectra.first().map_or(0, DMatrix::nrows);
    if q < 1 || q > m {
        return Err(Error::OutOfRange {
            what: "q",
            value: q,
            min: 1,
            max: m,
        });
    }
    let pairs = dynamic_eigen(&estimate.spectra, q);
    let (mut common, mut idio) = (Vec::new(), Vec::new());
    for (s, (vals, vecs)) in estimate.spectra.iter().zip(&pairs) {
        let chi = outer(vals, vecs);
        idio.push(s - &chi);
        common.push(chi);
    }
    Ok((common, idio))
}

/// Inverts spectra on the `2M+1` grid back to the lag-`u` covariance
/// `(2pi/(2M+1)) sum_h S(theta_h) e^{i u theta_h}`.
///
/// Fails if the result has a non-negligible imaginary part.
pub fn covariances_from_spectra(spectra: &[DMatrix<Complex64>], u: i64) -> Result<DMatrix<f64>> {
    let n = spectra.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::MalformedGrid(format!(
            "need an odd number (>= 3) of frequencies, got {n}"
        )));
    }
    let m = spectra[0].nrows();
    if spectra.iter().any(|s| s.nrows() != m || s.ncols() != m) {
        return Err(Error::MalformedGrid("spectra must be square and equally sized".into()));
    }
    let window = (n - 1) / 2;
    let mut acc = DMatrix::<Complex64>::zeros(m, m);
    let mut peak = 0.0f64;
    for (i, s) in spectra.iter().enumerate() {
        let h = i as i64 - window as i64;
        let phase = Complex64::from_polar(1.0, u as f64 * grid_frequency(h, window));
        acc += s * phase;
        peak = peak.max(s.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    acc *= Complex64::new(2.0 * PI / n as f64, 0.0);
    let max_imag = acc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let limit = 1e-8 * 2.0 * PI * peak;
    if max_imag > limit {
        return Err(Error::NonRealCovariance { max_imag, limit });
    }
    Ok(acc.map(|z| z.re))
}

/// Orthonormal basis of the row space of a centered `T x m` panel, from the
/// eigenvectors of its `T x T` Gram matrix.
fn row_space_basis(xc: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, u) = sym_eigen_desc(xc * xc.transpose());
    let top = vals.iter().copied().fold(0.0, f64::max);
    let rank = vals.iter().take_while(|&&v| v > top * 1e-12).count().max(1);
    let mut v = xc.tr_mul(&u.columns(0, rank));
    for (mut col, &lambda) in v.column_iter_mut().zip(vals.iter()) {
        col /= lambda.sqrt();
    }
    v
}

/// Common-part estimate with `q` dynamic and `r` static factors, window
/// `M = floor(sqrt(T))`.
pub fn fit_fhlr(z: &PanelMatrix, q: usize, r: usize) -> Result<CommonPartEstimate> {
    fit_fhlr_impl(z, q, r, true)
}

fn fit_fhlr_impl(z: &PanelMatrix, q: usize, r: usize, reduce: bool) -> Result<CommonPartEstimate> {
    let (t, m) = (z.t(), z.m());
    if t < 10 {
        return Err(Error::InvalidPanel(format!("need at least 10 time points, got {t}")));
    }
    if r < 1 || r > m {
        return Err(Error::OutOfRange {
            what: "r",
            value: r,
            min: 1,
            max: m,
        });
    }
    if q < 1 || q > r {
        return Err(Error::OutOfRange {
            what: "q",
            value: q,
            min: 1,
            max: r,
        });
    }
    let window = (t as f64).sqrt().floor() as usize;
    check_window(t, window)?;
    let (xc, means) = center(z.values());

    // With more series than periods the centered rows span at most T
    // dimensions. Writing x_t = V y_t for an orthonormal basis V of the row
    // space gives G_x(u) = V G_y(u) V', so the dynamic eigenproblems are
    // solved for the short coordinates y_t and mapped back.
    let basis = if reduce && m > t { Some(row_space_basis(&xc)) } else { None };
    let reduced = basis.as_ref().map(|v| &xc * v);
    let y = reduced.as_ref().unwrap_or(&xc);
    if q > y.ncols() {
        return Err(Error::OutOfRange {
            what: "q",
            value: q,
            min: 1,
            max: y.ncols(),
        });
    }
    let lags = LagWindow::new(y, window)?;

    // Conjugate symmetry: the spectrum at -theta is the conjugate of the one
    // at theta, with conjugate eigenvectors. Only h = 0..=M is solved; each
    // h > 0 contributes twice the real part of its outer products.
    let spectra: Vec<DMatrix<Complex64>> = (0..=window as i64)
        .map(|h| lags.spectrum(grid_frequency(h, window)))
        .collect();
    let pairs = dynamic_eigen(&spectra, q);
    drop(spectra);

    let base = 2.0 * PI / (2 * window + 1) as f64;
    let mut factor = DMatrix::<f64>::zeros(y.ncols(), 2 * q * (window + 1));
    let mut dynamic_eigenvalues = Vec::with_capacity((window + 1) * q);
    for (h, (vals, vecs)) in pairs.iter().enumerate() {
        let weight = if h == 0 { base } else { 2.0 * base };
        for l in 0..q {
            let lambda = vals[l].max(0.0);
            dynamic_eigenvalues.push(vals[l]);
            let s = (weight * lambda).sqrt();
            let col = 2 * (h * q + l);
            let p = vecs.column(l);
            factor.set_column(col, &p.map(|c| c.re * s));
            factor.set_column(col + 1, &p.map(|c| c.im * s));
        }
    }
    // Common covariance G_chi(0) = factor factor'.
    let factor = match &basis {
        Some(v) => v * factor,
        None => factor,
    };

    // Only the diagonal of the idiosyncratic covariance enters the pencil;
    // the full m x m estimate is too noisy to invert when m is comparable to T.
    let total_var = DVector::from_iterator(m, xc.column_iter().map(|c| c.norm_squared() / t as f64));
    let common_var = DVector::from_iterator(m, factor.row_iter().map(|row| row.norm_squared()));
    let mut idio_var = total_var - common_var;
    let ridge = IDIO_RIDGE * idio_var.sum().abs() / m as f64;
    idio_var.add_scalar_mut(ridge);

    let (gen_vals, gen_vecs, _) = generalized_lowrank_eigen_diag(&factor, &idio_var, r)?;
    let scores = &xc * &gen_vecs;
    let inner = scores.tr_mul(&scores) / t as f64;
    let loadings = gen_vecs.tr_mul(&factor) * factor.transpose();
    let coef = inner
        .cholesky()
        .ok_or_else(|| Error::Eigen("projected covariance is not positive definite".into()))?
        .solve(&loadings);
    let mut chi_hat = scores * coef;
    for (mut col, mean) in chi_hat.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(*mean);
    }

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("generalized_eigenvalues".to_owned(), gen_vals.as_slice().to_vec());
    diagnostics.insert("dynamic_eigenvalues".to_owned(), dynamic_eigenvalues);
    diagnostics.insert("ridge".to_owned(), vec![ridge]);
    diagnostics.insert("window".to_owned(), vec![window as f64]);
    diagnostics.insert("q".to_owned(), vec![q as f64]);
    Ok(CommonPartEstimate {
        chi_hat,
        method: Method::Fhlr,
        r,
        diagnostics,
    })
}
