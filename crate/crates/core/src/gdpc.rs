//! First generalized dynamic principal component by alternating least squares.
//!
//! The component is a factor path `f` of length `T + k` (entry `p` stands for
//! time `p - k + 1`, so the first `k` entries are pre-sample values) together
//! with intercepts `alpha` and a `(k+1) x m` loading matrix `beta`, chosen to
//! minimize the reconstruction MSE
//!
//! ```text
//! mse = (1/Tm) sum_t sum_j (z[t,j] - alpha[j] - sum_h beta[h,j] f[t+k-h])^2
//! ```
//!
//! Each iteration solves two linear least-squares problems in turn: per-series
//! regressions for `(alpha, beta)` given `f`, then a banded `(T+k) x (T+k)`
//! system for `f` given the loadings. Neither system grows with `m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, BandedCholesky, SymBand};
use crate::panel::{center, PanelMatrix};

/// How the factor path is initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Standardized scores of the first ordinary principal component of the
    /// centered panel, padded with `k` zeros. Each of the `k+1` placements of
    /// the zeros is fitted and the lowest-MSE result returned.
    FirstPc,
    /// A user-supplied path of length `T + k`.
    Provided(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdpcOptions {
    /// Stop once `|mse_i - mse_{i-1}| / mse_{i-1} < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl Default for GdpcOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            init: Init::FirstPc,
        }
    }
}

impl GdpcOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidOptions(format!(
                "tol must be in (0, 1), got {}",
                self.tol
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidOptions("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdpcFit {
    /// Factor path, length `T + k`.
    pub f: DVector<f64>,
    /// Intercepts, length `m`.
    pub alpha: DVector<f64>,
    /// Loadings, `(k+1) x m`; row `h` multiplies the factor lagged `h` steps.
    pub beta: DMatrix<f64>,
    pub k: usize,
    /// Reconstruction MSE of the stored parameters.
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// MSE after each loadings update, starting from the initialization.
    pub mse_history: Vec<f64>,
}

impl GdpcFit {
    /// Number of in-sample time points.
    pub fn t(&self) -> usize {
        self.f.len() - self.k
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    fn check_shape(&self) -> Result<()> {
        let ok = self.f.len() > self.k
            && self.beta.nrows() == self.k + 1
            && self.beta.ncols() == self.alpha.len();
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: format!("beta {}x{}", self.k + 1, self.alpha.len()),
                found: format!(
                    "f len {}, beta {}x{}",
                    self.f.len(),
                    self.beta.nrows(),
                    self.beta.ncols()
                ),
            })
        }
    }
}

/// `T x (k+1)` matrix whose column `h` is the factor lagged `h` steps.
pub(crate) fn lagged(f: &DVector<f64>, k: usize) -> DMatrix<f64> {
    let t = f.len() - k;
    DMatrix::from_fn(t, k + 1, |row, h| f[row + k - h])
}

/// `zhat[t,j] = alpha[j] + sum_h beta[h,j] f[t+k-h]`.
pub fn reconstruct(fit: &GdpcFit) -> DMatrix<f64> {
    reconstruct_parts(&fit.f, &fit.alpha, &fit.beta)
}

fn reconstruct_parts(f: &DVector<f64>, alpha: &DVector<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let k = beta.nrows() - 1;
    let mut zhat = lagged(f, k) * beta;
    for (mut col, a) in zhat.column_iter_mut().zip(alpha.iter()) {
        col.add_scalar_mut(*a);
    }
    zhat
}

/// Reconstruction MSE `(1/Tm) sum_t ||z_t - zhat_t||^2` of `fit` on `z`.
pub fn mse(z: &PanelMatrix, fit: &GdpcFit) -> Result<f64> {
    fit.check_shape()?;
    if fit.t() != z.t() || fit.m() != z.m() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", z.t(), z.m()),
            found: format!("{}x{}", fit.t(), fit.m()),
        });
    }
    Ok(mse_parts(z.values(), &fit.f, &fit.alpha, &fit.beta))
}

fn mse_parts(z: &DMatrix<f64>, f: &DVector<f64>, alpha: &DVector<f64>, beta: &DMatrix<f64>) -> f64 {
    let resid = z - reconstruct_parts(f, alpha, beta);
    resid.norm_squared() / (z.nrows() * z.ncols()) as f64
}

/// Condition number above which a regression design counts as rank deficient.
const MAX_DESIGN_CONDITION: f64 = 1e12;

/// Least-squares intercepts and loadings of every series on
/// `(1, f_t, f_{t-1}, ..., f_{t-k})`.
///
/// All series share the same design, so its `(k+2) x (k+2)` Gram matrix is
/// factored once.
pub fn update_loadings(
    z: &PanelMatrix,
    f: &DVector<f64>,
    k: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let t = z.t();
    if f.len() != t + k {
        return Err(Error::DimensionMismatch {
            expected: format!("factor of length {}", t + k),
            found: format!("length {}", f.len()),
        });
    }
    let p = k + 2;
    let mut design = DMatrix::from_element(t, p, 1.0);
    design.columns_mut(1, k + 1).copy_from(&lagged(f, k));
    let gram = design.tr_mul(&design);

    let (vals, _) = sym_eigen_desc(gram.clone());
    let (max, min) = (vals[0], vals[p - 1]);
    if !(min > 0.0) || max / min > MAX_DESIGN_CONDITION {
        return Err(Error::SingularDesign(format!(
            "design (1, f_t, ..., f_t-{k}) has Gram eigenvalues in [{min:e}, {max:e}]"
        )));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("Gram matrix is not positive definite".into()))?;
    let coef = chol.solve(&design.tr_mul(z.values()));
    let alpha = coef.row(0).transpose();
    let beta = coef.rows(1, k + 1).into_owned();
    Ok((alpha, beta))
}

/// Normal equations `A f = b` of the factor-path subproblem.
///
/// `A[p,p'] = sum_t sum_j beta[t+k-p, j] beta[t+k-p', j]` over the `t` for
/// which both lags lie in `0..=k`, and
/// `b[p] = sum_t sum_j beta[t+k-p, j] (z[t,j] - alpha[j])`. `A` is symmetric
/// with bandwidth `k`.
pub fn factor_system(
    z: &PanelMatrix,
    alpha: &DVector<f64>,
    beta: &DMatrix<f64>,
) -> Result<(SymBand, DVector<f64>)> {
    let (t, m) = (z.t(), z.m());
    if beta.nrows() == 0 || beta.ncols() != m || alpha.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("alpha of length {m} and beta with {m} columns"),
            found: format!("alpha {}, beta {}x{}", alpha.len(), beta.nrows(), beta.ncols()),
        });
    }
    let k = beta.nrows() - 1;
    let n = t + k;
    let bbt = beta * beta.transpose();
    let mut resid = z.values().clone();
    for (mut col, a) in resid.column_iter_mut().zip(alpha.iter()) {
        col.add_scalar_mut(-a);
    }
    let y = resid * beta.transpose();

    let mut a = SymBand::zeros(n, k);
    let mut b = DVector::zeros(n);
    for row in 0..t {
        for h in 0..=k {
            let p = row + k - h;
            b[p] += y[(row, h)];
            for h2 in 0..=h {
                a.add(row + k - h2, p, bbt[(h, h2)]);
            }
        }
    }
    Ok((a, b))
}

/// Factor path minimizing the MSE for fixed intercepts and loadings, via a
/// banded Cholesky solve in `O((T+k) k^2)`.
pub fn update_factor(
    z: &PanelMatrix,
    alpha: &DVector<f64>,
    beta: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let (a, b) = factor_system(z, alpha, beta)?;
    let (t, m, k) = (z.t(), z.m(), beta.nrows() - 1);
    if t * m < t + k {
        return Err(Error::SingularSystem(format!(
            "factor update with T={t}, m={m}, k={k}: {} equations cannot determine {} factor values",
            t * m,
            t + k
        )));
    }
    let chol = BandedCholesky::factor(&a).map_err(|e| match e {
        Error::SingularSystem(msg) => Error::SingularSystem(format!(
            "factor update with T={t}, m={m}, k={k}: {msg}"
        )),
        other => other,
    })?;
    Ok(chol.solve(&b))
}

/// Rescales to a zero-mean, unit-variance factor (divisor `T+k`) with
/// `sum_j beta[0,j] >= 0`, adjusting `alpha` and `beta` so the
/// reconstruction is unchanged.
pub fn normalize(fit: &GdpcFit) -> Result<GdpcFit> {
    fit.check_shape()?;
    let n = fit.f.len() as f64;
    let mean = fit.f.sum() / n;
    let var = fit.f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateFactor(format!(
            "factor variance {var:e} cannot be normalized"
        )));
    }
    let lead: f64 = fit.beta.row(0).sum();
    let sign = if lead < 0.0 { -1.0 } else { 1.0 };

    let f = fit.f.map(|v| sign * (v - mean) / scale);
    let col_sums = fit.beta.row_sum().transpose();
    let alpha = &fit.alpha + col_sums * mean;
    let beta = &fit.beta * (sign * scale);
    Ok(GdpcFit {
        f,
        alpha,
        beta,
        ..fit.clone()
    })
}

fn standardize(f: &mut DVector<f64>) {
    let n = f.len() as f64;
    let mean = f.sum() / n;
    let sd = (f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 && sd.is_finite() {
        f.apply(|v| *v = (*v - mean) / sd);
    }
}

/// Standardized first principal component scores of the centered panel.
fn first_pc_scores(z: &PanelMatrix) -> Result<DVector<f64>> {
    let (xc, _) = center(z.values());
    let scores = if z.m() <= z.t() {
        let (_, vecs) = sym_eigen_desc(xc.tr_mul(&xc));
        &xc * vecs.column(0)
    } else {
        let (vals, vecs) = sym_eigen_desc(&xc * xc.transpose());
        vecs.column(0) * vals[0].max(0.0).sqrt()
    };
    let t = scores.len() as f64;
    let mean = scores.sum() / t;
    let sd = (scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateFactor(
            "panel has no variation to initialize from".into(),
        ));
    }
    Ok(scores.map(|v| (v - mean) / sd))
}

/// Relative slack allowed for rounding when checking MSE monotonicity.
const MONOTONE_SLACK: f64 = 1e-10;

/// Fits the first generalized dynamic principal component with `k` lags.
///
/// Alternates [`update_loadings`] and [`update_factor`] until the relative
/// MSE change falls below `opts.tol` (or the MSE reaches the rounding floor),
/// or `opts.max_iter` factor updates have been made. Exhausting the iteration
/// budget is not an error; it leaves `converged = false`.
pub fn fit_gdpc(z: &PanelMatrix, k: usize, opts: &GdpcOptions) -> Result<GdpcFit> {
    opts.validate()?;
    let t = z.t();
    if t <= k + 2 {
        return Err(Error::OutOfRange {
            what: "k",
            value: k,
            min: 0,
            max: t.saturating_sub(3),
        });
    }
    match &opts.init {
        Init::FirstPc => {
            // Alternating least squares can stall when the starting factor is
            // misaligned with the lag structure, so the first principal
            // component is tried at every shift within the lag window and the
            // best fit kept (earliest shift on ties).
            let pc = first_pc_scores(z)?;
            let mut best: Option<GdpcFit> = None;
            for shift in 0..=k {
                let mut f = DVector::zeros(t + k);
                f.rows_mut(shift, t).copy_from(&pc);
                let fit = alternate(z, k, f, opts)?;
                if best.as_ref().is_none_or(|b| fit.mse < b.mse) {
                    best = Some(fit);
                }
            }
            Ok(best.expect("at least one alignment"))
        }
        Init::Provided(f) => {
            if f.len() != t + k {
                return Err(Error::DimensionMismatch {
                    expected: format!("initial factor of length {}", t + k),
                    found: format!("length {}", f.len()),
                });
            }
            alternate(z, k, f.clone(), opts)
        }
    }
}

fn alternate(z: &PanelMatrix, k: usize, mut f: DVector<f64>, opts: &GdpcOptions) -> Result<GdpcFit> {
    let (t, m) = (z.t(), z.m());
    let floor = 1e-26 * z.values().norm_squared() / (t * m) as f64;

    let (mut alpha, mut beta) = update_loadings(z, &f, k)?;
    let mut current = mse_parts(z.values(), &f, &alpha, &beta);
    let mut history = vec![current];
    let mut converged = current <= floor;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        let mut next = update_factor(z, &alpha, &beta)?;
        standardize(&mut next);
        let (a, b) = update_loadings(z, &next, k)?;
        let value = mse_parts(z.values(), &next, &a, &b);
        debug_assert!(
            value <= current * (1.0 + MONOTONE_SLACK) + floor,
            "MSE increased from {current} to {value}"
        );
        iterations += 1;
        history.push(value);
        let change = (current - value).abs() / current;
        f = next;
        alpha = a;
        beta = b;
        current = value;
        converged = change < opts.tol || current <= floor;
    }

    let mut fit = normalize(&GdpcFit {
        f,
        alpha,
        beta,
        k,
        mse: current,
        iterations,
        converged,
        mse_history: history,
    })?;
    fit.mse = mse(z, &fit)?;
    Ok(fit)
}
