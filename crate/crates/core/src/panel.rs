//! Panel container and the shared second-moment primitives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A `T x m` panel of observations: rows are time points, columns are series.
///
/// Construction validates that both dimensions are positive, that there are
/// at least two time points and that every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMatrix {
    values: DMatrix<f64>,
}

impl PanelMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidPanel(format!(
                "need at least 2 time points, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidPanel("need at least 1 series".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (t, j) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidPanel(format!(
                "non-finite entry at row {t}, column {j}"
            )));
        }
        Ok(Self { values })
    }

    /// Builds a panel from row-major data (`rows[t][j]`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidPanel(format!(
                "row {bad} has {} entries, expected {m}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(t, m, |i, j| rows[i][j]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Number of time points.
    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    /// Number of series.
    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.t())
            .map(|t| self.values.row(t).iter().copied().collect())
            .collect()
    }
}

/// Subtracts column means. Returns the centered panel and the means, so that
/// `x = centered + 1 * means'`.
pub fn center_columns(x: &PanelMatrix) -> (PanelMatrix, DVector<f64>) {
    let (centered, means) = center(x.values());
    (PanelMatrix { values: centered }, means)
}

pub(crate) fn center(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let t = x.nrows() as f64;
    let means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / t));
    let mut centered = x.clone();
    for (mut col, mean) in centered.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-mean);
    }
    (centered, means)
}

/// Biased sample autocovariance at lag `u` of the column-centered panel:
/// `(1/T) sum_{t} x_t x_{t+u}'`, with `G(-u) = G(u)'`.
pub fn autocovariance(x: &PanelMatrix, u: i64) -> Result<DMatrix<f64>> {
    let (centered, _) = center(x.values());
    autocovariance_centered(&centered, u)
}

/// Same as [`autocovariance`] for data that is already centered.
pub(crate) fn autocovariance_centered(xc: &DMatrix<f64>, u: i64) -> Result<DMatrix<f64>> {
    let t = xc.nrows();
    let lag = u.unsigned_abs() as usize;
    if lag >= t {
        return Err(Error::LagOutOfRange { lag: u, len: t });
    }
    let n = t - lag;
    let gamma = xc.rows(0, n).tr_mul(&xc.rows(lag, n)) / t as f64;
    Ok(if u < 0 { gamma.transpose() } else { gamma })
}

/// Squared relative Frobenius error `||a - b||_F^2 / ||a||_F^2`.
pub fn relative_frobenius_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", a.shape()),
            found: format!("{:?}", b.shape()),
        });
    }
    let denom = a.norm_squared();
    if denom == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok((a - b).norm_squared() / denom)
}
