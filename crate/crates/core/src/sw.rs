//! Static principal components estimate of the common part.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::panel::{center, PanelMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GDPC")]
    Gdpc,
    #[serde(rename = "FHLR")]
    Fhlr,
    #[serde(rename = "SW")]
    Sw,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gdpc, Method::Fhlr, Method::Sw];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gdpc => "GDPC",
            Method::Fhlr => "FHLR",
            Method::Sw => "SW",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GDPC" => Ok(Method::Gdpc),
            "FHLR" => Ok(Method::Fhlr),
            "SW" => Ok(Method::Sw),
            _ => Err(Error::Parse(format!("unknown method {s:?}"))),
        }
    }
}

/// An estimate of the `T x m` common part together with method diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonPartEstimate {
    pub chi_hat: DMatrix<f64>,
    pub method: Method,
    /// Number of static factors used.
    pub r: usize,
    pub diagnostics: BTreeMap<String, Vec<f64>>,
}

/// Projects the centered panel on its first `r` principal components and adds
/// the column means back: the best intercept-plus-rank-`r` approximation of
/// `z` in Frobenius norm.
///
/// The eigenproblem is solved on the `m x m` covariance when `m <= T` and on
/// the `T x T` Gram matrix otherwise; both give the same projection.
pub fn fit_sw(z: &PanelMatrix, r: usize) -> Result<CommonPartEstimate> {
    let (t, m) = (z.t(), z.m());
    let max = t.min(m);
    if r < 1 || r > max {
        return Err(Error::OutOfRange {
            what: "r",
            value: r,
            min: 1,
            max,
        });
    }
    let (xc, means) = center(z.values());
    let (eigenvalues, mut chi_hat) = if m <= t {
        let (vals, vecs) = sym_eigen_desc(xc.tr_mul(&xc) / t as f64);
        let v = vecs.columns(0, r);
        (vals, (&xc * v) * v.transpose())
    } else {
        let (vals, vecs) = sym_eigen_desc(&xc * xc.transpose() / t as f64);
        let u = vecs.columns(0, r);
        (vals, u * (u.tr_mul(&xc)))
    };
    for (mut col, mean) in chi_hat.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(*mean);
    }

    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let leading: Vec<f64> = eigenvalues.iter().take(r).copied().collect();
    let explained = if total > 0.0 {
        leading.iter().map(|v| v.max(0.0)).sum::<f64>() / total
    } else {
        0.0
    };
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("eigenvalues".to_owned(), leading);
    diagnostics.insert("explained_variance".to_owned(), vec![explained]);
    Ok(CommonPartEstimate {
        chi_hat,
        method: Method::Sw,
        r,
        diagnostics,
    })
}
