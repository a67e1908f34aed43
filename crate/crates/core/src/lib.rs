//! Generalized dynamic principal components (GDPC) for high-dimensional time
//! series, two dynamic factor model baselines for estimating the common part
//! (static principal components and a frequency-domain estimator), and a
//! seeded Monte Carlo harness comparing them on simulated factor models.

pub mod bench;
pub mod error;
pub mod fhlr;
pub mod gdpc;
pub mod io;
pub mod linalg;
pub mod panel;
pub mod rng;
pub mod simulate;
pub mod sw;

pub use bench::{run_benchmark, run_replication, BenchConfig, BenchResult};
pub use error::{Error, Result};
pub use fhlr::{fit_fhlr, SpectralEstimate};
pub use gdpc::{fit_gdpc, GdpcFit, GdpcOptions, Init};
pub use panel::{autocovariance, center_columns, relative_frobenius_error, PanelMatrix};
pub use simulate::{simulate, DfmScenario, ScenarioName, SimulatedPanel};
pub use sw::{fit_sw, CommonPartEstimate, Method};
