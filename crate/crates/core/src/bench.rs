//! Monte Carlo comparison of the common-part estimators.
//!
//! A benchmark runs every (scenario, T, m) cell for `n_replications`
//! replications. Each replication simulates a panel from its own derived seed
//! (see [`crate::rng`]), fits the requested methods with the true number of
//! lags and factors, and scores each by `||chi - chi_hat||_F^2 / ||chi||_F^2`.
//! Results are collected in (cell, replication) order, so the output does not
//! depend on the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fhlr::fit_fhlr;
use crate::gdpc::{fit_gdpc, reconstruct, GdpcOptions, Init};
use crate::io::format_f64;
use crate::panel::relative_frobenius_error;
use crate::rng::replication_seed;
use crate::simulate::{simulate, DfmScenario, ScenarioName, SimulatedPanel};
use crate::sw::{fit_sw, Method};

/// Environment variable overriding `output_path`.
pub const ENV_OUTPUT_PATH: &str = "GDPC_BENCH_OUTPUT_PATH";
/// Environment variable overriding `parallelism`.
pub const ENV_PARALLELISM: &str = "GDPC_BENCH_PARALLELISM";

/// Relative slack for the per-replication inequality checks.
pub const INEQUALITY_SLACK: f64 = 1e-10;

/// Share of failed replications above which a row is flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.05;

pub const CSV_HEADER: &str = "scenario,T,m,method,mean_rel_mse,se_rel_mse,n_reps";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdpcSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GdpcSettings {
    fn default() -> Self {
        let d = GdpcOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

impl GdpcSettings {
    pub fn options(&self) -> GdpcOptions {
        GdpcOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            init: Init::FirstPc,
        }
    }
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub scenarios: Vec<ScenarioName>,
    #[serde(rename = "T_values")]
    pub t_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub methods: Vec<Method>,
    pub n_replications: usize,
    pub base_seed: u64,
    pub output_path: String,
    #[serde(default)]
    pub gdpc_options: GdpcSettings,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Applies [`ENV_OUTPUT_PATH`] and [`ENV_PARALLELISM`] when set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(path) = std::env::var(ENV_OUTPUT_PATH) {
            self.output_path = path;
        }
        if let Ok(p) = std::env::var(ENV_PARALLELISM) {
            self.parallelism = p.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("{ENV_PARALLELISM}={p:?} is not a positive integer"))
            })?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("scenarios", self.scenarios.is_empty()),
            ("T_values", self.t_values.is_empty()),
            ("m_values", self.m_values.is_empty()),
            ("methods", self.methods.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidConfig(format!("{name} must not be empty")));
        }
        if self.n_replications < 1 {
            return Err(Error::InvalidConfig("n_replications must be at least 1".into()));
        }
        if self.parallelism < 1 {
            return Err(Error::InvalidConfig("parallelism must be at least 1".into()));
        }
        self.gdpc_options.options().validate()
    }

    fn cells(&self) -> Vec<(ScenarioName, usize, usize)> {
        let mut cells = Vec::new();
        for &s in &self.scenarios {
            for &t in &self.t_values {
                for &m in &self.m_values {
                    cells.push((s, t, m));
                }
            }
        }
        cells
    }

    fn methods_ordered(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| self.methods.contains(m))
            .collect()
    }
}

/// Proof-derived checks on a single replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    /// Reconstruction MSE of the GDPC fit on the data.
    pub gdpc_data_mse: f64,
    /// Mean square of the drawn idiosyncratic part.
    pub idio_mean_square: f64,
    /// Data MSE of the static principal components fit with `k+1` factors.
    pub sw_data_mse: f64,
}

impl InequalityCheck {
    /// `gdpc_data_mse <= idio_mean_square` up to the relative slack.
    pub fn idio_bound_holds(&self) -> bool {
        self.gdpc_data_mse <= self.idio_mean_square * (1.0 + INEQUALITY_SLACK)
    }

    /// `sw_data_mse <= gdpc_data_mse` up to the relative slack.
    pub fn sw_bound_holds(&self) -> bool {
        self.sw_data_mse <= self.gdpc_data_mse * (1.0 + INEQUALITY_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    /// Normalized common-part error per method, or the error message.
    pub rel_mse: BTreeMap<Method, std::result::Result<f64, String>>,
    /// Seconds spent fitting each method.
    pub fit_seconds: BTreeMap<Method, f64>,
    /// Present when GDPC was requested and both fits succeeded.
    pub check: Option<InequalityCheck>,
}

/// Simulates and scores one replication of a cell.
pub fn run_replication(
    scenario: DfmScenario,
    t: usize,
    m: usize,
    rep_index: u64,
    base_seed: u64,
    methods: &[Method],
    gdpc_opts: &GdpcOptions,
) -> Result<ReplicationOutcome> {
    let seed = replication_seed(base_seed, scenario.name.id(), t as u64, m as u64, rep_index);
    let panel = simulate(scenario, t, m, seed)?;
    Ok(score_panel(&panel, scenario.k, methods, gdpc_opts))
}

fn data_mse(z: &nalgebra::DMatrix<f64>, zhat: &nalgebra::DMatrix<f64>) -> f64 {
    (z - zhat).norm_squared() / (z.nrows() * z.ncols()) as f64
}

/// Fits `methods` to a simulated panel with `k` lags (`r = k+1` static
/// factors, one dynamic factor) and scores them against the true common part.
pub fn score_panel(
    panel: &SimulatedPanel,
    k: usize,
    methods: &[Method],
    gdpc_opts: &GdpcOptions,
) -> ReplicationOutcome {
    let z = &panel.z;
    let r = k + 1;
    let mut rel_mse = BTreeMap::new();
    let mut fit_seconds = BTreeMap::new();
    let mut gdpc_mse = None;
    let mut sw_mse = None;
    for &method in methods {
        let start = Instant::now();
        let estimate = match method {
            Method::Gdpc => fit_gdpc(z, k, gdpc_opts).map(|fit| {
                gdpc_mse = Some(fit.mse);
                reconstruct(&fit)
            }),
            Method::Sw => fit_sw(z, r).map(|est| {
                sw_mse = Some(data_mse(z.values(), &est.chi_hat));
                est.chi_hat
            }),
            Method::Fhlr => fit_fhlr(z, 1, r).map(|est| est.chi_hat),
        };
        fit_seconds.insert(method, start.elapsed().as_secs_f64());
        let score = estimate
            .and_then(|chi_hat| relative_frobenius_error(&panel.chi, &chi_hat))
            .map_err(|e| e.to_string());
        rel_mse.insert(method, score);
    }
    if gdpc_mse.is_some() && sw_mse.is_none() {
        sw_mse = fit_sw(z, r)
            .ok()
            .map(|est| data_mse(z.values(), &est.chi_hat));
    }
    let check = match (gdpc_mse, sw_mse) {
        (Some(g), Some(s)) => Some(InequalityCheck {
            gdpc_data_mse: g,
            idio_mean_square: panel.e.norm_squared() / (z.t() * z.m()) as f64,
            sw_data_mse: s,
        }),
        _ => None,
    };
    ReplicationOutcome {
        rel_mse,
        fit_seconds,
        check,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario: ScenarioName,
    pub t: usize,
    pub m: usize,
    pub method: Method,
    pub mean_rel_mse: f64,
    pub se_rel_mse: f64,
    /// Successful replications.
    pub n_reps: usize,
    pub failed_reps: usize,
    /// More than [`FAILURE_FLAG_SHARE`] of the replications failed.
    pub flagged: bool,
    /// Total fitting time for this method over the cell, in seconds.
    pub wall_time: f64,
}

/// Aggregate of the inequality checks over one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellChecks {
    pub scenario: ScenarioName,
    pub t: usize,
    pub m: usize,
    pub checked: usize,
    pub idio_violations: usize,
    pub sw_violations: usize,
    /// Largest `gdpc_data_mse / idio_mean_square` seen.
    pub max_idio_ratio: f64,
    /// Largest `sw_data_mse / gdpc_data_mse` seen.
    pub max_sw_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub checks: Vec<CellChecks>,
    /// Error messages of failed replications, tagged with their cell.
    pub failures: Vec<String>,
}

impl BenchResult {
    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failed_reps).sum()
    }

    pub fn row(&self, scenario: ScenarioName, t: usize, m: usize, method: Method) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.t == t && r.m == m && r.method == method)
    }

    pub fn check(&self, scenario: ScenarioName, t: usize, m: usize) -> Option<&CellChecks> {
        self.checks
            .iter()
            .find(|c| c.scenario == scenario && c.t == t && c.m == m)
    }
}

/// Mean and standard error (replication variance with divisor `n-1`; zero
/// for a single replication).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every cell and replication of `config` without writing output.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchResult> {
    config.validate()?;
    let methods = config.methods_ordered();
    let opts = config.gdpc_options.options();
    let cells = config.cells();
    let reps = config.n_replications;
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..reps as u64).map(move |r| (c, r)))
        .collect();

    let run = |&(c, rep): &(usize, u64)| {
        let (name, t, m) = cells[c];
        run_replication(name.scenario(), t, m, rep, config.base_seed, &methods, &opts)
    };
    let outcomes: Vec<Result<ReplicationOutcome>> = if config.parallelism == 1 {
        tasks.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run).collect())
    };

    let mut result = BenchResult::default();
    for (c, &(name, t, m)) in cells.iter().enumerate() {
        let cell = &outcomes[c * reps..(c + 1) * reps];
        for &method in &methods {
            let mut values = Vec::with_capacity(reps);
            let mut failed = 0;
            let mut wall = 0.0;
            for (rep, outcome) in cell.iter().enumerate() {
                let err = match outcome {
                    Ok(o) => {
                        wall += o.fit_seconds.get(&method).copied().unwrap_or(0.0);
                        match &o.rel_mse[&method] {
                            Ok(v) => {
                                values.push(*v);
                                None
                            }
                            Err(e) => Some(e.clone()),
                        }
                    }
                    Err(e) => Some(format!("simulation: {e}")),
                };
                if let Some(e) = err {
                    failed += 1;
                    result
                        .failures
                        .push(format!("{name} T={t} m={m} rep={rep} {method}: {e}"));
                }
            }
            let (mean, se) = mean_and_se(&values);
            result.rows.push(BenchRow {
                scenario: name,
                t,
                m,
                method,
                mean_rel_mse: mean,
                se_rel_mse: se,
                n_reps: values.len(),
                failed_reps: failed,
                flagged: failed as f64 > FAILURE_FLAG_SHARE * reps as f64,
                wall_time: wall,
            });
        }
        let checks: Vec<InequalityCheck> = cell
            .iter()
            .filter_map(|o| o.as_ref().ok().and_then(|o| o.check))
            .collect();
        if !checks.is_empty() {
            result.checks.push(CellChecks {
                scenario: name,
                t,
                m,
                checked: checks.len(),
                idio_violations: checks.iter().filter(|c| !c.idio_bound_holds()).count(),
                sw_violations: checks.iter().filter(|c| !c.sw_bound_holds()).count(),
                max_idio_ratio: checks
                    .iter()
                    .map(|c| c.gdpc_data_mse / c.idio_mean_square)
                    .fold(f64::NEG_INFINITY, f64::max),
                max_sw_ratio: checks
                    .iter()
                    .map(|c| c.sw_data_mse / c.gdpc_data_mse)
                    .fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

pub fn to_csv(result: &BenchResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.t,
            r.m,
            r.method,
            format_f64(r.mean_rel_mse),
            format_f64(r.se_rel_mse),
            r.n_reps
        );
    }
    out
}

/// One block per scenario with `T`/`m` rows and one column per method in the
/// order GDPC, FHLR, SW; values rounded to four decimals.
pub fn to_markdown(result: &BenchResult) -> String {
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| result.rows.iter().any(|r| r.method == *m))
        .collect();
    let mut scenarios: Vec<ScenarioName> = result.rows.iter().map(|r| r.scenario).collect();
    scenarios.dedup();
    let mut out = String::from("Means of the normalized MSEs of the estimation of the common part.\n");
    for scenario in scenarios {
        let _ = writeln!(out, "\n### {scenario}\n");
        let header: Vec<&str> = methods.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(out, "| T | m | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|---|{}", "---:|".repeat(methods.len()));
        let mut cells: Vec<(usize, usize)> = result
            .rows
            .iter()
            .filter(|r| r.scenario == scenario)
            .map(|r| (r.t, r.m))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        let mut last_t = None;
        for (t, m) in cells {
            let t_label = if last_t == Some(t) { String::new() } else { t.to_string() };
            last_t = Some(t);
            let values: Vec<String> = methods
                .iter()
                .map(|&method| {
                    result
                        .row(scenario, t, m, method)
                        .map_or_else(|| "-".to_owned(), |r| format!("{:.4}", r.mean_rel_mse))
                })
                .collect();
            let _ = writeln!(out, "| {t_label} | {m} | {} |", values.join(" | "));
        }
    }
    out
}

pub fn emit_table(result: &BenchResult, format: TableFormat, path: impl AsRef<Path>) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::InvalidConfig("cannot emit an empty result".into()));
    }
    let text = match format {
        TableFormat::Csv => to_csv(result),
        TableFormat::Markdown => to_markdown(result),
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Path of the markdown table written next to the CSV output.
pub fn markdown_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("md")
}

/// Writes the CSV table to `config.output_path` and the markdown table next
/// to it. Returns the two paths.
pub fn write_outputs(result: &BenchResult, config: &BenchConfig) -> Result<(PathBuf, PathBuf)> {
    let csv_path = PathBuf::from(&config.output_path);
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let md_path = markdown_path(&csv_path);
    emit_table(result, TableFormat::Csv, &csv_path)?;
    emit_table(result, TableFormat::Markdown, &md_path)?;
    Ok((csv_path, md_path))
}

/// Parses a table written by [`to_csv`]. Fields missing from the CSV
/// (failures, timings) come back as zero.
pub fn read_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header {:?}", header.join(","))));
    }
    let num = |field: &str, what: &str| -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("{what} {field:?}: {e}")))
    };
    let int = |field: &str, what: &str| -> Result<usize> {
        field
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("{what} {field:?}: {e}")))
    };
    let mut rows = Vec::new();
    for record in rdr.records() {
        let rec = record?;
        if rec.len() != 7 {
            return Err(Error::Parse(format!("expected 7 fields, got {}", rec.len())));
        }
        rows.push(BenchRow {
            scenario: rec[0].parse()?,
            t: int(&rec[1], "T")?,
            m: int(&rec[2], "m")?,
            method: rec[3].parse()?,
            mean_rel_mse: num(&rec[4], "mean_rel_mse")?,
            se_rel_mse: num(&rec[5], "se_rel_mse")?,
            n_reps: int(&rec[6], "n_reps")?,
            failed_reps: 0,
            flagged: false,
            wall_time: 0.0,
        });
    }
    Ok(rows)
}
