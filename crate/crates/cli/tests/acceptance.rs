//! Acceptance suite: reproduces the Monte Carlo table at 300 replications and
//! checks the estimator invariants against independent oracles.
//!
//! Runs as a plain binary (no test harness) so the one-line verdict of every
//! criterion is always printed. Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use gdpc::bench::{run_benchmark, to_markdown, BenchConfig, BenchResult, GdpcSettings};
use gdpc::gdpc::{update_factor, GdpcOptions};
use gdpc::linalg::spectral_norm;
use gdpc::rng::rng_from_seed;
use gdpc::simulate::{simulate_idiosyncratic, IdioLaw};
use gdpc::{fit_gdpc, fit_sw, Method, PanelMatrix, ScenarioName};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const REPLICATIONS: usize = 300;
const BASE_SEED: u64 = 20240601;
const T_VALUES: [usize; 2] = [100, 200];
const M_VALUES: [usize; 3] = [100, 200, 400];

/// Published means, in the layout (scenario, T, m) -> [GDPC, FHLR, SW].
const REFERENCE: [(ScenarioName, usize, usize, [f64; 3]); 24] = {
    use ScenarioName::*;
    [
        (Dfm1, 100, 100, [0.0406, 0.0495, 0.0508]),
        (Dfm1, 100, 200, [0.0353, 0.0399, 0.0403]),
        (Dfm1, 100, 400, [0.0338, 0.0352, 0.0351]),
        (Dfm1, 200, 100, [0.0253, 0.0346, 0.0353]),
        (Dfm1, 200, 200, [0.0217, 0.0251, 0.0251]),
        (Dfm1, 200, 400, [0.0176, 0.0204, 0.0201]),
        (Dfm1Ar, 100, 100, [0.0537, 0.0615, 0.0621]),
        (Dfm1Ar, 100, 200, [0.0476, 0.0512, 0.0512]),
        (Dfm1Ar, 100, 400, [0.0437, 0.0468, 0.0462]),
        (Dfm1Ar, 200, 100, [0.0311, 0.0408, 0.0411]),
        (Dfm1Ar, 200, 200, [0.0261, 0.0314, 0.0311]),
        (Dfm1Ar, 200, 400, [0.0232, 0.0262, 0.0256]),
        (Dfm2, 100, 100, [0.0552, 0.0684, 0.0727]),
        (Dfm2, 100, 200, [0.0465, 0.0554, 0.0562]),
        (Dfm2, 100, 400, [0.0435, 0.0487, 0.0478]),
        (Dfm2, 200, 100, [0.0319, 0.0490, 0.0515]),
        (Dfm2, 200, 200, [0.0253, 0.0359, 0.0357]),
        (Dfm2, 200, 400, [0.0237, 0.0292, 0.0278]),
        (Dfm2Ar, 100, 100, [0.0663, 0.0832, 0.0871]),
        (Dfm2Ar, 100, 200, [0.0612, 0.0699, 0.0708]),
        (Dfm2Ar, 100, 400, [0.0575, 0.0635, 0.0631]),
        (Dfm2Ar, 200, 100, [0.0387, 0.0568, 0.0593]),
        (Dfm2Ar, 200, 200, [0.0336, 0.0433, 0.0431]),
        (Dfm2Ar, 200, 400, [0.0310, 0.0364, 0.0351]),
    ]
};

const CORNERS: [(ScenarioName, usize, usize); 4] = [
    (ScenarioName::Dfm1, 100, 100),
    (ScenarioName::Dfm1, 200, 400),
    (ScenarioName::Dfm2, 100, 100),
    (ScenarioName::Dfm2Ar, 200, 400),
];

fn reference(scenario: ScenarioName, t: usize, m: usize, method: Method) -> f64 {
    let (.., values) = REFERENCE
        .iter()
        .find(|(s, tt, mm, _)| *s == scenario && *tt == t && *mm == m)
        .expect("cell in table");
    values[Method::ALL.iter().position(|x| *x == method).unwrap()]
}

struct Verdict {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {} {}: {}", v.id, v.name, v.detail);
}

fn grid_config() -> BenchConfig {
    BenchConfig {
        scenarios: ScenarioName::ALL.to_vec(),
        t_values: T_VALUES.to_vec(),
        m_values: M_VALUES.to_vec(),
        methods: Method::ALL.to_vec(),
        n_replications: REPLICATIONS,
        base_seed: BASE_SEED,
        output_path: String::new(),
        gdpc_options: GdpcSettings::default(),
        parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Corner cells of one method against the published means. A cell passes
/// when it is within `rel` of the reference, or within three standard
/// errors if `use_se` and that is looser.
fn corner_check(result: &BenchResult, method: Method, rel: f64, use_se: bool) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, t, m) in CORNERS {
        let row = result.row(s, t, m, method).expect("row present");
        let target = reference(s, t, m, method);
        let band = if use_se { (rel * target).max(3.0 * row.se_rel_mse) } else { rel * target };
        let ok = (row.mean_rel_mse - target).abs() <= band;
        pass &= ok;
        parts.push(format!(
            "{s}/{t}/{m} {:.4}±{:.4} vs {target:.4} (band {band:.4}{})",
            row.mean_rel_mse,
            row.se_rel_mse,
            if ok { "" } else { ", OUT" }
        ));
    }
    (pass, parts.join("; "))
}

fn ordering_check(result: &BenchResult) -> (bool, String) {
    let mut held = 0;
    let mut misses = Vec::new();
    for (s, t, m, _) in REFERENCE {
        let mean = |method| result.row(s, t, m, method).unwrap().mean_rel_mse;
        let g = mean(Method::Gdpc);
        if g <= mean(Method::Fhlr) && g <= mean(Method::Sw) {
            held += 1;
        } else {
            misses.push(format!("{s}/{t}/{m}"));
        }
    }
    let detail = if misses.is_empty() {
        format!("GDPC lowest in {held}/24 cells (need 20)")
    } else {
        format!("GDPC lowest in {held}/24 cells (need 20); not in {}", misses.join(", "))
    };
    (held >= 20, detail)
}

fn inequality_check(result: &BenchResult) -> (bool, String) {
    let checked: usize = result.checks.iter().map(|c| c.checked).sum();
    let idio: usize = result.checks.iter().map(|c| c.idio_violations).sum();
    let sw: usize = result.checks.iter().map(|c| c.sw_violations).sum();
    let max_idio = result.checks.iter().map(|c| c.max_idio_ratio).fold(0.0, f64::max);
    let max_sw = result.checks.iter().map(|c| c.max_sw_ratio).fold(0.0, f64::max);
    let expected = REPLICATIONS * REFERENCE.len();
    (
        checked == expected && idio == 0 && sw == 0,
        format!(
            "{checked}/{expected} replications checked; {idio} idiosyncratic-bound and {sw} static-PC-bound violations; \
             max GDPC/idio ratio {max_idio:.6}, max SW/GDPC ratio {max_sw:.6}"
        ),
    )
}

fn trend_check(result: &BenchResult) -> (Vec<String>, usize) {
    let mut broken = Vec::new();
    let mut compared = 0;
    for s in ScenarioName::ALL {
        for method in Method::ALL {
            let mean = |t, m| result.row(s, t, m, method).unwrap().mean_rel_mse;
            for m in M_VALUES {
                compared += 1;
                if !(mean(200, m) < mean(100, m)) {
                    broken.push(format!("{s}/{method} T at m={m}"));
                }
            }
            for t in T_VALUES {
                for w in M_VALUES.windows(2) {
                    compared += 1;
                    if !(mean(t, w[1]) < mean(t, w[0])) {
                        broken.push(format!("{s}/{method} m {}->{} at T={t}", w[0], w[1]));
                    }
                }
            }
        }
    }
    (broken, compared)
}

/// Median of `||E|| / sqrt(Tm)` over 50 draws of a square idiosyncratic
/// panel, for each size.
fn idio_norm_medians(law: IdioLaw, sizes: &[usize]) -> Vec<f64> {
    sizes
        .iter()
        .map(|&n| {
            let mut values: Vec<f64> = (0..50u64)
                .map(|seed| {
                    let mut rng = rng_from_seed(seed * 7919 + n as u64);
                    let (e, _) = simulate_idiosyncratic(law, n, n, &mut rng);
                    spectral_norm(&e) / (n as f64)
                })
                .collect();
            values.sort_by(f64::total_cmp);
            0.5 * (values[24] + values[25])
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Oracles for the tiny-instance criterion. They share nothing with the
// library's solvers beyond nalgebra's SVD.
// ---------------------------------------------------------------------------

/// Objective with intercepts and loadings profiled out: residual of the
/// least-squares projection of every series on `(1, f_t, ..., f_{t-k})`.
fn profiled_mse(z: &DMatrix<f64>, f: &[f64], k: usize) -> f64 {
    let (t, m) = z.shape();
    let design = DMatrix::from_fn(t, k + 2, |row, c| if c == 0 { 1.0 } else { f[row + k - (c - 1)] });
    let svd = design.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let mut resid = z.clone();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 * smax {
            let ui = u.column(i);
            let coef = ui.transpose() * z;
            resid -= ui * coef;
        }
    }
    resid.norm_squared() / (t * m) as f64
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients).
fn nelder_mead(obj: &dyn Fn(&[f64]) -> f64, start: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| obj(p)).collect();
    let mut evals = n + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= 1e-18 && diameter <= 1e-10 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / nf).collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + coef * (c - w)).collect()
        };
        let reflected = along(alpha);
        let fr = obj(&reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = along(alpha * gamma);
            let fe = obj(&expanded);
            evals += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let p = along(alpha * rho);
            let v = obj(&p);
            (p, v)
        } else {
            let p = along(-rho);
            let v = obj(&p);
            (p, v)
        };
        evals += 1;
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
            values[i] = obj(&p);
            simplex[i] = p;
        }
        evals += n;
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best])
}

/// Global minimum of the reconstruction objective by restarted Nelder-Mead
/// from several random starting paths.
fn objective_minimum(z: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> f64 {
    let n = z.nrows() + k;
    let obj = |f: &[f64]| profiled_mse(z, f, k);
    let mut best = f64::INFINITY;
    for _ in 0..8 {
        let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut value = obj(&x);
        for _ in 0..60 {
            let (next, v) = nelder_mead(&obj, &x, 0.3, 40_000);
            let improved = value - v;
            x = next;
            value = v;
            if improved <= 1e-15 {
                break;
            }
        }
        best = best.min(value);
    }
    best
}

/// Dense least-squares solve of the factor subproblem from its explicit
/// `Tm x (T+k)` design.
fn dense_factor_solve(z: &DMatrix<f64>, alpha: &DVector<f64>, beta: &DMatrix<f64>) -> DVector<f64> {
    let (t, m) = z.shape();
    let k = beta.nrows() - 1;
    let mut design = DMatrix::zeros(t * m, t + k);
    let mut target = DVector::zeros(t * m);
    for row in 0..t {
        for j in 0..m {
            let i = row * m + j;
            target[i] = z[(row, j)] - alpha[j];
            for h in 0..=k {
                design[(i, row + k - h)] = beta[(h, j)];
            }
        }
    }
    design.svd(true, true).solve(&target, 1e-14).unwrap()
}

fn truncated_svd(z: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (t, m) = z.shape();
    let means = DVector::from_fn(m, |j, _| z.column(j).mean());
    let xc = DMatrix::from_fn(t, m, |i, j| z[(i, j)] - means[j]);
    let svd = xc.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::from_fn(t, m, |_, j| means[j]);
    for &i in order.iter().take(r) {
        out += u.column(i) * vt.row(i) * svd.singular_values[i];
    }
    out
}

fn oracle_check() -> (bool, String) {
    let mut rng = rng_from_seed(917);
    let instances = 24;
    let (mut mse_worst, mut factor_worst, mut sw_worst) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    let tight = GdpcOptions {
        tol: 1e-13,
        max_iter: 200_000,
        ..Default::default()
    };
    for case in 0..instances {
        let t = rng.random_range(7..=10);
        let m = rng.random_range(1..=4);
        // A single series gives T equations for T + k factor values, so the
        // factor system is singular by construction unless k = 0.
        let k = if m == 1 { 0 } else { rng.random_range(0..=2usize) };
        let latent: Vec<f64> = (0..t + k).map(|_| rng.sample(StandardNormal)).collect();
        let z = DMatrix::from_fn(t, m, |row, j| {
            let signal: f64 = (0..=k).map(|h| latent[row + k - h] * ((j + h) as f64 * 0.7).cos()).sum();
            signal + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        let panel = PanelMatrix::new(z.clone()).unwrap();

        let fit = fit_gdpc(&panel, k, &tight).unwrap();
        let oracle = objective_minimum(&z, k, &mut rng);
        let gap = (fit.mse - oracle).abs();
        mse_worst = mse_worst.max(gap);
        if gap > 1e-6 {
            failures.push(format!("case {case} (T={t}, m={m}, k={k}): fit {:.9} vs oracle {oracle:.9}", fit.mse));
        }

        let alpha = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
        let beta = DMatrix::from_fn(k + 1, m, |_, _| rng.sample(StandardNormal));
        let f = update_factor(&panel, &alpha, &beta).unwrap();
        let dense = dense_factor_solve(&z, &alpha, &beta);
        let diff = (&f - &dense).amax() / dense.amax().max(1.0);
        factor_worst = factor_worst.max(diff);
        if diff > 1e-10 {
            failures.push(format!("case {case}: factor update differs by {diff:e}"));
        }

        let r = rng.random_range(1..=t.min(m));
        let sw = fit_sw(&panel, r).unwrap().chi_hat;
        let diff = (sw - truncated_svd(&z, r)).amax();
        sw_worst = sw_worst.max(diff);
        if diff > 1e-10 {
            failures.push(format!("case {case}: static PCA differs by {diff:e}"));
        }
    }
    let mut detail = format!(
        "{instances} instances; worst |mse - oracle| {mse_worst:.2e} (tol 1e-6), \
         factor update vs dense {factor_worst:.2e} (tol 1e-10), static PCA vs SVD {sw_worst:.2e} (tol 1e-10)"
    );
    if !failures.is_empty() {
        detail.push_str("; ");
        detail.push_str(&failures.join("; "));
    }
    (failures.is_empty(), detail)
}

fn run_cli_benchmark(config: &Path, output: &Path, parallelism: usize) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_gdpc"))
        .args(["benchmark", "--config", config.to_str().unwrap()])
        .env("GDPC_BENCH_OUTPUT_PATH", output)
        .env("GDPC_BENCH_PARALLELISM", parallelism.to_string())
        .output()
        .expect("benchmark binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read(output).unwrap()
}

fn determinism_check() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "scenarios": ["DFM1", "DFM2AR"],
        "T_values": [60, 100],
        "m_values": [30, 120],
        "methods": ["GDPC", "FHLR", "SW"],
        "n_replications": 8,
        "base_seed": BASE_SEED,
        "output_path": "unused.csv",
        "parallelism": 1
    });
    let path = dir.path().join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let first = run_cli_benchmark(&path, &dir.path().join("a.csv"), 1);
    let second = run_cli_benchmark(&path, &dir.path().join("b.csv"), 1);
    let wide = run_cli_benchmark(&path, &dir.path().join("c.csv"), 8);
    let same_runs = first == second;
    let same_threads = first == wide;
    (
        same_runs && same_threads && !first.is_empty(),
        format!(
            "repeat run byte-identical: {same_runs}; parallelism 1 vs 8 byte-identical: {same_threads} ({} bytes, 8 cells x 3 methods x 8 replications)",
            first.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut verdicts = Vec::new();
    let start = Instant::now();

    let oracles = oracle_check();
    println!("Oracle instances done ({:.1}s)", start.elapsed().as_secs_f64());
    let determinism = determinism_check();
    println!("Determinism runs done ({:.1}s)", start.elapsed().as_secs_f64());

    let config = grid_config();
    println!(
        "Running {} cells x {} replications x 3 methods on {} thread(s)...",
        REFERENCE.len(),
        REPLICATIONS,
        config.parallelism
    );
    let result = run_benchmark(&config).expect("benchmark runs");
    println!("Grid finished in {:.1}s\n", start.elapsed().as_secs_f64());
    println!("{}", to_markdown(&result));
    println!("Standard errors and published means:");
    for (s, t, m, values) in REFERENCE {
        let cells: Vec<String> = Method::ALL
            .iter()
            .zip(values)
            .map(|(&method, target)| {
                let row = result.row(s, t, m, method).unwrap();
                format!("{method} {:.4} (se {:.4}, published {target:.4})", row.mean_rel_mse, row.se_rel_mse)
            })
            .collect();
        println!("  {s} T={t} m={m}: {}", cells.join(", "));
    }
    println!();
    let failures = result.total_failures();
    if failures > 0 {
        println!("{failures} replication failures: {:?}", result.failures);
    }

    let (pass, detail) = corner_check(&result, Method::Gdpc, 0.10, true);
    verdicts.push(Verdict { id: "C1", name: "GDPC corner cells", pass: pass && failures == 0, detail });
    let (pass, detail) = corner_check(&result, Method::Sw, 0.10, true);
    verdicts.push(Verdict { id: "C2", name: "SW corner cells", pass: pass && failures == 0, detail });
    let (pass, detail) = corner_check(&result, Method::Fhlr, 0.25, false);
    verdicts.push(Verdict { id: "C3", name: "FHLR corner cells", pass: pass && failures == 0, detail });
    let (pass, detail) = ordering_check(&result);
    verdicts.push(Verdict { id: "C4", name: "GDPC ordering", pass, detail });
    let (pass, detail) = inequality_check(&result);
    verdicts.push(Verdict { id: "C5", name: "per-replication inequalities", pass, detail });

    let (broken, compared) = trend_check(&result);
    let sizes = [25, 100, 400];
    let iid = idio_norm_medians(IdioLaw::Iid, &sizes);
    let ar = idio_norm_medians(IdioLaw::Ar1, &sizes);
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let norms_ok = decreasing(&iid) && decreasing(&ar);
    let mut detail = format!(
        "{}/{compared} strict decreases in T and m; median ||E||/sqrt(Tm) at min(T,m)=25/100/400: iid {:.4}/{:.4}/{:.4}, AR(1) {:.4}/{:.4}/{:.4}",
        compared - broken.len(),
        iid[0], iid[1], iid[2], ar[0], ar[1], ar[2]
    );
    if !broken.is_empty() {
        detail.push_str(&format!("; not decreasing: {}", broken.join(", ")));
    }
    verdicts.push(Verdict { id: "C6", name: "rate and trend", pass: broken.is_empty() && norms_ok, detail });

    let (pass, detail) = oracles;
    verdicts.push(Verdict { id: "C7", name: "oracle equivalence", pass, detail });
    let (pass, detail) = determinism;
    verdicts.push(Verdict { id: "C8", name: "determinism", pass, detail });

    println!("Acceptance criteria:");
    for v in &verdicts {
        report(v);
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("{passed}/{} criteria passed ({:.1}s total)", verdicts.len(), start.elapsed().as_secs_f64());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
