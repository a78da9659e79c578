//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.
//! `cargo test -p dispest-cli --test acceptance`

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dispest::bounds::{
    bound_most_informative, bound_rld, bound_sld, gap_d, scaling_factors, scheme_variance_sum, sql_with_prior,
    thresholds, BoundQuery, Branch, FisherMatrices, Prior, Weight,
};
use dispest::entanglement::{duan_check, duan_optimal, ppt_entangled};
use dispest::fock::{converged_fisher, OracleConfig};
use dispest::gaussian::GaussianState;
use dispest::sim::{double_homodyne_state, run_baseline_heterodyne, Params, RunConfig, Scaling};
use dispest::{Probe, SQL};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dispest")
}

fn run_cli(args: &[&str]) -> Result<(Value, Duration), String> {
    let start = Instant::now();
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        return Err(format!("dispest {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    let v = serde_json::from_slice(&out.stdout).map_err(|e| format!("bad JSON from dispest {}: {e}", args.join(" ")))?;
    Ok((v, elapsed))
}

fn field(v: &Value, path: &[&str]) -> Result<f64, String> {
    let mut cur = v;
    for p in path {
        cur = cur.get(p).ok_or_else(|| format!("missing field {}", path.join(".")))?;
    }
    cur.as_f64().ok_or_else(|| format!("field {} is not a number", path.join(".")))
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Reads a CSV written by the CLI (skipping `#` lines) into column vectors.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        for (i, x) in rec.iter().enumerate() {
            cols[i].push(x.parse::<f64>().map_err(|e| format!("{x}: {e}"))?);
        }
    }
    Ok((header, cols))
}

fn column<'a>(header: &[String], cols: &'a [Vec<f64>], name: &str) -> Result<&'a [f64], String> {
    let i = header.iter().position(|h| h == name).ok_or_else(|| format!("no column {name}"))?;
    Ok(&cols[i])
}

fn sql_reproduction() -> Outcome {
    let (bounds, t1) = run_cli(&["bounds", "--probe", "coherent"])?;
    let b_mi = field(&bounds, &["outputs", "b_mi"])?;
    check(b_mi == 2.0, format!("coherent B_MI = {b_mi}, expected exactly 2"))?;
    let (sim, t2) = run_cli(&["simulate", "--baseline", "--shots", "100000", "--seed", "1"])?;
    let mse = field(&sim, &["outputs", "stats", "mse_sum"])?;
    let se = field(&sim, &["outputs", "stats", "mse_sum_se"])?;
    check((mse - SQL).abs() < 4.0 * se, format!("heterodyne MSE {mse} ± {se} not within 4 SE of 2"))?;
    let total = t1 + t2;
    check(total < Duration::from_secs(1), format!("took {total:?}"))?;
    Ok(format!("B_MI = {b_mi}, heterodyne MSE = {mse:.4} ± {se:.4}, {total:.2?}"))
}

fn closed_form_vs_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = OracleConfig { tail_tol: 1e-9, max_dim: 60, ..OracleConfig::default() };
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut worst: f64 = 0.0;
    let mut max_dim = 0;
    for r in [0.0f64, 0.3, 0.6, 1.0] {
        for n in [0.2, 0.5, 1.0, 2.0] {
            let c2 = (2.0 * r).cosh();
            let m: f64 = 2.0 * n + 1.0;
            let expect = [
                (Probe::Tmst { r, n }, m / c2, 4.0 * n * (n + 1.0) / (m * c2 - 1.0)),
                (Probe::Single { r, n }, m * c2, m * c2 + 1.0),
            ];
            for (probe, s_exact, r_exact) in expect {
                let of = converged_fisher(&probe, 0, &cfg).map_err(|e| format!("{probe:?}: {e}"))?;
                let jinv = of.jinv.ok_or_else(|| format!("{probe:?}: no RLD matrix"))?;
                let fm = FisherMatrices { h: of.h, jinv, pure: false };
                let w = Weight::identity();
                let b_s = bound_sld(&fm, &w, &Prior::Flat, 1);
                let b_r = bound_rld(&fm, &w, &Prior::Flat, 1).map_err(|e| e.to_string())?;
                let err = rel(b_s, s_exact).max(rel(b_r, r_exact));
                check(err < 1e-6, format!("{probe:?}: B_S {b_s} vs {s_exact}, B_R {b_r} vs {r_exact}"))?;
                check(of.dim <= 60, format!("{probe:?}: dim {}", of.dim))?;
                worst = worst.max(err);
                max_dim = max_dim.max(of.dim);
            }
        }
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(120), format!("took {t:?}"))?;
    Ok(format!("32 probes, worst relative error {worst:.1e}, dim ≤ {max_dim}, {t:.2?}"))
}

fn scheme_variance() -> Outcome {
    let (sim, t) = run_cli(&[
        "simulate", "--r", "1", "--N", "0.5", "--shots", "100000", "--seed", "3", "--q0", "0.7", "--p0", "-0.3",
        "--workers", "2",
    ])?;
    let mse = field(&sim, &["outputs", "stats", "mse_sum"])?;
    let se = field(&sim, &["outputs", "stats", "mse_sum_se"])?;
    let target = 4.0 * (-2f64).exp();
    check((mse - target).abs() < 4.0 * se, format!("MSE {mse} ± {se} vs {target}"))?;
    check(t < Duration::from_secs(5), format!("took {t:?}"))?;
    Ok(format!("MSE = {mse:.4} ± {se:.4} vs 4e^-2 = {target:.4}, {t:.2?}"))
}

fn threshold_crossing() -> Outcome {
    let (_, r_sql) = thresholds(1.0);
    let mut parts = Vec::new();
    for (r, beats) in [("0.65", true), ("0.45", false)] {
        let (sim, _) = run_cli(&["simulate", "--r", r, "--N", "1", "--shots", "1000000", "--seed", "5", "--workers", "4"])?;
        let mse = field(&sim, &["outputs", "stats", "mse_sum"])?;
        let se = field(&sim, &["outputs", "stats", "mse_sum_se"])?;
        let ok = if beats { mse + 4.0 * se < SQL } else { mse - 4.0 * se > SQL };
        check(ok, format!("r={r}: MSE {mse} ± {se}"))?;
        parts.push(format!("r={r}: {mse:.4}"));
    }
    Ok(format!("{} (r_sql = {r_sql:.4})", parts.join(", ")))
}

fn gap_identity(dir: &Path) -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let r = 3.0 * i as f64 / 199.0;
        let d = gap_d(r, 0.0).map_err(|e| e.to_string())?;
        worst = worst.max((d - (-4.0 * r).exp()).abs());
    }
    check(worst < 1e-9, format!("|D(r,0) − e^-4r| up to {worst}"))?;

    let out = dir.join("fig2");
    let status = Command::new(bin())
        .args(["figure", "fig2", "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    check(status.status.success(), "figure fig2 failed")?;
    let (header, cols) = read_csv(&out.join("fig2.csv"))?;
    check(header == ["r", "D_N0", "D_N0.5", "D_N2"], format!("header {header:?}"))?;
    let r = column(&header, &cols, "r")?;
    check(r.len() == 200, format!("{} rows", r.len()))?;
    for name in ["D_N0", "D_N0.5", "D_N2"] {
        let d = column(&header, &cols, name)?;
        let jump = d.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        check(jump < 0.1, format!("{name} jumps by {jump}"))?;
    }
    let d2 = column(&header, &cols, "D_N2")?;
    check(d2.windows(2).any(|w| w[1] > w[0]), "D_N2 is monotone")?;

    // branch switch of the N = 2 most-informative bound
    let (r_ths, _) = thresholds(2.0);
    let branch = |r: f64| bound_most_informative(&BoundQuery::new(Probe::Tmst { r, n: 2.0 })).map(|b| b.branch);
    let (mut lo, mut hi) = (0.5, 2.0);
    check(branch(lo).map_err(|e| e.to_string())? == Branch::Rld, "no R branch at r = 0.5")?;
    check(branch(hi).map_err(|e| e.to_string())? == Branch::Sld, "no S branch at r = 2")?;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if branch(mid).map_err(|e| e.to_string())? == Branch::Rld {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    check((lo - 1.1462).abs() < 1e-4 && (lo - r_ths).abs() < 1e-8, format!("switch at {lo}"))?;
    let left = gap_d(r_ths - 1e-9, 2.0).map_err(|e| e.to_string())?;
    let right = gap_d(r_ths + 1e-9, 2.0).map_err(|e| e.to_string())?;
    check((left - right).abs() < 1e-7, format!("D jumps at the switch: {left} vs {right}"))?;
    Ok(format!("max |D(r,0) − e^-4r| = {worst:.1e}, N=2 switch at r = {lo:.4}, non-monotone"))
}

fn prior_bounds(dir: &Path) -> Outcome {
    let mut worst: f64 = 0.0;
    for delta in [1.0, 2.0, 3.0, 5.0] {
        let q = BoundQuery::new(Probe::Coherent).with_prior(Prior::gaussian(delta).map_err(|e| e.to_string())?);
        let rep = bound_most_informative(&q).map_err(|e| e.to_string())?;
        let exact = sql_with_prior(delta);
        worst = worst.max((rep.b_r - exact).abs()).max((rep.b_mi - exact).abs());
    }
    check(worst < 1e-8, format!("coherent prior bound off by {worst}"))?;

    let out = dir.join("fig3");
    let status = Command::new(bin())
        .args(["figure", "fig3", "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    check(status.status.success(), "figure fig3 failed")?;
    for delta in ["1", "2", "3", "5"] {
        check(out.join(format!("fig3_{delta}.csv")).exists(), format!("missing fig3_{delta}.csv"))?;
    }
    let (header, cols) = read_csv(&out.join("fig3_2.csv"))?;
    check(header == ["r", "mse_Kmin", "mse_Kc", "B_MI_tmst", "B_SQL"], format!("header {header:?}"))?;
    let r = column(&header, &cols, "r")?;
    let mse = column(&header, &cols, "mse_Kmin")?;
    let b = column(&header, &cols, "B_MI_tmst")?;
    let mut gap: f64 = 0.0;
    for i in 0..r.len() {
        if r[i] >= 1.5 {
            gap = gap.max((mse[i] - b[i]) / b[i]);
        }
    }
    check(gap < 0.05, format!("mse_Kmin exceeds B_MI by {gap} for r ≥ 1.5"))?;
    Ok(format!("B_SQL(Δ) reproduced to {worst:.1e}; Δ=2 gap for r ≥ 1.5 at most {:.2}%", 100.0 * gap))
}

fn factor_two() -> Outcome {
    let cfg = RunConfig::new(Probe::Coherent, Params::Prior { delta: 1.0 }, 1_000_000, 17)
        .with_scaling(Scaling::Coherent)
        .with_workers(4);
    let run = run_baseline_heterodyne(&cfg).map_err(|e| e.to_string())?;
    let (mse, se) = (run.stats.mse_sum, run.stats.mse_sum_se);
    let sf = scaling_factors(1.0, 1.0).map_err(|e| e.to_string())?;
    check(sf.mse_kc == 1.0 && sql_with_prior(1.0) == 1.0, "analytic values differ from 1")?;
    check((mse - 1.0).abs() < 4.0 * se, format!("MSE {mse} ± {se} vs 1"))?;
    check((mse - 0.5).abs() > 4.0 * se, format!("MSE {mse} ± {se} consistent with 0.5"))?;
    Ok(format!("MSE = {mse:.4} ± {se:.4}: matches 1, excludes 0.5"))
}

/// Two-mode states with isotropic reduced covariances.
fn locally_unsqueezed() -> impl proptest::strategy::Strategy<Value = GaussianState> {
    use proptest::strategy::Strategy;
    (0.0..1.5f64, 0.0..2.0f64, 0.0..2.0f64, 0.0..6.3f64, -0.6..0.6f64, 0.0..0.5f64, 0.0..0.5f64, -1.0..1.0f64, 0.0..6.3f64)
        .prop_map(|(r, n1, n2, t1, dt, x, z, y, phi)| {
            let base = GaussianState::thermal_product(&[n1, n2]).unwrap().squeeze_two(0, 1, r).unwrap();
            let base = base.rotate(0, t1).unwrap().rotate(1, -t1 + dt).unwrap();
            let yc = y * (x * z).sqrt();
            let (c, s) = (phi.cos(), phi.sin());
            let rot = [[c, -s], [s, c]];
            let mut noise = DMatrix::zeros(4, 4);
            for i in 0..2 {
                noise[(i, i)] = x;
                noise[(i + 2, i + 2)] = z;
                for j in 0..2 {
                    noise[(i, j + 2)] = yc * rot[i][j];
                    noise[(j + 2, i)] = yc * rot[i][j];
                }
            }
            GaussianState::new(DVector::zeros(4), base.cov() + noise).unwrap()
        })
}

fn duan_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for r in [0.0, 0.3, 0.6, 1.0] {
        for n in [0.2, 0.5, 1.0, 2.0] {
            let state = Probe::Tmst { r, n }.state().map_err(|e| e.to_string())?;
            let lhs = duan_check(&state, 1.0).map_err(|e| e.to_string())?.lhs;
            worst = worst.max((lhs - scheme_variance_sum(r, n, None)).abs());
        }
    }
    check(worst < 1e-12, format!("|duan − E| up to {worst}"))?;

    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let config = Config { cases: 1000, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let counts = std::cell::Cell::new((0u32, 0u32));
    runner
        .run(&locally_unsqueezed(), |state| {
            let v = double_homodyne_state(&state).unwrap().var0().unwrap();
            let (total, beating) = counts.get();
            let beats = v[0] + v[1] < SQL - 1e-9;
            counts.set((total + 1, beating + u32::from(beats)));
            if beats {
                proptest::prop_assert!(duan_optimal(&state).unwrap().entangled_sufficient, "separable by Duan");
                proptest::prop_assert!(ppt_entangled(&state).unwrap(), "separable by PPT");
            }
            Ok(())
        })
        .map_err(|e| format!("state beating the SQL without entanglement: {e}"))?;
    let (total, beating) = counts.get();
    check(total >= 1000, format!("only {total} states"))?;
    Ok(format!("|duan − E| ≤ {worst:.1e}; {total} random states, {beating} beat the SQL, all entangled"))
}

fn heisenberg_scaling() -> Outcome {
    let r: f64 = 5.0;
    let v = scheme_variance_sum(r, 0.0, None) * r.sinh().powi(2);
    check((0.495..=0.505).contains(&v), format!("E·sinh²r = {v}"))?;
    Ok(format!("E(5,0)·sinh²5 = {v:.5}"))
}

fn jitter_additivity() -> Outcome {
    let base = ["simulate", "--r", "1", "--N", "0", "--shots", "100000", "--workers", "2"];
    let (clean, _) = run_cli(&[&base[..], &["--seed", "31"]].concat())?;
    let (noisy, _) = run_cli(&[&base[..], &["--seed", "32", "--jitter", "0.1,0.1"]].concat())?;
    let (m0, s0) = (field(&clean, &["outputs", "stats", "mse_sum"])?, field(&clean, &["outputs", "stats", "mse_sum_se"])?);
    let (m1, s1) = (field(&noisy, &["outputs", "stats", "mse_sum"])?, field(&noisy, &["outputs", "stats", "mse_sum_se"])?);
    let diff = m1 - m0;
    let se = (s0 * s0 + s1 * s1).sqrt();
    check((diff - 0.2).abs() < 4.0 * se, format!("difference {diff} ± {se}"))?;
    Ok(format!("MSE difference = {diff:.4} ± {se:.4} vs 0.2"))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<Criterion> = vec![
        ("SQL reproduction", Box::new(sql_reproduction)),
        ("closed form vs Fock oracle", Box::new(closed_form_vs_oracle)),
        ("scheme variance", Box::new(scheme_variance)),
        ("threshold crossing", Box::new(threshold_crossing)),
        ("gap identity", Box::new(|| gap_identity(dir.path()))),
        ("prior bounds", Box::new(|| prior_bounds(dir.path()))),
        ("factor-2 arbitration", Box::new(factor_two)),
        ("Duan identity and necessity", Box::new(duan_identity)),
        ("Heisenberg scaling", Box::new(heisenberg_scaling)),
        ("jitter additivity", Box::new(jitter_additivity)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
