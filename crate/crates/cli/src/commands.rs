use std::path::{Path, PathBuf};
use std::time::Instant;

use dispest::bounds::{
    bayes_mse, bound_most_informative, gap_d, scaling_factors, scheme_var0, scheme_variance_sum, sql_with_prior,
    BoundQuery, BoundReport, Jitter, Prior, Weight,
};
use dispest::entanglement::duan_check;
use dispest::sim::{
    expected_mse, run_pipeline, uncertainty_product, Params, Pipeline, RunConfig, RunStats, Scaling,
};
use dispest::Probe;
use serde::Serialize;

use crate::args::{Axis, BoundsArgs, FigureArgs, FigureName, Format, ProbeArgs, ProbeKind, Quantity, ScalingArg, SimulateArgs, SweepArgs};
use crate::error::CliError;
use crate::output::{num, write_csv, write_csv_file, RunRecord};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn probe_from_args(a: &ProbeArgs) -> Result<Probe, CliError> {
    let r = a.r.unwrap_or(0.0);
    let asym = a.n1.zip(a.n2);
    match a.probe {
        ProbeKind::Coherent => {
            if a.r.is_some() || a.n.is_some() || asym.is_some() {
                return Err(usage("--probe coherent takes no --r/--N/--N1/--N2"));
            }
            Ok(Probe::Coherent)
        }
        ProbeKind::Single | ProbeKind::Tmst => {
            if asym.is_some() {
                return Err(usage("--N1/--N2 need --probe tmst-asym"));
            }
            let n = a.n.unwrap_or(0.0);
            Ok(if a.probe == ProbeKind::Single { Probe::Single { r, n } } else { Probe::Tmst { r, n } })
        }
        ProbeKind::TmstAsym => {
            let (n1, n2) = asym.ok_or_else(|| usage("--probe tmst-asym needs --N1 and --N2"))?;
            Ok(Probe::TmstAsym { r, n1, n2 })
        }
    }
}

fn prior_from(delta: Option<f64>) -> Result<Prior, CliError> {
    match delta {
        None => Ok(Prior::Flat),
        Some(d) => Ok(Prior::gaussian(d)?),
    }
}

#[derive(Debug, Serialize)]
struct BoundsOutput {
    probe: Probe,
    #[serde(flatten)]
    report: BoundReport,
}

pub fn bounds(args: &BoundsArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let probe = probe_from_args(&args.probe)?;
    let weight = match args.weight {
        Some([g11, g12, g22]) => Weight::from_entries(g11, g12, g22)?,
        None => Weight::identity(),
    };
    let query = BoundQuery::new(probe)
        .with_prior(prior_from(args.delta)?)
        .with_weight(weight)
        .with_shots(args.shots);
    let report = bound_most_informative(&query)?;
    match args.format {
        Format::Json => {
            RunRecord::new("bounds", args, BoundsOutput { probe, report }, start.elapsed()).to_json()
        }
        Format::Csv => {
            let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
            let row = vec![
                num(report.b_s),
                num(report.b_r),
                num(report.b_mi),
                report.branch.to_string(),
                opt(report.r_ths),
                opt(report.r_sql),
                opt(report.gap),
            ];
            let mut buf = Vec::new();
            write_csv(&mut buf, "bounds", args, &["B_S", "B_R", "B_MI", "branch", "r_ths", "r_sql", "gap"], &[row])?;
            String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

pub fn run_config_from(args: &SimulateArgs) -> Result<(Pipeline, RunConfig), CliError> {
    let asym = args.n1.zip(args.n2);
    let (pipeline, probe) = if args.baseline {
        if asym.is_some() {
            return Err(usage("--baseline uses a single-mode probe; drop --N1/--N2"));
        }
        let probe = match args.n {
            None if args.r == 0.0 => Probe::Coherent,
            n => Probe::Single { r: args.r, n: n.unwrap_or(0.0) },
        };
        (Pipeline::Heterodyne, probe)
    } else {
        let probe = match asym {
            Some((n1, n2)) => Probe::TmstAsym { r: args.r, n1, n2 },
            None => Probe::Tmst { r: args.r, n: args.n.unwrap_or(0.0) },
        };
        (Pipeline::Scheme, probe)
    };
    let params = match args.prior_delta {
        Some(delta) => Params::Prior { delta },
        None => Params::Fixed { q0: args.q0.unwrap_or(0.0), p0: args.p0.unwrap_or(0.0) },
    };
    let scaling = match args.scaling {
        ScalingArg::None => Scaling::None,
        ScalingArg::Coherent => Scaling::Coherent,
        ScalingArg::Optimal => Scaling::Optimal,
        ScalingArg::Explicit(k) => Scaling::Explicit(k),
    };
    let mut cfg = RunConfig::new(probe, params, args.shots, args.seed)
        .with_workers(args.workers)
        .with_scaling(scaling);
    if let Some([dq2, dp2]) = args.jitter {
        cfg = cfg.with_jitter(Jitter::new(dq2, dp2)?);
    }
    if args.shots_csv.is_some() {
        cfg = cfg.with_records();
    }
    cfg.validate()?;
    Ok((pipeline, cfg))
}

#[derive(Debug, Serialize)]
struct SimulateOutput {
    pipeline: Pipeline,
    run: RunConfig,
    stats: RunStats,
    expected_mse: [f64; 2],
    expected_mse_sum: f64,
    /// `(mse_sum − expected) / SE`.
    z_score: f64,
    within_4se: bool,
    /// Most-informative bound of the probe under the same prior, one shot.
    b_mi: f64,
    uncertainty_product: f64,
    uncertainty_product_below_one: bool,
}

pub fn simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let (pipeline, cfg) = run_config_from(args)?;
    let run = run_pipeline(pipeline, &cfg)?;
    let expected = expected_mse(pipeline, &cfg)?;
    let expected_sum = expected[0] + expected[1];
    let z = (run.stats.mse_sum - expected_sum) / run.stats.mse_sum_se;
    let prior = match cfg.params {
        Params::Prior { delta } => Prior::gaussian(delta)?,
        Params::Fixed { .. } => Prior::Flat,
    };
    let b_mi = bound_most_informative(&BoundQuery::new(cfg.probe).with_prior(prior))?.b_mi;
    let (product, below) = uncertainty_product(&run.stats);
    if let (Some(path), Some(records)) = (&args.shots_csv, &run.records) {
        let rows: Vec<Vec<String>> =
            records.iter().map(|s| vec![num(s.q0), num(s.p0), num(s.est_q0), num(s.est_p0)]).collect();
        write_csv_file(path, "simulate", args, &["q0", "p0", "est_q0", "est_p0"], &rows)?;
    }
    let output = SimulateOutput {
        pipeline,
        run: RunConfig { record_shots: cfg.record_shots, ..cfg.clone() },
        stats: run.stats,
        expected_mse: expected,
        expected_mse_sum: expected_sum,
        z_score: z,
        within_4se: z.abs() < 4.0,
        b_mi,
        uncertainty_product: product,
        uncertainty_product_below_one: below,
    };
    let json = RunRecord::new("simulate", args, output, start.elapsed()).to_json()?;
    if let Some(path) = &args.out {
        std::fs::write(path, &json).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(json)
}

pub fn linspace(min: f64, max: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    if steps == 0 || !min.is_finite() || !max.is_finite() || max < min {
        return Err(usage(format!("bad grid: min={min}, max={max}, steps={steps}")));
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    Ok((0..steps).map(|i| min + (max - min) * i as f64 / (steps - 1) as f64).collect())
}

#[derive(Debug, Serialize)]
struct FigureOutput {
    files: Vec<PathBuf>,
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn figure(args: &FigureArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let dir = out_dir(&args.out)?;
    let grid = linspace(args.r_min, args.r_max, args.steps)?;
    let files = match args.name {
        FigureName::Fig2 => vec![fig2(&dir, args, &grid)?],
        FigureName::Fig3 => fig3(&dir, args, &grid)?,
    };
    RunRecord::new("figure", args, FigureOutput { files }, start.elapsed()).to_json()
}

fn fig2(dir: &Path, args: &FigureArgs, grid: &[f64]) -> Result<PathBuf, CliError> {
    let names: Vec<String> = std::iter::once("r".to_string()).chain(args.ns.iter().map(|n| format!("D_N{n}"))).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows = grid
        .iter()
        .map(|&r| {
            let mut row = vec![num(r)];
            for &n in &args.ns {
                row.push(num(gap_d(r, n)?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let path = dir.join("fig2.csv");
    write_csv_file(&path, "figure fig2", args, &header, &rows)?;
    Ok(path)
}

fn fig3(dir: &Path, args: &FigureArgs, grid: &[f64]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for &delta in &args.deltas {
        let prior = Prior::gaussian(delta)?;
        let rows = grid
            .iter()
            .map(|&r| {
                let sf = scaling_factors(scheme_var0(r, args.n), delta)?;
                let b_mi = bound_most_informative(&BoundQuery::new(Probe::Tmst { r, n: args.n }).with_prior(prior))?.b_mi;
                Ok(vec![num(r), num(sf.mse_min), num(sf.mse_kc), num(b_mi), num(sql_with_prior(delta))])
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let path = dir.join(format!("fig3_{delta}.csv"));
        write_csv_file(&path, "figure fig3", args, &["r", "mse_Kmin", "mse_Kc", "B_MI_tmst", "B_SQL"], &rows)?;
        files.push(path);
    }
    Ok(files)
}

pub fn sweep_value(q: Quantity, r: f64, n: f64, delta: Option<f64>) -> Result<f64, CliError> {
    let need_delta = || delta.ok_or_else(|| usage(format!("{} needs --delta", q.name())));
    let report = || -> Result<BoundReport, CliError> {
        Ok(bound_most_informative(&BoundQuery::new(Probe::Tmst { r, n }).with_prior(prior_from(delta)?))?)
    };
    Ok(match q {
        Quantity::BS => report()?.b_s,
        Quantity::BR => report()?.b_r,
        Quantity::BMi => report()?.b_mi,
        Quantity::E => scheme_variance_sum(r, n, None),
        Quantity::EMinusBMi => scheme_variance_sum(r, n, None) - report()?.b_mi,
        Quantity::D => gap_d(r, n)?,
        Quantity::DuanLhs => duan_check(&Probe::Tmst { r, n }.state()?, 1.0)?.lhs,
        Quantity::MseKmin => scaling_factors(scheme_var0(r, n), need_delta()?)?.mse_min,
        Quantity::MseKc => {
            let d = need_delta()?;
            bayes_mse(scheme_var0(r, n), d, scaling_factors(1.0, d)?.k_c)
        }
        Quantity::BSql => sql_with_prior(need_delta()?),
    })
}

pub fn sweep(args: &SweepArgs) -> Result<String, CliError> {
    let grid = linspace(args.min, args.max, args.steps)?;
    let mut rows = Vec::new();
    for &q in &args.quantities {
        for &x in &grid {
            let (r, n) = match args.over {
                Axis::R => (x, args.n),
                Axis::N => (args.r, x),
            };
            let v = sweep_value(q, r, n, args.delta)?;
            rows.push(vec![q.name().to_string(), num(r), num(n), args.delta.map(num).unwrap_or_default(), num(v)]);
        }
    }
    let header = ["quantity", "r", "N", "delta", "value"];
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            write_csv_file(path, "sweep", args, &header, &rows)?;
            Ok(String::new())
        }
        None => {
            let mut buf = Vec::new();
            write_csv(&mut buf, "sweep", args, &header, &rows)?;
            String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = linspace(0.0, 3.0, 200).unwrap();
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[199], 3.0);
        assert!(linspace(1.0, 0.0, 5).is_err());
    }

    #[test]
    fn coherent_rejects_squeezing() {
        let a = ProbeArgs { probe: ProbeKind::Coherent, r: Some(0.1), n: None, n1: None, n2: None };
        assert!(matches!(probe_from_args(&a), Err(CliError::Usage(_))));
    }

    #[test]
    fn prior_quantities_need_delta() {
        assert!(matches!(sweep_value(Quantity::MseKmin, 1.0, 1.0, None), Err(CliError::Usage(_))));
        assert!((sweep_value(Quantity::BSql, 0.0, 0.0, Some(1.0)).unwrap() - 1.0).abs() < 1e-15);
    }
}
