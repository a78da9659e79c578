//! Monte Carlo estimation of `(q₀, p₀)`.
//!
//! Two pipelines are simulated from exact Gaussian marginals:
//!
//! * the double-homodyne scheme: the displaced two-mode probe passes a
//!   balanced beam splitter, `p̂` is measured on output mode 0 and `q̂` on
//!   output mode 1;
//! * the heterodyne baseline on mode 0 of the probe.
//!
//! Both reduce to `x = R(θ + ε) + z` with a fixed response `R`, jitter `ε`
//! and Gaussian noise `z`, and the estimate `θ̂ = K ∘ R⁻¹x`.
//!
//! Each worker draws from its own ChaCha20 stream (`set_stream(worker)`) of
//! the master seed, and the per-worker sums are merged in worker order, so a
//! run is bit-reproducible for a fixed `(seed, workers)`.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::Jitter;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, Quadrature};
use crate::probe::Probe;

pub const MIN_SHOTS: u64 = 100;

/// How the true displacement is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Params {
    Fixed { q0: f64, p0: f64 },
    /// Redrawn every shot from independent `N(0, Δ²)` priors.
    Prior { delta: f64 },
}

/// Rescaling applied to the unbiased estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "lowercase")]
pub enum Scaling {
    /// `K = 1`.
    None,
    /// `K_c = Δ²/(1+Δ²)`.
    Coherent,
    /// `K_min = Δ²/(Var₀+Δ²)` per parameter.
    Optimal,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Scheme,
    Heterodyne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub probe: Probe,
    pub params: Params,
    pub shots: u64,
    pub seed: u64,
    pub workers: usize,
    pub scaling: Scaling,
    pub jitter: Option<Jitter>,
    /// Keep every `(θ, θ̂)` pair.
    pub record_shots: bool,
}

impl RunConfig {
    pub fn new(probe: Probe, params: Params, shots: u64, seed: u64) -> Self {
        Self {
            probe,
            params,
            shots,
            seed,
            workers: 1,
            scaling: Scaling::None,
            jitter: None,
            record_shots: false,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_jitter(mut self, jitter: Jitter) -> Self {
        self.jitter = Some(jitter);
        self
    }

    pub fn with_records(mut self) -> Self {
        self.record_shots = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.probe.validate()?;
        if self.shots < MIN_SHOTS {
            return Err(Error::Config(format!("need at least {MIN_SHOTS} shots, got {}", self.shots)));
        }
        if self.workers == 0 {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        match self.params {
            Params::Fixed { q0, p0 } if !(q0.is_finite() && p0.is_finite()) => {
                return Err(Error::Config(format!("true parameters must be finite, got ({q0}, {p0})")));
            }
            Params::Prior { delta } if !(delta > 0.0 && delta.is_finite()) => {
                return Err(Error::Config(format!("prior width must be finite and > 0, got {delta}")));
            }
            _ => {}
        }
        match self.scaling {
            Scaling::Coherent | Scaling::Optimal if self.prior_delta().is_none() => {
                Err(Error::Config("coherent and optimal scaling need a Gaussian prior".into()))
            }
            Scaling::Explicit(k) if !k.is_finite() => Err(Error::Config(format!("scaling factor must be finite, got {k}"))),
            _ => Ok(()),
        }?;
        if let Some(j) = self.jitter {
            Jitter::new(j.dq2, j.dp2).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn prior_delta(&self) -> Option<f64> {
        match self.params {
            Params::Prior { delta } => Some(delta),
            Params::Fixed { .. } => None,
        }
    }
}

/// Linear model `x = R θ + z`, `z ~ N(0, Σ)` of a measurement pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub gain: Matrix2<f64>,
    pub noise: Matrix2<f64>,
}

impl Response {
    /// Per-parameter variance of the unscaled estimate `R⁻¹x`.
    pub fn var0(&self) -> Result<[f64; 2]> {
        let inv = self.gain_inverse()?;
        let v = inv * self.noise * inv.transpose();
        Ok([v[(0, 0)], v[(1, 1)]])
    }

    fn gain_inverse(&self) -> Result<Matrix2<f64>> {
        self.gain
            .try_inverse()
            .ok_or_else(|| Error::Domain("measurement does not resolve both parameters".into()))
    }
}

/// Outcomes of the double-homodyne scheme as `(q̂ on output 1, p̂ on output 0)`.
fn scheme_outcomes(state: &GaussianState) -> Result<Vector2<f64>> {
    let out = state.beamsplit_balanced(0, 1)?;
    let (q, _) = out.homodyne_marginal(1, Quadrature::Q)?;
    let (p, _) = out.homodyne_marginal(0, Quadrature::P)?;
    Ok(Vector2::new(q, p))
}

/// Response of the double-homodyne scheme, obtained by propagating unit
/// displacements through the beam splitter.
pub fn double_homodyne(probe: &Probe) -> Result<Response> {
    if probe.modes() != 2 {
        return Err(Error::Config("the double-homodyne scheme needs a two-mode probe".into()));
    }
    double_homodyne_state(&probe.state()?)
}

/// Same as [`double_homodyne`] for an arbitrary two-mode state, displaced on mode 0.
pub fn double_homodyne_state(state: &GaussianState) -> Result<Response> {
    if state.modes() != 2 {
        return Err(Error::Config("the double-homodyne scheme needs a two-mode state".into()));
    }
    let base = scheme_outcomes(state)?;
    let dq = scheme_outcomes(&state.displace(0, 1.0, 0.0)?)? - base;
    let dp = scheme_outcomes(&state.displace(0, 0.0, 1.0)?)? - base;
    let gain = Matrix2::from_columns(&[dq, dp]);
    let out = state.beamsplit_balanced(0, 1)?;
    let cov = out.cov();
    // rows of the measured quadratures: q on mode 1, p on mode 0
    let idx = [2, 1];
    let noise = Matrix2::from_fn(|i, j| cov[(idx[i], idx[j])]);
    Ok(Response { gain, noise })
}

/// Response of heterodyne detection on mode 0: unit gain, noise `cov + I/2`.
pub fn heterodyne(probe: &Probe) -> Result<Response> {
    let state = probe.state()?;
    Ok(Response { gain: Matrix2::identity(), noise: state.heterodyne_outcome_cov(0)? })
}

fn response_for(pipeline: Pipeline, probe: &Probe) -> Result<Response> {
    match pipeline {
        Pipeline::Scheme => double_homodyne(probe),
        Pipeline::Heterodyne => heterodyne(probe),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub q0: f64,
    pub p0: f64,
    pub est_q0: f64,
    pub est_p0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub shots: u64,
    /// Scaling factors actually applied to `(q₀, p₀)`.
    pub k: [f64; 2],
    pub mean_estimate: [f64; 2],
    pub mse: [f64; 2],
    pub mse_se: [f64; 2],
    pub mse_sum: f64,
    /// Standard error of `mse_sum` from the empirical fourth moment.
    pub mse_sum_se: f64,
    /// Mean of `θ̂ − θ`.
    pub bias: [f64; 2],
    pub bias_se: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRun {
    pub pipeline: Pipeline,
    pub config: RunConfig,
    pub stats: RunStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<ShotRecord>>,
}

/// Per-worker sums. `u = R⁻¹x − θ` is the error of the unscaled estimate.
#[derive(Debug, Clone, Default)]
struct Accumulator {
    n: u64,
    est: [f64; 2],
    err: [f64; 2],
    err2: [f64; 2],
    err4: [f64; 2],
    sum: f64,
    sum2: f64,
    tt: [f64; 2],
    tu: [f64; 2],
    uu: [f64; 2],
}

impl Accumulator {
    fn push(&mut self, theta: [f64; 2], u: [f64; 2], k: [f64; 2]) {
        self.n += 1;
        let mut s = 0.0;
        for i in 0..2 {
            let est = k[i] * (theta[i] + u[i]);
            let e = est - theta[i];
            let e2 = e * e;
            self.est[i] += est;
            self.err[i] += e;
            self.err2[i] += e2;
            self.err4[i] += e2 * e2;
            self.tt[i] += theta[i] * theta[i];
            self.tu[i] += theta[i] * u[i];
            self.uu[i] += u[i] * u[i];
            s += e2;
        }
        self.sum += s;
        self.sum2 += s * s;
    }

    fn merge(&mut self, o: &Accumulator) {
        self.n += o.n;
        for i in 0..2 {
            self.est[i] += o.est[i];
            self.err[i] += o.err[i];
            self.err2[i] += o.err2[i];
            self.err4[i] += o.err4[i];
            self.tt[i] += o.tt[i];
            self.tu[i] += o.tu[i];
            self.uu[i] += o.uu[i];
        }
        self.sum += o.sum;
        self.sum2 += o.sum2;
    }

    /// MSE sum the same shots would give with a common factor `k`.
    fn mse_sum_at(&self, k: f64) -> f64 {
        let n = self.n as f64;
        (0..2)
            .map(|i| ((k - 1.0).powi(2) * self.tt[i] + 2.0 * k * (k - 1.0) * self.tu[i] + k * k * self.uu[i]) / n)
            .sum()
    }

    fn stats(&self, k: [f64; 2]) -> RunStats {
        let n = self.n as f64;
        let se = |s1: f64, s2: f64| (((s2 / n) - (s1 / n).powi(2)).max(0.0) / (n - 1.0)).sqrt();
        let mse = [self.err2[0] / n, self.err2[1] / n];
        RunStats {
            shots: self.n,
            k,
            mean_estimate: [self.est[0] / n, self.est[1] / n],
            mse,
            mse_se: [se(self.err2[0], self.err4[0]), se(self.err2[1], self.err4[1])],
            mse_sum: self.sum / n,
            mse_sum_se: se(self.sum, self.sum2),
            bias: [self.err[0] / n, self.err[1] / n],
            bias_se: [se(self.err[0], self.err2[0]), se(self.err[1], self.err2[1])],
        }
    }
}

fn resolve_k(cfg: &RunConfig, resp: &Response) -> Result<[f64; 2]> {
    Ok(match cfg.scaling {
        Scaling::None => [1.0; 2],
        Scaling::Explicit(k) => [k; 2],
        Scaling::Coherent => {
            let d2 = cfg.prior_delta().map(|d| d * d).unwrap_or(f64::INFINITY);
            [d2 / (1.0 + d2); 2]
        }
        Scaling::Optimal => {
            let d2 = cfg.prior_delta().map(|d| d * d).unwrap_or(f64::INFINITY);
            let v = resp.var0()?;
            [d2 / (v[0] + d2), d2 / (v[1] + d2)]
        }
    })
}

fn shots_for(worker: usize, workers: usize, shots: u64) -> u64 {
    let w = workers as u64;
    shots / w + u64::from((worker as u64) < shots % w)
}

fn simulate(pipeline: Pipeline, cfg: &RunConfig) -> Result<(Accumulator, [f64; 2], Option<Vec<ShotRecord>>)> {
    cfg.validate()?;
    let resp = response_for(pipeline, &cfg.probe)?;
    let k = resolve_k(cfg, &resp)?;
    let inv = resp.gain_inverse()?;
    let chol = resp
        .noise
        .cholesky()
        .ok_or_else(|| Error::Domain("outcome covariance is not positive definite".into()))?
        .l();
    let jitter_sd = cfg.jitter.map_or([0.0; 2], |j| [j.dq2.sqrt(), j.dp2.sqrt()]);

    let worker = |w: usize| {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(w as u64);
        let n = shots_for(w, cfg.workers, cfg.shots);
        let mut acc = Accumulator::default();
        let mut records = cfg.record_shots.then(|| Vec::with_capacity(n as usize));
        for _ in 0..n {
            let theta = match cfg.params {
                Params::Fixed { q0, p0 } => [q0, p0],
                Params::Prior { delta } => {
                    [delta * rng.sample::<f64, _>(StandardNormal), delta * rng.sample::<f64, _>(StandardNormal)]
                }
            };
            let applied = Vector2::new(
                theta[0] + jitter_sd[0] * rng.sample::<f64, _>(StandardNormal),
                theta[1] + jitter_sd[1] * rng.sample::<f64, _>(StandardNormal),
            );
            let z = chol * Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
            let x = resp.gain * applied + z;
            let raw = inv * x;
            let u = [raw[0] - theta[0], raw[1] - theta[1]];
            acc.push(theta, u, k);
            if let Some(r) = records.as_mut() {
                r.push(ShotRecord { q0: theta[0], p0: theta[1], est_q0: k[0] * raw[0], est_p0: k[1] * raw[1] });
            }
        }
        (acc, records)
    };

    let parts: Vec<(Accumulator, Option<Vec<ShotRecord>>)> = if cfg.workers == 1 {
        vec![worker(0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..cfg.workers).map(|w| s.spawn(move || worker(w))).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    let mut total = Accumulator::default();
    let mut records = cfg.record_shots.then(Vec::new);
    for (acc, rec) in &parts {
        total.merge(acc);
        if let (Some(all), Some(rec)) = (records.as_mut(), rec) {
            all.extend_from_slice(rec);
        }
    }
    Ok((total, k, records))
}

fn run(pipeline: Pipeline, cfg: &RunConfig) -> Result<EstimationRun> {
    let (acc, k, records) = simulate(pipeline, cfg)?;
    Ok(EstimationRun { pipeline, config: cfg.clone(), stats: acc.stats(k), records })
}

/// Double-homodyne estimation with a two-mode probe.
pub fn run_scheme(cfg: &RunConfig) -> Result<EstimationRun> {
    run(Pipeline::Scheme, cfg)
}

/// Heterodyne estimation on mode 0 of the probe.
pub fn run_baseline_heterodyne(cfg: &RunConfig) -> Result<EstimationRun> {
    run(Pipeline::Heterodyne, cfg)
}

pub fn run_pipeline(pipeline: Pipeline, cfg: &RunConfig) -> Result<EstimationRun> {
    run(pipeline, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScan {
    pub k_star: f64,
    pub mse_star: f64,
    /// `(K, MSE sum)` for every grid point, all evaluated on the same shots.
    pub curve: Vec<(f64, f64)>,
}

/// Grid search for the common scaling factor minimising the MSE sum. Every
/// grid point reuses the same random draws.
pub fn empirical_k_min(pipeline: Pipeline, cfg: &RunConfig, grid: &[f64]) -> Result<KScan> {
    if grid.is_empty() || grid.iter().any(|&k| !(k > 0.0 && k <= 1.0)) {
        return Err(Error::Config("K grid must be non-empty and inside (0, 1]".into()));
    }
    let (acc, _, _) = simulate(pipeline, &RunConfig { record_shots: false, ..cfg.clone() })?;
    let curve: Vec<(f64, f64)> = grid.iter().map(|&k| (k, acc.mse_sum_at(k))).collect();
    let &(k_star, mse_star) = curve
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is non-empty");
    Ok(KScan { k_star, mse_star, curve })
}

/// Evenly spaced grid `step, 2·step, …, 1`.
pub fn k_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / points as f64).collect()
}

/// Exact per-parameter MSE of a run, `(K−1)² E[θ²] + K² (Var₀ + jitter)`.
pub fn expected_mse(pipeline: Pipeline, cfg: &RunConfig) -> Result<[f64; 2]> {
    cfg.validate()?;
    let resp = response_for(pipeline, &cfg.probe)?;
    let k = resolve_k(cfg, &resp)?;
    let v = resp.var0()?;
    let theta2 = match cfg.params {
        Params::Fixed { q0, p0 } => [q0 * q0, p0 * p0],
        Params::Prior { delta } => [delta * delta; 2],
    };
    let jit = cfg.jitter.map_or([0.0; 2], |j| [j.dq2, j.dp2]);
    Ok([0, 1].map(|i| (k[i] - 1.0).powi(2) * theta2[i] + k[i] * k[i] * (v[i] + jit[i])))
}

/// `MSE(q₀)·MSE(p₀)` and whether it falls below 1.
pub fn uncertainty_product(stats: &RunStats) -> (f64, bool) {
    let product = stats.mse[0] * stats.mse[1];
    (product, product < 1.0)
}
