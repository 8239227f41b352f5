//! Random initial data `u_j(0) = a_j b_j` with `a_j = λ^{-(s+δ)j}` and
//! independent bounded `b_j`, and parallel ensembles of trajectories.
//!
//! Each `b_j` comes from a ChaCha8 stream keyed by `(seed, j)`, so the datum
//! does not depend on draw order, shell count or thread count.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{energy, sobolev_norm, SobolevSpec};
use crate::integrator::{integrate, IntegrateError, IntegrationConfig, Termination};
use crate::model::{ModelParams, ShellState};
use crate::tree::TreeParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("invalid random datum spec: {0}")]
    InvalidSpec(&'static str),
    #[error("invalid ensemble arguments: {0}")]
    InvalidArgs(String),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// `b_j` uniform on `[-1, 1)`.
    UniformSymmetric,
    /// `b_j = c` for every shell; a degenerate law for deterministic tests.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomDatumSpec {
    /// Sobolev index the datum is built to belong to (must exceed 1).
    pub s: f64,
    /// Extra decay so that `||u(0)||_{H^s}` is finite.
    pub delta: f64,
    pub n_shells: usize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl RandomDatumSpec {
    pub const DEFAULT_DELTA: f64 = 0.1;

    pub fn new(s: f64, n_shells: usize, seed: u64) -> Self {
        Self { s, delta: Self::DEFAULT_DELTA, n_shells, distribution: Distribution::UniformSymmetric, seed }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if !(self.s.is_finite() && self.s > 1.0) {
            return Err(EnsembleError::InvalidSpec("s must be finite and > 1"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(EnsembleError::InvalidSpec("delta must be finite and > 0"));
        }
        if self.n_shells == 0 {
            return Err(EnsembleError::InvalidSpec("n_shells must be >= 1"));
        }
        if let Distribution::Constant(c) = self.distribution {
            if c.is_nan() || c.abs() > 1.0 {
                return Err(EnsembleError::InvalidSpec("constant b must lie in [-1, 1]"));
            }
        }
        Ok(())
    }

    /// `(1 - λ^{-2δ})^{-1/2}`, the geometric-series bound on `||u(0)||_{H^s}`.
    pub fn hs_bound(&self, lambda: f64) -> f64 {
        (1.0 - lambda.powf(-2.0 * self.delta)).powf(-0.5)
    }
}

/// One draw of `b_j` in `[-1, 1)` from the stream keyed by `(seed, j)`.
fn keyed_uniform(seed: u64, j: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j);
    let bits = rng.next_u64() >> 11;
    let unit = bits as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

pub fn sample_initial_datum(spec: &RandomDatumSpec, lambda: f64) -> Result<ShellState, EnsembleError> {
    spec.validate()?;
    if !(lambda.is_finite() && lambda > 1.0) {
        return Err(EnsembleError::InvalidSpec("lambda must be > 1"));
    }
    let decay = lambda.powf(-(spec.s + spec.delta));
    let mut a = 1.0;
    let mut u = Vec::with_capacity(spec.n_shells);
    for j in 0..spec.n_shells {
        let b = match spec.distribution {
            Distribution::UniformSymmetric => keyed_uniform(spec.seed, j as u64),
            Distribution::Constant(c) => c,
        };
        u.push(a * b);
        a *= decay;
    }
    Ok(ShellState::new(0.0, u))
}

/// Tree analogue of [`sample_initial_datum`]: `u_Q = λ^{-(s+δ)j(Q)} b_Q`,
/// with `b_Q` keyed by `(seed, node index)`. `spec.n_shells` must equal the
/// node count.
pub fn sample_tree_datum(spec: &RandomDatumSpec, p: &TreeParams) -> Result<ShellState, EnsembleError> {
    spec.validate()?;
    if spec.n_shells != p.node_count() {
        return Err(EnsembleError::InvalidArgs(format!(
            "datum has {} entries, tree has {} nodes",
            spec.n_shells,
            p.node_count()
        )));
    }
    let decay = p.lambda().powf(-(spec.s + spec.delta));
    let mut u = vec![0.0; p.node_count()];
    let mut a = 1.0;
    for j in 0..=p.depth() {
        for i in p.level_range(j) {
            let b = match spec.distribution {
                Distribution::UniformSymmetric => keyed_uniform(spec.seed, i as u64),
                Distribution::Constant(c) => c,
            };
            u[i] = a * b;
        }
        a *= decay;
    }
    Ok(ShellState::new(0.0, u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub initial_hs: f64,
    pub initial_hr: f64,
    /// `sup_t ||u(t)||_{H^r}` over the samples.
    pub sup_hr: f64,
    pub initial_u0_sq_ratio: f64,
    /// `u_0(t_stop)^2 / E(0)`
    pub final_u0_sq_ratio: f64,
    /// Largest increase of `u_0` between consecutive samples (0 if none).
    pub u0_max_rise: f64,
    pub max_rel_energy_drift: f64,
    pub termination: Termination,
    pub t_stop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub runs: Vec<RunRecord>,
    pub max_sup_hr: f64,
    /// `(q, value)` pairs for q in [`QUANTILES`].
    pub sup_hr_quantiles: Vec<(f64, f64)>,
    pub non_completed: usize,
    pub blowups: usize,
}

pub const QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Nearest-rank empirical quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn run_one(
    p: &ModelParams,
    spec: &RandomDatumSpec,
    cfg: &IntegrationConfig,
    r: f64,
) -> Result<RunRecord, IntegrateError> {
    let lambda = p.lambda();
    let u0 = sample_initial_datum(spec, lambda).expect("spec validated by caller");
    let traj = integrate(p, &u0, cfg)?;
    let hr = SobolevSpec::new(r, lambda);
    let e0 = energy(&u0.u);
    let ratio = |u: &[f64]| if e0 > 0.0 { u[0] * u[0] / e0 } else { 0.0 };
    let sup_hr = traj.samples.iter().map(|s| sobolev_norm(&s.u, hr)).fold(0.0, f64::max);
    let u0_max_rise =
        traj.samples.windows(2).map(|w| w[1].u[0] - w[0].u[0]).fold(0.0, f64::max);
    let max_rel_energy_drift = traj
        .samples
        .iter()
        .map(|s| {
            let d = (energy(&s.u) - e0).abs();
            if e0 > 0.0 { d / e0 } else { d }
        })
        .fold(0.0, f64::max);
    Ok(RunRecord {
        seed: spec.seed,
        initial_hs: sobolev_norm(&u0.u, SobolevSpec::new(spec.s, lambda)),
        initial_hr: sobolev_norm(&u0.u, hr),
        sup_hr,
        initial_u0_sq_ratio: ratio(&u0.u),
        final_u0_sq_ratio: ratio(&traj.last().u),
        u0_max_rise,
        max_rel_energy_drift,
        termination: traj.termination,
        t_stop: traj.stats.t_stop,
    })
}

/// Integrates `n_runs` independent data with seeds `spec.seed + k` on a pool
/// of `threads` workers (`0` = rayon's default).
pub fn run_ensemble(
    p: &ModelParams,
    spec: &RandomDatumSpec,
    n_runs: usize,
    cfg: &IntegrationConfig,
    r: f64,
    threads: usize,
) -> Result<EnsembleSummary, EnsembleError> {
    spec.validate()?;
    cfg.validate()?;
    if n_runs == 0 {
        return Err(EnsembleError::InvalidArgs("n_runs must be >= 1".into()));
    }
    if !(r.is_finite() && r >= 0.0 && r < spec.s) {
        return Err(EnsembleError::InvalidArgs(format!("need 0 <= r < s, got r={r}, s={}", spec.s)));
    }
    if spec.n_shells != p.n_shells() {
        return Err(EnsembleError::InvalidArgs(format!(
            "datum has {} shells, model has {}",
            spec.n_shells,
            p.n_shells()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EnsembleError::ThreadPool(e.to_string()))?;
    let results: Vec<Result<RunRecord, IntegrateError>> = pool.install(|| {
        (0..n_runs as u64)
            .into_par_iter()
            .map(|k| {
                let spec_k = RandomDatumSpec { seed: spec.seed.wrapping_add(k), ..spec.clone() };
                run_one(p, &spec_k, cfg, r)
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(runs))
}

pub fn summarize(runs: Vec<RunRecord>) -> EnsembleSummary {
    let mut sups: Vec<f64> = runs.iter().map(|r| r.sup_hr).collect();
    sups.sort_by(f64::total_cmp);
    EnsembleSummary {
        max_sup_hr: sups.last().copied().unwrap_or(0.0),
        sup_hr_quantiles: QUANTILES.iter().map(|&q| (q, quantile(&sups, q))).collect(),
        non_completed: runs.iter().filter(|r| r.termination != Termination::ReachedTEnd).count(),
        blowups: runs.iter().filter(|r| r.termination == Termination::BlowupThreshold).count(),
        runs,
    }
}
