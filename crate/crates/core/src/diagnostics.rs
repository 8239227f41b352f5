//! Observables on states and trajectories: Sobolev norms, tail and signed
//! energies, the scaled supremum `sup_j λ^j u_j`, invariant checks and the
//! wavefront interval geometry.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{Event, Trajectory};
use crate::model::{ModelParams, Preset, ShellState};
use crate::numerics::{weighted_norm, CompensatedSum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("shell index {index} out of range for {len} shells")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("trajectory has no wavefront events")]
    NoEvents,
    #[error("invariant checks need at least two samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevSpec {
    pub s: f64,
    pub lambda: f64,
}

impl SobolevSpec {
    pub fn new(s: f64, lambda: f64) -> Self {
        Self { s, lambda }
    }
}

/// `sqrt(sum_j λ^{2sj} u_j^2)`, accumulated with compensated summation.
pub fn sobolev_norm(u: &[f64], spec: SobolevSpec) -> f64 {
    weighted_norm(u, spec.lambda.powf(2.0 * spec.s))
}

pub fn energy(u: &[f64]) -> f64 {
    tail_energy(u, 0).unwrap_or(0.0)
}

/// `sum_{l>=j} u_l^2`; equal bit for bit to `E_+ + E_-` from
/// [`signed_energies`].
pub fn tail_energy(u: &[f64], j: usize) -> Result<f64, DiagError> {
    let (plus, minus) = signed_energies(u, j)?;
    Ok(plus + minus)
}

/// `(E_+, E_-)` over `l >= j`: energy carried by positive and by negative
/// modes. Zero modes count toward neither.
pub fn signed_energies(u: &[f64], j: usize) -> Result<(f64, f64), DiagError> {
    if j >= u.len() {
        return Err(DiagError::IndexOutOfRange { index: j, len: u.len() });
    }
    let mut plus = CompensatedSum::new();
    let mut minus = CompensatedSum::new();
    for &x in &u[j..] {
        if x > 0.0 {
            plus.add(x * x);
        } else if x < 0.0 {
            minus.add(x * x);
        }
    }
    Ok((plus.value(), minus.value()))
}

/// `(max_j λ^j u_j, argmax)`, ties broken toward the smaller index.
pub fn sup_scaled(u: &[f64], lambda: f64) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    let mut w = 1.0;
    for (j, &x) in u.iter().enumerate() {
        let v = w * x;
        if v > best.0 {
            best = (v, j);
        }
        w *= lambda;
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative energy drift `|E(t) - E(0)| / E(0)`.
    pub energy_rel: f64,
    /// How far a sign-stable mode may cross zero.
    pub sign_abs: f64,
    /// Allowed per-step decrease of `E_{+,j}`, as a multiple of `E(0)`.
    pub eplus_slack_rel: f64,
    /// Bound on `|u_j|` outside the initial support (Obukhov).
    pub support_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { energy_rel: 1e-9, sign_abs: 1e-10, eplus_slack_rel: 1e-8, support_abs: 1e-10 }
    }
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self { energy_rel: tol, sign_abs: tol, eplus_slack_rel: tol, support_abs: tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub worst: f64,
    pub at_t: Option<f64>,
    pub at_shell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<CheckResult>,
}

impl InvariantReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_ENERGY: &str = "energy_drift";
pub const CHECK_SIGN: &str = "sign_stability";
pub const CHECK_EPLUS: &str = "eplus_monotone";
pub const CHECK_SUPPORT: &str = "finite_support";

/// Worst violation tracker; `worst` starts at 0 so clean runs report 0.
struct Worst {
    value: f64,
    t: Option<f64>,
    shell: Option<usize>,
}

impl Worst {
    fn new() -> Self {
        Self { value: 0.0, t: None, shell: None }
    }

    fn offer(&mut self, v: f64, t: f64, shell: Option<usize>) {
        if v > self.value {
            *self = Self { value: v, t: Some(t), shell };
        }
    }

    fn result(self, name: &str, tol: f64) -> CheckResult {
        let status = if self.value <= tol { CheckStatus::Pass } else { CheckStatus::Fail };
        CheckResult { name: name.into(), status, worst: self.value, at_t: self.t, at_shell: self.shell }
    }
}

fn not_applicable(name: &str) -> CheckResult {
    CheckResult { name: name.into(), status: CheckStatus::NotApplicable, worst: 0.0, at_t: None, at_shell: None }
}

/// Runs the energy, sign, `E_+` monotonicity and finite-support checks over
/// every sample of `traj`.
pub fn check_invariants(
    traj: &Trajectory,
    p: &ModelParams,
    tol: &Tolerances,
) -> Result<InvariantReport, DiagError> {
    let samples = &traj.samples;
    if samples.len() < 2 {
        return Err(DiagError::TooFewSamples(samples.len()));
    }
    let n = p.n_shells();
    let e0 = energy(&samples[0].u);
    let preset = p.preset();
    let mut checks = Vec::with_capacity(4);

    let mut drift = Worst::new();
    for s in samples {
        let d = (energy(&s.u) - e0).abs();
        drift.offer(if e0 > 0.0 { d / e0 } else { d }, s.t, None);
    }
    checks.push(drift.result(CHECK_ENERGY, tol.energy_rel));

    // KP keeps once-nonnegative modes nonnegative; Obukhov the mirror image.
    let sign = match preset {
        Preset::Kp => Some(1.0),
        Preset::Obukhov => Some(-1.0),
        Preset::Mixed => None,
    };
    match sign {
        Some(sgn) => {
            let mut locked = vec![false; n];
            let mut worst = Worst::new();
            for s in samples {
                for j in 0..n {
                    let v = sgn * s.u[j];
                    if locked[j] {
                        worst.offer(-v, s.t, Some(j));
                    } else if v >= 0.0 {
                        locked[j] = true;
                    }
                }
            }
            checks.push(worst.result(CHECK_SIGN, tol.sign_abs));
        }
        None => checks.push(not_applicable(CHECK_SIGN)),
    }

    if preset == Preset::Kp {
        let slack = tol.eplus_slack_rel * e0;
        let mut worst = Worst::new();
        let mut prev: Vec<f64> = (0..n).map(|j| signed_energies(&samples[0].u, j).unwrap().0).collect();
        for s in &samples[1..] {
            for (j, pj) in prev.iter_mut().enumerate() {
                let cur = signed_energies(&s.u, j).unwrap().0;
                worst.offer(*pj - cur, s.t, Some(j));
                *pj = cur;
            }
        }
        let mut r = worst.result(CHECK_EPLUS, slack);
        if e0 > 0.0 {
            r.worst /= e0;
        }
        checks.push(r);
    } else {
        checks.push(not_applicable(CHECK_EPLUS));
    }

    let support_end = samples[0].u.iter().rposition(|&x| x != 0.0);
    let first_outside = support_end.map_or(0, |j| j + 1);
    if preset == Preset::Obukhov && first_outside < n {
        let mut worst = Worst::new();
        for s in samples {
            for j in first_outside..n {
                worst.offer(s.u[j].abs(), s.t, Some(j));
            }
        }
        checks.push(worst.result(CHECK_SUPPORT, tol.support_abs));
    } else {
        checks.push(not_applicable(CHECK_SUPPORT));
    }

    Ok(InvariantReport { checks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    /// `Δ_j = t_{j+1} - t_j`
    pub level: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    /// `Δ_{j+1} / Δ_j`
    pub level: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontReport {
    pub times: Vec<(usize, f64)>,
    pub intervals: Vec<Interval>,
    pub ratios: Vec<Ratio>,
    pub blowup_estimate: Option<f64>,
}

impl WavefrontReport {
    /// Median of `Δ_{j+1} / Δ_j` over ratios with both `Δ_j` and `Δ_{j+1}`
    /// indexed in `levels`.
    pub fn median_ratio(&self, levels: RangeInclusive<usize>) -> Option<f64> {
        let rs: Vec<f64> = self
            .ratios
            .iter()
            .filter(|r| levels.contains(&r.level) && levels.contains(&(r.level + 1)))
            .map(|r| r.r)
            .collect();
        median(rs)
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) })
}

const ESTIMATE_WINDOW: usize = 5;
const MIN_INTERVALS: usize = 3;

/// Wavefront intervals, their ratios, and a geometric extrapolation of the
/// blowup time from the trailing ratios.
pub fn wavefront_report(events: &[Event]) -> Result<WavefrontReport, DiagError> {
    if events.is_empty() {
        return Err(DiagError::NoEvents);
    }
    let mut times: Vec<(usize, f64)> = events.iter().map(|e| (e.level, e.t)).collect();
    times.sort_by_key(|&(j, _)| j);

    let intervals: Vec<Interval> = times
        .windows(2)
        .filter(|w| w[1].0 == w[0].0 + 1)
        .map(|w| Interval { level: w[0].0, dt: w[1].1 - w[0].1 })
        .collect();
    let ratios: Vec<Ratio> = intervals
        .windows(2)
        .filter(|w| w[1].level == w[0].level + 1 && w[0].dt > 0.0)
        .map(|w| Ratio { level: w[0].level, r: w[1].dt / w[0].dt })
        .collect();

    let blowup_estimate = if intervals.len() < MIN_INTERVALS {
        None
    } else {
        let tail = &ratios[ratios.len().saturating_sub(ESTIMATE_WINDOW)..];
        median(tail.iter().map(|r| r.r).collect()).filter(|r| (0.0..1.0).contains(r)).and_then(|r| {
            let last = intervals.last()?;
            let t_last = times.iter().find(|&&(j, _)| j == last.level + 1)?.1;
            Some(t_last + last.dt * r / (1.0 - r))
        })
    };

    Ok(WavefrontReport { times, intervals, ratios, blowup_estimate })
}

/// Convenience wrapper over a trajectory's recorded events.
pub fn trajectory_wavefront(traj: &Trajectory) -> Result<WavefrontReport, DiagError> {
    wavefront_report(&traj.events)
}

/// Per-sample scalar diagnostics written to `diag.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRow {
    pub t: f64,
    pub energy: f64,
    pub h1: f64,
    pub hs: f64,
    pub sup_scaled: f64,
    pub argmax: usize,
    pub extra: Vec<f64>,
}

pub fn diag_row(s: &ShellState, lambda: f64, hs_index: f64, extra: &[f64]) -> DiagRow {
    let (sup, argmax) = sup_scaled(&s.u, lambda);
    DiagRow {
        t: s.t,
        energy: energy(&s.u),
        h1: sobolev_norm(&s.u, SobolevSpec::new(1.0, lambda)),
        hs: sobolev_norm(&s.u, SobolevSpec::new(hs_index, lambda)),
        sup_scaled: sup,
        argmax,
        extra: extra.iter().map(|&r| sobolev_norm(&s.u, SobolevSpec::new(r, lambda))).collect(),
    }
}
