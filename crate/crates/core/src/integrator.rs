//! Time integration: an adaptive Dormand–Prince 5(4) pair with PI step
//! control, dense output and wavefront event location, plus a fixed-step
//! classical RK4 reference integrator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dynamics, ShellState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),
    #[error("initial datum has {got} entries, system has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("initial datum is not finite")]
    NonFiniteDatum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    /// Stop once `sup_j λ^j u_j` reaches this value.
    pub blowup_threshold: f64,
    pub sample_interval: f64,
    /// Shells whose first upward crossing of `λ^{-j}` is recorded.
    pub event_levels: Vec<usize>,
}

impl IntegrationConfig {
    pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e8;
    pub const DEFAULT_DT_MIN: f64 = 1e-14;
    pub const DEFAULT_REL_TOL: f64 = 1e-10;
    /// Absolute floor of the error test; small so that tiny data are still
    /// resolved relative to their own size.
    pub const DEFAULT_ABS_TOL: f64 = 1e-12;

    /// Defaults for everything but the horizon and the relative tolerance.
    pub fn new(t_end: f64, rel_tol: f64) -> Self {
        Self {
            t_end,
            rel_tol,
            abs_tol: Self::DEFAULT_ABS_TOL,
            dt_init: 1e-4_f64.min(t_end),
            dt_min: Self::DEFAULT_DT_MIN,
            blowup_threshold: Self::DEFAULT_BLOWUP_THRESHOLD,
            sample_interval: (t_end / 100.0).max(f64::MIN_POSITIVE),
            event_levels: Vec::new(),
        }
    }

    pub fn with_sample_interval(mut self, dt: f64) -> Self {
        self.sample_interval = dt;
        self
    }

    pub fn with_blowup_threshold(mut self, v: f64) -> Self {
        self.blowup_threshold = v;
        self
    }

    pub fn with_event_levels(mut self, levels: impl IntoIterator<Item = usize>) -> Self {
        self.event_levels = levels.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: &str| Err(IntegrateError::InvalidConfig(m.to_string()));
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad("t_end must be finite and > 0");
        }
        if !in_unit(self.rel_tol) {
            return bad("rel_tol must lie in (0, 1)");
        }
        if !in_unit(self.abs_tol) {
            return bad("abs_tol must lie in (0, 1)");
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_init && self.dt_init <= self.t_end) {
            return bad("need 0 < dt_min < dt_init <= t_end");
        }
        if self.blowup_threshold.is_nan() || self.blowup_threshold <= 0.0 {
            return bad("blowup_threshold must be > 0");
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return bad("sample_interval must be finite and > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    BlowupThreshold,
    /// The controller asked for a step below `dt_min`. `non_finite` is set
    /// when the collapse was driven by NaN/Inf stage values.
    StepUnderflow { non_finite: bool },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::BlowupThreshold => "blowup_threshold",
            Termination::StepUnderflow { non_finite: false } => "step_underflow",
            Termination::StepUnderflow { non_finite: true } => "step_underflow_non_finite",
        }
    }
}

/// First upward crossing of `u_j = λ^{-j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub level: usize,
    pub t: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub final_dt: f64,
    /// Trapezoidal estimate of `∫ sup_j λ^j u_j dt` over the accepted steps.
    pub sup_integral: f64,
    pub t_stop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<ShellState>,
    pub events: Vec<Event>,
    pub termination: Termination,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn first(&self) -> &ShellState {
        &self.samples[0]
    }

    pub fn last(&self) -> &ShellState {
        self.samples.last().expect("trajectory always holds the initial datum")
    }

    pub fn event_time(&self, level: usize) -> Option<f64> {
        self.events.iter().find(|e| e.level == level).map(|e| e.t)
    }
}

/// `max_i scale(i) * u_i`, ties to the lower index.
pub(crate) fn sup_scaled_dyn<D: Dynamics + ?Sized>(sys: &D, u: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (i, &x) in u.iter().enumerate() {
        let v = sys.scale(i) * x;
        if v > best {
            best = v;
        }
    }
    best
}

fn check_datum<D: Dynamics + ?Sized>(sys: &D, u0: &ShellState) -> Result<(), IntegrateError> {
    if u0.u.len() != sys.dim() {
        return Err(IntegrateError::LengthMismatch { expected: sys.dim(), got: u0.u.len() });
    }
    if !u0.is_finite() {
        return Err(IntegrateError::NonFiniteDatum);
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension of order 4.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const GROW_MAX: f64 = 5.0;
const SHRINK_MIN: f64 = 0.2;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
    dense: [Vec<f64>; 5],
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
            dense: std::array::from_fn(|_| vec![0.0; n]),
        }
    }
}

/// Computes stages 2..7 from `k[0] = F(y)`; fills `y_new`, `err`, `k[6] = F(y_new)`.
fn dopri_stages<D: Dynamics + ?Sized>(sys: &D, y: &[f64], h: f64, ws: &mut Workspace) {
    let n = y.len();
    let Workspace { k, tmp, y_new, err, .. } = ws;
    let [k1, k2, k3, k4, k5, k6, k7] = k;
    for i in 0..n {
        tmp[i] = y[i] + h * (A21 * k1[i]);
    }
    sys.eval(tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    sys.eval(tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    sys.eval(tmp, k4);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    sys.eval(tmp, k5);
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    sys.eval(tmp, k6);
    for i in 0..n {
        y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    sys.eval(y_new, k7);
    for i in 0..n {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
}

/// Max-norm of the local error scaled by `abs_tol + rel_tol * |u|`.
fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], cfg: &IntegrationConfig) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..y.len() {
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        let r = (err[i] / sc).abs();
        if !r.is_finite() || !y_new[i].is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(r);
    }
    worst
}

fn prepare_dense(y: &[f64], h: f64, ws: &mut Workspace) {
    let Workspace { k, y_new, dense, .. } = ws;
    for i in 0..y.len() {
        let dy = y_new[i] - y[i];
        let bspl = h * k[0][i] - dy;
        dense[0][i] = y[i];
        dense[1][i] = dy;
        dense[2][i] = bspl;
        dense[3][i] = dy - h * k[6][i] - bspl;
        dense[4][i] = h
            * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
    }
}

fn dense_eval(dense: &[Vec<f64>; 5], theta: f64, out: &mut [f64]) {
    let theta1 = 1.0 - theta;
    for (i, o) in out.iter_mut().enumerate() {
        *o = dense[0][i]
            + theta * (dense[1][i] + theta1 * (dense[2][i] + theta * (dense[3][i] + theta1 * dense[4][i])));
    }
}

/// Cubic Hermite interpolant on `[0, h]` from endpoint values and slopes.
fn hermite(y0: f64, y1: f64, f0: f64, f1: f64, h: f64, theta: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
}

/// Root of the Hermite cubic minus `level` on `[0, 1]`, given a sign change
/// between the endpoints. Returns θ.
fn hermite_root(y0: f64, y1: f64, f0: f64, f1: f64, h: f64, level: f64) -> f64 {
    let g = |th: f64| hermite(y0, y1, f0, f1, h, th) - level;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    hi
}

struct EventTracker {
    levels: Vec<(usize, f64)>,
    found: Vec<Event>,
}

impl EventTracker {
    fn new<D: Dynamics + ?Sized>(sys: &D, levels: &[usize]) -> Self {
        let mut uniq: Vec<usize> = levels.iter().copied().filter(|&j| j < sys.dim()).collect();
        uniq.sort_unstable();
        uniq.dedup();
        Self { levels: uniq.into_iter().map(|j| (j, 1.0 / sys.scale(j))).collect(), found: Vec::new() }
    }

    fn pending(&self) -> bool {
        !self.levels.is_empty()
    }

    /// Checks every pending level for a crossing inside `[t, t + h]`.
    fn scan(&mut self, t: f64, h: f64, y0: &[f64], y1: &[f64], f0: &[f64], f1: &[f64]) {
        let mut hit = Vec::new();
        self.levels.retain(|&(j, level)| {
            if y0[j] < level && y1[j] >= level {
                let theta = hermite_root(y0[j], y1[j], f0[j], f1[j], h, level);
                hit.push(Event { level: j, t: (t + theta * h).min(t + h) });
                false
            } else {
                true
            }
        });
        self.found.extend(hit);
    }

    fn finish(mut self) -> Vec<Event> {
        self.found.sort_by_key(|e| e.level);
        self.found
    }
}

/// Adaptive integration on `[u0.t, u0.t + cfg.t_end]`.
pub fn integrate<D: Dynamics + ?Sized>(
    sys: &D,
    u0: &ShellState,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, IntegrateError> {
    cfg.validate()?;
    check_datum(sys, u0)?;
    let n = sys.dim();
    let t0 = u0.t;
    let t_final = t0 + cfg.t_end;

    let mut ws = Workspace::new(n);
    let mut y = u0.u.clone();
    let mut t = t0;
    let mut h = cfg.dt_init;
    let mut stats = StepStats::default();
    let mut samples = vec![u0.clone()];
    let mut next_sample: u64 = 1;
    let sample_time = |k: u64| t0 + k as f64 * cfg.sample_interval;
    let mut events = EventTracker::new(sys, &cfg.event_levels);
    let mut err_prev = 1e-4_f64;
    let mut just_rejected = false;
    let mut interp = vec![0.0; n];

    sys.eval(&y, &mut ws.k[0]);
    stats.rhs_evals += 1;
    let mut sup_prev = sup_scaled_dyn(sys, &y);

    let termination = if sup_prev >= cfg.blowup_threshold {
        Termination::BlowupThreshold
    } else {
        loop {
            let remaining = t_final - t;
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            dopri_stages(sys, &y, h_try, &mut ws);
            stats.rhs_evals += 6;
            let en = error_norm(&y, &ws.y_new, &ws.err, cfg);

            if en <= 1.0 {
                stats.accepted += 1;
                let t_new = if last { t_final } else { t + h_try };
                prepare_dense(&y, h_try, &mut ws);
                while next_sample < u64::MAX && sample_time(next_sample) < t_new {
                    let ts = sample_time(next_sample);
                    if ts >= t {
                        dense_eval(&ws.dense, (ts - t) / h_try, &mut interp);
                        samples.push(ShellState::new(ts, interp.clone()));
                    }
                    next_sample += 1;
                }
                if events.pending() {
                    events.scan(t, h_try, &y, &ws.y_new, &ws.k[0], &ws.k[6]);
                }
                let sup_new = sup_scaled_dyn(sys, &ws.y_new);
                stats.sup_integral += 0.5 * h_try * (sup_prev + sup_new);
                sup_prev = sup_new;

                std::mem::swap(&mut y, &mut ws.y_new);
                ws.k.swap(0, 6);
                t = t_new;

                let mut fac = SAFETY * en.max(1e-10).powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
                fac = fac.clamp(SHRINK_MIN, if just_rejected { 1.0 } else { GROW_MAX });
                err_prev = en.max(1e-4);
                just_rejected = false;
                if !last {
                    h = h_try * fac;
                }
                stats.final_dt = h_try;

                if sup_new >= cfg.blowup_threshold {
                    samples.push(ShellState::new(t, y.clone()));
                    break Termination::BlowupThreshold;
                }
                if last {
                    samples.push(ShellState::new(t, y.clone()));
                    break Termination::ReachedTEnd;
                }
            } else {
                stats.rejected += 1;
                just_rejected = true;
                let fac = if en.is_finite() {
                    (SAFETY * en.powf(-0.2)).clamp(SHRINK_MIN, 1.0)
                } else {
                    SHRINK_MIN
                };
                h = h_try * fac;
                if h < cfg.dt_min {
                    stats.final_dt = h;
                    if samples.last().is_some_and(|s| s.t < t) {
                        samples.push(ShellState::new(t, y.clone()));
                    }
                    break Termination::StepUnderflow { non_finite: !en.is_finite() };
                }
            }
        }
    };
    stats.t_stop = t;
    Ok(Trajectory { samples, events: events.finish(), termination, stats })
}

/// Settings for the fixed-step reference integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Keep every `record_every`-th step as a sample (the final state is
    /// always kept).
    pub record_every: usize,
    pub event_levels: Vec<usize>,
}

impl OracleConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self { t_end, dt, record_every: 1, event_levels: Vec::new() }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn with_event_levels(mut self, levels: impl IntoIterator<Item = usize>) -> Self {
        self.event_levels = levels.into_iter().collect();
        self
    }
}

/// Classical fixed-step RK4. Events are stamped with the end of the step in
/// which the crossing happened.
pub fn integrate_oracle<D: Dynamics + ?Sized>(
    sys: &D,
    u0: &ShellState,
    cfg: &OracleConfig,
) -> Result<Trajectory, IntegrateError> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite() && cfg.t_end > 0.0 && cfg.t_end.is_finite()) {
        return Err(IntegrateError::InvalidConfig("need finite dt > 0 and t_end > 0".into()));
    }
    check_datum(sys, u0)?;
    let n = sys.dim();
    let t0 = u0.t;
    let n_steps = (cfg.t_end / cfg.dt).ceil() as u64;
    let mut y = u0.u.clone();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut samples = vec![u0.clone()];
    let mut stats = StepStats::default();
    let mut pending: Vec<(usize, f64)> = cfg
        .event_levels
        .iter()
        .filter(|&&j| j < n)
        .map(|&j| (j, 1.0 / sys.scale(j)))
        .collect();
    let mut events = Vec::new();
    let mut t = t0;
    let mut sup_prev = sup_scaled_dyn(sys, &y);
    let mut termination = Termination::ReachedTEnd;

    for step in 1..=n_steps {
        let t_next = (t0 + step as f64 * cfg.dt).min(t0 + cfg.t_end);
        let h = t_next - t;
        sys.eval(&y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.eval(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.eval(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.eval(&tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        stats.rhs_evals += 4;
        if tmp.iter().any(|x| !x.is_finite()) {
            termination = Termination::StepUnderflow { non_finite: true };
            if samples.last().is_some_and(|s| s.t < t) {
                samples.push(ShellState::new(t, y.clone()));
            }
            break;
        }
        pending.retain(|&(j, level)| {
            if y[j] < level && tmp[j] >= level {
                events.push(Event { level: j, t: t_next });
                false
            } else {
                true
            }
        });
        std::mem::swap(&mut y, &mut tmp);
        let sup_new = sup_scaled_dyn(sys, &y);
        stats.sup_integral += 0.5 * h * (sup_prev + sup_new);
        sup_prev = sup_new;
        t = t_next;
        stats.accepted += 1;
        stats.final_dt = h;
        if step % cfg.record_every as u64 == 0 || step == n_steps {
            samples.push(ShellState::new(t, y.clone()));
        }
    }
    stats.t_stop = t;
    events.sort_by_key(|e| e.level);
    Ok(Trajectory { samples, events, termination, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn hermite_reproduces_cubics() {
        // p(x) = x^3 - x on [0.5, 1.5]
        let p = |x: f64| x * x * x - x;
        let dp = |x: f64| 3.0 * x * x - 1.0;
        let (a, h) = (0.5, 1.0);
        for th in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let v = hermite(p(a), p(a + h), dp(a), dp(a + h), h, th);
            assert!((v - p(a + th * h)).abs() < 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        let good = IntegrationConfig::new(1.0, 1e-8);
        assert!(good.validate().is_ok());
        let mut c = good.clone();
        c.rel_tol = 1.0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.dt_init = 2.0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.dt_min = c.dt_init;
        assert!(c.validate().is_err());
        let mut c = good;
        c.blowup_threshold = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_bad_datum() {
        let p = ModelParams::kp(2.0, 3).unwrap();
        let cfg = IntegrationConfig::new(1.0, 1e-8);
        assert!(matches!(
            integrate(&p, &ShellState::zeros(2), &cfg),
            Err(IntegrateError::LengthMismatch { .. })
        ));
        let bad = ShellState::new(0.0, vec![0.0, f64::NAN, 0.0]);
        assert_eq!(integrate(&p, &bad, &cfg), Err(IntegrateError::NonFiniteDatum));
    }

    #[test]
    fn zero_datum_stays_zero() {
        let p = ModelParams::obukhov(2.0, 6).unwrap();
        let cfg = IntegrationConfig::new(2.0, 1e-10);
        let tr = integrate(&p, &ShellState::zeros(6), &cfg).unwrap();
        assert_eq!(tr.termination, Termination::ReachedTEnd);
        assert!(tr.samples.iter().all(|s| s.u.iter().all(|&x| x == 0.0)));
        assert_eq!(tr.last().t, 2.0);
        let or = integrate_oracle(&p, &ShellState::zeros(6), &OracleConfig::new(1.0, 1e-2)).unwrap();
        assert!(or.samples.iter().all(|s| s.u.iter().all(|&x| x == 0.0)));
    }

    /// A system whose right-hand side is NaN everywhere.
    struct Poisoned;
    impl Dynamics for Poisoned {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _u: &[f64], du: &mut [f64]) {
            du.fill(f64::NAN);
        }
        fn scale(&self, _i: usize) -> f64 {
            1.0
        }
    }

    #[test]
    fn non_finite_steps_underflow_with_flag() {
        let cfg = IntegrationConfig::new(1.0, 1e-8);
        let tr = integrate(&Poisoned, &ShellState::new(0.0, vec![1.0, 1.0]), &cfg).unwrap();
        assert_eq!(tr.termination, Termination::StepUnderflow { non_finite: true });
        assert_eq!(tr.samples.len(), 1);
        assert!(tr.last().is_finite());
    }
}
