//! Built-in invariant suite behind `dyadic-cascade verify`: closed forms,
//! conservation laws and pinned reference values, all at fixed seeds.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{check_invariants, energy, wavefront_report, Tolerances};
use crate::ensemble::{sample_initial_datum, RandomDatumSpec};
use crate::integrator::{integrate, integrate_oracle, Event, IntegrationConfig, OracleConfig, Termination};
use crate::model::{Dynamics, ModelParams, ShellState};
use crate::tree::{picard_time, TreeParams, TreeVariant};

/// Deliberate non-conservative perturbation `F(u) + εu`, used to prove the
/// suite can fail.
struct Faulty<'a, D: ?Sized> {
    inner: &'a D,
    eps: f64,
}

impl<D: Dynamics + ?Sized> Dynamics for Faulty<'_, D> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, u: &[f64], du: &mut [f64]) {
        self.inner.eval(u, du);
        for (d, x) in du.iter_mut().zip(u) {
            *d += self.eps * x;
        }
    }

    fn scale(&self, i: usize) -> f64 {
        self.inner.scale(i)
    }
}

const FAULT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

struct Suite {
    fault: bool,
    out: Vec<CheckOutcome>,
}

impl Suite {
    fn with<D: Dynamics + ?Sized, R>(&self, sys: &D, f: impl FnOnce(&dyn Dynamics) -> R) -> R {
        let eps = if self.fault { FAULT_EPS } else { 0.0 };
        f(&Faulty { inner: sys, eps })
    }

    fn eval<D: Dynamics + ?Sized>(&self, sys: &D, u: &[f64]) -> Vec<f64> {
        let mut du = vec![0.0; u.len()];
        self.with(sys, |s| s.eval(u, &mut du));
        du
    }

    fn record(&mut self, name: &'static str, pass: bool, detail: String) {
        self.out.push(CheckOutcome { name, pass, detail });
    }
}

fn random_state(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0).collect()
}

fn chain_models() -> Vec<(&'static str, ModelParams)> {
    vec![
        ("kp", ModelParams::kp(2.0, 12).unwrap()),
        ("obukhov", ModelParams::obukhov(2.0, 12).unwrap()),
        ("mixed", ModelParams::new(2.0, 0.7, -0.4, 12).unwrap()),
    ]
}

/// Runs every check. With `inject_fault` the right-hand side is perturbed so
/// that the conservation checks must fail.
pub fn run_suite(inject_fault: bool) -> Vec<CheckOutcome> {
    let mut s = Suite { fault: inject_fault, out: Vec::new() };

    // rhs against hand-computed values
    let u = [1.0, 1.0, 0.0];
    let cases = [
        (ModelParams::kp(2.0, 3).unwrap(), [-2.0, 2.0, 4.0]),
        (ModelParams::obukhov(2.0, 3).unwrap(), [-2.0, 2.0, 0.0]),
        (ModelParams::new(2.0, 1.0, 1.0, 3).unwrap(), [-4.0, 4.0, 4.0]),
    ];
    let ok = cases.iter().all(|(p, want)| s.eval(p, &u) == want);
    s.record("rhs_reference_values", ok, "u=(1,1,0), lambda=2".into());

    // <u, F(u)> = 0 up to rounding
    let mut worst: f64 = 0.0;
    for (_, p) in chain_models() {
        for seed in 0..20 {
            let u = random_state(seed, p.n_shells());
            let du = s.eval(&p, &u);
            let dot: f64 = u.iter().zip(&du).map(|(a, b)| a * b).sum();
            let scale: f64 = u.iter().zip(&du).map(|(a, b)| (a * b).abs()).sum::<f64>() + f64::MIN_POSITIVE;
            worst = worst.max(dot.abs() / scale);
        }
    }
    s.record("energy_conservation", worst <= 1e-12, format!("max |<u,F(u)>| / sum|u_j F_j| = {worst:.3e}"));

    // d/dt of the tail energy equals the flux
    let mut worst: f64 = 0.0;
    for (_, p) in chain_models() {
        let u = random_state(99, p.n_shells());
        let du = s.eval(&p, &u);
        let f = p.energy_flux(&ShellState::new(0.0, u.clone())).unwrap().f;
        for j in 1..u.len() {
            let rate: f64 = (j..u.len()).map(|i| 2.0 * u[i] * du[i]).sum();
            worst = worst.max((rate - f[j]).abs() / (f[j].abs() + 1.0));
        }
    }
    s.record("flux_consistency", worst <= 1e-12, format!("max flux mismatch {worst:.3e}"));

    // two-shell closed forms
    let cfg = IntegrationConfig::new(1.0, 1e-12).with_sample_interval(0.125);
    let kp = ModelParams::kp(2.0, 2).unwrap();
    let ob = ModelParams::obukhov(2.0, 2).unwrap();
    let mut worst: f64 = 0.0;
    let kp_traj = s.with(&kp, |d| integrate(d, &ShellState::new(0.0, vec![1.0, 0.0]), &cfg));
    let ob_traj = s.with(&ob, |d| integrate(d, &ShellState::new(0.0, vec![0.0, 1.0]), &cfg));
    for (traj, exact) in [
        (kp_traj, (|t: f64| [1.0 / (2.0 * t).cosh(), (2.0 * t).tanh()]) as fn(f64) -> [f64; 2]),
        (ob_traj, |t: f64| [-(2.0 * t).tanh(), 1.0 / (2.0 * t).cosh()]),
    ] {
        match traj {
            Ok(traj) => {
                for smp in &traj.samples {
                    let e = exact(smp.t);
                    worst = worst.max((smp.u[0] - e[0]).abs().max((smp.u[1] - e[1]).abs()));
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    s.record("two_shell_closed_forms", worst <= 1e-8, format!("max error {worst:.3e}"));

    // long-run conservation and sign/monotonicity/support laws
    let tol = Tolerances::default();
    let cfg = IntegrationConfig::new(5.0, 1e-11);
    let runs: Vec<(&str, ModelParams, Vec<f64>)> = vec![
        ("kp", ModelParams::kp(2.0, 12).unwrap(), sample_initial_datum(&RandomDatumSpec::new(2.0, 12, 7), 2.0).unwrap().u),
        ("obukhov", ModelParams::obukhov(2.0, 12).unwrap(), sample_initial_datum(&RandomDatumSpec::new(2.0, 12, 8), 2.0).unwrap().u),
        ("obukhov_support", ModelParams::obukhov(2.0, 12).unwrap(), {
            let mut u = vec![0.0; 12];
            u[0] = 0.6;
            u[1] = 0.8;
            u
        }),
        ("mixed", ModelParams::new(2.0, 0.7, -0.4, 12).unwrap(), sample_initial_datum(&RandomDatumSpec::new(2.0, 12, 9), 2.0).unwrap().u),
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (name, p, u0) in runs {
        let res = s
            .with(&p, |d| integrate(d, &ShellState::new(0.0, u0), &cfg))
            .ok()
            .and_then(|traj| check_invariants(&traj, &p, &tol).ok());
        match res {
            Some(report) => {
                ok &= report.all_pass();
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| c.status == crate::diagnostics::CheckStatus::Fail)
                    .map(|c| c.name.as_str())
                    .collect();
                if !failed.is_empty() {
                    details.push(format!("{name}: {}", failed.join("+")));
                }
            }
            None => {
                ok = false;
                details.push(format!("{name}: run failed"));
            }
        }
    }
    s.record("trajectory_invariants", ok, if details.is_empty() { "kp, obukhov, mixed at t=5".into() } else { details.join("; ") });

    // adaptive integrator agrees with the fixed-step reference
    let p = ModelParams::kp(2.0, 6).unwrap();
    let u0 = ShellState::unit_mode(6, 0);
    let a = s.with(&p, |d| integrate(d, &u0, &IntegrationConfig::new(0.5, 1e-12)));
    let b = s.with(&p, |d| integrate_oracle(d, &u0, &OracleConfig::new(0.5, 1e-4)));
    let diff = match (a, b) {
        (Ok(a), Ok(b)) => a.last().u.iter().zip(&b.last().u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        _ => f64::INFINITY,
    };
    s.record("oracle_agreement", diff <= 1e-8, format!("max |dp5 - rk4| = {diff:.3e}"));

    // geometric arrival times t_j = 1 - 2^{-j} extrapolate to 1
    let events: Vec<Event> = (0..12).map(|j| Event { level: j, t: 1.0 - 0.5f64.powi(j as i32) }).collect();
    let est = wavefront_report(&events).ok().and_then(|r| r.blowup_estimate);
    let err = est.map_or(f64::INFINITY, |t| (t - 1.0).abs());
    s.record("wavefront_extrapolation", err <= 1e-12, format!("estimate {est:?}"));

    // branched tree: conservation and the d = 1 reduction
    let mut worst: f64 = 0.0;
    for variant in [TreeVariant::BranchedObukhov, TreeVariant::BranchedKp] {
        let p = TreeParams::new(2.0, 3, 5, variant).unwrap();
        let u = random_state(5, p.node_count());
        let du = s.eval(&p, &u);
        let dot: f64 = u.iter().zip(&du).map(|(a, b)| a * b).sum();
        let scale: f64 = u.iter().zip(&du).map(|(a, b)| (a * b).abs()).sum();
        worst = worst.max(dot.abs() / scale);
    }
    s.record("tree_energy_conservation", worst <= 1e-12, format!("max relative <u,F(u)> = {worst:.3e}"));

    let chain = ModelParams::obukhov(2.0, 10).unwrap();
    let tree = TreeParams::new(2.0, 1, 9, TreeVariant::BranchedObukhov).unwrap();
    let u = random_state(11, 10);
    let same = s.eval(&chain, &u) == s.eval(&tree, &u);
    s.record("tree_d1_reduction", same, "d=1 tree vs Obukhov chain, bitwise".into());

    let t1 = picard_time(1.0, 1, 2.0, 1.0).unwrap_or(f64::NAN);
    let t8 = picard_time(1.0, 8, 2.0, 1.0).unwrap_or(f64::NAN);
    let ok = t1 == 0.0625 && (t8 - 1.0 / (8.0 * 18f64.sqrt())).abs() <= 1e-15;
    s.record("picard_horizon", ok, format!("T(d=1)={t1}, T(d=8)={t8}"));

    // pinned random datum
    let got = sample_initial_datum(&RandomDatumSpec::new(2.0, 4, 42), 2.0).unwrap().u;
    let want = [0.36379238461334285, 0.1011368820383753, -0.03442914810770155, -0.0035106711910586584];
    s.record("random_datum_golden", got == want, "seed 42, lambda 2, s 2".into());

    // KP from e_0 hits the scaled threshold in finite time
    let p = ModelParams::kp(2.0, 16).unwrap();
    let cfg = IntegrationConfig::new(3.0, 1e-10).with_blowup_threshold(1e3);
    let res = s.with(&p, |d| integrate(d, &ShellState::unit_mode(16, 0), &cfg));
    let (ok, detail) = match res {
        Ok(t) => (
            t.termination == Termination::BlowupThreshold && (energy(&t.last().u) - 1.0).abs() <= 1e-8,
            format!("{} at t={}", t.termination.label(), t.stats.t_stop),
        ),
        Err(e) => (false, e.to_string()),
    };
    s.record("kp_finite_time_growth", ok, detail);

    s.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        for c in run_suite(false) {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let out = run_suite(true);
        let failed: Vec<_> = out.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        assert!(failed.contains(&"energy_conservation"), "{failed:?}");
        assert!(failed.contains(&"tree_energy_conservation"), "{failed:?}");
    }
}
