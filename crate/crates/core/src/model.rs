//! Linear-chain dyadic models: the KP and Obukhov systems and their
//! two-parameter linear family
//!
//! ```text
//! u_j' = α (λ^j u_{j-1}^2 - λ^{j+1} u_j u_{j+1})
//!      + β (λ^j u_{j-1} u_j - λ^{j+1} u_{j+1}^2)
//! ```
//!
//! truncated to `N` shells with `u_{-1} = u_N = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::power_table;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(Constraint),
    #[error("state has {got} entries, model has {expected} shells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("state contains a non-finite entry at index {0}")]
    NonFinite(usize),
}

/// The parameter constraint a rejected [`ModelParams`] violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    LambdaNotAboveOne,
    TooFewShells,
    DegenerateWeights,
    NonFiniteWeights,
    PowersOverflow,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let msg = match self {
            Constraint::LambdaNotAboveOne => "lambda <= 1 (lambda must be a finite number > 1)",
            Constraint::TooFewShells => "n_shells < 2",
            Constraint::DegenerateWeights => "alpha = beta = 0",
            Constraint::NonFiniteWeights => "alpha and beta must be finite",
            Constraint::PowersOverflow => "lambda^(n_shells+1) is not representable in f64",
        };
        f.write_str(msg)
    }
}

/// Boundary rule closing the truncated system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// `u_{-1} = u_N = 0`; the truncated system conserves energy exactly.
    #[default]
    ZeroTail,
}

/// Which named member of the family a parameter set is, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Kp,
    Obukhov,
    Mixed,
}

/// A validated member of the (α, β) model family.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    lambda: f64,
    alpha: f64,
    beta: f64,
    n_shells: usize,
    closure: Closure,
    /// λ^0 ..= λ^N
    powers: Vec<f64>,
}

impl ModelParams {
    pub fn new(lambda: f64, alpha: f64, beta: f64, n_shells: usize) -> Result<Self, ModelError> {
        validate_params(lambda, alpha, beta, n_shells)?;
        Ok(Self {
            lambda,
            alpha,
            beta,
            n_shells,
            closure: Closure::ZeroTail,
            powers: power_table(lambda, n_shells + 1),
        })
    }

    pub fn kp(lambda: f64, n_shells: usize) -> Result<Self, ModelError> {
        Self::new(lambda, 1.0, 0.0, n_shells)
    }

    pub fn obukhov(lambda: f64, n_shells: usize) -> Result<Self, ModelError> {
        Self::new(lambda, 0.0, 1.0, n_shells)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_shells(&self) -> usize {
        self.n_shells
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    /// `λ^j` for `0 <= j <= N`.
    pub fn power(&self, j: usize) -> f64 {
        self.powers[j]
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn preset(&self) -> Preset {
        match (self.alpha, self.beta) {
            (a, b) if a == 1.0 && b == 0.0 => Preset::Kp,
            (a, b) if a == 0.0 && b == 1.0 => Preset::Obukhov,
            _ => Preset::Mixed,
        }
    }

    /// Re-checks every invariant; `ModelParams` can only be built through
    /// [`ModelParams::new`], so this never fails for a live value.
    pub fn validate(&self) -> Result<&Self, ModelError> {
        validate_params(self.lambda, self.alpha, self.beta, self.n_shells)?;
        Ok(self)
    }

    /// Evaluates the right-hand side into `du`.
    pub fn rhs_into(&self, u: &[f64], du: &mut [f64]) {
        let n = self.n_shells;
        debug_assert_eq!(u.len(), n);
        debug_assert_eq!(du.len(), n);
        let (alpha, beta) = (self.alpha, self.beta);
        let pw = &self.powers;
        for j in 0..n {
            let um = if j == 0 { 0.0 } else { u[j - 1] };
            let uj = u[j];
            let up = if j + 1 < n { u[j + 1] } else { 0.0 };
            let kp = pw[j] * um * um - pw[j + 1] * uj * up;
            let ob = pw[j] * um * uj - pw[j + 1] * (up * up);
            du[j] = alpha * kp + beta * ob;
        }
    }

    pub fn rhs(&self, s: &ShellState) -> Result<Vec<f64>, ModelError> {
        self.check_state(&s.u)?;
        let mut du = vec![0.0; self.n_shells];
        self.rhs_into(&s.u, &mut du);
        Ok(du)
    }

    /// Tail-energy fluxes `f[j] = d/dt sum_{l>=j} u_l^2`.
    pub fn energy_flux(&self, s: &ShellState) -> Result<FluxVector, ModelError> {
        self.check_state(&s.u)?;
        let u = &s.u;
        let mut f = vec![0.0; self.n_shells];
        for j in 1..self.n_shells {
            let (um, uj) = (u[j - 1], u[j]);
            let two_pw = 2.0 * self.powers[j];
            f[j] = self.alpha * (two_pw * um * um * uj) + self.beta * (two_pw * um * uj * uj);
        }
        Ok(FluxVector { f })
    }

    pub fn check_state(&self, u: &[f64]) -> Result<(), ModelError> {
        if u.len() != self.n_shells {
            return Err(ModelError::LengthMismatch { expected: self.n_shells, got: u.len() });
        }
        if let Some(i) = u.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(())
    }
}

/// Checks the raw parameter tuple.
pub fn validate_params(lambda: f64, alpha: f64, beta: f64, n_shells: usize) -> Result<(), ModelError> {
    use Constraint::*;
    let err = |c| Err(ModelError::InvalidParams(c));
    if !(lambda.is_finite() && lambda > 1.0) {
        return err(LambdaNotAboveOne);
    }
    if n_shells < 2 {
        return err(TooFewShells);
    }
    if !(alpha.is_finite() && beta.is_finite()) {
        return err(NonFiniteWeights);
    }
    if alpha == 0.0 && beta == 0.0 {
        return err(DegenerateWeights);
    }
    if !power_table(lambda, n_shells + 2).last().is_some_and(|w| w.is_finite()) {
        return err(PowersOverflow);
    }
    Ok(())
}

/// Mode amplitudes `u_0 .. u_{N-1}` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    pub t: f64,
    pub u: Vec<f64>,
}

impl ShellState {
    pub fn new(t: f64, u: Vec<f64>) -> Self {
        Self { t, u }
    }

    pub fn zeros(n: usize) -> Self {
        Self { t: 0.0, u: vec![0.0; n] }
    }

    /// The unit datum `e_j`.
    pub fn unit_mode(n: usize, j: usize) -> Self {
        let mut u = vec![0.0; n];
        u[j] = 1.0;
        Self { t: 0.0, u }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.u.iter().all(|x| x.is_finite())
    }
}

/// `f[j]` is the rate of change of the tail energy `sum_{l>=j} u_l^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxVector {
    pub f: Vec<f64>,
}

/// Autonomous ODE system `u' = F(u)` with a per-component length scale
/// `λ^{level(i)}`, used by the integrator for blowup detection and events.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64], du: &mut [f64]);
    /// `λ^{level(i)}` of component `i`.
    fn scale(&self, i: usize) -> f64;
}

impl Dynamics for ModelParams {
    fn dim(&self) -> usize {
        self.n_shells
    }

    fn eval(&self, u: &[f64], du: &mut [f64]) {
        self.rhs_into(u, du);
    }

    fn scale(&self, i: usize) -> f64 {
        self.powers[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(u: &[f64]) -> ShellState {
        ShellState::new(0.0, u.to_vec())
    }

    #[test]
    fn validate_examples() {
        assert!(ModelParams::new(2.0, 1.0, 0.0, 8).is_ok());
        assert_eq!(
            ModelParams::new(1.0, 1.0, 0.0, 8).unwrap_err(),
            ModelError::InvalidParams(Constraint::LambdaNotAboveOne)
        );
        assert_eq!(
            ModelParams::new(2.0, 0.0, 0.0, 8).unwrap_err(),
            ModelError::InvalidParams(Constraint::DegenerateWeights)
        );
        assert_eq!(
            ModelParams::new(2.0, 1.0, 0.0, 1).unwrap_err(),
            ModelError::InvalidParams(Constraint::TooFewShells)
        );
        assert!(ModelParams::new(f64::NAN, 1.0, 0.0, 8).is_err());
        assert!(ModelParams::new(2.0, f64::INFINITY, 0.0, 8).is_err());
    }

    #[test]
    fn shell_count_is_capped_by_representable_powers() {
        // 2^1024 overflows
        assert!(ModelParams::kp(2.0, 1022).is_ok());
        assert_eq!(
            ModelParams::kp(2.0, 1023).unwrap_err(),
            ModelError::InvalidParams(Constraint::PowersOverflow)
        );
    }

    #[test]
    fn rhs_examples() {
        let u = st(&[1.0, 1.0, 0.0]);
        let kp = ModelParams::kp(2.0, 3).unwrap();
        let ob = ModelParams::obukhov(2.0, 3).unwrap();
        let mix = ModelParams::new(2.0, 1.0, 1.0, 3).unwrap();
        assert_eq!(kp.rhs(&u).unwrap(), vec![-2.0, 2.0, 4.0]);
        assert_eq!(ob.rhs(&u).unwrap(), vec![-2.0, 2.0, 0.0]);
        assert_eq!(mix.rhs(&u).unwrap(), vec![-4.0, 4.0, 4.0]);
    }

    #[test]
    fn flux_examples() {
        let u = st(&[1.0, 1.0, 0.0]);
        let kp = ModelParams::kp(2.0, 3).unwrap();
        let ob = ModelParams::obukhov(2.0, 3).unwrap();
        assert_eq!(kp.energy_flux(&u).unwrap().f[1], 4.0);
        assert_eq!(ob.energy_flux(&u).unwrap().f[1], 4.0);
        assert_eq!(kp.energy_flux(&u).unwrap().f[0], 0.0);
        // cross-check via 2 u_1 u_1' + 2 u_2 u_2'
        let du = kp.rhs(&u).unwrap();
        assert_eq!(2.0 * u.u[1] * du[1] + 2.0 * u.u[2] * du[2], 4.0);
    }

    #[test]
    fn rhs_rejects_bad_states() {
        let kp = ModelParams::kp(2.0, 3).unwrap();
        assert!(matches!(kp.rhs(&st(&[1.0, 0.0])), Err(ModelError::LengthMismatch { .. })));
        assert_eq!(kp.rhs(&st(&[1.0, f64::NAN, 0.0])), Err(ModelError::NonFinite(1)));
    }

    #[test]
    fn presets() {
        assert_eq!(ModelParams::kp(2.0, 4).unwrap().preset(), Preset::Kp);
        assert_eq!(ModelParams::obukhov(2.0, 4).unwrap().preset(), Preset::Obukhov);
        assert_eq!(ModelParams::new(2.0, 0.5, 0.5, 4).unwrap().preset(), Preset::Mixed);
    }
}
