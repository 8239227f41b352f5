//! Simulation and diagnostics for dyadic (shell) models of the 3D Euler
//! equation: the KP and Obukhov chains, their linear family, and the
//! branched tree variants.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod integrator;
pub mod io;
pub mod model;
pub mod numerics;
pub mod tree;
pub mod verify;

pub use config::{parse_config, RunConfig};
pub use diagnostics::{sobolev_norm, SobolevSpec};
pub use integrator::{integrate, integrate_oracle, IntegrationConfig, OracleConfig, Termination, Trajectory};
pub use model::{Dynamics, ModelParams, ShellState};
