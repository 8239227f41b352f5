//! Run configuration: a strict TOML document with the sections `[model]`,
//! `[datum]`, `[integration]`, `[diagnostics]`, `[ensemble]` and `[output]`.
//!
//! ```toml
//! [model]
//! kind = "obukhov"        # kp | obukhov | mixed | branched_obukhov | branched_kp
//! lambda = 2.0
//! n_shells = 8            # chain models; `d` and `depth` for branched ones
//!
//! [datum]
//! kind = "unit_mode"      # unit_mode (mode) | vector (values) | random (s, delta, seed)
//! mode = 0
//!
//! [integration]
//! t_end = 1.0
//! ```
//!
//! Unknown keys anywhere are errors.

use std::path::PathBuf;

use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::Tolerances;
use crate::ensemble::{Distribution, RandomDatumSpec};
use crate::integrator::IntegrationConfig;
use crate::model::ModelParams;
use crate::tree::{TreeParams, TreeVariant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    datum: RawDatum,
    integration: RawIntegration,
    #[serde(default)]
    diagnostics: RawDiagnostics,
    #[serde(default)]
    ensemble: RawEnsemble,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    lambda: f64,
    n_shells: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    d: Option<usize>,
    depth: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDatum {
    kind: String,
    mode: Option<usize>,
    values: Option<Vec<f64>>,
    s: Option<f64>,
    delta: Option<f64>,
    seed: Option<u64>,
    distribution: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegration {
    t_end: f64,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    dt_init: Option<f64>,
    dt_min: Option<f64>,
    blowup_threshold: Option<f64>,
    sample_interval: Option<f64>,
    event_levels: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    hs: Option<f64>,
    sobolev: Option<Vec<f64>>,
    invariants: Option<bool>,
    wavefront: Option<bool>,
    energy_tol: Option<f64>,
    sign_tol: Option<f64>,
    eplus_tol: Option<f64>,
    support_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    runs: Option<usize>,
    r: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    formats: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Chain(ModelParams),
    Tree(TreeParams),
}

impl ModelSpec {
    pub fn lambda(&self) -> f64 {
        match self {
            ModelSpec::Chain(p) => p.lambda(),
            ModelSpec::Tree(p) => p.lambda(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Chain(p) => p.n_shells(),
            ModelSpec::Tree(p) => p.node_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatumSource {
    UnitMode(usize),
    Vector(Vec<f64>),
    Random(RandomDatumSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSpec {
    /// Index of the `hs` column in `diag.csv`.
    pub hs: f64,
    /// Extra `h{r}` columns.
    pub sobolev: Vec<f64>,
    pub invariants: bool,
    pub wavefront: bool,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub runs: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub datum: DatumSource,
    pub integration: IntegrationConfig,
    pub diagnostics: DiagnosticsSpec,
    pub ensemble: EnsembleSpec,
    pub output: OutputSpec,
}

pub const DEFAULT_DT_INIT: f64 = 1e-4;
pub const DEFAULT_SAMPLES: f64 = 100.0;
pub const DEFAULT_HS: f64 = 2.0;
pub const DEFAULT_ENSEMBLE_R: f64 = 1.5;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn parse_error(text: &str, err: toml::de::Error) -> ConfigError {
    let message = err.message().to_string();
    let line = match err.span() {
        Some(span) => line_of(text, span.start),
        None => unknown_key_line(text, &message).unwrap_or(0),
    };
    ConfigError::Parse { line, message }
}

/// Finds the line of the key named in an "unknown field `key`" message.
fn unknown_key_line(text: &str, message: &str) -> Option<usize> {
    let key = message.split('`').nth(1)?;
    text.lines()
        .position(|l| l.trim_start().strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('=')))
        .map(|i| i + 1)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with_overrides(text, &[])
}

/// Like [`parse_config`], with `section.key=value` overrides applied before
/// validation. Values are parsed as TOML, falling back to a bare string.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| parse_error(text, e))?
    } else {
        let mut table: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        RawConfig::deserialize(toml::Value::Table(table)).map_err(|e| parse_error(text, e))?
    };
    build(raw)
}

fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), ConfigError> {
    let (path, value) = ov
        .split_once('=')
        .ok_or_else(|| invalid(ov, "override must look like section.key=value"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| invalid(path, "override key must look like section.key"))?;
    let value = value.trim();
    let parsed: toml::Value = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let sec = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| invalid(section, "not a section"))?;
    sec.insert(key.to_string(), parsed);
    Ok(())
}

fn require<T>(v: Option<T>, field: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| invalid(field, "required"))
}

fn forbid<T>(v: &Option<T>, field: &str, why: &str) -> Result<(), ConfigError> {
    match v {
        Some(_) => Err(invalid(field, why.to_string())),
        None => Ok(()),
    }
}

fn build(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let m = raw.model;
    if !(m.lambda.is_finite() && m.lambda > 1.0) {
        return Err(invalid("model.lambda", "must be a finite number > 1"));
    }
    let chain = |alpha: f64, beta: f64| -> Result<ModelSpec, ConfigError> {
        forbid(&m.d, "model.d", "only valid for branched models")?;
        forbid(&m.depth, "model.depth", "only valid for branched models")?;
        let n = require(m.n_shells, "model.n_shells")?;
        ModelParams::new(m.lambda, alpha, beta, n)
            .map(ModelSpec::Chain)
            .map_err(|e| invalid("model", e.to_string()))
    };
    let tree = |variant| -> Result<ModelSpec, ConfigError> {
        forbid(&m.n_shells, "model.n_shells", "not valid for branched models")?;
        forbid(&m.alpha, "model.alpha", "not valid for branched models")?;
        forbid(&m.beta, "model.beta", "not valid for branched models")?;
        let d = require(m.d, "model.d")?;
        let depth = require(m.depth, "model.depth")?;
        TreeParams::new(m.lambda, d, depth, variant).map(ModelSpec::Tree).map_err(|e| invalid("model", e.to_string()))
    };
    let preset_only = |field: &str, v: &Option<f64>| forbid(v, field, "only valid for kind = \"mixed\"");
    let model = match m.kind.as_str() {
        "kp" => {
            preset_only("model.alpha", &m.alpha)?;
            preset_only("model.beta", &m.beta)?;
            chain(1.0, 0.0)?
        }
        "obukhov" => {
            preset_only("model.alpha", &m.alpha)?;
            preset_only("model.beta", &m.beta)?;
            chain(0.0, 1.0)?
        }
        "mixed" => chain(require(m.alpha, "model.alpha")?, require(m.beta, "model.beta")?)?,
        "branched_obukhov" => tree(TreeVariant::BranchedObukhov)?,
        "branched_kp" => tree(TreeVariant::BranchedKp)?,
        other => return Err(invalid("model.kind", format!("unknown model kind `{other}`"))),
    };
    let dim = model.dim();

    let d = raw.datum;
    let datum = match d.kind.as_str() {
        "unit_mode" => {
            for (v, f) in [(d.values.is_some(), "datum.values"), (d.s.is_some(), "datum.s"), (d.delta.is_some(), "datum.delta"), (d.seed.is_some(), "datum.seed"), (d.distribution.is_some(), "datum.distribution")] {
                if v {
                    return Err(invalid(f, "only one datum source may be given"));
                }
            }
            let j = require(d.mode, "datum.mode")?;
            if j >= dim {
                return Err(invalid("datum.mode", format!("must be < {dim}")));
            }
            DatumSource::UnitMode(j)
        }
        "vector" => {
            for (v, f) in [(d.mode.is_some(), "datum.mode"), (d.s.is_some(), "datum.s"), (d.delta.is_some(), "datum.delta"), (d.seed.is_some(), "datum.seed"), (d.distribution.is_some(), "datum.distribution")] {
                if v {
                    return Err(invalid(f, "only one datum source may be given"));
                }
            }
            let values = require(d.values, "datum.values")?;
            if values.len() != dim {
                return Err(invalid("datum.values", format!("expected {dim} entries, got {}", values.len())));
            }
            if values.iter().any(|x| !x.is_finite()) {
                return Err(invalid("datum.values", "entries must be finite"));
            }
            DatumSource::Vector(values)
        }
        "random" => {
            forbid(&d.mode, "datum.mode", "only one datum source may be given")?;
            forbid(&d.values, "datum.values", "only one datum source may be given")?;
            let distribution = match d.distribution.as_deref() {
                None | Some("uniform_symmetric") => Distribution::UniformSymmetric,
                Some(other) => return Err(invalid("datum.distribution", format!("unknown distribution `{other}`"))),
            };
            let spec = RandomDatumSpec {
                s: require(d.s, "datum.s")?,
                delta: d.delta.unwrap_or(RandomDatumSpec::DEFAULT_DELTA),
                n_shells: dim,
                distribution,
                seed: d.seed.unwrap_or(0),
            };
            spec.validate().map_err(|e| invalid("datum", e.to_string()))?;
            DatumSource::Random(spec)
        }
        other => return Err(invalid("datum.kind", format!("unknown datum kind `{other}`"))),
    };

    let i = raw.integration;
    if !(i.t_end.is_finite() && i.t_end > 0.0) {
        return Err(invalid("integration.t_end", "must be finite and > 0"));
    }
    let integration = IntegrationConfig {
        t_end: i.t_end,
        rel_tol: i.rel_tol.unwrap_or(IntegrationConfig::DEFAULT_REL_TOL),
        abs_tol: i.abs_tol.unwrap_or(IntegrationConfig::DEFAULT_ABS_TOL),
        dt_init: i.dt_init.unwrap_or(DEFAULT_DT_INIT.min(i.t_end)),
        dt_min: i.dt_min.unwrap_or(IntegrationConfig::DEFAULT_DT_MIN),
        blowup_threshold: i.blowup_threshold.unwrap_or(IntegrationConfig::DEFAULT_BLOWUP_THRESHOLD),
        sample_interval: i.sample_interval.unwrap_or(i.t_end / DEFAULT_SAMPLES),
        event_levels: i.event_levels.unwrap_or_default(),
    };
    integration.validate().map_err(|e| invalid("integration", e.to_string()))?;
    if let Some(&j) = integration.event_levels.iter().find(|&&j| j >= dim) {
        return Err(invalid("integration.event_levels", format!("level {j} out of range")));
    }

    let g = raw.diagnostics;
    let defaults = Tolerances::default();
    let diagnostics = DiagnosticsSpec {
        hs: g.hs.unwrap_or(DEFAULT_HS),
        sobolev: g.sobolev.unwrap_or_default(),
        invariants: g.invariants.unwrap_or(true),
        wavefront: g.wavefront.unwrap_or(true),
        tolerances: Tolerances {
            energy_rel: g.energy_tol.unwrap_or(defaults.energy_rel),
            sign_abs: g.sign_tol.unwrap_or(defaults.sign_abs),
            eplus_slack_rel: g.eplus_tol.unwrap_or(defaults.eplus_slack_rel),
            support_abs: g.support_tol.unwrap_or(defaults.support_abs),
        },
    };
    if !(diagnostics.hs.is_finite() && diagnostics.hs >= 0.0) {
        return Err(invalid("diagnostics.hs", "must be finite and >= 0"));
    }
    if diagnostics.sobolev.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(invalid("diagnostics.sobolev", "indices must be finite and >= 0"));
    }
    let t = diagnostics.tolerances;
    if [t.energy_rel, t.sign_abs, t.eplus_slack_rel, t.support_abs].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(invalid("diagnostics", "tolerances must be finite and >= 0"));
    }

    let e = raw.ensemble;
    let ensemble = EnsembleSpec { runs: e.runs.unwrap_or(1), r: e.r.unwrap_or(DEFAULT_ENSEMBLE_R) };
    if ensemble.runs == 0 {
        return Err(invalid("ensemble.runs", "must be >= 1"));
    }
    if !(ensemble.r.is_finite() && ensemble.r >= 0.0) {
        return Err(invalid("ensemble.r", "must be finite and >= 0"));
    }

    let o = raw.output;
    let formats = o.formats.unwrap_or_else(|| vec!["csv".to_string()]);
    if let Some(f) = formats.iter().find(|f| f.as_str() != "csv") {
        return Err(invalid("output.formats", format!("unsupported format `{f}`")));
    }
    let output = OutputSpec { dir: PathBuf::from(o.dir.unwrap_or_else(|| DEFAULT_OUTPUT_DIR.to_string())), formats };

    Ok(RunConfig { model, datum, integration, diagnostics, ensemble, output })
}

impl RunConfig {
    /// Order-independent JSON echo of every semantic value.
    pub fn canonical_json(&self) -> serde_json::Value {
        let model = match &self.model {
            ModelSpec::Chain(p) => json!({
                "family": "chain",
                "lambda": p.lambda(),
                "alpha": p.alpha(),
                "beta": p.beta(),
                "n_shells": p.n_shells(),
                "closure": p.closure(),
            }),
            ModelSpec::Tree(p) => json!({
                "family": "tree",
                "lambda": p.lambda(),
                "d": p.d(),
                "depth": p.depth(),
                "variant": p.variant(),
            }),
        };
        let datum = match &self.datum {
            DatumSource::UnitMode(j) => json!({ "kind": "unit_mode", "mode": j }),
            DatumSource::Vector(v) => json!({ "kind": "vector", "values": v }),
            DatumSource::Random(s) => json!({ "kind": "random", "spec": s }),
        };
        let d = &self.diagnostics;
        json!({
            "model": model,
            "datum": datum,
            "integration": self.integration,
            "diagnostics": {
                "hs": d.hs,
                "sobolev": d.sobolev,
                "invariants": d.invariants,
                "wavefront": d.wavefront,
                "tolerances": d.tolerances,
            },
            "ensemble": { "runs": self.ensemble.runs, "r": self.ensemble.r },
            "output": { "dir": self.output.dir.to_string_lossy(), "formats": self.output.formats },
        })
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn semantic_hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("json values always serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "obukhov"
lambda = 2.0
n_shells = 8

[datum]
kind = "unit_mode"
mode = 0

[integration]
t_end = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        let ModelSpec::Chain(p) = &c.model else { panic!("chain expected") };
        assert_eq!((p.lambda(), p.alpha(), p.beta(), p.n_shells()), (2.0, 0.0, 1.0, 8));
        assert_eq!(c.datum, DatumSource::UnitMode(0));
        let i = &c.integration;
        assert_eq!(i.rel_tol, 1e-10);
        assert_eq!(i.abs_tol, 1e-12);
        assert_eq!(i.dt_init, DEFAULT_DT_INIT);
        assert_eq!(i.dt_min, 1e-14);
        assert_eq!(i.blowup_threshold, 1e8);
        assert_eq!(i.sample_interval, 0.01);
        assert!(i.event_levels.is_empty());
        assert_eq!(c.diagnostics.hs, 2.0);
        assert!(c.diagnostics.invariants);
        assert_eq!(c.ensemble, EnsembleSpec { runs: 1, r: 1.5 });
        assert_eq!(c.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn bad_lambda_names_the_field() {
        let text = MINIMAL.replace("lambda = 2.0", "lambda = 0.5");
        match parse_config(&text).unwrap_err() {
            ConfigError::Validation { field, .. } => assert_eq!(field, "model.lambda"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line() {
        let text = MINIMAL.replace("t_end = 1.0", "t_end = 1.0\nviscosity = 0.1");
        match parse_config(&text).unwrap_err() {
            ConfigError::Parse { line, message } => {
                assert!(message.contains("viscosity"), "{message}");
                assert_eq!(line, 13);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = MINIMAL.replace("mode = 0", "mode = = 0");
        match parse_config(&text).unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 9),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn exactly_one_datum_source() {
        let text = MINIMAL.replace("mode = 0", "mode = 0\nvalues = [1.0]");
        assert!(matches!(parse_config(&text), Err(ConfigError::Validation { field, .. }) if field == "datum.values"));
        let text = MINIMAL.replace("kind = \"unit_mode\"\nmode = 0", "kind = \"random\"\ns = 2.0\nmode = 1");
        assert!(matches!(parse_config(&text), Err(ConfigError::Validation { field, .. }) if field == "datum.mode"));
    }

    #[test]
    fn branched_and_mixed_models() {
        let text = MINIMAL.replace("kind = \"obukhov\"", "kind = \"mixed\"\nalpha = 0.5\nbeta = -0.25");
        let ModelSpec::Chain(p) = parse_config(&text).unwrap().model else { panic!() };
        assert_eq!((p.alpha(), p.beta()), (0.5, -0.25));
        let text = MINIMAL.replace("kind = \"obukhov\"", "kind = \"mixed\"");
        assert!(parse_config(&text).is_err());
        let text = MINIMAL.replace("kind = \"obukhov\"\nlambda = 2.0\nn_shells = 8", "kind = \"branched_kp\"\nlambda = 2.0\nd = 2\ndepth = 3");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.model.dim(), 15);
        let text = MINIMAL.replace("kind = \"obukhov\"", "kind = \"kp\"\nalpha = 2.0");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn overrides() {
        let c = parse_config_with_overrides(MINIMAL, &["integration.t_end=3".into(), "model.kind=kp".into()]).unwrap();
        assert_eq!(c.integration.t_end, 3.0);
        assert_eq!(c.integration.sample_interval, 0.03);
        let ModelSpec::Chain(p) = c.model else { panic!() };
        assert_eq!(p.alpha(), 1.0);
        let err = parse_config_with_overrides(MINIMAL, &["integration.viscosity=1".into()]).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
    }

    #[test]
    fn hash_ignores_layout_but_not_values() {
        let a = parse_config(MINIMAL).unwrap().semantic_hash();
        let reordered = "# comment\n[integration]\nt_end=1.0\n\n[datum]\nmode = 0\nkind = \"unit_mode\"\n[model]\nn_shells = 8\nlambda = 2.0\nkind=\"obukhov\"\n";
        assert_eq!(parse_config(reordered).unwrap().semantic_hash(), a);
        let changed = MINIMAL.replace("t_end = 1.0", "t_end = 1.5");
        assert_ne!(parse_config(&changed).unwrap().semantic_hash(), a);
        assert_eq!(a.len(), 64);
    }
}
