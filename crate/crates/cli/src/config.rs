//! Scenario configuration: a JSON document with a versioned `schema` field.
//!
//! Loading happens in two passes. Serde maps the text onto loosely typed
//! raw structs (every block optional) so that syntax errors carry a line
//! and column; validation then resolves defaults and rebuilds every value
//! through the core constructors, naming the offending key on failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use pnpch_core::model::ModelError;
use pnpch_core::{
    make_fixed_charge, nondimensionalize, split_steric, ChargeSpec, Electrostatics, Horizon,
    InitSpec, Model, PeriodicGrid, PhysicalInputs, SpeciesSet, SquareMatrix, StepConfig,
};
use serde::Deserialize;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{key}`: {reason}")]
    Validation { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Validation {
        key: key.into(),
        reason: reason.to_string(),
    }
}

fn model_error(key: &str, err: ModelError) -> ConfigError {
    let key = match &err {
        ModelError::InvalidParameter { name, .. } => format!("{key}.{name}"),
        _ => key.to_string(),
    };
    invalid(key, err)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: Option<u32>,
    name: Option<String>,
    grid: Option<RawGrid>,
    physical: Option<RawPhysical>,
    species: Option<RawSpecies>,
    steric: Option<Vec<Vec<f64>>>,
    electrostatics: Option<RawElectrostatics>,
    initial: Option<RawInitial>,
    seed: Option<u64>,
    stepping: Option<RawStepping>,
    solver: Option<RawSolver>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: usize,
    n: usize,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysical {
    c0_molar: Option<f64>,
    length_nm: Option<f64>,
    d0: Option<f64>,
    diffusivities: Option<Vec<f64>>,
    eps_r: Option<f64>,
    temperature: Option<f64>,
}

/// A scalar applied to every species, or one value per species.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PerSpecies {
    All(f64),
    Each(Vec<f64>),
}

impl PerSpecies {
    fn expand(&self, key: &str, m: usize) -> Result<Vec<f64>, ConfigError> {
        match self {
            PerSpecies::All(v) => Ok(vec![*v; m]),
            PerSpecies::Each(v) if v.len() == m => Ok(v.clone()),
            PerSpecies::Each(v) => Err(invalid(
                key,
                format!("expected {m} values, got {}", v.len()),
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    valence: Vec<i32>,
    epsilon: Option<PerSpecies>,
    sigma: Option<PerSpecies>,
    v: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElectrostatics {
    kappa: Option<f64>,
    fixed_charge: Option<RawCharge>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawCharge {
    Zero,
    GaussianPair {
        amplitude: f64,
        decay: f64,
        positive_center: f64,
        negative_center: f64,
    },
    LinePair {
        surface_density: f64,
        negative_x: f64,
        positive_x: f64,
    },
    Samples {
        values: Vec<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawInitial {
    Uniform { values: PerSpecies },
    Random { means: PerSpecies, amplitude: f64 },
    Samples { values: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStepping {
    dt: Option<DtRule>,
    final_time: Option<f64>,
    n_steps: Option<usize>,
}

/// How the time step follows from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtRule {
    Absolute {
        value: f64,
    },
    /// `dt = scale * h`.
    H {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `dt = scale * h^2`.
    H2 {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DtRule {
    pub fn resolve(&self, h: f64) -> f64 {
        match *self {
            DtRule::Absolute { value } => value,
            DtRule::H { scale } => scale * h,
            DtRule::H2 { scale } => scale * h * h,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    newton_tol: Option<f64>,
    newton_max_iter: Option<usize>,
    linear_tol: Option<f64>,
    linear_max_iter: Option<usize>,
    damping_safety: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    series: Option<PathBuf>,
    flush_every: Option<usize>,
    snapshots: Option<RawSnapshots>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSnapshots {
    prefix: PathBuf,
    times: Option<Vec<f64>>,
    every: Option<usize>,
    fields: Option<Vec<String>>,
}

/// A field that can be written to a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldName {
    Concentration(usize),
    ChemicalPotential(usize),
    Potential,
}

impl fmt::Display for FieldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldName::Concentration(m) => write!(f, "c{}", m + 1),
            FieldName::ChemicalPotential(m) => write!(f, "mu{}", m + 1),
            FieldName::Potential => f.write_str("psi"),
        }
    }
}

impl FieldName {
    fn parse(s: &str, species: usize) -> Option<Self> {
        if s == "psi" {
            return Some(FieldName::Potential);
        }
        let (ctor, digits): (fn(usize) -> FieldName, &str) =
            if let Some(rest) = s.strip_prefix("mu") {
                (FieldName::ChemicalPotential, rest)
            } else if let Some(rest) = s.strip_prefix('c') {
                (FieldName::Concentration, rest)
            } else {
                return None;
            };
        let k: usize = digits.parse().ok()?;
        (1..=species).contains(&k).then(|| ctor(k - 1))
    }
}

/// When snapshots are written.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotCadence {
    /// At the steps closest to these times.
    Times(Vec<f64>),
    /// Every `k` steps, including step 0.
    Every(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotConfig {
    pub prefix: PathBuf,
    pub cadence: SnapshotCadence,
    pub fields: Vec<FieldName>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub series: Option<PathBuf>,
    /// Flush the series file every this many rows.
    pub flush_every: usize,
    pub snapshots: Option<SnapshotConfig>,
}

/// Fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PnpchConfig {
    pub name: String,
    pub grid: PeriodicGrid,
    pub species: SpeciesSet,
    pub steric: SquareMatrix,
    pub kappa: f64,
    pub fixed_charge: ChargeSpec,
    pub initial: InitSpec,
    pub seed: u64,
    pub dt_rule: DtRule,
    pub horizon: Horizon,
    pub step: StepConfig,
    pub output: OutputConfig,
}

impl PnpchConfig {
    /// Builds the model; fixed charges are sampled on the grid here.
    pub fn model(&self) -> Result<Model, ConfigError> {
        let rho = make_fixed_charge(&self.fixed_charge, &self.grid)
            .map_err(|e| model_error("electrostatics.fixed_charge", e))?;
        let split = split_steric(&self.steric).map_err(|e| model_error("steric", e))?;
        let electro =
            Electrostatics::new(self.kappa, rho).map_err(|e| model_error("electrostatics", e))?;
        Model::new(self.species.clone(), split, electro).map_err(|e| model_error("species", e))
    }

    /// Number of steps the run will take.
    pub fn n_steps(&self) -> usize {
        self.horizon.steps(self.step.dt)
    }
}

pub fn load_config(path: &Path) -> Result<PnpchConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<PnpchConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(raw)
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| invalid(key, "missing"))
}

fn validate(raw: RawConfig) -> Result<PnpchConfig, ConfigError> {
    match raw.schema {
        Some(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(invalid(
                "schema",
                format!("unsupported version {v} (expected {SCHEMA_VERSION})"),
            ))
        }
        None => return Err(invalid("schema", "missing")),
    }
    let g = require(raw.grid, "grid")?;
    let grid = PeriodicGrid::new(g.dim, g.n, g.lo, g.hi).map_err(|e| invalid("grid", e))?;

    let sp = require(raw.species, "species")?;
    let m = sp.valence.len();
    if m == 0 {
        return Err(invalid(
            "species.valence",
            "at least one species is required",
        ));
    }
    let physical = raw.physical.map(|p| {
        let d = PhysicalInputs::default();
        PhysicalInputs {
            c0_molar: p.c0_molar.unwrap_or(d.c0_molar),
            length_nm: p.length_nm.unwrap_or(d.length_nm),
            d0: p.d0.unwrap_or(d.d0),
            diffusivities: p.diffusivities.unwrap_or_else(|| vec![1.0; m]),
            eps_r: p.eps_r.unwrap_or(d.eps_r),
            temperature: p.temperature.unwrap_or(d.temperature),
        }
    });
    let derived = match &physical {
        Some(p) => {
            if p.diffusivities.len() != m {
                return Err(invalid(
                    "physical.diffusivities",
                    format!("expected {m} values, got {}", p.diffusivities.len()),
                ));
            }
            Some(nondimensionalize(p).map_err(|e| model_error("physical", e))?)
        }
        None => None,
    };
    let epsilon = match (&sp.epsilon, &derived) {
        (Some(e), _) => e.expand("species.epsilon", m)?,
        (None, Some(d)) => d.epsilon.clone(),
        (None, None) => {
            return Err(invalid(
                "species.epsilon",
                "missing (give it or a `physical` block)",
            ))
        }
    };
    let sigma = match &sp.sigma {
        Some(s) => s.expand("species.sigma", m)?,
        None => {
            info!("species.sigma not given; using 0 (no gradient energy)");
            vec![0.0; m]
        }
    };
    let species = SpeciesSet::new(sp.valence, epsilon, sigma, sp.v.unwrap_or(1.0))
        .map_err(|e| model_error("species", e))?;

    let rows = require(raw.steric, "steric")?;
    let steric = SquareMatrix::from_rows(rows).map_err(|e| model_error("steric", e))?;
    if steric.size() != m {
        return Err(invalid(
            "steric",
            format!("expected a {m}x{m} matrix, got {0}x{0}", steric.size()),
        ));
    }
    split_steric(&steric).map_err(|e| model_error("steric", e))?;

    let el = require(raw.electrostatics, "electrostatics")?;
    let kappa = match (el.kappa, &derived) {
        (Some(k), _) => k,
        (None, Some(d)) => d.kappa,
        (None, None) => {
            return Err(invalid(
                "electrostatics.kappa",
                "missing (give it or a `physical` block)",
            ))
        }
    };
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid("electrostatics.kappa", "must be positive"));
    }
    let fixed_charge = match el.fixed_charge.unwrap_or(RawCharge::Zero) {
        RawCharge::Zero => ChargeSpec::Zero,
        RawCharge::GaussianPair {
            amplitude,
            decay,
            positive_center,
            negative_center,
        } => ChargeSpec::GaussianPair {
            amplitude,
            decay,
            positive_center,
            negative_center,
        },
        RawCharge::LinePair {
            surface_density,
            negative_x,
            positive_x,
        } => ChargeSpec::LinePair {
            surface_density,
            negative_x,
            positive_x,
        },
        RawCharge::Samples { values } => ChargeSpec::Samples(values),
    };
    make_fixed_charge(&fixed_charge, &grid)
        .map_err(|e| model_error("electrostatics.fixed_charge", e))?;

    let initial = match require(raw.initial, "initial")? {
        RawInitial::Uniform { values } => InitSpec::Uniform(values.expand("initial.values", m)?),
        RawInitial::Random { means, amplitude } => InitSpec::Random {
            means: means.expand("initial.means", m)?,
            amplitude,
        },
        RawInitial::Samples { values } => InitSpec::Samples(values),
    };
    let seed = raw.seed.unwrap_or(0);
    pnpch_core::make_initial_condition(&initial, &grid, &species, seed)
        .map_err(|e| model_error("initial", e))?;

    let st = require(raw.stepping, "stepping")?;
    let dt_rule = require(st.dt, "stepping.dt")?;
    let dt = dt_rule.resolve(grid.h());
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(
            "stepping.dt",
            "must resolve to a positive time step",
        ));
    }
    let horizon = match (st.final_time, st.n_steps) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "stepping",
                "give either final_time or n_steps, not both",
            ))
        }
        (Some(t), None) if t >= 0.0 && t.is_finite() => Horizon::Until(t),
        (Some(_), None) => return Err(invalid("stepping.final_time", "must be non-negative")),
        (None, Some(n)) => Horizon::Steps(n),
        (None, None) => return Err(invalid("stepping", "missing final_time or n_steps")),
    };

    let sv = raw.solver.unwrap_or_default();
    let mut step = StepConfig::new(dt);
    step.newton_tol = sv.newton_tol.unwrap_or(step.newton_tol);
    step.newton_max_iter = sv.newton_max_iter.unwrap_or(step.newton_max_iter);
    step.linear_tol = sv.linear_tol.unwrap_or(step.linear_tol);
    step.linear_max_iter = sv.linear_max_iter.unwrap_or(step.linear_max_iter);
    step.damping_safety = sv.damping_safety.unwrap_or(step.damping_safety);
    step.validate().map_err(|e| match e {
        pnpch_core::SchemeError::InvalidConfig { key, reason } => {
            invalid(format!("solver.{key}"), reason)
        }
        other => invalid("solver", other),
    })?;

    let out = raw.output.unwrap_or_default();
    let flush_every = out.flush_every.unwrap_or(1);
    if flush_every == 0 {
        return Err(invalid("output.flush_every", "must be at least 1"));
    }
    let snapshots = match out.snapshots {
        None => None,
        Some(s) => {
            let cadence = match (s.times, s.every) {
                (Some(_), Some(_)) => {
                    return Err(invalid(
                        "output.snapshots",
                        "give either times or every, not both",
                    ))
                }
                (Some(t), None) => {
                    if t.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                        return Err(invalid("output.snapshots.times", "must be non-negative"));
                    }
                    SnapshotCadence::Times(t)
                }
                (None, Some(0)) => {
                    return Err(invalid("output.snapshots.every", "must be at least 1"))
                }
                (None, Some(k)) => SnapshotCadence::Every(k),
                (None, None) => return Err(invalid("output.snapshots", "missing times or every")),
            };
            let names = s.fields.unwrap_or_else(|| {
                let mut v: Vec<String> = (1..=m).map(|k| format!("c{k}")).collect();
                v.push("psi".into());
                v
            });
            let fields = names
                .iter()
                .map(|n| {
                    FieldName::parse(n, m).ok_or_else(|| {
                        invalid("output.snapshots.fields", format!("unknown field `{n}`"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(SnapshotConfig {
                prefix: s.prefix,
                cadence,
                fields,
            })
        }
    };

    Ok(PnpchConfig {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        grid,
        species,
        steric,
        kappa,
        fixed_charge,
        initial,
        seed,
        dt_rule,
        horizon,
        step,
        output: OutputConfig {
            series: out.series,
            flush_every,
            snapshots,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "grid": {"dim": 1, "n": 100, "lo": -1, "hi": 1},
        "species": {"valence": [1, -1], "epsilon": 0.304, "sigma": 0.01},
        "steric": [[3.6, 2.6], [2.6, 0.2]],
        "electrostatics": {"kappa": 0.185},
        "initial": {"type": "uniform", "values": 1.0},
        "stepping": {"dt": {"rule": "h"}, "final_time": 1.0}
    }"#;

    fn edited(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        f(&mut v);
        v.to_string()
    }

    fn key_of(err: ConfigError) -> String {
        match err {
            ConfigError::Validation { key, .. } => key,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn minimal_document_resolves_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.grid.n(), 100);
        assert_eq!(cfg.step.dt, 0.02);
        assert_eq!(cfg.step.newton_tol, 1e-10);
        assert_eq!(cfg.n_steps(), 50);
        assert_eq!(cfg.species.sigma(), &[0.01, 0.01]);
        assert_eq!(cfg.fixed_charge, ChargeSpec::Zero);
        assert_eq!(cfg.output.series, None);
    }

    #[test]
    fn missing_blocks_are_named() {
        for key in ["species", "grid", "steric", "initial", "stepping", "schema"] {
            let text = edited(|v| {
                v.as_object_mut().unwrap().remove(key);
            });
            assert_eq!(key_of(parse_config(&text).unwrap_err()), key);
        }
    }

    #[test]
    fn sigma_defaults_to_zero() {
        let text = edited(|v| {
            v["species"].as_object_mut().unwrap().remove("sigma");
        });
        assert_eq!(parse_config(&text).unwrap().species.sigma(), &[0.0, 0.0]);
    }

    #[test]
    fn physical_inputs_fill_coefficients() {
        let text = edited(|v| {
            v["species"].as_object_mut().unwrap().remove("epsilon");
            v["electrostatics"].as_object_mut().unwrap().remove("kappa");
            v["physical"] = serde_json::json!({"eps_r": 78.0});
        });
        let cfg = parse_config(&text).unwrap();
        assert!((cfg.kappa - 0.185).abs() < 2e-3);
        assert!((cfg.species.epsilon()[0] - 0.304).abs() < 2e-3);
    }

    #[test]
    fn bad_values_name_their_key() {
        let cases: Vec<(Box<dyn Fn(&mut serde_json::Value)>, &str)> = vec![
            (Box::new(|v| v["schema"] = 2.into()), "schema"),
            (
                Box::new(|v| v["steric"] = serde_json::json!([[1, 2], [0, 1]])),
                "steric",
            ),
            (
                Box::new(|v| v["species"]["sigma"] = serde_json::json!([0.1])),
                "species.sigma",
            ),
            (
                Box::new(|v| v["electrostatics"]["kappa"] = (-1.0).into()),
                "electrostatics.kappa",
            ),
            (
                Box::new(|v| v["solver"] = serde_json::json!({"damping_safety": 1.5})),
                "solver.damping_safety",
            ),
            (
                Box::new(|v| v["stepping"]["n_steps"] = 3.into()),
                "stepping",
            ),
            (
                Box::new(|v| {
                    v["output"] = serde_json::json!({"snapshots": {"prefix": "s", "every": 2, "fields": ["q"]}})
                }),
                "output.snapshots.fields",
            ),
        ];
        for (edit, key) in cases {
            let text = edited(|v| edit(v));
            assert_eq!(key_of(parse_config(&text).unwrap_err()), key);
        }
    }

    #[test]
    fn syntax_errors_report_position() {
        match parse_config("{\n  \"schema\": 1,\n  oops\n}") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = edited(|v| v["grid"]["spacing"] = 0.1.into());
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn dt_rules() {
        assert_eq!(DtRule::H { scale: 1.0 }.resolve(0.1), 0.1);
        assert!((DtRule::H2 { scale: 2.0 }.resolve(0.1) - 0.02).abs() < 1e-16);
        assert_eq!(DtRule::Absolute { value: 0.3 }.resolve(0.1), 0.3);
    }
}
