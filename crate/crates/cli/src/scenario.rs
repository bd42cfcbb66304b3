use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use log::{info, warn};
use pnpch_core::model::check_neutrality;
use pnpch_core::scheme::Horizon;
use pnpch_core::{
    make_initial_condition, run, CellField, Model, SeriesRecord, Stepper, SystemState,
};

use crate::config::{FieldName, PnpchConfig, SnapshotCadence, SnapshotConfig};
use crate::error::CliError;
use crate::output::{SeriesWriter, Snapshot};

/// Result of a completed scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub final_state: SystemState,
    pub series: Vec<SeriesRecord>,
    pub snapshots: Vec<PathBuf>,
}

/// Initial concentrations and the model, after the neutrality guard.
pub fn prepare(cfg: &PnpchConfig) -> Result<(Model, Vec<CellField>), CliError> {
    let model = cfg.model()?;
    let c =
        make_initial_condition(&cfg.initial, &cfg.grid, &cfg.species, cfg.seed).map_err(|e| {
            crate::config::ConfigError::Validation {
                key: "initial".into(),
                reason: e.to_string(),
            }
        })?;
    let tol = 1e-10 * c.iter().map(CellField::max_abs).fold(1.0, f64::max);
    let n = check_neutrality(&cfg.species, &c, model.electrostatics.rho_f(), tol);
    if !n.is_neutral() {
        return Err(CliError::NotNeutral {
            residual: n.residual(),
        });
    }
    Ok((model, c))
}

/// Parses and checks a scenario without stepping; returns the neutrality
/// residual.
pub fn validate_scenario(cfg: &PnpchConfig) -> Result<f64, CliError> {
    let (model, c) = prepare(cfg)?;
    Ok(check_neutrality(
        &cfg.species,
        &c,
        model.electrostatics.rho_f(),
        f64::INFINITY,
    )
    .residual())
}

fn snapshot_steps(snap: &SnapshotConfig, dt: f64, n_steps: usize) -> BTreeSet<usize> {
    match &snap.cadence {
        SnapshotCadence::Times(times) => times
            .iter()
            .map(|t| Horizon::Until(*t).steps(dt))
            .filter(|&k| k <= n_steps)
            .collect(),
        SnapshotCadence::Every(k) => (0..=n_steps).step_by(*k).collect(),
    }
}

fn snapshot_path(prefix: &Path, step: usize) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(format!("_{step:06}.txt"));
    prefix.with_file_name(name)
}

fn field_values(state: &SystemState, name: FieldName) -> Vec<f64> {
    match name {
        FieldName::Concentration(m) => state.c[m].values().to_vec(),
        FieldName::ChemicalPotential(m) => state.mu[m].values().to_vec(),
        FieldName::Potential => state.psi.values().to_vec(),
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs a scenario end to end, streaming the series and snapshots to the
/// configured paths.
pub fn run_scenario(cfg: &PnpchConfig) -> Result<ScenarioOutcome, CliError> {
    let (model, c) = prepare(cfg)?;
    let stepper = Stepper::new(model, cfg.step.clone())?;
    let state0 = stepper.initial_state(c)?;
    let n_steps = cfg.n_steps();
    info!(
        "{}: {}D, N = {}, dt = {:.4e}, {} steps",
        cfg.name,
        cfg.grid.dim(),
        cfg.grid.n(),
        cfg.step.dt,
        n_steps
    );

    let mut writer: Option<SeriesWriter<BufWriter<File>>> = match &cfg.output.series {
        Some(p) => Some(SeriesWriter::create(p, cfg.species.len()).map_err(io_error(p))?),
        None => None,
    };
    let snap_steps = cfg
        .output
        .snapshots
        .as_ref()
        .map(|s| snapshot_steps(s, cfg.step.dt, n_steps))
        .unwrap_or_default();
    let mut written = Vec::new();
    let mut io_failure: Option<CliError> = None;
    let mut rows = 0usize;

    let result = run(
        &stepper,
        state0,
        Horizon::Steps(n_steps),
        &mut |state, record| {
            if io_failure.is_some() {
                return;
            }
            if let (Some(w), Some(path)) = (writer.as_mut(), cfg.output.series.as_ref()) {
                rows += 1;
                let res = w.write(record).and_then(|_| {
                    if rows % cfg.output.flush_every == 0 {
                        w.flush()
                    } else {
                        Ok(())
                    }
                });
                if let Err(e) = res {
                    io_failure = Some(io_error(path)(e));
                    return;
                }
            }
            if let Some(snap) = cfg
                .output
                .snapshots
                .as_ref()
                .filter(|_| snap_steps.contains(&state.step_index))
            {
                let fields = snap
                    .fields
                    .iter()
                    .map(|&f| (f.to_string(), field_values(state, f)))
                    .collect();
                let path = snapshot_path(&snap.prefix, state.step_index);
                match Snapshot::new(&cfg.grid, state.time, state.step_index, fields).write(&path) {
                    Ok(()) => written.push(path),
                    Err(e) => io_failure = Some(io_error(&path)(e)),
                }
            }
        },
    );
    if let (Some(w), Some(path)) = (writer.as_mut(), cfg.output.series.as_ref()) {
        if let Err(e) = w.flush() {
            warn!("flushing {} failed: {e}", path.display());
        }
    }
    if let Some(e) = io_failure {
        return Err(e);
    }
    let out = result?;
    Ok(ScenarioOutcome {
        final_state: out.final_state,
        series: out.series,
        snapshots: written,
    })
}
