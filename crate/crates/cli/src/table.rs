//! Convergence tables for the manufactured cases.

use std::io::Write;

use pnpch_core::mms::{
    case_2d_with_sigma, case_by_name, convergence_study, ConvergenceStudy, ForcingTime,
};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct MmsOptions {
    pub levels: Vec<usize>,
    /// Accepted order window; the case default when `None`.
    pub window: Option<(f64, f64)>,
    /// Overrides the gradient coefficient of the 2D case.
    pub sigma: Option<f64>,
    pub forcing_time: ForcingTime,
    pub threads: usize,
}

/// Order window used when none is given.
pub fn default_window(case: &str) -> (f64, f64) {
    match case {
        "1d" => (1.95, 2.05),
        _ => (1.9, 2.2),
    }
}

/// Worker count from `PNPCH_THREADS`, else the available parallelism.
pub fn thread_budget() -> usize {
    std::env::var("PNPCH_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run_mms(case_name: &str, opts: &MmsOptions) -> Result<ConvergenceStudy, CliError> {
    let mut case = match (case_name, opts.sigma) {
        ("2d", Some(s)) => case_2d_with_sigma(s),
        ("1d", Some(_)) => {
            return Err(CliError::Levels(
                "--sigma applies to the 2d case only".into(),
            ))
        }
        _ => case_by_name(case_name).ok_or_else(|| CliError::UnknownCase(case_name.to_string()))?,
    };
    case.forcing_time = opts.forcing_time;
    if opts.levels.is_empty() {
        return Err(CliError::Levels("at least one level is required".into()));
    }
    if let Some(&n) = opts.levels.iter().find(|&&n| n < 8 || n % 2 != 0) {
        return Err(CliError::Levels(format!("{n} is not an even number >= 8")));
    }
    if opts.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Levels(
            "levels must be strictly increasing".into(),
        ));
    }
    let window = opts.window.unwrap_or_else(|| default_window(case_name));
    Ok(convergence_study(
        &case,
        &opts.levels,
        window,
        opts.threads,
    )?)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

/// Writes `N, h, dt, err_c1, order_c1, ..., err_psi, order_psi`.
pub fn write_table<W: Write>(study: &ConvergenceStudy, out: W) -> csv::Result<()> {
    let species = study.rows.first().map_or(0, |r| r.err_c.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["N".to_string(), "h".into(), "dt".into()];
    for m in 1..=species {
        header.push(format!("err_c{m}"));
        header.push(format!("order_c{m}"));
    }
    header.push("err_psi".into());
    header.push("order_psi".into());
    w.write_record(&header)?;
    for r in &study.rows {
        let mut row = vec![r.n.to_string(), cell(Some(r.h)), cell(Some(r.dt))];
        for m in 0..species {
            row.push(cell(Some(r.err_c[m])));
            row.push(cell(r.order_c.as_ref().map(|o| o[m])));
        }
        row.push(cell(Some(r.err_psi)));
        row.push(cell(r.order_psi));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
