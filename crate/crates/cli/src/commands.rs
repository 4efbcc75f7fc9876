//! `run`, `stationary` and `sweep`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use meanflow_core::diagnostics::fitted_slope;
use meanflow_core::flow::{Flow, FlowError, FlowResult, FlowStatus};
use meanflow_core::stationary::{gauge_align, newton_solve, NewtonError};
use meanflow_core::{DiagnosticsRecord, NewtonConfig};

use crate::config::ExperimentConfig;
use crate::io::{format_float, write_series, write_snapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_TIME: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

const ENERGY_SLACK: f64 = 1e-10;

pub fn status_exit_code(status: FlowStatus) -> i32 {
    match status {
        FlowStatus::Converged => EXIT_OK,
        FlowStatus::MaxTimeReached => EXIT_MAX_TIME,
        FlowStatus::StepUnderflow | FlowStatus::Blowup => EXIT_FAILURE,
    }
}

/// Summary numbers derived from a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub status: FlowStatus,
    pub t_final: f64,
    pub steps: u64,
    pub rejected: u64,
    pub final_residual: f64,
    /// Largest `|∫e^u − a₀| / a₀` over the recorded series.
    pub mass_drift: f64,
    /// Recorded consecutive pairs whose energy rose by more than `1e-10 (1 + |E|)`.
    pub energy_violations: usize,
    pub k: usize,
    pub rho: f64,
    pub max_h1: f64,
    pub final_concentration: f64,
    pub max_invariance_error: Option<f64>,
    /// Least-squares rate `r` in `y(t) ≈ C e^{−r t}` over the second half of the records.
    pub dissipation_decay_rate: Option<f64>,
    /// L² and H¹ distances from the final state to the Newton solution, when one was computed.
    pub newton_distance: Option<Result<(f64, f64), String>>,
}

impl RunSummary {
    pub fn from_result(flow: &Flow, result: &FlowResult) -> Self {
        let a0 = result.final_state.a0;
        let series = &result.series;
        let mass_drift = series
            .iter()
            .map(|r| (r.mass - a0).abs() / a0)
            .fold(0.0, f64::max);
        RunSummary {
            status: result.status,
            t_final: result.final_state.t,
            steps: result.final_state.step_count,
            rejected: result.final_state.reject_count,
            final_residual: result
                .final_state
                .residual(flow.mesh(), flow.settings().rho),
            mass_drift,
            energy_violations: energy_violations(series),
            k: flow.k(),
            rho: flow.settings().rho,
            max_h1: series.iter().map(|r| r.h1_seminorm).fold(0.0, f64::max),
            final_concentration: series.last().map_or(f64::NAN, |r| r.concentration),
            max_invariance_error: result.max_invariance_error,
            dissipation_decay_rate: dissipation_decay_rate(series),
            newton_distance: None,
        }
    }

    /// `k > ρ / 8π`.
    pub fn hypothesis_holds(&self) -> bool {
        self.k as f64 > self.rho / (8.0 * std::f64::consts::PI)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let ratio = self.rho / (8.0 * std::f64::consts::PI);
        let _ = writeln!(out, "status = {}", self.status);
        let _ = writeln!(out, "t_final = {}", format_float(self.t_final));
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "rejected_steps = {}", self.rejected);
        let _ = writeln!(out, "final_residual = {}", format_float(self.final_residual));
        let _ = writeln!(out, "mass_drift = {}", format_float(self.mass_drift));
        let _ = writeln!(out, "energy_violations = {}", self.energy_violations);
        let _ = writeln!(out, "min_orbit_cardinality_k = {}", self.k);
        let _ = writeln!(out, "rho_over_8pi = {}", format_float(ratio));
        let _ = writeln!(
            out,
            "hypothesis k > rho/(8 pi): {} ({} vs {})",
            if self.hypothesis_holds() { "holds" } else { "fails" },
            self.k,
            format_float(ratio)
        );
        let _ = writeln!(out, "max_h1 = {}", format_float(self.max_h1));
        let _ = writeln!(
            out,
            "final_concentration_fraction = {}",
            format_float(self.final_concentration)
        );
        if let Some(e) = self.max_invariance_error {
            let _ = writeln!(out, "max_invariance_error = {}", format_float(e));
        }
        if let Some(r) = self.dissipation_decay_rate {
            let _ = writeln!(out, "dissipation_decay_rate = {}", format_float(r));
        }
        match &self.newton_distance {
            Some(Ok((l2, h1))) => {
                let _ = writeln!(out, "newton_distance_l2 = {}", format_float(*l2));
                let _ = writeln!(out, "newton_distance_h1 = {}", format_float(*h1));
            }
            Some(Err(e)) => {
                let _ = writeln!(out, "newton_reference = unavailable ({e})");
            }
            None => {}
        }
        out
    }
}

pub fn energy_violations(series: &[DiagnosticsRecord]) -> usize {
    series
        .windows(2)
        .filter(|w| w[1].energy > w[0].energy + ENERGY_SLACK * (1.0 + w[0].energy.abs()))
        .count()
}

/// Decay rate of the dissipation fitted on the second half of the records
/// with `y > 0`; `None` with fewer than three such records.
pub fn dissipation_decay_rate(series: &[DiagnosticsRecord]) -> Option<f64> {
    let (ts, logs): (Vec<f64>, Vec<f64>) = series[series.len() / 2..]
        .iter()
        .filter(|r| r.dissipation > 0.0)
        .map(|r| (r.t, r.dissipation.ln()))
        .unzip();
    (ts.len() >= 3 && ts[ts.len() - 1] > ts[0]).then(|| -fitted_slope(&ts, &logs))
}

/// Solves the stationary equation from the configured `u0` and measures how
/// far the final flow state is from it after matching the mass.
pub fn newton_distance(config: &ExperimentConfig, flow: &Flow, result: &FlowResult) -> Result<(f64, f64), NewtonError> {
    let mesh = flow.mesh();
    let u0 = config
        .flow
        .u0_expr
        .materialize(mesh)
        .map_err(|_| NewtonError::NonFiniteInit)?;
    let newton = NewtonConfig {
        rho_target: flow.settings().rho,
        ..config.newton
    };
    let report = newton_solve(mesh, &newton, flow.f(), &u0)?;
    let u = &result.final_state.u;
    let aligned = gauge_align(mesh, &report.solution, mesh.integrate(&u.map(f64::exp)));
    let diff = aligned.zip_map(u, |a, b| a - b);
    let l2 = mesh.integrate(&diff.map(|v| v * v)).sqrt();
    let h1 = mesh.dirichlet_energy(&diff).max(0.0).sqrt();
    Ok((l2, h1))
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `series.csv`, `snapshots/` and `report.txt` under `dir`.
pub fn write_run_outputs(dir: &Path, result: &FlowResult, summary: &RunSummary) -> Result<(), CommandError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let series_path = dir.join("series.csv");
    write_series(&series_path, &result.series).map_err(io_err(&series_path))?;
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(io_err(&snap_dir))?;
    for (i, (t, field)) in result.snapshots.iter().enumerate() {
        let path = snap_dir.join(format!("snap_{i:05}.txt"));
        write_snapshot(&path, *t, field).map_err(io_err(&path))?;
    }
    let report_path = dir.join("report.txt");
    fs::write(&report_path, summary.render()).map_err(io_err(&report_path))?;
    Ok(())
}

/// Runs the flow and returns the prepared flow with its result.
pub fn execute_flow(config: &ExperimentConfig) -> Result<(Flow, FlowResult), FlowError> {
    let (flow, u0) = Flow::from_config(&config.flow)?;
    let result = flow.run(u0)?;
    Ok((flow, result))
}

/// `run`: returns the process exit code.
pub fn cmd_run(config: &ExperimentConfig) -> i32 {
    let dir = config.resolved_output_dir();
    let (flow, result) = match execute_flow(config) {
        Ok(done) => done,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let mut summary = RunSummary::from_result(&flow, &result);
    if result.status == FlowStatus::Converged {
        summary.newton_distance =
            Some(newton_distance(config, &flow, &result).map_err(|e| e.to_string()));
    }
    if let Err(e) = write_run_outputs(&dir, &result, &summary) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    eprintln!(
        "{} at t = {} (residual {:e}, concentration fraction {:.4}); outputs in {}",
        summary.status,
        summary.t_final,
        summary.final_residual,
        summary.final_concentration,
        dir.display()
    );
    status_exit_code(summary.status)
}

/// `stationary`: Newton solve from `u0`; writes `stationary.txt` and
/// `stationary_report.txt`.
pub fn cmd_stationary(config: &ExperimentConfig) -> i32 {
    let dir = config.resolved_output_dir();
    let (flow, u0) = match Flow::from_config(&config.flow) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = newton_solve(flow.mesh(), &config.newton, flow.f(), &u0);
    let (line, solution, code) = match outcome {
        Ok(report) => (
            format!(
                "converged rho = {} iterations = {} linear_iterations = {} residual = {}",
                format_float(config.newton.rho_target),
                report.iterations,
                report.linear_iterations,
                format_float(report.residual)
            ),
            Some(report.solution),
            EXIT_OK,
        ),
        Err(NewtonError::NoConvergence {
            rho,
            iterations,
            residual,
            reason,
        }) => (
            format!(
                "no_convergence rho = {} iterations = {iterations} residual = {} reason = {reason}",
                format_float(rho),
                format_float(residual)
            ),
            None,
            EXIT_FAILURE,
        ),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let write = || -> Result<(), CommandError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        if let Some(w) = &solution {
            let path = dir.join("stationary.txt");
            write_snapshot(&path, 0.0, w).map_err(io_err(&path))?;
        }
        let path = dir.join("stationary_report.txt");
        fs::write(&path, format!("{line}\n")).map_err(io_err(&path))?;
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    println!("{line}");
    code
}

/// One summary row of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub rho: f64,
    /// Flow status, or `Error` when the run could not start.
    pub status: String,
    pub final_residual: f64,
    pub max_h1: f64,
    pub wall_time: f64,
}

pub const SWEEP_COLUMNS: &str = "rho,status,final_residual,max_h1,wall_time";

/// Runs one flow per `ρ` on a pool of worker threads. Rows come back in input order.
pub fn run_sweep(config: &ExperimentConfig, rhos: &[f64], dir: &Path) -> Vec<SweepRow> {
    let workers = std::thread::available_parallelism()
        .map_or(1, usize::from)
        .min(rhos.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; rhos.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= rhos.len() {
                    break;
                }
                let row = sweep_entry(config, rhos[i], &dir.join(format!("rho_{i:03}")));
                rows.lock().expect("sweep worker panicked")[i] = Some(row);
            });
        }
    });
    rows.into_inner()
        .expect("sweep worker panicked")
        .into_iter()
        .map(|r| r.expect("every entry ran"))
        .collect()
}

fn sweep_entry(config: &ExperimentConfig, rho: f64, dir: &Path) -> SweepRow {
    let mut entry = config.clone();
    entry.flow.settings.rho = rho;
    let start = Instant::now();
    let outcome = execute_flow(&entry).map_err(CommandError::from).and_then(|(flow, result)| {
        let summary = RunSummary::from_result(&flow, &result);
        write_run_outputs(dir, &result, &summary)?;
        Ok(summary)
    });
    let wall_time = start.elapsed().as_secs_f64();
    match outcome {
        Ok(s) => SweepRow {
            rho,
            status: s.status.to_string(),
            final_residual: s.final_residual,
            max_h1: s.max_h1,
            wall_time,
        },
        Err(e) => {
            eprintln!("rho = {rho}: {e}");
            SweepRow {
                rho,
                status: "Error".into(),
                final_residual: f64::NAN,
                max_h1: f64::NAN,
                wall_time,
            }
        }
    }
}

pub fn sweep_to_string(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_float(r.rho),
            r.status,
            format_float(r.final_residual),
            format_float(r.max_h1),
            format_float(r.wall_time)
        );
    }
    out
}

/// `sweep`: writes `sweep.csv` plus one directory per entry.
pub fn cmd_sweep(config: &ExperimentConfig, rhos: &[f64]) -> i32 {
    let dir = config.resolved_output_dir();
    let rows = run_sweep(config, rhos, &dir);
    let path = dir.join("sweep.csv");
    let written = fs::create_dir_all(&dir).and_then(|_| fs::write(&path, sweep_to_string(&rows)));
    if let Err(e) = written {
        eprintln!("error: cannot write {}: {e}", path.display());
        return EXIT_CONFIG;
    }
    for r in &rows {
        println!("rho = {:<22} {:<16} residual {:e}", r.rho, r.status, r.final_residual);
    }
    EXIT_OK
}
