//! Trajectory CSV export and the run-summary document.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::analysis::{
    equilibrium_report, ess_2x2, ifd_check, q_matrix, spectral_radius, EquilibriumReport, EssClass,
    IfdReport, InvariantReport,
};
use crate::dynamics::Model;
use crate::environment::{evaluate_phi, EnvironmentModel};
use crate::error::{Error, Result};
use crate::model::{community_densities, population_state};
use crate::scenario::Scenario;
use crate::solver::{
    detect_convergence, ConvergenceReport, DriftStats, EventCounts, Method, Trajectory,
};

/// Reward gap tolerated between supported actions at the terminal state.
pub const NASH_TOL: f64 = 1e-3;
/// Community payoff spread tolerated by the ideal-free check.
pub const IFD_TOL: f64 = 1e-2;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// 17 significant digits, enough to round-trip any double.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header(model: &Model) -> Vec<String> {
    let actions = model.game.action_names();
    let communities = model.network.community_names();
    let mut h = vec!["t".to_string()];
    h.extend(actions.iter().map(|a| format!("y_{a}")));
    h.extend(communities.iter().map(|c| format!("eta_{c}")));
    for a in actions {
        h.extend(communities.iter().map(|c| format!("x_{a}_{c}")));
    }
    if model.environment.is_dynamic() {
        for from in communities {
            h.extend(communities.iter().map(|to| format!("phi_{from}_{to}")));
        }
    }
    h
}

pub fn write_trajectory_csv(
    path: &Path,
    model: &Model,
    traj: &Trajectory,
    smoothing: Option<f64>,
) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    w.write_record(csv_header(model)).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::new();
    for state in &traj.states {
        row.clear();
        row.push(format_value(state.t));
        row.extend(
            population_state(&state.system)
                .iter()
                .map(|v| format_value(*v)),
        );
        row.extend(
            community_densities(&state.system)
                .iter()
                .map(|v| format_value(*v)),
        );
        row.extend(state.system.matrix().iter().map(|v| format_value(*v)));
        if model.environment.is_dynamic() {
            let phi = match &state.env_state {
                Some(env) => env.clone(),
                None => evaluate_phi(
                    &model.environment,
                    state,
                    model.network.movement(),
                    smoothing,
                )?,
            };
            row.extend(phi.iter().map(|v| format_value(*v)));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Clone, Debug, Serialize)]
pub struct EssComparison {
    pub classification: EssClass,
    pub terminal_y: Vec<f64>,
    /// Max-norm distance from the terminal population state to the
    /// interior ESS, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub digest: String,
    pub method: Method,
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub samples: usize,
    pub terminal_y: Vec<f64>,
    pub terminal_eta: Vec<f64>,
    pub convergence: ConvergenceReport,
    pub equilibrium: EquilibriumReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<EssComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ifd: Option<IfdReport>,
    /// Spectral radius of the terminal encounter matrix; one whenever all
    /// densities are positive.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encounter_spectral_radius: Option<f64>,
    pub events: EventCounts,
    pub drift: DriftStats,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariants: Option<InvariantReport>,
    pub wall_clock_seconds: f64,
}

pub fn build_summary(
    scenario: &Scenario,
    traj: &Trajectory,
    warnings: Vec<String>,
) -> Result<RunSummary> {
    let model = &scenario.model;
    let terminal = traj.terminal();
    let y = population_state(&terminal.system);
    let eta = community_densities(&terminal.system);

    // widen the window to the whole trajectory when it is too short or too
    // sparsely sampled
    let span =
        traj.times.last().copied().unwrap_or(0.0) - traj.times.first().copied().unwrap_or(0.0);
    let eps = scenario.output.convergence_eps;
    let convergence = detect_convergence(traj, scenario.output.convergence_window.min(span), eps)
        .or_else(|_| detect_convergence(traj, span, eps))?;

    let ess = match model.game.payoff_matrix() {
        Some(a) if a.dim() == (2, 2) => match ess_2x2(a) {
            Ok(classification) => {
                let distance = classification
                    .interior()
                    .map(|yh| (y[0] - yh[0]).abs().max((y[1] - yh[1]).abs()));
                Some(EssComparison {
                    classification,
                    terminal_y: y.to_vec(),
                    distance,
                })
            }
            Err(_) => None,
        },
        _ => None,
    };
    let ifd = match &model.environment {
        EnvironmentModel::BestResponse(br) => Some(ifd_check(&eta, &br.alpha, &br.kappa, IFD_TOL)),
        _ => None,
    };
    let encounter_spectral_radius = q_matrix(&eta, model.network.interaction())
        .ok()
        .map(|q| spectral_radius(&q, 1000));

    Ok(RunSummary {
        scenario: scenario.name.clone(),
        digest: scenario.digest(),
        method: scenario.integrator.method,
        t_end: scenario.integrator.t_end,
        dt: scenario.integrator.dt,
        steps: traj.steps,
        samples: traj.len(),
        terminal_y: y.to_vec(),
        terminal_eta: eta.to_vec(),
        convergence,
        equilibrium: equilibrium_report(&terminal.system, &model.game, NASH_TOL)?,
        ess,
        ifd,
        encounter_spectral_radius,
        events: traj.event_counts(),
        drift: traj.drift.clone(),
        warnings,
        invariants: None,
        wall_clock_seconds: 0.0,
    })
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}
