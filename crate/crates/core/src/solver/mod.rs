//! Time integration of the extended state with conservation control.

mod convergence;
mod rk;

pub use convergence::{classify_signal, detect_convergence, ConvergenceReport, SignalStatus};
pub use rk::{step_rk4, Dopri5, Rk4};

use serde::{Deserialize, Serialize};

use crate::dynamics::{ClosedLoop, Model};
use crate::environment::{argmax_sets, evaluate_phi, EnvironmentModel};
use crate::error::{Error, IntegrationError, Result};
use crate::exec::Execution;
use crate::model::ExtendedState;
use crate::scenario::Scenario;

/// Entries below this are clamped to zero after each accepted step.
pub const CLAMP_FLOOR: f64 = -1e-12;
/// Largest fixed-step run accepted by [`IntegratorConfig::validate`].
pub const MAX_FIXED_STEPS: f64 = 1e10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    #[serde(alias = "fixed_rk4")]
    Rk4,
    #[serde(alias = "adaptive_rk45", alias = "dopri5")]
    Rk45,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" | "fixed_rk4" => Ok(Method::Rk4),
            "rk45" | "adaptive_rk45" | "dopri5" => Ok(Method::Rk45),
            other => Err(Error::Usage(format!(
                "unknown method '{other}' (expected rk4 or rk45)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step, or initial step for the adaptive method.
    pub dt: f64,
    pub t_end: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Total mass drift that triggers a multiplicative renormalization.
    pub renormalize_threshold: f64,
    /// Record every n-th accepted step (the final step is always recorded).
    pub record_every: usize,
    /// Softmax temperature replacing the hard argmax in best-response
    /// environments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_argmax_beta: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-3,
            t_end: 100.0,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            renormalize_threshold: 1e-9,
            record_every: 10,
            smooth_argmax_beta: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "integrator {name} must be > 0, got {v}"
                )))
            }
        };
        positive(self.dt, "dt")?;
        positive(self.t_end, "t_end")?;
        positive(self.abs_tol, "abs_tol")?;
        positive(self.rel_tol, "rel_tol")?;
        positive(self.renormalize_threshold, "renormalize_threshold")?;
        if let Some(beta) = self.smooth_argmax_beta {
            positive(beta, "smooth_argmax_beta")?;
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be >= 1"));
        }
        if self.method == Method::Rk4 && self.t_end / self.dt > MAX_FIXED_STEPS {
            return Err(Error::config(format!(
                "t_end / dt = {:e} exceeds the fixed-step limit of {MAX_FIXED_STEPS:e}",
                self.t_end / self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleDiagnostics {
    /// `|mass - 1|` before any correction at this sample.
    pub mass_drift: f64,
    pub min_entry: f64,
    pub phi_row_sums: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// The best-payoff set of a community changed.
    ArgmaxChange {
        community: usize,
    },
    Renormalization {
        drift: f64,
    },
    Clamp {
        entries: usize,
        min: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DriftStats {
    /// Sum over steps of the absolute mass change produced by the stepper.
    pub accumulated: f64,
    pub max_step: f64,
    /// `accumulated` scaled to 100 time units.
    pub per_100_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EventCounts {
    pub argmax_changes: usize,
    pub renormalizations: usize,
    pub clamps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ExtendedState>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub events: Vec<Event>,
    pub drift: DriftStats,
    pub steps: usize,
}

impl Trajectory {
    pub fn terminal(&self) -> &ExtendedState {
        self.states
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn event_counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for e in &self.events {
            match e.kind {
                EventKind::ArgmaxChange { .. } => c.argmax_changes += 1,
                EventKind::Renormalization { .. } => c.renormalizations += 1,
                EventKind::Clamp { .. } => c.clamps += 1,
            }
        }
        c
    }
}

struct Recorder<'a> {
    model: &'a Model,
    config: &'a IntegratorConfig,
    nx: usize,
    traj: Trajectory,
    argmax: Option<Vec<Vec<usize>>>,
}

impl<'a> Recorder<'a> {
    fn new(model: &'a Model, config: &'a IntegratorConfig) -> Self {
        Self {
            model,
            config,
            nx: model.n_actions() * model.n_communities(),
            traj: Trajectory {
                times: Vec::new(),
                states: Vec::new(),
                diagnostics: Vec::new(),
                events: Vec::new(),
                drift: DriftStats::default(),
                steps: 0,
            },
            argmax: None,
        }
    }

    fn densities(&self, v: &[f64]) -> Vec<f64> {
        let nh = self.model.n_communities();
        let mut eta = vec![0.0; nh];
        for row in v[..self.nx].chunks(nh) {
            for (e, x) in eta.iter_mut().zip(row) {
                *e += x;
            }
        }
        eta
    }

    fn track_argmax(&mut self, t: f64, v: &[f64]) {
        if let EnvironmentModel::BestResponse(br) = &self.model.environment {
            let sets = argmax_sets(&self.densities(v), br, self.model.network.movement());
            if let Some(prev) = &self.argmax {
                for (k, (a, b)) in prev.iter().zip(&sets).enumerate() {
                    if a != b {
                        self.traj.events.push(Event {
                            t,
                            kind: EventKind::ArgmaxChange { community: k },
                        });
                    }
                }
            }
            self.argmax = Some(sets);
        }
    }

    /// Clamps tiny negatives and renormalizes mass. Returns the drift
    /// measured before correction.
    fn correct(&mut self, t: f64, prev_mass: f64, v: &mut [f64]) -> f64 {
        let raw_mass: f64 = v[..self.nx].iter().sum();
        let step_drift = (raw_mass - prev_mass).abs();
        self.traj.drift.accumulated += step_drift;
        self.traj.drift.max_step = self.traj.drift.max_step.max(step_drift);
        let pre_drift = (raw_mass - 1.0).abs();

        let mut clamped = 0usize;
        let mut min = 0.0f64;
        for e in v.iter_mut() {
            if *e < CLAMP_FLOOR {
                min = min.min(*e);
                *e = 0.0;
                clamped += 1;
            }
        }
        if clamped > 0 {
            self.traj.events.push(Event {
                t,
                kind: EventKind::Clamp {
                    entries: clamped,
                    min,
                },
            });
        }

        let mass: f64 = v[..self.nx].iter().sum();
        let drift = (mass - 1.0).abs();
        if drift > self.config.renormalize_threshold {
            v[..self.nx].iter_mut().for_each(|e| *e /= mass);
            self.traj.events.push(Event {
                t,
                kind: EventKind::Renormalization { drift },
            });
        }
        pre_drift
    }

    fn record(&mut self, t: f64, v: &[f64], mass_drift: f64) -> Result<()> {
        let state = self.model.unflatten(v, t);
        let phi = evaluate_phi(
            &self.model.environment,
            &state,
            self.model.network.movement(),
            self.config.smooth_argmax_beta,
        )?;
        let min_entry = v.iter().copied().fold(f64::INFINITY, f64::min);
        self.traj.diagnostics.push(SampleDiagnostics {
            mass_drift,
            min_entry,
            phi_row_sums: phi.rows().into_iter().map(|r| r.sum()).collect(),
        });
        self.traj.times.push(t);
        self.traj.states.push(state);
        Ok(())
    }

    fn finish(mut self) -> Trajectory {
        let t_end = self.traj.times.last().copied().unwrap_or(0.0);
        if t_end > 0.0 {
            self.traj.drift.per_100_time = self.traj.drift.accumulated * 100.0 / t_end;
        }
        self.traj
    }
}

fn failure(err: Error, model: &Model, last_good: &[f64], t_good: f64, t_fail: f64) -> Error {
    match err {
        Error::Evaluation(_) => IntegrationError::NonFinite {
            t: t_fail,
            last_good: Box::new(model.unflatten(last_good, t_good)),
        }
        .into(),
        other => other,
    }
}

/// Integrates a scenario from its initial state to `t_end`.
pub fn integrate(scenario: &Scenario) -> Result<Trajectory> {
    integrate_model(
        &scenario.model,
        &scenario.initial_state,
        &scenario.integrator,
    )
}

pub fn integrate_model(
    model: &Model,
    initial: &ExtendedState,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let mut state = model.flatten(initial)?;
    let t0 = initial.t;
    let mut field = ClosedLoop::new(model, config.smooth_argmax_beta);
    let mut eval = |t: f64, y: &[f64], out: &mut [f64]| field.eval(t, y, out);

    let mut rec = Recorder::new(model, config);
    let initial_drift = (state[..rec.nx].iter().sum::<f64>() - 1.0).abs();
    rec.track_argmax(t0, &state);
    rec.record(t0, &state, initial_drift)?;

    let mut next = vec![0.0; state.len()];
    let t_final = t0 + config.t_end;
    match config.method {
        Method::Rk4 => {
            let mut rk = Rk4::new();
            let n_steps = ((config.t_end / config.dt) - 1e-9).ceil().max(1.0) as usize;
            for step in 1..=n_steps {
                let ta = t0 + (step - 1) as f64 * config.dt;
                let tb = if step == n_steps {
                    t_final
                } else {
                    t0 + step as f64 * config.dt
                };
                let prev_mass: f64 = state[..rec.nx].iter().sum();
                rk.step(&mut eval, ta, &state, tb - ta, &mut next)
                    .map_err(|e| failure(e, model, &state, ta, tb))?;
                let drift = rec.correct(tb, prev_mass, &mut next);
                std::mem::swap(&mut state, &mut next);
                rec.traj.steps += 1;
                rec.track_argmax(tb, &state);
                if step.is_multiple_of(config.record_every) || step == n_steps {
                    rec.record(tb, &state, drift)?;
                }
            }
        }
        Method::Rk45 => {
            let mut dp = Dopri5::new();
            let mut t = t0;
            let mut h = config.dt;
            let mut accepted = 0usize;
            while t < t_final {
                let last = t + h >= t_final;
                let step = if last { t_final - t } else { h };
                let err = dp
                    .try_step(
                        &mut eval,
                        t,
                        &state,
                        step,
                        config.abs_tol,
                        config.rel_tol,
                        &mut next,
                    )
                    .map_err(|e| failure(e, model, &state, t, t + step))?;
                if err <= 1.0 {
                    let tb = if last { t_final } else { t + step };
                    let prev_mass: f64 = state[..rec.nx].iter().sum();
                    let drift = rec.correct(tb, prev_mass, &mut next);
                    std::mem::swap(&mut state, &mut next);
                    t = tb;
                    accepted += 1;
                    rec.traj.steps += 1;
                    rec.track_argmax(t, &state);
                    if accepted.is_multiple_of(config.record_every) || t >= t_final {
                        rec.record(t, &state, drift)?;
                    }
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h = step * factor;
                } else {
                    h = step * (0.9 * err.powf(-0.25)).max(0.2);
                    if h < 1e-14 * t.abs().max(1.0) {
                        return Err(IntegrationError::StepUnderflow {
                            t,
                            step: h,
                            last_good: Box::new(model.unflatten(&state, t)),
                        }
                        .into());
                    }
                }
            }
        }
    }
    Ok(rec.finish())
}

/// Integrates independent scenarios, each with isolated state.
pub fn integrate_many(scenarios: &[Scenario], exec: Execution) -> Vec<Result<Trajectory>> {
    exec.map(scenarios, integrate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{BestResponse, CarryingCapacity, OutMigration};
    use crate::model::{population_state, CommunityNetwork, PopulationGame, SystemState};
    use ndarray::{array, Array1, Array2};

    fn hawk_dove_single() -> (Model, ExtendedState) {
        let game = PopulationGame::matrix(array![[1.0, 7.0], [5.0, 6.0]]).unwrap();
        let net = CommunityNetwork::new(array![[1.0]], array![[1.0]]).unwrap();
        let model = Model::new(game, net, EnvironmentModel::Constant(array![[0.0]])).unwrap();
        let x = SystemState::new(array![[0.5], [0.5]]).unwrap();
        (model, ExtendedState::new(x, None, 0.0).unwrap())
    }

    #[test]
    fn hawk_dove_converges_to_interior_rest_point() {
        let (model, init) = hawk_dove_single();
        let cfg = IntegratorConfig {
            t_end: 50.0,
            record_every: 1000,
            ..Default::default()
        };
        let traj = integrate_model(&model, &init, &cfg).unwrap();
        let y = population_state(&traj.terminal().system);
        assert!((y[0] - 0.2).abs() < 1e-4, "{y}");
        assert_eq!(traj.steps, 50_000);
        assert_eq!(*traj.times.last().unwrap(), 50.0);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn adaptive_agrees_with_fixed_step() {
        let (model, init) = hawk_dove_single();
        let fixed = integrate_model(
            &model,
            &init,
            &IntegratorConfig {
                t_end: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        let adaptive = integrate_model(
            &model,
            &init,
            &IntegratorConfig {
                method: Method::Rk45,
                dt: 0.01,
                t_end: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(adaptive.steps < fixed.steps / 10);
        let a = adaptive.terminal().system.matrix();
        let b = fixed.terminal().system.matrix();
        assert!((a - b).iter().all(|d| d.abs() < 1e-7));
        assert_eq!(adaptive.terminal().t, 10.0);
    }

    #[test]
    fn constant_environment_conserves_mass() {
        let game = PopulationGame::matrix(array![[2.0, 2.0], [2.0, 2.0]]).unwrap();
        let net = CommunityNetwork::new(
            array![[1.0, 0.5], [0.5, 1.0]],
            array![[1.0, 0.7], [0.7, 1.0]],
        )
        .unwrap();
        let model = Model::new(
            game,
            net,
            EnvironmentModel::Constant(array![[0.2, 0.4], [0.4, 0.1]]),
        )
        .unwrap();
        let x = SystemState::new(array![[0.6, 0.05], [0.3, 0.05]]).unwrap();
        let traj = integrate_model(
            &model,
            &ExtendedState::new(x, None, 0.0).unwrap(),
            &IntegratorConfig {
                t_end: 20.0,
                ..Default::default()
            },
        )
        .unwrap();
        for s in &traj.states {
            assert!((s.system.mass() - 1.0).abs() < 1e-9);
        }
        assert!(traj.drift.per_100_time < 1e-8);
    }

    #[test]
    fn out_migration_stays_in_invariant_band() {
        let game = PopulationGame::matrix(array![[1.0, 7.0], [5.0, 6.0]]).unwrap();
        let net = CommunityNetwork::new(
            array![[0.7, 0.3], [0.3, 0.3]],
            array![[1.0, 0.5], [0.8, 1.0]],
        )
        .unwrap();
        let m = 0.8;
        let env = EnvironmentModel::OutMigration(OutMigration {
            max_response: m,
            capacity: CarryingCapacity::Static(array![0.2, 0.8]),
            initial_phi: array![[1e-6, m - 1e-6], [m - 1e-6, 1e-6]],
        });
        let model = Model::new(game, net, env).unwrap();
        let x =
            SystemState::from_product(array![0.5, 0.5].view(), array![0.5, 0.5].view()).unwrap();
        let init = ExtendedState::new(x, model.environment.initial_env_state(), 0.0).unwrap();
        let traj = integrate_model(
            &model,
            &init,
            &IntegratorConfig {
                t_end: 30.0,
                ..Default::default()
            },
        )
        .unwrap();
        for s in &traj.states {
            for p in s.env_state.as_ref().unwrap() {
                assert!(*p >= 0.0 && *p <= m, "{p}");
            }
        }
    }

    #[test]
    fn best_response_logs_argmax_changes() {
        let game = PopulationGame::matrix(array![[1.0, 7.0], [5.0, 6.0]]).unwrap();
        let net =
            CommunityNetwork::new(Array2::from_elem((3, 3), 0.5), Array2::ones((3, 3))).unwrap();
        let env = EnvironmentModel::BestResponse(BestResponse::new(
            array![1.0, 1.0, 1.0],
            array![0.2, 0.3, 0.5],
        ));
        let model = Model::new(game, net, env).unwrap();
        // everyone first heads for the third community, which then fills up
        // and gives way to the second
        let x = SystemState::from_product(
            array![0.5, 0.5].view(),
            Array1::from_elem(3, 1.0 / 3.0).view(),
        )
        .unwrap();
        let init = ExtendedState::new(x, None, 0.0).unwrap();
        let traj = integrate_model(
            &model,
            &init,
            &IntegratorConfig {
                t_end: 5.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(traj.event_counts().argmax_changes > 0);
        for d in &traj.diagnostics {
            assert!(d.phi_row_sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn renormalizes_off_mass_start() {
        let (model, _) = hawk_dove_single();
        let x = SystemState::from_raw(array![[0.5], [0.5 + 1e-7]]);
        let init = ExtendedState {
            system: x,
            env_state: None,
            t: 0.0,
        };
        let traj = integrate_model(
            &model,
            &init,
            &IntegratorConfig {
                t_end: 0.01,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(traj.event_counts().renormalizations, 1);
        assert!((traj.terminal().system.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rewards_fail_with_last_good_state() {
        let game = PopulationGame::general("blows up", 2, |y, out| {
            out[0] = if y[0] > 0.6 {
                f64::INFINITY
            } else {
                1.0 + y[0]
            };
            out[1] = 1.0;
        })
        .unwrap();
        let net = CommunityNetwork::new(array![[1.0]], array![[1.0]]).unwrap();
        let model = Model::new(game, net, EnvironmentModel::Constant(array![[0.0]])).unwrap();
        let x = SystemState::new(array![[0.5], [0.5]]).unwrap();
        let init = ExtendedState::new(x, None, 0.0).unwrap();
        let err = integrate_model(
            &model,
            &init,
            &IntegratorConfig {
                t_end: 50.0,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::Integration(e) => {
                let y = population_state(&e.last_good().system);
                assert!(y[0] <= 0.6 && y[0] > 0.59);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn deterministic() {
        let (model, init) = hawk_dove_single();
        let cfg = IntegratorConfig {
            t_end: 5.0,
            ..Default::default()
        };
        assert_eq!(
            integrate_model(&model, &init, &cfg).unwrap(),
            integrate_model(&model, &init, &cfg).unwrap()
        );
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig {
            dt: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            record_every: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            dt: 1e-300,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            smooth_argmax_beta: Some(-1.0),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!("RK45".parse::<Method>().unwrap(), Method::Rk45);
        assert!("euler".parse::<Method>().is_err());
    }
}
