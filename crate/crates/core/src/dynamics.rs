//! Vector fields of the coupled system.
//!
//! Selection acts within communities through the replicator equation on the
//! interaction network `W`; migration moves mass between communities at rates
//! `lambda[[h, k]] * phi[[h, k]]`, carrying each community's action mix with
//! it. Together they form the closed-loop field on `x`. Stateful
//! environments add the derivative of their auxiliary `phi` matrix.
//!
//! The extended state is flattened as `x` (row-major, actions by
//! communities) followed by `phi` (row-major) when the environment is
//! stateful.

use ndarray::{Array1, Array2};

use crate::environment::{
    best_response_into, out_migration_phi_dot_into, EnvironmentModel, PhiMatrix,
};
use crate::error::{Error, Result};
use crate::model::{
    validate_game, validate_network, CommunityNetwork, ExtendedState, PopulationGame, SystemState,
    ValidationReport,
};

/// Default number of simplex probe points used to validate general rewards.
pub const DEFAULT_REWARD_PROBES: usize = 1000;

/// A population game on a dynamic community network.
#[derive(Clone, Debug)]
pub struct Model {
    pub game: PopulationGame,
    pub network: CommunityNetwork,
    pub environment: EnvironmentModel,
}

impl Model {
    /// Checks that the pieces agree on dimensions and that environment
    /// parameters are in range. Modelling assumptions are checked by
    /// [`Model::validate`].
    pub fn new(
        game: PopulationGame,
        network: CommunityNetwork,
        environment: EnvironmentModel,
    ) -> Result<Self> {
        environment.validate(network.n_communities())?;
        Ok(Self {
            game,
            network,
            environment,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.game.n_actions()
    }

    pub fn n_communities(&self) -> usize {
        self.network.n_communities()
    }

    /// Length of the flattened extended state.
    pub fn state_len(&self) -> usize {
        let n = self.n_communities();
        self.n_actions() * n
            + if self.environment.is_stateful() {
                n * n
            } else {
                0
            }
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        let mut report = validate_network(&self.network);
        report.merge(validate_game(&self.game, DEFAULT_REWARD_PROBES)?);
        Ok(report)
    }

    pub fn flatten(&self, state: &ExtendedState) -> Result<Vec<f64>> {
        let x = state.system.matrix();
        if x.dim() != (self.n_actions(), self.n_communities()) {
            return Err(Error::dim(format!(
                "state is {:?}, model expects {}x{}",
                x.dim(),
                self.n_actions(),
                self.n_communities()
            )));
        }
        let mut v: Vec<f64> = x.iter().copied().collect();
        match (&state.env_state, self.environment.is_stateful()) {
            (Some(env), true) => v.extend(env.iter().copied()),
            (None, false) => {}
            (None, true) => return Err(Error::State("missing environment state".into())),
            (Some(_), false) => return Err(Error::State("unexpected environment state".into())),
        }
        Ok(v)
    }

    pub fn unflatten(&self, v: &[f64], t: f64) -> ExtendedState {
        let (na, nh) = (self.n_actions(), self.n_communities());
        let x = Array2::from_shape_vec((na, nh), v[..na * nh].to_vec()).expect("state length");
        let env = self.environment.is_stateful().then(|| {
            Array2::from_shape_vec((nh, nh), v[na * nh..].to_vec()).expect("state length")
        });
        ExtendedState {
            system: SystemState::from_raw(x),
            env_state: env,
            t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldOutput {
    pub dx: Array2<f64>,
    pub d_env: Option<Array2<f64>>,
}

/// Scratch space for field evaluations on flat state vectors.
#[derive(Clone, Debug)]
pub struct ClosedLoop<'a> {
    model: &'a Model,
    smoothing: Option<f64>,
    y: Vec<f64>,
    eta: Vec<f64>,
    rewards: Vec<f64>,
    encounter: Vec<f64>,
    phi: Vec<f64>,
    rate: Vec<f64>,
    kappa: Vec<f64>,
    payoffs: Vec<f64>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(model: &'a Model, smoothing: Option<f64>) -> Self {
        let (na, nh) = (model.n_actions(), model.n_communities());
        Self {
            model,
            smoothing,
            y: vec![0.0; na],
            eta: vec![0.0; nh],
            rewards: vec![0.0; na],
            encounter: vec![0.0; na * nh],
            phi: vec![0.0; nh * nh],
            rate: vec![0.0; nh * nh],
            kappa: vec![0.0; nh],
            payoffs: vec![0.0; nh],
        }
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    fn marginals(&mut self, x: &[f64]) {
        let nh = self.model.n_communities();
        self.eta.fill(0.0);
        for (i, yi) in self.y.iter_mut().enumerate() {
            let row = &x[i * nh..(i + 1) * nh];
            *yi = row.iter().sum();
            for (e, v) in self.eta.iter_mut().zip(row) {
                *e += v;
            }
        }
    }

    /// Replicator field on a flat `x` into `f`. Rewards are evaluated once.
    pub fn replicator(&mut self, x: &[f64], f: &mut [f64]) -> Result<()> {
        self.marginals(x);
        self.replicator_after_marginals(x, f)
    }

    fn replicator_after_marginals(&mut self, x: &[f64], f: &mut [f64]) -> Result<()> {
        let (na, nh) = (self.model.n_actions(), self.model.n_communities());
        let w = self.model.network.interaction();
        self.model.game.rewards_into(&self.y, &mut self.rewards)?;

        // encounter[i, h] = sum_k x[i, k] W[h, k]
        for i in 0..na {
            let xi = &x[i * nh..(i + 1) * nh];
            for h in 0..nh {
                self.encounter[i * nh + h] =
                    w.row(h).iter().zip(xi).map(|(whk, xik)| whk * xik).sum();
            }
        }
        for h in 0..nh {
            let mean: f64 = (0..na)
                .map(|j| self.rewards[j] * self.encounter[j * nh + h])
                .sum();
            for i in 0..na {
                let idx = i * nh + h;
                f[idx] = self.eta[h] * self.encounter[idx] * self.rewards[i] - x[idx] * mean;
            }
        }
        Ok(())
    }

    /// Current modulation matrix into `self.phi`.
    fn load_phi(&mut self, env_state: &[f64]) {
        let lambda = self.model.network.movement();
        match &self.model.environment {
            EnvironmentModel::Constant(phi) => {
                for (dst, src) in self.phi.iter_mut().zip(phi.iter()) {
                    *dst = *src;
                }
            }
            EnvironmentModel::BestResponse(br) => {
                best_response_into(
                    &self.eta,
                    br,
                    lambda,
                    self.smoothing,
                    &mut self.payoffs,
                    &mut self.phi,
                );
            }
            EnvironmentModel::OutMigration(_) => self.phi.copy_from_slice(env_state),
        }
        for (r, (l, p)) in self.rate.iter_mut().zip(lambda.iter().zip(&self.phi)) {
            *r = l * p;
        }
    }

    /// Full extended-state derivative at time `t`.
    pub fn eval(&mut self, t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
        let (na, nh) = (self.model.n_actions(), self.model.n_communities());
        let nx = na * nh;
        let (x, env) = state.split_at(nx);
        let (dx, denv) = out.split_at_mut(nx);

        self.marginals(x);
        self.replicator_after_marginals(x, dx)?;
        self.load_phi(env);

        for h in 0..nh {
            let outflow: f64 = self.rate[h * nh..(h + 1) * nh].iter().sum();
            for i in 0..na {
                let xi = &x[i * nh..(i + 1) * nh];
                let inflow: f64 = (0..nh).map(|k| self.rate[k * nh + h] * xi[k]).sum();
                dx[i * nh + h] += inflow - xi[h] * outflow;
            }
        }

        if let EnvironmentModel::OutMigration(om) = &self.model.environment {
            om.capacity.at_into(t, &mut self.kappa);
            out_migration_phi_dot_into(env, &self.eta, &self.kappa, om.max_response, denv);
        }
        if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "non-finite field component {pos} at t = {t}"
            )));
        }
        Ok(())
    }

    /// Modulation matrix used at the last [`ClosedLoop::eval`] call.
    pub fn last_phi(&self) -> &[f64] {
        &self.phi
    }
}

/// Replicator equation on the community network at `x`.
pub fn replicator_field(
    x: &SystemState,
    net: &CommunityNetwork,
    game: &PopulationGame,
) -> Result<Array2<f64>> {
    let (na, nh) = (game.n_actions(), net.n_communities());
    if x.matrix().dim() != (na, nh) {
        return Err(Error::dim(format!(
            "state is {:?}, expected {na}x{nh}",
            x.matrix().dim()
        )));
    }
    let model = Model {
        game: game.clone(),
        network: net.clone(),
        environment: EnvironmentModel::Constant(Array2::zeros((nh, nh))),
    };
    let flat: Vec<f64> = x.matrix().iter().copied().collect();
    let mut f = vec![0.0; na * nh];
    ClosedLoop::new(&model, None).replicator(&flat, &mut f)?;
    Ok(Array2::from_shape_vec((na, nh), f).expect("shape"))
}

/// Density change under the closed flow process: inflow minus outflow.
pub fn flow_field(eta: &Array1<f64>, phi: &PhiMatrix, lambda: &Array2<f64>) -> Array1<f64> {
    let n = eta.len();
    Array1::from_shape_fn(n, |h| {
        let inflow: f64 = (0..n).map(|k| lambda[[k, h]] * phi[[k, h]] * eta[k]).sum();
        let outflow: f64 = (0..n).map(|k| lambda[[h, k]] * phi[[h, k]]).sum();
        inflow - eta[h] * outflow
    })
}

/// Closed-loop derivative of the extended state.
pub fn closed_loop_field(
    state: &ExtendedState,
    model: &Model,
    smoothing: Option<f64>,
) -> Result<FieldOutput> {
    let flat = model.flatten(state)?;
    let mut out = vec![0.0; flat.len()];
    ClosedLoop::new(model, smoothing).eval(state.t, &flat, &mut out)?;
    let d = model.unflatten(&out, state.t);
    Ok(FieldOutput {
        dx: d.system.into_matrix(),
        d_env: d.env_state,
    })
}
