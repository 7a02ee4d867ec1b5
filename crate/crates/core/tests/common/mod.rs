#![allow(dead_code)]

use dyncomm::environment::{BestResponse, CarryingCapacity, EnvironmentModel, OutMigration};
use dyncomm::{CommunityNetwork, ExtendedState, Model, PopulationGame, SystemState};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn positive_matrix(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |_| rng.random_range(lo..hi))
}

/// Irreducible interaction matrix with positive diagonal: a directed ring
/// plus random extra edges.
pub fn random_interaction(rng: &mut impl Rng, n: usize, symmetric: bool) -> Array2<f64> {
    let mut w = Array2::zeros((n, n));
    for h in 0..n {
        w[[h, h]] = rng.random_range(0.2..1.0);
        for k in 0..n {
            if k != h && (k == (h + 1) % n || rng.random_bool(0.5)) {
                w[[h, k]] = rng.random_range(0.05..1.0);
            }
        }
    }
    if symmetric {
        w = (&w + &w.t()) / 2.0;
    }
    w
}

pub fn random_movement(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(h, k)| {
        if h == k {
            1.0
        } else if rng.random_bool(0.7) {
            rng.random_range(0.05..1.5)
        } else {
            0.0
        }
    })
}

pub fn random_environment(rng: &mut impl Rng, n: usize) -> EnvironmentModel {
    match rng.random_range(0..3) {
        0 => EnvironmentModel::Constant(positive_matrix(rng, n, 0.0, 1.0)),
        1 => {
            let kappa: Array1<f64> = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
            let alpha = Array1::from_shape_fn(n, |_| rng.random_range(0.5..2.0));
            EnvironmentModel::BestResponse(BestResponse::new(alpha, &kappa / kappa.sum()))
        }
        _ => {
            let m = rng.random_range(0.2..1.5);
            let capacity = if rng.random_bool(0.5) {
                CarryingCapacity::Static(Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0)))
            } else {
                let offset = rng.random_range(0.3..1.0);
                CarryingCapacity::Sinusoidal {
                    amplitude: offset * rng.random_range(0.1..0.9),
                    offset,
                    phases: (0..n).map(|_| rng.random_range(0.0..6.3)).collect(),
                }
            };
            EnvironmentModel::OutMigration(OutMigration {
                max_response: m,
                capacity,
                initial_phi: positive_matrix(rng, n, 0.0, m),
            })
        }
    }
}

/// A model that passes validation.
pub fn random_model(rng: &mut impl Rng) -> Model {
    let na = rng.random_range(2..=3);
    let nh = rng.random_range(1..=4);
    let game = PopulationGame::matrix(positive_matrix(rng, na, 0.5, 8.0)).unwrap();
    let net = CommunityNetwork::new(random_interaction(rng, nh, false), random_movement(rng, nh))
        .unwrap();
    let model = Model::new(game, net, random_environment(rng, nh)).unwrap();
    assert!(model.validate().unwrap().passed());
    model
}

/// A point of the unit simplex over `na x nh` entries, occasionally with
/// empty cells.
pub fn random_system(rng: &mut impl Rng, na: usize, nh: usize) -> SystemState {
    let x = Array2::from_shape_fn((na, nh), |_| {
        if rng.random_bool(0.1) {
            0.0
        } else {
            rng.random_range(0.0..1.0)
        }
    });
    let total = x.sum();
    if total == 0.0 {
        return SystemState::new(Array2::from_elem((na, nh), 1.0 / (na * nh) as f64)).unwrap();
    }
    SystemState::new(x / total).unwrap()
}

pub fn random_extended(rng: &mut impl Rng, model: &Model) -> ExtendedState {
    let x = random_system(rng, model.n_actions(), model.n_communities());
    let env = match &model.environment {
        EnvironmentModel::OutMigration(om) => Some(positive_matrix(
            rng,
            model.n_communities(),
            0.0,
            om.max_response,
        )),
        _ => None,
    };
    ExtendedState::new(x, env, rng.random_range(0.0..10.0)).unwrap()
}

/// Single-community Hawk-Dove replicator model.
pub fn hawk_dove_single() -> Model {
    let game = PopulationGame::matrix(ndarray::array![[1.0, 7.0], [5.0, 6.0]]).unwrap();
    let net = CommunityNetwork::new(ndarray::array![[1.0]], ndarray::array![[1.0]]).unwrap();
    Model::new(
        game,
        net,
        EnvironmentModel::Constant(ndarray::array![[0.0]]),
    )
    .unwrap()
}
