//! Environmental response functions that modulate the movement matrix.
//!
//! Three models are provided:
//! - a constant modulation matrix,
//! - best-response community selection, where individuals in community `k`
//!   move uniformly to the highest-payoff communities of its neighborhood,
//! - dynamic out-migration, where each `phi[[h, k]]` follows a logistic ODE
//!   driven by crowding relative to a (possibly seasonal) carrying capacity.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::ExtendedState;

/// Non-negative matrix of modulation values `phi[[h, k]]`.
pub type PhiMatrix = Array2<f64>;

pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum CarryingCapacity {
    Static(Array1<f64>),
    /// `kappa_h(t) = amplitude * sin(t + phases[h]) + offset`.
    Sinusoidal {
        amplitude: f64,
        offset: f64,
        phases: Vec<f64>,
    },
}

impl CarryingCapacity {
    pub fn len(&self) -> usize {
        match self {
            CarryingCapacity::Static(k) => k.len(),
            CarryingCapacity::Sinusoidal { phases, .. } => phases.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CarryingCapacity::Static(k) => {
                if let Some(v) = k.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::config(format!(
                        "carrying capacity must be > 0, got {v}"
                    )));
                }
            }
            CarryingCapacity::Sinusoidal {
                amplitude,
                offset,
                phases,
            } => {
                check_sinusoid(*amplitude, *offset)?;
                if phases.iter().any(|p| !p.is_finite()) {
                    return Err(Error::config("sinusoid phases must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn at_into(&self, t: f64, out: &mut [f64]) {
        match self {
            CarryingCapacity::Static(k) => out.copy_from_slice(k.as_slice().expect("contiguous")),
            CarryingCapacity::Sinusoidal {
                amplitude,
                offset,
                phases,
            } => {
                for (o, p) in out.iter_mut().zip(phases) {
                    *o = amplitude * (t + p).sin() + offset;
                }
            }
        }
    }

    pub fn at(&self, t: f64) -> Array1<f64> {
        let mut out = vec![0.0; self.len()];
        self.at_into(t, &mut out);
        Array1::from(out)
    }
}

fn check_sinusoid(amplitude: f64, offset: f64) -> Result<()> {
    if !(amplitude > 0.0 && amplitude < offset && offset.is_finite()) {
        return Err(Error::config(format!(
            "sinusoidal capacity needs 0 < amplitude < offset, got amplitude {amplitude}, offset {offset}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub alpha: Array1<f64>,
    pub kappa: Array1<f64>,
    pub tie_tolerance: f64,
}

impl BestResponse {
    pub fn new(alpha: Array1<f64>, kappa: Array1<f64>) -> Self {
        Self {
            alpha,
            kappa,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        }
    }

    pub fn payoffs(&self, eta: &[f64]) -> Array1<f64> {
        Array1::from_shape_fn(eta.len(), |h| {
            community_payoff(eta[h], self.alpha[h], self.kappa[h])
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutMigration {
    /// Maximum environmental response `m`.
    pub max_response: f64,
    pub capacity: CarryingCapacity,
    pub initial_phi: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvironmentModel {
    Constant(PhiMatrix),
    BestResponse(BestResponse),
    OutMigration(OutMigration),
}

impl EnvironmentModel {
    /// Checks parameter ranges and sizes against `n` communities.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            EnvironmentModel::Constant(phi) => {
                check_phi(phi, n, "constant phi")?;
            }
            EnvironmentModel::BestResponse(br) => {
                if br.alpha.len() != n || br.kappa.len() != n {
                    return Err(Error::dim(format!(
                        "best response needs {n} alpha and kappa values, got {} and {}",
                        br.alpha.len(),
                        br.kappa.len()
                    )));
                }
                if br
                    .alpha
                    .iter()
                    .chain(br.kappa.iter())
                    .any(|v| !(v.is_finite() && *v > 0.0))
                {
                    return Err(Error::config("best response alpha and kappa must be > 0"));
                }
                if !(br.tie_tolerance >= 0.0 && br.tie_tolerance.is_finite()) {
                    return Err(Error::config("tie tolerance must be >= 0"));
                }
            }
            EnvironmentModel::OutMigration(om) => {
                if !(om.max_response > 0.0 && om.max_response.is_finite()) {
                    return Err(Error::config(format!(
                        "maximum response must be > 0, got {}",
                        om.max_response
                    )));
                }
                if om.capacity.len() != n {
                    return Err(Error::dim(format!(
                        "carrying capacity has {} entries for {n} communities",
                        om.capacity.len()
                    )));
                }
                om.capacity.validate()?;
                check_phi(&om.initial_phi, n, "initial phi")?;
            }
        }
        Ok(())
    }

    /// True when the environment carries an auxiliary ODE state.
    pub fn is_stateful(&self) -> bool {
        matches!(self, EnvironmentModel::OutMigration(_))
    }

    /// True when phi varies along a trajectory.
    pub fn is_dynamic(&self) -> bool {
        !matches!(self, EnvironmentModel::Constant(_))
    }

    pub fn initial_env_state(&self) -> Option<Array2<f64>> {
        match self {
            EnvironmentModel::OutMigration(om) => Some(om.initial_phi.clone()),
            _ => None,
        }
    }
}

fn check_phi(phi: &Array2<f64>, n: usize, what: &str) -> Result<()> {
    if phi.dim() != (n, n) {
        return Err(Error::dim(format!(
            "{what} is {:?}, expected {n}x{n}",
            phi.dim()
        )));
    }
    if phi.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::config(format!(
            "{what} entries must be finite and >= 0"
        )));
    }
    Ok(())
}

/// Payoff for living in a community at density `eta_h`:
/// `alpha_h * (1 - eta_h / kappa_h)`.
pub fn community_payoff(eta_h: f64, alpha_h: f64, kappa_h: f64) -> f64 {
    alpha_h * (1.0 - eta_h / kappa_h)
}

/// Neighborhood of `k`: communities `z` with `lambda[[z, k]] > 0`.
fn neighbors(lambda: &Array2<f64>, k: usize) -> impl Iterator<Item = usize> + '_ {
    (0..lambda.nrows()).filter(move |&z| lambda[[z, k]] > 0.0)
}

/// Best-payoff sets `N_k(eta)` for every community `k`, with payoffs within
/// `tie_tolerance` of the maximum counted as tied.
pub fn argmax_sets(eta: &[f64], params: &BestResponse, lambda: &Array2<f64>) -> Vec<Vec<usize>> {
    let payoffs = params.payoffs(eta);
    (0..eta.len())
        .map(|k| {
            let max = neighbors(lambda, k)
                .map(|z| payoffs[z])
                .fold(f64::NEG_INFINITY, f64::max);
            neighbors(lambda, k)
                .filter(|&z| payoffs[z] >= max - params.tie_tolerance)
                .collect()
        })
        .collect()
}

/// Writes the best-response modulation into `out` (row-major `n x n`).
/// With `smoothing = Some(beta)` the uniform split over the argmax set is
/// replaced by softmax weights `exp(beta * payoff)` over the neighborhood.
pub(crate) fn best_response_into(
    eta: &[f64],
    params: &BestResponse,
    lambda: &Array2<f64>,
    smoothing: Option<f64>,
    payoffs: &mut [f64],
    out: &mut [f64],
) {
    let n = eta.len();
    for (h, p) in payoffs.iter_mut().enumerate() {
        *p = community_payoff(eta[h], params.alpha[h], params.kappa[h]);
    }
    out.fill(0.0);
    for k in 0..n {
        let row = &mut out[k * n..(k + 1) * n];
        let max = neighbors(lambda, k)
            .map(|z| payoffs[z])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            log::debug!("community {k} has an empty movement neighborhood");
            continue;
        }
        match smoothing {
            None => {
                let mut count = 0usize;
                for z in neighbors(lambda, k) {
                    if payoffs[z] >= max - params.tie_tolerance {
                        row[z] = 1.0;
                        count += 1;
                    }
                }
                let w = 1.0 / count as f64;
                row.iter_mut().for_each(|v| *v *= w);
            }
            Some(beta) => {
                let mut total = 0.0;
                for z in neighbors(lambda, k) {
                    let w = (beta * (payoffs[z] - max)).exp();
                    row[z] = w;
                    total += w;
                }
                row.iter_mut().for_each(|v| *v /= total);
            }
        }
    }
}

pub fn best_response_phi(
    eta: &Array1<f64>,
    params: &BestResponse,
    lambda: &Array2<f64>,
) -> PhiMatrix {
    let n = eta.len();
    let eta = eta.to_vec();
    let mut payoffs = vec![0.0; n];
    let mut out = vec![0.0; n * n];
    best_response_into(&eta, params, lambda, None, &mut payoffs, &mut out);
    Array2::from_shape_vec((n, n), out).expect("square")
}

/// `d phi[[h, k]] / dt = (phi - m) (1 - eta_h / kappa_h) phi`, written into
/// `out` (row-major `n x n`). Capacities must be positive.
pub(crate) fn out_migration_phi_dot_into(
    phi: &[f64],
    eta: &[f64],
    kappa: &[f64],
    m: f64,
    out: &mut [f64],
) {
    let n = eta.len();
    for h in 0..n {
        let crowd = 1.0 - eta[h] / kappa[h];
        for k in 0..n {
            let p = phi[h * n + k];
            out[h * n + k] = (p - m) * crowd * p;
        }
    }
}

pub fn out_migration_phi_dot(
    phi: &PhiMatrix,
    eta: &Array1<f64>,
    kappa: &Array1<f64>,
    m: f64,
) -> Result<Array2<f64>> {
    let n = eta.len();
    if phi.dim() != (n, n) || kappa.len() != n {
        return Err(Error::dim("phi, eta and kappa sizes disagree"));
    }
    if let Some(k) = kappa.iter().find(|k| !(**k > 0.0)) {
        return Err(Error::config(format!(
            "carrying capacity must be > 0, got {k}"
        )));
    }
    let phi_v: Vec<f64> = phi.iter().copied().collect();
    let mut out = vec![0.0; n * n];
    out_migration_phi_dot_into(&phi_v, &eta.to_vec(), &kappa.to_vec(), m, &mut out);
    Ok(Array2::from_shape_vec((n, n), out).expect("square"))
}

/// `gamma * sin(t + phase) + rho`, requiring `0 < gamma < rho`.
pub fn kappa_sinusoidal(t: f64, gamma: f64, rho: f64, phase: f64) -> Result<f64> {
    check_sinusoid(gamma, rho)?;
    Ok(gamma * (t + phase).sin() + rho)
}

/// Modulation matrix at `state`. `smoothing` only affects best response.
pub fn evaluate_phi(
    model: &EnvironmentModel,
    state: &ExtendedState,
    lambda: &Array2<f64>,
    smoothing: Option<f64>,
) -> Result<PhiMatrix> {
    let n = state.system.n_communities();
    if lambda.dim() != (n, n) {
        return Err(Error::dim("movement matrix does not match the state"));
    }
    match model {
        EnvironmentModel::Constant(phi) => Ok(phi.clone()),
        EnvironmentModel::BestResponse(br) => {
            let eta = crate::model::community_densities(&state.system).to_vec();
            let mut payoffs = vec![0.0; n];
            let mut out = vec![0.0; n * n];
            best_response_into(&eta, br, lambda, smoothing, &mut payoffs, &mut out);
            Ok(Array2::from_shape_vec((n, n), out).expect("square"))
        }
        EnvironmentModel::OutMigration(_) => state.env_state.clone().ok_or_else(|| {
            Error::State("out-migration environment needs an auxiliary phi state".into())
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemState;
    use ndarray::array;
    use std::f64::consts::PI;

    #[test]
    fn payoff_examples() {
        assert_eq!(community_payoff(0.5, 1.0, 0.5), 0.0);
        assert_eq!(community_payoff(0.25, 2.0, 0.5), 1.0);
        assert_eq!(community_payoff(1.0, 1.0, 0.5), -1.0);
    }

    #[test]
    fn best_response_singleton_argmax() {
        // pi_1 = 1 - 0.4/0.5 = 0.2 > pi_2 = 1 - 0.6/0.5 = -0.2
        let br = BestResponse::new(array![1.0, 1.0], array![0.5, 0.5]);
        let phi = best_response_phi(&array![0.4, 0.6], &br, &Array2::ones((2, 2)));
        assert_eq!(phi, array![[1.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn best_response_tie_splits_uniformly() {
        let br = BestResponse::new(array![1.0, 1.0], array![0.5, 0.5]);
        let phi = best_response_phi(&array![0.5, 0.5], &br, &Array2::ones((2, 2)));
        assert_eq!(phi, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn best_response_self_loops_only() {
        let br = BestResponse::new(array![1.0, 3.0], array![0.5, 0.2]);
        let phi = best_response_phi(&array![0.3, 0.7], &br, &Array2::eye(2));
        assert_eq!(phi, Array2::<f64>::eye(2));
    }

    #[test]
    fn best_response_empty_neighborhood_gives_zero_row() {
        let br = BestResponse::new(array![1.0, 1.0], array![0.5, 0.5]);
        let lambda = array![[1.0, 0.0], [0.0, 0.0]];
        let phi = best_response_phi(&array![0.5, 0.5], &br, &lambda);
        assert_eq!(phi, array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn smoothed_best_response_is_row_stochastic_and_tracks_argmax() {
        let br = BestResponse::new(array![1.0, 1.0, 1.0], array![0.2, 0.3, 0.5]);
        let lambda = Array2::ones((3, 3));
        let eta = [0.3, 0.3, 0.4];
        let mut p = [0.0; 3];
        let mut out = [0.0; 9];
        best_response_into(&eta, &br, &lambda, Some(1e3), &mut p, &mut out);
        for k in 0..3 {
            let row = &out[3 * k..3 * k + 3];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // community 3 has the highest payoff (0.2 vs -0.5 and 0)
            assert!(row[2] > 0.999);
        }
    }

    #[test]
    fn phi_dot_examples() {
        let m = 1.0;
        let d = out_migration_phi_dot(
            &array![[1.0, 1.0], [1.0, 1.0]],
            &array![0.3, 0.7],
            &array![0.5, 0.5],
            m,
        )
        .unwrap();
        assert!(d.iter().all(|v| *v == 0.0));

        let d = out_migration_phi_dot(
            &array![[0.3, 0.2], [0.1, 0.4]],
            &array![0.5, 0.5],
            &array![0.5, 0.4],
            m,
        )
        .unwrap();
        assert_eq!(d.row(0).to_vec(), vec![0.0, 0.0]);

        let d = out_migration_phi_dot(
            &array![[0.05, 0.05], [0.05, 0.05]],
            &array![0.75, 0.25],
            &array![0.5, 0.5],
            m,
        )
        .unwrap();
        assert!((d[[0, 1]] - 0.02375).abs() < 1e-15);
        // community 2 is under capacity, so its out-migration decays
        assert!(d[[1, 0]] < 0.0);
    }

    #[test]
    fn phi_dot_rejects_nonpositive_capacity() {
        let e = out_migration_phi_dot(
            &Array2::zeros((2, 2)),
            &array![0.5, 0.5],
            &array![0.5, 0.0],
            1.0,
        );
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn sinusoid_examples() {
        assert_eq!(kappa_sinusoidal(0.0, 0.25, 0.5, 0.0).unwrap(), 0.5);
        assert!((kappa_sinusoidal(PI / 2.0, 0.25, 0.5, 0.0).unwrap() - 0.75).abs() < 1e-15);
        for t in [0.0, 0.3, 1.7, 4.0] {
            let a = kappa_sinusoidal(t + PI, 0.25, 0.5, 0.0).unwrap();
            let b = kappa_sinusoidal(t, 0.25, 0.5, PI).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
        assert!(kappa_sinusoidal(0.0, 0.5, 0.5, 0.0).is_err());
        assert!(kappa_sinusoidal(0.0, 0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn evaluate_phi_dispatch() {
        let x = SystemState::new(array![[0.1, 0.2], [0.3, 0.4]]).unwrap();
        let lambda = Array2::ones((2, 2));
        let state = ExtendedState::new(x.clone(), None, 0.0).unwrap();

        let phi0 = array![[0.0, 0.3], [0.2, 0.0]];
        let phi = evaluate_phi(
            &EnvironmentModel::Constant(phi0.clone()),
            &state,
            &lambda,
            None,
        )
        .unwrap();
        assert_eq!(phi, phi0);

        let br = BestResponse::new(array![1.0, 1.0], array![0.5, 0.5]);
        let phi = evaluate_phi(
            &EnvironmentModel::BestResponse(br.clone()),
            &state,
            &lambda,
            None,
        )
        .unwrap();
        assert_eq!(phi, best_response_phi(&array![0.4, 0.6], &br, &lambda));

        let om = EnvironmentModel::OutMigration(OutMigration {
            max_response: 1.0,
            capacity: CarryingCapacity::Static(array![0.5, 0.5]),
            initial_phi: Array2::from_elem((2, 2), 0.05),
        });
        assert!(matches!(
            evaluate_phi(&om, &state, &lambda, None),
            Err(Error::State(_))
        ));
        let state = ExtendedState::new(x, om.initial_env_state(), 0.0).unwrap();
        assert_eq!(
            evaluate_phi(&om, &state, &lambda, None).unwrap(),
            Array2::from_elem((2, 2), 0.05)
        );
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let bad = EnvironmentModel::OutMigration(OutMigration {
            max_response: 1.0,
            capacity: CarryingCapacity::Sinusoidal {
                amplitude: 0.6,
                offset: 0.5,
                phases: vec![0.0, PI],
            },
            initial_phi: Array2::zeros((2, 2)),
        });
        assert!(matches!(bad.validate(2), Err(Error::Config(_))));
        let bad = EnvironmentModel::Constant(array![[0.0, -1.0], [0.0, 0.0]]);
        assert!(bad.validate(2).is_err());
        let bad =
            EnvironmentModel::BestResponse(BestResponse::new(array![1.0, 0.0], array![0.5, 0.5]));
        assert!(bad.validate(2).is_err());
    }
}
