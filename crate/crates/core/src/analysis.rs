//! Equilibrium and stability diagnostics.
//!
//! A population state is a restricted Nash equilibrium when every supported
//! action earns the same reward. A system state is balanced when each
//! occupied community carries the population mix, `x[[i, h]] = y_i eta_h`.
//! Both hold at the limit of any trajectory whose population state
//! converges, even when densities keep moving.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::dynamics::{flow_field, replicator_field, ClosedLoop, Model};
use crate::environment::{community_payoff, evaluate_phi};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{
    community_densities, population_state, CommunityNetwork, PopulationGame, SystemState, DRIFT_TOL,
};
use crate::solver::{Trajectory, CLAMP_FLOOR};

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-8;
/// Radii of the ESS probe, as fractions of the neighborhood size.
pub const ESS_PROBE_RADII: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_ESS_DIRECTIONS: usize = 64;
pub const SIGN_DEAD_ZONE: f64 = 1e-10;

pub fn support(y: &Array1<f64>, threshold: f64) -> Vec<usize> {
    (0..y.len()).filter(|&i| y[i] > threshold).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NashCheck {
    pub is_restricted_nash: bool,
    pub support: Vec<usize>,
    /// Largest reward difference between supported actions.
    pub gap: f64,
}

pub fn restricted_nash_check(
    y: &Array1<f64>,
    game: &PopulationGame,
    tol: f64,
) -> Result<NashCheck> {
    restricted_nash_check_with(y, game, tol, DEFAULT_SUPPORT_THRESHOLD)
}

pub fn restricted_nash_check_with(
    y: &Array1<f64>,
    game: &PopulationGame,
    tol: f64,
    support_threshold: f64,
) -> Result<NashCheck> {
    let r = game.rewards(y.view())?;
    let support = support(y, support_threshold);
    let (lo, hi) = support
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(r[i]), hi.max(r[i]))
        });
    let gap = if support.len() > 1 { hi - lo } else { 0.0 };
    Ok(NashCheck {
        is_restricted_nash: gap <= tol,
        support,
        gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommunityBalance {
    pub community: usize,
    pub density: f64,
    /// `|x[[i, h]] / eta_h - y_i|` for each action.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcludedCommunity {
    pub community: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceReport {
    pub max_residual: f64,
    pub communities: Vec<CommunityBalance>,
    /// Communities at or below the density threshold.
    pub excluded: Vec<ExcludedCommunity>,
}

pub fn balance_residual(x: &SystemState, support_threshold: f64) -> BalanceReport {
    let y = population_state(x);
    let eta = community_densities(x);
    let m = x.matrix();
    let mut communities = Vec::new();
    let mut excluded = Vec::new();
    let mut max_residual = 0.0f64;
    for h in 0..eta.len() {
        if eta[h] <= support_threshold {
            excluded.push(ExcludedCommunity {
                community: h,
                mass: eta[h],
            });
            continue;
        }
        let residuals: Vec<f64> = (0..y.len())
            .map(|i| (m[[i, h]] / eta[h] - y[i]).abs())
            .collect();
        max_residual = residuals.iter().copied().fold(max_residual, f64::max);
        communities.push(CommunityBalance {
            community: h,
            density: eta[h],
            residuals,
        });
    }
    BalanceReport {
        max_residual,
        communities,
        excluded,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub is_restricted_nash: bool,
    pub support: Vec<usize>,
    pub max_reward_gap_on_support: f64,
    pub balance_residual: f64,
    pub communities: Vec<CommunityBalance>,
    pub excluded: Vec<ExcludedCommunity>,
}

pub fn equilibrium_report(
    x: &SystemState,
    game: &PopulationGame,
    tol: f64,
) -> Result<EquilibriumReport> {
    let nash = restricted_nash_check(&population_state(x), game, tol)?;
    let balance = balance_residual(x, DEFAULT_SUPPORT_THRESHOLD);
    Ok(EquilibriumReport {
        is_restricted_nash: nash.is_restricted_nash,
        support: nash.support,
        max_reward_gap_on_support: nash.gap,
        balance_residual: balance.max_residual,
        communities: balance.communities,
        excluded: balance.excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum EssClass {
    /// Anti-coordination game with a unique interior ESS.
    Interior {
        y_hat: [f64; 2],
    },
    /// Indices of actions whose vertex state is an ESS.
    Pure {
        actions: Vec<usize>,
    },
    None,
    /// `a = c` and `b = d`: every state is neutral.
    Degenerate,
}

impl EssClass {
    pub fn interior(&self) -> Option<[f64; 2]> {
        match self {
            EssClass::Interior { y_hat } => Some(*y_hat),
            _ => None,
        }
    }
}

fn check_2x2(a: &Array2<f64>) -> Result<(f64, f64, f64, f64)> {
    if a.dim() != (2, 2) {
        return Err(Error::Precondition(format!(
            "expected a 2x2 payoff matrix, got {:?}",
            a.dim()
        )));
    }
    Ok((a[[0, 0]], a[[0, 1]], a[[1, 0]], a[[1, 1]]))
}

/// Closed-form ESS classification of a symmetric 2x2 matrix game
/// `[[a, b], [c, d]]`.
pub fn ess_2x2(a: &Array2<f64>) -> Result<EssClass> {
    let (a, b, c, d) = check_2x2(a)?;
    if [a, b, c, d].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Precondition(
            "payoff entries must be positive".into(),
        ));
    }
    if a == c && b == d {
        return Ok(EssClass::Degenerate);
    }
    if c - a > 0.0 && b - d > 0.0 {
        let den = c - a + b - d;
        return Ok(EssClass::Interior {
            y_hat: [(b - d) / den, (c - a) / den],
        });
    }
    let mut actions = Vec::new();
    // a vertex resists invasion when it strictly wins against itself, or
    // ties there and strictly wins against the invader
    if a > c || (a == c && b > d) {
        actions.push(0);
    }
    if d > b || (d == b && c > a) {
        actions.push(1);
    }
    Ok(if actions.is_empty() {
        EssClass::None
    } else {
        EssClass::Pure { actions }
    })
}

/// Orthonormal basis of the tangent space `{v : sum v = 0}`.
fn helmert_basis(n: usize) -> Vec<Vec<f64>> {
    (1..n)
        .map(|j| {
            let norm = ((j * (j + 1)) as f64).sqrt();
            let mut v = vec![0.0; n];
            v[..j].iter_mut().for_each(|e| *e = 1.0 / norm);
            v[j] = -(j as f64) / norm;
            v
        })
        .collect()
}

fn quad(a: &Array2<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    (0..n)
        .map(|i| u[i] * (0..n).map(|j| a[[i, j]] * v[j]).sum::<f64>())
        .sum()
}

/// Falsification check of evolutionary stability: `y_hat . A y > y . A y`
/// at deterministic probes around `y_hat` inside the simplex. Passing is
/// evidence, failing proves `y_hat` is not an ESS.
pub fn ess_verify(y_hat: &Array1<f64>, a: &Array2<f64>, delta: f64, n_probe: usize) -> bool {
    let n = y_hat.len();
    let basis = helmert_basis(n);
    if basis.is_empty() || n_probe == 0 {
        return true;
    }
    let planes: Vec<(usize, usize)> = (0..basis.len())
        .flat_map(|p| (p + 1..basis.len()).map(move |q| (p, q)))
        .collect();
    let y_hat_v = y_hat.to_vec();
    for k in 0..n_probe {
        let dir: Vec<f64> = if planes.is_empty() {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            basis[0].iter().map(|v| s * v).collect()
        } else {
            let (p, q) = planes[k % planes.len()];
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_probe as f64;
            (0..n)
                .map(|i| theta.cos() * basis[p][i] + theta.sin() * basis[q][i])
                .collect()
        };
        for frac in ESS_PROBE_RADII {
            let r = delta * frac;
            let y: Vec<f64> = (0..n).map(|i| y_hat_v[i] + r * dir[i]).collect();
            if y.iter().any(|v| *v < 0.0) {
                continue;
            }
            if quad(a, &y_hat_v, &y) <= quad(a, &y, &y) {
                return false;
            }
        }
    }
    true
}

/// `prod_{i in supp(y_hat)} y_i ^ y_hat_i`.
pub fn lyapunov_p(y: &Array1<f64>, y_hat: &Array1<f64>) -> f64 {
    y.iter()
        .zip(y_hat.iter())
        .filter(|(_, yh)| **yh > 0.0)
        .map(|(yi, yh)| yi.powf(*yh))
        .product()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovSignCheck {
    /// `dP/dt / P` from the population-state derivative of the field.
    pub rate: f64,
    /// `dP/dt / P` from the binary-action encounter formula.
    pub rate_formula: f64,
    /// `y_hat . A y - y . A y`.
    pub ess_gap: f64,
    pub agree: bool,
}

fn dead_zone_sign(v: f64) -> i8 {
    if v.abs() <= SIGN_DEAD_ZONE {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Compares the sign of the Lyapunov rate `dP/dt / P` with the sign of the
/// ESS gap `y_hat . A y - y . A y` for a binary matrix game on a symmetric
/// network. Values within the dead zone are treated as zero and agree with
/// either sign.
pub fn lyapunov_rate_sign_check(
    x: &SystemState,
    net: &CommunityNetwork,
    a: &Array2<f64>,
    y_hat: &Array1<f64>,
) -> Result<LyapunovSignCheck> {
    check_2x2(a)?;
    let w = net.interaction();
    if (w - &w.t()).iter().any(|d| d.abs() > 1e-12) {
        return Err(Error::Precondition(
            "interaction matrix must be symmetric".into(),
        ));
    }
    if x.n_actions() != 2 || y_hat.len() != 2 {
        return Err(Error::Precondition("action set must be binary".into()));
    }
    let y = population_state(x);
    if lyapunov_p(&y, y_hat) <= 0.0 {
        return Err(Error::Precondition("P(y) must be positive".into()));
    }
    let game = PopulationGame::matrix(a.clone())?;
    let f = replicator_field(x, net, &game)?;
    let ydot = f.sum_axis(Axis(1));
    let r = a.dot(&y);

    let supp: Vec<usize> = (0..2).filter(|&i| y_hat[i] > 0.0).collect();
    let rate: f64 = supp.iter().map(|&i| y_hat[i] * ydot[i] / y[i]).sum();

    let xm = x.matrix();
    let encounter = xm.row(0).dot(&w.dot(&xm.row(1)));
    let rate_formula: f64 = supp
        .iter()
        .map(|&i| {
            let j = 1 - i;
            y_hat[i] / y[i] * encounter * (r[i] - r[j])
        })
        .sum();

    let ess_gap = y_hat.dot(&r) - y.dot(&r);
    let (s1, s2) = (dead_zone_sign(rate), dead_zone_sign(ess_gap));
    Ok(LyapunovSignCheck {
        rate,
        rate_formula,
        ess_gap,
        agree: s1 == s2 || s1 == 0 || s2 == 0,
    })
}

/// `Q[[h, k]] = W[[h, k]] eta_k / sum_l W[[h, l]] eta_l`.
pub fn q_matrix(eta: &Array1<f64>, w: &Array2<f64>) -> Result<Array2<f64>> {
    let n = eta.len();
    if w.dim() != (n, n) {
        return Err(Error::dim("interaction matrix does not match densities"));
    }
    if let Some(h) = (0..n).find(|&h| !(eta[h] > 0.0)) {
        return Err(Error::Precondition(format!(
            "density of community {h} is not positive"
        )));
    }
    let mut q = Array2::from_shape_fn((n, n), |(h, k)| w[[h, k]] * eta[k]);
    for mut row in q.rows_mut() {
        let s = row.sum();
        if !(s > 0.0) {
            return Err(Error::Precondition(
                "interaction matrix has an empty row".into(),
            ));
        }
        row /= s;
    }
    Ok(q)
}

/// Power-iteration estimate of the spectral radius of a non-negative matrix.
pub fn spectral_radius(m: &Array2<f64>, iterations: usize) -> f64 {
    let n = m.nrows();
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + i as f64);
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = m.dot(&v);
        let norm = w.dot(&w).sqrt();
        let prev = v.dot(&v).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / prev;
        v = w / norm;
        if (next - estimate).abs() < 1e-15 {
            return next;
        }
        estimate = next;
    }
    estimate
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IfdReport {
    pub is_ifd: bool,
    pub payoffs: Vec<f64>,
    /// `max - min` of community payoffs.
    pub spread: f64,
    pub capacity_sum_is_one: bool,
    /// `||eta - kappa||_2`, reported when capacities sum to one.
    pub deviation: Option<f64>,
}

pub fn ifd_check(
    eta: &Array1<f64>,
    alpha: &Array1<f64>,
    kappa: &Array1<f64>,
    tol: f64,
) -> IfdReport {
    let payoffs: Vec<f64> = (0..eta.len())
        .map(|h| community_payoff(eta[h], alpha[h], kappa[h]))
        .collect();
    let (lo, hi) = payoffs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(*p), hi.max(*p))
        });
    let spread = hi - lo;
    let capacity_sum_is_one = (kappa.sum() - 1.0).abs() <= 1e-9;
    let deviation = capacity_sum_is_one.then(|| (eta - kappa).mapv(|d| d * d).sum().sqrt());
    IfdReport {
        is_ifd: spread <= tol,
        payoffs,
        spread,
        capacity_sum_is_one,
        deviation,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Field identity residuals at one sample, each scaled by
/// `max(1, max |dx|)`.
#[derive(Clone, Copy, Debug, Default)]
struct FieldResiduals {
    total_mass: f64,
    row_identity: f64,
    column_identity: f64,
    boundary_inflow: f64,
}

fn field_residuals(
    model: &Model,
    traj: &Trajectory,
    idx: usize,
    smoothing: Option<f64>,
) -> Result<FieldResiduals> {
    let state = &traj.states[idx];
    let flat = model.flatten(state)?;
    let mut out = vec![0.0; flat.len()];
    ClosedLoop::new(model, smoothing).eval(state.t, &flat, &mut out)?;
    let d = model.unflatten(&out, state.t);
    let dx = d.system.matrix();
    let scale = dx.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let f = replicator_field(&state.system, &model.network, &model.game)?;
    let row = (&dx.sum_axis(Axis(1)) - &f.sum_axis(Axis(1)))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let phi = evaluate_phi(
        &model.environment,
        state,
        model.network.movement(),
        smoothing,
    )?;
    let flow = flow_field(
        &community_densities(&state.system),
        &phi,
        model.network.movement(),
    );
    let col = (&dx.sum_axis(Axis(0)) - &flow)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let boundary = state
        .system
        .matrix()
        .iter()
        .zip(dx.iter())
        .filter(|(x, _)| **x == 0.0)
        .fold(0.0f64, |m, (_, d)| m.max(-d));
    Ok(FieldResiduals {
        total_mass: dx.sum().abs() / scale,
        row_identity: row / scale,
        column_identity: col / scale,
        boundary_inflow: boundary / scale,
    })
}

/// Runs the invariant suite over every recorded sample of a trajectory.
pub fn check_trajectory_invariants(
    model: &Model,
    traj: &Trajectory,
    smoothing: Option<f64>,
    exec: Execution,
) -> Result<InvariantReport> {
    const FIELD_TOL: f64 = 1e-12;
    let mut checks = Vec::new();
    let mut push = |name: &str, worst: f64, tolerance: f64, passed: bool| {
        checks.push(InvariantCheck {
            name: name.into(),
            passed,
            worst,
            tolerance,
        })
    };

    let gaps = traj
        .times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    push(
        "times strictly increasing",
        gaps,
        0.0,
        traj.times.len() < 2 || gaps > 0.0,
    );

    let mass = traj
        .states
        .iter()
        .map(|s| (s.system.mass() - 1.0).abs())
        .fold(0.0f64, f64::max);
    push("unit mass", mass, DRIFT_TOL, mass <= DRIFT_TOL);

    let min = traj
        .states
        .iter()
        .flat_map(|s| {
            s.system
                .matrix()
                .iter()
                .chain(s.env_state.iter().flatten())
                .copied()
        })
        .fold(f64::INFINITY, f64::min);
    push("non-negative entries", min, CLAMP_FLOOR, min >= CLAMP_FLOOR);

    let idx: Vec<usize> = (0..traj.states.len()).collect();
    let residuals = exec
        .map(&idx, |&i| field_residuals(model, traj, i, smoothing))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let worst = residuals
        .iter()
        .fold(FieldResiduals::default(), |a, r| FieldResiduals {
            total_mass: a.total_mass.max(r.total_mass),
            row_identity: a.row_identity.max(r.row_identity),
            column_identity: a.column_identity.max(r.column_identity),
            boundary_inflow: a.boundary_inflow.max(r.boundary_inflow),
        });
    push(
        "field conserves mass",
        worst.total_mass,
        FIELD_TOL,
        worst.total_mass <= FIELD_TOL,
    );
    push(
        "population derivative matches replicator",
        worst.row_identity,
        FIELD_TOL,
        worst.row_identity <= FIELD_TOL,
    );
    push(
        "density derivative matches flow",
        worst.column_identity,
        FIELD_TOL,
        worst.column_identity <= FIELD_TOL,
    );
    push(
        "no outflow from empty cells",
        worst.boundary_inflow,
        FIELD_TOL,
        worst.boundary_inflow <= FIELD_TOL,
    );
    Ok(InvariantReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn hd() -> Array2<f64> {
        array![[1.0, 7.0], [5.0, 6.0]]
    }

    #[test]
    fn nash_examples() {
        let g = PopulationGame::matrix(hd()).unwrap();
        let c = restricted_nash_check(&array![0.2, 0.8], &g, 1e-12).unwrap();
        assert!(c.is_restricted_nash, "{c:?}");
        assert!(
            restricted_nash_check(&array![1.0, 0.0], &g, 1e-12)
                .unwrap()
                .is_restricted_nash
        );
        let c = restricted_nash_check(&array![0.5, 0.5], &g, 1e-9).unwrap();
        assert!(!c.is_restricted_nash);
        assert!((c.gap - 1.5).abs() < 1e-15);
    }

    #[test]
    fn balance_examples() {
        let x =
            SystemState::from_product(array![0.3, 0.7].view(), array![0.25, 0.75].view()).unwrap();
        assert!(balance_residual(&x, 1e-8).max_residual < 1e-15);

        let x = SystemState::new(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let b = balance_residual(&x, 1e-8);
        assert_eq!(b.max_residual, 0.5);
        assert_eq!(b.communities.len(), 2);
        assert!(b.communities.iter().all(|c| c.residuals == vec![0.5, 0.5]));

        let x = SystemState::new(array![[0.5, 0.0], [0.5, 0.0]]).unwrap();
        let b = balance_residual(&x, 1e-8);
        assert_eq!(
            b.excluded,
            vec![ExcludedCommunity {
                community: 1,
                mass: 0.0
            }]
        );
    }

    #[test]
    fn ess_classification() {
        assert_eq!(
            ess_2x2(&hd()).unwrap(),
            EssClass::Interior { y_hat: [0.2, 0.8] }
        );
        assert_eq!(
            ess_2x2(&array![[2.0, 1.0], [1.0, 2.0]]).unwrap(),
            EssClass::Pure {
                actions: vec![0, 1]
            }
        );
        assert_eq!(
            ess_2x2(&array![[4.0, 4.0], [4.0, 4.0]]).unwrap(),
            EssClass::Degenerate
        );
        assert_eq!(
            ess_2x2(&array![[3.0, 3.0], [1.0, 1.0]]).unwrap(),
            EssClass::Pure { actions: vec![0] }
        );
        assert!(ess_2x2(&array![[0.0, 1.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn ess_probe_examples() {
        assert!(ess_verify(&array![0.2, 0.8], &hd(), 0.1, 64));
        assert!(!ess_verify(&array![0.5, 0.5], &hd(), 0.1, 64));
        assert!(ess_verify(
            &array![1.0, 0.0],
            &array![[3.0, 3.0], [1.0, 1.0]],
            0.1,
            64
        ));
        // rock-paper-scissors variant with an interior ESS at the barycenter
        let rps = array![[1.0, 0.0, 3.0], [3.0, 1.0, 0.0], [0.0, 3.0, 1.0]];
        let c = array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        assert!(ess_verify(&c, &(rps.clone() - 1.0 + 1.0), 0.1, 64));
        assert!(!ess_verify(&array![1.0, 0.0, 0.0], &rps, 0.1, 64));
    }

    #[test]
    fn lyapunov_examples() {
        let p = lyapunov_p(&array![0.2, 0.8], &array![0.2, 0.8]);
        assert!((p - 0.2f64.powf(0.2) * 0.8f64.powf(0.8)).abs() < 1e-15);
        assert!((p - 0.6062866).abs() < 1e-7);
        assert_eq!(lyapunov_p(&array![1.0, 0.0], &array![0.2, 0.8]), 0.0);
        assert_eq!(lyapunov_p(&array![0.9, 0.1], &array![1.0, 0.0]), 0.9);
    }

    #[test]
    fn sign_check_at_rest_point_and_off_balance() {
        let net =
            CommunityNetwork::new(array![[0.7, 0.3], [0.3, 0.3]], Array2::ones((2, 2))).unwrap();
        let y_hat = array![0.2, 0.8];
        let x = SystemState::from_product(y_hat.view(), array![0.4, 0.6].view()).unwrap();
        let c = lyapunov_rate_sign_check(&x, &net, &hd(), &y_hat).unwrap();
        assert!(c.agree && c.rate.abs() < 1e-12 && c.ess_gap.abs() < 1e-12);

        let x = SystemState::new(array![[0.3, 0.05], [0.1, 0.55]]).unwrap();
        let c = lyapunov_rate_sign_check(&x, &net, &hd(), &y_hat).unwrap();
        assert!(c.agree);
        assert!((c.rate - c.rate_formula).abs() < 1e-12);
        assert!(c.rate.abs() > 1e-3);

        let asym =
            CommunityNetwork::new(array![[0.7, 0.1], [0.3, 0.3]], Array2::ones((2, 2))).unwrap();
        assert!(matches!(
            lyapunov_rate_sign_check(&x, &asym, &hd(), &y_hat),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn q_matrix_examples() {
        let q = q_matrix(&array![0.5, 0.5], &array![[0.7, 0.3], [0.3, 0.3]]).unwrap();
        assert!((&q - &array![[0.7, 0.3], [0.5, 0.5]])
            .iter()
            .all(|d| d.abs() < 1e-15));
        assert!((spectral_radius(&q, 1000) - 1.0).abs() < 1e-6);

        let eta = array![0.2, 0.3, 0.5];
        let q = q_matrix(&eta, &Array2::ones((3, 3))).unwrap();
        for row in q.rows() {
            assert!((&row - &eta).iter().all(|d| d.abs() < 1e-15));
        }
        assert!(matches!(
            q_matrix(&array![1.0, 0.0], &Array2::ones((2, 2))),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn ifd_examples() {
        let kappa = array![0.2, 0.3, 0.5];
        let r = ifd_check(&kappa, &array![1.0, 1.0, 1.0], &kappa, 1e-12);
        assert!(r.is_ifd && r.capacity_sum_is_one);
        assert_eq!(r.spread, 0.0);
        assert_eq!(r.deviation, Some(0.0));
        let r = ifd_check(&kappa, &array![1.0, 2.0, 1.0], &kappa, 1e-12);
        assert!(r.is_ifd);
        assert_eq!(r.payoffs, vec![0.0, 0.0, 0.0]);
        let r = ifd_check(&array![0.4, 0.3, 0.3], &array![1.0, 1.0, 1.0], &kappa, 1e-6);
        assert!(!r.is_ifd);
    }
}
