//! Population games, community networks and system states.
//!
//! A system state `x` is an action-by-community occupancy matrix. Its row
//! sums are the population state `y` (fraction of the population using each
//! action) and its column sums are the community densities `eta`. Both live
//! on the unit simplex because total mass is fixed at one.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance for mass and sign checks on user-supplied states.
pub const CONSTRUCTION_TOL: f64 = 1e-9;
/// Absolute tolerance for mass drift checks on integrated states.
pub const DRIFT_TOL: f64 = 1e-6;
/// Grid resolution of the positivity probe for general reward functions.
pub const PROBE_RESOLUTION: usize = 16;
/// Hard cap on the number of positivity probe points.
pub const PROBE_CAP: usize = 10_000;

/// Reward function family: writes `r_i(y)` for every action into `out`.
pub type RewardFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub enum Rewards {
    /// `r(y) = A y`.
    Matrix(Array2<f64>),
    General {
        name: String,
        eval: Arc<RewardFn>,
    },
}

impl fmt::Debug for Rewards {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rewards::Matrix(a) => f.debug_tuple("Matrix").field(a).finish(),
            Rewards::General { name, .. } => f.debug_struct("General").field("name", name).finish(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PopulationGame {
    n_actions: usize,
    rewards: Rewards,
    action_names: Vec<String>,
}

fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

fn check_square(m: &Array2<f64>, what: &str) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::config(format!("{what} must be square, got {r}x{c}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(format!("{what} has non-finite entries")));
    }
    Ok(r)
}

impl PopulationGame {
    /// Matrix game with payoff matrix `A`. Positivity is not enforced here;
    /// [`validate_game`] rejects non-positive entries.
    pub fn matrix(payoff: Array2<f64>) -> Result<Self> {
        let n = check_square(&payoff, "payoff matrix")?;
        if n < 2 {
            return Err(Error::config("a game needs at least two actions"));
        }
        Ok(Self {
            n_actions: n,
            rewards: Rewards::Matrix(payoff),
            action_names: default_names(n),
        })
    }

    /// Matrix game shifted by `1 - min(A)` when `A` has a non-positive
    /// entry. Restricted Nash equilibria are unchanged by the shift.
    pub fn matrix_shifted(payoff: Array2<f64>) -> Result<Self> {
        let min = payoff.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            return Self::matrix(payoff);
        }
        let shift = 1.0 - min;
        log::info!("shifting payoff matrix by {shift} to make all rewards positive");
        Self::matrix(payoff.mapv(|v| v + shift))
    }

    pub fn general<F>(name: impl Into<String>, n_actions: usize, eval: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if n_actions < 2 {
            return Err(Error::config("a game needs at least two actions"));
        }
        Ok(Self {
            n_actions,
            rewards: Rewards::General {
                name: name.into(),
                eval: Arc::new(eval),
            },
            action_names: default_names(n_actions),
        })
    }

    pub fn with_action_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_actions {
            return Err(Error::dim(format!(
                "{} action names for {} actions",
                names.len(),
                self.n_actions
            )));
        }
        self.action_names = names;
        Ok(self)
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn rewards_kind(&self) -> &Rewards {
        &self.rewards
    }

    pub fn payoff_matrix(&self) -> Option<&Array2<f64>> {
        match &self.rewards {
            Rewards::Matrix(a) => Some(a),
            Rewards::General { .. } => None,
        }
    }

    /// Evaluates `r(y)` into `out` without allocating.
    pub fn rewards_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(y.len(), self.n_actions);
        match &self.rewards {
            Rewards::Matrix(a) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = a.row(i).iter().zip(y).map(|(aij, yj)| aij * yj).sum();
                }
            }
            Rewards::General { eval, .. } => eval(y, out),
        }
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "reward for action {} is {} at y = {:?}",
                self.action_names[i], out[i], y
            )));
        }
        Ok(())
    }

    pub fn rewards(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let y = y.to_vec();
        let mut out = vec![0.0; self.n_actions];
        self.rewards_into(&y, &mut out)?;
        Ok(Array1::from(out))
    }
}

/// Interaction matrix `W` and movement matrix `Lambda` over a set of communities.
#[derive(Clone, Debug)]
pub struct CommunityNetwork {
    interaction: Array2<f64>,
    movement: Array2<f64>,
    community_names: Vec<String>,
}

impl CommunityNetwork {
    pub fn new(interaction: Array2<f64>, movement: Array2<f64>) -> Result<Self> {
        let n = check_square(&interaction, "interaction matrix")?;
        let m = check_square(&movement, "movement matrix")?;
        if n != m {
            return Err(Error::config(format!(
                "interaction matrix is {n}x{n} but movement matrix is {m}x{m}"
            )));
        }
        if n == 0 {
            return Err(Error::config("network has no communities"));
        }
        Ok(Self {
            interaction,
            movement,
            community_names: default_names(n),
        })
    }

    pub fn with_community_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_communities() {
            return Err(Error::dim(format!(
                "{} community names for {} communities",
                names.len(),
                self.n_communities()
            )));
        }
        self.community_names = names;
        Ok(self)
    }

    pub fn n_communities(&self) -> usize {
        self.interaction.nrows()
    }

    /// `W`
    pub fn interaction(&self) -> &Array2<f64> {
        &self.interaction
    }

    /// `Lambda`
    pub fn movement(&self) -> &Array2<f64> {
        &self.movement
    }

    pub fn community_names(&self) -> &[String] {
        &self.community_names
    }
}

/// Occupancy matrix `x` with `x[[i, h]]` the fraction of the population that
/// plays action `i` in community `h`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemState {
    x: Array2<f64>,
}

impl SystemState {
    /// Validates sign and unit mass within [`CONSTRUCTION_TOL`].
    pub fn new(x: Array2<f64>) -> Result<Self> {
        Self::with_tolerance(x, CONSTRUCTION_TOL)
    }

    pub fn with_tolerance(x: Array2<f64>, tol: f64) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("system state has non-finite entries".into()));
        }
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::State(format!(
                "system state has negative entry {min}"
            )));
        }
        let mass = x.sum();
        if (mass - 1.0).abs() > tol {
            return Err(Error::State(format!(
                "system state mass is {mass}, expected 1"
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::State("empty system state".into()));
        }
        Ok(Self { x })
    }

    /// Balanced state `y eta^T`.
    pub fn from_product(y: ArrayView1<f64>, eta: ArrayView1<f64>) -> Result<Self> {
        let x = Array2::from_shape_fn((y.len(), eta.len()), |(i, h)| y[i] * eta[h]);
        Self::new(x)
    }

    /// Wraps a matrix without checks. Used by the integrator, which tracks
    /// drift separately.
    pub fn from_raw(x: Array2<f64>) -> Self {
        Self { x }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.x
    }

    pub fn n_actions(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_communities(&self) -> usize {
        self.x.ncols()
    }

    pub fn mass(&self) -> f64 {
        self.x.sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.x.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Row sums of `x`.
pub fn population_state(x: &SystemState) -> Array1<f64> {
    x.x.sum_axis(Axis(1))
}

/// Column sums of `x`.
pub fn community_densities(x: &SystemState) -> Array1<f64> {
    x.x.sum_axis(Axis(0))
}

/// System state plus the auxiliary environment state and time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtendedState {
    pub system: SystemState,
    /// Out-migration modulation values `phi[[h, k]]`, when the environment
    /// carries its own dynamics.
    pub env_state: Option<Array2<f64>>,
    pub t: f64,
}

impl ExtendedState {
    pub fn new(system: SystemState, env_state: Option<Array2<f64>>, t: f64) -> Result<Self> {
        if let Some(env) = &env_state {
            let n = system.n_communities();
            if env.dim() != (n, n) {
                return Err(Error::dim(format!(
                    "environment state is {:?}, expected {n}x{n}",
                    env.dim()
                )));
            }
            if env.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::State(
                    "environment state entries must be finite and >= 0".into(),
                ));
            }
        }
        Ok(Self {
            system,
            env_state,
            t,
        })
    }
}

/// Named modelling assumptions checked before a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    /// `W` non-negative, irreducible, with a strictly positive diagonal.
    NetworkStructure,
    /// Every reward function is strictly positive on the simplex.
    PositiveRewards,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::NetworkStructure => {
                f.write_str("network assumption (W non-negative, irreducible, positive diagonal)")
            }
            Assumption::PositiveRewards => f.write_str("positive-rewards assumption"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub assumption: Option<Assumption>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    /// Smallest reward observed while probing a game.
    pub min_reward: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub(crate) fn push(
        &mut self,
        name: &str,
        assumption: Option<Assumption>,
        passed: bool,
        detail: impl Into<String>,
    ) {
        self.checks.push(Check {
            name: name.to_string(),
            assumption,
            passed,
            detail: detail.into(),
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
        self.warnings.extend(other.warnings);
        if other.min_reward.is_some() {
            self.min_reward = other.min_reward;
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "ok  " } else { "FAIL" };
            write!(f, "[{status}] {}", c.name)?;
            if let Some(a) = c.assumption {
                if !c.passed {
                    write!(f, " (violates {a})")?;
                }
            }
            if !c.detail.is_empty() {
                write!(f, ": {}", c.detail)?;
            }
            writeln!(f)?;
        }
        for w in &self.warnings {
            writeln!(f, "[warn] {w}")?;
        }
        Ok(())
    }
}

/// Strong connectivity of the support graph of `m` (entries `> 0`), by a
/// forward and a backward reachability sweep from node 0. Diagonal entries
/// are ignored when `skip_diagonal` is set.
pub fn strongly_connected(m: &Array2<f64>, skip_diagonal: bool) -> bool {
    let n = m.nrows();
    if n <= 1 {
        return true;
    }
    let edge = |a: usize, b: usize| (a != b || !skip_diagonal) && m[[a, b]] > 0.0;
    let sweep = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    sweep(true) && sweep(false)
}

pub fn validate_network(net: &CommunityNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    let w = net.interaction();
    let lambda = net.movement();
    let a = Some(Assumption::NetworkStructure);

    let w_neg = w.iter().filter(|v| **v < 0.0).count();
    report.push(
        "interaction non-negative",
        a,
        w_neg == 0,
        if w_neg == 0 {
            String::new()
        } else {
            format!("{w_neg} negative entries in W")
        },
    );

    let irreducible = strongly_connected(w, false);
    report.push(
        "interaction irreducible",
        a,
        irreducible,
        if irreducible {
            ""
        } else {
            "support graph of W is not strongly connected"
        },
    );

    let zero_diag: Vec<String> = (0..w.nrows())
        .filter(|&h| w[[h, h]] <= 0.0)
        .map(|h| net.community_names()[h].clone())
        .collect();
    report.push(
        "interaction positive diagonal",
        a,
        zero_diag.is_empty(),
        if zero_diag.is_empty() {
            String::new()
        } else {
            format!(
                "W has non-positive diagonal at communities {}",
                zero_diag.join(", ")
            )
        },
    );

    let l_neg = lambda.iter().filter(|v| **v < 0.0).count();
    report.push(
        "movement non-negative",
        None,
        l_neg == 0,
        if l_neg == 0 {
            String::new()
        } else {
            format!("{l_neg} negative entries in Lambda")
        },
    );

    if !strongly_connected(lambda, true) {
        report.warnings.push(
            "movement graph is not strongly connected; empty communities may never be re-occupied"
                .into(),
        );
    }
    report
}

/// Deterministic probe set on the simplex: the vertices followed by the
/// lattice `k / PROBE_RESOLUTION`, truncated to `limit` points.
pub fn simplex_probe_points(n: usize, limit: usize) -> Vec<Vec<f64>> {
    let limit = limit.min(PROBE_CAP);
    let mut points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        })
        .take(limit)
        .collect();

    // enumerate compositions of PROBE_RESOLUTION into n parts
    let total = PROBE_RESOLUTION;
    let mut parts = vec![0usize; n];
    fn rec(
        idx: usize,
        left: usize,
        parts: &mut Vec<usize>,
        points: &mut Vec<Vec<f64>>,
        limit: usize,
        total: usize,
    ) {
        if points.len() >= limit {
            return;
        }
        let n = parts.len();
        if idx == n - 1 {
            parts[idx] = left;
            if parts.iter().filter(|&&p| p > 0).count() > 1 {
                points.push(parts.iter().map(|&p| p as f64 / total as f64).collect());
            }
            return;
        }
        for k in 0..=left {
            parts[idx] = k;
            rec(idx + 1, left - k, parts, points, limit, total);
            if points.len() >= limit {
                return;
            }
        }
    }
    if n > 0 {
        rec(0, total, &mut parts, &mut points, limit, total);
    }
    points
}

/// Checks positivity of rewards. Matrix games pass iff every entry of `A`
/// is positive; general reward families are probed at `n_probe` points.
pub fn validate_game(game: &PopulationGame, n_probe: usize) -> Result<ValidationReport> {
    if n_probe == 0 {
        return Err(Error::Usage("n_probe must be at least 1".into()));
    }
    let mut report = ValidationReport::default();
    let a = Some(Assumption::PositiveRewards);
    match game.rewards_kind() {
        Rewards::Matrix(m) => {
            let min = m.iter().copied().fold(f64::INFINITY, f64::min);
            report.min_reward = Some(min);
            report.push(
                "rewards positive",
                a,
                min > 0.0,
                if min > 0.0 {
                    String::new()
                } else {
                    format!("payoff matrix has minimum entry {min}")
                },
            );
        }
        Rewards::General { name, .. } => {
            let n = game.n_actions();
            let mut out = vec![0.0; n];
            let mut min = f64::INFINITY;
            let mut worst: Option<Vec<f64>> = None;
            for y in simplex_probe_points(n, n_probe) {
                game.rewards_into(&y, &mut out)?;
                let local = out.iter().copied().fold(f64::INFINITY, f64::min);
                if local < min {
                    min = local;
                    worst = Some(y);
                }
            }
            report.min_reward = Some(min);
            report.push(
                "rewards positive",
                a,
                min > 0.0,
                if min > 0.0 {
                    String::new()
                } else {
                    format!(
                        "reward family '{name}' reaches {min} at y = {:?}",
                        worst.unwrap_or_default()
                    )
                },
            );
        }
    }
    Ok(report)
}
