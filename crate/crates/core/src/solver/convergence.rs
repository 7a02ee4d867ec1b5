use serde::Serialize;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::model::{community_densities, population_state};

/// Minimum number of upward mean crossings (two full periods) required to
/// call a signal oscillating.
const MIN_CROSSINGS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SignalStatus {
    Converged {
        terminal: Vec<f64>,
        variation: f64,
    },
    Oscillating {
        period: f64,
        amplitude: f64,
        variation: f64,
    },
    Undecided {
        variation: f64,
    },
}

impl SignalStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, SignalStatus::Converged { .. })
    }

    pub fn is_oscillating(&self) -> bool {
        matches!(self, SignalStatus::Oscillating { .. })
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            SignalStatus::Oscillating { period, .. } => Some(*period),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SignalStatus::Converged { .. } => "converged",
            SignalStatus::Oscillating { .. } => "oscillating",
            SignalStatus::Undecided { .. } => "undecided",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub window: f64,
    pub eps: f64,
    pub population: SignalStatus,
    pub densities: SignalStatus,
    pub system: SignalStatus,
}

/// Times of upward crossings of the mean, linearly interpolated.
fn upward_crossings(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut out = Vec::new();
    for i in 1..values.len() {
        let (a, b) = (values[i - 1] - mean, values[i] - mean);
        if a < 0.0 && b >= 0.0 {
            let frac = -a / (b - a);
            out.push(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }
    out
}

/// Classifies a multi-component signal. `components[c][s]` is component `c`
/// at sample `s`.
pub fn classify_signal(times: &[f64], components: &[Vec<f64>], eps: f64) -> SignalStatus {
    let ranges: Vec<f64> = components
        .iter()
        .map(|c| {
            let (lo, hi) = c
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(*v), hi.max(*v))
                });
            hi - lo
        })
        .collect();
    let variation = ranges.iter().copied().fold(0.0, f64::max);
    if variation < eps {
        return SignalStatus::Converged {
            terminal: components
                .iter()
                .map(|c| *c.last().expect("non-empty"))
                .collect(),
            variation,
        };
    }
    let widest = ranges
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    let crossings = upward_crossings(times, &components[widest]);
    if crossings.len() >= MIN_CROSSINGS {
        let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        SignalStatus::Oscillating {
            period,
            amplitude: variation / 2.0,
            variation,
        }
    } else {
        SignalStatus::Undecided { variation }
    }
}

/// Classifies `y(t)`, `eta(t)` and `x(t)` over the trailing `window` of the
/// trajectory.
pub fn detect_convergence(traj: &Trajectory, window: f64, eps: f64) -> Result<ConvergenceReport> {
    if traj.times.len() < 2 {
        return Err(Error::Usage("trajectory has fewer than two samples".into()));
    }
    let t_last = *traj.times.last().expect("non-empty");
    let span = t_last - traj.times[0];
    if !(window > 0.0) || window > span {
        return Err(Error::Usage(format!(
            "convergence window {window} must be in (0, {span}] (trajectory span)"
        )));
    }
    let start = traj.times.partition_point(|t| *t < t_last - window);
    let times = &traj.times[start..];
    if times.len() < 2 {
        return Err(Error::Usage(
            "convergence window holds fewer than two samples".into(),
        ));
    }
    let states = &traj.states[start..];

    let transpose = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let n = rows[0].len();
        (0..n)
            .map(|c| rows.iter().map(|r| r[c]).collect())
            .collect()
    };
    let ys = transpose(
        states
            .iter()
            .map(|s| population_state(&s.system).to_vec())
            .collect(),
    );
    let etas = transpose(
        states
            .iter()
            .map(|s| community_densities(&s.system).to_vec())
            .collect(),
    );
    let xs = transpose(
        states
            .iter()
            .map(|s| s.system.matrix().iter().copied().collect())
            .collect(),
    );

    Ok(ConvergenceReport {
        window,
        eps,
        population: classify_signal(times, &ys, eps),
        densities: classify_signal(times, &etas, eps),
        system: classify_signal(times, &xs, eps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_signal_converges() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let s = classify_signal(&t, &[vec![0.3; 100], vec![0.7; 100]], 1e-6);
        assert_eq!(
            s,
            SignalStatus::Converged {
                terminal: vec![0.3, 0.7],
                variation: 0.0
            }
        );
    }

    #[test]
    fn sinusoid_period_is_recovered() {
        // independent oracle: the samples come from sin with period 2 pi
        let t: Vec<f64> = (0..=500).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 0.5 + 0.1 * (t + 0.3).sin()).collect();
        let s = classify_signal(&t, &[v], 1e-3);
        let p = s.period().expect("oscillating");
        assert!((p - 2.0 * PI).abs() / (2.0 * PI) < 0.05, "{p}");
    }

    #[test]
    fn monotone_drift_is_undecided() {
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| t * 0.01).collect();
        assert!(matches!(
            classify_signal(&t, &[v], 1e-3),
            SignalStatus::Undecided { .. }
        ));
    }
}
