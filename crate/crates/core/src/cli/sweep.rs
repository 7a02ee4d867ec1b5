//! Parameter sweeps: Cartesian products of numeric overrides, one
//! independent run per combination.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::scenario::ScenarioDocument;

use super::{execute, exit_code, RunOptions};

/// `PATH=V1,V2,...` or `PATH=START:STOP:COUNT` (inclusive, evenly spaced).
/// An empty value list is allowed and yields no runs.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<f64>,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let usage = |msg: String| Error::Usage(format!("bad sweep spec '{s}': {msg}"));
        let (path, rhs) = s
            .split_once('=')
            .ok_or_else(|| usage("expected PATH=VALUES".into()))?;
        let path = path.trim();
        if path.is_empty() {
            return Err(usage("empty path".into()));
        }
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| usage(format!("'{v}': {e}")))
        };
        let rhs = rhs.trim();
        let values = if rhs.is_empty() {
            Vec::new()
        } else if rhs.contains(':') {
            let parts: Vec<&str> = rhs.split(':').collect();
            let [start, stop, count] = parts[..] else {
                return Err(usage("ranges are START:STOP:COUNT".into()));
            };
            let (start, stop) = (num(start)?, num(stop)?);
            let count: usize = count
                .trim()
                .parse()
                .map_err(|e| usage(format!("count: {e}")))?;
            match count {
                0 => Vec::new(),
                1 => vec![start],
                n => (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            }
        } else {
            rhs.split(',').map(num).collect::<Result<_>>()?
        };
        Ok(Self {
            path: path.to_string(),
            values,
        })
    }
}

/// All override combinations, first axis varying slowest.
pub fn combinations(axes: &[SweepAxis]) -> Vec<Vec<(String, f64)>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push((axis.path.clone(), *v));
                    c
                })
            })
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowData {
    pub terminal_y: Vec<f64>,
    pub balance_residual: f64,
    pub population: &'static str,
    pub densities: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub values: Vec<f64>,
    pub outcome: std::result::Result<RowData, String>,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub paths: Vec<String>,
    pub actions: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Worst exit code over the rows.
    pub fn exit_code(&self) -> i32 {
        self.rows.iter().map(|r| r.exit_code).max().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io {
            path: "sweep table".into(),
            source: e.into(),
        };
        let mut header = vec!["run".to_string()];
        header.extend(self.paths.iter().cloned());
        header.push("status".into());
        header.extend(self.actions.iter().map(|a| format!("y_{a}")));
        header.extend(["balance_residual", "population", "densities"].map(String::from));
        out.write_record(&header).map_err(io)?;
        for row in &self.rows {
            let mut rec = vec![row.index.to_string()];
            rec.extend(row.values.iter().map(f64::to_string));
            match &row.outcome {
                Ok(d) => {
                    rec.push("ok".into());
                    rec.extend(d.terminal_y.iter().map(f64::to_string));
                    rec.push(d.balance_residual.to_string());
                    rec.push(d.population.into());
                    rec.push(d.densities.into());
                }
                Err(msg) => {
                    rec.push(format!("error: {msg}"));
                    rec.extend(std::iter::repeat_n(String::new(), self.actions.len() + 3));
                }
            }
            out.write_record(&rec).map_err(io)?;
        }
        out.flush().map_err(|e| Error::Io {
            path: "sweep table".into(),
            source: e,
        })
    }
}

/// Runs every combination in its own directory under `out_dir`.
pub fn run_sweep(
    doc: &ScenarioDocument,
    axes: &[SweepAxis],
    out_dir: &Path,
    check_invariants: bool,
    exec: Execution,
) -> Result<SweepTable> {
    for axis in axes {
        doc.number_at(&axis.path)?;
    }
    let combos = combinations(axes);
    let indexed: Vec<(usize, Vec<(String, f64)>)> = combos.into_iter().enumerate().collect();
    let rows = exec.map(&indexed, |(index, overrides)| {
        let opts = RunOptions {
            output_dir: out_dir.join(format!("run_{index:04}")),
            check_invariants,
            exec: Execution::Sequential,
        };
        let outcome = doc
            .with_overrides(overrides)
            .and_then(|d| d.build())
            .and_then(|s| execute(&s, &opts));
        let (outcome, code) = match outcome {
            Ok(run) => {
                let s = &run.summary;
                let code = if run.invariants_passed {
                    0
                } else {
                    super::EXIT_INVARIANTS
                };
                let data = RowData {
                    terminal_y: s.terminal_y.clone(),
                    balance_residual: s.equilibrium.balance_residual,
                    population: s.convergence.population.label(),
                    densities: s.convergence.densities.label(),
                };
                (Ok(data), code)
            }
            Err(e) => (Err(e.to_string().replace('\n', " ")), exit_code(&e)),
        };
        SweepRow {
            index: *index,
            values: overrides.iter().map(|o| o.1).collect(),
            outcome,
            exit_code: code,
        }
    });
    Ok(SweepTable {
        paths: axes.iter().map(|a| a.path.clone()).collect(),
        actions: doc.game.actions.clone().unwrap_or_else(|| {
            (0..doc.game.payoff.len())
                .map(|i| format!("a{i}"))
                .collect()
        }),
        rows,
    })
}
