//! Scenario documents: a JSON tree describing a model, its initial state
//! and run parameters, plus the built-in scenarios.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dynamics::Model;
use crate::environment::{
    BestResponse, CarryingCapacity, EnvironmentModel, OutMigration, DEFAULT_TIE_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::model::{CommunityNetwork, ExtendedState, PopulationGame, SystemState};
use crate::solver::IntegratorConfig;

pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub game: GameDoc,
    pub network: NetworkDoc,
    pub environment: EnvironmentDoc,
    pub initial_state: InitialStateDoc,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<String>>,
    pub payoff: Vec<Vec<f64>>,
    /// Shift a payoff matrix with non-positive entries instead of rejecting it.
    #[serde(default)]
    pub shift_to_positive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communities: Option<Vec<String>>,
    pub interaction: Vec<Vec<f64>>,
    pub movement: Vec<Vec<f64>>,
}

fn default_tie_tolerance() -> f64 {
    DEFAULT_TIE_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentDoc {
    Constant {
        phi: Vec<Vec<f64>>,
    },
    BestResponse {
        alpha: Vec<f64>,
        kappa: Vec<f64>,
        #[serde(default = "default_tie_tolerance")]
        tie_tolerance: f64,
    },
    OutMigration {
        max_response: f64,
        carrying_capacity: CapacityDoc,
        initial_phi: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapacityDoc {
    Static {
        values: Vec<f64>,
    },
    Sinusoidal {
        amplitude: f64,
        offset: f64,
        phases: Vec<f64>,
    },
}

/// Either a full system state `x`, or a population state and densities
/// combined as `x = population densities^T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub densities: Option<Vec<f64>>,
    #[serde(default)]
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub trajectory: String,
    pub summary: String,
    /// Trailing time span examined by the convergence detector.
    pub convergence_window: f64,
    pub convergence_eps: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            summary: "summary.json".into(),
            convergence_window: 50.0,
            convergence_eps: 1e-3,
        }
    }
}

/// A validated-for-shape scenario ready to integrate.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub document: ScenarioDocument,
    pub model: Model,
    pub initial_state: ExtendedState,
    pub integrator: IntegratorConfig,
    pub output: OutputConfig,
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::dim(format!("{what} is empty")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::dim(format!(
            "{what} row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    Ok(Array2::from_shape_vec((rows.len(), ncols), rows.concat()).expect("rectangular"))
}

impl EnvironmentDoc {
    fn build(&self) -> Result<EnvironmentModel> {
        Ok(match self {
            EnvironmentDoc::Constant { phi } => {
                EnvironmentModel::Constant(to_matrix(phi, "environment.phi")?)
            }
            EnvironmentDoc::BestResponse {
                alpha,
                kappa,
                tie_tolerance,
            } => EnvironmentModel::BestResponse(BestResponse {
                alpha: Array1::from(alpha.clone()),
                kappa: Array1::from(kappa.clone()),
                tie_tolerance: *tie_tolerance,
            }),
            EnvironmentDoc::OutMigration {
                max_response,
                carrying_capacity,
                initial_phi,
            } => EnvironmentModel::OutMigration(OutMigration {
                max_response: *max_response,
                capacity: match carrying_capacity {
                    CapacityDoc::Static { values } => {
                        CarryingCapacity::Static(Array1::from(values.clone()))
                    }
                    CapacityDoc::Sinusoidal {
                        amplitude,
                        offset,
                        phases,
                    } => CarryingCapacity::Sinusoidal {
                        amplitude: *amplitude,
                        offset: *offset,
                        phases: phases.clone(),
                    },
                },
                initial_phi: to_matrix(initial_phi, "environment.initial_phi")?,
            }),
        })
    }
}

impl ScenarioDocument {
    /// Parses a JSON document, reporting line, column and field path on
    /// failure.
    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let doc: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            Error::Parse {
                source_name: source_name.into(),
                message: if path == "." {
                    e.inner().to_string()
                } else {
                    format!("{} (field `{path}`)", e.inner())
                },
            }
        })?;
        de.end().map_err(|e| Error::Parse {
            source_name: source_name.into(),
            message: e.to_string(),
        })?;
        Ok(doc)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut doc = Self::from_json(&text, &path.display().to_string())?;
        if doc.name.is_empty() {
            doc.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(doc)
    }

    /// Loads `builtin:NAME` or a file path.
    pub fn load(spec: &str) -> Result<Self> {
        match spec.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => builtin(name).ok_or_else(|| {
                let known: Vec<&str> = BUILTINS.iter().map(|b| b.0).collect();
                Error::Usage(format!(
                    "unknown builtin '{name}' (available: {})",
                    known.join(", ")
                ))
            }),
            None => Self::from_path(Path::new(spec)),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    /// Canonical form: every field present, object keys sorted.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("document serializes")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let canonical = self.to_value().to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Returns a copy with numeric fields replaced. Paths are dotted, with
    /// array indices as segments, e.g. `game.payoff.0.1`.
    pub fn with_overrides(&self, overrides: &[(String, f64)]) -> Result<Self> {
        let mut value = self.to_value();
        for (path, v) in overrides {
            set_number(&mut value, path, *v)?;
        }
        serde_json::from_value(value)
            .map_err(|e| Error::Usage(format!("override produced an invalid document: {e}")))
    }

    /// Current value of a numeric field addressed by an override path.
    pub fn number_at(&self, path: &str) -> Result<f64> {
        let mut value = self.to_value();
        Ok(number_at(&mut value, path)?.as_f64().expect("numeric"))
    }

    pub fn build(&self) -> Result<Scenario> {
        let payoff = to_matrix(&self.game.payoff, "game.payoff")?;
        let mut game = if self.game.shift_to_positive {
            PopulationGame::matrix_shifted(payoff)?
        } else {
            PopulationGame::matrix(payoff)?
        };
        if let Some(names) = &self.game.actions {
            game = game.with_action_names(names.clone())?;
        }
        let mut network = CommunityNetwork::new(
            to_matrix(&self.network.interaction, "network.interaction")?,
            to_matrix(&self.network.movement, "network.movement")?,
        )?;
        if let Some(names) = &self.network.communities {
            network = network.with_community_names(names.clone())?;
        }
        let model = Model::new(game, network, self.environment.build()?)?;

        let init = &self.initial_state;
        let system = match (&init.x, &init.population, &init.densities) {
            (Some(x), None, None) => SystemState::new(to_matrix(x, "initial_state.x")?)?,
            (None, Some(y), Some(eta)) => SystemState::from_product(
                Array1::from(y.clone()).view(),
                Array1::from(eta.clone()).view(),
            )?,
            _ => {
                return Err(Error::config(
                    "initial_state needs either `x`, or both `population` and `densities`",
                ))
            }
        };
        if system.n_actions() != model.n_actions()
            || system.n_communities() != model.n_communities()
        {
            return Err(Error::dim(format!(
                "initial state is {}x{}, model has {} actions and {} communities",
                system.n_actions(),
                system.n_communities(),
                model.n_actions(),
                model.n_communities()
            )));
        }
        let initial_state =
            ExtendedState::new(system, model.environment.initial_env_state(), init.t)?;
        self.integrator.validate()?;
        Ok(Scenario {
            name: self.name.clone(),
            document: self.clone(),
            model,
            initial_state,
            integrator: self.integrator.clone(),
            output: self.output.clone(),
        })
    }
}

fn number_at<'a>(root: &'a mut Value, path: &str) -> Result<&'a mut Value> {
    let unknown = || Error::Usage(format!("unknown field path '{path}'"));
    let mut node = root;
    for seg in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(seg).ok_or_else(unknown)?,
            Value::Array(items) => seg
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(unknown)?,
            _ => return Err(unknown()),
        };
    }
    if !node.is_number() {
        return Err(Error::Usage(format!("'{path}' is not a numeric field")));
    }
    Ok(node)
}

fn set_number(root: &mut Value, path: &str, v: f64) -> Result<()> {
    let node = number_at(root, path)?;
    *node = if node.is_u64() {
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Usage(format!(
                "'{path}' takes a non-negative integer, got {v}"
            )));
        }
        Value::from(v as u64)
    } else {
        Value::from(v)
    };
    Ok(())
}

/// Name and one-line description of each builtin.
pub const BUILTINS: &[(&str, &str)] = &[
    (
        "ifd",
        "Hawk-Dove on three fully connected communities; best-response migration settles densities at the carrying capacities",
    ),
    (
        "seasonal",
        "Hawk-Dove on two communities with out-migration driven by sinusoidal carrying capacities; densities cycle while the population state converges",
    ),
];

fn hawk_dove() -> GameDoc {
    GameDoc {
        actions: Some(vec!["hawk".into(), "dove".into()]),
        payoff: vec![vec![1.0, 7.0], vec![5.0, 6.0]],
        shift_to_positive: false,
    }
}

pub fn builtin(name: &str) -> Option<ScenarioDocument> {
    let description = BUILTINS.iter().find(|b| b.0 == name)?.1.to_string();
    Some(match name {
        "seasonal" => ScenarioDocument {
            name: name.into(),
            description,
            game: hawk_dove(),
            network: NetworkDoc {
                communities: Some(vec!["a".into(), "b".into()]),
                interaction: vec![vec![0.7, 0.3], vec![0.3, 0.3]],
                movement: vec![vec![1.0, 0.5], vec![0.8, 1.0]],
            },
            environment: EnvironmentDoc::OutMigration {
                max_response: 1.0,
                carrying_capacity: CapacityDoc::Sinusoidal {
                    amplitude: 0.25,
                    offset: 0.5,
                    phases: vec![0.0, PI],
                },
                initial_phi: vec![vec![0.05, 0.05], vec![0.05, 0.05]],
            },
            initial_state: InitialStateDoc {
                x: None,
                population: Some(vec![0.5, 0.5]),
                densities: Some(vec![0.5, 0.5]),
                t: 0.0,
            },
            integrator: IntegratorConfig {
                t_end: 200.0,
                record_every: 100,
                ..Default::default()
            },
            output: OutputConfig::default(),
        },
        "ifd" => ScenarioDocument {
            name: name.into(),
            description,
            game: hawk_dove(),
            network: NetworkDoc {
                communities: Some(vec!["a".into(), "b".into(), "c".into()]),
                interaction: vec![
                    vec![0.7, 0.3, 0.3],
                    vec![0.3, 0.3, 0.3],
                    vec![0.3, 0.3, 0.3],
                ],
                movement: vec![vec![1.0; 3]; 3],
            },
            environment: EnvironmentDoc::BestResponse {
                alpha: vec![1.0; 3],
                kappa: vec![0.2, 0.3, 0.5],
                tie_tolerance: DEFAULT_TIE_TOLERANCE,
            },
            initial_state: InitialStateDoc {
                x: None,
                population: Some(vec![0.5, 0.5]),
                densities: Some(vec![1.0 / 3.0; 3]),
                t: 0.0,
            },
            integrator: IntegratorConfig {
                t_end: 100.0,
                record_every: 100,
                ..Default::default()
            },
            output: OutputConfig::default(),
        },
        _ => return None,
    })
}

impl Scenario {
    pub fn from_document(doc: &ScenarioDocument) -> Result<Self> {
        doc.build()
    }

    pub fn load(spec: &str) -> Result<Self> {
        ScenarioDocument::load(spec)?.build()
    }

    pub fn digest(&self) -> String {
        self.document.digest()
    }
}
