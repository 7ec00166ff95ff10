//! Centralized run configuration. Experiments are described by one JSON
//! file (every section optional, `{}` is a valid config); the agent
//! profile can additionally be overridden from two YAML files, one for
//! the agent description and one for the task description.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    Backend, OracleBackend, RemoteBackend, RemoteConfig, ScriptedBackend, API_KEY_ENV,
};
use crate::control::{LoopConfig, RunSetup};
use crate::plant::{FaultConfig, PlantState, PlantTopology, TopologyError};
use crate::prompt::{AgentProfile, Representation};
use crate::scenarios::find_scenario;
use crate::twin::{FaultMode, KnowledgeBase};
use crate::validation::RuleConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Yaml {
        path: PathBuf,
        source: serde_yaml::Error,
    },
    #[error("invalid configuration at {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("backend kind \"llm\" needs an API key in the {variable} environment variable")]
    MissingApiKey { variable: String },
}

fn invalid(path: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TankOverride {
    pub area: Option<f64>,
    pub h_max: Option<f64>,
    pub level_high_threshold: Option<f64>,
    pub level_low_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpOverride {
    pub q_max: Option<f64>,
}

/// Overrides applied on top of the canonical plant layout. The layout
/// itself (tank, valve and pipe ids) is fixed; only parameters vary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub tanks: BTreeMap<String, TankOverride>,
    pub valve_conductance: Option<f64>,
    pub pump: PumpOverride,
    pub leak_coefficient: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Name of a built-in scenario whose faults are included.
    pub name: Option<String>,
    /// Additional faults on top of the named scenario.
    pub faults: Vec<FaultConfig>,
    pub initial_levels: BTreeMap<String, f64>,
    pub initial_valves: BTreeMap<String, bool>,
    pub pump_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinSection {
    pub fault_mode: FaultMode,
}

impl Default for TwinSection {
    fn default() -> Self {
        TwinSection {
            fault_mode: FaultMode::Mirror,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub representation: Representation,
    pub agents_file: Option<PathBuf>,
    pub task_file: Option<PathBuf>,
}

impl Default for PromptSection {
    fn default() -> Self {
        PromptSection {
            representation: Representation::Text,
            agents_file: None,
            task_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSection {
    Oracle,
    Scripted { responses: Vec<String> },
    Llm(RemoteConfig),
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection::Oracle
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub scenario: ScenarioSection,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
    pub twin: TwinSection,
    pub rules: RuleConfig,
    pub backend: BackendSection,
    pub prompt: PromptSection,
}

/// Agent description overrides (role, goal, skills), one YAML document.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AgentsFile {
    role: Option<String>,
    goal: Option<String>,
    skills: Option<Vec<String>>,
}

/// Task description overrides (task, expected output), one YAML document.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TaskFile {
    task: Option<Vec<String>>,
    expected_output: Option<Vec<String>>,
}

fn topology_error_path(e: &TopologyError) -> String {
    match e {
        TopologyError::BadQMax => "plant.pump.q_max".into(),
        TopologyError::BadLeakCoefficient => "plant.leak_coefficient".into(),
        TopologyError::BadConductance(_) => "plant.valve_conductance".into(),
        TopologyError::BadTankGeometry(id) => format!("plant.tanks.{id}"),
        _ => "plant".into(),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn topology(&self) -> Result<PlantTopology, ConfigError> {
        let mut topology = PlantTopology::default();
        for (id, over) in &self.plant.tanks {
            let tank = topology
                .tanks
                .iter_mut()
                .find(|t| &t.id == id)
                .ok_or_else(|| invalid(&format!("plant.tanks.{id}"), "unknown tank"))?;
            if let Some(v) = over.area {
                tank.area = v;
            }
            if let Some(v) = over.h_max {
                tank.h_max = v;
            }
            if let Some(v) = over.level_high_threshold {
                tank.level_high_threshold = v;
            }
            if let Some(v) = over.level_low_threshold {
                tank.level_low_threshold = v;
            }
        }
        if let Some(c) = self.plant.valve_conductance {
            for valve in &mut topology.valves {
                valve.conductance = c;
            }
        }
        if let Some(q) = self.plant.pump.q_max {
            topology.pump.q_max = q;
        }
        if let Some(l) = self.plant.leak_coefficient {
            topology.leak_coefficient = l;
        }
        topology
            .validate()
            .map_err(|e| invalid(&topology_error_path(&e), e))?;
        Ok(topology)
    }

    pub fn initial_state(&self, topology: &PlantTopology) -> Result<PlantState, ConfigError> {
        let mut state = PlantState::initial(topology);
        if let Some(name) = &self.scenario.name {
            let scenario = find_scenario(name)
                .ok_or_else(|| invalid("scenario.name", format!("unknown scenario {name:?}")))?;
            state.active_faults.extend(scenario.faults);
        }
        state.active_faults.extend(self.scenario.faults.clone());
        for fault in &state.active_faults {
            fault
                .validate(topology)
                .map_err(|e| invalid("scenario.faults", e))?;
        }
        for (id, level) in &self.scenario.initial_levels {
            let tank = topology
                .tank(id)
                .ok_or_else(|| invalid("scenario.initial_levels", format!("unknown tank {id}")))?;
            if !(0.0..=tank.h_max).contains(level) {
                return Err(invalid(
                    "scenario.initial_levels",
                    format!("level {level} for {id} outside [0, {}]", tank.h_max),
                ));
            }
            state.levels.insert(id.clone(), *level);
        }
        for (id, open) in &self.scenario.initial_valves {
            if topology.valve(id).is_none() {
                return Err(invalid(
                    "scenario.initial_valves",
                    format!("unknown valve {id}"),
                ));
            }
            state.valve_open.insert(id.clone(), *open);
        }
        if !(0.0..=1.0).contains(&self.scenario.pump_power) {
            return Err(invalid("scenario.pump_power", "must be within [0, 1]"));
        }
        state.pump_power = self.scenario.pump_power;
        Ok(state)
    }

    pub fn agent_profile(&self) -> Result<AgentProfile, ConfigError> {
        let mut profile = AgentProfile::default();
        if let Some(path) = &self.prompt.agents_file {
            let over: AgentsFile = read_yaml(path)?;
            if let Some(v) = over.role {
                profile.role = v;
            }
            if let Some(v) = over.goal {
                profile.goal = v;
            }
            if let Some(v) = over.skills {
                profile.skills = v;
            }
        }
        if let Some(path) = &self.prompt.task_file {
            let over: TaskFile = read_yaml(path)?;
            if let Some(v) = over.task {
                profile.task = v;
            }
            if let Some(v) = over.expected_output {
                profile.expected_output = v;
            }
        }
        Ok(profile)
    }

    pub fn build_setup(&self) -> Result<RunSetup, ConfigError> {
        if self.loop_config.dt <= 0.0 {
            return Err(invalid("loop.dt", "must be > 0"));
        }
        if self.loop_config.max_steps == 0 {
            return Err(invalid("loop.max_steps", "must be > 0"));
        }
        let topology = self.topology()?;
        let initial_state = self.initial_state(&topology)?;
        let kb = KnowledgeBase {
            topology,
            ..KnowledgeBase::default()
        };
        Ok(RunSetup {
            kb,
            initial_state,
            representation: self.prompt.representation,
            profile: self.agent_profile()?,
            fault_mode: self.twin.fault_mode,
            rules: self.rules.clone(),
            loop_config: self.loop_config.clone(),
        })
    }

    /// Instantiates the configured backend. The llm kind reads its API
    /// key from the environment; it is never part of the config file.
    pub fn build_backend(&self, setup: &RunSetup) -> Result<Box<dyn Backend>, ConfigError> {
        match &self.backend {
            BackendSection::Oracle => Ok(Box::new(OracleBackend::new(
                setup.kb.clone(),
                setup.loop_config.target_level_b204,
                setup.loop_config.symptom_threshold,
            ))),
            BackendSection::Scripted { responses } => {
                if responses.is_empty() {
                    return Err(invalid("backend.responses", "script must not be empty"));
                }
                Ok(Box::new(ScriptedBackend::new(responses.clone())))
            }
            BackendSection::Llm(remote) => {
                let api_key = std::env::var(API_KEY_ENV).map_err(|_| {
                    ConfigError::MissingApiKey {
                        variable: API_KEY_ENV.to_string(),
                    }
                })?;
                let backend = RemoteBackend::new(remote.clone(), api_key)
                    .map_err(|e| invalid("backend", e))?;
                Ok(Box::new(backend))
            }
        }
    }
}

fn read_yaml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let raw = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_yaml::from_str(&raw).map_err(|source| ConfigError::Yaml {
        path: path.to_path_buf(),
        source,
    })
}
