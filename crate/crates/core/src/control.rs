//! The closed decision loop: monitor the plant, ask a backend for
//! actions, validate them against the twin, execute or reprompt, and
//! advance the simulation until the next noteworthy event. Runs end when
//! the collection tank reaches its target level or the decision budget
//! is spent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, ActionProposal, Backend, RepromptContext};
use crate::plant::{
    apply_actions, read_sensors, step_detailed, ActionError, FlowSample, PlantState,
    PlantTopology, SensorReadings, StepError,
};
use crate::prompt::{render, AgentProfile, Representation};
use crate::twin::{DigitalTwin, FaultMode, KnowledgeBase, TwinError, TwinPrediction};
use crate::validation::{validate, RuleConfig, ValidationVerdict};

/// A detected flow deficit on the pumped transfer line. `measured` and
/// `expected` are volume flows in m³/s; `severity_estimate` inverts the
/// linear fault model, `1 - measured / expected`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Symptom {
    pub location: String,
    pub severity_estimate: f64,
    pub measured: f64,
    pub expected: f64,
}

/// Flags a symptom when a transfer is commanded (pump on, transfer valve
/// open, at least one feed tank able to deliver) but the measured
/// transfer flow falls short of the nominal `q_max * u` by more than
/// `threshold` relative.
pub fn detect_symptoms(
    readings: &SensorReadings,
    state: &PlantState,
    topology: &PlantTopology,
    threshold: f64,
) -> Vec<Symptom> {
    let transfer = topology.transfer_pipe();
    let transfer_open = transfer
        .valve_id
        .as_ref()
        .map_or(true, |v| state.is_open(v));
    if !transfer_open || state.pump_power <= 0.0 {
        return Vec::new();
    }
    let can_deliver = topology.feed_tanks().iter().any(|(tank, pipe)| {
        pipe.valve_id.as_ref().map_or(true, |v| state.is_open(v)) && state.level(&tank.id) > 0.0
    });
    if !can_deliver {
        return Vec::new();
    }
    let expected = topology.pump.q_max * state.pump_power;
    let measured = readings.volume_flow_rate;
    if measured < (1.0 - threshold) * expected {
        vec![Symptom {
            location: transfer.id.clone(),
            severity_estimate: 1.0 - measured / expected,
            measured,
            expected,
        }]
    } else {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Reprompt budget per decision point; exceeding it forces execution.
    pub max_itr: usize,
    /// Decision-point budget for the whole run.
    pub max_steps: usize,
    /// Integration step in s.
    pub dt: f64,
    /// B204 level in m at which the run counts as done.
    pub target_level_b204: f64,
    /// Relative flow deficit below which no symptom is flagged.
    pub symptom_threshold: f64,
    /// Upper bound on simulation steps between decision points; a new
    /// decision is forced after this many steps even without an event.
    pub decision_window_steps: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_itr: 5,
            max_steps: 200,
            dt: 0.1,
            target_level_b204: 0.175,
            symptom_threshold: 0.2,
            decision_window_steps: 600,
        }
    }
}

/// One simulated instant of the plant, as exported to the operation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub state: PlantState,
    pub flows: FlowSample,
    pub clamped: bool,
}

/// Everything that happened at one decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based decision-point counter.
    pub iteration: usize,
    /// Simulation time of the decision in s.
    pub time: f64,
    pub state_before: PlantState,
    /// State right after applying the executed actions, before any
    /// further integration.
    pub state_after: PlantState,
    pub symptoms: Vec<Symptom>,
    /// The proposal that was finally executed (or force-executed).
    pub proposal: ActionProposal,
    pub verdict: ValidationVerdict,
    pub reprompt_count: usize,
    pub forced: bool,
    /// Token totals summed over all attempts at this decision point.
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    TargetReached,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub records: Vec<IterationRecord>,
    pub plant_trace: Vec<TraceRow>,
    pub final_state: PlantState,
}

/// Inputs of one closed-loop run. The backend is passed separately since
/// it is stateful and not serializable.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub kb: KnowledgeBase,
    pub initial_state: PlantState,
    pub representation: Representation,
    pub profile: AgentProfile,
    pub fault_mode: FaultMode,
    pub rules: RuleConfig,
    pub loop_config: LoopConfig,
}

impl RunSetup {
    pub fn new(kb: KnowledgeBase, initial_state: PlantState) -> Self {
        RunSetup {
            kb,
            initial_state,
            representation: Representation::Text,
            profile: AgentProfile::default(),
            fault_mode: FaultMode::Mirror,
            rules: RuleConfig::default(),
            loop_config: LoopConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("bad loop configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Action(#[from] ActionError),
}

fn summarize_prediction(prediction: &TwinPrediction) -> String {
    let start = prediction.trajectory[0].level("B204");
    let end = prediction.last().level("B204");
    let overflowed: Vec<&str> = prediction
        .last()
        .overflowed
        .iter()
        .map(String::as_str)
        .collect();
    if overflowed.is_empty() {
        format!("B204 {start:.3}m -> {end:.3}m over {}s", prediction.horizon)
    } else {
        format!(
            "B204 {start:.3}m -> {end:.3}m over {}s; overflowing: {}",
            prediction.horizon,
            overflowed.join(", ")
        )
    }
}

/// Rounded symptom fingerprint; a change in it is a decision event.
fn symptom_signature(symptoms: &[Symptom]) -> Vec<(String, i64)> {
    symptoms
        .iter()
        .map(|s| {
            (
                s.location.clone(),
                (s.severity_estimate * 100.0).round() as i64,
            )
        })
        .collect()
}

struct Decision {
    proposal: ActionProposal,
    verdict: ValidationVerdict,
    reprompts: usize,
    forced: bool,
    prompt_tokens: usize,
    completion_tokens: usize,
}

/// Propose/validate/reprompt until a valid proposal emerges or the
/// budget runs out; the last proposal is then force-executed. Backend
/// failures count as invalid attempts with no violations to report.
fn decide(
    setup: &RunSetup,
    twin: &DigitalTwin,
    plant: &PlantState,
    backend: &mut dyn Backend,
) -> Decision {
    let prompt = render(&setup.kb, plant, setup.representation, &setup.profile);
    let mut reprompts = 0;
    let mut prompt_tokens = 0;
    let mut completion_tokens = 0;
    let mut attempt = backend.propose(&prompt, plant);
    loop {
        let (proposal, verdict) = match attempt {
            Ok(p) => {
                prompt_tokens += p.prompt_tokens;
                completion_tokens += p.completion_tokens;
                let v = validate(&p, plant, twin, &setup.rules);
                if v.valid {
                    return Decision {
                        proposal: p,
                        verdict: v,
                        reprompts,
                        forced: false,
                        prompt_tokens,
                        completion_tokens,
                    };
                }
                (p, Some(v))
            }
            Err(e) => (
                ActionProposal::empty(backend.id(), format!("backend failure: {e}")),
                None,
            ),
        };
        if reprompts >= setup.loop_config.max_itr {
            let verdict =
                verdict.unwrap_or_else(|| validate(&proposal, plant, twin, &setup.rules));
            return Decision {
                proposal,
                verdict,
                reprompts,
                forced: true,
                prompt_tokens,
                completion_tokens,
            };
        }
        reprompts += 1;
        let (violations, twin_feedback) = match &verdict {
            Some(v) => (v.violations.clone(), summarize_prediction(&v.prediction)),
            None => (Vec::new(), "no prediction available".to_string()),
        };
        let ctx = RepromptContext {
            prior_proposal: proposal,
            violations,
            twin_feedback,
            attempt_index: reprompts,
        };
        attempt = agents::reprompt(backend, &ctx, &prompt, plant);
    }
}

pub fn run(setup: &RunSetup, backend: &mut dyn Backend) -> Result<RunResult, LoopError> {
    let cfg = &setup.loop_config;
    if cfg.dt <= 0.0 {
        return Err(LoopError::Config("dt must be > 0".into()));
    }
    let horizon_ratio = setup.rules.horizon / cfg.dt;
    if setup.rules.horizon < 0.0 || (horizon_ratio - horizon_ratio.round()).abs() > 1e-9 {
        return Err(LoopError::Config(format!(
            "rule horizon {} is not a multiple of dt {}",
            setup.rules.horizon, cfg.dt
        )));
    }
    setup.kb.validate()?;
    let topology = &setup.kb.topology;
    let mut plant = setup.initial_state.clone();
    let mut twin = DigitalTwin::new(
        setup.kb.clone(),
        plant.clone(),
        setup.fault_mode,
        cfg.dt,
    );
    let mut records = Vec::new();
    let mut plant_trace = Vec::new();
    let mut outcome = RunOutcome::Timeout;

    'outer: for iteration in 1..=cfg.max_steps {
        if plant.level("B204") >= cfg.target_level_b204 {
            outcome = RunOutcome::TargetReached;
            break;
        }
        let readings = read_sensors(&plant, topology);
        let symptoms = detect_symptoms(&readings, &plant, topology, cfg.symptom_threshold);
        twin.sync(&plant)?;
        let decision = decide(setup, &twin, &plant, backend);

        let state_after = match apply_actions(&plant, topology, &decision.proposal.actions) {
            Ok(s) => s,
            // A force-executed proposal may be structurally inapplicable;
            // the plant then simply keeps its configuration.
            Err(_) if decision.forced => plant.clone(),
            Err(e) => return Err(e.into()),
        };
        records.push(IterationRecord {
            iteration,
            time: plant.time,
            state_before: plant.clone(),
            state_after: state_after.clone(),
            symptoms: symptoms.clone(),
            proposal: decision.proposal,
            verdict: decision.verdict,
            reprompt_count: decision.reprompts,
            forced: decision.forced,
            prompt_tokens: decision.prompt_tokens,
            completion_tokens: decision.completion_tokens,
        });
        plant = state_after;

        let flags_at_decision = read_sensors(&plant, topology).discrete_levels;
        let symptoms_at_decision = symptom_signature(&detect_symptoms(
            &read_sensors(&plant, topology),
            &plant,
            topology,
            cfg.symptom_threshold,
        ));
        for _ in 0..cfg.decision_window_steps {
            let stepped = step_detailed(&plant, topology, cfg.dt)?;
            plant = stepped.state.clone();
            plant_trace.push(TraceRow {
                state: stepped.state,
                flows: stepped.flows,
                clamped: stepped.clamped,
            });
            if plant.level("B204") >= cfg.target_level_b204 {
                outcome = RunOutcome::TargetReached;
                break 'outer;
            }
            let readings = read_sensors(&plant, topology);
            if readings.discrete_levels != flags_at_decision {
                break;
            }
            let signature = symptom_signature(&detect_symptoms(
                &readings,
                &plant,
                topology,
                cfg.symptom_threshold,
            ));
            if signature != symptoms_at_decision {
                break;
            }
        }
    }

    if plant.level("B204") >= cfg.target_level_b204 {
        outcome = RunOutcome::TargetReached;
    }
    Ok(RunResult {
        outcome,
        records,
        plant_trace,
        final_state: plant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{OracleBackend, ScriptedBackend};
    use crate::plant::{FaultConfig, FaultKind};

    fn setup() -> RunSetup {
        let kb = KnowledgeBase::default();
        let initial = PlantState::initial(&kb.topology);
        RunSetup::new(kb, initial)
    }

    fn oracle_for(setup: &RunSetup) -> OracleBackend {
        OracleBackend::new(
            setup.kb.clone(),
            setup.loop_config.target_level_b204,
            setup.loop_config.symptom_threshold,
        )
    }

    #[test]
    fn no_symptom_when_pump_is_off() {
        let s = setup();
        let state = PlantState::initial(&s.kb.topology);
        let readings = read_sensors(&state, &s.kb.topology);
        assert!(detect_symptoms(&readings, &state, &s.kb.topology, 0.2).is_empty());
    }

    #[test]
    fn clogging_yields_matching_severity_estimate() {
        let s = setup();
        let mut state = PlantState::initial(&s.kb.topology);
        state.levels.insert("B201".into(), 0.2);
        state.valve_open.insert("valve_B201_out".into(), true);
        state.valve_open.insert("valve_transfer".into(), true);
        state.pump_power = 0.5;
        state.active_faults.push(FaultConfig {
            kind: FaultKind::Clogging,
            severity: 0.5,
            location: "pipe_transfer".into(),
            onset_time: 0.0,
        });
        let readings = read_sensors(&state, &s.kb.topology);
        let symptoms = detect_symptoms(&readings, &state, &s.kb.topology, 0.2);
        assert_eq!(symptoms.len(), 1);
        assert!((symptoms[0].severity_estimate - 0.5).abs() < 1e-9);
        assert_eq!(symptoms[0].location, "pipe_transfer");
    }

    #[test]
    fn deficit_below_threshold_is_tolerated() {
        let s = setup();
        let mut state = PlantState::initial(&s.kb.topology);
        state.levels.insert("B201".into(), 0.2);
        state.valve_open.insert("valve_B201_out".into(), true);
        state.valve_open.insert("valve_transfer".into(), true);
        state.pump_power = 0.5;
        state.active_faults.push(FaultConfig {
            kind: FaultKind::Clogging,
            severity: 0.1,
            location: "pipe_transfer".into(),
            onset_time: 0.0,
        });
        let readings = read_sensors(&state, &s.kb.topology);
        assert!(detect_symptoms(&readings, &state, &s.kb.topology, 0.2).is_empty());
    }

    #[test]
    fn oracle_run_reaches_target_fault_free() {
        let s = setup();
        let mut backend = oracle_for(&s);
        let result = run(&s, &mut backend).unwrap();
        assert_eq!(result.outcome, RunOutcome::TargetReached);
        assert!(result.final_state.level("B204") >= s.loop_config.target_level_b204);
        assert!(result.final_state.overflowed.is_empty());
        assert!(result.records.iter().all(|r| !r.forced && r.verdict.valid));
    }

    #[test]
    fn oracle_run_compensates_clogging() {
        let mut s = setup();
        s.initial_state.active_faults.push(FaultConfig {
            kind: FaultKind::Clogging,
            severity: 0.5,
            location: "pipe_transfer".into(),
            onset_time: 80.0,
        });
        let mut backend = oracle_for(&s);
        let result = run(&s, &mut backend).unwrap();
        assert_eq!(result.outcome, RunOutcome::TargetReached);
        // The compensation doubles the commanded power at some point.
        assert!(result
            .records
            .iter()
            .any(|r| (r.state_after.pump_power - 1.0).abs() < 1e-9));
        assert!(result.final_state.overflowed.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let s = setup();
        let a = run(&s, &mut oracle_for(&s)).unwrap();
        let b = run(&s, &mut oracle_for(&s)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_then_valid_counts_reprompts() {
        let s = setup();
        let mut backend = ScriptedBackend::new(vec![
            "valve_x9 - open".into(),
            "pump_P101 - set_power 1.5".into(),
            "valve_in0 - open".into(),
        ]);
        let mut s1 = s.clone();
        s1.loop_config.max_steps = 1;
        let result = run(&s1, &mut backend).unwrap();
        let record = &result.records[0];
        assert_eq!(record.reprompt_count, 2);
        assert!(!record.forced);
        assert!(record.verdict.valid);
        assert!(record.state_after.is_open("valve_in0"));
    }

    #[test]
    fn exhausted_budget_forces_execution() {
        let mut s = setup();
        s.loop_config.max_steps = 1;
        let mut backend = ScriptedBackend::new(vec!["pump_P101 - set_power 1.5".into()]);
        let result = run(&s, &mut backend).unwrap();
        let record = &result.records[0];
        assert!(record.forced);
        assert_eq!(record.reprompt_count, s.loop_config.max_itr);
        assert!(!record.verdict.valid);
        // The inapplicable forced action leaves the configuration alone.
        assert_eq!(record.state_after.pump_power, 0.0);
    }

    #[test]
    fn tiny_budget_times_out() {
        let mut s = setup();
        s.loop_config.max_steps = 2;
        s.loop_config.decision_window_steps = 5;
        let mut backend = oracle_for(&s);
        let result = run(&s, &mut backend).unwrap();
        assert_eq!(result.outcome, RunOutcome::Timeout);
    }

    #[test]
    fn trace_rows_advance_time_by_dt() {
        let mut s = setup();
        s.loop_config.max_steps = 3;
        s.loop_config.decision_window_steps = 10;
        let mut backend = oracle_for(&s);
        let result = run(&s, &mut backend).unwrap();
        for pair in result.plant_trace.windows(2) {
            let dt = pair[1].state.time - pair[0].state.time;
            assert!((dt - s.loop_config.dt).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_horizon_is_rejected_up_front() {
        let mut s = setup();
        s.rules.horizon = 0.25;
        let mut backend = oracle_for(&s);
        assert!(matches!(
            run(&s, &mut backend),
            Err(LoopError::Config(_))
        ));
    }
}
