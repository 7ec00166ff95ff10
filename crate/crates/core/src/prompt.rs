//! Builds the three-section prompt from the knowledge base and current
//! state. The plant description supports three representation
//! modalities; the current-state subsection is the only part that varies
//! across iterations of one run.

use serde::{Deserialize, Serialize};

use crate::plant::{read_sensors, Endpoint, PlantState, PlantTopology};
use crate::twin::{KnowledgeBase, StateMachine};

const SECTION_DIVIDER: &str =
    "------------------------------------------------------------------------";

/// How the plant description is rendered into the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Bullet-style natural language.
    Text,
    /// The simulator's own scenario-definition source, rendered verbatim.
    SimCode,
    /// Deterministic graph-to-text serialization of the topology plus the
    /// state-machine transition table.
    StateGraph,
}

impl Representation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Representation::Text => "text",
            Representation::SimCode => "simcode",
            Representation::StateGraph => "stategraph",
        }
    }
}

/// The [Role]/[Goal]/[Task]/[Skills] half of the prompt plus the
/// expected-output contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub role: String,
    pub goal: String,
    pub task: Vec<String>,
    pub skills: Vec<String>,
    pub expected_output: Vec<String>,
}

impl Default for AgentProfile {
    fn default() -> Self {
        AgentProfile {
            role: "Plant operator: Ensures safe operations of the chemical plant.".into(),
            goal: "Maintain plant operation within safety limits and execute corrective \
                   actions if deviations occur."
                .into(),
            task: vec![
                "Sequentially fill and empty tanks B201 to B204.".into(),
                "Follow the control sequence given under [Plant Behavior].".into(),
                "If sensor readings deviate from nominal behavior, derive corrective \
                 actions that return the process to normal operation."
                    .into(),
            ],
            skills: vec![
                "Ensure safe plant operation".into(),
                "Operate valves and the central pump".into(),
                "Interpret level, pressure and flow sensor readings".into(),
            ],
            expected_output: vec![
                "Operation Action list for operation (e.g., \"valve_in0 - close\")".into(),
                "One action per line: \"<actuator> - open\", \"<actuator> - close\" or \
                 \"pump_P101 - set_power <fraction>\""
                    .into(),
                "Output only the action list, no surrounding prose.".into(),
            ],
        }
    }
}

/// Fully rendered prompt with token accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub agent_description: String,
    pub plant_description: String,
    pub agent_action: String,
    pub rendered_text: String,
    pub token_estimate: usize,
    pub representation: Representation,
}

/// Deterministic token approximation: ceil(character count / 4).
/// Provider-reported usage overrides this when a live backend responds.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn bullets(items: &[String]) -> String {
    items
        .iter()
        .map(|i| format!("- {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn endpoint_name(e: &Endpoint) -> String {
    match e {
        Endpoint::Supply => "supply".into(),
        Endpoint::Drain => "drain".into(),
        Endpoint::Manifold => "manifold".into(),
        Endpoint::Tank(id) => id.clone(),
    }
}

fn structure_text(topology: &PlantTopology) -> String {
    let tank_ids: Vec<&str> = topology.tanks.iter().map(|t| t.id.as_str()).collect();
    let inlet: Vec<&str> = topology
        .valves
        .iter()
        .map(|v| v.id.as_str())
        .filter(|id| id.starts_with("valve_in"))
        .collect();
    let other: Vec<&str> = topology
        .valves
        .iter()
        .map(|v| v.id.as_str())
        .filter(|id| !id.starts_with("valve_in"))
        .collect();
    let sensor_ids: Vec<&str> = topology.sensors.iter().map(|s| s.id.as_str()).collect();
    format!(
        "- The system consists of four tanks: {}\n\
         - There are eight valves controlling the liquid movement:\n\
         \u{20}   - Filling Valves: {}\n\
         \u{20}   - Transfer and drain valves: {}\n\
         - A central pump ({}) drives the transfer line into tank B204.\n\
         - Sensors: {}",
        tank_ids.join(", "),
        inlet.join(", "),
        other.join(", "),
        topology.pump.id,
        sensor_ids.join(", ")
    )
}

fn behavior_text(machine: &StateMachine) -> String {
    let mut lines = vec![format!(
        "- Control sequence (step 1 to {}):",
        machine.steps.len()
    )];
    for step in &machine.steps {
        let actions = step
            .entry_actions
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        let guard = match &step.exit_guard {
            Some(g) => format!("until {} is {}", g.sensor_id, g.value),
            None => "then continue".into(),
        };
        lines.push(format!(
            "  {}. {}: {} ({})",
            step.index,
            step.name,
            if actions.is_empty() {
                "no actions".into()
            } else {
                actions
            },
            guard
        ));
    }
    lines.join("\n")
}

fn structure_graph(topology: &PlantTopology) -> String {
    let mut lines = vec!["nodes:".to_string()];
    for t in &topology.tanks {
        lines.push(format!(
            "  tank {} (area {:.3} m2, h_max {:.3} m, high {:.3} m, low {:.3} m)",
            t.id, t.area, t.h_max, t.level_high_threshold, t.level_low_threshold
        ));
    }
    lines.push(format!(
        "  pump {} (q_max {:.1e} m3/s)",
        topology.pump.id, topology.pump.q_max
    ));
    lines.push("edges:".to_string());
    for p in &topology.pipes {
        let valve = p
            .valve_id
            .as_ref()
            .map(|v| format!(" [{v}]"))
            .unwrap_or_default();
        let pumped = if p.pumped { " (pumped)" } else { "" };
        lines.push(format!(
            "  {} -> {} via {}{}{}",
            endpoint_name(&p.source),
            endpoint_name(&p.sink),
            p.id,
            valve,
            pumped
        ));
    }
    lines.push("sensors:".to_string());
    for s in &topology.sensors {
        lines.push(format!("  {}", s.id));
    }
    lines.join("\n")
}

fn behavior_graph(machine: &StateMachine) -> String {
    let mut lines = vec!["transition table:".to_string()];
    lines.push("  step | name | entry actions | exit condition".into());
    for step in &machine.steps {
        let actions = step
            .entry_actions
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        let guard = match &step.exit_guard {
            Some(g) => format!("{} == {}", g.sensor_id, g.value),
            None => "immediate".into(),
        };
        lines.push(format!(
            "  {} | {} | {} | {}",
            step.index, step.name, actions, guard
        ));
    }
    lines.join("\n")
}

fn sim_code(kb: &KnowledgeBase) -> (String, String) {
    let structure = format!(
        "// plant topology, scenario-definition source\n{}",
        serde_json::to_string_pretty(&kb.topology).expect("topology serializes")
    );
    let behavior = format!(
        "// control sequence, scenario-definition source\n{}",
        serde_json::to_string_pretty(&kb.behavior_machine).expect("machine serializes")
    );
    (structure, behavior)
}

fn current_state_text(state: &PlantState, topology: &PlantTopology) -> String {
    let readings = read_sensors(state, topology);
    let mut lines = Vec::new();
    for (tank, level) in &state.levels {
        lines.push(format!("- tank_{tank}_level: {level:.3}m"));
    }
    let valves = state
        .valve_open
        .iter()
        .map(|(id, open)| format!("{id}={}", if *open { "open" } else { "closed" }))
        .collect::<Vec<_>>()
        .join(", ");
    lines.push(format!("- valve positions: {valves}"));
    lines.push(format!(
        "- {}_power: {:.2}",
        topology.pump.id, state.pump_power
    ));
    for (id, flag) in &readings.discrete_levels {
        lines.push(format!("- {id}: {flag}"));
    }
    for (id, pressure) in &readings.pressures {
        lines.push(format!("- {id}: {pressure:.1}Pa"));
    }
    lines.push(format!(
        "- sensor_continuous_volumeFlowRate: {:.6}m3/s",
        readings.volume_flow_rate
    ));
    lines.join("\n")
}

/// Renders the full three-section prompt for the given representation.
/// Byte-identical for identical inputs.
pub fn render(
    kb: &KnowledgeBase,
    state: &PlantState,
    representation: Representation,
    profile: &AgentProfile,
) -> PromptBundle {
    let agent_description = format!(
        "<Agent Description>\n\n[Role]\n{}\n\n[Goal]\n{}\n\n[Task]\n{}\n\n[Skills]\n{}",
        profile.role,
        profile.goal,
        bullets(&profile.task),
        bullets(&profile.skills)
    );
    let (structure, behavior) = match representation {
        Representation::Text => (
            structure_text(&kb.topology),
            behavior_text(&kb.behavior_machine),
        ),
        Representation::StateGraph => (
            structure_graph(&kb.topology),
            behavior_graph(&kb.behavior_machine),
        ),
        Representation::SimCode => sim_code(kb),
    };
    let plant_description = format!(
        "<Plant Description>\n\n[Plant Function]\n- {}\n\n[Plant Structure]\n{}\n\n\
         [Plant Behavior]\n{}\n\n[Current Plant State]\n{}",
        kb.function_text,
        structure,
        behavior,
        current_state_text(state, &kb.topology)
    );
    let agent_action = format!(
        "<Agent Action>\n\n[Expected Output]\n{}",
        bullets(&profile.expected_output)
    );
    let rendered_text = format!(
        "{agent_description}\n{SECTION_DIVIDER}\n{plant_description}\n{SECTION_DIVIDER}\n{agent_action}"
    );
    let token_estimate = estimate_tokens(&rendered_text);
    PromptBundle {
        agent_description,
        plant_description,
        agent_action,
        rendered_text,
        token_estimate,
        representation,
    }
}

/// Extends a rendered prompt with a [Validation Feedback] subsection.
/// Used on the reprompt path; the base sections are left untouched.
pub fn with_feedback(bundle: &PromptBundle, feedback_lines: &[String]) -> PromptBundle {
    let mut extended = bundle.clone();
    let feedback = format!("\n\n[Validation Feedback]\n{}", bullets(feedback_lines));
    extended.rendered_text.push_str(&feedback);
    extended.token_estimate = estimate_tokens(&extended.rendered_text);
    extended
}
