//! CSV export of completed runs: the plant operation log, the twin
//! predictions per decision point and the decision log itself. Floats
//! are written via their shortest round-trip representation so a parsed
//! log reproduces the run exactly.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agents::parse_actions;
use crate::control::{IterationRecord, RunResult, TraceRow};
use crate::metrics::DecisionPoint;
use crate::plant::{compute_flows, Action, FaultKind, PlantState, PlantTopology};

pub const PLANT_OP_FILE: &str = "plant_op.csv";
pub const TWIN_OP_FILE: &str = "digital_twin_op.csv";
pub const LLM_OP_FILE: &str = "llm_plant_op.csv";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad value in {file}: {message}")]
    Parse { file: String, message: String },
}

fn parse_err(file: &str, message: impl ToString) -> ExportError {
    ExportError::Parse {
        file: file.to_string(),
        message: message.to_string(),
    }
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn op_header(topology: &PlantTopology) -> Vec<String> {
    let mut header = vec!["time".to_string()];
    for tank in &topology.tanks {
        header.push(format!("tank_{}_level", tank.id));
    }
    for valve in &topology.valves {
        header.push(valve.id.clone());
    }
    header.extend(
        [
            "pump_power",
            "volume_flow_rate",
            "fault_clogging",
            "fault_leakage",
            "fault_pump_degradation",
            "overflow",
        ]
        .map(String::from),
    );
    header
}

fn fault_active(state: &PlantState, kind: FaultKind) -> bool {
    state
        .active_faults
        .iter()
        .any(|f| f.kind == kind && f.is_active(state.time))
}

fn op_row(state: &PlantState, transfer_flow: f64, topology: &PlantTopology) -> Vec<String> {
    let mut row = vec![state.time.to_string()];
    for tank in &topology.tanks {
        row.push(state.level(&tank.id).to_string());
    }
    for valve in &topology.valves {
        row.push(flag(state.is_open(&valve.id)));
    }
    row.push(state.pump_power.to_string());
    row.push(transfer_flow.to_string());
    row.push(flag(fault_active(state, FaultKind::Clogging)));
    row.push(flag(fault_active(state, FaultKind::Leakage)));
    row.push(flag(fault_active(state, FaultKind::PumpDegradation)));
    row.push(flag(!state.overflowed.is_empty()));
    row
}

/// One simulation step per row.
pub fn write_plant_op(
    path: &Path,
    trace: &[TraceRow],
    topology: &PlantTopology,
) -> Result<(), ExportError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(op_header(topology))?;
    for row in trace {
        writer.write_record(op_row(&row.state, row.flows.transfer(topology), topology))?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// The validated twin trajectory of every decision point, keyed by the
/// decision iteration.
pub fn write_twin_op(
    path: &Path,
    records: &[IterationRecord],
    topology: &PlantTopology,
) -> Result<(), ExportError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(op_header(topology));
    writer.write_record(header)?;
    for record in records {
        for state in &record.verdict.prediction.trajectory {
            let flow = compute_flows(state, topology).transfer(topology);
            let mut row = vec![record.iteration.to_string()];
            row.extend(op_row(state, flow, topology));
            writer.write_record(row)?;
        }
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

const LLM_OP_HEADER: [&str; 10] = [
    "iteration",
    "backend_id",
    "prompt_tokens",
    "completion_tokens",
    "reprompt_count",
    "valid",
    "forced",
    "pump_power_before",
    "actions",
    "violations",
];

/// One row per decision point: what was proposed, how it was judged and
/// what it cost.
pub fn write_llm_op(path: &Path, records: &[IterationRecord]) -> Result<(), ExportError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(LLM_OP_HEADER)?;
    for record in records {
        let actions = record
            .proposal
            .actions
            .iter()
            .map(Action::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        let violations = record
            .verdict
            .violations
            .iter()
            .map(|v| v.code.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        writer.write_record([
            record.iteration.to_string(),
            record.proposal.backend_id.clone(),
            record.prompt_tokens.to_string(),
            record.completion_tokens.to_string(),
            record.reprompt_count.to_string(),
            flag(record.verdict.valid),
            flag(record.forced),
            record.state_before.pump_power.to_string(),
            actions,
            violations,
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes all three operation logs into `dir` and returns their paths.
pub fn export_run(
    dir: &Path,
    result: &RunResult,
    topology: &PlantTopology,
) -> Result<Vec<PathBuf>, ExportError> {
    let plant_path = dir.join(PLANT_OP_FILE);
    let twin_path = dir.join(TWIN_OP_FILE);
    let llm_path = dir.join(LLM_OP_FILE);
    write_plant_op(&plant_path, &result.plant_trace, topology)?;
    write_twin_op(&twin_path, &result.records, topology)?;
    write_llm_op(&llm_path, &result.records)?;
    Ok(vec![plant_path, twin_path, llm_path])
}

/// Parsed plant operation row; field order follows the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantOpRow {
    pub time: f64,
    pub levels: Vec<f64>,
    pub valves: Vec<bool>,
    pub pump_power: f64,
    pub volume_flow_rate: f64,
    pub fault_clogging: bool,
    pub fault_leakage: bool,
    pub fault_pump_degradation: bool,
    pub overflow: bool,
}

fn parse_f64(file: &str, raw: &str) -> Result<f64, ExportError> {
    raw.parse()
        .map_err(|_| parse_err(file, format!("not a number: {raw:?}")))
}

fn parse_flag(file: &str, raw: &str) -> Result<bool, ExportError> {
    match raw {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(parse_err(file, format!("not a 0/1 flag: {other:?}"))),
    }
}

pub fn read_plant_op(path: &Path, topology: &PlantTopology) -> Result<Vec<PlantOpRow>, ExportError> {
    let file = PLANT_OP_FILE;
    let mut reader = csv::Reader::from_path(path)?;
    let expected_header = op_header(topology);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != expected_header {
        return Err(parse_err(file, "unexpected header"));
    }
    let n_tanks = topology.tanks.len();
    let n_valves = topology.valves.len();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let fields: Vec<&str> = record.iter().collect();
        if fields.len() != expected_header.len() {
            return Err(parse_err(file, "wrong column count"));
        }
        let mut it = fields.into_iter();
        let time = parse_f64(file, it.next().unwrap())?;
        let mut levels = Vec::with_capacity(n_tanks);
        for _ in 0..n_tanks {
            levels.push(parse_f64(file, it.next().unwrap())?);
        }
        let mut valves = Vec::with_capacity(n_valves);
        for _ in 0..n_valves {
            valves.push(parse_flag(file, it.next().unwrap())?);
        }
        rows.push(PlantOpRow {
            time,
            levels,
            valves,
            pump_power: parse_f64(file, it.next().unwrap())?,
            volume_flow_rate: parse_f64(file, it.next().unwrap())?,
            fault_clogging: parse_flag(file, it.next().unwrap())?,
            fault_leakage: parse_flag(file, it.next().unwrap())?,
            fault_pump_degradation: parse_flag(file, it.next().unwrap())?,
            overflow: parse_flag(file, it.next().unwrap())?,
        });
    }
    Ok(rows)
}

/// Parsed decision-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmOpRow {
    pub iteration: usize,
    pub backend_id: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub reprompt_count: usize,
    pub valid: bool,
    pub forced: bool,
    pub pump_power_before: f64,
    pub actions: Vec<Action>,
    pub violations: Vec<String>,
}

impl LlmOpRow {
    pub fn decision_point(&self) -> DecisionPoint {
        DecisionPoint {
            actions: self.actions.clone(),
            pump_power_before: self.pump_power_before,
            reprompts: self.reprompt_count,
            tokens: self.prompt_tokens + self.completion_tokens,
        }
    }
}

pub fn read_llm_op(path: &Path) -> Result<Vec<LlmOpRow>, ExportError> {
    let file = LLM_OP_FILE;
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != LLM_OP_HEADER {
        return Err(parse_err(file, "unexpected header"));
    }
    let parse_usize = |raw: &str| -> Result<usize, ExportError> {
        raw.parse()
            .map_err(|_| parse_err(file, format!("not a count: {raw:?}")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != LLM_OP_HEADER.len() {
            return Err(parse_err(file, "wrong column count"));
        }
        let actions_raw = record.get(8).unwrap();
        let actions = if actions_raw.is_empty() {
            Vec::new()
        } else {
            parse_actions(&actions_raw.replace("; ", "\n"))
                .map_err(|e| parse_err(file, e))?
        };
        let violations_raw = record.get(9).unwrap();
        let violations = if violations_raw.is_empty() {
            Vec::new()
        } else {
            violations_raw.split("; ").map(String::from).collect()
        };
        rows.push(LlmOpRow {
            iteration: parse_usize(record.get(0).unwrap())?,
            backend_id: record.get(1).unwrap().to_string(),
            prompt_tokens: parse_usize(record.get(2).unwrap())?,
            completion_tokens: parse_usize(record.get(3).unwrap())?,
            reprompt_count: parse_usize(record.get(4).unwrap())?,
            valid: parse_flag(file, record.get(5).unwrap())?,
            forced: parse_flag(file, record.get(6).unwrap())?,
            pump_power_before: parse_f64(file, record.get(7).unwrap())?,
            actions,
            violations,
        });
    }
    Ok(rows)
}
