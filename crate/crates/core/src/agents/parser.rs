use std::sync::OnceLock;

use regex::Regex;

use crate::plant::{Action, Command};

use super::BackendError;

fn line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^([A-Za-z_][A-Za-z0-9_]*)\s*-\s*(open|close|set_power\s+([-+0-9.eE]+))\s*$",
        )
        .expect("static regex compiles")
    })
}

fn bullet_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*\u{2022}]\s+|\d+[.)]\s*)?(.*)$").expect("static regex"))
}

/// Parses a backend response in the `<actuator> - <command>` grammar,
/// one action per line. Leading bullets and numbering are stripped,
/// commands are case-insensitive. Any malformed non-empty line rejects
/// the whole response, as does an empty response or a duplicate command
/// for one actuator.
pub fn parse_actions(raw_text: &str) -> Result<Vec<Action>, BackendError> {
    let mut actions: Vec<Action> = Vec::new();
    for raw_line in raw_text.lines() {
        let line = bullet_regex()
            .captures(raw_line)
            .and_then(|c| c.get(1))
            .map(|m| m.as_str().trim())
            .unwrap_or("");
        if line.is_empty() {
            continue;
        }
        let caps = line_regex().captures(line).ok_or_else(|| {
            BackendError::Unparseable(format!("line does not match the action grammar: {raw_line:?}"))
        })?;
        let actuator = caps.get(1).unwrap().as_str().to_string();
        let command_text = caps.get(2).unwrap().as_str().to_ascii_lowercase();
        let command = if command_text == "open" {
            Command::Open
        } else if command_text == "close" {
            Command::Close
        } else {
            let value = caps.get(3).unwrap().as_str();
            let power: f64 = value.parse().map_err(|_| {
                BackendError::Unparseable(format!("bad set_power value: {value:?}"))
            })?;
            Command::SetPower(power)
        };
        if actions
            .iter()
            .any(|a| a.actuator.eq_ignore_ascii_case(&actuator))
        {
            return Err(BackendError::Unparseable(format!(
                "duplicate command for actuator {actuator}"
            )));
        }
        actions.push(Action { actuator, command });
    }
    if actions.is_empty() {
        return Err(BackendError::Unparseable("no actions in response".into()));
    }
    Ok(actions)
}

/// Formats actions back into the grammar, one per line.
pub fn format_actions(actions: &[Action]) -> String {
    actions
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}
