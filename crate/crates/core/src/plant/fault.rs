use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::PlantState;
use super::topology::{PlantTopology, PUMP_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Reduces the effective flow of a pipe by the severity factor.
    Clogging,
    /// Drains a tank through a Torricelli-style leak scaled by severity.
    Leakage,
    /// Attenuates pump delivery by the severity factor.
    PumpDegradation,
}

impl FaultKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultKind::Clogging => "clogging",
            FaultKind::Leakage => "leakage",
            FaultKind::PumpDegradation => "pump_degradation",
        }
    }
}

/// Parametrized fault. `location` is a pipe id for clogging, a tank id
/// for leakage and the pump id for pump degradation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub kind: FaultKind,
    /// Fraction in [0, 1]; 0 is the identity, 1 fully blocks/degrades.
    pub severity: f64,
    pub location: String,
    /// Simulation time in s at which the fault takes effect.
    pub onset_time: f64,
}

impl FaultConfig {
    pub fn is_active(&self, time: f64) -> bool {
        time >= self.onset_time
    }

    pub fn validate(&self, topology: &PlantTopology) -> Result<(), FaultError> {
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(FaultError::SeverityOutOfBounds(self.severity));
        }
        let location_ok = match self.kind {
            FaultKind::Clogging => topology.pipe(&self.location).is_some(),
            FaultKind::Leakage => topology.tank(&self.location).is_some(),
            FaultKind::PumpDegradation => self.location == PUMP_ID,
        };
        if !location_ok {
            return Err(FaultError::LocationMismatch {
                kind: self.kind,
                location: self.location.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FaultError {
    #[error("fault severity {0} outside [0, 1]")]
    SeverityOutOfBounds(f64),
    #[error("{} fault cannot be located at {location}", kind.as_str())]
    LocationMismatch { kind: FaultKind, location: String },
    #[error("a {} fault at {location} is already active", kind.as_str())]
    DuplicateFault { kind: FaultKind, location: String },
}

/// Appends the fault to the state. It takes effect in `step` once
/// simulation time reaches `onset_time`.
pub fn inject_fault(
    state: &PlantState,
    topology: &PlantTopology,
    fault: FaultConfig,
) -> Result<PlantState, FaultError> {
    fault.validate(topology)?;
    if state
        .active_faults
        .iter()
        .any(|f| f.kind == fault.kind && f.location == fault.location)
    {
        return Err(FaultError::DuplicateFault {
            kind: fault.kind,
            location: fault.location,
        });
    }
    let mut next = state.clone();
    next.active_faults.push(fault);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clog(severity: f64) -> FaultConfig {
        FaultConfig {
            kind: FaultKind::Clogging,
            severity,
            location: "pipe_transfer".into(),
            onset_time: 0.0,
        }
    }

    #[test]
    fn inject_appends() {
        let topo = PlantTopology::default();
        let state = PlantState::initial(&topo);
        let next = inject_fault(&state, &topo, clog(0.5)).unwrap();
        assert_eq!(next.active_faults.len(), 1);
        assert!(state.active_faults.is_empty());
    }

    #[test]
    fn duplicate_rejected() {
        let topo = PlantTopology::default();
        let state = PlantState::initial(&topo);
        let once = inject_fault(&state, &topo, clog(0.5)).unwrap();
        let err = inject_fault(&once, &topo, clog(0.2)).unwrap_err();
        assert!(matches!(err, FaultError::DuplicateFault { .. }));
    }

    #[test]
    fn location_must_match_kind() {
        let topo = PlantTopology::default();
        let state = PlantState::initial(&topo);
        let bad = FaultConfig {
            kind: FaultKind::Leakage,
            severity: 0.5,
            location: "pipe_transfer".into(),
            onset_time: 0.0,
        };
        assert!(matches!(
            inject_fault(&state, &topo, bad),
            Err(FaultError::LocationMismatch { .. })
        ));
    }

    #[test]
    fn severity_bounds() {
        let topo = PlantTopology::default();
        let state = PlantState::initial(&topo);
        assert!(matches!(
            inject_fault(&state, &topo, clog(1.5)),
            Err(FaultError::SeverityOutOfBounds(_))
        ));
    }
}
