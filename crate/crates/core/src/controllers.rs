//! Antenna state machine and the baseline controllers.
//!
//! A controller is consulted once per control interval for each cell and
//! answers with a [`ControlAction`]: a port move and a power level. The move
//! is not instantaneous; the element travels for `latency_slots_per_port`
//! slots per port and keeps transmitting from its old port meanwhile.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::marl::LocalState;

/// Largest port move a capped controller may request per decision.
pub const MAX_PORT_STEP: i64 = 2;

/// Power reduction of the low power level, dB.
pub const POWER_BACKOFF_DB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerLevel {
    Max,
    Reduced,
}

impl PowerLevel {
    pub fn dbm(self, config: &ScenarioConfig) -> f64 {
        match self {
            PowerLevel::Max => config.tx_power_max,
            PowerLevel::Reduced => config.tx_power_max - POWER_BACKOFF_DB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAction {
    pub port_delta: i64,
    pub power: PowerLevel,
}

impl ControlAction {
    pub const HOLD: ControlAction = ControlAction {
        port_delta: 0,
        power: PowerLevel::Max,
    };

    /// Whether the move respects the per-decision cap.
    pub fn is_capped(&self) -> bool {
        self.port_delta.abs() <= MAX_PORT_STEP
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaState {
    pub current_port: usize,
    pub target_port: usize,
    /// Position of `current_port` along the track, meters.
    pub position: f64,
    pub power_dbm: f64,
    pub latency_remaining: u64,
    /// Ports travelled so far (energy proxy).
    pub cumulative_move_distance: u64,
}

impl AntennaState {
    pub fn new(port: usize, config: &ScenarioConfig) -> Self {
        Self {
            current_port: port,
            target_port: port,
            position: port_position(port, config),
            power_dbm: config.tx_power_max,
            latency_remaining: 0,
            cumulative_move_distance: 0,
        }
    }

    pub fn is_moving(&self) -> bool {
        self.latency_remaining > 0
    }
}

fn port_position(port: usize, config: &ScenarioConfig) -> f64 {
    port as f64 * config.track_length * config.wavelength() / (config.num_ports - 1) as f64
}

/// Start executing `action`. The target is clamped to the track; power takes
/// effect immediately. A move issued mid-travel restarts from the port the
/// element is physically on.
pub fn apply_action(state: &mut AntennaState, action: ControlAction, config: &ScenarioConfig) {
    let last = config.num_ports as i64 - 1;
    let target = (state.current_port as i64 + action.port_delta).clamp(0, last) as usize;
    let distance = target.abs_diff(state.current_port) as u64;
    state.target_port = target;
    state.latency_remaining = config.latency_slots_per_port * distance;
    state.power_dbm = action.power.dbm(config);
    state.cumulative_move_distance += distance;
    if state.latency_remaining == 0 {
        state.current_port = target;
        state.position = port_position(target, config);
    }
}

/// One slot of travel.
pub fn tick_latency(state: &mut AntennaState, config: &ScenarioConfig) {
    if state.latency_remaining > 0 {
        state.latency_remaining -= 1;
        if state.latency_remaining == 0 {
            state.current_port = state.target_port;
            state.position = port_position(state.current_port, config);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Fab,
    Sdar,
    Ras,
    Marl,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Fab,
        ControllerKind::Sdar,
        ControllerKind::Ras,
        ControllerKind::Marl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Fab => "fab",
            ControllerKind::Sdar => "sdar",
            ControllerKind::Ras => "ras",
            ControllerKind::Marl => "marl",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown controller `{s}` (expected fab, sdar, ras or marl)"))
    }
}

/// What a controller may look at when deciding for one cell.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub cell: usize,
    pub state: LocalState,
    pub antenna: &'a AntennaState,
    pub num_ports: usize,
    /// RSRP (dBm) of the cell's current PF-leading user at every port.
    pub leader_rsrp: Option<Vec<f64>>,
    /// Exploration probability for learning controllers; zero in evaluation.
    pub epsilon: f64,
}

/// Per-cell decision policy.
pub trait Controller: Send {
    fn kind(&self) -> ControllerKind;

    fn decide(&mut self, obs: &Observation<'_>, rng: &mut dyn RngCore) -> ControlAction;

    /// Port the antenna starts on.
    fn initial_port(&self, num_ports: usize) -> usize {
        num_ports / 2
    }
}

/// Fixed antenna, full power.
#[derive(Debug, Default, Clone)]
pub struct Fab;

impl Controller for Fab {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Fab
    }

    fn decide(&mut self, _obs: &Observation<'_>, _rng: &mut dyn RngCore) -> ControlAction {
        ControlAction::HOLD
    }
}

/// Signal-driven repositioning: step (at most two ports) toward the port
/// with the strongest RSRP for the PF-leading user.
#[derive(Debug, Default, Clone)]
pub struct Sdar;

impl Controller for Sdar {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Sdar
    }

    fn decide(&mut self, obs: &Observation<'_>, _rng: &mut dyn RngCore) -> ControlAction {
        let Some(rsrp) = obs.leader_rsrp.as_deref() else {
            return ControlAction::HOLD;
        };
        let best = argmax_first(rsrp);
        let delta =
            (best as i64 - obs.antenna.current_port as i64).clamp(-MAX_PORT_STEP, MAX_PORT_STEP);
        ControlAction {
            port_delta: delta,
            power: PowerLevel::Max,
        }
    }
}

/// Uniformly random port each decision, full power, no travel cap.
#[derive(Debug, Default, Clone)]
pub struct Ras;

impl Controller for Ras {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Ras
    }

    fn decide(&mut self, obs: &Observation<'_>, rng: &mut dyn RngCore) -> ControlAction {
        let target = rng.random_range(0..obs.num_ports);
        ControlAction {
            port_delta: target as i64 - obs.antenna.current_port as i64,
            power: PowerLevel::Max,
        }
    }
}

/// Index of the largest value; the first one on ties.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
