//! Scenario configuration.
//!
//! A scenario is a flat TOML document whose keys are the field names of
//! [`ScenarioConfig`]. Missing keys take their defaults; unknown keys are
//! rejected. Units are SI unless the field name says otherwise (powers in
//! dBm, gains and figures in dB).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    // Layout and propagation.
    pub num_cells: usize,
    pub inter_site_distance: f64,
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub tx_power_max: f64,
    pub noise_figure: f64,
    pub pathloss_ref: f64,
    pub pathloss_exponent: f64,
    pub min_link_distance: f64,
    pub shadowing_enabled: bool,
    pub shadowing_sigma: f64,

    // Fluid antenna.
    pub num_ports: usize,
    /// Track length in wavelengths.
    pub track_length: f64,
    pub array_gain_elements: u32,
    pub latency_slots_per_port: u64,

    // Users.
    pub users_per_cell: usize,
    /// `[min, max]` pedestrian speed, m/s.
    pub user_speed: [f64; 2],

    // Timing.
    pub slot_duration: f64,
    pub fading_epoch: u64,
    pub control_interval: u64,

    // Learner.
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    pub reward_interference_weight: f64,

    // Run.
    pub warmup_slots: u64,
    pub training_slots: u64,
    pub eval_slots: u64,
    pub master_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_cells: 7,
            inter_site_distance: 500.0,
            carrier_frequency: 3.5e9,
            bandwidth: 10e6,
            tx_power_max: 40.0,
            noise_figure: 9.0,
            pathloss_ref: 30.0,
            pathloss_exponent: 3.5,
            min_link_distance: 10.0,
            shadowing_enabled: false,
            shadowing_sigma: 8.0,
            num_ports: 16,
            track_length: 3.0,
            array_gain_elements: 4,
            latency_slots_per_port: 1,
            users_per_cell: 10,
            user_speed: [1.0, 3.0],
            slot_duration: 1e-3,
            fading_epoch: 10,
            control_interval: 50,
            alpha: 0.1,
            gamma: 0.9,
            epsilon_start: 0.3,
            epsilon_end: 0.02,
            epsilon_decay_fraction: 0.6,
            reward_interference_weight: 0.5,
            warmup_slots: 1_000,
            training_slots: 100_000,
            eval_slots: 20_000,
            master_seed: 1,
        }
    }
}

/// Parse and validate a scenario document.
pub fn load_config(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig =
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    /// Serialize back to a TOML document that [`load_config`] accepts.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &'static str); 17] = [
            (self.num_ports >= 2, "num_ports ≥ 2"),
            (self.track_length > 0.0, "track_length > 0"),
            (self.fading_epoch >= 1, "fading_epoch ≥ 1"),
            (
                self.control_interval >= self.fading_epoch,
                "control_interval ≥ fading_epoch",
            ),
            (
                self.epsilon_end <= self.epsilon_start,
                "epsilon_end ≤ epsilon_start",
            ),
            (
                (0.0..=1.0).contains(&self.epsilon_start) && self.epsilon_end >= 0.0,
                "0 ≤ epsilon ≤ 1",
            ),
            (self.alpha > 0.0 && self.alpha <= 1.0, "0 < alpha ≤ 1"),
            (self.gamma >= 0.0 && self.gamma < 1.0, "0 ≤ gamma < 1"),
            (self.tx_power_max.is_finite(), "tx_power_max finite"),
            (self.bandwidth > 0.0, "bandwidth > 0"),
            (self.inter_site_distance > 0.0, "inter_site_distance > 0"),
            (self.carrier_frequency > 0.0, "carrier_frequency > 0"),
            (self.slot_duration > 0.0, "slot_duration > 0"),
            (self.min_link_distance > 0.0, "min_link_distance > 0"),
            (
                self.user_speed[0] >= 0.0 && self.user_speed[0] <= self.user_speed[1],
                "0 ≤ user_speed[0] ≤ user_speed[1]",
            ),
            (
                (0.0..=1.0).contains(&self.epsilon_decay_fraction),
                "0 ≤ epsilon_decay_fraction ≤ 1",
            ),
            (self.array_gain_elements >= 1, "array_gain_elements ≥ 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, name)) => Err(Error::Constraint(name)),
            None => Ok(()),
        }
    }

    /// Carrier wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Receiver noise power over the full band, dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_PER_HZ + 10.0 * self.bandwidth.log10() + self.noise_figure
    }

    /// Receiver noise power, watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_w(self.noise_power_dbm())
    }

    /// Duration of one fading epoch, seconds.
    pub fn epoch_duration(&self) -> f64 {
        self.fading_epoch as f64 * self.slot_duration
    }

    pub fn total_slots(&self) -> u64 {
        self.warmup_slots + self.training_slots + self.eval_slots
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}
