//! Physical layer: proportional-fair scheduling, joint SINR across cells and
//! Shannon rate mapping.
//!
//! Every cell transmits full-buffer on the whole band to one user per slot.
//! The serving link enjoys an array gain of `M` elements; interfering links
//! see unit gain in expectation. Because every cell is always on, the
//! interference a user would receive does not depend on whom the other
//! cells schedule, so the scheduler's instantaneous-rate estimate is the
//! rate that is actually delivered.

use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::config::{dbm_to_w, ScenarioConfig};
use crate::error::Result;
use crate::exact::ExactSum;

/// PF averaging window, slots.
pub const PF_TIME_CONSTANT: f64 = 100.0;
/// Lower bound on the PF denominator, bits/s.
pub const PF_RATE_FLOOR: f64 = 1.0;

/// Transmit configuration of one cell for a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmitter {
    pub port: usize,
    pub power_dbm: f64,
    pub power_w: f64,
}

impl Transmitter {
    pub fn new(port: usize, power_dbm: f64) -> Self {
        Self {
            port,
            power_dbm,
            power_w: dbm_to_w(power_dbm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub signal_w: f64,
    pub interference_w: f64,
    pub noise_w: f64,
}

impl LinkBudget {
    pub fn sinr(&self) -> f64 {
        self.signal_w / (self.interference_w + self.noise_w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    /// Global index of the scheduled user, if the cell has any.
    pub user: Option<usize>,
    pub signal_w: f64,
    pub interference_w: f64,
    pub noise_w: f64,
    pub sinr: f64,
    pub rate_bps: f64,
    /// Interference this cell's transmission put on other cells' scheduled users.
    pub caused_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub cells: Vec<CellOutcome>,
    /// `terms[interferer · B + victim]`: power from `interferer` landing on
    /// the user scheduled in `victim` (zero on the diagonal and for idle victims).
    terms: Vec<f64>,
}

impl SlotOutcome {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn interference_term(&self, interferer: usize, victim: usize) -> f64 {
        self.terms[interferer * self.num_cells() + victim]
    }

    /// Received-interference ledger: per-victim sums, merged.
    pub fn received_total(&self) -> ExactSum {
        let b = self.num_cells();
        let mut total = ExactSum::new();
        for victim in 0..b {
            let column: ExactSum = (0..b).map(|i| self.terms[i * b + victim]).collect();
            total.merge(&column);
        }
        total
    }

    /// Caused-interference ledger: per-interferer sums, merged.
    pub fn caused_total(&self) -> ExactSum {
        let b = self.num_cells();
        let mut total = ExactSum::new();
        for row in self.terms.chunks(b) {
            let row: ExactSum = row.iter().copied().collect();
            total.merge(&row);
        }
        total
    }
}

pub fn shannon_rate(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}

/// Signal, interference and noise for user `u` if served by `serving`.
pub fn link_budget(
    channel: &Channel,
    u: usize,
    serving: usize,
    tx: &[Transmitter],
    config: &ScenarioConfig,
) -> LinkBudget {
    let m = config.array_gain_elements as f64;
    let mut interference = 0.0;
    let mut signal = 0.0;
    for (b, t) in tx.iter().enumerate() {
        let rx = t.power_w * channel.gain_unchecked(u, b, t.port);
        if b == serving {
            signal = m * rx;
        } else {
            interference += rx;
        }
    }
    LinkBudget {
        signal_w: signal,
        interference_w: interference,
        noise_w: config.noise_power_w(),
    }
}

/// Pick the user maximizing `rate / max(average, floor)`; ties go to the
/// lowest position. `None` for an empty candidate list.
pub fn schedule_pf(inst_rates: &[f64], averages: &[f64]) -> Option<usize> {
    debug_assert_eq!(inst_rates.len(), averages.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (&r, &avg)) in inst_rates.iter().zip(averages).enumerate() {
        let metric = r / avg.max(PF_RATE_FLOOR);
        if best.is_none_or(|(_, m)| metric > m) {
            best = Some((i, metric));
        }
    }
    best.map(|(i, _)| i)
}

/// Exponential-average update after a slot: the scheduled user is credited
/// with `served_rate`, everyone else with zero.
pub fn update_pf_averages(averages: &mut [f64], scheduled: Option<usize>, served_rate: f64) {
    let w = 1.0 / PF_TIME_CONSTANT;
    for (i, avg) in averages.iter_mut().enumerate() {
        let credit = if Some(i) == scheduled {
            served_rate
        } else {
            0.0
        };
        *avg = (1.0 - w) * *avg + w * credit;
    }
}

/// Joint outcome of one slot given every cell's transmitter and scheduled user.
///
/// `scheduled[b]` is a global user index. All cells read the same snapshot
/// of ports and powers. Interference sums are correctly rounded, so the
/// caused and received ledgers balance exactly.
pub fn compute_slot(
    channel: &Channel,
    tx: &[Transmitter],
    scheduled: &[Option<usize>],
    config: &ScenarioConfig,
) -> SlotOutcome {
    let b_count = tx.len();
    assert_eq!(scheduled.len(), b_count);
    let noise = config.noise_power_w();
    let m = config.array_gain_elements as f64;
    let powers: Vec<f64> = tx.iter().map(|t| t.power_w).collect();

    let mut terms = vec![0.0; b_count * b_count];
    for (victim, user) in scheduled.iter().enumerate() {
        if let Some(u) = *user {
            for (i, t) in tx.iter().enumerate() {
                if i != victim {
                    terms[i * b_count + victim] = powers[i] * channel.gain_unchecked(u, i, t.port);
                }
            }
        }
    }

    let cells = scheduled
        .iter()
        .enumerate()
        .map(|(b, &user)| {
            let caused = terms[b * b_count..(b + 1) * b_count]
                .iter()
                .copied()
                .collect::<ExactSum>()
                .value();
            match user {
                Some(u) => {
                    let signal = m * powers[b] * channel.gain_unchecked(u, b, tx[b].port);
                    let interference = (0..b_count)
                        .map(|i| terms[i * b_count + b])
                        .collect::<ExactSum>()
                        .value();
                    let sinr = signal / (interference + noise);
                    CellOutcome {
                        user,
                        signal_w: signal,
                        interference_w: interference,
                        noise_w: noise,
                        sinr,
                        rate_bps: shannon_rate(config.bandwidth, sinr),
                        caused_w: caused,
                    }
                }
                None => CellOutcome {
                    user: None,
                    signal_w: 0.0,
                    interference_w: 0.0,
                    noise_w: noise,
                    sinr: 0.0,
                    rate_bps: 0.0,
                    caused_w: caused,
                },
            }
        })
        .collect();
    SlotOutcome { cells, terms }
}

/// Received power at `port` under full power and no array gain, dBm.
pub fn rsrp_probe(
    channel: &Channel,
    u: usize,
    b: usize,
    port: usize,
    config: &ScenarioConfig,
) -> Result<f64> {
    let g = channel.gain(u, b, port)?;
    Ok(10.0 * (dbm_to_w(config.tx_power_max) * g).log10() + 30.0)
}
