//! Measurement-window accumulation and the network KPIs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::{w_to_dbm, ScenarioConfig};
use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::link::SlotOutcome;

/// Text used for an absent value in CSV/JSON output.
pub const NA: &str = "NA";

pub const KPI_CSV_HEADER: &str = "aggregate_throughput_bps,cell_edge_throughput_bps,spectral_efficiency_bps_per_hz_per_cell,jain_index,mean_intercell_interference_dbm,total_port_moves,slots_measured";

pub const CDF_CSV_HEADER: &str = "throughput_bps,cumulative_fraction";

#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    rate_sums: Vec<f64>,
    slots: u64,
    interference: ExactSum,
    interference_samples: u64,
    caused: ExactSum,
    received: ExactSum,
    port_moves: u64,
}

impl MetricsAccumulator {
    pub fn new(num_users: usize) -> Self {
        Self {
            rate_sums: vec![0.0; num_users],
            ..Default::default()
        }
    }

    pub fn record_slot(&mut self, outcome: &SlotOutcome) {
        self.slots += 1;
        for cell in &outcome.cells {
            if let Some(u) = cell.user {
                self.rate_sums[u] += cell.rate_bps;
                if outcome.num_cells() > 1 {
                    self.interference.add(cell.interference_w);
                    self.interference_samples += 1;
                }
            }
        }
        self.received.merge(&outcome.received_total());
        self.caused.merge(&outcome.caused_total());
    }

    pub fn add_port_moves(&mut self, moves: u64) {
        self.port_moves += moves;
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    /// Total interference received by scheduled users so far, W·slot.
    pub fn received_ledger(&self) -> f64 {
        self.received.value()
    }

    /// Total interference caused by all cells so far, W·slot.
    pub fn caused_ledger(&self) -> f64 {
        self.caused.value()
    }

    /// Mean throughput per user, bits/s.
    pub fn user_means(&self) -> Vec<f64> {
        let n = self.slots.max(1) as f64;
        self.rate_sums.iter().map(|s| s / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub aggregate_throughput: f64,
    pub cell_edge_throughput: f64,
    pub spectral_efficiency: f64,
    pub jain_index: f64,
    /// `None` when no scheduled user ever saw another cell (e.g. a single cell).
    pub mean_intercell_interference_dbm: Option<f64>,
    pub user_throughput_cdf: Vec<f64>,
    pub total_port_moves: u64,
    pub slots_measured: u64,
}

/// Nearest-rank 5th percentile: element `⌈0.05·n⌉ − 1` of the sorted list.
pub fn percentile_5(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (0.05 * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// Jain's fairness index `(Σx)² / (n·Σx²)`.
pub fn jain(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("jain"));
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(Error::AllZero);
    }
    Ok(sum * sum / (values.len() as f64 * sq))
}

pub fn finalize(
    acc: &MetricsAccumulator,
    config: &ScenarioConfig,
    num_cells: usize,
) -> Result<KpiReport> {
    if acc.slots == 0 {
        return Err(Error::Empty("measurement window"));
    }
    let means = acc.user_means();
    let aggregate: f64 = means.iter().sum();
    let mut cdf = means.clone();
    cdf.sort_by(f64::total_cmp);
    let mean_interference = (acc.interference_samples > 0)
        .then(|| w_to_dbm(acc.interference.value() / acc.interference_samples as f64));
    Ok(KpiReport {
        aggregate_throughput: aggregate,
        cell_edge_throughput: percentile_5(&means)?,
        spectral_efficiency: aggregate / (config.bandwidth * num_cells as f64),
        jain_index: jain(&means)?,
        mean_intercell_interference_dbm: mean_interference,
        user_throughput_cdf: cdf,
        total_port_moves: acc.port_moves,
        slots_measured: acc.slots,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_owned(), |x| x.to_string())
}

impl KpiReport {
    /// The KPI values in [`KPI_CSV_HEADER`] order.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.aggregate_throughput,
            self.cell_edge_throughput,
            self.spectral_efficiency,
            self.jain_index,
            opt(self.mean_intercell_interference_dbm),
            self.total_port_moves,
            self.slots_measured
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{KPI_CSV_HEADER}\n{}\n", self.csv_row())
    }

    pub fn to_json(&self) -> String {
        let interference = match self.mean_intercell_interference_dbm {
            Some(x) => serde_json::json!(x),
            None => serde_json::json!(NA),
        };
        let value = serde_json::json!({
            "aggregate_throughput_bps": self.aggregate_throughput,
            "cell_edge_throughput_bps": self.cell_edge_throughput,
            "spectral_efficiency_bps_per_hz_per_cell": self.spectral_efficiency,
            "jain_index": self.jain_index,
            "mean_intercell_interference_dbm": interference,
            "total_port_moves": self.total_port_moves,
            "slots_measured": self.slots_measured,
            "user_throughput_cdf": self.user_throughput_cdf,
        });
        let mut s = serde_json::to_string_pretty(&value).expect("json");
        s.push('\n');
        s
    }

    pub fn cdf_csv(&self) -> String {
        let n = self.user_throughput_cdf.len();
        let mut out = format!("{CDF_CSV_HEADER}\n");
        for (i, x) in self.user_throughput_cdf.iter().enumerate() {
            let _ = writeln!(out, "{x},{}", (i + 1) as f64 / n as f64);
        }
        out
    }

    /// Value of the user-throughput CDF's `q`-quantile (nearest rank).
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.user_throughput_cdf.len();
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.user_throughput_cdf[rank - 1]
    }
}
