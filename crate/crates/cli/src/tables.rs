//! Fixed-layout CSV tables for multi-run commands.

use std::fmt::Write as _;

use fluidnet::engine::Stat;
use fluidnet::metrics::{KPI_CSV_HEADER, NA};
use fluidnet::{ControllerKind, KpiReport, RunReport, Summary};

const STD_COLUMNS: &str = "aggregate_throughput_bps_std,cell_edge_throughput_bps_std,spectral_efficiency_bps_per_hz_per_cell_std,jain_index_std,mean_intercell_interference_dbm_std,total_port_moves_std";

pub const SWEEP_HEADER: &str = "density,controller,seed,aggregate_throughput_bps,cell_edge_throughput_bps,spectral_efficiency_bps_per_hz_per_cell,jain_index,mean_intercell_interference_dbm,user_throughput_p50_bps,total_port_moves";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_owned(), |x| x.to_string())
}

pub fn compare_header() -> String {
    format!("row,controller,seed,drop_digest,{KPI_CSV_HEADER},{STD_COLUMNS}")
}

/// One `run` row per report, then one `summary` row (means, then sample
/// standard deviations) per controller, controllers in canonical order.
pub fn compare_csv(reports: &[RunReport]) -> String {
    let mut out = compare_header();
    out.push('\n');
    let na_std = [NA; 6].join(",");
    for r in reports {
        let _ = writeln!(
            out,
            "run,{},{},{},{},{na_std}",
            r.controller,
            r.seed,
            r.drop_digest,
            r.kpi.csv_row()
        );
    }
    for kind in ControllerKind::ALL {
        let kpis: Vec<KpiReport> = reports
            .iter()
            .filter(|r| r.controller == kind)
            .map(|r| r.kpi.clone())
            .collect();
        if kpis.is_empty() {
            continue;
        }
        let s = Summary::of(&kpis);
        let slots = Stat::of(
            &kpis
                .iter()
                .map(|k| k.slots_measured as f64)
                .collect::<Vec<_>>(),
        );
        let stats = [
            s.aggregate_throughput,
            s.cell_edge_throughput,
            s.spectral_efficiency,
            s.jain_index,
        ];
        let intf = s.mean_intercell_interference_dbm;
        let means = format!(
            "{},{},{},{},{},{},{}",
            stats[0].mean,
            stats[1].mean,
            stats[2].mean,
            stats[3].mean,
            opt(intf.map(|i| i.mean)),
            s.total_port_moves.mean,
            slots.mean
        );
        let stds = format!(
            "{},{},{},{},{},{}",
            stats[0].std,
            stats[1].std,
            stats[2].std,
            stats[3].std,
            opt(intf.map(|i| i.std)),
            s.total_port_moves.std
        );
        let _ = writeln!(out, "summary,{kind},{NA},{NA},{means},{stds}");
    }
    out
}

pub fn sweep_csv(rows: &[(usize, &RunReport)]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for (density, r) in rows {
        let k = &r.kpi;
        let _ = writeln!(
            out,
            "{density},{},{},{},{},{},{},{},{},{}",
            r.controller,
            r.seed,
            k.aggregate_throughput,
            k.cell_edge_throughput,
            k.spectral_efficiency,
            k.jain_index,
            opt(k.mean_intercell_interference_dbm),
            k.quantile(0.5),
            k.total_port_moves
        );
    }
    out
}
