//! Multi-cell fluid-antenna network simulator.
//!
//! Seven hexagonal cells, each base station carrying a fluid antenna whose
//! radiating element slides between `N` ports on a short track. A
//! controller per cell decides, every control interval, where the element
//! should be and at which power the cell transmits; a proportional-fair
//! scheduler picks one user per cell per slot underneath it. Four controller
//! families are provided: a fixed antenna (FAB), signal-driven
//! repositioning (SDAR), randomized selection (RAS) and independent tabular
//! Q-learners (MARL).
//!
//! ```
//! use fluidnet::{run, ControllerKind, RunOptions, ScenarioConfig};
//!
//! let config = ScenarioConfig {
//!     warmup_slots: 100,
//!     training_slots: 500,
//!     eval_slots: 500,
//!     ..Default::default()
//! };
//! let report = run(&config, ControllerKind::Fab, RunOptions::default())?;
//! assert_eq!(report.kpi.total_port_moves, 0);
//! assert_eq!(report.kpi.user_throughput_cdf.len(), 70);
//! # Ok::<(), fluidnet::Error>(())
//! ```

pub mod bessel;
pub mod channel;
pub mod config;
pub mod controllers;
pub mod engine;
mod error;
pub mod exact;
pub mod link;
pub mod marl;
pub mod metrics;
pub mod rng;
pub mod topology;

pub use config::{load_config, ScenarioConfig};
pub use controllers::{AntennaState, ControlAction, Controller, ControllerKind, PowerLevel};
pub use engine::{
    run, run_jobs, run_many, BatchFailure, BatchReport, RunOptions, RunReport, Stat, Summary,
};
pub use error::{Error, Result};
pub use marl::{LocalState, QTable};
pub use metrics::KpiReport;
pub use rng::{derive_stream, RngStream};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenario.md")]
    mod scenario {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/link.md")]
    mod link {}
    #[doc = include_str!("../../../book/src/controllers.md")]
    mod controllers {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/runs.md")]
    mod runs {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
