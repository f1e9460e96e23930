//! The closed control loop.
//!
//! A run is a sequence of slots split into three phases: warmup (no control
//! decisions, PF averages settle), training (controllers act, learners
//! learn) and evaluation (controllers act greedily, KPIs are recorded).
//! Within a slot the order is fixed:
//!
//! 1. at a fading-epoch boundary, move users then evolve the fading field;
//! 2. at a control boundary, freeze every cell's window statistics, let
//!    learners close their pending transition, then let every cell decide
//!    on the same frozen snapshot and apply all actions together;
//! 3. advance every antenna's reconfiguration by one slot;
//! 4. schedule one user per cell (PF), compute the joint SINR, update PF
//!    averages;
//! 5. during evaluation, record the slot.

use std::ops::Range;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::Channel;
use crate::config::ScenarioConfig;
use crate::controllers::{
    apply_action, tick_latency, AntennaState, ControlAction, Controller, ControllerKind, Fab,
    Observation, Ras, Sdar,
};
use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::link::{
    compute_slot, link_budget, rsrp_probe, schedule_pf, shannon_rate, update_pf_averages,
    Transmitter,
};
use crate::marl::{
    compute_reward, epsilon_at, featurize, CellWindow, LocalState, MarlAgent, QTable,
};
use crate::metrics::{finalize, KpiReport, MetricsAccumulator};
use crate::rng::{derive_stream, labels, RngStream};
use crate::topology::{build_layout, drop_users, step_mobility, SitePlan, UserState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Warmup,
    Training,
    Evaluation,
}

/// Where a run is in its schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunPhase {
    pub phase: Phase,
    pub slot: u64,
    pub decisions: u64,
}

impl RunPhase {
    pub fn at(slot: u64, config: &ScenarioConfig) -> Phase {
        if slot < config.warmup_slots {
            Phase::Warmup
        } else if slot < config.warmup_slots + config.training_slots {
            Phase::Training
        } else {
            Phase::Evaluation
        }
    }
}

/// One step of the per-agent learning loop, for event-log instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Observe,
    Select,
    Apply,
    Evolve,
    Reward,
    Update,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub decision: u64,
    pub cell: usize,
    pub kind: EventKind,
}

/// One row of the optional per-slot trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub slot: u64,
    pub cell: usize,
    pub port: usize,
    pub scheduled_user: Option<usize>,
    pub sinr_db: f64,
    pub rate_bps: f64,
}

pub const TRACE_CSV_HEADER: &str = "slot,cell,port,scheduled_user,sinr_db,rate_bps";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    use std::fmt::Write as _;
    let mut out = format!("{TRACE_CSV_HEADER}\n");
    for r in rows {
        let user = r
            .scheduled_user
            .map_or_else(|| crate::metrics::NA.to_owned(), |u| u.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.slot, r.cell, r.port, user, r.sinr_db, r.rate_bps
        );
    }
    out
}

/// Per-cell reward observed at a training boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    pub decision: u64,
    pub cell: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub trace: bool,
    pub event_log: bool,
    pub reward_log: bool,
    /// Warm-start Q-tables for MARL, one per cell.
    pub initial_policy: Option<Vec<QTable>>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub controller: ControllerKind,
    pub kpi: KpiReport,
    /// Short hash of the initial user drop; equal across controllers for a seed.
    pub drop_digest: String,
    pub decisions_per_cell: u64,
    /// Updates applied by each learner (zero for baselines).
    pub learner_updates: Vec<u64>,
    pub trace: Option<Vec<TraceRow>>,
    pub events: Option<Vec<AgentEvent>>,
    pub rewards: Option<Vec<RewardSample>>,
    /// Final Q-tables (MARL only).
    pub policy: Option<Vec<QTable>>,
}

enum Policies {
    Baseline(Vec<Box<dyn Controller>>),
    Marl(Vec<MarlAgent>),
}

impl Policies {
    fn build(kind: ControllerKind, cells: usize, initial: Option<Vec<QTable>>) -> Result<Self> {
        Ok(match kind {
            ControllerKind::Fab => Policies::Baseline(
                (0..cells)
                    .map(|_| Box::new(Fab) as Box<dyn Controller>)
                    .collect(),
            ),
            ControllerKind::Sdar => Policies::Baseline(
                (0..cells)
                    .map(|_| Box::new(Sdar) as Box<dyn Controller>)
                    .collect(),
            ),
            ControllerKind::Ras => Policies::Baseline(
                (0..cells)
                    .map(|_| Box::new(Ras) as Box<dyn Controller>)
                    .collect(),
            ),
            ControllerKind::Marl => {
                let tables = match initial {
                    Some(t) if t.len() != cells => {
                        return Err(Error::Policy(format!(
                            "policy has {} agents, scenario has {cells} cells",
                            t.len()
                        )))
                    }
                    Some(t) => t,
                    None => vec![QTable::new(); cells],
                };
                Policies::Marl(tables.into_iter().map(MarlAgent::new).collect())
            }
        })
    }

    fn controller_mut(&mut self, cell: usize) -> &mut dyn Controller {
        match self {
            Policies::Baseline(c) => c[cell].as_mut(),
            Policies::Marl(a) => &mut a[cell],
        }
    }

    fn initial_port(&self, num_ports: usize) -> usize {
        match self {
            Policies::Baseline(c) => c
                .first()
                .map_or(num_ports / 2, |c| c.initial_port(num_ports)),
            Policies::Marl(a) => a
                .first()
                .map_or(num_ports / 2, |c| c.initial_port(num_ports)),
        }
    }
}

/// Hash of the users' initial positions.
pub fn drop_digest(users: &[UserState]) -> String {
    let mut h = Sha256::new();
    for u in users {
        h.update(u.position.x.to_bits().to_le_bytes());
        h.update(u.position.y.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct Simulation<'a> {
    config: &'a ScenarioConfig,
    plan: SitePlan,
    users: Vec<UserState>,
    cell_users: Vec<Range<usize>>,
    channel: Channel,
    antennas: Vec<AntennaState>,
    policies: Policies,
    windows: Vec<CellWindow>,
    mobility_rng: RngStream,
    fading_rng: RngStream,
    controller_rngs: Vec<RngStream>,
}

impl<'a> Simulation<'a> {
    fn new(
        config: &'a ScenarioConfig,
        kind: ControllerKind,
        initial_policy: Option<Vec<QTable>>,
    ) -> Result<Self> {
        config.validate()?;
        let seed = config.master_seed;
        let plan = build_layout(config)?;
        let mut drop_rng = derive_stream(seed, labels::DROP, 0);
        let users = drop_users(&plan, config, &mut drop_rng);
        let cell_users = (0..plan.num_cells())
            .map(|b| b * config.users_per_cell..(b + 1) * config.users_per_cell)
            .collect();
        let mut shadow_rng = derive_stream(seed, labels::SHADOWING, 0);
        let mut fading_rng = derive_stream(seed, labels::FADING, 0);
        let channel = Channel::new(config, &plan, &users, &mut shadow_rng, &mut fading_rng)?;
        let cells = plan.num_cells();
        let policies = Policies::build(kind, cells, initial_policy)?;
        let port = policies.initial_port(config.num_ports);
        let stream_label = if kind == ControllerKind::Marl {
            labels::EXPLORATION
        } else {
            labels::CONTROLLER
        };
        Ok(Self {
            config,
            antennas: (0..cells)
                .map(|_| AntennaState::new(port, config))
                .collect(),
            windows: (0..cells)
                .map(|_| CellWindow::new(config.users_per_cell))
                .collect(),
            controller_rngs: (0..cells)
                .map(|b| derive_stream(seed, stream_label, b as u64))
                .collect(),
            mobility_rng: derive_stream(seed, labels::MOBILITY, 0),
            fading_rng,
            plan,
            users,
            cell_users,
            channel,
            policies,
        })
    }

    fn num_cells(&self) -> usize {
        self.plan.num_cells()
    }

    fn transmitters(&self) -> Vec<Transmitter> {
        self.antennas
            .iter()
            .map(|a| Transmitter::new(a.current_port, a.power_dbm))
            .collect()
    }

    /// Instantaneous rate of every user of `cell` under `tx`.
    fn cell_rates(&self, cell: usize, tx: &[Transmitter]) -> Vec<f64> {
        self.cell_users[cell]
            .clone()
            .map(|u| {
                shannon_rate(
                    self.config.bandwidth,
                    link_budget(&self.channel, u, cell, tx, self.config).sinr(),
                )
            })
            .collect()
    }

    fn cell_averages(&self, cell: usize) -> Vec<f64> {
        self.users[self.cell_users[cell].clone()]
            .iter()
            .map(|u| u.pf_average_rate)
            .collect()
    }

    /// Global index of the user PF would schedule in `cell` right now.
    fn pf_leader(&self, cell: usize, tx: &[Transmitter]) -> Option<usize> {
        let rates = self.cell_rates(cell, tx);
        schedule_pf(&rates, &self.cell_averages(cell)).map(|i| self.cell_users[cell].start + i)
    }

    fn evolve_epoch(&mut self) {
        let dt = self.config.epoch_duration();
        step_mobility(
            &mut self.users,
            &self.plan,
            self.config,
            &mut self.mobility_rng,
            dt,
        );
        self.channel
            .refresh_large_scale(self.config, &self.plan, &self.users);
        self.channel
            .step_fading(self.config, &self.users, &mut self.fading_rng);
    }
}

/// Run one simulation with the controller family `kind`.
pub fn run(config: &ScenarioConfig, kind: ControllerKind, opts: RunOptions) -> Result<RunReport> {
    let RunOptions {
        trace,
        event_log,
        reward_log,
        initial_policy,
    } = opts;
    let mut sim = Simulation::new(config, kind, initial_policy)?;
    let cells = sim.num_cells();
    let digest = drop_digest(&sim.users);
    let mut metrics = MetricsAccumulator::new(sim.users.len());
    let mut trace_rows = trace.then(Vec::new);
    let mut events = event_log.then(Vec::new);
    let mut rewards = reward_log.then(Vec::new);
    let mut log = |decision: u64, cell: usize, kind: EventKind| {
        if let Some(ev) = events.as_mut() {
            ev.push(AgentEvent {
                decision,
                cell,
                kind,
            });
        }
    };

    let ctrl = config.control_interval;
    let training_decisions = config.training_slots.div_ceil(ctrl);
    let mut decisions = 0u64;
    let mut moves_at_eval_start: Option<u64> = None;
    let is_marl = matches!(sim.policies, Policies::Marl(_));
    let needs_probe = kind == ControllerKind::Sdar;

    for t in 0..config.total_slots() {
        let phase = RunPhase::at(t, config);
        if phase == Phase::Evaluation && moves_at_eval_start.is_none() {
            moves_at_eval_start = Some(
                sim.antennas
                    .iter()
                    .map(|a| a.cumulative_move_distance)
                    .sum(),
            );
            if let Policies::Marl(agents) = &mut sim.policies {
                agents.iter_mut().for_each(MarlAgent::forget_pending);
            }
        }

        // 1. Slow physical evolution.
        if t > 0 && t % config.fading_epoch == 0 {
            sim.evolve_epoch();
        }

        // 2. Control boundary.
        if phase != Phase::Warmup && (t - config.warmup_slots).is_multiple_of(ctrl) {
            let k = decisions;
            let states: Vec<LocalState> = (0..cells)
                .map(|b| featurize(&sim.windows[b], sim.antennas[b].current_port, config))
                .collect();
            for b in 0..cells {
                if k > 0 {
                    log(k, b, EventKind::Evolve);
                }
                if let (Policies::Marl(agents), Phase::Training) = (&mut sim.policies, phase) {
                    if agents[b].pending().is_some() {
                        let r = compute_reward(&sim.windows[b], config);
                        log(k, b, EventKind::Reward);
                        log(k, b, EventKind::Observe);
                        agents[b].learn(r.reward, states[b], config);
                        log(k, b, EventKind::Update);
                        if let Some(rw) = rewards.as_mut() {
                            rw.push(RewardSample {
                                decision: k,
                                cell: b,
                                reward: r.reward,
                            });
                        }
                        continue;
                    }
                }
                log(k, b, EventKind::Observe);
            }

            let epsilon = match phase {
                Phase::Training if is_marl => epsilon_at(k, training_decisions, config),
                _ => 0.0,
            };
            let tx = sim.transmitters();
            let probes: Vec<Option<Vec<f64>>> = (0..cells)
                .map(|b| {
                    if !needs_probe {
                        return Ok(None);
                    }
                    match sim.pf_leader(b, &tx) {
                        Some(u) => (0..config.num_ports)
                            .map(|p| rsrp_probe(&sim.channel, u, b, p, config))
                            .collect::<Result<Vec<_>>>()
                            .map(Some),
                        None => Ok(None),
                    }
                })
                .collect::<Result<_>>()?;

            // Every cell decides on the same frozen snapshot before anything is applied.
            let mut actions: Vec<ControlAction> = Vec::with_capacity(cells);
            for (b, (state, probe)) in states.iter().zip(probes).enumerate() {
                let obs = Observation {
                    cell: b,
                    state: *state,
                    antenna: &sim.antennas[b],
                    num_ports: config.num_ports,
                    leader_rsrp: probe,
                    epsilon,
                };
                let rng: &mut dyn RngCore = &mut sim.controller_rngs[b];
                actions.push(sim.policies.controller_mut(b).decide(&obs, rng));
                log(k, b, EventKind::Select);
            }
            for (b, action) in actions.into_iter().enumerate() {
                apply_action(&mut sim.antennas[b], action, config);
                log(k, b, EventKind::Apply);
            }
            for w in &mut sim.windows {
                w.reset();
            }
            decisions += 1;
        }

        // 3. Reconfiguration progress.
        for a in &mut sim.antennas {
            tick_latency(a, config);
        }

        // 4. Scheduling and the joint slot outcome.
        let tx = sim.transmitters();
        let scheduled: Vec<Option<usize>> = (0..cells).map(|b| sim.pf_leader(b, &tx)).collect();
        let outcome = compute_slot(&sim.channel, &tx, &scheduled, config);
        for b in 0..cells {
            let range = sim.cell_users[b].clone();
            let cell = &outcome.cells[b];
            let local = cell.user.map(|u| u - range.start);
            let mut averages = sim.cell_averages(b);
            update_pf_averages(&mut averages, local, cell.rate_bps);
            for (user, avg) in sim.users[range].iter_mut().zip(averages) {
                user.pf_average_rate = avg;
            }
            sim.windows[b].record(
                local.map(|l| (l, cell.sinr, cell.interference_w)),
                cell.caused_w,
            );
        }

        // 5. Measurement.
        if phase == Phase::Evaluation {
            metrics.record_slot(&outcome);
            if let Some(rows) = trace_rows.as_mut() {
                for (b, cell) in outcome.cells.iter().enumerate() {
                    rows.push(TraceRow {
                        slot: t,
                        cell: b,
                        port: tx[b].port,
                        scheduled_user: cell.user,
                        sinr_db: 10.0 * cell.sinr.log10(),
                        rate_bps: cell.rate_bps,
                    });
                }
            }
        }
    }

    let moves_end: u64 = sim
        .antennas
        .iter()
        .map(|a| a.cumulative_move_distance)
        .sum();
    metrics.add_port_moves(moves_end - moves_at_eval_start.unwrap_or(moves_end));
    let kpi = finalize(&metrics, config, cells)?;
    let (learner_updates, policy) = match &sim.policies {
        Policies::Marl(agents) => (
            agents.iter().map(|a| a.updates).collect(),
            Some(agents.iter().map(|a| a.q.clone()).collect()),
        ),
        Policies::Baseline(_) => (vec![0; cells], None),
    };
    Ok(RunReport {
        seed: config.master_seed,
        controller: kind,
        kpi,
        drop_digest: digest,
        decisions_per_cell: decisions,
        learner_updates,
        trace: trace_rows,
        events,
        rewards,
        policy,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Order-independent: sums are exact before the final rounding.
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().copied().collect::<ExactSum>().value() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            let ss = values
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .collect::<ExactSum>()
                .value();
            (ss / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub aggregate_throughput: Stat,
    pub cell_edge_throughput: Stat,
    pub spectral_efficiency: Stat,
    pub jain_index: Stat,
    /// Over runs that reported an interference value.
    pub mean_intercell_interference_dbm: Option<Stat>,
    pub total_port_moves: Stat,
}

impl Summary {
    pub fn of(reports: &[KpiReport]) -> Summary {
        let col = |f: fn(&KpiReport) -> f64| Stat::of(&reports.iter().map(f).collect::<Vec<_>>());
        let intf: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.mean_intercell_interference_dbm)
            .collect();
        Summary {
            runs: reports.len(),
            aggregate_throughput: col(|r| r.aggregate_throughput),
            cell_edge_throughput: col(|r| r.cell_edge_throughput),
            spectral_efficiency: col(|r| r.spectral_efficiency),
            jain_index: col(|r| r.jain_index),
            mean_intercell_interference_dbm: (!intf.is_empty()).then(|| Stat::of(&intf)),
            total_port_moves: col(|r| r.total_port_moves as f64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    /// Successful runs, in the order the seeds were given.
    pub reports: Vec<RunReport>,
    pub summary: Summary,
}

/// A batch in which at least one run failed.
#[derive(Debug)]
pub struct BatchFailure {
    pub completed: Vec<RunReport>,
    pub failures: Vec<(u64, Error)>,
}

impl std::fmt::Display for BatchFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} of {} runs failed",
            self.failures.len(),
            self.failures.len() + self.completed.len()
        )?;
        for (seed, e) in &self.failures {
            write!(f, "; seed {seed}: {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for BatchFailure {}

/// Independent runs over `seeds` (in parallel on the current rayon pool).
pub fn run_many(
    config: &ScenarioConfig,
    kind: ControllerKind,
    seeds: &[u64],
) -> Result<BatchReport, BatchFailure> {
    if seeds.is_empty() {
        return Err(BatchFailure {
            completed: Vec::new(),
            failures: vec![(0, Error::Empty("seed list"))],
        });
    }
    let outcomes: Vec<(u64, Result<RunReport>)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig {
                master_seed: seed,
                ..config.clone()
            };
            (seed, run(&cfg, kind, RunOptions::default()))
        })
        .collect();
    let mut completed = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in outcomes {
        match r {
            Ok(rep) => completed.push(rep),
            Err(e) => failures.push((
                seed,
                Error::Run {
                    seed,
                    source: Box::new(e),
                },
            )),
        }
    }
    if !failures.is_empty() {
        return Err(BatchFailure {
            completed,
            failures,
        });
    }
    let kpis: Vec<KpiReport> = completed.iter().map(|r| r.kpi.clone()).collect();
    Ok(BatchReport {
        summary: Summary::of(&kpis),
        reports: completed,
    })
}

/// Run a list of independent `(config, controller)` jobs on the current
/// rayon pool. Results come back in job order.
pub fn run_jobs(jobs: &[(ScenarioConfig, ControllerKind)]) -> Vec<Result<RunReport>> {
    jobs.par_iter()
        .map(|(config, kind)| run(config, *kind, RunOptions::default()))
        .collect()
}
