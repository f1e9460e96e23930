//! Independent tabular Q-learning, one agent per base station.
//!
//! Each agent sees only its own cell: a coarse [`LocalState`] built from the
//! last control interval, a reward trading its users' log-utility against
//! the interference it pushed onto its neighbours, and its own Q-table.
//! Agents never exchange messages; they interact only through the channel.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::config::{w_to_dbm, ScenarioConfig};
use crate::controllers::{ControlAction, Controller, ControllerKind, Observation, PowerLevel};
use crate::error::{Error, Result};

pub const PORT_BUCKETS: usize = 4;
pub const SINR_BUCKETS: usize = 6;
pub const INTERFERENCE_BUCKETS: usize = 6;
pub const LOAD_BUCKETS: usize = 3;
pub const NUM_ACTIONS: usize = 10;
pub const NUM_STATES: usize = PORT_BUCKETS * SINR_BUCKETS * INTERFERENCE_BUCKETS * LOAD_BUCKETS;

/// Lower edges of SINR bins 0..=5, dB. Values below the first edge fall in bin 0.
pub const SINR_EDGES_DB: [f64; 6] = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
/// Upper edges of interference bins 0..=4, dBm.
pub const INTERFERENCE_EDGES_DBM: [f64; 5] = [-110.0, -105.0, -100.0, -95.0, -90.0];

/// Port moves in action-index order; each appears with full then reduced power.
const ACTION_DELTAS: [i64; 5] = [0, -1, 1, -2, 2];

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct LocalState {
    pub port_bucket: u8,
    pub sinr_bucket: u8,
    pub intf_bucket: u8,
    pub load_bucket: u8,
}

impl LocalState {
    pub fn index(&self) -> usize {
        ((self.port_bucket as usize * SINR_BUCKETS + self.sinr_bucket as usize)
            * INTERFERENCE_BUCKETS
            + self.intf_bucket as usize)
            * LOAD_BUCKETS
            + self.load_bucket as usize
    }

    pub fn from_index(mut i: usize) -> Self {
        let load = i % LOAD_BUCKETS;
        i /= LOAD_BUCKETS;
        let intf = i % INTERFERENCE_BUCKETS;
        i /= INTERFERENCE_BUCKETS;
        let sinr = i % SINR_BUCKETS;
        i /= SINR_BUCKETS;
        Self {
            port_bucket: i as u8,
            sinr_bucket: sinr as u8,
            intf_bucket: intf as u8,
            load_bucket: load as u8,
        }
    }
}

/// Map an action index to the joint port move and power level.
pub fn action_from_index(a: usize) -> ControlAction {
    assert!(a < NUM_ACTIONS);
    ControlAction {
        port_delta: ACTION_DELTAS[a / 2],
        power: if a.is_multiple_of(2) {
            PowerLevel::Max
        } else {
            PowerLevel::Reduced
        },
    }
}

pub fn action_index(action: ControlAction) -> Option<usize> {
    let d = ACTION_DELTAS.iter().position(|&d| d == action.port_delta)?;
    Some(2 * d + usize::from(action.power == PowerLevel::Reduced))
}

/// Per-cell statistics accumulated over one control interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellWindow {
    pub slots: u64,
    /// Slots in which the cell served someone.
    pub served_slots: u64,
    pub sinr_sum: f64,
    pub interference_sum_w: f64,
    pub caused_sum_w: f64,
    /// Per local user: (SINR sum, times scheduled).
    pub per_user: Vec<(f64, u64)>,
    pub num_users: usize,
}

impl CellWindow {
    pub fn new(num_users: usize) -> Self {
        Self {
            per_user: vec![(0.0, 0); num_users],
            num_users,
            ..Default::default()
        }
    }

    /// Record one slot. `served` is `(local user, SINR, received interference W)`.
    pub fn record(&mut self, served: Option<(usize, f64, f64)>, caused_w: f64) {
        self.slots += 1;
        self.caused_sum_w += caused_w;
        if let Some((u, sinr, interference)) = served {
            self.served_slots += 1;
            self.sinr_sum += sinr;
            self.interference_sum_w += interference;
            self.per_user[u].0 += sinr;
            self.per_user[u].1 += 1;
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.num_users);
    }

    /// Mean scheduled-user SINR over the window, dB (linear mean).
    pub fn mean_sinr_db(&self) -> f64 {
        if self.served_slots == 0 {
            return f64::NEG_INFINITY;
        }
        10.0 * (self.sinr_sum / self.served_slots as f64).log10()
    }

    /// Mean received inter-cell interference, dBm (linear mean).
    pub fn mean_interference_dbm(&self) -> f64 {
        if self.served_slots == 0 {
            return f64::NEG_INFINITY;
        }
        w_to_dbm(self.interference_sum_w / self.served_slots as f64)
    }
}

fn bucket_sinr(db: f64) -> u8 {
    let above = SINR_EDGES_DB.iter().filter(|&&e| db >= e).count();
    above.saturating_sub(1) as u8
}

fn bucket_interference(dbm: f64) -> u8 {
    INTERFERENCE_EDGES_DBM.iter().filter(|&&e| dbm >= e).count() as u8
}

fn bucket_load(users: usize) -> u8 {
    match users {
        0..=5 => 0,
        6..=15 => 1,
        _ => 2,
    }
}

/// Discretize a cell's last-interval statistics.
pub fn featurize(window: &CellWindow, current_port: usize, config: &ScenarioConfig) -> LocalState {
    LocalState {
        port_bucket: (current_port * PORT_BUCKETS / config.num_ports).min(PORT_BUCKETS - 1) as u8,
        sinr_bucket: bucket_sinr(window.mean_sinr_db()),
        intf_bucket: bucket_interference(window.mean_interference_dbm()),
        load_bucket: bucket_load(window.num_users),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    /// Mean over served users of `log2(1 + window-mean SINR)`.
    pub utility: f64,
    /// Window-mean interference caused to other cells, in units of noise power.
    pub caused_interference: f64,
    pub reward: f64,
}

pub fn compute_reward(window: &CellWindow, config: &ScenarioConfig) -> RewardRecord {
    let served: Vec<f64> = window
        .per_user
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|(s, n)| (1.0 + s / *n as f64).log2())
        .collect();
    let utility = if served.is_empty() {
        0.0
    } else {
        served.iter().sum::<f64>() / served.len() as f64
    };
    let caused_interference = if window.slots == 0 {
        0.0
    } else {
        window.caused_sum_w / window.slots as f64 / config.noise_power_w()
    };
    RewardRecord {
        utility,
        caused_interference,
        reward: utility - config.reward_interference_weight * caused_interference,
    }
}

/// Q-values and visit counts over every (state, action) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl Default for QTable {
    fn default() -> Self {
        Self::new()
    }
}

impl QTable {
    pub fn new() -> Self {
        Self {
            values: vec![0.0; NUM_STATES * NUM_ACTIONS],
            visits: vec![0; NUM_STATES * NUM_ACTIONS],
        }
    }

    pub fn get(&self, s: LocalState, a: usize) -> f64 {
        self.values[s.index() * NUM_ACTIONS + a]
    }

    pub fn set(&mut self, s: LocalState, a: usize, v: f64) {
        self.values[s.index() * NUM_ACTIONS + a] = v;
    }

    pub fn visits(&self, s: LocalState, a: usize) -> u64 {
        self.visits[s.index() * NUM_ACTIONS + a]
    }

    pub fn row(&self, s: LocalState) -> &[f64] {
        let i = s.index() * NUM_ACTIONS;
        &self.values[i..i + NUM_ACTIONS]
    }

    /// Greedy action; lowest index on ties.
    pub fn greedy(&self, s: LocalState) -> usize {
        crate::controllers::argmax_first(self.row(s))
    }

    pub fn max_value(&self, s: LocalState) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One-step Q-learning update.
    pub fn update(
        &mut self,
        s: LocalState,
        a: usize,
        reward: f64,
        next: LocalState,
        alpha: f64,
        gamma: f64,
    ) {
        let target = reward + gamma * self.max_value(next);
        let i = s.index() * NUM_ACTIONS + a;
        self.values[i] += alpha * (target - self.values[i]);
        self.visits[i] += 1;
    }

    /// Entries that were ever visited or hold a nonzero value.
    pub fn entries(&self) -> impl Iterator<Item = (LocalState, usize, f64, u64)> + '_ {
        (0..NUM_STATES * NUM_ACTIONS).filter_map(|i| {
            let (v, n) = (self.values[i], self.visits[i]);
            (n > 0 || v != 0.0).then(|| {
                (
                    LocalState::from_index(i / NUM_ACTIONS),
                    i % NUM_ACTIONS,
                    v,
                    n,
                )
            })
        })
    }
}

/// ε-greedy selection: uniform with probability ε, otherwise greedy.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: LocalState,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..NUM_ACTIONS)
    } else {
        q.greedy(s)
    }
}

/// Exploration schedule over training decisions: linear from
/// `epsilon_start` to `epsilon_end` across the first `decay_fraction` of
/// them, flat afterwards.
pub fn epsilon_at(step: u64, training_decisions: u64, config: &ScenarioConfig) -> f64 {
    let horizon = config.epsilon_decay_fraction * training_decisions as f64;
    if horizon <= 0.0 || step as f64 >= horizon {
        return config.epsilon_end;
    }
    let t = step as f64 / horizon;
    config.epsilon_start + t * (config.epsilon_end - config.epsilon_start)
}

/// One base station's learner.
#[derive(Debug, Clone, Default)]
pub struct MarlAgent {
    pub q: QTable,
    last: Option<(LocalState, usize)>,
    /// Updates applied, for instrumentation.
    pub updates: u64,
}

impl MarlAgent {
    pub fn new(q: QTable) -> Self {
        Self {
            q,
            last: None,
            updates: 0,
        }
    }

    /// The (state, action) pair awaiting its reward.
    pub fn pending(&self) -> Option<(LocalState, usize)> {
        self.last
    }

    /// Close the pending transition with `reward` and the state it led to.
    /// Returns false if nothing was pending.
    pub fn learn(&mut self, reward: f64, next: LocalState, config: &ScenarioConfig) -> bool {
        match self.last.take() {
            Some((s, a)) => {
                self.q
                    .update(s, a, reward, next, config.alpha, config.gamma);
                self.updates += 1;
                true
            }
            None => false,
        }
    }

    /// Drop the pending pair without learning from it (phase change).
    pub fn forget_pending(&mut self) {
        self.last = None;
    }
}

impl Controller for MarlAgent {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Marl
    }

    fn decide(&mut self, obs: &Observation<'_>, rng: &mut dyn RngCore) -> ControlAction {
        let a = select_action(&self.q, obs.state, obs.epsilon, rng);
        self.last = Some((obs.state, a));
        action_from_index(a)
    }
}

const POLICY_HEADER: &str =
    "agent,port_bucket,sinr_bucket,intf_bucket,load_bucket,action,value,visits";

/// Write every agent's table as CSV text (only visited or nonzero entries).
pub fn export_policy(tables: &[&QTable]) -> String {
    let mut out = String::from(POLICY_HEADER);
    out.push('\n');
    for (agent, q) in tables.iter().enumerate() {
        for (s, a, v, n) in q.entries() {
            let _ = writeln!(
                out,
                "{agent},{},{},{},{},{a},{v:?},{n}",
                s.port_bucket, s.sinr_bucket, s.intf_bucket, s.load_bucket
            );
        }
    }
    out
}

/// Parse a table written by [`export_policy`] into `num_agents` tables.
pub fn import_policy(text: &str, num_agents: usize) -> Result<Vec<QTable>> {
    let mut tables: BTreeMap<usize, QTable> = (0..num_agents).map(|i| (i, QTable::new())).collect();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == POLICY_HEADER => {}
        _ => return Err(Error::Policy(format!("missing header `{POLICY_HEADER}`"))),
    }
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Policy(format!("line {}: {what}", lineno + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad("bad integer"));
        let agent = int(0)?;
        let (p, s, i, l, a) = (int(1)?, int(2)?, int(3)?, int(4)?, int(5)?);
        if p >= PORT_BUCKETS
            || s >= SINR_BUCKETS
            || i >= INTERFERENCE_BUCKETS
            || l >= LOAD_BUCKETS
            || a >= NUM_ACTIONS
        {
            return Err(bad("index out of range"));
        }
        let value: f64 = f[6].parse().map_err(|_| bad("bad value"))?;
        let visits: u64 = f[7].parse().map_err(|_| bad("bad visit count"))?;
        let q = tables
            .get_mut(&agent)
            .ok_or_else(|| bad("agent index out of range"))?;
        let state = LocalState {
            port_bucket: p as u8,
            sinr_bucket: s as u8,
            intf_bucket: i as u8,
            load_bucket: l as u8,
        };
        let idx = state.index() * NUM_ACTIONS + a;
        q.values[idx] = value;
        q.visits[idx] = visits;
    }
    Ok(tables.into_values().collect())
}
