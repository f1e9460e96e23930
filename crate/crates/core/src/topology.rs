//! Hexagonal site layout, user drops, and random-waypoint mobility.
//!
//! Each site serves the hexagon around it (apothem `ISD/2`, circumradius
//! `ISD/√3`), which for the 7-site layout is exactly its Voronoi cell.
//! Association is geographic and fixed for the run; users wander inside their
//! serving hexagon and never hand over.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SitePlan {
    pub sites: Vec<Point>,
    pub inter_site_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub position: Point,
    pub waypoint: Point,
    pub speed: f64,
    pub serving_cell: usize,
    /// Exponentially weighted average served rate, bits/s (owned by the scheduler).
    pub pf_average_rate: f64,
}

/// Place the base stations.
///
/// Seven cells: the centre site plus a ring of six at distance ISD, at angles
/// `k·60°`. A single cell (one site at the origin) is also accepted for
/// isolated-link experiments.
pub fn build_layout(config: &ScenarioConfig) -> Result<SitePlan> {
    let isd = config.inter_site_distance;
    let sites = match config.num_cells {
        1 => vec![Point::default()],
        7 => std::iter::once(Point::default())
            .chain((0..6).map(|k| {
                let a = k as f64 * PI / 3.0;
                Point::new(isd * a.cos(), isd * a.sin())
            }))
            .collect(),
        n => return Err(Error::UnsupportedLayout(n)),
    };
    Ok(SitePlan {
        sites,
        inter_site_distance: isd,
    })
}

impl SitePlan {
    pub fn num_cells(&self) -> usize {
        self.sites.len()
    }

    /// Circumradius of a cell hexagon.
    pub fn cell_radius(&self) -> f64 {
        self.inter_site_distance / 3f64.sqrt()
    }

    /// Radius of the smallest origin-centred disc holding every cell.
    pub fn network_radius(&self) -> f64 {
        if self.sites.len() == 1 {
            self.cell_radius()
        } else {
            self.inter_site_distance * (7.0f64 / 3.0).sqrt()
        }
    }

    /// Whether `p` lies in the (closed) hexagon of `cell`.
    pub fn in_cell(&self, cell: usize, p: Point) -> bool {
        let d = p.sub(self.sites[cell]);
        let apothem = self.inter_site_distance / 2.0;
        (0..6).all(|k| {
            let a = k as f64 * PI / 3.0;
            d.x * a.cos() + d.y * a.sin() <= apothem * (1.0 + 1e-12)
        })
    }

    /// Uniform point in the hexagon of `cell`, by rejection from its bounding box.
    pub fn sample_in_cell<R: Rng + ?Sized>(&self, cell: usize, rng: &mut R) -> Point {
        let c = self.sites[cell];
        let half_w = self.inter_site_distance / 2.0;
        let half_h = self.cell_radius();
        loop {
            let p = Point::new(
                c.x + rng.random_range(-half_w..=half_w),
                c.y + rng.random_range(-half_h..=half_h),
            );
            if self.in_cell(cell, p) {
                return p;
            }
        }
    }
}

fn draw_speed<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> f64 {
    let [lo, hi] = config.user_speed;
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Drop `users_per_cell` users uniformly in every cell. Users are ordered by
/// cell, so user `u` belongs to cell `u / users_per_cell`.
pub fn drop_users<R: Rng + ?Sized>(
    plan: &SitePlan,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Vec<UserState> {
    let mut users = Vec::with_capacity(plan.num_cells() * config.users_per_cell);
    for cell in 0..plan.num_cells() {
        for _ in 0..config.users_per_cell {
            let position = plan.sample_in_cell(cell, rng);
            let waypoint = plan.sample_in_cell(cell, rng);
            let speed = draw_speed(config, rng);
            users.push(UserState {
                position,
                waypoint,
                speed,
                serving_cell: cell,
                pf_average_rate: 0.0,
            });
        }
    }
    users
}

/// Advance every user by `dt` seconds of random-waypoint motion.
///
/// A user that would reach its waypoint this step stops there and draws a
/// fresh waypoint and speed; a user already at its waypoint does not move.
pub fn step_mobility<R: Rng + ?Sized>(
    users: &mut [UserState],
    plan: &SitePlan,
    config: &ScenarioConfig,
    rng: &mut R,
    dt: f64,
) {
    debug_assert!(dt > 0.0);
    for user in users.iter_mut() {
        let to_go = user.waypoint.sub(user.position);
        let remaining = to_go.x.hypot(to_go.y);
        let stride = user.speed * dt;
        if remaining <= stride {
            user.position = user.waypoint;
            user.waypoint = plan.sample_in_cell(user.serving_cell, rng);
            user.speed = draw_speed(config, rng);
        } else {
            let f = stride / remaining;
            user.position =
                Point::new(user.position.x + f * to_go.x, user.position.y + f * to_go.y);
        }
    }
}
