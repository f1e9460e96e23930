//! Port-dependent channel model.
//!
//! The power gain between user `u` and base station `b` when `b`'s fluid
//! antenna sits on port `p` is
//!
//! ```text
//! G(u, b, p) = 10^(-(PL(d) + S_ub)/10) · |g_ub[p]|²
//! ```
//!
//! where `PL` is log-distance path loss, `S_ub` optional log-normal
//! shadowing and `g_ub ∈ C^N` a unit-variance complex Gaussian vector whose
//! cross-port covariance follows the isotropic-scattering law
//! `Σ_ij = J0(2π |d_i − d_j| / λ)`. Between fading epochs each vector evolves
//! by a first-order autoregression that preserves that distribution.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bessel::j0;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::topology::{Point, SitePlan, UserState};

/// Evenly spaced port positions along a track of `W` wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct PortGrid {
    pub positions: Vec<f64>,
    pub wavelength: f64,
}

impl PortGrid {
    pub fn new(config: &ScenarioConfig) -> Self {
        let wavelength = config.wavelength();
        let n = config.num_ports;
        let span = config.track_length * wavelength;
        let positions = (0..n).map(|i| i as f64 * span / (n - 1) as f64).collect();
        Self {
            positions,
            wavelength,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Cross-port correlation matrix and a lower-triangular square root of it.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    n: usize,
    /// Row-major `n × n`.
    sigma: Vec<f64>,
    /// Row-major lower triangle, `L Lᵀ = Σ + loading·I`.
    factor: Vec<f64>,
    loading: f64,
}

const MAX_LOADING: f64 = 1e-3;
const RESIDUAL_TOL: f64 = 1e-8;

impl SpatialCovariance {
    /// Clarke/Jakes correlation for the configured port grid.
    pub fn for_config(config: &ScenarioConfig) -> Result<Self> {
        Self::for_grid(&PortGrid::new(config))
    }

    pub fn for_grid(grid: &PortGrid) -> Result<Self> {
        let n = grid.len();
        let mut sigma = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let sep = (grid.positions[i] - grid.positions[j]).abs();
                sigma[i * n + j] = j0(2.0 * PI * sep / grid.wavelength);
            }
        }
        Self::from_matrix(n, sigma)
    }

    /// Factor an arbitrary correlation matrix, adding diagonal loading
    /// `ε ∈ {0, 1e-12, 2e-12, …}` until a factor with max-residual ≤ 1e-8 exists.
    pub fn from_matrix(n: usize, sigma: Vec<f64>) -> Result<Self> {
        assert_eq!(sigma.len(), n * n);
        let mut loading = 0.0;
        loop {
            let mut loaded = sigma.clone();
            for i in 0..n {
                loaded[i * n + i] += loading;
            }
            if let Some(factor) = cholesky_psd(n, &loaded) {
                if max_residual(n, &factor, &loaded) <= RESIDUAL_TOL {
                    return Ok(Self {
                        n,
                        sigma,
                        factor,
                        loading,
                    });
                }
            }
            loading = if loading == 0.0 { 1e-12 } else { loading * 2.0 };
            if loading > MAX_LOADING {
                return Err(Error::Factorization(loading / 2.0));
            }
        }
    }

    pub fn num_ports(&self) -> usize {
        self.n
    }

    pub fn sigma(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.n + j]
    }

    pub fn factor(&self, i: usize, j: usize) -> f64 {
        self.factor[i * self.n + j]
    }

    pub fn loading(&self) -> f64 {
        self.loading
    }

    /// `‖L Lᵀ − (Σ + εI)‖_max`.
    pub fn residual(&self) -> f64 {
        let mut loaded = self.sigma.clone();
        for i in 0..self.n {
            loaded[i * self.n + i] += self.loading;
        }
        max_residual(self.n, &self.factor, &loaded)
    }

    /// Draw `L·w` with `w` i.i.d. CN(0, 1), writing into `out`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        scratch: &mut [Complex64],
        out: &mut [Complex64],
    ) {
        let n = self.n;
        for w in scratch.iter_mut().take(n) {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *w = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        }
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.factor[i * n..i * n + i + 1];
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, w) in row.iter().zip(scratch.iter()) {
                acc += w * *l;
            }
            *o = acc;
        }
    }
}

/// Cholesky factorization that tolerates exactly-singular positive
/// semidefinite input: a vanishing pivot whose column residual also vanishes
/// yields a zero column. Returns `None` if the matrix is not PSD.
fn cholesky_psd(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let scale = (0..n)
        .map(|i| a[i * n + i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-14 * scale;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let d = a[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d > tol {
            let pivot = d.sqrt();
            l[j * n + j] = pivot;
            for i in j + 1..n {
                let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
                l[i * n + j] = s / pivot;
            }
        } else if d >= -tol {
            for i in j + 1..n {
                let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
                if s.abs() > 1e-10 * scale {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

fn max_residual(n: usize, l: &[f64], target: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..=i.min(j)).map(|k| l[i * n + k] * l[j * n + k]).sum();
            worst = worst.max((v - target[i * n + j]).abs());
        }
    }
    worst
}

/// Temporal correlation between consecutive fading epochs for a user moving
/// at `speed`: `ρ = J0(2π f_D τ)` with `f_D = speed/λ`, clamped to `[0, 1]`.
pub fn temporal_correlation(speed: f64, wavelength: f64, epoch_duration: f64) -> f64 {
    let doppler = speed / wavelength;
    j0(2.0 * PI * doppler * epoch_duration).clamp(0.0, 1.0)
}

/// Linear large-scale gain (path loss plus shadowing) over a link.
pub fn large_scale_gain(
    user_pos: Point,
    site_pos: Point,
    config: &ScenarioConfig,
    shadow_db: f64,
) -> f64 {
    let d = user_pos.distance(site_pos).max(config.min_link_distance);
    let pl_db = config.pathloss_ref + 10.0 * config.pathloss_exponent * d.log10();
    10f64.powf(-(pl_db + shadow_db) / 10.0)
}

/// Small-scale fading vectors for every (user, base station) pair.
#[derive(Debug, Clone)]
pub struct FadingField {
    num_users: usize,
    num_cells: usize,
    num_ports: usize,
    /// `[(u · B + b) · N + port]`.
    gains: Vec<Complex64>,
}

impl FadingField {
    /// Independent stationary draws `g = L·w` for every pair.
    pub fn init<R: Rng + ?Sized>(
        num_users: usize,
        num_cells: usize,
        cov: &SpatialCovariance,
        rng: &mut R,
    ) -> Self {
        let n = cov.num_ports();
        let mut gains = vec![Complex64::new(0.0, 0.0); num_users * num_cells * n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        for pair in gains.chunks_mut(n) {
            cov.sample_into(rng, &mut scratch, pair);
        }
        Self {
            num_users,
            num_cells,
            num_ports: n,
            gains,
        }
    }

    /// One AR(1) epoch step: `g ← ρ_u g + √(1−ρ_u²) L w`.
    ///
    /// `rho[u]` is the per-user temporal coefficient. Innovations are drawn
    /// for every pair regardless of `ρ`, so the stream position depends only
    /// on the field shape.
    pub fn step<R: Rng + ?Sized>(&mut self, rho: &[f64], cov: &SpatialCovariance, rng: &mut R) {
        assert_eq!(rho.len(), self.num_users);
        let n = self.num_ports;
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        let mut innovation = vec![Complex64::new(0.0, 0.0); n];
        for (pair_idx, pair) in self.gains.chunks_mut(n).enumerate() {
            let r = rho[pair_idx / self.num_cells];
            let s = (1.0 - r * r).max(0.0).sqrt();
            cov.sample_into(rng, &mut scratch, &mut innovation);
            for (g, w) in pair.iter_mut().zip(&innovation) {
                *g = *g * r + *w * s;
            }
        }
    }

    pub fn vector(&self, u: usize, b: usize) -> &[Complex64] {
        let start = (u * self.num_cells + b) * self.num_ports;
        &self.gains[start..start + self.num_ports]
    }

    pub fn vector_mut(&mut self, u: usize, b: usize) -> &mut [Complex64] {
        let start = (u * self.num_cells + b) * self.num_ports;
        &mut self.gains[start..start + self.num_ports]
    }

    pub fn num_ports(&self) -> usize {
        self.num_ports
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }
}

/// Everything needed to evaluate `G(u, b, p)`: the fading field, per-pair
/// shadowing, and a cache of large-scale gains refreshed on mobility.
#[derive(Debug, Clone)]
pub struct Channel {
    pub covariance: SpatialCovariance,
    pub field: FadingField,
    shadow_db: Vec<f64>,
    large_scale: Vec<f64>,
}

impl Channel {
    /// Build the channel for a fresh drop. Shadowing (if enabled) is drawn
    /// from `shadow_rng`, the initial fading field from `fading_rng`.
    pub fn new<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        config: &ScenarioConfig,
        plan: &SitePlan,
        users: &[UserState],
        shadow_rng: &mut R1,
        fading_rng: &mut R2,
    ) -> Result<Self> {
        let covariance = SpatialCovariance::for_config(config)?;
        let b = plan.num_cells();
        let shadow_db = if config.shadowing_enabled {
            let normal = Normal::new(0.0, config.shadowing_sigma)
                .map_err(|_| Error::Constraint("shadowing_sigma ≥ 0"))?;
            (0..users.len() * b)
                .map(|_| normal.sample(shadow_rng))
                .collect()
        } else {
            vec![0.0; users.len() * b]
        };
        let field = FadingField::init(users.len(), b, &covariance, fading_rng);
        let mut channel = Self {
            covariance,
            field,
            shadow_db,
            large_scale: vec![0.0; users.len() * b],
        };
        channel.refresh_large_scale(config, plan, users);
        Ok(channel)
    }

    pub fn refresh_large_scale(
        &mut self,
        config: &ScenarioConfig,
        plan: &SitePlan,
        users: &[UserState],
    ) {
        let b = plan.num_cells();
        for (u, user) in users.iter().enumerate() {
            for (cell, site) in plan.sites.iter().enumerate() {
                let idx = u * b + cell;
                self.large_scale[idx] =
                    large_scale_gain(user.position, *site, config, self.shadow_db[idx]);
            }
        }
    }

    /// Advance the fading field by one epoch using each user's current speed.
    pub fn step_fading<R: Rng + ?Sized>(
        &mut self,
        config: &ScenarioConfig,
        users: &[UserState],
        rng: &mut R,
    ) {
        let lambda = config.wavelength();
        let tau = config.epoch_duration();
        let rho: Vec<f64> = users
            .iter()
            .map(|u| temporal_correlation(u.speed, lambda, tau))
            .collect();
        self.field.step(&rho, &self.covariance, rng);
    }

    pub fn large_scale(&self, u: usize, b: usize) -> f64 {
        self.large_scale[u * self.field.num_cells() + b]
    }

    pub fn num_ports(&self) -> usize {
        self.field.num_ports()
    }

    /// Linear power gain `G(u, b, port)`.
    pub fn gain(&self, u: usize, b: usize, port: usize) -> Result<f64> {
        if port >= self.num_ports() {
            return Err(Error::PortOutOfRange {
                port,
                num_ports: self.num_ports(),
            });
        }
        Ok(self.gain_unchecked(u, b, port))
    }

    #[inline]
    pub(crate) fn gain_unchecked(&self, u: usize, b: usize, port: usize) -> f64 {
        self.large_scale(u, b) * self.field.vector(u, b)[port].norm_sqr()
    }
}

/// Stand-alone form of the gain: `large_scale_gain · |g_ub[port]|²`.
pub fn channel_gain(
    field: &FadingField,
    u: usize,
    b: usize,
    port: usize,
    user_pos: Point,
    site_pos: Point,
    config: &ScenarioConfig,
) -> Result<f64> {
    if port >= field.num_ports() {
        return Err(Error::PortOutOfRange {
            port,
            num_ports: field.num_ports(),
        });
    }
    Ok(large_scale_gain(user_pos, site_pos, config, 0.0) * field.vector(u, b)[port].norm_sqr())
}
