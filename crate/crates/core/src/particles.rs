//! Interacting particles `dX_i = (1/N) sum_{j != i} V(X_i - X_j) dt + sqrt(2) dB^i`
//! and their empirical density.
//!
//! The pair sum is evaluated through the Fourier series of `V`:
//! `(1/N) sum_k c_k e^{2 pi i k.X_i} S_k - V(0)/N` with
//! `S_k = sum_j e^{-2 pi i k.X_j}`. The structure factors `S_k` are summed
//! in fixed point, so the result does not depend on particle order.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DkError, Result};
use crate::grid::{GridSpec, RealField, SpectralField};
use crate::kernels::KernelSpec;
use crate::rng::{derive_seed, CounterNormals, SLOT_NORMALS};

const FIXED_SCALE: f64 = (1u64 << 62) as f64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleState {
    dim: usize,
    /// Row-major `N x d`, every coordinate in `[0, 1)`.
    positions: Vec<f64>,
    pub t: f64,
}

fn wrap(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

impl ParticleState {
    pub fn new(dim: usize, positions: Vec<f64>, t: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) || positions.len() % dim != 0 {
            return Err(DkError::invalid(format!(
                "{} coordinates do not form points in dimension {dim}",
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(DkError::invalid("non-finite particle coordinate"));
        }
        Ok(Self {
            dim,
            positions: positions.into_iter().map(wrap).collect(),
            t,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

fn phase(k: &[i64], x: &[f64]) -> f64 {
    2.0 * PI * k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>()
}

/// `(1/N) sum_{j != i} W(X_i - X_j)` for a field `W` given by its nonzero
/// Fourier coefficients, one vector of `width` components per wavevector.
fn pair_average(state: &ParticleState, modes: &[([i64; 3], Vec<Complex64>)], width: usize) -> Vec<f64> {
    let n = state.len();
    let d = state.dim;
    if n <= 1 || modes.is_empty() {
        return vec![0.0; n * width];
    }
    let structure: Vec<Complex64> = modes
        .par_iter()
        .map(|(k, _)| {
            let (re, im) = (0..n).fold((0i128, 0i128), |(re, im), j| {
                let (s, c) = phase(&k[..d], state.particle(j)).sin_cos();
                (re + (c * FIXED_SCALE) as i128, im - (s * FIXED_SCALE) as i128)
            });
            Complex64::new(re as f64 / FIXED_SCALE, im as f64 / FIXED_SCALE)
        })
        .collect();
    let self_term: Vec<f64> = (0..width)
        .map(|c| modes.iter().map(|(_, v)| v[c].re).sum())
        .collect();
    let inv_n = 1.0 / n as f64;
    let mut out = vec![0.0; n * width];
    out.par_chunks_mut(width).enumerate().for_each(|(i, row)| {
        let x = state.particle(i);
        for ((k, coeffs), s) in modes.iter().zip(&structure) {
            let (sn, cs) = phase(&k[..d], x).sin_cos();
            let w = Complex64::new(cs, sn) * s;
            for (r, c) in row.iter_mut().zip(coeffs) {
                *r += (c * w).re;
            }
        }
        for (r, s) in row.iter_mut().zip(&self_term) {
            *r = (*r - s) * inv_n;
        }
    });
    out
}

/// `(1/N) sum_{j != i} V(X_i - X_j)` for every particle, row-major `N x d`.
pub fn particle_drift(state: &ParticleState, kernel: &KernelSpec) -> Result<Vec<f64>> {
    if kernel.grid().dim() != state.dim {
        return Err(DkError::invalid("kernel and particles live in different dimensions"));
    }
    Ok(pair_average(state, &kernel.modes(), state.dim))
}

/// `(1/N) sum_{j != i} (div V)(X_i - X_j)` for every particle.
pub fn drift_divergence(state: &ParticleState, kernel: &KernelSpec) -> Result<Vec<f64>> {
    if kernel.grid().dim() != state.dim {
        return Err(DkError::invalid("kernel and particles live in different dimensions"));
    }
    let div = kernel.divergence_of();
    let grid = *kernel.grid();
    let modes: Vec<([i64; 3], Vec<Complex64>)> = div
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
        .map(|(i, c)| (grid.wavevector(i), vec![*c]))
        .collect();
    Ok(pair_average(state, &modes, 1))
}

/// Euler-Maruyama: `X += drift dt + sqrt(2 dt) xi`, wrapped to the torus.
pub fn step_particles(state: &ParticleState, dt: f64, kernel: &KernelSpec, draws: &[f64]) -> Result<ParticleState> {
    if !(dt > 0.0) {
        return Err(DkError::invalid(format!("dt must be > 0, got {dt}")));
    }
    if draws.len() != state.positions.len() {
        return Err(DkError::invalid(format!(
            "{} draws for {} coordinates",
            draws.len(),
            state.positions.len()
        )));
    }
    let drift = if kernel.is_zero() {
        vec![0.0; draws.len()]
    } else {
        particle_drift(state, kernel)?
    };
    let scale = (2.0 * dt).sqrt();
    let positions = state
        .positions
        .iter()
        .zip(drift.iter().zip(draws))
        .map(|(x, (v, z))| wrap(x + v * dt + scale * z))
        .collect();
    Ok(ParticleState {
        dim: state.dim,
        positions,
        t: state.t + dt,
    })
}

/// Standard normals for `(particle, step)`, keyed by the run seed and the
/// replica index.
pub struct ParticleNoise {
    normals: CounterNormals,
    dim: usize,
}

impl ParticleNoise {
    pub fn new(seed: u64, replica: u64, dim: usize) -> Self {
        assert!(dim <= SLOT_NORMALS);
        Self {
            normals: CounterNormals::new(derive_seed(seed, "particles", replica)),
            dim,
        }
    }

    pub fn draws(&mut self, step: u64, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.dim];
        for (i, row) in out.chunks_mut(self.dim).enumerate() {
            self.normals.fill(i as u64, step, row);
        }
        out
    }
}

/// `N` positions drawn from the density `rho`: a cell with probability
/// proportional to its value, then uniformly inside the cell.
pub fn sample_positions(rho: &RealField, n: usize, seed: u64, replica: u64) -> Result<ParticleState> {
    if rho.min() < 0.0 {
        return Err(DkError::invalid("cannot sample from a negative density"));
    }
    let grid = *rho.grid();
    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for v in rho.values() {
        acc += v;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(DkError::invalid("cannot sample from a zero density"));
    }
    let d = grid.dim();
    let h = grid.spacing();
    let mut rng = CounterNormals::new(derive_seed(seed, "init", replica));
    let mut u = vec![0.0; d + 1];
    let mut positions = Vec::with_capacity(n * d);
    for i in 0..n {
        rng.fill_uniform(i as u64, 0, &mut u);
        let target = u[0] * acc;
        let cell = cdf.partition_point(|&c| c <= target).min(grid.len() - 1);
        let idx = grid.multi_index(cell);
        for axis in 0..d {
            positions.push((idx[axis] as f64 + u[axis + 1]) * h);
        }
    }
    ParticleState::new(d, positions, 0.0)
}

/// Nearest-grid-point histogram of unit mass, smoothed with a periodized
/// Gaussian of the given bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDensity {
    pub field: RealField,
    pub bandwidth: f64,
}

pub fn histogram(state: &ParticleState, grid: GridSpec) -> Result<RealField> {
    if grid.dim() != state.dim {
        return Err(DkError::invalid("grid and particles live in different dimensions"));
    }
    let n = grid.n();
    let mut counts = vec![0.0; grid.len()];
    for i in 0..state.len() {
        let mut flat = 0usize;
        for &x in state.particle(i) {
            flat = flat * n + ((x * n as f64) as usize).min(n - 1);
        }
        counts[flat] += 1.0;
    }
    let scale = 1.0 / (state.len() as f64 * grid.cell_volume());
    RealField::new(grid, counts.into_iter().map(|c| c * scale).collect())
}

/// Periodized Gaussian of width `bandwidth` sampled on the grid, normalized
/// to unit grid mass.
pub fn gaussian_kernel(grid: GridSpec, bandwidth: f64) -> Result<RealField> {
    let images = (bandwidth * 8.0).ceil() as i64 + 1;
    let one_d = |x: f64| -> f64 {
        (-images..=images)
            .map(|m| {
                let y = x + m as f64;
                (-y * y / (2.0 * bandwidth * bandwidth)).exp()
            })
            .sum()
    };
    let raw = RealField::from_fn(grid, |x| x.iter().map(|&xi| one_d(xi)).product())?;
    let mass = raw.integrate();
    Ok(raw.scale(1.0 / mass))
}

pub fn empirical_density(state: &ParticleState, grid: GridSpec, bandwidth: f64) -> Result<EmpiricalDensity> {
    if !(bandwidth >= grid.spacing()) {
        return Err(DkError::invalid(format!(
            "bandwidth {bandwidth} below the grid spacing {}",
            grid.spacing()
        )));
    }
    let hist = histogram(state, grid)?;
    let kernel: SpectralField = gaussian_kernel(grid, bandwidth)?.forward();
    let smooth = crate::grid::convolve(&kernel, &hist)?;
    // Round-off can leave tiny negatives where there are no particles.
    let field = smooth.map(|v| v.max(0.0));
    let mass = field.integrate();
    Ok(EmpiricalDensity {
        field: field.scale(1.0 / mass),
        bandwidth,
    })
}

/// `sqrt(N) (pi^N - rho_bar)`.
pub fn fluctuation_field(density: &EmpiricalDensity, mean_field: &RealField, n: usize) -> Result<RealField> {
    let s = (n as f64).sqrt();
    density.field.zip_map(mean_field, |a, b| s * (a - b))
}

#[derive(Clone, Debug)]
pub struct ParticleConfig {
    pub kernel: KernelSpec,
    pub initial: RealField,
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub replica: u64,
    /// Keep positions every this many steps (0: only the final state).
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleRun {
    pub snapshots: Vec<ParticleState>,
    pub final_state: ParticleState,
    /// Replica-mean of the per-particle interaction divergence, per step.
    pub divergence_mean: Vec<f64>,
}

pub fn run_particles(cfg: &ParticleConfig) -> Result<ParticleRun> {
    let raw = cfg.t_end / cfg.dt;
    let steps = raw.round();
    if !(cfg.dt > 0.0) || !(steps >= 1.0) || (raw - steps).abs() > 1e-6 * steps {
        return Err(DkError::config(format!(
            "t_end = {} is not a whole number of steps of {}",
            cfg.t_end, cfg.dt
        )));
    }
    let steps = steps as usize;
    let mut state = sample_positions(&cfg.initial, cfg.particles, cfg.seed, cfg.replica)?;
    let mut noise = ParticleNoise::new(cfg.seed, cfg.replica, state.dim);
    let mut snapshots = Vec::new();
    if cfg.snapshot_stride > 0 {
        snapshots.push(state.clone());
    }
    let track_divergence = !cfg.kernel.is_zero() && cfg.snapshot_stride > 0;
    let mut divergence_mean = Vec::new();
    for n in 0..steps {
        if track_divergence {
            let div = drift_divergence(&state, &cfg.kernel)?;
            divergence_mean.push(div.iter().sum::<f64>() / div.len().max(1) as f64);
        }
        let draws = noise.draws(n as u64, state.len());
        state = step_particles(&state, cfg.dt, &cfg.kernel, &draws)?;
        if cfg.snapshot_stride > 0 && (n + 1) % cfg.snapshot_stride == 0 {
            snapshots.push(state.clone());
        }
    }
    Ok(ParticleRun {
        snapshots,
        final_state: state,
        divergence_mean,
    })
}

/// `t,i,x1[,x2[,x3]]` rows for a sequence of states.
pub fn positions_csv(states: &[ParticleState]) -> String {
    use std::fmt::Write as _;
    let d = states.first().map_or(1, |s| s.dim);
    let mut s = String::from("t,i");
    for a in 1..=d {
        let _ = write!(s, ",x{a}");
    }
    s.push('\n');
    for st in states {
        for i in 0..st.len() {
            let _ = write!(s, "{},{i}", crate::io::fmt_f64(st.t));
            for x in st.particle(i) {
                let _ = write!(s, ",{}", crate::io::fmt_f64(*x));
            }
            s.push('\n');
        }
    }
    s
}
