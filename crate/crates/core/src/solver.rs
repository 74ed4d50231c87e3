//! Semi-implicit Euler-Maruyama integration of the regularized equation
//!
//! `d rho = Laplace rho dt - div(rho V_gamma * rho) dt - div(sigma_n(rho) dW^F)
//!          + 1/2 div(F1 sigma_n'(rho)^2 grad rho + sigma_n(rho) sigma_n'(rho) F2) dt`
//!
//! on the spectral grid. Only the Laplacian is implicit:
//! `rho'^ = (rho^ + dt N^ + S^) / (1 + dt 4 pi^2 |k|^2)`, with the zero mode
//! carried over unchanged.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{self, KineticHistogram, KineticReport};
use crate::error::{DkError, Result};
use crate::grid::{FieldSeries, GridSpec, RealField, SpectralField, VectorField};
use crate::kernels::{KernelSchedule, KernelSpec};
use crate::noise::{self, FCoefficients, NoisePath, NoiseSpec};
use crate::regularization::{self, SigmaFamily};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampPolicy {
    #[default]
    Off,
    /// Negative entries are set to zero and the field is rescaled to the
    /// previous mass; every event is logged.
    ClampAndReport,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub kernel: KernelSchedule,
    pub noise: NoiseSpec,
    pub sigma_index: usize,
    pub gamma: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Multiplies every noise mode.
    pub epsilon: f64,
    pub clamp: ClampPolicy,
    pub snapshot_stride: usize,
    pub diagnostics_stride: usize,
    /// Include the Ito correction `1/2 div(F1 s'^2 grad rho + s s' F2)`.
    pub correction: bool,
    /// Accumulate the kinetic measure every step with this many geometric levels.
    pub kinetic_levels: Option<u32>,
    pub initial: RealField,
}

impl SolverConfig {
    /// Heat flow from `initial` on `[0, 0.01]` with `dt = 1e-4`; adjust fields
    /// as needed.
    pub fn new(initial: RealField) -> Self {
        let grid = *initial.grid();
        Self {
            grid,
            kernel: KernelSchedule::constant(KernelSpec::zero(grid)),
            noise: NoiseSpec::empty(grid),
            sigma_index: 64,
            gamma: 0.1,
            t_start: 0.0,
            t_end: 0.01,
            dt: 1e-4,
            seed: 0,
            epsilon: 1.0,
            clamp: ClampPolicy::Off,
            snapshot_stride: 10,
            diagnostics_stride: 1,
            correction: true,
            kinetic_levels: None,
            initial,
        }
    }

    pub fn steps(&self) -> Result<usize> {
        let raw = (self.t_end - self.t_start) / self.dt;
        let steps = raw.round();
        if !(steps >= 1.0) || (raw - steps).abs() > 1e-6 * steps.max(1.0) {
            return Err(DkError::config(format!(
                "time window [{}, {}] is not a whole number of steps of {}",
                self.t_start, self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Same run without noise and without the correction term.
    pub fn mean_field(&self) -> SolverConfig {
        SolverConfig {
            noise: NoiseSpec::empty(self.grid),
            epsilon: 0.0,
            correction: false,
            ..self.clone()
        }
    }
}

/// Explicit diffusion coefficient of the correction term and its limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityGuard {
    /// `1/2 max F1 sup sigma_n'^2`.
    pub explicit_diffusion: f64,
    /// `h^2 / 8`.
    pub limit: f64,
    pub dt: f64,
}

impl StabilityGuard {
    pub fn holds(&self) -> bool {
        self.dt * self.explicit_diffusion <= self.limit
    }
}

/// A validated configuration with everything that does not change between
/// steps precomputed.
#[derive(Clone, Debug)]
pub struct Model {
    cfg: SolverConfig,
    kernels: KernelSchedule,
    noise: NoiseSpec,
    f: FCoefficients,
    f2_zero: bool,
    sigma: SigmaFamily,
    denominators: Vec<f64>,
    steps: usize,
    guard: StabilityGuard,
}

impl Model {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        let grid = cfg.grid;
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(DkError::config(format!("dt must be > 0, got {}", cfg.dt)));
        }
        if !(cfg.t_start < cfg.t_end) {
            return Err(DkError::config(format!(
                "time window needs s < T, got [{}, {}]",
                cfg.t_start, cfg.t_end
            )));
        }
        if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
            return Err(DkError::config(format!("gamma must lie in (0, 1], got {}", cfg.gamma)));
        }
        if cfg.snapshot_stride == 0 || cfg.diagnostics_stride == 0 {
            return Err(DkError::config("strides must be >= 1"));
        }
        if !cfg.epsilon.is_finite() || cfg.epsilon < 0.0 {
            return Err(DkError::config(format!("noise amplitude must be >= 0, got {}", cfg.epsilon)));
        }
        grid.check_same(cfg.kernel.grid())?;
        grid.check_same(cfg.noise.grid())?;
        grid.check_same(cfg.initial.grid())?;
        let steps = cfg.steps()?;
        let sigma = regularization::sigma(cfg.sigma_index).map_err(|e| DkError::config(e.to_string()))?;
        let kernels = cfg.kernel.mollified(cfg.gamma)?;
        let noise = cfg.noise.scaled(cfg.epsilon);
        let f = if noise.is_empty() || cfg.epsilon == 0.0 {
            FCoefficients::zero(grid)
        } else {
            noise::compute_f(&noise)
        };
        let f2_zero = f.f2.max_abs() == 0.0;
        let explicit_diffusion = if cfg.correction {
            0.5 * f.f1.max().max(0.0) * sigma.derivative_sq_sup()
        } else {
            0.0
        };
        let guard = StabilityGuard {
            explicit_diffusion,
            limit: grid.spacing() * grid.spacing() / 8.0,
            dt: cfg.dt,
        };
        if !guard.holds() {
            return Err(DkError::config(format!(
                "dt = {} violates the stability guard: dt * {:.3e} > h^2/8 = {:.3e}",
                cfg.dt, guard.explicit_diffusion, guard.limit
            )));
        }
        let denominators = (0..grid.len())
            .map(|i| 1.0 + cfg.dt * 4.0 * PI * PI * grid.wavenumber_sq(i))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            kernels,
            noise,
            f,
            f2_zero,
            sigma,
            denominators,
            steps,
            guard,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn f_coefficients(&self) -> &FCoefficients {
        &self.f
    }

    pub fn sigma(&self) -> &SigmaFamily {
        &self.sigma
    }

    pub fn guard(&self) -> StabilityGuard {
        self.guard
    }

    /// Identifies the run: parameters, initial data, kernel and noise.
    pub fn fingerprint(&self) -> String {
        let c = &self.cfg;
        let mut h = Sha256::new();
        h.update(
            format!(
                "{}|{}|{}|{}|{}|{}|{}|{}|{:?}|{}|{}|{}",
                c.grid, c.sigma_index, c.gamma, c.t_start, c.t_end, c.dt, c.seed, c.epsilon, c.clamp,
                c.snapshot_stride, c.diagnostics_stride, c.correction
            )
            .as_bytes(),
        );
        for v in c.initial.values() {
            h.update(v.to_le_bytes());
        }
        for (t, k) in c.kernel.entries() {
            h.update(t.to_le_bytes());
            for comp in k.components() {
                for z in comp.coeffs() {
                    h.update(z.re.to_le_bytes());
                    h.update(z.im.to_le_bytes());
                }
            }
        }
        for m in c.noise.modes() {
            for (i, z) in m.spectrum() {
                h.update((*i as u64).to_le_bytes());
                h.update(z.re.to_le_bytes());
                h.update(z.im.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpdeState {
    rho_hat: SpectralField,
    rho: RealField,
    pub t: f64,
    pub step: usize,
}

impl SpdeState {
    pub fn new(rho: RealField, t: f64) -> Self {
        Self {
            rho_hat: rho.forward(),
            rho,
            t,
            step: 0,
        }
    }

    pub fn rho(&self) -> &RealField {
        &self.rho
    }

    pub fn rho_hat(&self) -> &SpectralField {
        &self.rho_hat
    }

    /// `int rho`, read off the zero Fourier mode.
    pub fn mass(&self) -> f64 {
        self.rho_hat.zero_mode().re
    }
}

fn dealiased(f: &RealField) -> SpectralField {
    let mut s = f.forward();
    s.dealias();
    s
}

fn product(a: &RealField, b: &RealField) -> RealField {
    a.zip_map(b, |x, y| x * y).expect("fields share the grid")
}

/// Everything in the drift except the Laplacian, in Fourier space.
fn nonlinear_hat(state: &SpdeState, model: &Model) -> SpectralField {
    let grid = model.cfg.grid;
    let mut flux: Vec<Option<RealField>> = vec![None; grid.dim()];
    let mut add = |axis: usize, f: RealField| {
        flux[axis] = Some(match flux[axis].take() {
            None => f,
            Some(g) => g.zip_map(&f, |a, b| a + b).expect("same grid"),
        });
    };
    let kernel = model.kernels.at(state.t);
    if !kernel.is_zero() {
        for (axis, comp) in kernel.components().iter().enumerate() {
            let u = comp.mul(&state.rho_hat).expect("same grid").inverse();
            add(axis, product(&state.rho, &u).scale(-1.0));
        }
    }
    if model.cfg.correction && !model.noise.is_empty() {
        let rho = &state.rho;
        let sp = rho.map(|x| model.sigma.derivative(x));
        let coef = product(&model.f.f1, &sp.map(|v| v * v)).scale(0.5);
        for (axis, g) in state.rho_hat.gradient().iter().enumerate() {
            add(axis, product(&coef, &g.inverse()));
        }
        if !model.f2_zero {
            let ssp = rho.zip_map(&sp, |x, d| model.sigma.value(x) * d).expect("same grid");
            for (axis, f2) in model.f.f2.components().iter().enumerate() {
                add(axis, product(&ssp, f2).scale(0.5));
            }
        }
    }
    if flux.iter().all(Option::is_none) {
        return SpectralField::zeros(grid);
    }
    let comps: Vec<SpectralField> = flux
        .into_iter()
        .map(|f| f.map_or_else(|| SpectralField::zeros(grid), |f| dealiased(&f)))
        .collect();
    SpectralField::divergence(&comps).expect("same grid")
}

/// `Laplace rho - div(rho V_gamma * rho) + 1/2 div(F1 s'^2 grad rho + s s' F2)`.
pub fn drift(state: &SpdeState, model: &Model) -> RealField {
    state
        .rho_hat
        .laplacian()
        .add(&nonlinear_hat(state, model))
        .expect("same grid")
        .inverse()
}

fn noise_hat(state: &SpdeState, model: &Model, draws: &[f64]) -> Result<SpectralField> {
    let g = model.noise.realize(draws)?;
    let s = state.rho.map(|x| model.sigma.value(x));
    let comps: Vec<SpectralField> = g.iter().map(|gi| dealiased(&product(&s, gi))).collect();
    Ok(SpectralField::divergence(&comps)?.scale(Complex64::new(-1.0, 0.0)))
}

/// `-sum_k div(sigma_n(rho) f_k) dbeta_k`, draws laid out `[mode][axis]`.
pub fn noise_increment(state: &SpdeState, model: &Model, draws: &[f64]) -> Result<RealField> {
    Ok(noise_hat(state, model, draws)?.inverse())
}

/// One step. `draws` are the scaled increments of the current step.
pub fn step(state: &SpdeState, model: &Model, draws: &[f64]) -> Result<SpdeState> {
    let dt = model.cfg.dt;
    let n_hat = nonlinear_hat(state, model);
    let has_noise = !model.noise.is_empty() && draws.iter().any(|&x| x != 0.0);
    let s_hat = if has_noise {
        Some(noise_hat(state, model, draws)?)
    } else {
        if draws.len() != model.noise.mode_count() * model.cfg.grid.dim() {
            return Err(DkError::invalid(format!(
                "expected {} draws, got {}",
                model.noise.mode_count() * model.cfg.grid.dim(),
                draws.len()
            )));
        }
        None
    };
    let old = state.rho_hat.coeffs();
    let mut next = Vec::with_capacity(old.len());
    for i in 0..old.len() {
        let mut v = old[i] + n_hat.coeffs()[i] * dt;
        if let Some(s) = &s_hat {
            v += s.coeffs()[i];
        }
        next.push(v / model.denominators[i]);
    }
    // Every non-Laplacian term is a divergence.
    next[0] = old[0];
    let rho_hat = SpectralField::from_coefficients(model.cfg.grid, next)?;
    let rho = rho_hat.inverse();
    let t = model.cfg.t_start + (state.step + 1) as f64 * dt;
    if rho.values().iter().any(|v| !v.is_finite()) {
        return Err(DkError::NumericalAbort {
            step: state.step + 1,
            time: t,
            reason: "non-finite density".into(),
        });
    }
    Ok(SpdeState {
        rho_hat,
        rho,
        t,
        step: state.step + 1,
    })
}

/// Clamps negative entries and restores the mass; returns whether anything
/// changed.
fn clamp_and_rescale(state: &mut SpdeState) -> bool {
    if state.rho.min() >= 0.0 {
        return false;
    }
    let mass = state.mass();
    let clipped = state.rho.map(|x| x.max(0.0));
    let total = clipped.integrate();
    let rho = if total > 0.0 { clipped.scale(mass / total) } else { clipped };
    let mut hat = rho.forward();
    hat.coeffs_mut()[0] = Complex64::new(mass, 0.0);
    state.rho = hat.inverse();
    state.rho_hat = hat;
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub mass: f64,
    /// `int Psi(rho)`, `NaN` when the density is materially negative.
    pub entropy: f64,
    pub dissipation: f64,
    pub min_rho: f64,
    pub l2: f64,
    pub l4: f64,
}

impl StepDiagnostics {
    pub fn of(state: &SpdeState) -> Self {
        let rho = &state.rho;
        Self {
            t: state.t,
            mass: state.mass(),
            entropy: diagnostics::entropy(rho).unwrap_or(f64::NAN),
            dissipation: diagnostics::dissipation(rho),
            min_rho: rho.min(),
            l2: rho.lp_norm(2.0).unwrap_or(f64::NAN),
            l4: rho.lp_norm(4.0).unwrap_or(f64::NAN),
        }
    }

    pub const CSV_HEADER: [&'static str; 7] = ["t", "mass", "entropy", "dissipation", "min_rho", "l2", "l4"];

    pub fn row(&self) -> Vec<f64> {
        vec![self.t, self.mass, self.entropy, self.dissipation, self.min_rho, self.l2, self.l4]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub config_hash: String,
    pub dt: f64,
    pub steps: usize,
    pub snapshots: FieldSeries,
    pub diagnostics: Vec<StepDiagnostics>,
    pub min_rho: f64,
    /// Set when `min rho < -10 dt` at some step.
    pub unreliable: bool,
    pub clamp_events: usize,
    pub kinetic: Option<KineticReport>,
    pub warnings: Vec<String>,
}

impl TrajectoryRecord {
    pub fn final_density(&self) -> &RealField {
        self.snapshots.fields().last().expect("at least one snapshot")
    }

    pub fn diagnostics_csv(&self) -> String {
        crate::io::csv(&StepDiagnostics::CSV_HEADER, self.diagnostics.iter().map(StepDiagnostics::row))
    }
}

pub fn run(cfg: &SolverConfig) -> Result<TrajectoryRecord> {
    let model = Model::new(cfg)?;
    let path = noise::sample_path(model.noise(), cfg.dt, model.steps(), cfg.seed)?;
    run_model(&model, &path)
}

/// Runs on a given Brownian path (for shared-noise comparisons).
pub fn run_with_path(cfg: &SolverConfig, path: &NoisePath) -> Result<TrajectoryRecord> {
    run_model(&Model::new(cfg)?, path)
}

pub fn run_model(model: &Model, path: &NoisePath) -> Result<TrajectoryRecord> {
    let cfg = &model.cfg;
    let steps = model.steps;
    let width = model.noise.mode_count() * cfg.grid.dim();
    if path.steps() != steps || (path.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(DkError::invalid(format!(
            "noise path has {} steps of {}, run needs {steps} of {}",
            path.steps(),
            path.dt(),
            cfg.dt
        )));
    }
    if path.modes * path.dim != width {
        return Err(DkError::invalid("noise path mode count differs from the noise family"));
    }
    let mut gen = path.generator();
    let mut draws = vec![0.0; width];
    let mut state = SpdeState::new(cfg.initial.clone(), cfg.t_start);
    let mut times = vec![state.t];
    let mut frames = vec![state.rho.clone()];
    let mut diags = vec![StepDiagnostics::of(&state)];
    let mut min_rho = state.rho.min();
    let mut clamp_events = 0;
    let mut hist = cfg.kinetic_levels.map(KineticHistogram::new);
    let mut grad_energy = 0.0;
    let mut max_rho = state.rho.max();
    let noisy = width > 0;
    for n in 0..steps {
        if let Some(h) = hist.as_mut() {
            h.accumulate(&state.rho, cfg.dt);
            grad_energy += cfg.dt * diagnostics::gradient_energy(&state.rho);
        }
        if noisy {
            gen.increments(n, &mut draws);
        }
        state = step(&state, model, &draws)?;
        min_rho = min_rho.min(state.rho.min());
        if cfg.clamp == ClampPolicy::ClampAndReport && clamp_and_rescale(&mut state) {
            clamp_events += 1;
            log::info!("step {}: clamped negative density and restored mass", state.step);
        }
        max_rho = max_rho.max(state.rho.max());
        let last = n + 1 == steps;
        if (n + 1) % cfg.diagnostics_stride == 0 || last {
            diags.push(StepDiagnostics::of(&state));
        }
        if (n + 1) % cfg.snapshot_stride == 0 || last {
            times.push(state.t);
            frames.push(state.rho.clone());
        }
    }
    let unreliable = min_rho < -10.0 * cfg.dt;
    let mut warnings = model.f.warnings.clone();
    if unreliable {
        warnings.push(format!("min rho = {min_rho:e} below -10 dt; run flagged unreliable"));
    }
    if clamp_events > 0 {
        warnings.push(format!("{clamp_events} clamping events"));
    }
    let kinetic = hist.map(|h| diagnostics::kinetic_report(h, grad_energy, max_rho));
    Ok(TrajectoryRecord {
        seed: cfg.seed,
        config_hash: model.fingerprint(),
        dt: cfg.dt,
        steps,
        snapshots: FieldSeries::new(times, frames)?,
        diagnostics: diags,
        min_rho,
        unreliable,
        clamp_events,
        kinetic,
        warnings,
    })
}

/// `d rho = Laplace rho - div(rho V * rho)`: no noise, no correction.
pub fn mean_field_run(cfg: &SolverConfig) -> Result<TrajectoryRecord> {
    run(&cfg.mean_field())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Trig {
    Cos,
    Sin,
}

/// Real orthonormal eigenbasis of `-Laplace`: index 0 is the constant,
/// then `sqrt2 cos(2 pi k.x)`, `sqrt2 sin(2 pi k.x)` for the half-lattice
/// wavevectors ordered by `|k|^2`.
fn basis_entry(grid: &GridSpec, index: usize) -> Result<Option<([i64; 3], Trig)>> {
    if index == 0 {
        return Ok(None);
    }
    let ks = noise::uv_wavevectors(grid.dim(), grid.dealias_cutoff());
    let slot = (index - 1) / 2;
    match ks.get(slot) {
        Some(k) => Ok(Some((*k, if (index - 1) % 2 == 0 { Trig::Cos } else { Trig::Sin }))),
        None => Err(DkError::invalid(format!(
            "basis index {index} outside the resolved band of {grid} ({} functions)",
            1 + 2 * ks.len()
        ))),
    }
}

pub fn basis_function(grid: GridSpec, index: usize) -> Result<RealField> {
    let entry = basis_entry(&grid, index)?;
    RealField::from_fn(grid, |x| match entry {
        None => 1.0,
        Some((k, trig)) => {
            let phase = 2.0 * PI * k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>();
            std::f64::consts::SQRT_2 * if trig == Trig::Cos { phase.cos() } else { phase.sin() }
        }
    })
}

fn dot(a: &VectorField, b: &VectorField) -> RealField {
    let mut out = RealField::zeros(*a.grid());
    for (x, y) in a.components().iter().zip(b.components()) {
        out = out.zip_map(&product(x, y), |s, t| s + t).expect("same grid");
    }
    out
}

/// `A^{ijk} = int e_i (V * e_j) . grad e_k` by grid quadrature.
pub fn galerkin_coefficient(i: usize, j: usize, k: usize, kernel: &KernelSpec) -> Result<f64> {
    let grid = *kernel.grid();
    let ei = basis_function(grid, i)?;
    let ej = basis_function(grid, j)?;
    let ek = basis_function(grid, k)?;
    let v = kernel.apply(&ej)?;
    let weighted = VectorField::new(v.components().iter().map(|c| product(&ei, c)).collect())?;
    Ok(dot(&weighted, &crate::grid::gradient(&ek)).integrate())
}

/// `-<div(e_i (V * e_j)), e_k>` with the divergence taken pseudo-spectrally.
pub fn galerkin_projection(i: usize, j: usize, k: usize, kernel: &KernelSpec) -> Result<f64> {
    let grid = *kernel.grid();
    let ei = basis_function(grid, i)?;
    let ej = basis_function(grid, j)?;
    let ek = basis_function(grid, k)?;
    let v = kernel.apply(&ej)?;
    let flux = VectorField::new(v.components().iter().map(|c| product(&ei, c)).collect())?;
    let div = crate::grid::divergence(&flux);
    Ok(-product(&div, &ek).integrate())
}
