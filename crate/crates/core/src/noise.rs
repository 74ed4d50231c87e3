//! Correlated noise `W^F = sum_k f_k B^k`, its correction fields
//! `F1 = sum f_k^2`, `F2 = 1/2 sum grad f_k^2`, `F3 = sum |grad f_k|^2`, and
//! replayable Brownian increments.
//!
//! Each `B^k` is an `R^d`-valued Brownian motion, so the noise flux of mode
//! `k` is `sigma(rho) f_k dB^k`. In one dimension this is the scalar case.
//!
//! Wavenumbers follow the `2 pi k` convention of the unit torus: the mode
//! pair for wavevector `k` is `a_k sin(2 pi k.x)`, `a_k cos(2 pi k.x)` and
//! contributes `a_k^2` to `F1` and `(2 pi |k|)^2 a_k^2` to `F3`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DkError, Result};
use crate::grid::{GridSpec, RealField, SpectralField, VectorField, MAX_DIM};
use crate::rng::{derive_seed, CounterNormals};

/// Tolerance of the standing assumption `div F2 = Laplace F1 / 2 = 0`.
pub const STANDING_ASSUMPTION_TOL: f64 = 1e-10;

/// Modes with more nonzero coefficients than this are multiplied in
/// physical space.
const SPARSE_PRODUCT_LIMIT: usize = 256;

/// One spatial coefficient function `f_k`, held by its nonzero Fourier
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMode {
    spectrum: Vec<(usize, Complex64)>,
    values: RealField,
}

impl NoiseMode {
    fn from_spectrum(grid: GridSpec, spectrum: Vec<(usize, Complex64)>) -> Self {
        let mut dense = SpectralField::zeros(grid);
        for &(i, c) in &spectrum {
            dense.coeffs_mut()[i] += c;
        }
        Self {
            values: dense.inverse(),
            spectrum,
        }
    }

    fn from_field(field: &RealField) -> Self {
        let spectrum = field
            .forward()
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(i, &c)| (i, c))
            .collect();
        Self {
            spectrum,
            values: field.clone(),
        }
    }

    pub fn values(&self) -> &RealField {
        &self.values
    }

    pub fn spectrum(&self) -> &[(usize, Complex64)] {
        &self.spectrum
    }

    fn scaled(&self, a: f64) -> Self {
        Self {
            spectrum: self.spectrum.iter().map(|&(i, c)| (i, c * a)).collect(),
            values: self.values.scale(a),
        }
    }
}

/// Finite mode family `{f_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    grid: GridSpec,
    modes: Vec<NoiseMode>,
    /// Amplitude attached to each mode (for the UV family, `a_k` of its
    /// wavevector).
    amplitudes: Vec<f64>,
    /// Wavevector of each mode when the family was built from one.
    wavevectors: Vec<Option<[i64; MAX_DIM]>>,
}

impl NoiseSpec {
    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            modes: Vec::new(),
            amplitudes: Vec::new(),
            wavevectors: Vec::new(),
        }
    }

    /// General family from sampled band-limited fields.
    pub fn from_fields(grid: GridSpec, fields: &[RealField]) -> Result<Self> {
        let mut modes = Vec::with_capacity(fields.len());
        for f in fields {
            grid.check_same(f.grid())?;
            modes.push(NoiseMode::from_field(f));
        }
        Ok(Self {
            grid,
            amplitudes: vec![1.0; modes.len()],
            wavevectors: vec![None; modes.len()],
            modes,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn wavevectors(&self) -> &[Option<[i64; MAX_DIM]>] {
        &self.wavevectors
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Every mode multiplied by `epsilon` (the small-noise knob).
    pub fn scaled(&self, epsilon: f64) -> Self {
        Self {
            grid: self.grid,
            modes: self.modes.iter().map(|m| m.scaled(epsilon)).collect(),
            amplitudes: self.amplitudes.iter().map(|a| a * epsilon).collect(),
            wavevectors: self.wavevectors.clone(),
        }
    }

    /// `G_axis = sum_k f_k draws[k * d + axis]`, one field per axis.
    pub fn realize(&self, draws: &[f64]) -> Result<Vec<RealField>> {
        let d = self.grid.dim();
        if draws.len() != self.modes.len() * d {
            return Err(DkError::invalid(format!(
                "expected {} draws ({} modes x {d} axes), got {}",
                self.modes.len() * d,
                self.modes.len(),
                draws.len()
            )));
        }
        let mut out = vec![SpectralField::zeros(self.grid); d];
        for (m, mode) in self.modes.iter().enumerate() {
            for axis in 0..d {
                let w = draws[m * d + axis];
                if w == 0.0 {
                    continue;
                }
                let coeffs = out[axis].coeffs_mut();
                for &(i, c) in &mode.spectrum {
                    coeffs[i] += c * w;
                }
            }
        }
        Ok(out.iter().map(SpectralField::inverse).collect())
    }
}

/// Wavevectors `k != 0` with `|k| <= cutoff`, one per `+-k` pair (first
/// nonzero component positive), ordered by `|k|^2` then lexicographically.
pub fn uv_wavevectors(dim: usize, cutoff: usize) -> Vec<[i64; MAX_DIM]> {
    let c = cutoff as i64;
    let mut out = Vec::new();
    let mut k = [0i64; MAX_DIM];
    fn rec(axis: usize, dim: usize, c: i64, k: &mut [i64; MAX_DIM], out: &mut Vec<[i64; MAX_DIM]>) {
        if axis == dim {
            let sq: i64 = k[..dim].iter().map(|x| x * x).sum();
            let first = k[..dim].iter().find(|&&x| x != 0);
            if sq > 0 && sq <= c * c && first.is_some_and(|&x| x > 0) {
                out.push(*k);
            }
            return;
        }
        for v in -c..=c {
            k[axis] = v;
            rec(axis + 1, dim, c, k, out);
        }
        k[axis] = 0;
    }
    rec(0, dim, c, &mut k, &mut out);
    out.sort_by_key(|k| (k.iter().map(|x| x * x).sum::<i64>(), *k));
    out
}

/// Ultraviolet-truncated family: a sin/cos pair of amplitude `a_k` for each
/// wavevector `0 < |k| <= cutoff` (see [`uv_wavevectors`] for the order).
pub fn uv_noise(grid: GridSpec, cutoff: usize, amplitudes: &[f64]) -> Result<NoiseSpec> {
    if cutoff > grid.dealias_cutoff() {
        return Err(DkError::invalid(format!(
            "noise cutoff {cutoff} exceeds the dealiased band {}",
            grid.dealias_cutoff()
        )));
    }
    let ks = uv_wavevectors(grid.dim(), cutoff);
    if amplitudes.len() < ks.len() {
        return Err(DkError::invalid(format!(
            "{} amplitudes for {} wavevectors",
            amplitudes.len(),
            ks.len()
        )));
    }
    let d = grid.dim();
    let mut modes = Vec::with_capacity(2 * ks.len());
    let mut amps = Vec::with_capacity(2 * ks.len());
    let mut wvs = Vec::with_capacity(2 * ks.len());
    for (k, &a) in ks.iter().zip(amplitudes) {
        let neg: Vec<i64> = k[..d].iter().map(|x| -x).collect();
        let ip = grid.index_of_wavevector(&k[..d]).expect("cutoff inside band");
        let im = grid.index_of_wavevector(&neg).expect("cutoff inside band");
        let half = a / 2.0;
        // sin(t) = (e^{it} - e^{-it}) / 2i, cos(t) = (e^{it} + e^{-it}) / 2.
        let sin = vec![(ip, Complex64::new(0.0, -half)), (im, Complex64::new(0.0, half))];
        let cos = vec![(ip, Complex64::new(half, 0.0)), (im, Complex64::new(half, 0.0))];
        modes.push(NoiseMode::from_spectrum(grid, sin));
        modes.push(NoiseMode::from_spectrum(grid, cos));
        amps.extend([a, a]);
        wvs.extend([Some(*k), Some(*k)]);
    }
    Ok(NoiseSpec {
        grid,
        modes,
        amplitudes: amps,
        wavevectors: wvs,
    })
}

/// [`uv_noise`] with the same amplitude on every wavevector.
pub fn uv_noise_uniform(grid: GridSpec, cutoff: usize, amplitude: f64) -> Result<NoiseSpec> {
    let count = uv_wavevectors(grid.dim(), cutoff).len();
    uv_noise(grid, cutoff, &vec![amplitude; count])
}

#[derive(Clone, Debug, PartialEq)]
pub struct FCoefficients {
    pub f1: RealField,
    pub f2: VectorField,
    pub f3: RealField,
    /// `max |div F2|`.
    pub div_f2_residual: f64,
    /// `max |Laplace F1|`.
    pub lap_f1_residual: f64,
    /// Diagnostics raised when the standing assumption fails.
    pub warnings: Vec<String>,
}

impl FCoefficients {
    pub fn zero(grid: GridSpec) -> Self {
        Self {
            f1: RealField::zeros(grid),
            f2: VectorField::zeros(grid),
            f3: RealField::zeros(grid),
            div_f2_residual: 0.0,
            lap_f1_residual: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn standing_assumption_holds(&self) -> bool {
        self.warnings.is_empty()
    }
}

fn accumulate_product(
    grid: &GridSpec,
    a: &[(usize, Complex64)],
    b: &[(usize, Complex64)],
    out: &mut [Complex64],
) {
    let n = grid.n();
    let d = grid.dim();
    for &(ia, ca) in a {
        let ma = grid.multi_index(ia);
        for &(ib, cb) in b {
            let mb = grid.multi_index(ib);
            let mut flat = 0usize;
            for axis in 0..d {
                flat = flat * n + (ma[axis] + mb[axis]) % n;
            }
            out[flat] += ca * cb;
        }
    }
}

fn sparse_partial(grid: &GridSpec, spectrum: &[(usize, Complex64)], axis: usize) -> Vec<(usize, Complex64)> {
    let nyq = -((grid.n() / 2) as i64);
    spectrum
        .iter()
        .filter_map(|&(i, c)| {
            let k = grid.wavevector(i)[axis];
            if k == nyq || k == 0 {
                None
            } else {
                Some((i, c * Complex64::new(0.0, 2.0 * PI * k as f64)))
            }
        })
        .collect()
}

/// Computes `F1`, `F2`, `F3` of a mode family. Products of sparse modes are
/// formed coefficient by coefficient, which keeps cancellations such as
/// `sin^2 + cos^2` exact.
pub fn compute_f(noise: &NoiseSpec) -> FCoefficients {
    let grid = noise.grid;
    let d = grid.dim();
    let mut f1_hat = SpectralField::zeros(grid);
    let mut f3_hat = SpectralField::zeros(grid);
    for mode in &noise.modes {
        if mode.spectrum.len() <= SPARSE_PRODUCT_LIMIT {
            accumulate_product(&grid, &mode.spectrum, &mode.spectrum, f1_hat.coeffs_mut());
            for axis in 0..d {
                let g = sparse_partial(&grid, &mode.spectrum, axis);
                accumulate_product(&grid, &g, &g, f3_hat.coeffs_mut());
            }
        } else {
            let sq = mode.values.map(|v| v * v).forward();
            for (o, c) in f1_hat.coeffs_mut().iter_mut().zip(sq.coeffs()) {
                *o += c;
            }
            let grad = crate::grid::gradient(&mode.values);
            let gsq = grad.norm_sq().forward();
            for (o, c) in f3_hat.coeffs_mut().iter_mut().zip(gsq.coeffs()) {
                *o += c;
            }
        }
    }
    // F1, F3 are sums of squares; clip round-off below zero.
    let f1 = f1_hat.inverse().map(|v| v.max(0.0));
    let f3 = f3_hat.inverse().map(|v| v.max(0.0));
    let f2_hat: Vec<SpectralField> = f1_hat
        .gradient()
        .iter()
        .map(|g| g.scale(Complex64::new(0.5, 0.0)))
        .collect();
    let f2 = VectorField::new(f2_hat.iter().map(SpectralField::inverse).collect())
        .expect("d components");

    let lap_f1_residual = f1_hat
        .laplacian()
        .inverse()
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let div_f2_residual = crate::grid::divergence(&f2)
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut warnings = Vec::new();
    if div_f2_residual > STANDING_ASSUMPTION_TOL {
        warnings.push(format!("div F2 = {div_f2_residual:e} exceeds {STANDING_ASSUMPTION_TOL:e}"));
    }
    if lap_f1_residual > STANDING_ASSUMPTION_TOL {
        warnings.push(format!("Laplace F1 = {lap_f1_residual:e} exceeds {STANDING_ASSUMPTION_TOL:e}"));
    }
    for w in &warnings {
        log::warn!("noise correction fields: {w}");
    }
    FCoefficients {
        f1,
        f2,
        f3,
        div_f2_residual,
        lap_f1_residual,
        warnings,
    }
}

/// Seeded, replayable record of Brownian increments. Increments are never
/// stored; they are regenerated from `(seed, base_dt, step, mode, axis)`.
///
/// A path can be coarsened: the increment of a coarse step is the sum of
/// the `coarsening` consecutive base increments it covers, so runs at `dt`
/// and `dt / 2` can share one Brownian path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub seed: u64,
    pub base_dt: f64,
    pub base_steps: usize,
    pub modes: usize,
    pub dim: usize,
    pub coarsening: usize,
}

/// Persisted schema tag of [`NoisePath`] records.
pub const NOISE_PATH_SCHEMA: &str = "dk-sim/noise-path/1";

#[derive(Serialize, Deserialize)]
struct NoisePathRecord {
    schema: String,
    #[serde(flatten)]
    path: NoisePath,
}

impl NoisePath {
    pub fn dt(&self) -> f64 {
        self.base_dt * self.coarsening as f64
    }

    pub fn steps(&self) -> usize {
        self.base_steps / self.coarsening
    }

    /// A coarser view of the same path.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        let c = self.coarsening * factor;
        if factor == 0 || self.base_steps % c != 0 {
            return Err(DkError::invalid(format!(
                "cannot coarsen {} base steps by {c}",
                self.base_steps
            )));
        }
        Ok(NoisePath {
            coarsening: c,
            ..self.clone()
        })
    }

    pub fn generator(&self) -> PathGenerator {
        PathGenerator {
            path: self.clone(),
            normals: CounterNormals::new(derive_seed(self.seed, "noise", 0)),
            scratch: vec![0.0; self.dim],
        }
    }

    /// Every increment, `[step][mode][axis]` flattened.
    pub fn materialize(&self) -> Vec<f64> {
        let mut g = self.generator();
        let mut out = vec![0.0; self.steps() * self.modes * self.dim];
        for (step, chunk) in out.chunks_mut((self.modes * self.dim).max(1)).enumerate() {
            if self.modes > 0 {
                g.increments(step, chunk);
            }
        }
        out
    }

    pub fn to_record(&self) -> String {
        toml::to_string(&NoisePathRecord {
            schema: NOISE_PATH_SCHEMA.to_string(),
            path: self.clone(),
        })
        .expect("noise path serializes")
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let rec: NoisePathRecord =
            toml::from_str(text).map_err(|e| DkError::Format(format!("noise path record: {e}")))?;
        if rec.schema != NOISE_PATH_SCHEMA {
            return Err(DkError::Format(format!("unknown noise path schema {}", rec.schema)));
        }
        Ok(rec.path)
    }
}

/// Draws increments of a [`NoisePath`].
pub struct PathGenerator {
    path: NoisePath,
    normals: CounterNormals,
    scratch: Vec<f64>,
}

impl PathGenerator {
    /// Fills `out[mode * d + axis]` with the increments of `step`.
    pub fn increments(&mut self, step: usize, out: &mut [f64]) {
        let p = &self.path;
        assert_eq!(out.len(), p.modes * p.dim);
        assert!(step < p.steps(), "step {step} beyond path of {} steps", p.steps());
        out.iter_mut().for_each(|v| *v = 0.0);
        let scale = p.base_dt.sqrt();
        for mode in 0..p.modes {
            for r in 0..p.coarsening {
                let base = (step * p.coarsening + r) as u64;
                self.normals.fill(mode as u64, base, &mut self.scratch);
                for axis in 0..p.dim {
                    out[mode * p.dim + axis] += scale * self.scratch[axis];
                }
            }
        }
    }
}

/// Seeded path for `noise` with `steps` increments of size `dt`.
pub fn sample_path(noise: &NoiseSpec, dt: f64, steps: usize, seed: u64) -> Result<NoisePath> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DkError::invalid(format!("dt must be > 0, got {dt}")));
    }
    Ok(NoisePath {
        seed,
        base_dt: dt,
        base_steps: steps,
        modes: noise.mode_count(),
        dim: noise.grid().dim(),
        coarsening: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g1(n: usize) -> GridSpec {
        GridSpec::new(1, n).unwrap()
    }

    #[test]
    fn uv_single_pair_in_1d() {
        let g = g1(16);
        let noise = uv_noise(g, 1, &[1.0]).unwrap();
        assert_eq!(noise.mode_count(), 2);
        for i in 0..g.len() {
            let x = g.point(i)[0];
            assert_abs_diff_eq!(noise.modes()[0].values().values()[i], (2.0 * PI * x).sin(), epsilon = 1e-15);
            assert_abs_diff_eq!(noise.modes()[1].values().values()[i], (2.0 * PI * x).cos(), epsilon = 1e-15);
        }
        let f = compute_f(&noise);
        for i in 0..g.len() {
            assert_abs_diff_eq!(f.f1.values()[i], 1.0, epsilon = 1e-15);
            assert_eq!(f.f2.component(0).values()[i], 0.0);
            assert_abs_diff_eq!(f.f3.values()[i], 4.0 * PI * PI, epsilon = 1e-12);
        }
        assert!(f.standing_assumption_holds());
    }

    #[test]
    fn uv_family_closed_forms_in_2d() {
        let g = GridSpec::new(2, 32).unwrap();
        let ks = uv_wavevectors(2, 4);
        let amps: Vec<f64> = (0..ks.len()).map(|i| 0.5 + 0.1 * i as f64).collect();
        let noise = uv_noise(g, 4, &amps).unwrap();
        let f = compute_f(&noise);
        let f1: f64 = amps.iter().map(|a| a * a).sum();
        let f3: f64 = ks
            .iter()
            .zip(&amps)
            .map(|(k, a)| 4.0 * PI * PI * ((k[0] * k[0] + k[1] * k[1]) as f64) * a * a)
            .sum();
        for i in 0..g.len() {
            assert_abs_diff_eq!(f.f1.values()[i], f1, epsilon = 1e-12);
            assert_abs_diff_eq!(f.f3.values()[i], f3, epsilon = 1e-9 * f3);
            for c in f.f2.components() {
                assert!(c.values()[i].abs() <= 1e-14);
            }
        }
        assert!(f.div_f2_residual <= 1e-10 && f.lap_f1_residual <= 1e-10);
    }

    #[test]
    fn uv_wavevector_counts() {
        assert_eq!(uv_wavevectors(1, 3).len(), 3);
        // Lattice points with 0 < |k| <= 2 in 2d: 12, half of them kept.
        assert_eq!(uv_wavevectors(2, 2).len(), 6);
    }

    #[test]
    fn uv_rejects_short_amplitudes_and_wide_cutoff() {
        let g = GridSpec::new(2, 16).unwrap();
        assert!(uv_noise(g, 2, &[1.0, 1.0]).is_err());
        assert!(uv_noise(g, 6, &[1.0; 100]).is_err());
    }

    #[test]
    fn unpaired_mode_raises_diagnostic() {
        let g = g1(32);
        let s = RealField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let noise = NoiseSpec::from_fields(g, &[s]).unwrap();
        let f = compute_f(&noise);
        // F2 = 1/2 d/dx sin^2(2 pi x) = pi sin(4 pi x).
        for i in 0..g.len() {
            let x = g.point(i)[0];
            assert_abs_diff_eq!(f.f2.component(0).values()[i], PI * (4.0 * PI * x).sin(), epsilon = 1e-12);
        }
        assert!(!f.standing_assumption_holds());
        assert!(f.lap_f1_residual > 1.0);
    }

    #[test]
    fn scaling_is_quadratic() {
        let g = GridSpec::new(2, 16).unwrap();
        let noise = uv_noise_uniform(g, 2, 0.7).unwrap();
        let a = compute_f(&noise);
        let b = compute_f(&noise.scaled(3.0));
        for i in 0..g.len() {
            assert_abs_diff_eq!(b.f1.values()[i], 9.0 * a.f1.values()[i], epsilon = 1e-12);
            assert_abs_diff_eq!(b.f3.values()[i], 9.0 * a.f3.values()[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn path_replays_bitwise() {
        let g = g1(16);
        let noise = uv_noise_uniform(g, 3, 1.0).unwrap();
        let a = sample_path(&noise, 1e-3, 50, 9).unwrap().materialize();
        let b = sample_path(&noise, 1e-3, 50, 9).unwrap().materialize();
        assert_eq!(a, b);
        let c = sample_path(&noise, 1e-3, 50, 10).unwrap().materialize();
        assert_ne!(a, c);
        assert!(sample_path(&noise, 0.0, 5, 1).is_err());
    }

    #[test]
    fn path_moments() {
        let g = g1(8);
        let noise = uv_noise_uniform(g, 1, 1.0).unwrap();
        let dt = 0.01;
        let steps = 50_000;
        let draws = sample_path(&noise, dt, steps, 123).unwrap().materialize();
        assert_eq!(draws.len(), 100_000);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 4.0 * (dt / n).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn coarsened_path_sums_pairs() {
        let g = GridSpec::new(2, 8).unwrap();
        let noise = uv_noise_uniform(g, 1, 1.0).unwrap();
        let fine = sample_path(&noise, 0.01, 8, 5).unwrap();
        let coarse = fine.coarsen(2).unwrap();
        assert_eq!(coarse.steps(), 4);
        assert_abs_diff_eq!(coarse.dt(), 0.02);
        let f = fine.materialize();
        let c = coarse.materialize();
        let w = fine.modes * fine.dim;
        for step in 0..4 {
            for j in 0..w {
                assert_abs_diff_eq!(c[step * w + j], f[2 * step * w + j] + f[(2 * step + 1) * w + j], epsilon = 1e-15);
            }
        }
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn path_record_roundtrip() {
        let g = g1(8);
        let noise = uv_noise_uniform(g, 2, 1.0).unwrap();
        let p = sample_path(&noise, 2.5e-4, 40, 77).unwrap().coarsen(4).unwrap();
        let text = p.to_record();
        let back = NoisePath::from_record(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.materialize(), p.materialize());
    }

    #[test]
    fn realize_matches_mode_sum() {
        let g = GridSpec::new(2, 16).unwrap();
        let noise = uv_noise_uniform(g, 2, 0.5).unwrap();
        let draws: Vec<f64> = (0..noise.mode_count() * 2).map(|i| (i as f64 * 0.37).sin()).collect();
        let fields = noise.realize(&draws).unwrap();
        for axis in 0..2 {
            for i in 0..g.len() {
                let direct: f64 = noise
                    .modes()
                    .iter()
                    .enumerate()
                    .map(|(m, mode)| mode.values().values()[i] * draws[m * 2 + axis])
                    .sum();
                assert_abs_diff_eq!(fields[axis].values()[i], direct, epsilon = 1e-13);
            }
        }
        assert!(noise.realize(&draws[1..]).is_err());
    }
}
