//! Discrete unit-volume torus, spectral differential operators and FFT
//! convolution.
//!
//! Fields are sampled at `x = j / n` per axis, stored row-major with axis 0
//! slowest. Spectral coefficients are normalized so that
//! `f(x) = sum_k c_k exp(i 2 pi k.x)`, i.e. the forward transform divides by
//! the number of points. With that convention the zero mode is the integral
//! of the field and Parseval reads `||f||_2^2 = sum_k |c_k|^2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{DkError, Result};

/// Largest supported dimension. Only d = 1, 2 are exercised.
pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(DkError::InvalidGrid(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(DkError::InvalidGrid(format!(
                "points per axis must be a power of two >= 4, got {n}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Largest per-axis wavenumber kept by the two-thirds rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    /// Flat-index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    /// Physical coordinates of grid point `flat`; unused axes are zero.
    pub fn point(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let h = self.spacing();
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }

    /// Integer wavevector of spectral slot `flat` (FFT ordering, components
    /// in `-n/2..n/2`).
    pub fn wavevector(&self, flat: usize) -> [i64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let half = (self.n / 2) as i64;
        let mut k = [0i64; MAX_DIM];
        for axis in 0..self.dim {
            let i = idx[axis] as i64;
            k[axis] = if i < half { i } else { i - self.n as i64 };
        }
        k
    }

    /// Spectral slot holding wavevector `k`, if every component lies in
    /// `-n/2..n/2`.
    pub fn index_of_wavevector(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let half = (self.n / 2) as i64;
        let mut flat = 0usize;
        for &ki in k {
            if ki < -half || ki >= half {
                return None;
            }
            let slot = if ki < 0 { ki + self.n as i64 } else { ki } as usize;
            flat = flat * self.n + slot;
        }
        Some(flat)
    }

    /// `|k|^2` of slot `flat`.
    pub fn wavenumber_sq(&self, flat: usize) -> f64 {
        let k = self.wavevector(flat);
        k[..self.dim].iter().map(|&c| (c * c) as f64).sum()
    }

    /// True when every component of the slot's wavevector lies within the
    /// two-thirds band.
    pub fn is_dealiased(&self, flat: usize) -> bool {
        let cutoff = self.dealias_cutoff() as i64;
        let k = self.wavevector(flat);
        k[..self.dim].iter().all(|c| c.abs() <= cutoff)
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(DkError::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}d grid with n = {}", self.dim, self.n)
    }
}

type PlanKey = (usize, bool);

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Unnormalized in-place multidimensional transform.
fn transform(grid: &GridSpec, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let outer = grid.len() / (n * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, slot) in line.iter().enumerate() {
                    data[base + j * stride] = *slot;
                }
            }
        }
    }
}

/// Real scalar field on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(DkError::invalid(format!(
                "field has {} values, {grid} needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DkError::invalid(format!("non-finite value at index {pos}")));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    /// Samples `f` at every grid point. `f` receives the first `d`
    /// coordinates.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| f(&grid.point(i)[..grid.dim()]))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Result<RealField> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> RealField {
        self.map(|v| a * v)
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &RealField, b: f64) -> Result<RealField> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    /// Normalized forward transform.
    pub fn forward(&self) -> SpectralField {
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        transform(&self.grid, &mut data, false);
        let scale = 1.0 / self.grid.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        SpectralField {
            grid: self.grid,
            coeffs: data,
        }
    }
}

/// Vector field with one component per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<RealField>,
}

impl VectorField {
    pub fn new(components: Vec<RealField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| DkError::invalid("vector field needs at least one component"))?;
        let grid = *first.grid();
        if components.len() != grid.dim() {
            return Err(DkError::invalid(format!(
                "vector field on {grid} needs {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        for c in &components[1..] {
            grid.check_same(c.grid())?;
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            components: (0..grid.dim()).map(|_| RealField::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[RealField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &RealField {
        &self.components[axis]
    }

    pub fn into_components(self) -> Vec<RealField> {
        self.components
    }

    /// Pointwise Euclidean norm squared.
    pub fn norm_sq(&self) -> RealField {
        let grid = *self.grid();
        let mut out = vec![0.0; grid.len()];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.values()) {
                *o += v * v;
            }
        }
        RealField::from_raw(grid, out)
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.values().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Fourier coefficients of a field, FFT-ordered.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_coefficients(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(DkError::invalid(format!(
                "{} coefficients for {grid}",
                coeffs.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    /// All coefficients equal to `c`; with `c = 1` this is the convolution
    /// identity.
    pub fn constant(grid: GridSpec, c: Complex64) -> Self {
        Self {
            grid,
            coeffs: vec![c; grid.len()],
        }
    }

    /// Coefficients given by a function of the wavevector.
    pub fn from_multiplier(grid: GridSpec, f: impl Fn(&[i64]) -> Complex64) -> Self {
        let coeffs = (0..grid.len())
            .map(|i| f(&grid.wavevector(i)[..grid.dim()]))
            .collect();
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn get(&self, k: &[i64]) -> Option<Complex64> {
        self.grid.index_of_wavevector(k).map(|i| self.coeffs[i])
    }

    pub fn set(&mut self, k: &[i64], value: Complex64) -> Result<()> {
        let idx = self
            .grid
            .index_of_wavevector(k)
            .ok_or_else(|| DkError::invalid(format!("wavevector {k:?} outside {}", self.grid)))?;
        self.coeffs[idx] = value;
        Ok(())
    }

    pub fn zero_mode(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Inverse transform keeping the real part.
    pub fn inverse(&self) -> RealField {
        let mut data = self.coeffs.clone();
        transform(&self.grid, &mut data, true);
        RealField::from_raw(self.grid, data.into_iter().map(|c| c.re).collect())
    }

    /// Inverse transform without discarding the imaginary part.
    pub fn inverse_complex(&self) -> Vec<Complex64> {
        let mut data = self.coeffs.clone();
        transform(&self.grid, &mut data, true);
        data
    }

    /// Sum of squared magnitudes; equals `||f||_2^2` for the field.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let n = self.grid.n;
        (0..self.grid.len()).all(|i| {
            let m = self.grid.multi_index(i);
            let mut j = 0usize;
            for axis in 0..self.grid.dim() {
                j = j * n + (n - m[axis]) % n;
            }
            (self.coeffs[i] - self.coeffs[j].conj()).norm() <= tol
        })
    }

    pub fn scale(&self, a: Complex64) -> SpectralField {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|&c| c * a).collect(),
        }
    }

    pub fn mul(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Zeroes every slot outside the two-thirds band.
    pub fn dealias(&mut self) {
        for i in 0..self.grid.len() {
            if !self.grid.is_dealiased(i) {
                self.coeffs[i] = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Spectral gradient: multiplies slot `k` by `i 2 pi k_axis`. The
    /// Nyquist component along each axis is zeroed.
    pub fn gradient(&self) -> Vec<SpectralField> {
        (0..self.grid.dim())
            .map(|axis| self.partial(axis))
            .collect()
    }

    pub fn partial(&self, axis: usize) -> SpectralField {
        let nyq = -((self.grid.n() / 2) as i64);
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let k = self.grid.wavevector(i)[axis];
                if k == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, 2.0 * PI * k as f64)
                }
            })
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    /// Spectral divergence of a vector of component spectra.
    pub fn divergence(components: &[SpectralField]) -> Result<SpectralField> {
        let first = components
            .first()
            .ok_or_else(|| DkError::invalid("divergence of an empty vector"))?;
        let grid = first.grid;
        if components.len() != grid.dim() {
            return Err(DkError::invalid(format!(
                "divergence needs {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        let mut out = SpectralField::zeros(grid);
        for (axis, comp) in components.iter().enumerate() {
            grid.check_same(&comp.grid)?;
            let d = comp.partial(axis);
            for (o, c) in out.coeffs.iter_mut().zip(d.coeffs) {
                *o += c;
            }
        }
        Ok(out)
    }

    /// Laplacian as the divergence of the gradient, so both routes agree
    /// bit for bit.
    pub fn laplacian(&self) -> SpectralField {
        SpectralField::divergence(&self.gradient()).expect("gradient has d components")
    }
}

/// `int_{T^d} f`, the grid mean times the unit volume.
pub fn integrate(f: &RealField) -> f64 {
    f.values.iter().sum::<f64>() / f.grid.len() as f64
}

/// `||f||_{L^p}` by grid quadrature; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(f: &RealField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(DkError::invalid(format!("L^p exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    if p == 1.0 {
        return Ok(integrate(&f.map(f64::abs)));
    }
    if p == 2.0 {
        return Ok(integrate(&f.map(|v| v * v)).sqrt());
    }
    Ok(integrate(&f.map(|v| v.abs().powf(p))).powf(1.0 / p))
}

pub fn gradient(f: &RealField) -> VectorField {
    let comps = f
        .forward()
        .gradient()
        .iter()
        .map(SpectralField::inverse)
        .collect();
    VectorField { components: comps }
}

pub fn divergence(v: &VectorField) -> RealField {
    let spectra: Vec<SpectralField> = v.components.iter().map(RealField::forward).collect();
    SpectralField::divergence(&spectra)
        .expect("vector field components share a grid")
        .inverse()
}

pub fn laplacian(f: &RealField) -> RealField {
    f.forward().laplacian().inverse()
}

/// Periodic convolution `K * f` with `K` given by its normalized Fourier
/// coefficients.
pub fn convolve(kernel: &SpectralField, f: &RealField) -> Result<RealField> {
    kernel.grid.check_same(&f.grid)?;
    Ok(kernel.mul(&f.forward())?.inverse())
}

/// Component-wise convolution with a vector kernel.
pub fn convolve_vector(kernel: &[SpectralField], f: &RealField) -> Result<VectorField> {
    let f_hat = f.forward();
    let comps = kernel
        .iter()
        .map(|k| Ok(k.mul(&f_hat)?.inverse()))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps)
}

/// Fields sampled on an increasing time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSeries {
    times: Vec<f64>,
    fields: Vec<RealField>,
}

impl FieldSeries {
    pub fn new(times: Vec<f64>, fields: Vec<RealField>) -> Result<Self> {
        if times.len() != fields.len() || times.is_empty() {
            return Err(DkError::invalid(format!(
                "{} times for {} fields",
                times.len(),
                fields.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DkError::invalid("times must be strictly increasing"));
        }
        for f in &fields[1..] {
            fields[0].grid().check_same(f.grid())?;
        }
        Ok(Self { times, fields })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[RealField] {
        &self.fields
    }

    pub fn grid(&self) -> &GridSpec {
        self.fields[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn check_same_times(&self, other: &FieldSeries) -> Result<()> {
        self.grid().check_same(other.grid())?;
        let same = self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if same {
            Ok(())
        } else {
            Err(DkError::TimeGridMismatch(format!(
                "{} vs {} time points",
                self.times.len(),
                other.times.len()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid2(n: usize) -> GridSpec {
        GridSpec::new(2, n).unwrap()
    }

    fn pseudo_random_field(grid: GridSpec, seed: u64) -> RealField {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let values = (0..grid.len())
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        RealField::new(grid, values).unwrap()
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(GridSpec::new(2, 6).is_err());
        assert!(GridSpec::new(2, 2).is_err());
        assert!(GridSpec::new(0, 8).is_err());
        assert!(GridSpec::new(4, 8).is_err());
        let g = grid2(8);
        assert_eq!(g.len(), 64);
        assert_eq!(g.spacing(), 0.125);
    }

    #[test]
    fn wavevector_index_roundtrip() {
        let g = grid2(8);
        for i in 0..g.len() {
            let k = g.wavevector(i);
            assert_eq!(g.index_of_wavevector(&k[..2]), Some(i));
        }
        assert_eq!(g.index_of_wavevector(&[4, 0]), None);
    }

    #[test]
    fn integrate_examples() {
        let g = grid2(8);
        assert_eq!(integrate(&RealField::constant(g, 1.0)), 1.0);
        let s = RealField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        assert_abs_diff_eq!(integrate(&s), 0.0, epsilon = 1e-15);
        let f = pseudo_random_field(g, 3);
        let mut direct = 0.0;
        for v in f.values() {
            direct += v * g.cell_volume();
        }
        assert_abs_diff_eq!(integrate(&f), direct, epsilon = 1e-14);
    }

    #[test]
    fn lp_norm_examples() {
        let g = grid2(16);
        let c = RealField::constant(g, -2.5);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            assert_abs_diff_eq!(lp_norm(&c, p).unwrap(), 2.5, epsilon = 1e-13);
        }
        let s = RealField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        assert_abs_diff_eq!(lp_norm(&s, 2.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-14);
        let f = pseudo_random_field(g, 7);
        let direct: f64 = f.values().iter().map(|v| v.abs().powi(3)).sum::<f64>()
            * g.cell_volume();
        assert_abs_diff_eq!(lp_norm(&f, 3.0).unwrap(), direct.cbrt(), epsilon = 1e-13);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn gradient_of_sine_is_analytic() {
        let g = grid2(16);
        let s = RealField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let grad = gradient(&s);
        for i in 0..g.len() {
            let x = g.point(i);
            assert_abs_diff_eq!(
                grad.component(0).values()[i],
                2.0 * PI * (2.0 * PI * x[0]).cos(),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(grad.component(1).values()[i], 0.0, epsilon = 1e-12);
        }
        let c = gradient(&RealField::constant(g, 3.0));
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Smooth field sampled at two resolutions; centered differences
        // converge at second order towards the spectral gradient.
        let f = |x: &[f64]| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.3 * (4.0 * PI * x[1]).sin();
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let g = grid2(n);
            let field = RealField::from_fn(g, f).unwrap();
            let grad = gradient(&field);
            let h = g.spacing();
            let mut err: f64 = 0.0;
            for i in 0..g.len() {
                let idx = g.multi_index(i);
                let plus = ((idx[0] + 1) % n) * n + idx[1];
                let minus = ((idx[0] + n - 1) % n) * n + idx[1];
                let fd = (field.values()[plus] - field.values()[minus]) / (2.0 * h);
                err = err.max((fd - grad.component(0).values()[i]).abs());
            }
            errs.push(err);
        }
        assert!(errs[0] < 0.1, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "second-order ratio {ratio}");
    }

    #[test]
    fn divergence_examples() {
        let g = grid2(16);
        let s = RealField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let lap = divergence(&gradient(&s));
        for i in 0..g.len() {
            assert_abs_diff_eq!(lap.values()[i], -4.0 * PI * PI * s.values()[i], epsilon = 1e-10);
        }
        let v = VectorField::new(vec![RealField::constant(g, 1.0), RealField::constant(g, -2.0)]).unwrap();
        assert_eq!(divergence(&v).max().abs(), 0.0);
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let fx = |x: &[f64]| (2.0 * PI * x[1]).sin() + (2.0 * PI * (x[0] + x[1])).cos();
        let fy = |x: &[f64]| (4.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin();
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let g = grid2(n);
            let v = VectorField::new(vec![
                RealField::from_fn(g, fx).unwrap(),
                RealField::from_fn(g, fy).unwrap(),
            ])
            .unwrap();
            let div = divergence(&v);
            let h = g.spacing();
            let mut err: f64 = 0.0;
            for i in 0..g.len() {
                let [a, b, _] = g.multi_index(i);
                let at = |a: usize, b: usize| (a % n) * n + (b % n);
                let dx = (v.component(0).values()[at(a + 1, b)]
                    - v.component(0).values()[at(a + n - 1, b)])
                    / (2.0 * h);
                let dy = (v.component(1).values()[at(a, b + 1)]
                    - v.component(1).values()[at(a, b + n - 1)])
                    / (2.0 * h);
                err = err.max((dx + dy - div.values()[i]).abs());
            }
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "{errs:?}");
    }

    #[test]
    fn laplacian_is_divergence_of_gradient_bitwise() {
        let g = grid2(16);
        let f_hat = pseudo_random_field(g, 11).forward();
        let a = f_hat.laplacian();
        let b = SpectralField::divergence(&f_hat.gradient()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convolve_examples() {
        let g = GridSpec::new(1, 8).unwrap();
        let f = pseudo_random_field(g, 5);
        let id = SpectralField::constant(g, Complex64::new(1.0, 0.0));
        let out = convolve(&id, &f).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }

        let mut k = SpectralField::from_multiplier(g, |k| Complex64::new(1.0 / (1.0 + k[0].abs() as f64), 0.3 * k[0] as f64));
        k.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        let zero = convolve(&k, &RealField::constant(g, 4.0)).unwrap();
        assert!(zero.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn convolve_matches_direct_sum_on_small_grid() {
        let g = GridSpec::new(1, 8).unwrap();
        let mut kernel = SpectralField::zeros(g);
        for (k, c) in [(1i64, Complex64::new(0.25, -0.5)), (2, Complex64::new(-0.1, 0.2)), (0, Complex64::new(0.7, 0.0))] {
            kernel.set(&[k], c).unwrap();
            kernel.set(&[-k], c.conj()).unwrap();
        }
        kernel.set(&[-4], Complex64::new(0.05, 0.0)).unwrap();
        let f = pseudo_random_field(g, 9);
        let kx = kernel.inverse();
        let n = g.n();
        let out = convolve(&kernel, &f).unwrap();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += kx.values()[(i + n - j) % n] * f.values()[j] * g.spacing();
            }
            assert_abs_diff_eq!(out.values()[i], s, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_conjugate_symmetry_for_real_fields() {
        let g = grid2(8);
        let f_hat = pseudo_random_field(g, 13).forward();
        assert!(f_hat.is_conjugate_symmetric(1e-14));
    }

    #[test]
    fn dealias_keeps_two_thirds_band() {
        let g = grid2(16);
        let mut s = SpectralField::constant(g, Complex64::new(1.0, 0.0));
        s.dealias();
        let kept = s.coeffs().iter().filter(|c| c.re != 0.0).count();
        assert_eq!(kept, 11 * 11);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field_strategy(grid: GridSpec) -> impl Strategy<Value = RealField> {
            prop::collection::vec(-10.0f64..10.0, grid.len())
                .prop_map(move |v| RealField::new(grid, v).unwrap())
        }

        proptest! {
            #[test]
            fn parseval(f in field_strategy(GridSpec::new(2, 8).unwrap())) {
                let lhs = lp_norm(&f, 2.0).unwrap().powi(2);
                let rhs = f.forward().energy();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
            }

            #[test]
            fn roundtrip(f in field_strategy(GridSpec::new(2, 8).unwrap())) {
                let back = f.forward().inverse();
                for (a, b) in back.values().iter().zip(f.values()) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }

            #[test]
            fn convolve_is_bilinear(
                f in field_strategy(GridSpec::new(1, 16).unwrap()),
                g in field_strategy(GridSpec::new(1, 16).unwrap()),
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
            ) {
                let grid = *f.grid();
                let kernel = SpectralField::from_multiplier(grid, |k| {
                    Complex64::new((-0.1 * (k[0] * k[0]) as f64).exp(), 0.0)
                });
                let lhs = convolve(&kernel, &f.axpby(a, &g, b).unwrap()).unwrap();
                let rhs = convolve(&kernel, &f).unwrap()
                    .axpby(a, &convolve(&kernel, &g).unwrap(), b)
                    .unwrap();
                for (x, y) in lhs.values().iter().zip(rhs.values()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
