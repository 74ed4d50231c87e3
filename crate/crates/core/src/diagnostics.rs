//! Mass, entropy, dissipation, L^m norms, kinetic functions and the
//! kinetic measure, functional-inequality audits and L1 distance series.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{DkError, Result};
use crate::grid::{self, FieldSeries, RealField, SpectralField, VectorField};
use crate::kernels::KernelSpec;

/// Entries below this are treated as material negativity.
pub const NEGATIVE_TOLERANCE: f64 = 1e-10;

fn check_nonnegative(rho: &RealField, what: &str) -> Result<()> {
    let min = rho.min();
    if min < -NEGATIVE_TOLERANCE {
        return Err(DkError::Precondition(format!("{what}: density has negative entry {min:e}")));
    }
    Ok(())
}

/// `Psi(xi) = xi log xi - xi`, `Psi(0) = 0`.
pub fn psi(xi: f64) -> f64 {
    if xi <= 0.0 {
        0.0
    } else {
        xi * xi.ln() - xi
    }
}

/// `int Psi(rho)`.
pub fn entropy(rho: &RealField) -> Result<f64> {
    check_nonnegative(rho, "entropy")?;
    Ok(rho.map(psi).integrate())
}

/// `int rho log rho`.
pub fn entropy_log(rho: &RealField) -> Result<f64> {
    check_nonnegative(rho, "entropy")?;
    Ok(rho.map(|x| if x > 0.0 { x * x.ln() } else { 0.0 }).integrate())
}

pub fn sqrt_floor(rho: &RealField) -> RealField {
    rho.map(|x| x.max(0.0).sqrt())
}

/// `int |grad sqrt(rho)|^2`, with negative entries floored to zero.
pub fn dissipation(rho: &RealField) -> f64 {
    grid::gradient(&sqrt_floor(rho)).norm_sq().integrate()
}

/// `int |grad rho|^2`.
pub fn gradient_energy(rho: &RealField) -> f64 {
    grid::gradient(rho).norm_sq().integrate()
}

/// `max |(|grad rho|^2 - 4 rho |grad sqrt rho|^2)|` over points with
/// `rho > 0`, the pointwise form of `|grad rho|^2 = 4 rho |grad sqrt rho|^2`.
pub fn sqrt_gradient_identity_gap(rho: &RealField) -> f64 {
    let g = grid::gradient(rho).norm_sq();
    let s = grid::gradient(&sqrt_floor(rho)).norm_sq();
    rho.values()
        .iter()
        .zip(g.values().iter().zip(s.values()))
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, (a, b))| (a - 4.0 * r * b).abs())
        .fold(0.0, f64::max)
}

pub fn mass(rho: &RealField) -> f64 {
    rho.integrate()
}

/// `(m, ||rho||_m)` for each requested exponent.
pub fn lm_norms(rho: &RealField, ms: &[f64]) -> Result<Vec<(f64, f64)>> {
    ms.iter().map(|&m| Ok((m, rho.lp_norm(m)?))).collect()
}

pub fn l1_distance(a: &RealField, b: &RealField) -> Result<f64> {
    Ok(a.zip_map(b, |x, y| (x - y).abs())?.integrate())
}

/// `(t, ||a(t) - b(t)||_1)` on the common snapshot times.
pub fn l1_series(a: &FieldSeries, b: &FieldSeries) -> Result<Vec<(f64, f64)>> {
    a.check_same_times(b)?;
    a.times()
        .iter()
        .zip(a.fields().iter().zip(b.fields()))
        .map(|(&t, (x, y))| Ok((t, l1_distance(x, y)?)))
        .collect()
}

/// `int int |chi1 - chi2|^2 dxi dx` with `chi = 1_{0 < xi < rho}` sampled
/// at the midpoints of `bins` equal bins on `(0, max rho]`. Agrees with the
/// L1 distance up to one bin width per grid point.
pub fn kinetic_distance(rho1: &RealField, rho2: &RealField, bins: usize) -> Result<f64> {
    rho1.grid().check_same(rho2.grid())?;
    check_nonnegative(rho1, "kinetic_distance")?;
    check_nonnegative(rho2, "kinetic_distance")?;
    if bins == 0 {
        return Err(DkError::invalid("need at least one xi-bin"));
    }
    let top = rho1.max().max(rho2.max());
    if top <= 0.0 {
        return Ok(0.0);
    }
    let w = top / bins as f64;
    // Number of bin midpoints (j + 1/2) w below rho.
    let count = |r: f64| ((r / w + 0.5).floor().max(0.0) as usize).min(bins);
    let cells: usize = rho1
        .values()
        .iter()
        .zip(rho2.values())
        .map(|(&a, &b)| count(a).abs_diff(count(b)))
        .sum();
    Ok(cells as f64 * w * rho1.grid().cell_volume())
}

/// Histogram in `xi` of the kinetic measure `delta(xi - rho) |grad rho|^2`.
///
/// Bins: `(-inf, 2^-L]`, then geometric `(2^-(j+1), 2^-j]` up to 1, then
/// unit bins `(m, m + 1]`, grown on demand. Entries at or below zero land in
/// the first bin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KineticHistogram {
    levels: u32,
    weights: Vec<f64>,
}

impl KineticHistogram {
    pub fn new(levels: u32) -> Self {
        Self {
            levels,
            weights: vec![0.0; levels as usize + 2],
        }
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    fn geometric_bins(&self) -> usize {
        self.levels as usize + 1
    }

    fn bin_of(&self, xi: f64) -> usize {
        let l = self.levels as i32;
        if xi <= 2f64.powi(-l) {
            return 0;
        }
        if xi <= 1.0 {
            // Bin b >= 1 covers (2^(b-1-L), 2^(b-L)].
            let mut b = (xi.log2().ceil() as i32 + l).clamp(1, l) as usize;
            while b > 1 && xi <= 2f64.powi(b as i32 - 1 - l) {
                b -= 1;
            }
            while xi > 2f64.powi(b as i32 - l) {
                b += 1;
            }
            return b;
        }
        let m = xi.ceil() as usize - 1;
        self.geometric_bins() + m - 1
    }

    pub fn add(&mut self, xi: f64, weight: f64) {
        let b = self.bin_of(xi);
        if b >= self.weights.len() {
            self.weights.resize(b + 1, 0.0);
        }
        self.weights[b] += weight;
    }

    /// Adds `dt |grad rho|^2 h^d` at each grid point to the bin of `rho`.
    pub fn accumulate(&mut self, rho: &RealField, dt: f64) {
        let g = grid::gradient(rho).norm_sq();
        let vol = rho.grid().cell_volume();
        for (&r, &w) in rho.values().iter().zip(g.values()) {
            self.add(r, dt * w * vol);
        }
    }

    pub fn merge(&mut self, other: &KineticHistogram) -> Result<()> {
        if other.levels != self.levels {
            return Err(DkError::invalid("histograms with different bin layouts"));
        }
        if other.weights.len() > self.weights.len() {
            self.weights.resize(other.weights.len(), 0.0);
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        Ok(())
    }

    /// `(lo, hi)` of bin `b`.
    pub fn edges(&self, b: usize) -> (f64, f64) {
        let l = self.levels as i32;
        let g = self.geometric_bins();
        if b == 0 {
            (f64::NEG_INFINITY, 2f64.powi(-l))
        } else if b < g {
            (2f64.powi(b as i32 - 1 - l), 2f64.powi(b as i32 - l))
        } else {
            let m = (b - g + 1) as f64;
            (m, m + 1.0)
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mass on `(m, m + 1]`.
    pub fn window_mass(&self, m: usize) -> f64 {
        if m == 0 {
            return self.weights[1..self.geometric_bins()].iter().sum();
        }
        self.weights
            .get(self.geometric_bins() + m - 1)
            .copied()
            .unwrap_or(0.0)
    }

    /// Largest `m` with a nonempty unit window, 0 if none.
    pub fn top_window(&self) -> usize {
        let g = self.geometric_bins();
        (g..self.weights.len())
            .rev()
            .find(|&b| self.weights[b] > 0.0)
            .map_or(0, |b| b - g + 1)
    }

    /// `beta^-1 q([beta/2, beta])` for `beta = 2^-j`, `j = 0..=jmax`.
    pub fn zero_tail(&self, jmax: u32) -> Vec<(f64, f64)> {
        let jmax = jmax.min(self.levels.saturating_sub(1));
        (0..=jmax)
            .map(|j| {
                let beta = 2f64.powi(-(j as i32));
                let b = self.levels as usize - j as usize;
                (beta, self.weights[b] / beta)
            })
            .collect()
    }

    /// `q([m, m + 1])` for `m = 1..=mmax`.
    pub fn infinity_tail(&self, mmax: usize) -> Vec<(usize, f64)> {
        (1..=mmax).map(|m| (m, self.window_mass(m))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,weight\n");
        for b in 0..self.weights.len() {
            let (lo, hi) = self.edges(b);
            let _ = writeln!(s, "{lo:e},{hi:e},{:e}", self.weights[b]);
        }
        s
    }
}

/// Kinetic measure of a trajectory with its two tail functionals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KineticReport {
    pub histogram: KineticHistogram,
    /// `sum_i dt_i int |grad rho(t_i)|^2`, the same sum in grid order.
    pub gradient_energy: f64,
    pub max_rho: f64,
    pub infinity_tail: Vec<(usize, f64)>,
    pub zero_tail: Vec<(f64, f64)>,
}

/// Histogram over snapshots, each weighted by the gap to the next snapshot.
pub fn accumulate_kinetic_measure(series: &FieldSeries, levels: u32) -> KineticReport {
    let mut hist = KineticHistogram::new(levels);
    let mut energy = 0.0;
    let mut max_rho = f64::NEG_INFINITY;
    let times = series.times();
    for (i, rho) in series.fields().iter().enumerate() {
        max_rho = max_rho.max(rho.max());
        let Some(next) = times.get(i + 1) else { break };
        let dt = next - times[i];
        hist.accumulate(rho, dt);
        energy += dt * gradient_energy(rho);
    }
    kinetic_report(hist, energy, max_rho)
}

pub fn kinetic_report(histogram: KineticHistogram, gradient_energy: f64, max_rho: f64) -> KineticReport {
    let mmax = (max_rho.max(1.0).ceil() as usize) + 4;
    let zero = histogram.zero_tail(histogram.levels().min(20));
    KineticReport {
        infinity_tail: histogram.infinity_tail(mmax),
        zero_tail: zero,
        gradient_energy,
        max_rho,
        histogram,
    }
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

fn safe_ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

/// Pointwise magnitude of the tensor of all `j`-th partial derivatives.
pub fn derivative_tensor_norm(f: &RealField, j: usize) -> RealField {
    let d = f.grid().dim();
    let mut layer: Vec<SpectralField> = vec![f.forward()];
    for _ in 0..j {
        layer = layer
            .iter()
            .flat_map(|s| (0..d).map(move |axis| s.partial(axis)))
            .collect();
    }
    let mut acc = RealField::zeros(*f.grid());
    for s in &layer {
        let v = s.inverse();
        acc = acc.zip_map(&v, |a, b| a + b * b).expect("same grid");
    }
    acc.map(f64::sqrt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GnReport {
    /// `||grad^j f||_p`.
    pub lhs: f64,
    /// `||grad^m f||_r^alpha ||f||_q^(1 - alpha)`.
    pub rhs: f64,
    /// `lhs / rhs`, 0 when `lhs = 0`.
    pub ratio: f64,
}

/// Both sides of `||grad^j f||_p <= C ||grad^m f||_r^a ||f||_q^(1-a)`.
#[allow(clippy::too_many_arguments)]
pub fn gn_audit(f: &RealField, j: usize, m: usize, p: f64, q: f64, r: f64, alpha: f64) -> Result<GnReport> {
    let d = f.grid().dim() as f64;
    for (name, e) in [("p", p), ("q", q), ("r", r)] {
        if !(e >= 1.0) {
            return Err(DkError::invalid(format!("exponent {name} = {e} below 1")));
        }
    }
    let lhs_rel = recip(p);
    let rhs_rel = j as f64 / d + (recip(r) - m as f64 / d) * alpha + (1.0 - alpha) * recip(q);
    if (lhs_rel - rhs_rel).abs() > 1e-12 {
        return Err(DkError::invalid(format!(
            "exponent relation violated: 1/p = {lhs_rel} but right side = {rhs_rel}"
        )));
    }
    let lower = if m == 0 { 0.0 } else { j as f64 / m as f64 };
    if !(alpha >= lower && alpha <= 1.0) {
        return Err(DkError::invalid(format!("alpha = {alpha} outside [{lower}, 1]")));
    }
    let lhs = derivative_tensor_norm(f, j).lp_norm(p)?;
    let top = derivative_tensor_norm(f, m).lp_norm(r)?;
    let base = f.lp_norm(q)?;
    let rhs = top.powf(alpha) * base.powf(1.0 - alpha);
    Ok(GnReport {
        lhs,
        rhs,
        ratio: safe_ratio(lhs, rhs),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvolutionAudit {
    /// `||grad f . V * g||_1`.
    pub drift_lhs: f64,
    /// `||grad sqrt f||_2^(d/p + 1) ||f||_1^(1/2 - d/(2p)) ||V||_p ||g||_1`.
    pub drift_rhs: f64,
    pub drift_constant: f64,
    /// `||f (div V) * g||_1`.
    pub divergence_lhs: f64,
    /// `||grad sqrt f||_2^(d/q) ||f||_1^(1 - d/(2q)) ||div V||_q ||g||_1`.
    pub divergence_rhs: f64,
    pub divergence_constant: f64,
}

/// Time-frozen sides of the two convolution estimates behind the drift
/// bounds, with empirical constants `lhs / rhs`.
pub fn convolution_estimate_audit(
    f: &RealField,
    g: &RealField,
    kernel: &KernelSpec,
    p: f64,
    q: f64,
) -> Result<ConvolutionAudit> {
    f.grid().check_same(g.grid())?;
    f.grid().check_same(kernel.grid())?;
    check_nonnegative(f, "convolution audit")?;
    check_nonnegative(g, "convolution audit")?;
    let d = f.grid().dim() as f64;
    let vg = kernel.apply(g)?;
    let grad_f = grid::gradient(f);
    let mut dot = RealField::zeros(*f.grid());
    for (a, b) in grad_f.components().iter().zip(vg.components()) {
        dot = dot.zip_map(&a.zip_map(b, |x, y| x * y)?, |s, t| s + t)?;
    }
    let drift_lhs = dot.lp_norm(1.0)?;
    let div_v = kernel.divergence_of();
    let div_vg = grid::convolve(&div_v, g)?;
    let divergence_lhs = f.zip_map(&div_vg, |x, y| x * y)?.lp_norm(1.0)?;

    let grad_sqrt = grid::gradient(&sqrt_floor(f)).norm_sq().integrate().sqrt();
    let f1 = f.lp_norm(1.0)?;
    let g1 = g.lp_norm(1.0)?;
    let v_p = kernel.lp_norm(p)?;
    let div_q = div_v.inverse().lp_norm(q)?;
    let drift_rhs = grad_sqrt.powf(d * recip(p) + 1.0) * f1.powf(0.5 - d * recip(p) / 2.0) * v_p * g1;
    let divergence_rhs = grad_sqrt.powf(d * recip(q)) * f1.powf(1.0 - d * recip(q) / 2.0) * div_q * g1;
    Ok(ConvolutionAudit {
        drift_lhs,
        drift_rhs,
        drift_constant: safe_ratio(drift_lhs, drift_rhs),
        divergence_lhs,
        divergence_rhs,
        divergence_constant: safe_ratio(divergence_lhs, divergence_rhs),
    })
}

/// One row of an entropy report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyRow {
    pub t: f64,
    pub entropy: f64,
    pub entropy_log: f64,
    pub dissipation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub rows: Vec<EntropyRow>,
    /// `sup_t int Psi(rho(t))`.
    pub entropy_sup: f64,
    /// Trapezoid `int_s^T int |grad sqrt rho|^2`.
    pub dissipation_integral: f64,
}

impl EntropyReport {
    pub fn from_series(series: &FieldSeries) -> Result<Self> {
        let mut rows = Vec::with_capacity(series.len());
        for (&t, rho) in series.times().iter().zip(series.fields()) {
            rows.push(EntropyRow {
                t,
                entropy: entropy(rho)?,
                entropy_log: entropy_log(rho)?,
                dissipation: dissipation(rho),
            });
        }
        Ok(Self::from_rows(rows))
    }

    pub fn from_rows(rows: Vec<EntropyRow>) -> Self {
        let entropy_sup = rows.iter().map(|r| r.entropy).fold(f64::NEG_INFINITY, f64::max);
        let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let w = crate::regularization::trapezoid_weights(&times);
        let dissipation_integral = if rows.len() < 2 {
            0.0
        } else {
            rows.iter().zip(&w).map(|(r, w)| r.dissipation * w).sum()
        };
        Self {
            rows,
            entropy_sup,
            dissipation_integral,
        }
    }

    /// `(sup_t int Psi - (m log m - m)) + int int |grad sqrt rho|^2`. The
    /// shift by the entropy minimum at mass `m` makes the budget nonnegative.
    pub fn budget(&self, mass: f64) -> f64 {
        self.entropy_sup - psi(mass) + self.dissipation_integral
    }

    /// Whether the entropy series never increases (up to `tol`).
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].entropy <= w[0].entropy + tol)
    }
}

/// Squared pointwise magnitude of a vector field, integrated.
pub fn vector_energy(v: &VectorField) -> f64 {
    v.norm_sq().integrate()
}
