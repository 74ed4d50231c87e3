//! Interaction kernels `V`: construction, mollification, integrability
//! audit and application `V * rho`.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DkError, Result};
use crate::grid::{self, GridSpec, RealField, SpectralField, VectorField};

/// Declared integrability class of a kernel: `V in L^{pstar}_t L^p_x` and
/// `div V in L^{qstar}_t L^q_x`. Infinite exponents are `f64::INFINITY`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelExponents {
    pub p: f64,
    pub pstar: f64,
    pub q: f64,
    pub qstar: f64,
}

impl KernelExponents {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("pstar", self.pstar), ("q", self.q), ("qstar", self.qstar)] {
            if v.is_nan() || v < 1.0 {
                return Err(DkError::invalid(format!("exponent {name} must be >= 1, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    grid: GridSpec,
    components: Vec<SpectralField>,
    exponents: Option<KernelExponents>,
}

impl KernelSpec {
    pub fn new(
        grid: GridSpec,
        components: Vec<SpectralField>,
        exponents: Option<KernelExponents>,
    ) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(DkError::invalid(format!(
                "kernel on {grid} needs {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        for (axis, c) in components.iter().enumerate() {
            grid.check_same(c.grid())?;
            if !c.is_conjugate_symmetric(1e-12) {
                return Err(DkError::invalid(format!(
                    "kernel component {axis} is not conjugate symmetric"
                )));
            }
        }
        if let Some(e) = &exponents {
            e.validate()?;
        }
        Ok(Self {
            grid,
            components,
            exponents,
        })
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            components: (0..grid.dim()).map(|_| SpectralField::zeros(grid)).collect(),
            exponents: Some(KernelExponents {
                p: f64::INFINITY,
                pstar: f64::INFINITY,
                q: f64::INFINITY,
                qstar: f64::INFINITY,
            }),
        }
    }

    /// `V_i(x) = amplitude_i * sin(2 pi k.x)`.
    pub fn single_mode(grid: GridSpec, k: &[i64], amplitude: &[f64]) -> Result<Self> {
        if k.len() != grid.dim() || amplitude.len() != grid.dim() {
            return Err(DkError::invalid("wavevector and amplitude must have d entries"));
        }
        if k.iter().all(|&c| c == 0) {
            return Err(DkError::invalid("single-mode kernel needs a nonzero wavevector"));
        }
        let neg: Vec<i64> = k.iter().map(|c| -c).collect();
        if grid.index_of_wavevector(k).is_none() || grid.index_of_wavevector(&neg).is_none() {
            return Err(DkError::invalid(format!("wavevector {k:?} not resolved on {grid}")));
        }
        let mut components = Vec::with_capacity(grid.dim());
        for &a in amplitude {
            let mut c = SpectralField::zeros(grid);
            c.set(k, Complex64::new(0.0, -0.5 * a))?;
            c.set(&neg, Complex64::new(0.0, 0.5 * a))?;
            components.push(c);
        }
        // Smooth: every integrability class holds.
        let exponents = KernelExponents {
            p: f64::INFINITY,
            pstar: f64::INFINITY,
            q: f64::INFINITY,
            qstar: f64::INFINITY,
        };
        Self::new(grid, components, Some(exponents))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> &[SpectralField] {
        &self.components
    }

    pub fn exponents(&self) -> Option<&KernelExponents> {
        self.exponents.as_ref()
    }

    pub fn with_exponents(mut self, exponents: Option<KernelExponents>) -> Result<Self> {
        if let Some(e) = &exponents {
            e.validate()?;
        }
        self.exponents = exponents;
        Ok(self)
    }

    pub fn is_zero(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.coeffs().iter().all(|z| z.re == 0.0 && z.im == 0.0))
    }

    /// Kernel values on the grid.
    pub fn physical(&self) -> VectorField {
        VectorField::new(self.components.iter().map(SpectralField::inverse).collect())
            .expect("kernel has d components")
    }

    /// `(int |V|^p)^{1/p}` with `|.|` the Euclidean norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        grid::lp_norm(&self.physical().norm_sq().map(f64::sqrt), p)
    }

    /// Nonzero wavevectors and their vector coefficients.
    pub fn modes(&self) -> Vec<([i64; 3], Vec<Complex64>)> {
        (0..self.grid.len())
            .filter_map(|i| {
                let coeffs: Vec<Complex64> = self.components.iter().map(|c| c.coeffs()[i]).collect();
                if coeffs.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                    Some((self.grid.wavevector(i), coeffs))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn apply(&self, rho: &RealField) -> Result<VectorField> {
        apply(self, rho)
    }

    pub fn divergence_of(&self) -> SpectralField {
        divergence_of(self)
    }
}

/// One inequality evaluated by [`check_lps`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub assumption: &'static str,
    pub statement: String,
    pub lhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpsReport {
    pub dim: usize,
    pub a1_pass: bool,
    pub a2_pass: bool,
    pub checks: Vec<InequalityCheck>,
}

impl fmt::Display for LpsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = |b: bool| if b { "pass" } else { "fail" };
        write!(f, "A1 {}, A2 {}", word(self.a1_pass), word(self.a2_pass))
    }
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// `a / b + c / e <= 1` evaluated by cross-multiplication so that dyadic
/// exponents compare exactly. Infinite denominators contribute zero.
fn sum_of_ratios_le_one(a: f64, b: f64, c: f64, e: f64) -> bool {
    match (b.is_infinite(), e.is_infinite()) {
        (true, true) => true,
        (true, false) => c <= e,
        (false, true) => a <= b,
        (false, false) => a * e + c * b <= b * e,
    }
}

/// Audits the integrability exponents against the two Serrin-type
/// assumptions used for well-posedness:
/// `(A1) d/p + 2/p* <= 1, 2 <= p* <= inf, d < p <= inf` and
/// `(A2) d/(2q) + 1/q* <= 1, 1 <= q* <= inf, d/2 < q <= inf`.
pub fn check_lps(d: usize, p: f64, pstar: f64, q: f64, qstar: f64) -> LpsReport {
    let df = d as f64;
    let a1_main = sum_of_ratios_le_one(df, p, 2.0, pstar);
    let a1_time = pstar >= 2.0;
    let a1_space = p > df;
    let a2_main = sum_of_ratios_le_one(df, 2.0 * q, 1.0, qstar);
    let a2_time = qstar >= 1.0;
    let a2_space = 2.0 * q > df;
    let checks = vec![
        InequalityCheck {
            assumption: "A1",
            statement: "d/p + 2/p* <= 1".into(),
            lhs: df * recip(p) + 2.0 * recip(pstar),
            pass: a1_main,
        },
        InequalityCheck {
            assumption: "A1",
            statement: "2 <= p*".into(),
            lhs: pstar,
            pass: a1_time,
        },
        InequalityCheck {
            assumption: "A1",
            statement: "d < p".into(),
            lhs: p,
            pass: a1_space,
        },
        InequalityCheck {
            assumption: "A2",
            statement: "d/(2q) + 1/q* <= 1".into(),
            lhs: df * recip(2.0 * q) + recip(qstar),
            pass: a2_main,
        },
        InequalityCheck {
            assumption: "A2",
            statement: "1 <= q*".into(),
            lhs: qstar,
            pass: a2_time,
        },
        InequalityCheck {
            assumption: "A2",
            statement: "d/2 < q".into(),
            lhs: q,
            pass: a2_space,
        },
    ];
    LpsReport {
        dim: d,
        a1_pass: a1_main && a1_time && a1_space,
        a2_pass: a2_main && a2_time && a2_space,
        checks,
    }
}

/// Audit of a kernel's declared exponents, `None` when it has none.
pub fn audit_kernel(kernel: &KernelSpec) -> Option<LpsReport> {
    kernel
        .exponents()
        .map(|e| check_lps(kernel.grid().dim(), e.p, e.pstar, e.q, e.qstar))
}

/// Declared class of the truncated 2d Biot-Savart kernel: `L^p` only for
/// `p < 2` (we record 3/2), divergence free.
pub const BIOT_SAVART_EXPONENTS: KernelExponents = KernelExponents {
    p: 1.5,
    pstar: f64::INFINITY,
    q: f64::INFINITY,
    qstar: f64::INFINITY,
};

pub fn default_truncation(grid: &GridSpec) -> usize {
    grid.dealias_cutoff()
}

/// Periodic Biot-Savart kernel `V = curl-perp (-Laplace)^{-1}` truncated to
/// `0 < |k|_inf <= truncation`: coefficient `-i k_perp / (2 pi |k|^2)` with
/// `k_perp = (-k2, k1)`, so that `curl (V * omega) = omega` for mean-free
/// `omega`. Slots with a Nyquist component are left empty so
/// the kernel stays real.
pub fn biot_savart(grid: GridSpec, truncation: usize) -> Result<KernelSpec> {
    if grid.dim() != 2 {
        return Err(DkError::invalid(format!(
            "Biot-Savart kernel needs d = 2, got {}",
            grid.dim()
        )));
    }
    if truncation == 0 || truncation > grid.n() / 2 {
        return Err(DkError::invalid(format!(
            "truncation must be in 1..={}, got {truncation}",
            grid.n() / 2
        )));
    }
    let cap = truncation as i64;
    let nyq = -((grid.n() / 2) as i64);
    let coefficient = |k: &[i64], axis: usize| -> Complex64 {
        let (k1, k2) = (k[0], k[1]);
        if (k1 == 0 && k2 == 0) || k1.abs().max(k2.abs()) > cap || k1 == nyq || k2 == nyq {
            return Complex64::new(0.0, 0.0);
        }
        let mag2 = (k1 * k1 + k2 * k2) as f64;
        let perp = if axis == 0 { -k2 } else { k1 } as f64;
        Complex64::new(0.0, -perp / (2.0 * PI * mag2))
    };
    let components = (0..2)
        .map(|axis| SpectralField::from_multiplier(grid, |k| coefficient(k, axis)))
        .collect();
    KernelSpec::new(grid, components, Some(BIOT_SAVART_EXPONENTS))
}

/// Fourier multiplier of the periodic heat-kernel mollifier at scale
/// `gamma`: `exp(-gamma^2 4 pi^2 |k|^2 / 2)`.
pub fn mollifier_multiplier(gamma: f64, k_sq: f64) -> f64 {
    (-gamma * gamma * 4.0 * PI * PI * k_sq / 2.0).exp()
}

/// `V_gamma = V * eta_gamma`.
pub fn mollify(kernel: &KernelSpec, gamma: f64) -> Result<KernelSpec> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(DkError::invalid(format!("mollifier scale must be > 0, got {gamma}")));
    }
    let grid = kernel.grid;
    let components = kernel
        .components
        .iter()
        .map(|c| {
            let mut out = c.clone();
            for (i, z) in out.coeffs_mut().iter_mut().enumerate() {
                *z *= mollifier_multiplier(gamma, grid.wavenumber_sq(i));
            }
            out
        })
        .collect();
    Ok(KernelSpec {
        grid,
        components,
        exponents: kernel.exponents,
    })
}

/// `V * rho`, component-wise.
pub fn apply(kernel: &KernelSpec, rho: &RealField) -> Result<VectorField> {
    kernel.grid.check_same(rho.grid())?;
    grid::convolve_vector(&kernel.components, rho)
}

/// Scalar kernel of `div V`, coefficients `i 2 pi k . V(k)`.
pub fn divergence_of(kernel: &KernelSpec) -> SpectralField {
    SpectralField::divergence(&kernel.components).expect("kernel has d components")
}

/// Piecewise-constant-in-time kernel: the entry with the latest stamp not
/// after `t` is active.
#[derive(Clone, Debug)]
pub struct KernelSchedule {
    entries: Vec<(f64, KernelSpec)>,
}

impl KernelSchedule {
    pub fn constant(kernel: KernelSpec) -> Self {
        Self {
            entries: vec![(f64::NEG_INFINITY, kernel)],
        }
    }

    pub fn new(mut entries: Vec<(f64, KernelSpec)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(DkError::invalid("kernel schedule is empty"));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let grid = *entries[0].1.grid();
        for (_, k) in &entries {
            grid.check_same(k.grid())?;
        }
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(DkError::invalid("duplicate time stamp in kernel schedule"));
        }
        Ok(Self { entries })
    }

    pub fn grid(&self) -> &GridSpec {
        self.entries[0].1.grid()
    }

    pub fn entries(&self) -> &[(f64, KernelSpec)] {
        &self.entries
    }

    pub fn index_at(&self, t: f64) -> usize {
        match self.entries.iter().rposition(|(s, _)| *s <= t) {
            Some(i) => i,
            None => 0,
        }
    }

    pub fn at(&self, t: f64) -> &KernelSpec {
        &self.entries[self.index_at(t)].1
    }

    pub fn mollified(&self, gamma: f64) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|(t, k)| Ok((*t, mollify(k, gamma)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }
}

fn fmt_exponent(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

fn parse_exponent(s: &str) -> Result<f64> {
    match s {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|_| DkError::Format(format!("bad exponent `{s}`"))),
    }
}

/// Plain-text table: one line per nonzero wavevector,
/// `k1 [k2 ..] re1 im1 [re2 im2 ..]`, preceded by `#` header lines carrying
/// the grid and the declared exponents.
pub fn write_table(kernel: &KernelSpec) -> String {
    let grid = kernel.grid;
    let mut out = String::new();
    let _ = writeln!(out, "# dk-sim kernel table dim={} n={}", grid.dim(), grid.n());
    if let Some(e) = kernel.exponents {
        let _ = writeln!(
            out,
            "# exponents p={} pstar={} q={} qstar={}",
            fmt_exponent(e.p),
            fmt_exponent(e.pstar),
            fmt_exponent(e.q),
            fmt_exponent(e.qstar)
        );
    }
    for (k, coeffs) in kernel.modes() {
        let mut fields: Vec<String> = k[..grid.dim()].iter().map(|c| c.to_string()).collect();
        for z in coeffs {
            fields.push(format!("{}", z.re));
            fields.push(format!("{}", z.im));
        }
        let _ = writeln!(out, "{}", fields.join(" "));
    }
    out
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

/// Parses a table written by [`write_table`]. The grid is taken from the
/// header when `grid` is `None`.
pub fn read_table(text: &str, grid: Option<GridSpec>) -> Result<KernelSpec> {
    let mut header_grid = None;
    let mut exponents = None;
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if comment.contains("kernel table") {
                let dim = header_value(comment, "dim").and_then(|v| v.parse().ok());
                let n = header_value(comment, "n").and_then(|v| v.parse().ok());
                if let (Some(dim), Some(n)) = (dim, n) {
                    header_grid = Some(GridSpec::new(dim, n)?);
                }
            } else if comment.trim_start().starts_with("exponents") {
                let get = |key: &str| -> Result<f64> {
                    header_value(comment, key)
                        .ok_or_else(|| DkError::Format(format!("exponent header lacks {key}")))
                        .and_then(parse_exponent)
                };
                exponents = Some(KernelExponents {
                    p: get("p")?,
                    pstar: get("pstar")?,
                    q: get("q")?,
                    qstar: get("qstar")?,
                });
            }
            continue;
        }
        rows.push((lineno + 1, line));
    }
    let grid = match (grid, header_grid) {
        (Some(g), Some(h)) => {
            g.check_same(&h)?;
            g
        }
        (Some(g), None) => g,
        (None, Some(h)) => h,
        (None, None) => return Err(DkError::Format("kernel table has no grid header".into())),
    };
    let d = grid.dim();
    let mut components = vec![SpectralField::zeros(grid); d];
    for (lineno, line) in rows {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 * d {
            return Err(DkError::Format(format!(
                "line {lineno}: expected {} columns, got {}",
                3 * d,
                toks.len()
            )));
        }
        let k = toks[..d]
            .iter()
            .map(|t| t.parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| DkError::Format(format!("line {lineno}: {e}")))?;
        let vals = toks[d..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| DkError::Format(format!("line {lineno}: {e}")))?;
        for axis in 0..d {
            components[axis]
                .set(&k, Complex64::new(vals[2 * axis], vals[2 * axis + 1]))
                .map_err(|e| DkError::Format(format!("line {lineno}: {e}")))?;
        }
    }
    KernelSpec::new(grid, components, exponents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g2(n: usize) -> GridSpec {
        GridSpec::new(2, n).unwrap()
    }

    #[test]
    fn lps_examples() {
        let r = check_lps(2, f64::INFINITY, 2.0, f64::INFINITY, f64::INFINITY);
        assert!(r.a1_pass);
        assert_eq!(r.checks[0].lhs, 1.0);
        let r = check_lps(2, 2.0, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        assert!(!r.a1_pass);
        assert!(!r.checks[2].pass);
        let r = check_lps(2, f64::INFINITY, f64::INFINITY, 2.0, 2.0);
        assert!(r.a2_pass);
        assert_eq!(r.checks[3].lhs, 1.0);
        // Borderline dyadic case is exact.
        let r = check_lps(2, 4.0, 4.0, 1.5, 2.0);
        assert!(r.a1_pass);
        assert!(!r.a2_pass);
        assert_eq!(r.to_string(), "A1 pass, A2 fail");
    }

    #[test]
    fn biot_savart_is_divergence_free() {
        let g = g2(32);
        let v = biot_savart(g, 10).unwrap();
        let div = v.divergence_of();
        let max = div.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(max <= 1e-12, "{max}");
        let phys = grid::divergence(&v.physical());
        assert!(phys.values().iter().all(|x| x.abs() <= 1e-12));
    }

    #[test]
    fn biot_savart_annihilates_constants() {
        let g = g2(16);
        let v = biot_savart(g, default_truncation(&g)).unwrap();
        let u = v.apply(&RealField::constant(g, 3.0)).unwrap();
        assert!(u.max_abs() < 1e-15);
    }

    #[test]
    fn biot_savart_declared_class() {
        let v = biot_savart(g2(16), 5).unwrap();
        let report = audit_kernel(&v).unwrap();
        assert!(!report.a1_pass);
        assert!(report.a2_pass);
        assert_eq!(report.to_string(), "A1 fail, A2 pass");
    }

    #[test]
    fn biot_savart_rejects_other_dimensions() {
        assert!(biot_savart(GridSpec::new(1, 16).unwrap(), 4).is_err());
        assert!(biot_savart(g2(16), 9).is_err());
    }

    #[test]
    fn biot_savart_rotates_a_vorticity_mode() {
        // omega = cos(2 pi x1) -> u = (0, sin(2 pi x1) / (2 pi)).
        let g = g2(16);
        let v = biot_savart(g, 5).unwrap();
        let omega = RealField::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let u = v.apply(&omega).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            assert_abs_diff_eq!(u.component(0).values()[i], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(
                u.component(1).values()[i],
                (2.0 * PI * x[0]).sin() / (2.0 * PI),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn mollify_shrinks_l2_and_converges() {
        let g = g2(32);
        let v = biot_savart(g, 10).unwrap();
        let vg = mollify(&v, 0.1).unwrap();
        assert!(vg.lp_norm(2.0).unwrap() <= v.lp_norm(2.0).unwrap());
        let tiny = mollify(&v, 1e-6).unwrap();
        for (a, b) in tiny.components().iter().zip(v.components()) {
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                assert!((x - y).norm() <= 1e-9);
            }
        }
        assert!(mollify(&v, 0.0).is_err());
    }

    #[test]
    fn mollify_shrinks_lp_norms_of_biot_savart() {
        let g = g2(64);
        let v = biot_savart(g, default_truncation(&g)).unwrap();
        for gamma in [0.05, 0.1, 0.2] {
            let vg = mollify(&v, gamma).unwrap();
            for p in [1.0, 1.5] {
                assert!(vg.lp_norm(p).unwrap() <= v.lp_norm(p).unwrap(), "gamma {gamma} p {p}");
            }
        }
    }

    #[test]
    fn single_mode_apply_closed_form() {
        // V = a sin(2 pi x), rho = 1 + b cos(2 pi x):
        // (V * rho)(x) = a b / 2 * sin(2 pi x).
        let g = GridSpec::new(1, 16).unwrap();
        let (a, b) = (0.7, 0.4);
        let v = KernelSpec::single_mode(g, &[1], &[a]).unwrap();
        let rho = RealField::from_fn(g, |x| 1.0 + b * (2.0 * PI * x[0]).cos()).unwrap();
        let u = v.apply(&rho).unwrap();
        for i in 0..g.len() {
            let x = g.point(i)[0];
            assert_abs_diff_eq!(u.component(0).values()[i], 0.5 * a * b * (2.0 * PI * x).sin(), epsilon = 1e-14);
        }
    }

    #[test]
    fn apply_matches_direct_quadrature_on_8_points() {
        let g = GridSpec::new(1, 8).unwrap();
        let v = KernelSpec::single_mode(g, &[2], &[1.3]).unwrap();
        let v = KernelSpec::new(
            g,
            vec![v.components()[0].add(&KernelSpec::single_mode(g, &[1], &[-0.4]).unwrap().components()[0]).unwrap()],
            None,
        )
        .unwrap();
        let rho = RealField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin() + 0.2 * (6.0 * PI * x[0]).cos()).unwrap();
        let vx = v.physical();
        let out = v.apply(&rho).unwrap();
        for i in 0..8 {
            let mut s = 0.0;
            for j in 0..8 {
                s += vx.component(0).values()[(i + 8 - j) % 8] * rho.values()[j] / 8.0;
            }
            assert_abs_diff_eq!(out.component(0).values()[i], s, epsilon = 1e-14);
        }
    }

    #[test]
    fn apply_then_divergence_matches_divergence_kernel() {
        let g = g2(16);
        let v = mollify(&KernelSpec::single_mode(g, &[1, 2], &[0.5, -0.3]).unwrap(), 0.05).unwrap();
        let rho = RealField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * (x[0] + x[1])).sin()).unwrap();
        let lhs = grid::divergence(&v.apply(&rho).unwrap());
        let rhs = grid::convolve(&v.divergence_of(), &rho).unwrap();
        for (a, b) in lhs.values().iter().zip(rhs.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn young_bound_on_sampled_inputs() {
        let g = g2(32);
        let v = mollify(&biot_savart(g, 10).unwrap(), 0.05).unwrap();
        let vmax = v.lp_norm(f64::INFINITY).unwrap();
        for shift in [0.1, 0.35, 0.6] {
            let rho = RealField::from_fn(g, |x| {
                (-((x[0] - shift).powi(2) + (x[1] - 0.5).powi(2)) / 0.02).exp()
            })
            .unwrap();
            let u = v.apply(&rho).unwrap();
            let unorm = u.norm_sq().map(f64::sqrt).lp_norm(f64::INFINITY).unwrap();
            assert!(unorm <= vmax * rho.lp_norm(1.0).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn apply_rejects_grid_mismatch() {
        let v = biot_savart(g2(16), 5).unwrap();
        assert!(v.apply(&RealField::zeros(g2(32))).is_err());
    }

    #[test]
    fn table_roundtrip() {
        let g = g2(16);
        let v = mollify(&biot_savart(g, 4).unwrap(), 0.1).unwrap();
        let text = write_table(&v);
        assert!(text.lines().nth(2).unwrap().split_whitespace().count() == 6);
        let back = read_table(&text, None).unwrap();
        assert_eq!(back, v);
        assert!(read_table(&text, Some(g2(32))).is_err());
        assert!(read_table("# dk-sim kernel table dim=1 n=8\n1 0.5\n", None).is_err());
    }

    #[test]
    fn schedule_picks_latest_entry() {
        let g = g2(8);
        let a = KernelSpec::zero(g);
        let b = biot_savart(g, 2).unwrap();
        let s = KernelSchedule::new(vec![(0.5, b.clone()), (0.0, a.clone())]).unwrap();
        assert_eq!(s.at(0.1), &a);
        assert_eq!(s.at(0.5), &b);
        assert_eq!(s.at(-1.0), &a);
    }
}
