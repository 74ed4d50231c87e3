//! Square-root approximants `sigma_n`, the cutoffs `phi_beta`, `zeta_M`,
//! the truncation `h_delta`, the mollifier `kappa` and the metric `D`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{DkError, Result};
use crate::grid::{FieldSeries, GridSpec, RealField};

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3`, clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

pub fn smoothstep_derivative(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (z * p - p0) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// `int_a^b f` with 16-point Gauss-Legendre on `panels` equal panels.
pub fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gl16();
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + h / 2.0;
        s += x.iter().zip(w).map(|(xi, wi)| wi * f(mid + xi * h / 2.0)).sum::<f64>() * h / 2.0;
    }
    s
}

/// `sigma_n(xi) = int_0^xi g_n`, where `g_n = 1/(2 sqrt s)` on `[2/n, n]`,
/// vanishes on `[0, 1/n]` and `[2n, inf)`, and is blended by smoothsteps in
/// between. Since `g_n <= 1/(2 sqrt s)`, `sigma_n(xi) <= sqrt(xi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaFamily {
    n: usize,
    /// `int_{1/n}^{2/n} g_n`.
    low: f64,
    /// `int_n^{2n} g_n`.
    high: f64,
    derivative_sq_sup: f64,
}

/// Envelope constant: `sigma_n(xi) <= SIGMA_ENVELOPE sqrt(xi)` for every `n`.
pub const SIGMA_ENVELOPE: f64 = 2.0;

pub fn sigma(n: usize) -> Result<SigmaFamily> {
    if n < 2 {
        return Err(DkError::invalid(format!("sigma index must be >= 2, got {n}")));
    }
    let nf = n as f64;
    let mut fam = SigmaFamily {
        n,
        low: 0.0,
        high: 0.0,
        derivative_sq_sup: 0.0,
    };
    fam.low = quad(|s| fam.derivative(s), 1.0 / nf, 2.0 / nf, 4);
    fam.high = quad(|s| fam.derivative(s), nf, 2.0 * nf, 4);
    let samples = 4096;
    let lo = 1.0 / nf;
    let sup = (0..=samples)
        .map(|i| fam.derivative(lo + lo * i as f64 / samples as f64).powi(2))
        .fold(0.0f64, f64::max);
    fam.derivative_sq_sup = sup.max(nf / 8.0);
    Ok(fam)
}

impl SigmaFamily {
    pub fn index(&self) -> usize {
        self.n
    }

    pub fn envelope(&self) -> f64 {
        SIGMA_ENVELOPE
    }

    /// `g_n = sigma_n'`.
    pub fn derivative(&self, xi: f64) -> f64 {
        let nf = self.n as f64;
        if xi <= 1.0 / nf || xi >= 2.0 * nf {
            return 0.0;
        }
        let base = 0.5 / xi.sqrt();
        if xi < 2.0 / nf {
            smoothstep((xi - 1.0 / nf) * nf) * base
        } else if xi <= nf {
            base
        } else {
            (1.0 - smoothstep((xi - nf) / nf)) * base
        }
    }

    pub fn value(&self, xi: f64) -> f64 {
        let nf = self.n as f64;
        let a = 1.0 / nf;
        let b = 2.0 / nf;
        if xi <= a {
            0.0
        } else if xi < b {
            quad(|s| self.derivative(s), a, xi, 2)
        } else if xi <= nf {
            self.low + (xi.sqrt() - b.sqrt())
        } else {
            let mid = self.low + (nf.sqrt() - b.sqrt());
            if xi < 2.0 * nf {
                mid + quad(|s| self.derivative(s), nf, xi, 2)
            } else {
                mid + self.high
            }
        }
    }

    /// `sup_xi sigma_n'(xi)^2`.
    pub fn derivative_sq_sup(&self) -> f64 {
        self.derivative_sq_sup
    }

    /// `sup_{[a, b]} |sigma_n' - 1/(2 sqrt xi)|` on `samples + 1` points.
    pub fn c1_deviation(&self, a: f64, b: f64, samples: usize) -> f64 {
        (0..=samples)
            .map(|i| {
                let xi = a + (b - a) * i as f64 / samples as f64;
                (self.derivative(xi) - 0.5 / xi.sqrt()).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Piecewise linear: 0 below `beta/2`, 1 above `beta`.
pub fn phi_beta(beta: f64, xi: f64) -> f64 {
    ((xi - beta / 2.0) * 2.0 / beta).clamp(0.0, 1.0)
}

/// Piecewise linear: 1 below `m`, 0 above `m + 1`.
pub fn zeta_m(m: f64, xi: f64) -> f64 {
    (m + 1.0 - xi).clamp(0.0, 1.0)
}

/// `psi_delta`: smoothstep on `[delta/2, delta]`. `|psi'| <= 15/(4 delta)`.
pub fn psi_delta(delta: f64, xi: f64) -> f64 {
    smoothstep((xi - delta / 2.0) * 2.0 / delta)
}

/// `h_delta(xi) = psi_delta(xi) xi`. Defined for `delta` in `(0, 1]`.
pub fn h_delta(delta: f64, xi: f64) -> f64 {
    psi_delta(delta, xi) * xi
}

pub fn h_delta_derivative(delta: f64, xi: f64) -> f64 {
    let t = (xi - delta / 2.0) * 2.0 / delta;
    smoothstep_derivative(t) * 2.0 / delta * xi + smoothstep(t)
}

/// Trapezoid weights of a time grid (one point gets weight 1).
pub(crate) fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let m = times.len();
    if m == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; m];
    for i in 0..m - 1 {
        let dt = times[i + 1] - times[i];
        w[i] += dt / 2.0;
        w[i + 1] += dt / 2.0;
    }
    w
}

/// `D(f, g) = sum_{k=1}^{kmax} 2^-k r_k / (1 + r_k)` with `r_k` the
/// space-time L1 distance of `h_{1/k}(f)` and `h_{1/k}(g)` (trapezoid in
/// time; a single snapshot uses the spatial norm).
pub fn d_metric(f: &FieldSeries, g: &FieldSeries, kmax: usize) -> Result<f64> {
    f.check_same_times(g)?;
    let w = trapezoid_weights(f.times());
    let mut total = 0.0;
    for k in 1..=kmax {
        let delta = 1.0 / k as f64;
        let mut r = 0.0;
        for ((a, b), wt) in f.fields().iter().zip(g.fields()).zip(&w) {
            let diff = a.zip_map(b, |x, y| (h_delta(delta, x) - h_delta(delta, y)).abs())?;
            r += wt * diff.integrate();
        }
        total += 0.5f64.powi(k as i32) * r / (1.0 + r);
    }
    Ok(total)
}

/// `int_{-1}^{1} exp(-1/(1-t^2)) dt`.
fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| quad(unit_bump, -1.0, 1.0, 64))
}

fn unit_bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// `kappa^{eps,delta}(x, y, xi, eta) = kappa^eps_d(x - y) kappa^delta_1(xi - eta)`
/// with smooth compactly supported bumps of unit mass. The spatial factor
/// is periodized on the unit torus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifierKappa {
    pub eps: f64,
    pub delta: f64,
    pub dim: usize,
}

pub fn kappa(eps: f64, delta: f64, dim: usize) -> Result<MollifierKappa> {
    if !(eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(DkError::invalid(format!("kappa scales must lie in (0, 1), got {eps}, {delta}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(DkError::invalid(format!("dimension {dim} not in 1..=3")));
    }
    Ok(MollifierKappa { eps, delta, dim })
}

impl MollifierKappa {
    /// `kappa^delta_1(eta)`, supported in `[-delta, delta]`.
    pub fn velocity(&self, eta: f64) -> f64 {
        unit_bump(eta / self.delta) / (self.delta * bump_mass())
    }

    /// Periodized `kappa^eps_d(z)`.
    pub fn space(&self, z: &[f64]) -> f64 {
        z.iter()
            .take(self.dim)
            .map(|&zi| {
                let r = zi - zi.round();
                (-1..=1)
                    .map(|m| unit_bump((r + m as f64) / self.eps))
                    .sum::<f64>()
                    / (self.eps * bump_mass())
            })
            .product()
    }

    pub fn eval(&self, x: &[f64], y: &[f64], xi: f64, eta: f64) -> f64 {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.space(&z) * self.velocity(xi - eta)
    }

    /// The spatial factor sampled on a grid, centred at the origin.
    pub fn space_field(&self, grid: GridSpec) -> Result<RealField> {
        if grid.dim() != self.dim {
            return Err(DkError::invalid("grid dimension differs from kappa dimension"));
        }
        RealField::from_fn(grid, |x| self.space(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const NS: [usize; 4] = [4, 16, 64, 256];

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / (2 * m) as f64;
        let mut s = f(a) + f(b);
        for i in 1..2 * m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let i30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert_abs_diff_eq!(i30, 2.0 / 31.0, epsilon = 1e-14);
    }

    #[test]
    fn sigma_rejects_small_index() {
        assert!(sigma(1).is_err());
        assert!(sigma(2).is_ok());
    }

    #[test]
    fn sigma_vanishes_at_zero() {
        for n in [2, 4, 16, 64, 256] {
            let s = sigma(n).unwrap();
            assert_eq!(s.value(0.0), 0.0);
            assert_eq!(s.value(-1.0), 0.0);
        }
    }

    #[test]
    fn sigma_envelope() {
        for n in NS {
            let s = sigma(n).unwrap();
            for i in 1..=4000 {
                let xi = 4.0 * n as f64 * i as f64 / 4000.0;
                assert!(s.value(xi) <= 2.0 * xi.sqrt());
                assert!(s.value(xi) >= 0.0);
            }
        }
    }

    #[test]
    fn sigma_uniform_ratio_bound() {
        let mut worst = 0.0f64;
        for n in NS {
            let s = sigma(n).unwrap();
            for i in 1..=20_000 {
                let xi = 1e3 * (i as f64 / 20_000.0).powi(3);
                worst = worst.max(s.value(xi) / xi.sqrt());
            }
        }
        assert!(worst <= SIGMA_ENVELOPE, "{worst}");
    }

    #[test]
    fn sigma_matches_sqrt_drift_on_plateau() {
        for n in NS {
            let s = sigma(n).unwrap();
            let a = 2.0 / n as f64;
            for i in 0..=50 {
                let xi = a + (n as f64 / 2.0 - a) * i as f64 / 50.0;
                let closed = xi.sqrt() - a.sqrt();
                assert_abs_diff_eq!(s.value(xi) - s.value(a), closed, epsilon = 1e-8);
                // Substituting t = u^2 removes the 1/sqrt singularity.
                let quadrature =
                    simpson(|u| s.derivative(u * u) * 2.0 * u, a.sqrt(), xi.sqrt(), 2000);
                assert_abs_diff_eq!(quadrature, closed, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn sigma_value_is_integral_of_derivative() {
        let s = sigma(16).unwrap();
        for xi in [0.07, 0.1, 0.12, 1.0, 20.0, 31.9, 40.0] {
            let oracle = simpson(|t| s.derivative(t), 0.0, xi, 40_000);
            assert_abs_diff_eq!(s.value(xi), oracle, epsilon = 1e-7);
        }
    }

    #[test]
    fn sigma_derivative_compact_support() {
        for n in NS {
            let s = sigma(n).unwrap();
            let nf = n as f64;
            assert_eq!(s.derivative(0.5 / nf), 0.0);
            assert_eq!(s.derivative(2.0 * nf), 0.0);
            assert_eq!(s.derivative(10.0 * nf), 0.0);
            assert!(s.derivative(1.5 / nf) > 0.0);
        }
    }

    #[test]
    fn uniform_b2_bound() {
        let delta = 0.1;
        let mut per_n = Vec::new();
        for n in NS {
            let s = sigma(n).unwrap();
            let mut worst = 0.0f64;
            for i in 0..=20_000 {
                let xi = delta + (1e3 - delta) * (i as f64 / 20_000.0).powi(2);
                let d = s.derivative(xi);
                worst = worst.max(d.powi(4) + (s.value(xi) * d).powi(2));
            }
            per_n.push(worst);
        }
        // c_delta = 1/(16 delta^2) + 1/4 from g <= 1/(2 sqrt xi), sigma <= sqrt xi.
        let c_delta = 1.0 / (16.0 * delta * delta) + 0.25;
        for w in per_n {
            assert!(w <= c_delta, "{w}");
        }
    }

    #[test]
    fn c1_deviation_non_increasing_and_zero_on_plateau() {
        let (a, b) = (0.1, 10.0);
        let devs: Vec<f64> = NS.iter().map(|&n| sigma(n).unwrap().c1_deviation(a, b, 20_000)).collect();
        for w in devs.windows(2) {
            assert!(w[1] <= w[0], "{devs:?}");
            if w[1] > 0.0 {
                assert!(w[1] < w[0]);
            }
        }
        for (&n, &dev) in NS.iter().zip(&devs) {
            if 2.0 / n as f64 <= a && b <= n as f64 {
                assert_eq!(dev, 0.0, "n = {n}");
            } else {
                assert!(dev > 0.0);
            }
        }
    }

    #[test]
    fn cutoffs() {
        let beta = 0.3;
        assert_eq!(phi_beta(beta, beta), 1.0);
        assert_eq!(phi_beta(beta, beta / 2.0), 0.0);
        assert_abs_diff_eq!(phi_beta(beta, 0.75 * beta), 0.5, epsilon = 1e-15);
        let m = 5.0;
        assert_eq!(zeta_m(m, m), 1.0);
        assert_eq!(zeta_m(m, m + 1.0), 0.0);
        assert_eq!(zeta_m(m, m + 0.5), 0.5);
    }

    #[test]
    fn h_delta_examples() {
        for delta in [0.01, 0.2, 0.7, 1.0] {
            assert_eq!(h_delta(delta, 2.0 * delta), 2.0 * delta);
            assert_eq!(h_delta(delta, delta / 4.0), 0.0);
            let v = h_delta(delta, 0.75 * delta);
            assert!((0.0..=0.75 * delta).contains(&v));
        }
    }

    #[test]
    fn psi_derivative_constant() {
        let delta = 0.1;
        let sup = (0..=10_000)
            .map(|i| {
                let xi = delta / 2.0 + delta / 2.0 * i as f64 / 10_000.0;
                smoothstep_derivative((xi - delta / 2.0) * 2.0 / delta) * 2.0 / delta
            })
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(sup * delta, 15.0 / 4.0, epsilon = 1e-9);
        // h_delta' = psi' xi + psi stays bounded independently of delta.
        for delta in [1e-3, 0.1, 0.9] {
            for i in 0..=1000 {
                let xi = 2.0 * delta * i as f64 / 1000.0;
                let h = h_delta_derivative(delta, xi);
                assert!((0.0..=15.0 / 4.0 + 1.0).contains(&h));
            }
        }
    }

    #[test]
    fn bump_normalization() {
        // Literature value of int_{-1}^1 exp(-1/(1-t^2)) dt.
        assert_abs_diff_eq!(bump_mass(), 0.443_993_816_168_079_4, epsilon = 1e-12);
        let k = kappa(0.2, 0.05, 1).unwrap();
        let m = simpson(|e| k.velocity(e), -0.05, 0.05, 20_000);
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-9);
        assert_eq!(k.velocity(0.05), 0.0);
        assert_eq!(k.velocity(-0.06), 0.0);
        assert!(k.velocity(0.049) > 0.0);
        assert!(kappa(0.0, 0.1, 1).is_err());
        assert!(kappa(0.1, 1.0, 1).is_err());
    }

    #[test]
    fn kappa_tensor_mass() {
        let k = kappa(0.3, 0.2, 2).unwrap();
        let x = [0.1, 0.95];
        let xi = 0.5;
        let m = 200;
        let h = 1.0 / m as f64;
        let mut space = 0.0;
        for i in 0..m {
            for j in 0..m {
                let y = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                space += k.space(&[x[0] - y[0], x[1] - y[1]]) * h * h;
            }
        }
        let vel = simpson(|eta| k.velocity(xi - eta), xi - 0.2, xi + 0.2, 4000);
        assert_abs_diff_eq!(space * vel, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(k.eval(&x, &x, xi, xi), k.space(&[0.0, 0.0]) * k.velocity(0.0), epsilon = 1e-12);
    }

    fn series(values: &[Vec<f64>]) -> FieldSeries {
        let g = GridSpec::new(1, 8).unwrap();
        let times: Vec<f64> = (0..values.len()).map(|i| i as f64 * 0.1).collect();
        let fields = values.iter().map(|v| RealField::new(g, v.clone()).unwrap()).collect();
        FieldSeries::new(times, fields).unwrap()
    }

    #[test]
    fn d_metric_basic() {
        let f = series(&[vec![1.0; 8], vec![0.5; 8]]);
        let g = series(&[vec![0.0; 8], vec![2.0; 8]]);
        assert_eq!(d_metric(&f, &f, 10).unwrap(), 0.0);
        let a = d_metric(&f, &g, 10).unwrap();
        assert_eq!(a, d_metric(&g, &f, 10).unwrap());
        assert!(a > 0.0 && a <= 1.0 - 0.5f64.powi(10));
        let short = series(&[vec![1.0; 8]]);
        assert!(matches!(d_metric(&f, &short, 3), Err(DkError::TimeGridMismatch(_))));
    }

    fn vec8() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0f64..3.0, 8), 3)
    }

    proptest! {
        #[test]
        fn d_metric_triangle(a in vec8(), b in vec8(), c in vec8()) {
            let (f, g, h) = (series(&a), series(&b), series(&c));
            let fg = d_metric(&f, &g, 8).unwrap();
            let gh = d_metric(&g, &h, 8).unwrap();
            let fh = d_metric(&f, &h, 8).unwrap();
            prop_assert!(fh <= fg + gh + 1e-12);
            prop_assert!(fg <= 1.0 - 0.5f64.powi(8) + 1e-15);
        }

        #[test]
        fn h_delta_between_zero_and_identity(delta in 1e-3f64..1.0, xi in 0.0f64..5.0) {
            let h = h_delta(delta, xi);
            prop_assert!(h >= 0.0 && h <= xi);
        }
    }
}
