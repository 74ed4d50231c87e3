//! TOML experiment configuration.
//!
//! One level of `[section]` headers with plain `key = value` lines. Unknown
//! sections and keys are rejected. A `[manifest]` section is accepted and
//! ignored so that a written manifest can be fed back as a config.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DkError, Result};
use crate::grid::{GridSpec, RealField};
use crate::initial::{FourierTerm, InitialData};
use crate::kernels::{self, KernelExponents, KernelSchedule, KernelSpec};
use crate::noise::{self, NoiseSpec};
use crate::solver::{ClampPolicy, Model, SolverConfig};

pub const MANIFEST_SCHEMA: &str = "dk-sim/manifest/1";

fn as_config(e: DkError) -> DkError {
    match e {
        DkError::Config(_) | DkError::Io(_) => e,
        other => DkError::Config(other.to_string()),
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_gamma() -> f64 {
    0.1
}
fn default_sigma_index() -> usize {
    64
}
fn default_stride() -> usize {
    10
}
fn default_diag_stride() -> usize {
    1
}
fn default_replicas() -> usize {
    1
}
fn default_perturbations() -> Vec<f64> {
    vec![1e-2, 5e-3]
}
fn default_particles() -> Vec<usize> {
    vec![1000]
}
fn default_tail_levels() -> u32 {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Zero,
    BiotSavart,
    SingleMode,
    /// Coefficient table as written by `kernels::write_table`.
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Mollification scale.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pstar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qstar: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            kind: KernelKind::Zero,
            truncation: None,
            k: None,
            amplitude: None,
            path: None,
            gamma: default_gamma(),
            p: None,
            pstar: None,
            q: None,
            qstar: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    Uv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub cutoff: usize,
    /// Same amplitude for every wavevector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// One amplitude per wavevector, overrides `amplitude`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default = "yes")]
    pub correction: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            cutoff: 0,
            amplitude: None,
            amplitudes: None,
            epsilon: 1.0,
            correction: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSection {
    #[serde(default = "default_sigma_index")]
    pub index: usize,
}

impl Default for SigmaSection {
    fn default() -> Self {
        Self {
            index: default_sigma_index(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub clamp: ClampPolicy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Constant,
    Bump,
    Mixture,
    Fourier,
    File,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier_k: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier_cos: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier_sin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_diag_stride")]
    pub diagnostics_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic_levels: Option<u32>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            snapshot_stride: default_stride(),
            diagnostics_stride: default_diag_stride(),
            kinetic_levels: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Kernels whose declared exponents fail A1 are rejected.
    Theory,
    /// Such kernels only produce a warning.
    #[default]
    Exploratory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub profile: Profile,
    /// Sizes of the bump added to the initial data by `uniqueness`.
    #[serde(default = "default_perturbations")]
    pub perturbations: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_center: Option<Vec<f64>>,
    #[serde(default = "default_gamma")]
    pub perturb_width: f64,
    /// Regularization indices `n` for `ladder`, run at the configured gamma.
    #[serde(default)]
    pub sigma_ladder: Vec<usize>,
    /// Mollification scales for `ladder`, run at the configured index.
    #[serde(default)]
    pub gamma_ladder: Vec<f64>,
    #[serde(default = "default_particles")]
    pub particles: Vec<usize>,
    /// Smoothing bandwidth of the empirical density; two grid cells if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Keep particle positions every this many steps (0: none).
    #[serde(default)]
    pub particle_snapshot_stride: usize,
    /// Number of dyadic levels reported for the small-value kinetic tail.
    #[serde(default = "default_tail_levels")]
    pub tail_levels: u32,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            replicas: default_replicas(),
            profile: Profile::Exploratory,
            perturbations: default_perturbations(),
            perturb_center: None,
            perturb_width: default_gamma(),
            sigma_ladder: Vec::new(),
            gamma_ladder: Vec::new(),
            particles: default_particles(),
            bandwidth: None,
            particle_snapshot_stride: 0,
            tail_levels: default_tail_levels(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub sigma: SigmaSection,
    pub time: TimeSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing)]
    pub manifest: Option<toml::Table>,
}

fn need<T: Clone>(v: &Option<T>, section: &str, key: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| DkError::config(format!("[{section}] needs `{key}`")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DkError::config(e.message().to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Canonical TOML echo, without any `[manifest]` section.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical echo, leaving out the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        Sha256::digest(c.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.dim, self.grid.n).map_err(as_config)
    }

    fn exponents_override(&self, base: Option<KernelExponents>) -> Option<KernelExponents> {
        let k = &self.kernel;
        if k.p.is_none() && k.pstar.is_none() && k.q.is_none() && k.qstar.is_none() {
            return base;
        }
        let inf = f64::INFINITY;
        let b = base.unwrap_or(KernelExponents {
            p: inf,
            pstar: inf,
            q: inf,
            qstar: inf,
        });
        Some(KernelExponents {
            p: k.p.unwrap_or(b.p),
            pstar: k.pstar.unwrap_or(b.pstar),
            q: k.q.unwrap_or(b.q),
            qstar: k.qstar.unwrap_or(b.qstar),
        })
    }

    /// Unmollified kernel with its declared exponents.
    pub fn kernel(&self) -> Result<KernelSpec> {
        let grid = self.grid()?;
        let k = &self.kernel;
        let spec = match k.kind {
            KernelKind::Zero => KernelSpec::zero(grid),
            KernelKind::BiotSavart => {
                let t = k.truncation.unwrap_or_else(|| kernels::default_truncation(&grid));
                kernels::biot_savart(grid, t)?
            }
            KernelKind::SingleMode => {
                KernelSpec::single_mode(grid, &need(&k.k, "kernel", "k")?, &need(&k.amplitude, "kernel", "amplitude")?)?
            }
            KernelKind::Table => {
                let text = std::fs::read_to_string(need(&k.path, "kernel", "path")?)?;
                kernels::read_table(&text, Some(grid))?
            }
        };
        let exps = self.exponents_override(spec.exponents().copied());
        spec.with_exponents(exps).map_err(as_config)
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        let grid = self.grid()?;
        let n = &self.noise;
        match n.kind {
            NoiseKind::None => Ok(NoiseSpec::empty(grid)),
            NoiseKind::Uv => {
                if let Some(a) = &n.amplitudes {
                    noise::uv_noise(grid, n.cutoff, a)
                } else {
                    noise::uv_noise_uniform(grid, n.cutoff, need(&n.amplitude, "noise", "amplitude")?)
                }
                .map_err(as_config)
            }
        }
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        let s = &self.initial;
        let sec = "initial";
        Ok(match s.kind {
            InitialKind::Constant => InitialData::Constant {
                value: s.value.unwrap_or(1.0),
            },
            InitialKind::Bump => InitialData::Bump {
                center: need(&s.center, sec, "center")?,
                width: need(&s.width, sec, "width")?,
                amplitude: need(&s.amplitude, sec, "amplitude")?,
                base: s.base.unwrap_or(0.0),
            },
            InitialKind::Mixture => InitialData::Mixture {
                centers: need(&s.centers, sec, "centers")?,
                widths: need(&s.widths, sec, "widths")?,
                weights: need(&s.weights, sec, "weights")?,
                base: s.base.unwrap_or(0.0),
            },
            InitialKind::Fourier => {
                let ks = need(&s.fourier_k, sec, "fourier_k")?;
                let zeros = vec![0.0; ks.len()];
                let cos = s.fourier_cos.clone().unwrap_or_else(|| zeros.clone());
                let sin = s.fourier_sin.clone().unwrap_or(zeros);
                if cos.len() != ks.len() || sin.len() != ks.len() {
                    return Err(DkError::config("fourier_k, fourier_cos and fourier_sin differ in length"));
                }
                InitialData::Fourier {
                    base: s.base.unwrap_or(1.0),
                    terms: ks
                        .into_iter()
                        .zip(cos.into_iter().zip(sin))
                        .map(|(k, (cos, sin))| FourierTerm { k, cos, sin })
                        .collect(),
                }
            }
            InitialKind::File => InitialData::File {
                path: need(&s.path, sec, "path")?,
            },
        })
    }

    pub fn initial(&self) -> Result<RealField> {
        let rho = self.initial_data()?.build(self.grid()?).map_err(as_config)?;
        if rho.min() < 0.0 {
            return Err(DkError::config(format!("initial density is negative (min {:e})", rho.min())));
        }
        Ok(rho)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let grid = self.grid()?;
        let initial = self.initial()?;
        let mut cfg = SolverConfig::new(initial);
        cfg.grid = grid;
        cfg.kernel = KernelSchedule::constant(self.kernel()?);
        cfg.noise = self.noise()?;
        cfg.sigma_index = self.sigma.index;
        cfg.gamma = self.kernel.gamma;
        cfg.t_start = self.time.t_start;
        cfg.t_end = self.time.t_end;
        cfg.dt = self.time.dt;
        cfg.seed = self.experiment.seed;
        cfg.epsilon = self.noise.epsilon;
        cfg.clamp = self.time.clamp;
        cfg.snapshot_stride = self.output.snapshot_stride;
        cfg.diagnostics_stride = self.output.diagnostics_stride;
        cfg.correction = self.noise.correction;
        cfg.kinetic_levels = self.output.kinetic_levels;
        Ok(cfg)
    }

    /// Full validation: builds every object a run needs, checks the
    /// stability guard and audits the kernel against the profile. Returns
    /// the warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let cfg = self.solver_config()?;
        let model = Model::new(&cfg).map_err(as_config)?;
        let mut warnings = model.f_coefficients().warnings.clone();
        let e = &self.experiment;
        if e.replicas == 0 {
            return Err(DkError::config("replicas must be >= 1"));
        }
        if e.particles.iter().any(|&n| n == 0) {
            return Err(DkError::config("particle counts must be >= 1"));
        }
        if e.perturbations.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(DkError::config("perturbations must be finite and >= 0"));
        }
        if e.sigma_ladder.iter().any(|&n| n < 2) {
            return Err(DkError::config("sigma_ladder entries must be >= 2"));
        }
        if e.gamma_ladder.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(DkError::config("gamma_ladder entries must lie in (0, 1]"));
        }
        if let Some(bw) = e.bandwidth {
            if !(bw >= cfg.grid.spacing()) {
                return Err(DkError::config(format!(
                    "bandwidth {bw} below the grid spacing {}",
                    cfg.grid.spacing()
                )));
            }
        }
        match kernels::audit_kernel(cfg.kernel.at(cfg.t_start)) {
            Some(report) if !report.a1_pass => {
                let msg = format!("kernel exponents fail A1 ({report})");
                if e.profile == Profile::Theory {
                    return Err(DkError::config(format!("{msg}; not allowed under the theory profile")));
                }
                warnings.push(msg);
            }
            None if e.profile == Profile::Theory => {
                return Err(DkError::config("kernel declares no exponents; the theory profile needs them"));
            }
            _ => {}
        }
        Ok(warnings)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("dk-sim-out"))
    }

    pub fn bandwidth(&self) -> Result<f64> {
        Ok(self.experiment.bandwidth.unwrap_or(2.0 * self.grid()?.spacing()))
    }
}
