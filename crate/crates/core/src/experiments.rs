//! Orchestration behind the `dk-sim` subcommands: runs, replica fan-out and
//! the files each experiment leaves in its output directory.
//!
//! Every experiment writes `manifest.toml`, which is the full config echo
//! plus a `[manifest]` table, and can be passed back as `--config`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, MANIFEST_SCHEMA};
use crate::diagnostics::{self, EntropyReport, EntropyRow};
use crate::error::{DkError, Result};
use crate::grid::RealField;
use crate::initial::InitialData;
use crate::io;
use crate::kernels;
use crate::noise;
use crate::particles::{self, ParticleConfig};
use crate::rng::derive_seed;
use crate::solver::{self, Model, SolverConfig, StepDiagnostics, TrajectoryRecord};

/// Seed of replica `r`: the run seed itself for `r = 0`.
pub fn replica_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        derive_seed(seed, "replica", r as u64)
    }
}

/// Collects the files an experiment writes, in order.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        io::write_file(&self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, cfg: &ExperimentConfig, subcommand: &str, warnings: &[String]) -> Result<Vec<String>> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            schema: &'a str,
            version: &'a str,
            subcommand: &'a str,
            config_hash: String,
            seed: i64,
            replicas: usize,
            files: &'a [String],
            warnings: &'a [String],
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            manifest: Manifest<'a>,
        }
        let seed = i64::try_from(cfg.experiment.seed)
            .map_err(|_| DkError::config("seed must fit in a signed 64-bit integer"))?;
        let head = toml::to_string(&Wrapper {
            manifest: Manifest {
                schema: MANIFEST_SCHEMA,
                version: env!("CARGO_PKG_VERSION"),
                subcommand,
                config_hash: cfg.hash(),
                seed,
                replicas: cfg.experiment.replicas,
                files: &self.files,
                warnings,
            },
        })
        .map_err(|e| DkError::Format(e.to_string()))?;
        let text = format!("{}\n{head}", cfg.to_toml());
        self.write("manifest.toml", text)?;
        Ok(self.files)
    }
}

fn entropy_rows(diags: &[StepDiagnostics]) -> Vec<EntropyRow> {
    diags
        .iter()
        .map(|d| EntropyRow {
            t: d.t,
            entropy: d.entropy,
            entropy_log: d.entropy + d.mass,
            dissipation: d.dissipation,
        })
        .collect()
}

fn replica_runs(base: &SolverConfig, replicas: usize) -> Result<Vec<TrajectoryRecord>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut cfg = base.clone();
            cfg.seed = replica_seed(base.seed, r);
            solver::run(&cfg)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSummary {
    pub config_hash: String,
    pub run_fingerprint: String,
    pub replicas: usize,
    pub steps: usize,
    pub initial_mass: f64,
    /// Largest `|mass(t) - mass(0)| / mass(0)` over replicas and rows.
    pub mass_drift: f64,
    pub min_rho: f64,
    pub unreliable: bool,
    pub clamp_events: usize,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

fn replica_name(stem: &str, ext: &str, r: usize) -> String {
    if r == 0 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_r{r}.{ext}")
    }
}

fn kinetic_tails_csv(report: &diagnostics::KineticReport, levels: u32) -> String {
    let mut rows = Vec::new();
    for (beta, v) in report.histogram.zero_tail(levels) {
        rows.push(vec![0.0, beta, v]);
    }
    for (m, v) in &report.infinity_tail {
        rows.push(vec![1.0, *m as f64, *v]);
    }
    // kind 0: beta^-1 q([beta/2, beta]); kind 1: q([m, m + 1]).
    io::csv(&["kind", "x", "value"], rows)
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateSummary> {
    let mut warnings = cfg.validate()?;
    let base = cfg.solver_config()?;
    let model = Model::new(&base)?;
    let records = replica_runs(&base, cfg.experiment.replicas)?;
    let mut outputs = Outputs::new(out)?;
    let m0 = records[0].diagnostics[0].mass;
    let mut mass_drift: f64 = 0.0;
    for (r, rec) in records.iter().enumerate() {
        for d in &rec.diagnostics {
            mass_drift = mass_drift.max(((d.mass - m0) / m0).abs());
        }
        outputs.write(&replica_name("diagnostics", "csv", r), rec.diagnostics_csv())?;
        outputs.write(&replica_name("snapshots", "bin", r), io::write_snapshots(rec.snapshots.fields())?)?;
        if let Some(k) = &rec.kinetic {
            outputs.write(&replica_name("kinetic", "csv", r), k.histogram.to_csv())?;
            outputs.write(
                &replica_name("kinetic_tails", "csv", r),
                kinetic_tails_csv(k, cfg.experiment.tail_levels),
            )?;
        }
        for w in &rec.warnings {
            warnings.push(format!("replica {r}: {w}"));
        }
    }
    let path = noise::sample_path(model.noise(), base.dt, model.steps(), base.seed)?;
    outputs.write("noise_path.toml", path.to_record())?;
    let files = outputs.finish(cfg, "simulate", &warnings)?;
    Ok(SimulateSummary {
        config_hash: cfg.hash(),
        run_fingerprint: records[0].config_hash.clone(),
        replicas: records.len(),
        steps: model.steps(),
        initial_mass: m0,
        mass_drift,
        min_rho: records.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min),
        unreliable: records.iter().any(|r| r.unreliable),
        clamp_events: records.iter().map(|r| r.clamp_events).sum(),
        warnings,
        files,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessRow {
    pub epsilon: f64,
    pub initial_l1: f64,
    pub sup_l1: f64,
    /// `sup_l1 / initial_l1`, `NaN` for identical data.
    pub amplification: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessSummary {
    pub config_hash: String,
    pub rows: Vec<UniquenessRow>,
    /// `sup_l1` of each level over the next one.
    pub ratios: Vec<f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

/// Unit-amplitude bump used as the initial perturbation.
pub fn perturbation(cfg: &ExperimentConfig) -> Result<RealField> {
    let grid = cfg.grid()?;
    let center = cfg
        .experiment
        .perturb_center
        .clone()
        .unwrap_or_else(|| vec![0.5; grid.dim()]);
    InitialData::Bump {
        center,
        width: cfg.experiment.perturb_width,
        amplitude: 1.0,
        base: 0.0,
    }
    .build(grid)
    .map_err(|e| DkError::config(e.to_string()))
}

pub fn uniqueness(cfg: &ExperimentConfig, out: &Path) -> Result<UniquenessSummary> {
    let warnings = cfg.validate()?;
    let base = cfg.solver_config()?;
    let model = Model::new(&base)?;
    let path = noise::sample_path(model.noise(), base.dt, model.steps(), base.seed)?;
    let bump = perturbation(cfg)?;
    let eps = cfg.experiment.perturbations.clone();
    let mut configs = vec![base.clone()];
    for &e in &eps {
        let mut c = base.clone();
        c.initial = base.initial.axpby(1.0, &bump, e)?;
        configs.push(c);
    }
    let runs: Vec<TrajectoryRecord> = configs
        .par_iter()
        .map(|c| solver::run_with_path(c, &path))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut series_rows = Vec::new();
    for (e, run) in eps.iter().zip(&runs[1..]) {
        let series = diagnostics::l1_series(&runs[0].snapshots, &run.snapshots)?;
        let initial_l1 = series[0].1;
        let sup_l1 = series.iter().map(|(_, d)| *d).fold(0.0, f64::max);
        for (t, d) in &series {
            series_rows.push(vec![*e, *t, *d]);
        }
        rows.push(UniquenessRow {
            epsilon: *e,
            initial_l1,
            sup_l1,
            amplification: if initial_l1 > 0.0 { sup_l1 / initial_l1 } else { f64::NAN },
        });
    }
    let ratios = rows.windows(2).map(|w| w[0].sup_l1 / w[1].sup_l1).collect();
    let mut outputs = Outputs::new(out)?;
    outputs.write(
        "uniqueness.csv",
        io::csv(
            &["epsilon", "initial_l1", "sup_l1", "amplification"],
            rows.iter().map(|r| vec![r.epsilon, r.initial_l1, r.sup_l1, r.amplification]),
        ),
    )?;
    outputs.write("uniqueness_series.csv", io::csv(&["epsilon", "t", "l1"], series_rows))?;
    outputs.write("noise_path.toml", path.to_record())?;
    let files = outputs.finish(cfg, "uniqueness", &warnings)?;
    Ok(UniquenessSummary {
        config_hash: cfg.hash(),
        rows,
        ratios,
        warnings,
        files,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderLevel {
    /// `sigma`, `gamma` or `base`.
    pub ladder: String,
    pub value: f64,
    pub sigma_index: usize,
    pub gamma: f64,
    /// `L1` distance at the final time to the next level of the same ladder.
    pub l1_to_next: Option<f64>,
    pub entropy_sup: f64,
    pub dissipation_integral: f64,
    pub budget: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderSummary {
    pub config_hash: String,
    pub levels: Vec<LadderLevel>,
    /// Whether the successive differences never increase, per ladder.
    pub sigma_monotone: bool,
    pub gamma_monotone: bool,
    /// Largest over smallest budget across the gamma ladder.
    pub gamma_budget_ratio: Option<f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

fn non_increasing(levels: &[&LadderLevel]) -> bool {
    let d: Vec<f64> = levels.iter().filter_map(|l| l.l1_to_next).collect();
    d.windows(2).all(|w| w[1] <= w[0])
}

pub fn ladder(cfg: &ExperimentConfig, out: &Path) -> Result<LadderSummary> {
    let warnings = cfg.validate()?;
    let base = cfg.solver_config()?;
    let e = &cfg.experiment;
    let mut plan: Vec<(String, f64, SolverConfig)> = Vec::new();
    for &n in &e.sigma_ladder {
        plan.push(("sigma".into(), n as f64, SolverConfig { sigma_index: n, ..base.clone() }));
    }
    for &g in &e.gamma_ladder {
        plan.push(("gamma".into(), g, SolverConfig { gamma: g, ..base.clone() }));
    }
    if plan.is_empty() {
        plan.push(("base".into(), base.sigma_index as f64, base.clone()));
    }
    let models: Vec<Model> = plan
        .iter()
        .map(|(_, _, c)| Model::new(c).map_err(|e| DkError::config(e.to_string())))
        .collect::<Result<_>>()?;
    let path = noise::sample_path(models[0].noise(), base.dt, models[0].steps(), base.seed)?;
    let runs: Vec<TrajectoryRecord> = models
        .par_iter()
        .map(|m| solver::run_model(m, &path))
        .collect::<Result<_>>()?;
    let mut levels = Vec::with_capacity(plan.len());
    for (i, ((name, value, c), run)) in plan.iter().zip(&runs).enumerate() {
        let report = EntropyReport::from_rows(entropy_rows(&run.diagnostics));
        let mass = run.diagnostics[0].mass;
        let l1_to_next = match plan.get(i + 1) {
            Some((next, _, _)) if next == name => {
                Some(diagnostics::l1_distance(run.final_density(), runs[i + 1].final_density())?)
            }
            _ => None,
        };
        levels.push(LadderLevel {
            ladder: name.clone(),
            value: *value,
            sigma_index: c.sigma_index,
            gamma: c.gamma,
            l1_to_next,
            entropy_sup: report.entropy_sup,
            dissipation_integral: report.dissipation_integral,
            budget: report.budget(mass),
        });
    }
    let of = |name: &str| -> Vec<&LadderLevel> { levels.iter().filter(|l| l.ladder == name).collect() };
    let gammas = of("gamma");
    let gamma_budget_ratio = (!gammas.is_empty()).then(|| {
        let hi = gammas.iter().map(|l| l.budget).fold(f64::NEG_INFINITY, f64::max);
        let lo = gammas.iter().map(|l| l.budget).fold(f64::INFINITY, f64::min);
        hi / lo
    });
    let sigma_monotone = non_increasing(&of("sigma"));
    let gamma_monotone = non_increasing(&gammas);
    let mut outputs = Outputs::new(out)?;
    let mut csv = String::from("ladder,value,sigma_index,gamma,l1_to_next,entropy_sup,dissipation_integral,budget\n");
    for l in &levels {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            l.ladder,
            io::fmt_f64(l.value),
            l.sigma_index,
            io::fmt_f64(l.gamma),
            l.l1_to_next.map_or(String::new(), io::fmt_f64),
            io::fmt_f64(l.entropy_sup),
            io::fmt_f64(l.dissipation_integral),
            io::fmt_f64(l.budget)
        ));
    }
    outputs.write("ladder.csv", csv)?;
    outputs.write("noise_path.toml", path.to_record())?;
    let files = outputs.finish(cfg, "ladder", &warnings)?;
    Ok(LadderSummary {
        config_hash: cfg.hash(),
        levels,
        sigma_monotone,
        gamma_monotone,
        gamma_budget_ratio,
        warnings,
        files,
    })
}

fn particle_setup(cfg: &ExperimentConfig) -> Result<(ParticleConfig, Vec<String>)> {
    let mut warnings = cfg.validate()?;
    let base = cfg.solver_config()?;
    let kernel = kernels::mollify(base.kernel.at(base.t_start), base.gamma)?;
    let mass = base.initial.integrate();
    if (mass - 1.0).abs() > 1e-12 {
        warnings.push(format!("initial density rescaled from mass {mass} to 1"));
    }
    let initial = base.initial.scale(1.0 / mass);
    Ok((
        ParticleConfig {
            kernel,
            initial,
            particles: 0,
            dt: base.dt,
            t_end: base.t_end - base.t_start,
            seed: base.seed,
            replica: 0,
            snapshot_stride: cfg.experiment.particle_snapshot_stride,
        },
        warnings,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ParticleLevel {
    pub particles: usize,
    pub replicas: usize,
    /// Largest `|mean_i (div V)-drift|` seen along the trajectories.
    pub max_divergence_mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParticlesSummary {
    pub config_hash: String,
    pub levels: Vec<ParticleLevel>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

pub fn run_particles(cfg: &ExperimentConfig, out: &Path) -> Result<ParticlesSummary> {
    let (pc, warnings) = particle_setup(cfg)?;
    let grid = cfg.grid()?;
    let bandwidth = cfg.bandwidth()?;
    let mut outputs = Outputs::new(out)?;
    let mut levels = Vec::new();
    for &n in &cfg.experiment.particles {
        let runs: Vec<particles::ParticleRun> = (0..cfg.experiment.replicas)
            .into_par_iter()
            .map(|r| {
                particles::run_particles(&ParticleConfig {
                    particles: n,
                    replica: r as u64,
                    ..pc.clone()
                })
            })
            .collect::<Result<_>>()?;
        let density = particles::empirical_density(&runs[0].final_state, grid, bandwidth)?;
        outputs.write(&format!("density_N{n}.bin"), io::write_snapshots(&[density.field])?)?;
        if !runs[0].snapshots.is_empty() {
            outputs.write(&format!("positions_N{n}.csv"), particles::positions_csv(&runs[0].snapshots))?;
        }
        levels.push(ParticleLevel {
            particles: n,
            replicas: runs.len(),
            max_divergence_mean: runs
                .iter()
                .flat_map(|r| r.divergence_mean.iter().map(|x| x.abs()))
                .fold(0.0, f64::max),
        });
    }
    let files = outputs.finish(cfg, "particles", &warnings)?;
    Ok(ParticlesSummary {
        config_hash: cfg.hash(),
        levels,
        warnings,
        files,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub particles: usize,
    pub mean_l1: f64,
    pub min_l1: f64,
    pub max_l1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub config_hash: String,
    pub rows: Vec<CompareRow>,
    /// Whether `mean_l1` strictly decreases along the particle counts.
    pub decreasing: bool,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

/// Replica-mean `L1` distance between the smoothed empirical density and the
/// mean-field solution at the final time, for each particle count.
pub fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<CompareSummary> {
    let (pc, warnings) = particle_setup(cfg)?;
    let grid = cfg.grid()?;
    let bandwidth = cfg.bandwidth()?;
    let mut mf_cfg = cfg.solver_config()?;
    mf_cfg.initial = pc.initial.clone();
    let mean_field = solver::mean_field_run(&mf_cfg)?;
    let target = mean_field.final_density().clone();
    let mut outputs = Outputs::new(out)?;
    outputs.write("mean_field.bin", io::write_snapshots(&[target.clone()])?)?;
    let mut rows = Vec::new();
    for &n in &cfg.experiment.particles {
        let results: Vec<(f64, RealField)> = (0..cfg.experiment.replicas)
            .into_par_iter()
            .map(|r| {
                let run = particles::run_particles(&ParticleConfig {
                    particles: n,
                    replica: r as u64,
                    snapshot_stride: 0,
                    ..pc.clone()
                })?;
                let density = particles::empirical_density(&run.final_state, grid, bandwidth)?;
                let l1 = diagnostics::l1_distance(&density.field, &target)?;
                let fluct = particles::fluctuation_field(&density, &target, n)?;
                Ok((l1, fluct))
            })
            .collect::<Result<_>>()?;
        let l1s: Vec<f64> = results.iter().map(|(d, _)| *d).collect();
        outputs.write(&format!("fluctuation_N{n}.bin"), io::write_snapshots(&[results[0].1.clone()])?)?;
        rows.push(CompareRow {
            particles: n,
            mean_l1: l1s.iter().sum::<f64>() / l1s.len() as f64,
            min_l1: l1s.iter().cloned().fold(f64::INFINITY, f64::min),
            max_l1: l1s.iter().cloned().fold(0.0, f64::max),
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].mean_l1 < w[0].mean_l1);
    outputs.write(
        "compare.csv",
        io::csv(
            &["particles", "replica_mean_l1", "min_l1", "max_l1"],
            rows.iter().map(|r| vec![r.particles as f64, r.mean_l1, r.min_l1, r.max_l1]),
        ),
    )?;
    let files = outputs.finish(cfg, "compare", &warnings)?;
    Ok(CompareSummary {
        config_hash: cfg.hash(),
        rows,
        decreasing,
        warnings,
        files,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelAuditSummary {
    pub config_hash: String,
    /// `A1 pass|fail, A2 pass|fail`, or `no declared exponents`.
    pub verdict: String,
    pub report: Option<kernels::LpsReport>,
    /// Largest modulus of the spectral divergence of the kernel.
    pub divergence_max: f64,
    pub files: Vec<String>,
}

/// Reads the kernel without running the profile gate, so that a kernel the
/// theory profile would reject can still be audited.
pub fn kernel_audit(cfg: &ExperimentConfig, out: &Path) -> Result<KernelAuditSummary> {
    let kernel = cfg.kernel()?;
    let report = kernels::audit_kernel(&kernel);
    let verdict = report
        .as_ref()
        .map_or_else(|| "no declared exponents".to_string(), |r| r.to_string());
    let divergence_max = kernel
        .divergence_of()
        .coeffs()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let mut outputs = Outputs::new(out)?;
    outputs.write("kernel_table.txt", kernels::write_table(&kernel))?;
    let mut summary = KernelAuditSummary {
        config_hash: cfg.hash(),
        verdict,
        report,
        divergence_max,
        files: Vec::new(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| DkError::Format(e.to_string()))?;
    outputs.write("kernel_audit.json", json)?;
    summary.files = outputs.finish(cfg, "kernel-audit", &[])?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyAuditSummary {
    pub config_hash: String,
    pub non_increasing: bool,
    /// Largest increase of `int Psi` between consecutive rows.
    pub max_increase: f64,
    pub entropy_sup: f64,
    pub dissipation_integral: f64,
    pub budget: f64,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

pub fn entropy_audit(cfg: &ExperimentConfig, out: &Path) -> Result<EntropyAuditSummary> {
    let mut warnings = cfg.validate()?;
    let run = solver::run(&cfg.solver_config()?)?;
    warnings.extend(run.warnings.iter().cloned());
    let report = EntropyReport::from_rows(entropy_rows(&run.diagnostics));
    let max_increase = report
        .rows
        .windows(2)
        .map(|w| w[1].entropy - w[0].entropy)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut outputs = Outputs::new(out)?;
    outputs.write(
        "entropy.csv",
        io::csv(
            &["t", "entropy", "entropy_log", "dissipation"],
            report.rows.iter().map(|r| vec![r.t, r.entropy, r.entropy_log, r.dissipation]),
        ),
    )?;
    let files = outputs.finish(cfg, "entropy-audit", &warnings)?;
    Ok(EntropyAuditSummary {
        config_hash: cfg.hash(),
        non_increasing: report.is_non_increasing(0.0),
        max_increase,
        entropy_sup: report.entropy_sup,
        dissipation_integral: report.dissipation_integral,
        budget: report.budget(run.diagnostics[0].mass),
        warnings,
        files,
    })
}
