//! Closed-form initial densities and grid imports.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{DkError, Result};
use crate::grid::{GridSpec, RealField};

/// One Fourier term `cos * cos(2 pi k.x) + sin * sin(2 pi k.x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    Constant {
        value: f64,
    },
    /// `base + amplitude exp(-|x - center|^2 / (2 width^2))`, periodic distance.
    Bump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        base: f64,
    },
    /// `base + sum_i weight_i exp(-|x - c_i|^2 / (2 w_i^2))`.
    Mixture {
        centers: Vec<Vec<f64>>,
        widths: Vec<f64>,
        weights: Vec<f64>,
        base: f64,
    },
    Fourier {
        base: f64,
        terms: Vec<FourierTerm>,
    },
    /// Values read from a snapshot file (last frame) or a plain text file
    /// with one value per grid point in row-major order.
    File {
        path: PathBuf,
    },
}

fn periodic_dist_sq(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| {
            let d = a - b;
            let d = d - d.round();
            d * d
        })
        .sum()
}

fn check_dim(grid: &GridSpec, v: &[f64], what: &str) -> Result<()> {
    if v.len() != grid.dim() {
        return Err(DkError::invalid(format!(
            "{what} has {} coordinates, grid has d = {}",
            v.len(),
            grid.dim()
        )));
    }
    Ok(())
}

impl InitialData {
    pub fn build(&self, grid: GridSpec) -> Result<RealField> {
        match self {
            InitialData::Constant { value } => RealField::new(grid, vec![*value; grid.len()]),
            InitialData::Bump {
                center,
                width,
                amplitude,
                base,
            } => {
                check_dim(&grid, center, "bump center")?;
                if !(*width > 0.0) {
                    return Err(DkError::invalid("bump width must be > 0"));
                }
                RealField::from_fn(grid, |x| {
                    base + amplitude * (-periodic_dist_sq(x, center) / (2.0 * width * width)).exp()
                })
            }
            InitialData::Mixture {
                centers,
                widths,
                weights,
                base,
            } => {
                if centers.len() != widths.len() || centers.len() != weights.len() {
                    return Err(DkError::invalid("mixture needs matching centers, widths and weights"));
                }
                for c in centers {
                    check_dim(&grid, c, "mixture center")?;
                }
                if widths.iter().any(|w| !(*w > 0.0)) {
                    return Err(DkError::invalid("mixture widths must be > 0"));
                }
                RealField::from_fn(grid, |x| {
                    base + centers
                        .iter()
                        .zip(widths.iter().zip(weights))
                        .map(|(c, (w, a))| a * (-periodic_dist_sq(x, c) / (2.0 * w * w)).exp())
                        .sum::<f64>()
                })
            }
            InitialData::Fourier { base, terms } => {
                for t in terms {
                    if t.k.len() != grid.dim() {
                        return Err(DkError::invalid(format!("Fourier term k = {:?} has wrong length", t.k)));
                    }
                }
                RealField::from_fn(grid, |x| {
                    base + terms
                        .iter()
                        .map(|t| {
                            let phase: f64 = t.k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>() * 2.0 * PI;
                            t.cos * phase.cos() + t.sin * phase.sin()
                        })
                        .sum::<f64>()
                })
            }
            InitialData::File { path } => {
                let bytes = std::fs::read(path)?;
                if bytes.starts_with(crate::io::SNAPSHOT_MAGIC) {
                    let snaps = crate::io::read_snapshots(&bytes)?;
                    let last = snaps
                        .into_iter()
                        .last()
                        .ok_or_else(|| DkError::Format("snapshot file has no frames".into()))?;
                    grid.check_same(last.grid())?;
                    Ok(last)
                } else {
                    let text = String::from_utf8(bytes)
                        .map_err(|_| DkError::Format(format!("{} is neither a snapshot nor text", path.display())))?;
                    let values = text
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<f64>().map_err(|_| DkError::Format(format!("bad value `{s}`"))))
                        .collect::<Result<Vec<_>>>()?;
                    RealField::new(grid, values)
                }
            }
        }
    }
}

/// Nonnegative with finite `int rho log rho`.
pub fn has_finite_entropy(rho: &RealField) -> bool {
    rho.min() >= 0.0 && crate::diagnostics::entropy_log(rho).is_ok_and(f64::is_finite)
}
