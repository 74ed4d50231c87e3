//! Binary snapshots and CSV emitters.
//!
//! Snapshot files start with a 16-byte header: the magic `DKS1`, then `n`,
//! `d` and the frame count as little-endian `u32`. Frames follow as
//! row-major little-endian `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{DkError, Result};
use crate::grid::{GridSpec, RealField};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"DKS1";

pub fn write_snapshots(frames: &[RealField]) -> Result<Vec<u8>> {
    let Some(first) = frames.first() else {
        return Err(DkError::invalid("no frames to write"));
    };
    let grid = *first.grid();
    let mut out = Vec::with_capacity(16 + frames.len() * grid.len() * 8);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        grid.check_same(f.grid())?;
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn read_snapshots(bytes: &[u8]) -> Result<Vec<RealField>> {
    if bytes.len() < 16 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(DkError::Format("missing DKS1 snapshot header".into()));
    }
    let n = read_u32(bytes, 4) as usize;
    let d = read_u32(bytes, 8) as usize;
    let count = read_u32(bytes, 12) as usize;
    let grid = GridSpec::new(d, n).map_err(|e| DkError::Format(format!("snapshot header: {e}")))?;
    let frame = grid.len() * 8;
    if bytes.len() != 16 + count * frame {
        return Err(DkError::Format(format!(
            "snapshot body has {} bytes, header promises {}",
            bytes.len() - 16,
            count * frame
        )));
    }
    (0..count)
        .map(|i| {
            let body = &bytes[16 + i * frame..16 + (i + 1) * frame];
            let values = body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            RealField::new(grid, values).map_err(|e| DkError::Format(format!("frame {i}: {e}")))
        })
        .collect()
}

/// Shortest round-trip representation; non-finite values as `NaN`/`inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:e}")
    }
}

/// CSV with a header row; every cell formatted with [`fmt_f64`].
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}
