//! Bit-stable artifact emission: JSON reports and CSV trajectories, written
//! atomically (temporary file in the target directory, then rename) so a
//! crashed run never leaves a half-written artifact behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mffbsde::ensemble::EnsembleProcess;
use mffbsde::{Error, Result, TimeGrid};
use serde::Serialize;

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Shortest round-trip decimal rendering; '.' decimal separator always.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn mean_std(p: &EnsembleProcess, node: usize) -> (f64, f64) {
    let m = p.particles;
    let mut mean = 0.0;
    for i in 0..m {
        mean += p.at(i, node)[0];
    }
    mean /= m as f64;
    let mut var = 0.0;
    for i in 0..m {
        let d = p.at(i, node)[0] - mean;
        var += d * d;
    }
    (mean, (var / m as f64).sqrt())
}

/// Per-node ensemble mean and standard deviation of the first component of
/// each named process, one CSV row per time node, '\n' line ends.
pub fn write_trajectories(
    path: &Path,
    grid: &TimeGrid,
    columns: &[(&str, &EnsembleProcess)],
) -> Result<()> {
    let mut text = String::from("node,t");
    for (name, _) in columns {
        write!(text, ",mean_{name},std_{name}").unwrap();
    }
    text.push('\n');
    for node in 0..grid.n_nodes() {
        write!(text, "{node},{}", fmt(grid.node(node))).unwrap();
        for (_, p) in columns {
            let (m, s) = mean_std(p, node);
            write!(text, ",{},{}", fmt(m), fmt(s)).unwrap();
        }
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}
