//! Plain-text result files: per-trial CSV, summaries and heatmap grids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiments::{FieldComparison, SummaryRow};
use super::trial::TrialResult;
use crate::allocation::Heatmap;
use crate::error::Result;

pub const RESULTS_HEADER: &str =
    "trial,scheme,K,L,M,nmse,iterations,sum_rate_bps_hz,min_sinr_db,max_sinr_db";

pub fn results_csv(rows: &[TrialResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.9e},{},{:.9},{:.6},{:.6}",
            r.trial,
            r.scheme,
            r.users,
            r.layers,
            r.atoms,
            r.nmse,
            r.iterations,
            r.sum_rate,
            r.min_sinr_db(),
            r.max_sinr_db(),
        );
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "scheme,K,L,M,completed,failed,mean_sum_rate_bps_hz,std_sum_rate_bps_hz,mean_nmse,std_nmse,mean_iterations\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.9},{:.9},{:.9e},{:.9e},{:.3}",
            r.scheme,
            r.users,
            r.layers,
            r.atoms,
            r.completed,
            r.failed,
            r.mean_sum_rate,
            r.std_sum_rate,
            r.mean_nmse,
            r.std_nmse,
            r.mean_iterations,
        );
    }
    out
}

pub fn comparison_csv(rows: &[FieldComparison]) -> String {
    let mut out = String::from("scheme,L,near_sum_rate_bps_hz,far_sum_rate_bps_hz,ratio,near_nmse,far_nmse\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.9},{:.9},{:.9},{:.9e},{:.9e}",
            r.scheme, r.layers, r.near_sum_rate, r.far_sum_rate, r.ratio, r.near_nmse, r.far_nmse,
        );
    }
    out
}

/// Two `#` header lines with each axis's range and sample count, then `ny`
/// rows of `nx` energies.
pub fn heatmap_grid(map: &Heatmap<f64>) -> String {
    let g = &map.grid;
    let mut out = format!(
        "# {} {} {}\n# {} {} {}\n",
        g.x_min, g.x_max, g.nx, g.y_min, g.y_max, g.ny
    );
    for iy in 0..g.ny {
        let row: Vec<String> = (0..g.nx).map(|ix| format!("{:.9e}", map.at(ix, iy))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses what [`heatmap_grid`] writes: `(x axis, y axis, rows)`.
pub fn parse_heatmap_grid(text: &str) -> Option<((f64, f64, usize), (f64, f64, usize), Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let mut axis = || -> Option<(f64, f64, usize)> {
        let line = lines.next()?.strip_prefix('#')?;
        let mut it = line.split_whitespace();
        Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?, it.next()?.parse().ok()?))
    };
    let x = axis()?;
    let y = axis()?;
    let rows = lines
        .map(|l| l.split_whitespace().map(|v| v.parse().ok()).collect::<Option<Vec<f64>>>())
        .collect::<Option<Vec<_>>>()?;
    Some((x, y, rows))
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}
