//! Trajectory files and plain column data.
//!
//! A trajectory file starts with `# ljform trajectory n=<N> d=<d>` and a
//! column comment, then one whitespace-separated record per snapshot:
//! time, positions (row-major), velocities, total/kinetic/potential energy,
//! min distance, gradient norm. Numbers carry 17 significant digits, which
//! is enough for every `f64` to parse back to the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ljform::integrate::{Diagnostics, Snapshot, Trajectory};
use ljform::model::Configuration;

use crate::error::{CliError, Result};

const MAGIC: &str = "# ljform trajectory";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> std::io::Result<()> {
    let first = &traj.first().config;
    let (n, d) = (first.len(), first.dimension());
    writeln!(w, "{MAGIC} n={n} d={d}")?;
    writeln!(
        w,
        "# t x[{n}x{d}] v[{n}x{d}] total_energy kinetic_energy potential_energy min_distance gradient_norm"
    )?;
    let mut line = String::new();
    for s in &traj.snapshots {
        line.clear();
        let g = &s.diagnostics;
        let fields = std::iter::once(s.time())
            .chain(s.config.positions().iter().copied())
            .chain(s.config.velocities().iter().copied())
            .chain([g.total_energy, g.kinetic_energy, g.potential_energy, g.min_distance, g.gradient_norm]);
        for (k, x) in fields.enumerate() {
            if k > 0 {
                line.push(' ');
            }
            line.push_str(&fmt_f64(x));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let f = File::create(path).map_err(CliError::io(path))?;
    write_trajectory(BufWriter::new(f), traj).map_err(CliError::io(path))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub n: usize,
    pub dimension: usize,
    pub snapshots: Vec<Snapshot>,
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix(MAGIC)?;
    let mut n = None;
    let mut d = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("d=") {
            d = v.parse().ok();
        }
    }
    Some((n?, d?))
}

pub fn read_trajectory<R: BufRead>(r: R) -> std::result::Result<TrajectoryFile, String> {
    let mut lines = r.lines();
    let header = lines.next().ok_or("empty file")?.map_err(|e| e.to_string())?;
    let (n, d) = parse_header(&header).ok_or_else(|| format!("not a trajectory file: `{header}`"))?;
    let width = 1 + 2 * n * d + 5;
    let mut snapshots = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| format!("line {}: {e}", k + 2)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if vals.len() != width {
            return Err(format!("line {}: expected {width} fields, found {}", k + 2, vals.len()));
        }
        let nd = n * d;
        let config = Configuration::new(d, vals[1..1 + nd].to_vec(), vals[1 + nd..1 + 2 * nd].to_vec(), vals[0])
            .map_err(|e| format!("line {}: {e}", k + 2))?;
        let g = &vals[1 + 2 * nd..];
        let diagnostics = Diagnostics {
            total_energy: g[0],
            kinetic_energy: g[1],
            potential_energy: g[2],
            min_distance: g[3],
            gradient_norm: g[4],
        };
        snapshots.push(Snapshot { config, diagnostics });
    }
    if snapshots.is_empty() {
        return Err("no snapshots".into());
    }
    Ok(TrajectoryFile { n, dimension: d, snapshots })
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryFile> {
    let f = File::open(path).map_err(CliError::io(path))?;
    read_trajectory(BufReader::new(f)).map_err(|detail| CliError::Parse { path: path.to_path_buf(), detail })
}

/// Writes `# header` then one row per line.
pub fn write_columns<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let f = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(f);
    let body = || -> std::io::Result<()> {
        writeln!(w, "# {header}")?;
        for row in rows {
            let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        w.flush()
    };
    body().map_err(CliError::io(path))
}

/// Reads whitespace-separated numeric columns, skipping `#` lines.
pub fn read_columns(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(k, l)| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| CliError::Parse { path: path.to_path_buf(), detail: format!("line {}: {e}", k + 1) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ljform::integrate::IntegratorSettings;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -7.4258, 5e-324, f64::MAX, 0.5612310241546865, -0.0] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn header_and_width_are_checked() {
        assert!(read_trajectory("".as_bytes()).is_err());
        assert!(read_trajectory("# something else\n".as_bytes()).is_err());
        let bad = format!("{MAGIC} n=2 d=2\n1 2 3\n");
        assert!(read_trajectory(bad.as_bytes()).unwrap_err().contains("expected 14 fields"));
    }

    #[test]
    fn in_memory_round_trip() {
        let s = ljform::scenarios::two_agent();
        let snap = Snapshot::new(s.initial.clone(), &s.params).unwrap();
        let traj = Trajectory::from_snapshots(vec![snap], IntegratorSettings::default());
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!((back.n, back.dimension), (2, 2));
        assert_eq!(back.snapshots, traj.snapshots);
    }
}
