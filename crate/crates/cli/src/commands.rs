//! Subcommand implementations. Each returns data; `main` maps it to output and an exit code.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ljform::analysis::{
    configuration_residual, energy, energy_residual, fit_residual, peak_envelope, predicted_rate, separation_residual,
    ResidualSeries,
};
use ljform::integrate::{integrate, Status, Trajectory};
use ljform::model::Configuration;
use ljform::potential::collision_bound;
use serde::{Deserialize, Serialize};

use crate::config::{resolve, Overrides, Resolved, ScenarioFile, ScenarioSource};
use crate::error::{CliError, Result, EXIT_INTEGRATION, EXIT_INVARIANT, EXIT_OK};
use crate::io::{load_trajectory, read_columns, save_trajectory, write_columns};
use crate::plot::{Chart, Series};
use crate::summary::{summarize, Provenance, Summary, ViolationRecord};

pub const TRAJECTORY_FILE: &str = "trajectory.dat";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.dat";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VIOLATIONS_FILE: &str = "violations.json";
pub const INPUT_FILE: &str = "scenario.toml";
pub const RATE_FILE: &str = "rate.json";

#[derive(Clone, Debug, PartialEq)]
pub struct RunRequest {
    pub source: ScenarioSource,
    pub seed: Option<u64>,
    pub overrides: Overrides,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub resolved: Resolved,
    pub trajectory: Trajectory,
    pub summary: Summary,
    pub violations: Vec<ViolationRecord>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.trajectory.status == Status::StepFailure {
            EXIT_INTEGRATION
        } else if !self.violations.is_empty() {
            EXIT_INVARIANT
        } else {
            EXIT_OK
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("records always serialise");
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

/// Integrates a resolved scenario and checks it, without touching the disk.
pub fn simulate(resolved: Resolved) -> Result<RunOutcome> {
    let s = &resolved.scenario;
    let trajectory = integrate(&s.initial, &s.params, &resolved.settings)?;
    let (summary, violations) = summarize(&resolved, &trajectory)?;
    Ok(RunOutcome { resolved, trajectory, summary, violations })
}

/// Writes trajectory, diagnostics, summary, violations and the resolved input.
pub fn write_run(out: &Path, run: &RunOutcome) -> Result<()> {
    create_dir(out)?;
    save_trajectory(&out.join(TRAJECTORY_FILE), &run.trajectory)?;
    write_columns(
        &out.join(DIAGNOSTICS_FILE),
        "t total_energy kinetic_energy potential_energy min_distance gradient_norm",
        run.trajectory.snapshots.iter().map(|s| {
            let g = &s.diagnostics;
            vec![s.time(), g.total_energy, g.kinetic_energy, g.potential_energy, g.min_distance, g.gradient_norm]
        }),
    )?;
    write_json(&out.join(SUMMARY_FILE), &run.summary)?;
    write_json(&out.join(VIOLATIONS_FILE), &run.violations)?;
    let input = ScenarioFile::from_scenario(&run.resolved.scenario, &run.resolved.settings);
    let text = toml::to_string(&input).expect("scenario files always serialise");
    let path = out.join(INPUT_FILE);
    fs::write(&path, text).map_err(CliError::io(&path))
}

pub fn cmd_run(req: &RunRequest) -> Result<RunOutcome> {
    let resolved = resolve(&req.source, req.seed, &req.overrides)?;
    let run = simulate(resolved)?;
    write_run(&req.out, &run)?;
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `|r_12 - r_12*|` for two agents, centroid-aligned distance otherwise.
    Separation,
    /// `sqrt(E - E_inf)`.
    Energy,
}

impl std::str::FromStr for ResidualKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "separation" | "distance" => Ok(ResidualKind::Separation),
            "energy" => Ok(ResidualKind::Energy),
            other => Err(format!("unknown residual `{other}` (expected separation or energy)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateInput {
    /// Run a scenario and fit its residual.
    Scenario { source: ScenarioSource, seed: Option<u64>, overrides: Overrides },
    /// A two-column `t value` file.
    Series(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRequest {
    pub input: RateInput,
    pub out: PathBuf,
    pub window: Option<(f64, f64)>,
    pub residual: ResidualKind,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateRecord {
    pub scenario: Option<String>,
    pub residual: String,
    pub alpha_observed: f64,
    pub alpha_predicted: Option<f64>,
    pub lambda_min: Option<f64>,
    pub r_squared: f64,
    pub fit_window: (f64, f64),
    pub points: usize,
    pub provenance: Option<Provenance>,
}

fn fit_error(e: ljform::Error) -> CliError {
    match e {
        ljform::Error::FitDegenerate(m) => CliError::Usage(format!("rate fit is degenerate: {m}")),
        other => other.into(),
    }
}

fn residual_for(traj: &Trajectory, target: &Configuration, kind: ResidualKind) -> Result<ResidualSeries> {
    Ok(match kind {
        ResidualKind::Energy => energy_residual(traj, traj.last().diagnostics.total_energy),
        ResidualKind::Separation if target.len() == 2 => separation_residual(traj, 0, 1, target.distance(0, 1)),
        ResidualKind::Separation => configuration_residual(traj, target)?,
    })
}

pub fn cmd_rate(req: &RateRequest) -> Result<RateRecord> {
    let out = &req.out;
    let (series, record_base) = match &req.input {
        RateInput::Series(path) => {
            let rows = read_columns(path)?;
            if rows.iter().any(|r| r.len() < 2) {
                return Err(CliError::Parse { path: path.clone(), detail: "expected `t value` columns".into() });
            }
            let series = ResidualSeries {
                times: rows.iter().map(|r| r[0]).collect(),
                values: rows.iter().map(|r| r[1]).collect(),
                noise_floor: 0.0,
            };
            (series, None)
        }
        RateInput::Scenario { source, seed, overrides } => {
            let run = simulate(resolve(source, *seed, overrides)?)?;
            if run.trajectory.status == Status::StepFailure {
                return Err(CliError::Integration(run.summary.failure.clone().unwrap_or_default()));
            }
            let target = run.trajectory.last().config.clone();
            let series = residual_for(&run.trajectory, &target, req.residual)?;
            (series, Some((run, target)))
        }
    };
    let (fit, window) = fit_residual(&series, req.window).map_err(fit_error)?;
    let (scenario, predicted, provenance) = match &record_base {
        Some((run, target)) => {
            let p = predicted_rate(&run.resolved.scenario.params, target)?;
            (Some(run.summary.scenario.clone()), Some(p), Some(run.summary.provenance.clone()))
        }
        None => (None, None, None),
    };
    let record = RateRecord {
        scenario,
        residual: match req.residual {
            ResidualKind::Separation => "separation",
            ResidualKind::Energy => "energy",
        }
        .into(),
        alpha_observed: -fit.slope,
        alpha_predicted: predicted.map(|p| p.alpha),
        lambda_min: predicted.map(|p| p.lambda_min),
        r_squared: fit.r_squared,
        fit_window: window,
        points: fit.points,
        provenance,
    };
    create_dir(out)?;
    write_columns(
        &out.join("residual.dat"),
        "t residual",
        series.times.iter().zip(&series.values).map(|(t, v)| vec![*t, *v]),
    )?;
    let env = peak_envelope(&series);
    write_columns(&out.join("envelope.dat"), "t envelope", env.times.iter().zip(&env.values).map(|(t, v)| vec![*t, *v]))?;
    write_json(&out.join(RATE_FILE), &record)?;
    Ok(record)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundRecord {
    pub scenario: String,
    pub sigma_min: f64,
    pub well_depth: f64,
    pub e0: f64,
    pub e0_overridden: bool,
    pub pairs: usize,
    pub r_min_theory: f64,
}

impl fmt::Display for BoundRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario     {}", self.scenario)?;
        writeln!(f, "sigma_min    {}", self.sigma_min)?;
        writeln!(f, "well_depth   {}", self.well_depth)?;
        writeln!(f, "E0           {}{}", self.e0, if self.e0_overridden { " (override)" } else { "" })?;
        writeln!(f, "pairs        {}", self.pairs)?;
        write!(f, "r_min_theory {:.6}", self.r_min_theory)
    }
}

pub fn cmd_bound(source: &ScenarioSource, seed: Option<u64>, e0_override: Option<f64>) -> Result<BoundRecord> {
    let resolved = resolve(source, seed, &Overrides::default())?;
    let s = &resolved.scenario;
    let e0 = match e0_override {
        Some(e) => e,
        None => energy(&s.initial, &s.params)?.total,
    };
    Ok(BoundRecord {
        scenario: s.name.clone(),
        sigma_min: s.params.sigma_min(),
        well_depth: s.params.well_depth(),
        e0,
        e0_overridden: e0_override.is_some(),
        pairs: s.params.pair_count(),
        r_min_theory: collision_bound(e0, &s.params)?,
    })
}

/// Reads a run directory and writes `plots/` with SVG charts and their data.
pub fn cmd_plot(dir: &Path) -> Result<Vec<PathBuf>> {
    let traj_path = dir.join(TRAJECTORY_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    if !traj_path.is_file() || !summary_path.is_file() {
        return Err(CliError::Usage(format!(
            "{} does not hold run artifacts ({TRAJECTORY_FILE}, {SUMMARY_FILE}); run `ljform run` first",
            dir.display()
        )));
    }
    let file = load_trajectory(&traj_path)?;
    let text = fs::read_to_string(&summary_path).map_err(CliError::io(&summary_path))?;
    let summary: Summary = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse { path: summary_path.clone(), detail: e.to_string() })?;
    let snaps = &file.snapshots;
    let (n, d) = (file.n, file.dimension);
    let plots = dir.join("plots");
    create_dir(&plots)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, chart: Chart, header: &str, rows: Vec<Vec<f64>>| -> Result<()> {
        let svg = plots.join(format!("{name}.svg"));
        fs::write(&svg, chart.to_svg()).map_err(CliError::io(&svg))?;
        let dat = plots.join(format!("{name}.dat"));
        write_columns(&dat, header, rows)?;
        written.push(svg);
        written.push(dat);
        Ok(())
    };

    let times: Vec<f64> = snaps.iter().map(|s| s.time()).collect();

    // Paths in the plane (first two coordinates).
    let paths: Vec<Series> = (0..n)
        .map(|i| Series {
            label: format!("agent {i}"),
            points: snaps.iter().map(|s| (s.config.position(i)[0], s.config.position(i).get(1).copied().unwrap_or(0.0))).collect(),
        })
        .collect();
    let header: String = std::iter::once("t".to_string()).chain((0..n).flat_map(|i| (0..d).map(move |c| format!("x{i}_{c}")))).collect::<Vec<_>>().join(" ");
    emit(
        "paths",
        Chart { title: "Agent paths".into(), x_label: "x".into(), y_label: "y".into(), series: paths, equal_aspect: true, ..Chart::default() },
        &header,
        snaps.iter().map(|s| std::iter::once(s.time()).chain(s.config.positions().iter().copied()).collect()).collect(),
    )?;

    let energy_series = |label: &str, f: fn(&ljform::integrate::Diagnostics) -> f64| Series {
        label: label.into(),
        points: snaps.iter().map(|s| (s.time(), f(&s.diagnostics))).collect(),
    };
    emit(
        "energy",
        Chart {
            title: "Energy".into(),
            x_label: "t".into(),
            y_label: "energy".into(),
            series: vec![
                energy_series("total", |g| g.total_energy),
                energy_series("kinetic", |g| g.kinetic_energy),
                energy_series("potential", |g| g.potential_energy),
            ],
            ..Chart::default()
        },
        "t total kinetic potential",
        snaps
            .iter()
            .map(|s| vec![s.time(), s.diagnostics.total_energy, s.diagnostics.kinetic_energy, s.diagnostics.potential_energy])
            .collect(),
    )?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dist_series: Vec<Series> = pairs
        .iter()
        .map(|&(i, j)| Series { label: format!("r{}{}", i + 1, j + 1), points: snaps.iter().map(|s| (s.time(), s.config.distance(i, j))).collect() })
        .collect();
    let header = std::iter::once("t".to_string()).chain(pairs.iter().map(|(i, j)| format!("r{}{}", i + 1, j + 1))).collect::<Vec<_>>().join(" ");
    emit(
        "distances",
        Chart {
            title: "Pairwise distances".into(),
            x_label: "t".into(),
            y_label: "distance".into(),
            series: if dist_series.len() > 8 { dist_series.into_iter().take(8).collect() } else { dist_series },
            reference_lines: vec![(summary.sigma_min, "sigma".into()), (summary.r_star, "r*".into())],
            ..Chart::default()
        },
        &header,
        snaps.iter().map(|s| std::iter::once(s.time()).chain(pairs.iter().map(|&(i, j)| s.config.distance(i, j))).collect()).collect(),
    )?;

    let traj = Trajectory::from_snapshots(snaps.clone(), Default::default());
    let target = traj.last().config.clone();
    let series = residual_for(&traj, &target, ResidualKind::Separation)?;
    let label = if n == 2 { "|r12 - r12(final)|" } else { "distance to final configuration" };
    emit(
        "residual",
        Chart {
            title: "Convergence residual".into(),
            x_label: "t".into(),
            y_label: "residual (log scale)".into(),
            series: vec![Series { label: label.into(), points: times.iter().copied().zip(series.values.iter().copied()).collect() }],
            log_y: true,
            ..Chart::default()
        },
        "t residual",
        times.iter().zip(&series.values).map(|(t, v)| vec![*t, *v]).collect(),
    )?;
    Ok(written)
}

pub fn cmd_scenarios() -> Vec<(&'static str, &'static str)> {
    ljform::scenarios::CATALOG.to_vec()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BatchEntry {
    pub scenario: String,
    pub seed: Option<u64>,
    pub dir: PathBuf,
    pub exit_code: i32,
    pub error: Option<String>,
}

/// Runs each scenario (random ones once per seed) on its own thread, each
/// into its own subdirectory of `out`.
pub fn cmd_batch(names: &[String], seeds: &[u64], overrides: &Overrides, out: &Path) -> Result<Vec<BatchEntry>> {
    let mut jobs: Vec<(String, Option<u64>, PathBuf)> = Vec::new();
    for name in names {
        let random = name.starts_with("random") || name == "n_agent";
        if random {
            for &s in seeds {
                jobs.push((name.clone(), Some(s), out.join(format!("{name}_seed{s}"))));
            }
        } else {
            jobs.push((name.clone(), None, out.join(name)));
        }
    }
    for (name, _, _) in &jobs {
        ljform::scenarios::by_name(name, 0).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    create_dir(out)?;
    let entries: Vec<BatchEntry> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(name, seed, dir)| {
                scope.spawn(move || {
                    let req = RunRequest {
                        source: ScenarioSource::Builtin(name.clone()),
                        seed: *seed,
                        overrides: overrides.clone(),
                        out: dir.clone(),
                    };
                    let (exit_code, error) = match cmd_run(&req) {
                        Ok(run) => (run.exit_code(), None),
                        Err(e) => (e.exit_code(), Some(e.to_string())),
                    };
                    BatchEntry { scenario: name.clone(), seed: *seed, dir: dir.clone(), exit_code, error }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("batch worker panicked")).collect()
    });
    write_json(&out.join("batch.json"), &entries)?;
    Ok(entries)
}
