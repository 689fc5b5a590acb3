//! Scenario files and resolution of `--scenario` / `--config`.
//!
//! ```toml
//! name = "pair"            # optional
//!
//! [system]
//! well_depth = 1.0
//! dimension = 2
//!
//! [integrator]             # optional, every key optional
//! rel_tol = 1e-6
//! abs_tol = 1e-6
//! method = "implicit_stiff"
//! max_step = 0.1
//! t_end = 1000.0
//! snapshot_interval = 0.01
//! equilibrium_tol = 1e-8
//! stop_at_equilibrium = true
//!
//! [[agents]]
//! mass = 1.0
//! damping = 0.8
//! radius = 0.25
//! position = [0.0, 0.0]
//! velocity = [0.0, 0.0]    # optional, defaults to rest
//! ```

use std::path::{Path, PathBuf};

use ljform::integrate::{IntegratorSettings, Method};
use ljform::model::{build_system, Configuration};
use ljform::scenarios::{self, Scenario};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub system: SystemSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    pub agents: Vec<AgentSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub well_depth: f64,
    pub dimension: usize,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub method: Option<String>,
    pub max_step: Option<f64>,
    pub t_end: Option<f64>,
    pub snapshot_interval: Option<f64>,
    pub equilibrium_tol: Option<f64>,
    pub stop_at_equilibrium: Option<bool>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub mass: f64,
    pub damping: f64,
    pub radius: f64,
    pub position: Vec<f64>,
    pub velocity: Option<Vec<f64>>,
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse { path: path.to_path_buf(), detail: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, path)
    }

    pub fn to_scenario(&self, fallback_name: &str) -> Result<Scenario> {
        let d = self.system.dimension;
        let specs: Vec<(f64, f64, f64)> = self.agents.iter().map(|a| (a.mass, a.damping, a.radius)).collect();
        let params = build_system(&specs, self.system.well_depth, d)?;
        let mut positions = Vec::with_capacity(d * self.agents.len());
        let mut velocities = Vec::with_capacity(d * self.agents.len());
        for (k, a) in self.agents.iter().enumerate() {
            let v = a.velocity.clone().unwrap_or_else(|| vec![0.0; d]);
            if a.position.len() != d || v.len() != d {
                return Err(CliError::Usage(format!(
                    "agent {k}: position and velocity need {d} components"
                )));
            }
            positions.extend_from_slice(&a.position);
            velocities.extend_from_slice(&v);
        }
        let initial = Configuration::new(d, positions, velocities, 0.0)?;
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| fallback_name.to_string()),
            params,
            initial,
            expected: None,
            seed: None,
        })
    }

    /// Writes a resolved scenario back out in this format.
    pub fn from_scenario(s: &Scenario, settings: &IntegratorSettings) -> Self {
        let d = s.initial.dimension();
        Self {
            name: Some(s.name.clone()),
            system: SystemSection { well_depth: s.params.well_depth(), dimension: d },
            integrator: IntegratorSection::from_settings(settings),
            agents: (0..s.initial.len())
                .map(|i| {
                    let a = s.params.agent(i);
                    AgentSection {
                        mass: a.mass,
                        damping: a.damping,
                        radius: a.radius,
                        position: s.initial.position(i).to_vec(),
                        velocity: Some(s.initial.velocity(i).to_vec()),
                    }
                })
                .collect(),
        }
    }
}

impl IntegratorSection {
    pub fn apply(&self, settings: &mut IntegratorSettings) -> Result<()> {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { settings.$f = v; })*};
        }
        set!(rel_tol, abs_tol, max_step, t_end, snapshot_interval, equilibrium_tol, stop_at_equilibrium);
        if let Some(m) = &self.method {
            settings.method = m.parse()?;
        }
        Ok(())
    }

    pub fn from_settings(s: &IntegratorSettings) -> Self {
        Self {
            rel_tol: Some(s.rel_tol),
            abs_tol: Some(s.abs_tol),
            method: Some(s.method.name().to_string()),
            max_step: Some(s.max_step),
            t_end: Some(s.t_end),
            snapshot_interval: Some(s.snapshot_interval),
            equilibrium_tol: Some(s.equilibrium_tol),
            stop_at_equilibrium: Some(s.stop_at_equilibrium),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioSource {
    Builtin(String),
    File(PathBuf),
}

/// Command-line overrides, applied after any `[integrator]` section.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub method: Option<Method>,
    pub t_end: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Resolved {
    pub scenario: Scenario,
    pub settings: IntegratorSettings,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 1;

pub fn resolve(source: &ScenarioSource, seed: Option<u64>, overrides: &Overrides) -> Result<Resolved> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let mut settings = IntegratorSettings::default();
    let scenario = match source {
        ScenarioSource::Builtin(name) => scenarios::by_name(name, seed).map_err(|e| CliError::Usage(e.to_string()))?,
        ScenarioSource::File(path) => {
            let file = ScenarioFile::load(path)?;
            file.integrator.apply(&mut settings)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
            file.to_scenario(stem)?
        }
    };
    if let Some(t) = overrides.tol {
        settings.rel_tol = t;
        settings.abs_tol = t;
    }
    if let Some(m) = overrides.method {
        settings.method = m;
    }
    if let Some(t) = overrides.t_end {
        settings.t_end = t;
        if t > 0.0 && settings.snapshot_interval > t {
            settings.snapshot_interval = t;
        }
    }
    settings.validate()?;
    Ok(Resolved { scenario, settings, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAIR: &str = r#"
name = "pair"
[system]
well_depth = 1.0
dimension = 2
[integrator]
method = "explicit"
t_end = 5.0
[[agents]]
mass = 1.0
damping = 0.8
radius = 0.25
position = [0.0, 0.0]
[[agents]]
mass = 2.0
damping = 0.8
radius = 0.25
position = [0.7296, 0.0]
velocity = [0.0, 0.1]
"#;

    #[test]
    fn parses_documented_schema() {
        let f = ScenarioFile::parse(PAIR, Path::new("pair.toml")).unwrap();
        let s = f.to_scenario("x").unwrap();
        assert_eq!(s.name, "pair");
        assert_eq!(s.params.agent(1).mass, 2.0);
        assert_eq!(s.initial.velocity(1), &[0.0, 0.1]);
        let mut set = IntegratorSettings::default();
        f.integrator.apply(&mut set).unwrap();
        assert_eq!(set.method, Method::AdaptiveExplicit);
        assert_eq!(set.t_end, 5.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let f = ScenarioFile::parse(PAIR, Path::new("pair.toml")).unwrap();
        let s = f.to_scenario("x").unwrap();
        let back = ScenarioFile::from_scenario(&s, &IntegratorSettings::default());
        let text = toml::to_string(&back).unwrap();
        let again = ScenarioFile::parse(&text, Path::new("y.toml")).unwrap().to_scenario("y").unwrap();
        assert_eq!(again.initial, s.initial);
        assert_eq!(again.params, s.params);
    }

    #[test]
    fn rejects_bad_files() {
        let p = Path::new("bad.toml");
        assert!(matches!(ScenarioFile::parse("nonsense = [", p), Err(CliError::Parse { .. })));
        let unknown = PAIR.replace("well_depth", "depth");
        assert!(ScenarioFile::parse(&unknown, p).is_err());
        let wrong_dim = PAIR.replace("position = [0.0, 0.0]", "position = [0.0]");
        let f = ScenarioFile::parse(&wrong_dim, p).unwrap();
        assert!(matches!(f.to_scenario("x"), Err(CliError::Usage(_))));
        let overlap = PAIR.replace("[0.7296, 0.0]", "[0.0, 0.0]");
        assert!(ScenarioFile::parse(&overlap, p).unwrap().to_scenario("x").is_err());
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { tol: Some(1e-9), method: Some(Method::AdaptiveExplicit), t_end: Some(0.005) };
        let r = resolve(&ScenarioSource::Builtin("two_agent".into()), None, &o).unwrap();
        assert_eq!(r.settings.rel_tol, 1e-9);
        assert_eq!(r.settings.abs_tol, 1e-9);
        assert_eq!(r.settings.snapshot_interval, 0.005);
        assert_eq!(r.seed, DEFAULT_SEED);
        assert!(matches!(
            resolve(&ScenarioSource::Builtin("nope".into()), None, &Overrides::default()),
            Err(CliError::Usage(_))
        ));
    }
}
