//! The per-run summary record and violation report.

use ljform::analysis::{check_collision_bound, check_energy_decay, classify_equilibrium, EnergyViolation};
use ljform::integrate::Trajectory;
use ljform::potential::zero_force_distance;
use ljform::scenarios::Scenario;
use ljform::model::SystemParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{IntegratorSection, Resolved, ScenarioFile};
use crate::error::Result;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub artifact_version: String,
    /// SHA-256 of the resolved scenario and settings, as canonical TOML, plus the seed.
    pub config_hash: String,
    pub seed: u64,
    pub integrator: IntegratorSection,
}

/// Canonical text of everything that determines a run.
pub fn canonical_input(resolved: &Resolved) -> String {
    let file = ScenarioFile::from_scenario(&resolved.scenario, &resolved.settings);
    let body = toml::to_string(&file).expect("scenario files always serialise");
    format!("{body}\n# seed = {}\n", resolved.seed)
}

pub fn config_hash(resolved: &Resolved) -> String {
    let digest = Sha256::digest(canonical_input(resolved).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Provenance {
    pub fn of(resolved: &Resolved) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            config_hash: config_hash(resolved),
            seed: resolved.seed,
            integrator: IntegratorSection::from_settings(&resolved.settings),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PairDistance {
    pub i: usize,
    pub j: usize,
    pub r: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EquilibriumSummary {
    pub is_equilibrium: bool,
    pub classification: String,
    pub gradient_norm: f64,
    pub velocity_norm: f64,
    pub nonzero_spectrum_min: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExpectedSummary {
    pub pair_distances: Option<Vec<f64>>,
    pub e_infinity: Option<f64>,
    pub r_min_theory: Option<f64>,
    pub provenance: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StatsSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub provenance: Provenance,
    pub n: usize,
    pub dimension: usize,
    pub status: String,
    pub failure: Option<String>,
    pub final_time: f64,
    pub snapshots: usize,
    pub final_distances: Vec<PairDistance>,
    pub final_r12: Option<f64>,
    pub e0: f64,
    pub e_infinity: f64,
    pub min_distance: f64,
    pub min_distance_time: f64,
    pub bound: f64,
    pub sigma_min: f64,
    pub r_star: f64,
    pub pairs: usize,
    pub well_depth: f64,
    pub equilibrium: EquilibriumSummary,
    pub expected: Option<ExpectedSummary>,
    pub violations: usize,
    pub stats: StatsSummary,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ViolationRecord {
    pub kind: String,
    pub index: Option<usize>,
    pub time: f64,
    pub value: f64,
    pub limit: f64,
}

impl From<&EnergyViolation> for ViolationRecord {
    fn from(v: &EnergyViolation) -> Self {
        match *v {
            EnergyViolation::Increase { index, time, increase, tolerance } => Self {
                kind: "energy_increase".into(),
                index: Some(index),
                time,
                value: increase,
                limit: tolerance,
            },
            EnergyViolation::Identity { index, time, energy_drop, dissipated, tolerance } => Self {
                kind: "energy_identity".into(),
                index: Some(index),
                time,
                value: (energy_drop - dissipated).abs(),
                limit: tolerance,
            },
            EnergyViolation::KineticBound { index, time, kinetic, bound } => Self {
                kind: "kinetic_bound".into(),
                index: Some(index),
                time,
                value: kinetic,
                limit: bound,
            },
        }
    }
}

fn expected_of(s: &Scenario) -> Option<ExpectedSummary> {
    s.expected.as_ref().map(|e| ExpectedSummary {
        pair_distances: e.pair_distances.clone(),
        e_infinity: e.e_infinity,
        r_min_theory: e.r_min_theory,
        provenance: e.provenance.to_string(),
    })
}

/// Builds the summary and collects every invariant violation.
pub fn summarize(resolved: &Resolved, traj: &Trajectory) -> Result<(Summary, Vec<ViolationRecord>)> {
    let params: &SystemParams = &resolved.scenario.params;
    let last = traj.last();
    let mut violations: Vec<ViolationRecord> = check_energy_decay(traj, params).iter().map(Into::into).collect();
    let bound = check_collision_bound(traj, params)?;
    if bound.violated {
        violations.push(ViolationRecord {
            kind: "collision_bound".into(),
            index: None,
            time: bound.time_of_min,
            value: bound.min_observed,
            limit: bound.r_min_theory,
        });
    }
    let eq = classify_equilibrium(&last.config, params)?;
    let final_distances: Vec<PairDistance> =
        params.pairs().map(|(i, j)| PairDistance { i, j, r: last.config.distance(i, j) }).collect();
    let summary = Summary {
        scenario: resolved.scenario.name.clone(),
        provenance: Provenance::of(resolved),
        n: params.len(),
        dimension: params.dimension(),
        status: traj.status.name().to_string(),
        failure: traj.failure.as_ref().map(|e| e.to_string()),
        final_time: last.time(),
        snapshots: traj.len(),
        final_r12: (params.len() == 2).then(|| last.config.distance(0, 1)),
        final_distances,
        e0: bound.e0,
        e_infinity: last.diagnostics.total_energy,
        min_distance: bound.min_observed,
        min_distance_time: bound.time_of_min,
        bound: bound.r_min_theory,
        sigma_min: bound.sigma_min,
        r_star: zero_force_distance(bound.sigma_min),
        pairs: params.pair_count(),
        well_depth: params.well_depth(),
        equilibrium: EquilibriumSummary {
            is_equilibrium: eq.is_equilibrium,
            classification: eq.classification.name().to_string(),
            gradient_norm: eq.gradient_norm,
            velocity_norm: eq.velocity_norm,
            nonzero_spectrum_min: eq.nonzero_spectrum_min,
        },
        expected: expected_of(&resolved.scenario),
        violations: violations.len(),
        stats: StatsSummary {
            accepted: traj.stats.accepted,
            rejected: traj.stats.rejected,
            rhs_evals: traj.stats.rhs_evals,
            jacobian_evals: traj.stats.jacobian_evals,
        },
    };
    Ok((summary, violations))
}
