//! Time integration of the damped gradient dynamics
//!
//! ```text
//! x_i' = v_i
//! v_i' = (-c_i v_i - grad_i U(x)) / m_i
//! ```
//!
//! in stacked form `y = [x; v]`. Two steppers share one driver: an explicit
//! Dormand-Prince 5(4) pair with PI step control and a three-stage Radau IIA
//! collocation method (order 5, L-stable) iterated with simplified Newton on
//! the analytic Jacobian. Steps are clipped so that every snapshot time is hit
//! exactly; no dense output is used.

mod dopri;
mod radau;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Configuration, SystemParams};
use crate::potential::{self, gradient_into, hessian_of_positions};

/// Which stepper drives the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    AdaptiveExplicit,
    ImplicitStiff,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AdaptiveExplicit => "adaptive_explicit",
            Method::ImplicitStiff => "implicit_stiff",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive_explicit" | "explicit" | "dopri5" => Ok(Method::AdaptiveExplicit),
            "implicit_stiff" | "implicit" | "radau" | "radau5" => Ok(Method::ImplicitStiff),
            other => Err(Error::InvalidParameter(format!("unknown integration method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub method: Method,
    pub max_step: f64,
    pub t_end: f64,
    pub snapshot_interval: f64,
    /// Threshold on `||grad U||_inf` and `max_i ||v_i||` for the equilibrium stopping rule.
    pub equilibrium_tol: f64,
    /// Stop once two consecutive snapshots satisfy the equilibrium rule.
    pub stop_at_equilibrium: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-6,
            method: Method::ImplicitStiff,
            max_step: 0.1,
            t_end: 1000.0,
            snapshot_interval: 0.01,
            equilibrium_tol: 1e-8,
            stop_at_equilibrium: true,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("max_step", self.max_step)?;
        positive("snapshot_interval", self.snapshot_interval)?;
        positive("equilibrium_tol", self.equilibrium_tol)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if self.t_end > 0.0 && self.snapshot_interval > self.t_end {
            return Err(Error::InvalidParameter(format!(
                "snapshot interval {} exceeds t_end {}",
                self.snapshot_interval, self.t_end
            )));
        }
        Ok(())
    }

    /// Smallest admissible step; reaching it is a hard failure.
    pub fn min_step(&self) -> f64 {
        1e-14 * self.t_end.max(f64::MIN_POSITIVE)
    }
}

/// Per-snapshot scalar diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub total_energy: f64,
    pub kinetic_energy: f64,
    pub potential_energy: f64,
    pub min_distance: f64,
    /// Euclidean norm of `grad U`.
    pub gradient_norm: f64,
}

impl Diagnostics {
    pub fn of(config: &Configuration, params: &SystemParams) -> Result<Self> {
        let potential_energy = potential::total_potential(config, params)?;
        let kinetic_energy = kinetic_energy(config, params);
        let gradient_norm = potential::gradient(config, params)?.norm();
        Ok(Self {
            total_energy: kinetic_energy + potential_energy,
            kinetic_energy,
            potential_energy,
            min_distance: config.min_distance(),
            gradient_norm,
        })
    }
}

pub(crate) fn kinetic_energy(config: &Configuration, params: &SystemParams) -> f64 {
    (0..config.len())
        .map(|i| 0.5 * params.agent(i).mass * config.velocity(i).iter().map(|v| v * v).sum::<f64>())
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub config: Configuration,
    pub diagnostics: Diagnostics,
}

impl Snapshot {
    pub fn new(config: Configuration, params: &SystemParams) -> Result<Self> {
        let diagnostics = Diagnostics::of(&config, params)?;
        Ok(Self { config, diagnostics })
    }

    pub fn time(&self) -> f64 {
        self.config.time()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Completed,
    EquilibriumReached,
    StepFailure,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::EquilibriumReached => "equilibrium_reached",
            Status::StepFailure => "step_failure",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
}

/// Snapshots of one run plus how it ended.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub status: Status,
    pub settings: IntegratorSettings,
    pub stats: StepStats,
    /// Set when `status` is [`Status::StepFailure`].
    pub failure: Option<Error>,
}

impl Trajectory {
    /// Wraps precomputed snapshots, e.g. read back from disk or built synthetically.
    pub fn from_snapshots(snapshots: Vec<Snapshot>, settings: IntegratorSettings) -> Self {
        Self { snapshots, status: Status::Completed, settings, stats: StepStats::default(), failure: None }
    }

    pub fn first(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::time).collect()
    }

    /// Smallest pairwise distance over all snapshots.
    pub fn min_distance(&self) -> f64 {
        self.snapshots.iter().map(|s| s.diagnostics.min_distance).fold(f64::INFINITY, f64::min)
    }
}

/// The first-order vector field together with its Jacobian.
pub(crate) struct Dynamics<'a> {
    params: &'a SystemParams,
    inv_mass: Vec<f64>,
    damping_over_mass: Vec<f64>,
}

impl<'a> Dynamics<'a> {
    pub(crate) fn new(params: &'a SystemParams) -> Self {
        let d = params.dimension();
        let mut inv_mass = Vec::with_capacity(params.len() * d);
        let mut damping_over_mass = Vec::with_capacity(params.len() * d);
        for a in params.agents() {
            for _ in 0..d {
                inv_mass.push(1.0 / a.mass);
                damping_over_mass.push(a.damping / a.mass);
            }
        }
        Self { params, inv_mass, damping_over_mass }
    }

    pub(crate) fn dim(&self) -> usize {
        2 * self.inv_mass.len()
    }

    pub(crate) fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let half = self.inv_mass.len();
        let (x, v) = y.split_at(half);
        let (dx, dv) = out.split_at_mut(half);
        dx.copy_from_slice(v);
        gradient_into(self.params, x, dv)?;
        for k in 0..half {
            dv[k] = -self.damping_over_mass[k] * v[k] - self.inv_mass[k] * dv[k];
        }
        Ok(())
    }

    /// `[[0, I], [-M^-1 H, -M^-1 C]]`.
    pub(crate) fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let half = self.inv_mass.len();
        let h = hessian_of_positions(self.params, &y[..half])?;
        let mut j = DMatrix::zeros(2 * half, 2 * half);
        for k in 0..half {
            j[(k, half + k)] = 1.0;
            j[(half + k, half + k)] = -self.damping_over_mass[k];
            for l in 0..half {
                j[(half + k, l)] = -self.inv_mass[k] * h[(k, l)];
            }
        }
        Ok(j)
    }
}

/// Time derivative of the stacked state `[x; v]` at `config`.
pub fn rhs(config: &Configuration, params: &SystemParams) -> Result<Vec<f64>> {
    params.check_shape(config)?;
    let dynamics = Dynamics::new(params);
    let y = config.to_state();
    let mut out = vec![0.0; y.len()];
    dynamics.eval(&y, &mut out)?;
    Ok(out)
}

/// Analytic Jacobian of [`rhs`] with respect to the stacked state.
pub fn jacobian(config: &Configuration, params: &SystemParams) -> Result<DMatrix<f64>> {
    params.check_shape(config)?;
    Dynamics::new(params).jacobian(&config.to_state())
}

/// Central finite-difference Jacobian of [`rhs`], used as an oracle for [`jacobian`].
pub fn finite_difference_jacobian(config: &Configuration, params: &SystemParams) -> Result<DMatrix<f64>> {
    params.check_shape(config)?;
    let dynamics = Dynamics::new(params);
    let y = config.to_state();
    let n = y.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut yp = y.clone();
    for col in 0..n {
        let h = 1e-6 * y[col].abs().max(1.0);
        yp[col] = y[col] + h;
        dynamics.eval(&yp, &mut plus)?;
        yp[col] = y[col] - h;
        dynamics.eval(&yp, &mut minus)?;
        yp[col] = y[col];
        for row in 0..n {
            jac[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Result of one attempted step.
pub(crate) struct Attempt {
    pub y_new: Vec<f64>,
    /// Scaled RMS error estimate; the step is accepted when it is at most 1.
    pub error: f64,
}

pub(crate) trait Stepper {
    /// Tries one step of size `h` from `y`. `Ok(None)` means the step could not
    /// be completed (Newton divergence or a stage hit the collision set) and
    /// must be retried with a smaller step.
    fn attempt(&mut self, y: &[f64], h: f64) -> Result<Option<Attempt>>;

    /// Step-size factor after an accepted step with error `err`.
    fn accept_factor(&mut self, err: f64) -> f64;

    /// Step-size factor after a rejected step with error `err`.
    fn reject_factor(&mut self, err: f64) -> f64;

    fn stats(&self) -> StepStats;
}

pub(crate) fn scaled_rms(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn at_equilibrium(config: &Configuration, params: &SystemParams, tol: f64) -> Result<bool> {
    let g = potential::gradient(config, params)?;
    Ok(g.inf_norm() < tol && config.max_speed() < tol)
}

/// Integrates from `initial` until `t_end` or until the equilibrium rule fires.
///
/// Snapshots are emitted at every multiple of the snapshot interval and at
/// `t_end`. If the step controller underflows the minimum step, the snapshots
/// reached so far are returned with [`Status::StepFailure`].
pub fn integrate(
    initial: &Configuration,
    params: &SystemParams,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    params.check_shape(initial)?;
    let dynamics = Dynamics::new(params);
    let d = params.dimension();
    let mut stepper: Box<dyn Stepper + '_> = match settings.method {
        Method::AdaptiveExplicit => Box::new(dopri::Dopri5::new(&dynamics, settings.rel_tol, settings.abs_tol)),
        Method::ImplicitStiff => Box::new(radau::Radau5::new(&dynamics, settings.rel_tol, settings.abs_tol)),
    };

    let start = initial.clone().with_time(0.0);
    let mut snapshots = vec![Snapshot::new(start.clone(), params)?];
    let mut status = Status::Completed;
    let mut failure = None;

    let mut t = 0.0;
    let mut y = start.to_state();
    let mut h = settings.max_step.min(settings.snapshot_interval).min(1e-3);
    let floor = settings.min_step();
    let mut next = 1usize;
    let mut settled = settings.stop_at_equilibrium
        && at_equilibrium(&start, params, settings.equilibrium_tol)?;

    'outer: while t < settings.t_end {
        let target = (next as f64 * settings.snapshot_interval).min(settings.t_end);
        // Reach `target` exactly, then emit a snapshot.
        while t < target {
            let remaining = target - t;
            let clipped = h.min(settings.max_step) >= remaining;
            let h_try = if clipped { remaining } else { h.min(settings.max_step) };
            if h_try < floor && !clipped {
                status = Status::StepFailure;
                failure = Some(Error::StepFailure { time: t, step: h_try, floor });
                break 'outer;
            }
            match stepper.attempt(&y, h_try)? {
                Some(att) if att.error <= 1.0 => {
                    let fac = stepper.accept_factor(att.error);
                    y = att.y_new;
                    t = if clipped { target } else { t + h_try };
                    let proposal = h_try * fac;
                    h = if clipped { h.max(proposal) } else { proposal };
                }
                Some(att) => {
                    h = h_try * stepper.reject_factor(att.error);
                }
                None => {
                    h = 0.5 * h_try;
                }
            }
            if h < floor {
                status = Status::StepFailure;
                failure = Some(Error::StepFailure { time: t, step: h, floor });
                break 'outer;
            }
        }
        let config = Configuration::from_state(d, &y, t)?;
        let now_settled = settings.stop_at_equilibrium
            && at_equilibrium(&config, params, settings.equilibrium_tol)?;
        snapshots.push(Snapshot::new(config, params)?);
        next += 1;
        if now_settled && settled {
            status = Status::EquilibriumReached;
            break;
        }
        settled = now_settled;
    }

    Ok(Trajectory { snapshots, status, settings: settings.clone(), stats: stepper.stats(), failure })
}
