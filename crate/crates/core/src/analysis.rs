//! Checks run on finished trajectories: energy decay, the collision bound,
//! equilibrium classification and exponential-rate fits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::integrate::{kinetic_energy, rhs, IntegratorSettings, Trajectory};
use crate::model::{Configuration, SystemParams};
use crate::potential::{collision_bound, gradient, hessian, total_potential};

/// Gradient and speed threshold for calling a state an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Eigenvalues below this fraction of the spectral radius count as zero.
pub const ZERO_MODE_TOL: f64 = 1e-8;
/// Relative mismatch allowed between the energy drop and the dissipation integral.
pub const IDENTITY_TOL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

pub fn energy(config: &Configuration, params: &SystemParams) -> Result<EnergyBreakdown> {
    let potential = total_potential(config, params)?;
    let kinetic = kinetic_energy(config, params);
    Ok(EnergyBreakdown { kinetic, potential, total: kinetic + potential })
}

/// Slack allowed on energy comparisons: `10 (rel_tol |e| + abs_tol)`.
pub fn drift_tolerance(settings: &IntegratorSettings, e: f64) -> f64 {
    10.0 * (settings.rel_tol * e.abs() + settings.abs_tol)
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnergyViolation {
    /// `E` rose between snapshots `index - 1` and `index`.
    Increase { index: usize, time: f64, increase: f64, tolerance: f64 },
    /// `E_0 - E_k` disagrees with the dissipated energy up to snapshot `index`.
    Identity { index: usize, time: f64, energy_drop: f64, dissipated: f64, tolerance: f64 },
    /// Kinetic energy above `E_0 + a C(N, 2)`.
    KineticBound { index: usize, time: f64, kinetic: f64, bound: f64 },
}

/// `g = sum_i c_i |v_i|^2` at one snapshot, with its time derivative
/// `2 sum_i c_i v_i . a_i`.
fn dissipation_rate(config: &Configuration, params: &SystemParams) -> (f64, f64) {
    let d = config.dimension();
    let n = config.len();
    // Accelerations are unavailable only for colliding states, which never reach a snapshot.
    let acc = rhs(config, params).map(|y| y[n * d..].to_vec()).unwrap_or_else(|_| vec![0.0; n * d]);
    let mut g = 0.0;
    let mut dg = 0.0;
    for i in 0..n {
        let c = params.agent(i).damping;
        let v = config.velocity(i);
        g += c * v.iter().map(|x| x * x).sum::<f64>();
        dg += 2.0 * c * v.iter().zip(&acc[i * d..(i + 1) * d]).map(|(x, a)| x * a).sum::<f64>();
    }
    (g, dg)
}

/// Running integral of `sum_i c_i |v_i|^2`, one entry per snapshot.
///
/// Trapezoid rule with the Euler-Maclaurin endpoint term
/// `-h^2/12 (g'(t1) - g'(t0))` on each interval. The plain rule is off by half
/// on the first interval of a start from rest, where `g` grows like `t^2`.
pub fn cumulative_dissipation(traj: &Trajectory, params: &SystemParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    let mut prev: Option<(f64, (f64, f64))> = None;
    for s in &traj.snapshots {
        let (g, dg) = dissipation_rate(&s.config, params);
        if let Some((t0, (g0, dg0))) = prev {
            let h = s.time() - t0;
            acc += 0.5 * h * (g0 + g) - h * h / 12.0 * (dg - dg0);
        }
        out.push(acc);
        prev = Some((s.time(), (g, dg)));
    }
    out
}

/// Approximation of `int sum_i c_i |v_i|^2 dt` over the whole trajectory, as in
/// [`cumulative_dissipation`]. With uniform damping this is `gamma int sum |v|^2 dt`.
pub fn velocity_integral(traj: &Trajectory, params: &SystemParams) -> f64 {
    cumulative_dissipation(traj, params).last().copied().unwrap_or(0.0)
}

/// Energy must not rise between snapshots beyond the drift tolerance, the
/// energy lost by snapshot `k` must match the dissipation integral within 1%,
/// and kinetic energy must stay below `E_0 + a C(N, 2)`.
pub fn check_energy_decay(traj: &Trajectory, params: &SystemParams) -> Vec<EnergyViolation> {
    let mut out = Vec::new();
    let Some(first) = traj.snapshots.first() else {
        return out;
    };
    let e0 = first.diagnostics.total_energy;
    let ke_bound = e0 + params.well_depth() * params.pair_count() as f64;
    let dissipated = cumulative_dissipation(traj, params);
    for (k, s) in traj.snapshots.iter().enumerate() {
        let e = s.diagnostics.total_energy;
        let tol = drift_tolerance(&traj.settings, e);
        if k > 0 {
            let rise = e - traj.snapshots[k - 1].diagnostics.total_energy;
            if rise > tol {
                out.push(EnergyViolation::Increase { index: k, time: s.time(), increase: rise, tolerance: tol });
            }
            let drop = e0 - e;
            let id_tol = IDENTITY_TOL * dissipated[k] + tol;
            if (drop - dissipated[k]).abs() > id_tol {
                out.push(EnergyViolation::Identity {
                    index: k,
                    time: s.time(),
                    energy_drop: drop,
                    dissipated: dissipated[k],
                    tolerance: id_tol,
                });
            }
        }
        let ke = s.diagnostics.kinetic_energy;
        if ke > ke_bound + tol {
            out.push(EnergyViolation::KineticBound { index: k, time: s.time(), kinetic: ke, bound: ke_bound });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionReport {
    pub min_observed: f64,
    pub time_of_min: f64,
    pub e0: f64,
    pub r_min_theory: f64,
    pub sigma_min: f64,
    /// Observed minimum fell below the theoretical bound.
    pub violated: bool,
}

pub fn check_collision_bound(traj: &Trajectory, params: &SystemParams) -> Result<CollisionReport> {
    let first = traj
        .snapshots
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
    let e0 = first.diagnostics.total_energy;
    let r_min_theory = collision_bound(e0, params)?;
    let (mut min_observed, mut time_of_min) = (f64::INFINITY, first.time());
    for s in &traj.snapshots {
        if s.diagnostics.min_distance < min_observed {
            min_observed = s.diagnostics.min_distance;
            time_of_min = s.time();
        }
    }
    Ok(CollisionReport {
        min_observed,
        time_of_min,
        e0,
        r_min_theory,
        sigma_min: params.sigma_min(),
        violated: min_observed < r_min_theory,
    })
}

/// Largest distance of any agent from the initial centroid, over all snapshots.
pub fn max_extent(traj: &Trajectory) -> f64 {
    let Some(first) = traj.snapshots.first() else {
        return 0.0;
    };
    let c = first.config.centroid();
    let d = c.len();
    traj.snapshots
        .iter()
        .flat_map(|s| s.config.positions().chunks(d).map(|p| crate::model::distance(p, &c)).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Rigid,
    Degenerate,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Rigid => "rigid",
            Classification::Degenerate => "degenerate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumReport {
    pub is_equilibrium: bool,
    /// Largest gradient component.
    pub gradient_norm: f64,
    /// Largest agent speed.
    pub velocity_norm: f64,
    pub classification: Classification,
    /// Smallest eigenvalue, translations removed, that is not numerically zero.
    pub nonzero_spectrum_min: f64,
    /// Numerically zero eigenvalues left after removing translations.
    pub zero_modes: usize,
    /// Hessian spectrum with translations removed, ascending.
    pub spectrum: Vec<f64>,
}

/// Orthonormal basis of the complement of the `d` uniform translations.
fn translation_complement(n: usize, d: usize) -> DMatrix<f64> {
    let dim = n * d;
    let mut m = DMatrix::<f64>::zeros(dim, d + dim);
    let w = 1.0 / (n as f64).sqrt();
    for c in 0..d {
        for i in 0..n {
            m[(i * d + c, c)] = w;
        }
    }
    m.view_mut((0, d), (dim, dim)).fill_with_identity();
    let q = m.qr().q();
    q.columns(d, dim - d).into_owned()
}

/// Eigenvalues of the Hessian restricted to motions that leave the centroid fixed.
pub fn deflated_spectrum(h: &DMatrix<f64>, n: usize, d: usize) -> Vec<f64> {
    let q = translation_complement(n, d);
    let reduced = q.transpose() * h * &q;
    let reduced = 0.5 * (&reduced + reduced.transpose());
    let mut ev: Vec<f64> = reduced.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn classify_equilibrium(config: &Configuration, params: &SystemParams) -> Result<EquilibriumReport> {
    let g = gradient(config, params)?;
    let h = hessian(config, params)?;
    let spectrum = deflated_spectrum(&h, config.len(), config.dimension());
    let radius = spectrum.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let floor = ZERO_MODE_TOL * radius;
    let zero_modes = spectrum.iter().filter(|l| l.abs() <= floor).count();
    let nonzero_spectrum_min = spectrum.iter().copied().find(|l| l.abs() > floor).unwrap_or(0.0);
    let gradient_norm = g.inf_norm();
    let velocity_norm = config.max_speed();
    Ok(EquilibriumReport {
        is_equilibrium: gradient_norm < EQUILIBRIUM_TOL && velocity_norm < EQUILIBRIUM_TOL,
        gradient_norm,
        velocity_norm,
        classification: if nonzero_spectrum_min > 0.0 {
            Classification::Rigid
        } else {
            Classification::Degenerate
        },
        nonzero_spectrum_min,
        zero_modes,
        spectrum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictedRate {
    pub lambda_min: f64,
    pub alpha: f64,
}

/// `alpha = min(gamma / 2m, lambda_min / gamma)` at `target`.
///
/// With mixed agents the slowest ratio is used on each side:
/// `min_i c_i / 2 m_i` and `lambda_min / max_i c_i`.
pub fn predicted_rate(params: &SystemParams, target: &Configuration) -> Result<PredictedRate> {
    let report = classify_equilibrium(target, params)?;
    let lambda_min = report.nonzero_spectrum_min;
    let underdamped = params.agents().iter().map(|a| a.damping / (2.0 * a.mass)).fold(f64::INFINITY, f64::min);
    let gamma_max = params.agents().iter().map(|a| a.damping).fold(0.0, f64::max);
    Ok(PredictedRate { lambda_min, alpha: underdamped.min(lambda_min / gamma_max) })
}

/// A positive quantity expected to decay exponentially, sampled in time.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Values at or below this are indistinguishable from rounding.
    pub noise_floor: f64,
}

/// `|r_ij(t) - r_star|`.
pub fn separation_residual(traj: &Trajectory, i: usize, j: usize, r_star: f64) -> ResidualSeries {
    ResidualSeries {
        times: traj.times(),
        values: traj.snapshots.iter().map(|s| (s.config.distance(i, j) - r_star).abs()).collect(),
        noise_floor: 1e3 * f64::EPSILON * r_star,
    }
}

/// Distance to `target` after both are shifted to a zero centroid.
pub fn configuration_residual(traj: &Trajectory, target: &Configuration) -> Result<ResidualSeries> {
    let centred = |c: &Configuration| -> Vec<f64> {
        let m = c.centroid();
        c.positions().iter().enumerate().map(|(k, x)| x - m[k % m.len()]).collect()
    };
    let goal = centred(target);
    let scale = goal.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(traj.len());
    for s in &traj.snapshots {
        if s.config.len() != target.len() || s.config.dimension() != target.dimension() {
            return Err(Error::ShapeMismatch {
                expected: (target.len(), target.dimension()),
                found: (s.config.len(), s.config.dimension()),
            });
        }
        values.push(crate::model::distance(&centred(&s.config), &goal));
    }
    Ok(ResidualSeries { times: traj.times(), values, noise_floor: 1e3 * f64::EPSILON * scale })
}

/// `sqrt(E(t) - E_target)`, which decays at the same rate as the configuration.
pub fn energy_residual(traj: &Trajectory, e_target: f64) -> ResidualSeries {
    ResidualSeries {
        times: traj.times(),
        values: traj.snapshots.iter().map(|s| (s.diagnostics.total_energy - e_target).max(0.0).sqrt()).collect(),
        noise_floor: (1e3 * f64::EPSILON * e_target.abs().max(f64::MIN_POSITIVE)).sqrt(),
    }
}

/// Local maxima of an oscillating residual, each refined by a parabola through
/// its neighbours. Maxima at the noise floor are ignored; series with fewer
/// than three maxima are returned unchanged.
pub fn peak_envelope(series: &ResidualSeries) -> ResidualSeries {
    let (t, v) = (&series.times, &series.values);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 1..v.len().saturating_sub(1) {
        if !(v[k] > v[k - 1] && v[k] >= v[k + 1]) || v[k] <= series.noise_floor {
            continue;
        }
        let curv = v[k - 1] - 2.0 * v[k] + v[k + 1];
        let h = 0.5 * (t[k + 1] - t[k - 1]);
        if curv < 0.0 {
            let skew = v[k - 1] - v[k + 1];
            times.push(t[k] + h * skew / (2.0 * curv));
            values.push(v[k] - skew * skew / (8.0 * curv));
        } else {
            times.push(t[k]);
            values.push(v[k]);
        }
    }
    if times.len() < 3 {
        return series.clone();
    }
    ResidualSeries { times, values, noise_floor: series.noise_floor }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares of `ln v` against `t`.
pub fn fit_log_linear(times: &[f64], values: &[f64]) -> Result<LogLinearFit> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::FitDegenerate(format!("need at least 3 points, got {}", times.len().min(values.len()))));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::FitDegenerate(format!("residual {v} has no logarithm")));
    }
    let n = times.len() as f64;
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let tm = times.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (t, y) in times.iter().zip(&y) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    if stt == 0.0 {
        return Err(Error::FitDegenerate("all samples at one time".into()));
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (t, y) in times.iter().zip(&y) {
        let r = y - (intercept + slope * t);
        ss_res += r * r;
        ss_tot += (y - ym) * (y - ym);
    }
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LogLinearFit { slope, intercept, r_squared, points: times.len() })
}

const STABLE_RUN: usize = 5;
const STABLE_SPREAD: f64 = 0.05;

/// Window from the first point where five consecutive log-slopes agree within
/// 5% to the last point above the noise floor.
pub fn auto_window(series: &ResidualSeries) -> Result<(f64, f64)> {
    let (t, v) = (&series.times, &series.values);
    let live = v.iter().take_while(|x| **x > series.noise_floor).count();
    let slopes: Vec<f64> = (1..live).map(|k| (v[k].ln() - v[k - 1].ln()) / (t[k] - t[k - 1])).collect();
    let start = (0..slopes.len().saturating_sub(STABLE_RUN - 1)).find(|&k| {
        let run = &slopes[k..k + STABLE_RUN];
        let mean = run.iter().sum::<f64>() / STABLE_RUN as f64;
        mean < 0.0 && run.iter().all(|s| (s - mean).abs() <= STABLE_SPREAD * mean.abs())
    });
    match start {
        Some(k) if live >= k + 3 => Ok((t[k], t[live - 1])),
        _ => Err(Error::FitDegenerate("residual never settles into exponential decay".into())),
    }
}

/// Fits the peak envelope of `series` over `window`, or over [`auto_window`].
pub fn fit_residual(series: &ResidualSeries, window: Option<(f64, f64)>) -> Result<(LogLinearFit, (f64, f64))> {
    let env = peak_envelope(series);
    let window = match window {
        Some(w) => w,
        None => auto_window(&env)?,
    };
    let (t0, t1) = window;
    if !(t0 < t1) {
        return Err(Error::InvalidParameter(format!("fit window [{t0}, {t1}] is empty")));
    }
    let (mut ts, mut vs) = (Vec::new(), Vec::new());
    for (t, v) in env.times.iter().zip(&env.values) {
        if *t >= t0 && *t <= t1 {
            if *v <= env.noise_floor {
                return Err(Error::FitDegenerate(format!(
                    "residual {v:e} at t = {t} is at the noise floor; end the window earlier"
                )));
            }
            ts.push(*t);
            vs.push(*v);
        }
    }
    Ok((fit_log_linear(&ts, &vs)?, window))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub alpha_observed: f64,
    pub alpha_predicted: f64,
    pub lambda_min: f64,
    pub r_squared: f64,
    pub fit_window: (f64, f64),
    pub points: usize,
}

/// Observed decay rate toward `target` against the linearised prediction.
///
/// Two agents use `|r_12 - r_12*|`; larger systems use the centroid-aligned
/// configuration distance.
pub fn fit_decay_rate(
    traj: &Trajectory,
    params: &SystemParams,
    target: &Configuration,
    window: Option<(f64, f64)>,
) -> Result<RateFit> {
    let series = if target.len() == 2 {
        separation_residual(traj, 0, 1, target.distance(0, 1))
    } else {
        configuration_residual(traj, target)?
    };
    rate_fit_from(&series, params, target, window)
}

/// As [`fit_decay_rate`] on a caller-built residual.
pub fn rate_fit_from(
    series: &ResidualSeries,
    params: &SystemParams,
    target: &Configuration,
    window: Option<(f64, f64)>,
) -> Result<RateFit> {
    let (fit, fit_window) = fit_residual(series, window)?;
    let pred = predicted_rate(params, target)?;
    Ok(RateFit {
        alpha_observed: -fit.slope,
        alpha_predicted: pred.alpha,
        lambda_min: pred.lambda_min,
        r_squared: fit.r_squared,
        fit_window,
        points: fit.points,
    })
}
