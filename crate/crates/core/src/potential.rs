//! Lennard-Jones 12-6 pair potential and the quantities derived from it.
//!
//! ```text
//! phi(r)   = 4a [ (s/r)^12 - (s/r)^6 ]
//! f(r)     = -phi'(r) = (24a / r) [ 2 (s/r)^12 - (s/r)^6 ]
//! phi''(r) = (24a / r^2) [ 26 (s/r)^12 - 7 (s/r)^6 ]
//! ```
//!
//! `f > 0` is repulsive and `f < 0` attractive. The pair force vanishes at
//! `r* = 2^(1/6) s`, where `phi(r*) = -a` and `phi''(r*) = 72a / (2^(1/3) s^2)`.
//!
//! Every kernel visits pairs in the same `i < j` order, so repeated calls on
//! the same configuration are bit-identical.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Configuration, SystemParams};

fn check_domain(sigma: f64, r: f64, a: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(r));
    }
    if !(sigma > 0.0) || !(a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma and well depth must be positive, got sigma = {sigma}, a = {a}"
        )));
    }
    Ok(())
}

/// `(s/r)^6` and `(s/r)^12`.
#[inline]
fn ratio_powers(sigma: f64, r: f64) -> (f64, f64) {
    let s = sigma / r;
    let s2 = s * s;
    let s6 = s2 * s2 * s2;
    (s6, s6 * s6)
}

#[inline]
fn phi_unchecked(sigma: f64, r: f64, a: f64) -> f64 {
    let (s6, s12) = ratio_powers(sigma, r);
    4.0 * a * (s12 - s6)
}

#[inline]
fn force_unchecked(sigma: f64, r: f64, a: f64) -> f64 {
    let (s6, s12) = ratio_powers(sigma, r);
    24.0 * a / r * (2.0 * s12 - s6)
}

#[inline]
fn second_derivative_unchecked(sigma: f64, r: f64, a: f64) -> f64 {
    let (s6, s12) = ratio_powers(sigma, r);
    24.0 * a / (r * r) * (26.0 * s12 - 7.0 * s6)
}

/// Pair potential `4a[(s/r)^12 - (s/r)^6]`.
pub fn phi(sigma: f64, r: f64, a: f64) -> Result<f64> {
    check_domain(sigma, r, a)?;
    Ok(phi_unchecked(sigma, r, a))
}

/// Radial pair force `-dphi/dr`; positive means repulsion.
pub fn pair_force_magnitude(sigma: f64, r: f64, a: f64) -> Result<f64> {
    check_domain(sigma, r, a)?;
    Ok(force_unchecked(sigma, r, a))
}

/// `d^2 phi / dr^2`.
pub fn phi_second_derivative(sigma: f64, r: f64, a: f64) -> Result<f64> {
    check_domain(sigma, r, a)?;
    Ok(second_derivative_unchecked(sigma, r, a))
}

/// Distance at which the pair force vanishes, `2^(1/6) sigma`.
pub fn zero_force_distance(sigma: f64) -> f64 {
    2f64.powf(1.0 / 6.0) * sigma
}

fn pair_distance(positions: &[f64], d: usize, i: usize, j: usize) -> Result<(f64, [f64; 3])> {
    let mut diff = [0.0; 3];
    let mut r2 = 0.0;
    for k in 0..d {
        let dk = positions[i * d + k] - positions[j * d + k];
        diff[k] = dk;
        r2 += dk * dk;
    }
    if r2 == 0.0 {
        return Err(Error::Collision { i, j });
    }
    Ok((r2.sqrt(), diff))
}

/// Total potential `U = sum_{i<j} phi(sigma_ij, r_ij)`.
pub fn total_potential(config: &Configuration, params: &SystemParams) -> Result<f64> {
    params.check_shape(config)?;
    potential_of_positions(params, config.positions())
}

pub(crate) fn potential_of_positions(params: &SystemParams, positions: &[f64]) -> Result<f64> {
    let d = params.dimension();
    let a = params.well_depth();
    let mut u = 0.0;
    for (i, j) in params.pairs() {
        let (r, _) = pair_distance(positions, d, i, j)?;
        u += phi_unchecked(params.sigma(i, j), r, a);
    }
    Ok(u)
}

/// Writes `grad_x U` into `out` (length `N d`).
///
/// Row `i` is `-sum_{j != i} f_ij r_hat_ij` with `r_hat_ij` pointing from `j` to `i`.
pub(crate) fn gradient_into(params: &SystemParams, positions: &[f64], out: &mut [f64]) -> Result<()> {
    let d = params.dimension();
    let a = params.well_depth();
    out.iter_mut().for_each(|g| *g = 0.0);
    for (i, j) in params.pairs() {
        let (r, diff) = pair_distance(positions, d, i, j)?;
        // phi'(r) / r times (x_i - x_j) is the gradient contribution on agent i.
        let coef = -force_unchecked(params.sigma(i, j), r, a) / r;
        for k in 0..d {
            let g = coef * diff[k];
            out[i * d + k] += g;
            out[j * d + k] -= g;
        }
    }
    Ok(())
}

/// Gradient of the total potential, one row per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    dimension: usize,
    entries: Vec<f64>,
}

impl GradientVector {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Euclidean norm over all `N d` entries.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn inf_norm(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Sum of all rows; zero up to rounding because `U` depends only on differences.
    pub fn row_sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dimension];
        for row in self.entries.chunks(self.dimension) {
            for (sk, gk) in s.iter_mut().zip(row) {
                *sk += gk;
            }
        }
        s
    }
}

/// `grad_x U`. The force on agent `i` is the negated row `i`.
pub fn gradient(config: &Configuration, params: &SystemParams) -> Result<GradientVector> {
    params.check_shape(config)?;
    let mut entries = vec![0.0; config.positions().len()];
    gradient_into(params, config.positions(), &mut entries)?;
    Ok(GradientVector { dimension: params.dimension(), entries })
}

pub(crate) fn hessian_of_positions(params: &SystemParams, positions: &[f64]) -> Result<DMatrix<f64>> {
    let d = params.dimension();
    let a = params.well_depth();
    let n = params.len();
    let mut h = DMatrix::zeros(n * d, n * d);
    for (i, j) in params.pairs() {
        let (r, diff) = pair_distance(positions, d, i, j)?;
        let sigma = params.sigma(i, j);
        let dphi = -force_unchecked(sigma, r, a);
        let d2phi = second_derivative_unchecked(sigma, r, a);
        let tangential = dphi / r;
        let radial = d2phi - tangential;
        for k in 0..d {
            for l in 0..d {
                let mut b = radial * (diff[k] / r) * (diff[l] / r);
                if k == l {
                    b += tangential;
                }
                h[(i * d + k, i * d + l)] += b;
                h[(j * d + k, j * d + l)] += b;
                h[(i * d + k, j * d + l)] -= b;
                h[(j * d + k, i * d + l)] -= b;
            }
        }
    }
    Ok(h)
}

/// Hessian of the total potential, a symmetric `(N d) × (N d)` matrix.
///
/// Each pair contributes the block `B = (phi'' - phi'/r) r_hat r_hat^T + (phi'/r) I`
/// with `+B` on the two diagonal blocks and `-B` on the off-diagonal ones.
pub fn hessian(config: &Configuration, params: &SystemParams) -> Result<DMatrix<f64>> {
    params.check_shape(config)?;
    hessian_of_positions(params, config.positions())
}

/// Lower bound `2a s_min^12 sum 1/r_ij^12 - 2a C(N,2)` on the total potential.
///
/// Holds because `phi >= 2a (s/r)^12 - 2a` pointwise, the gap being `2a((s/r)^6 - 1)^2`.
pub fn potential_lower_bound(config: &Configuration, params: &SystemParams) -> Result<f64> {
    params.check_shape(config)?;
    let a = params.well_depth();
    let s12 = params.sigma_min().powi(12);
    let mut inv = 0.0;
    for (i, j) in params.pairs() {
        let r = config.distance(i, j);
        if r == 0.0 {
            return Err(Error::Collision { i, j });
        }
        inv += r.powi(-12);
    }
    Ok(2.0 * a * s12 * inv - 2.0 * a * params.pair_count() as f64)
}

/// Uniform lower bound on every inter-agent distance for a run with initial energy `e0`:
/// `(2a s_min^12 / (E0 + 2a C(N,2)))^(1/12)`.
pub fn collision_bound(e0: f64, params: &SystemParams) -> Result<f64> {
    let a = params.well_depth();
    let denom = e0 + 2.0 * a * params.pair_count() as f64;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::InvalidEnergy(denom));
    }
    Ok((2.0 * a * params.sigma_min().powi(12) / denom).powf(1.0 / 12.0))
}

/// Closed-form bounds evaluated at an initial configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    /// Total energy of the configuration (kinetic plus potential).
    pub e0: f64,
    /// Guaranteed lower bound on all future inter-agent distances.
    pub r_min_theory: f64,
    /// Lower bound on the potential at this configuration.
    pub u_lower: f64,
    pub sigma_min: f64,
}

pub fn bound_report(config: &Configuration, params: &SystemParams) -> Result<BoundReport> {
    let u = total_potential(config, params)?;
    let kinetic: f64 = (0..config.len())
        .map(|i| 0.5 * params.agent(i).mass * config.velocity(i).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let e0 = kinetic + u;
    Ok(BoundReport {
        e0,
        r_min_theory: collision_bound(e0, params)?,
        u_lower: potential_lower_bound(config, params)?,
        sigma_min: params.sigma_min(),
    })
}
