//! Three-stage Radau IIA (order 5).
//!
//! The stage increments `Z_i = Y_i - y0` solve
//! `Z = h (A ⊗ I) F(y0 + Z)`; each step runs simplified Newton on
//! `I - h (A ⊗ J)` with `J` the analytic Jacobian at `y0`. The local error
//! estimate is the embedded one of Hairer and Wanner's `radau5`:
//! `err = ((u1/h) I - J)^-1 (f(y0) + (d1 z1 + d2 z2 + d3 z3) / h)`.

use nalgebra::{DMatrix, DVector};

use super::{scaled_rms, Attempt, Dynamics, StepStats, Stepper};
use crate::error::{Error, Result};

const MAX_NEWTON: usize = 7;

struct Tableau {
    a: [[f64; 3]; 3],
    /// Real eigenvalue of `A^-1`.
    u1: f64,
    /// Error-estimate weights on the stage increments.
    d: [f64; 3],
}

fn tableau() -> Tableau {
    let s6 = 6f64.sqrt();
    Tableau {
        a: [
            [(88.0 - 7.0 * s6) / 360.0, (296.0 - 169.0 * s6) / 1800.0, (-2.0 + 3.0 * s6) / 225.0],
            [(296.0 + 169.0 * s6) / 1800.0, (88.0 + 7.0 * s6) / 360.0, (-2.0 - 3.0 * s6) / 225.0],
            [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
        ],
        u1: 30.0 / (6.0 + 81f64.cbrt() - 9f64.cbrt()),
        d: [-(13.0 + 7.0 * s6) / 3.0, (-13.0 + 7.0 * s6) / 3.0, -1.0 / 3.0],
    }
}

pub(crate) struct Radau5<'a> {
    dynamics: &'a Dynamics<'a>,
    rtol: f64,
    atol: f64,
    newton_tol: f64,
    tab: Tableau,
    first: bool,
    last_rejected: bool,
    stats: StepStats,
}

impl<'a> Radau5<'a> {
    pub(crate) fn new(dynamics: &'a Dynamics<'a>, rtol: f64, atol: f64) -> Self {
        let newton_tol = (10.0 * f64::EPSILON / rtol).max(0.03f64.min(rtol.sqrt()));
        Self {
            dynamics,
            rtol,
            atol,
            newton_tol,
            tab: tableau(),
            first: true,
            last_rejected: false,
            stats: StepStats::default(),
        }
    }

    /// `f(y)`, or `None` when `y` lies in the collision set.
    fn eval(&mut self, y: &[f64]) -> Result<Option<Vec<f64>>> {
        self.stats.rhs_evals += 1;
        let mut out = vec![0.0; y.len()];
        match self.dynamics.eval(y, &mut out) {
            Ok(()) => Ok(Some(out)),
            Err(Error::Collision { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn give_up(&mut self) -> Result<Option<Attempt>> {
        self.stats.rejected += 1;
        self.last_rejected = true;
        Ok(None)
    }
}

impl Stepper for Radau5<'_> {
    fn attempt(&mut self, y: &[f64], h: f64) -> Result<Option<Attempt>> {
        let n = y.len();
        let jac = self.dynamics.jacobian(y)?;
        self.stats.jacobian_evals += 1;
        let Some(f0) = self.eval(y)? else {
            return self.give_up();
        };

        let mut m = DMatrix::<f64>::identity(3 * n, 3 * n);
        for bi in 0..3 {
            for bj in 0..3 {
                let c = h * self.tab.a[bi][bj];
                for r in 0..n {
                    for col in 0..n {
                        m[(bi * n + r, bj * n + col)] -= c * jac[(r, col)];
                    }
                }
            }
        }
        let lu = m.lu();

        let scal: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
        let mut z = vec![0.0; 3 * n];
        let mut stage = vec![0.0; n];
        let mut prev_norm = f64::NAN;
        let mut converged = false;
        for iter in 0..MAX_NEWTON {
            let mut fz = Vec::with_capacity(3);
            for s in 0..3 {
                for k in 0..n {
                    stage[k] = y[k] + z[s * n + k];
                }
                match self.eval(&stage)? {
                    Some(f) => fz.push(f),
                    None => return self.give_up(),
                }
            }
            let mut g = DVector::<f64>::zeros(3 * n);
            for s in 0..3 {
                for k in 0..n {
                    let mut acc = 0.0;
                    for (j, f) in fz.iter().enumerate() {
                        acc += self.tab.a[s][j] * f[k];
                    }
                    g[s * n + k] = h * acc - z[s * n + k];
                }
            }
            let Some(dz) = lu.solve(&g) else {
                return self.give_up();
            };
            let mut sum = 0.0;
            for s in 0..3 {
                for k in 0..n {
                    let v = dz[s * n + k] / scal[k];
                    sum += v * v;
                }
            }
            let norm = (sum / (3 * n) as f64).sqrt();
            z.iter_mut().zip(dz.iter()).for_each(|(zi, di)| *zi += di);
            if !norm.is_finite() {
                return self.give_up();
            }
            let done = if iter == 0 {
                norm <= 0.1 * self.newton_tol
            } else {
                let theta = norm / prev_norm;
                if theta >= 0.99 {
                    return self.give_up();
                }
                theta / (1.0 - theta) * norm <= self.newton_tol
            };
            prev_norm = norm;
            if done || norm == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return self.give_up();
        }

        let y_new: Vec<f64> = (0..n).map(|k| y[k] + z[2 * n + k]).collect();

        let mut e1 = -jac;
        for k in 0..n {
            e1[(k, k)] += self.tab.u1 / h;
        }
        let e1 = e1.lu();
        let d = &self.tab.d;
        let f2: Vec<f64> = (0..n).map(|k| (d[0] * z[k] + d[1] * z[n + k] + d[2] * z[2 * n + k]) / h).collect();
        let rhs = DVector::from_iterator(n, (0..n).map(|k| f0[k] + f2[k]));
        let Some(mut est) = e1.solve(&rhs) else {
            return self.give_up();
        };
        let mut error = scaled_rms(est.as_slice(), y, &y_new, self.rtol, self.atol);
        if error >= 1.0 && (self.first || self.last_rejected) {
            // Filter the estimate once more to suppress its stiff components.
            let probe: Vec<f64> = (0..n).map(|k| y[k] + est[k]).collect();
            let Some(f1) = self.eval(&probe)? else {
                return self.give_up();
            };
            let rhs = DVector::from_iterator(n, (0..n).map(|k| f1[k] + f2[k]));
            let Some(refined) = e1.solve(&rhs) else {
                return self.give_up();
            };
            est = refined;
            error = scaled_rms(est.as_slice(), y, &y_new, self.rtol, self.atol);
        }
        if !error.is_finite() {
            return self.give_up();
        }
        Ok(Some(Attempt { y_new, error }))
    }

    fn accept_factor(&mut self, err: f64) -> f64 {
        self.stats.accepted += 1;
        self.first = false;
        self.last_rejected = false;
        (0.9 * err.max(1e-10).powf(-0.25)).clamp(0.2, 8.0)
    }

    fn reject_factor(&mut self, err: f64) -> f64 {
        self.stats.rejected += 1;
        self.last_rejected = true;
        (0.9 * err.powf(-0.25)).clamp(0.2, 1.0)
    }

    fn stats(&self) -> StepStats {
        self.stats
    }
}
