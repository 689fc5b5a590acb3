//! Dormand-Prince 5(4) with a PI step-size controller.

use super::{scaled_rms, Attempt, Dynamics, StepStats, Stepper};
use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

pub(crate) struct Dopri5<'a> {
    dynamics: &'a Dynamics<'a>,
    rtol: f64,
    atol: f64,
    k: Vec<Vec<f64>>,
    stage: Vec<f64>,
    err_prev: f64,
    stats: StepStats,
}

impl<'a> Dopri5<'a> {
    pub(crate) fn new(dynamics: &'a Dynamics<'a>, rtol: f64, atol: f64) -> Self {
        let n = dynamics.dim();
        Self {
            dynamics,
            rtol,
            atol,
            k: vec![vec![0.0; n]; 7],
            stage: vec![0.0; n],
            err_prev: 1e-4,
            stats: StepStats::default(),
        }
    }

    fn eval(&mut self, s: usize) -> Result<bool> {
        self.stats.rhs_evals += 1;
        let (_, rest) = self.k.split_at_mut(s);
        match self.dynamics.eval(&self.stage, &mut rest[0]) {
            Ok(()) => Ok(true),
            Err(Error::Collision { .. }) => {
                self.stats.rejected += 1;
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }
}

impl Stepper for Dopri5<'_> {
    fn attempt(&mut self, y: &[f64], h: f64) -> Result<Option<Attempt>> {
        let n = y.len();
        debug_assert_eq!(C[0], 0.0);
        self.stage.copy_from_slice(y);
        if !self.eval(0)? {
            return Ok(None);
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().take(s).enumerate() {
                    acc += a * self.k[j][i];
                }
                self.stage[i] = y[i] + h * acc;
            }
            if !self.eval(s)? {
                return Ok(None);
            }
        }
        // Stage 7 is evaluated at the fifth-order solution (FSAL layout).
        let y_new = self.stage.clone();
        let err: Vec<f64> = (0..n)
            .map(|i| h * E.iter().zip(&self.k).map(|(e, k)| e * k[i]).sum::<f64>())
            .collect();
        let error = scaled_rms(&err, y, &y_new, self.rtol, self.atol);
        if !error.is_finite() {
            self.stats.rejected += 1;
            return Ok(None);
        }
        Ok(Some(Attempt { y_new, error }))
    }

    fn accept_factor(&mut self, err: f64) -> f64 {
        self.stats.accepted += 1;
        let err = err.max(1e-10);
        let fac = SAFETY * err.powf(-(0.2 - 0.75 * BETA)) * self.err_prev.powf(BETA);
        self.err_prev = err.max(1e-4);
        fac.clamp(MIN_FACTOR, MAX_FACTOR)
    }

    fn reject_factor(&mut self, err: f64) -> f64 {
        self.stats.rejected += 1;
        (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
    }

    fn stats(&self) -> StepStats {
        self.stats
    }
}
