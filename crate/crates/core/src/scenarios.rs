//! Built-in experiments and the analytic equilibria they should reach.
//!
//! All built-ins use the reference parameters: unit mass and well depth,
//! damping 0.8, bubble radius 0.25 (so `sigma = 0.5`), `d = 2`.

use crate::error::{Error, Result};
use crate::model::{Configuration, SystemParams};
use crate::potential::{pair_force_magnitude, phi, zero_force_distance};

pub const MASS: f64 = 1.0;
pub const WELL_DEPTH: f64 = 1.0;
pub const DAMPING: f64 = 0.8;
pub const RADIUS: f64 = 0.25;
pub const SIGMA: f64 = 2.0 * RADIUS;

/// Initial separation of the two-agent run.
pub const TWO_AGENT_SEPARATION: f64 = 0.7296;
/// Side of the initial equilateral triangle, in units of `2^(1/6) sigma`.
pub const EQUILATERAL_SIDE_FACTOR: f64 = 1.2;
pub const EQUILATERAL_DEFAULT_PERTURBATION: f64 = 0.02;
/// Initial spacing of the collinear run, in units of `sigma`.
pub const COLLINEAR_SPACING_FACTOR: f64 = 1.3;
/// Half width of the square used by [`n_agent_random`] when none is given.
pub const RANDOM_BOX_HALF_WIDTH: f64 = 1.0;
/// Minimum initial separation of random placements, in units of `sigma_min`.
pub const RANDOM_MIN_SEPARATION_FACTOR: f64 = 1.0;
pub const MAX_REJECTIONS: usize = 10_000;

/// What a scenario is expected to converge to.
#[derive(Clone, Debug, PartialEq)]
pub struct Expected {
    /// Final pairwise distances in `i < j` order.
    pub pair_distances: Option<Vec<f64>>,
    pub e_infinity: Option<f64>,
    pub r_min_theory: Option<f64>,
    /// Where the numbers come from.
    pub provenance: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: SystemParams,
    pub initial: Configuration,
    pub expected: Option<Expected>,
    pub seed: Option<u64>,
}

/// Reference parameters for `n` identical agents in the plane.
pub fn reference_params(n: usize) -> Result<SystemParams> {
    SystemParams::uniform(n, MASS, DAMPING, RADIUS, WELL_DEPTH, 2)
}

pub fn two_agent() -> Scenario {
    let params = reference_params(2).expect("valid reference parameters");
    let initial = Configuration::from_points(&[[0.0, 0.0], [TWO_AGENT_SEPARATION, 0.0]])
        .expect("separated agents");
    Scenario {
        name: "two_agent".into(),
        params,
        initial,
        expected: Some(Expected {
            pair_distances: Some(vec![zero_force_distance(SIGMA)]),
            e_infinity: Some(-WELL_DEPTH),
            r_min_theory: Some(0.5085),
            provenance: "pair minimum at 2^(1/6) sigma with depth -a; collision bound about 0.5085",
        }),
        seed: None,
    }
}

// Fixed, non-symmetric displacement directions for the three vertices.
const VERTEX_NUDGE: [[f64; 2]; 3] = [[0.6, 0.8], [-0.8, 0.6], [0.28, -0.96]];

/// Equilateral triangle of side `1.2 · 2^(1/6) sigma`, vertices nudged by `perturbation`.
pub fn equilateral_three(perturbation: f64) -> Result<Scenario> {
    equilateral_with_side(EQUILATERAL_SIDE_FACTOR * zero_force_distance(SIGMA), perturbation)
}

/// Equilateral triangle with the given side, vertices nudged by `perturbation`.
pub fn equilateral_with_side(side: f64, perturbation: f64) -> Result<Scenario> {
    if !(perturbation >= 0.0) || !perturbation.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "perturbation must be nonnegative, got {perturbation}"
        )));
    }
    if !(side > 0.0) {
        return Err(Error::InvalidParameter(format!("side must be positive, got {side}")));
    }
    let base = [[0.0, 0.0], [side, 0.0], [side / 2.0, 3f64.sqrt() / 2.0 * side]];
    let mut pts = [[0.0; 2]; 3];
    for k in 0..3 {
        for c in 0..2 {
            pts[k][c] = base[k][c] + perturbation * VERTEX_NUDGE[k][c];
        }
    }
    let params = reference_params(3)?;
    let initial = Configuration::from_points(&pts)?;
    let rstar = zero_force_distance(SIGMA);
    Ok(Scenario {
        name: "equilateral".into(),
        params,
        initial,
        expected: Some(Expected {
            pair_distances: Some(vec![rstar; 3]),
            e_infinity: Some(-3.0 * WELL_DEPTH),
            r_min_theory: None,
            provenance: "every side at the pair minimum 2^(1/6) sigma, three pairs at depth -a",
        }),
        seed: None,
    })
}

/// Three agents on a line: `(-b, 0), (0, 0), (b, 0)`.
pub fn collinear_configuration(b: f64) -> Result<Configuration> {
    Configuration::from_points(&[[-b, 0.0], [0.0, 0.0], [b, 0.0]])
}

pub fn collinear_three() -> Scenario {
    let params = reference_params(3).expect("valid reference parameters");
    let initial = collinear_configuration(COLLINEAR_SPACING_FACTOR * SIGMA).expect("separated agents");
    let b = collinear_equilibrium_spacing(SIGMA, WELL_DEPTH).expect("valid sigma and depth");
    let e_inf = 2.0 * phi(SIGMA, b, WELL_DEPTH).unwrap() + phi(SIGMA, 2.0 * b, WELL_DEPTH).unwrap();
    Scenario {
        name: "collinear".into(),
        params,
        initial,
        expected: Some(Expected {
            pair_distances: Some(vec![b, 2.0 * b, b]),
            e_infinity: Some(e_inf),
            r_min_theory: None,
            provenance: "root of the outer-agent force balance f(b) + f(2b) = 0",
        }),
        seed: None,
    }
}

/// Spacing `b*` of the symmetric collinear equilibrium: the root of
/// `f(b) + f(2b) = 0` on `[sigma, 2 sigma]`, found by bisection to full precision.
///
/// The repulsion of the middle agent balances the attraction of the far one.
/// The root does not depend on `a`; its closed form is
/// `sigma (2 (1 + 2^-13) / (1 + 2^-7))^(1/6) ≈ 1.12103 sigma`.
pub fn collinear_equilibrium_spacing(sigma: f64, a: f64) -> Result<f64> {
    let balance = |b: f64| -> Result<f64> {
        Ok(pair_force_magnitude(sigma, b, a)? + pair_force_magnitude(sigma, 2.0 * b, a)?)
    };
    let (mut lo, mut hi) = (sigma, 2.0 * sigma);
    debug_assert!(balance(lo)? > 0.0 && balance(hi)? < 0.0);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if balance(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever endpoint balances better.
    Ok(if balance(lo)?.abs() <= balance(hi)?.abs() { lo } else { hi })
}

/// SplitMix64 (Steele, Lea and Flood). Constants are the published ones, so
/// any implementation reproduces the same stream from the same seed.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `n` agents at rest, uniform in `[-w, w]^2`, no two closer than `sigma_min`.
pub fn n_agent_random(n: usize, seed: u64, box_half_width: f64) -> Result<Scenario> {
    n_agent_random_with(n, seed, box_half_width, RANDOM_MIN_SEPARATION_FACTOR * SIGMA)
}

/// As [`n_agent_random`] with an explicit minimum initial separation.
///
/// Points are drawn `x` then `y`; a draw closer than `min_separation` to an
/// already placed agent is discarded. More than [`MAX_REJECTIONS`] discards
/// is reported as a packing failure.
pub fn n_agent_random_with(
    n: usize,
    seed: u64,
    box_half_width: f64,
    min_separation: f64,
) -> Result<Scenario> {
    let params = reference_params(n)?;
    if !(box_half_width > 0.0) || !(min_separation > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "box half width and separation must be positive, got {box_half_width} and {min_separation}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut rejected = 0;
    while pts.len() < n {
        let x = -box_half_width + 2.0 * box_half_width * rng.next_f64();
        let y = -box_half_width + 2.0 * box_half_width * rng.next_f64();
        let ok = pts.iter().all(|p| ((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt() >= min_separation);
        if ok {
            pts.push([x, y]);
        } else {
            rejected += 1;
            if rejected > MAX_REJECTIONS {
                return Err(Error::Packing { n, attempts: rejected });
            }
        }
    }
    let initial = Configuration::from_points(&pts)?;
    Ok(Scenario {
        name: format!("random_{n}"),
        params,
        initial,
        expected: None,
        seed: Some(seed),
    })
}

/// Names accepted by [`by_name`].
pub const CATALOG: [(&str, &str); 5] = [
    ("two_agent", "two agents released 0.7296 apart"),
    ("equilateral", "three agents near the equilateral equilibrium"),
    ("collinear", "three agents on a line, spacing 1.3 sigma"),
    ("random8", "eight agents placed uniformly in [-1, 1]^2 (seeded)"),
    ("random", "alias of random8"),
];

/// Resolves a built-in scenario. `seed` only matters for the random ones.
pub fn by_name(name: &str, seed: u64) -> Result<Scenario> {
    match name {
        "two_agent" | "two-agent" => Ok(two_agent()),
        "equilateral" | "equilateral_three" => equilateral_three(EQUILATERAL_DEFAULT_PERTURBATION),
        "collinear" | "collinear_three" => Ok(collinear_three()),
        "random8" | "random" | "n_agent" => n_agent_random(8, seed, RANDOM_BOX_HALF_WIDTH),
        other => Err(Error::InvalidParameter(format!("unknown scenario `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{gradient, total_potential};

    #[test]
    fn two_agent_initial_state() {
        let s = two_agent();
        let e0 = total_potential(&s.initial, &s.params).unwrap();
        assert!((e0 + 0.3714).abs() < 5e-5);
        assert!((s.initial.min_distance() - 0.7296).abs() < 1e-15);
        assert!(s.initial.min_distance() > s.params.sigma_min());
        let r = s.expected.unwrap().pair_distances.unwrap()[0];
        assert!((r - 0.5612).abs() < 5e-5);
    }

    #[test]
    fn collinear_spacing_oracle() {
        let b = collinear_equilibrium_spacing(0.5, 1.0).unwrap();
        assert!((b - 0.560515).abs() < 5e-7, "{b}");
        assert!((b / 0.5 - 1.12103).abs() < 5e-6);
        let closed = 0.5 * (2.0 * (1.0 + 2f64.powi(-13)) / (1.0 + 2f64.powi(-7))).powf(1.0 / 6.0);
        assert!((b - closed).abs() < 1e-14);
        assert_eq!(b, collinear_equilibrium_spacing(0.5, 7.0).unwrap());
        assert!(b < zero_force_distance(0.5));
    }

    #[test]
    fn collinear_spacing_is_a_force_free_line() {
        let b = collinear_equilibrium_spacing(SIGMA, WELL_DEPTH).unwrap();
        let p = reference_params(3).unwrap();
        let g = gradient(&collinear_configuration(b).unwrap(), &p).unwrap();
        assert!(g.inf_norm() < 1e-10, "{}", g.inf_norm());
        // Middle agent feels nothing by symmetry at any spacing.
        let g = gradient(&collinear_configuration(0.65).unwrap(), &p).unwrap();
        assert_eq!(g.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn collinear_expected_energy() {
        let e = collinear_three().expected.unwrap().e_infinity.unwrap();
        assert!((e + 2.0311).abs() < 5e-5, "{e}");
    }

    #[test]
    fn equilateral_builders() {
        let s = equilateral_with_side(zero_force_distance(SIGMA), 0.0).unwrap();
        assert!(gradient(&s.initial, &s.params).unwrap().norm() < 1e-12);
        let s = equilateral_three(EQUILATERAL_DEFAULT_PERTURBATION).unwrap();
        assert!(s.initial.min_distance() > SIGMA);
        assert!(equilateral_three(-1.0).is_err());
    }

    #[test]
    fn splitmix_reference_stream() {
        // First outputs for seed 1234567 from the reference C implementation.
        let mut r = SplitMix64::new(1234567);
        let expected = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expected {
            assert_eq!(r.next_u64(), e);
        }
    }

    #[test]
    fn random_placement() {
        let a = n_agent_random(8, 3, 1.0).unwrap();
        let b = n_agent_random(8, 3, 1.0).unwrap();
        assert_eq!(a.initial, b.initial);
        assert_eq!(a.params.pair_count(), 28);
        assert!(a.initial.min_distance() >= SIGMA);
        assert!(a.initial.positions().iter().all(|x| x.abs() <= 1.0));
        let c = n_agent_random(8, 4, 1.0).unwrap();
        assert_ne!(a.initial, c.initial);
        assert!(matches!(n_agent_random(200, 1, 1.0), Err(Error::Packing { n: 200, .. })));
    }

    #[test]
    fn catalog_resolves() {
        for (name, _) in CATALOG {
            assert!(by_name(name, 1).is_ok(), "{name}");
        }
        assert!(by_name("nope", 1).is_err());
    }
}
