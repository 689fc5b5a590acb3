use ljform::analysis::{classify_equilibrium, fit_log_linear, fit_residual, ResidualSeries};
use ljform::model::{Configuration, SystemParams};
use ljform::potential::{gradient, hessian, phi, potential_lower_bound, total_potential, zero_force_distance};
use proptest::prelude::*;

const MIN_GAP: f64 = 0.35;

fn system(n: usize, d: usize) -> impl Strategy<Value = (SystemParams, Configuration)> {
    (
        prop::collection::vec(0.15f64..0.35, n),
        0.5f64..2.0,
        prop::collection::vec(-1.5f64..1.5, n * d),
    )
        .prop_filter_map("agents too close", move |(radii, a, pos)| {
            let agents: Vec<(f64, f64, f64)> = radii.iter().map(|q| (1.0, 0.8, *q)).collect();
            let params = ljform::model::build_system(&agents, a, d).ok()?;
            let config = Configuration::at_rest(d, pos).ok()?;
            (config.min_distance() > MIN_GAP).then_some((params, config))
        })
}

fn any_system() -> impl Strategy<Value = (SystemParams, Configuration)> {
    (prop::sample::select(vec![2usize, 3, 5]), 2usize..=3).prop_flat_map(|(n, d)| system(n, d))
}

fn potential_at(params: &SystemParams, d: usize, pos: &[f64]) -> f64 {
    total_potential(&Configuration::at_rest(d, pos.to_vec()).unwrap(), params).unwrap()
}

/// Fourth-order central difference of `U`.
fn fd_gradient(params: &SystemParams, config: &Configuration) -> Vec<f64> {
    let d = config.dimension();
    let h = 1e-4 * config.min_distance();
    let x = config.positions().to_vec();
    (0..x.len())
        .map(|k| {
            let at = |s: f64| {
                let mut y = x.clone();
                y[k] += s * h;
                potential_at(params, d, &y)
            };
            (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_minimum_is_minus_depth(sigma in 0.05f64..5.0, a in 0.01f64..100.0) {
        let r = zero_force_distance(sigma);
        prop_assert!((phi(sigma, r, a).unwrap() + a).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn gradient_matches_finite_differences((params, config) in any_system()) {
        let g = gradient(&config, &params).unwrap();
        let fd = fd_gradient(&params, &config);
        let diff: Vec<f64> = g.entries().iter().zip(&fd).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= 1e-6 * norm(g.entries()), "{} vs {}", norm(&diff), norm(g.entries()));
    }

    #[test]
    fn gradient_rows_cancel((params, config) in any_system()) {
        let g = gradient(&config, &params).unwrap();
        let scale = g.norm().max(1.0);
        for s in g.row_sum() {
            prop_assert!(s.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn hessian_is_symmetric_derivative_of_gradient((params, config) in any_system()) {
        let h = hessian(&config, &params).unwrap();
        let d = config.dimension();
        let step = 1e-5 * config.min_distance();
        let x = config.positions().to_vec();
        let grad_at = |y: &[f64]| gradient(&Configuration::at_rest(d, y.to_vec()).unwrap(), &params).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..x.len() {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[k] += step;
            dn[k] -= step;
            let (gu, gd) = (grad_at(&up), grad_at(&dn));
            for r in 0..x.len() {
                let fd = (gu.entries()[r] - gd.entries()[r]) / (2.0 * step);
                err = err.max((h[(r, k)] - fd).abs());
            }
        }
        let scale = h.abs().max();
        prop_assert!(err <= 1e-5 * scale, "{err} vs {scale}");
        prop_assert!((&h - h.transpose()).abs().max() <= 1e-12 * scale);
    }

    #[test]
    fn translations_span_hessian_null_space((params, config) in any_system()) {
        let h = hessian(&config, &params).unwrap();
        let d = config.dimension();
        let radius = h.clone().symmetric_eigen().eigenvalues.abs().max();
        for c in 0..d {
            let t = nalgebra::DVector::from_fn(h.nrows(), |k, _| if k % d == c { 1.0 } else { 0.0 });
            let ht = &h * &t;
            prop_assert!(ht.norm() / t.norm() <= 1e-8 * radius);
        }
    }

    #[test]
    fn potential_is_rigid_motion_invariant((params, config) in system(4, 2), dx in -3.0f64..3.0, dy in -3.0f64..3.0, angle in 0.0f64..6.3) {
        let u = total_potential(&config, &params).unwrap();
        let moved = config.translated(&[dx, dy]).unwrap().rotated_xy(angle).unwrap();
        prop_assert!((total_potential(&moved, &params).unwrap() - u).abs() <= 1e-10 * u.abs().max(1.0));
    }

    #[test]
    fn lower_bound_holds((params, config) in any_system()) {
        let u = total_potential(&config, &params).unwrap();
        prop_assert!(potential_lower_bound(&config, &params).unwrap() <= u);
    }

    #[test]
    fn classification_ignores_rigid_motion(sigma in 0.3f64..1.0, dx in -5.0f64..5.0, dy in -5.0f64..5.0, angle in 0.0f64..6.3) {
        let params = SystemParams::uniform(3, 1.0, 0.8, sigma / 2.0, 1.0, 2).unwrap();
        let s = zero_force_distance(sigma);
        let tri = Configuration::from_points(&[[0.0, 0.0], [s, 0.0], [s / 2.0, 3f64.sqrt() / 2.0 * s]]).unwrap();
        let base = classify_equilibrium(&tri, &params).unwrap();
        let moved = tri.translated(&[dx, dy]).unwrap().rotated_xy(angle).unwrap();
        let rep = classify_equilibrium(&moved, &params).unwrap();
        prop_assert_eq!(rep.classification, base.classification);
        prop_assert_eq!(rep.is_equilibrium, base.is_equilibrium);
        prop_assert!((rep.nonzero_spectrum_min - base.nonzero_spectrum_min).abs() <= 1e-8 * base.nonzero_spectrum_min.abs());
    }

    #[test]
    fn planted_rate_is_recovered(rate in 0.01f64..5.0, c in 1e-3f64..1e3, dt in 0.001f64..0.1) {
        let times: Vec<f64> = (0..400).map(|k| k as f64 * dt).collect();
        let values: Vec<f64> = times.iter().map(|t| c * (-rate * t).exp()).collect();
        let fit = fit_log_linear(&times, &values).unwrap();
        prop_assert!((-fit.slope - rate).abs() <= 1e-10 * rate);
        let series = ResidualSeries { times, values, noise_floor: 0.0 };
        let (fit, _) = fit_residual(&series, None).unwrap();
        prop_assert!((-fit.slope - rate).abs() <= 1e-10 * rate);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
    }
}
