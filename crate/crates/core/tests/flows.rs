use cms_lab::heat::{coefficient_flow, pde_residual, poly_from_angles, poly_from_roots, roots_from_poly, unit_roots_from_poly};
use cms_lab::ode::{self, SolveConfig};
use cms_lab::orthopoly::{self, Classical};
use cms_lab::{Model, State};

#[test]
fn hermite_zero_sum_of_squares() {
    let z = orthopoly::zeros(&Classical::<f64>::Hermite, 5).unwrap();
    let s: f64 = z.zeros.iter().map(|v| v * v).sum();
    assert!((s - 10.0).abs() < 1e-12);
}

#[test]
fn hermite_from_the_origin_is_self_similar() {
    let m = Model::hermite(4);
    let z = orthopoly::zeros(&Classical::<f64>::Hermite, 4).unwrap().zeros;
    let cfg = SolveConfig::until(1.0).with_output_times(vec![0.1, 1.0]);
    let tr = ode::solve(&m, &State::at_zero(vec![0.0; 4]), &cfg).unwrap();
    for s in &tr.samples {
        for (x, zi) in s.coords.iter().zip(&z) {
            assert!((x - (2.0 * s.time).sqrt() * zi).abs() < 1e-6);
        }
    }
}

#[test]
fn coefficient_flow_matches_the_particles() {
    let t = 0.6;
    let cases = [
        (Model::hermite(3), vec![-1.0, 0.1, 0.8]),
        (Model::laguerre(3, 1.2), vec![0.3, 0.7, 1.5]),
        (Model::jacobi(3, 3.5, 4.5), vec![-0.6, 0.0, 0.5]),
    ];
    for (m, x0) in cases {
        let tr = ode::solve(&m, &State::at_zero(x0.clone()), &SolveConfig::until(t)).unwrap();
        let p = coefficient_flow(&m, &poly_from_roots(m.family, &x0).unwrap(), t).unwrap();
        let r = roots_from_poly(&p).unwrap();
        for (a, b) in r.iter().zip(&tr.last().coords) {
            assert!((a - b).abs() < 1e-7, "{:?}", m.family);
        }
    }
    let m = Model::torus(3);
    let x0 = vec![0.2, 1.9, 4.0];
    let tr = ode::solve(&m, &State::at_zero(x0.clone()), &SolveConfig::until(t)).unwrap();
    let p = coefficient_flow(&m, &poly_from_angles(&x0), t).unwrap();
    let r = unit_roots_from_poly(&p, Some(x0.iter().sum())).unwrap();
    for (a, b) in r.iter().zip(&tr.last().coords) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn solver_output_solves_the_heat_equation() {
    let m = Model::hermite(3);
    let times: Vec<f64> = (0..=50).map(|i| 0.1 + i as f64 * 1e-4).collect();
    let cfg = SolveConfig { rel_tol: 1e-13, abs_tol: 1e-15, max_step: 0.01, ..SolveConfig::until(0.105) }
        .with_output_times(times);
    let tr = ode::solve(&m, &State::at_zero(vec![-1.0, 0.2, 1.1]), &cfg).unwrap();
    assert!(pde_residual(&tr).unwrap() < 1e-6);
}
