use cms_lab::expectation::{run_paths, McEstimate};
use cms_lab::model::check_chamber;
use cms_lab::ode::{self, SolveConfig};
use cms_lab::sde::{simulate, simulate_companion, CompanionKind, RngStream, SdeConfig};
use cms_lab::{Model, State};
use num_complex::Complex;

const PATHS: usize = 20_000;

fn mean_of(values: Vec<f64>) -> McEstimate {
    let v: Vec<Complex<f64>> = values.into_iter().map(|x| Complex::new(x, 0.0)).collect();
    McEstimate::from_samples(&v, 1).unwrap()
}

fn z(est: &McEstimate, target: f64) -> f64 {
    est.z_against(Complex::new(target, 0.0), Complex::new(0.0, 0.0))
}

#[test]
fn single_hermite_particle_is_brownian() {
    let m = Model::hermite(1).with_inv_temp(3.0);
    let cfg = SdeConfig::new(1e-2, 1.0);
    // the renormalised noise has variance t / k
    let sq = run_paths(PATHS, 1, |rng| {
        let x = simulate(&m, &State::at_zero(vec![0.4]), &cfg, rng, &[1.0])?;
        Ok((x[0].coords[0] - 0.4).powi(2) * 3.0)
    })
    .unwrap();
    let est = mean_of(sq);
    assert!(z(&est, 1.0) < 3.0, "{est:?}");
}

#[test]
fn laguerre_second_moment() {
    let beta = 2.0;
    let m = Model::laguerre(1, 1.0).with_inv_temp(beta);
    let cfg = SdeConfig::new(1e-3, 0.5);
    let v = run_paths(PATHS, 6, |rng| Ok(simulate(&m, &State::at_zero(vec![0.8]), &cfg, rng, &[0.5])?[0].coords[0].powi(2)))
        .unwrap();
    let est = mean_of(v);
    assert!(z(&est, 0.64 + (2.0 + 1.0 / beta) * 0.5) < 3.0, "{est:?}");
}

#[test]
fn bessel_second_moment() {
    let cfg = SdeConfig::new(1e-3, 0.5);
    let v = run_paths(PATHS, 7, |rng| {
        Ok(simulate_companion(CompanionKind::Bessel1D(0.5), 0.7, &cfg, rng, &[0.5])?[0].value.re.powi(2))
    })
    .unwrap();
    let est = mean_of(v);
    assert!(z(&est, 0.49 + 3.0 * 0.5) < 3.0, "{est:?}");
}

#[test]
fn brownian_and_torus_exp_means() {
    let cfg = SdeConfig::new(1e-2, 1.0);
    let v = run_paths(PATHS, 8, |rng| Ok(simulate_companion(CompanionKind::Brownian, 0.3, &cfg, rng, &[1.0])?[0].value))
        .unwrap();
    let est = McEstimate::from_samples(&v, 8).unwrap();
    assert!(est.z_against(Complex::new(0.3, 0.0), Complex::new(0.0, 0.0)) < 3.0);

    let y = 0.4;
    let v = run_paths(PATHS, 9, |rng| Ok(simulate_companion(CompanionKind::TorusExp(1), y, &cfg, rng, &[1.0])?[0].value))
        .unwrap();
    let est = McEstimate::from_samples(&v, 9).unwrap();
    let want = Complex::from_polar(1.0, 2f64.sqrt() * y);
    assert!(est.z_against(want, Complex::new(0.0, 0.0)) < 3.0, "{est:?}");
}

#[test]
fn infinite_inverse_temperature_is_the_flow() {
    let cases = [
        (Model::hermite(3), vec![-1.0, 0.2, 0.9]),
        (Model::laguerre(3, 1.5), vec![0.2, 0.6, 1.1]),
        (Model::jacobi(3, 3.5, 4.0), vec![-0.5, 0.1, 0.6]),
        (Model::jacobi_noncompact(2, 2.5, 3.0), vec![1.2, 1.6]),
        (Model::torus(3), vec![0.1, 1.5, 3.0]),
    ];
    let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
    for (m, x0) in cases {
        let cfg = SdeConfig::new(1e-4, 1.0);
        let path = simulate(&m, &State::at_zero(x0.clone()), &cfg, RngStream::new(1, 1), &times).unwrap();
        let tr = ode::solve(&m, &State::at_zero(x0), &SolveConfig::until(1.0).with_output_times(times.clone())).unwrap();
        for (a, b) in path.iter().zip(&tr.samples) {
            for (u, v) in a.coords.iter().zip(&b.coords) {
                assert!((u - v).abs() < 1e-6, "{:?}", m.family);
            }
        }
    }
}

#[test]
fn paths_are_reproducible_and_stay_in_the_chamber() {
    let cases = [
        (Model::hermite(4).with_inv_temp(1.0), vec![-1.0, -0.2, 0.3, 1.0]),
        (Model::laguerre(3, 0.7).with_inv_temp(1.0), vec![0.05, 0.3, 0.9]),
        (Model::jacobi(3, 2.5, 3.0).with_inv_temp(1.0), vec![-0.9, 0.0, 0.9]),
        (Model::jacobi_noncompact(2, 2.5, 3.0).with_inv_temp(1.0), vec![1.02, 1.3]),
        (Model::torus(4).with_inv_temp(0.5), vec![0.0, 1.0, 2.0, 6.0]),
    ];
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.005).collect();
    for (m, x0) in cases {
        let cfg = SdeConfig::new(1e-3, 0.5);
        for stream in 0..20 {
            let a = simulate(&m, &State::at_zero(x0.clone()), &cfg, RngStream::new(3, stream), &times).unwrap();
            let b = simulate(&m, &State::at_zero(x0.clone()), &cfg, RngStream::new(3, stream), &times).unwrap();
            assert_eq!(a, b);
            for s in &a {
                assert!(check_chamber(&m, &s.coords).is_ok(), "{:?} {:?}", m.family, s.coords);
            }
        }
    }
}

#[test]
fn boundary_start_is_reported_then_left() {
    let m = Model::hermite(3).with_inv_temp(2.0);
    let cfg = SdeConfig::new(1e-3, 0.1);
    let p = simulate(&m, &State::at_zero(vec![0.0; 3]), &cfg, RngStream::new(0, 0), &[0.0, 0.001, 0.1]).unwrap();
    assert_eq!(p[0].coords, vec![0.0; 3]);
    assert!(p[1].coords.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn off_grid_sample_time_is_rejected() {
    let m = Model::hermite(2).with_inv_temp(2.0);
    let cfg = SdeConfig::new(1e-2, 1.0);
    assert!(simulate(&m, &State::at_zero(vec![-1.0, 1.0]), &cfg, RngStream::new(0, 0), &[0.123]).is_err());
    assert!(simulate(&m, &State::at_zero(vec![-1.0, 1.0]), &SdeConfig::new(2.0, 1.0), RngStream::new(0, 0), &[1.0]).is_err());
}
