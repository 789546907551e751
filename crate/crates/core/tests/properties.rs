use approx::assert_relative_eq;
use cms_lab::expectation::esym;
use cms_lab::heat::{poly_from_roots, roots_from_poly};
use cms_lab::model::drift;
use cms_lab::{Family, Model, State};
use proptest::prelude::*;

/// Strictly increasing vector with gaps at least `min_gap`.
fn ordered(n: usize, lo: f64, min_gap: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(move |gaps| {
        let mut x = Vec::with_capacity(gaps.len());
        let mut acc = lo;
        for g in gaps {
            acc += min_gap + g;
            x.push(acc);
        }
        x
    })
}

proptest! {
    #[test]
    fn hermite_drift_sums(x in ordered(5, -3.0, 0.05)) {
        let f = drift(&Model::hermite(5), &State::at_zero(x.clone())).unwrap();
        let total: f64 = f.iter().sum();
        let moment: f64 = f.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!(total.abs() < 1e-10);
        assert_relative_eq!(moment, 10.0, max_relative = 1e-12);
    }

    #[test]
    fn hermite_translation_invariant(x in ordered(4, -2.0, 0.05), c in -5.0f64..5.0) {
        let m = Model::hermite(4);
        let f = drift(&m, &State::at_zero(x.clone())).unwrap();
        let g = drift(&m, &State::at_zero(x.iter().map(|v| v + c).collect())).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert_relative_eq!(*a, *b, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn laguerre_moment(x in ordered(4, 0.0, 0.05), nu in 0.2f64..4.0) {
        let f = drift(&Model::laguerre(4, nu), &State::at_zero(x.clone())).unwrap();
        let moment: f64 = f.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_relative_eq!(moment, 4.0 * nu + 12.0, max_relative = 1e-11);
    }

    #[test]
    fn jacobi_reflection_swaps_p_and_q(raw in ordered(3, 0.0, 0.05), p in 2.5f64..6.0, q in 2.5f64..6.0) {
        // map into (-1, 1)
        let top = raw[2] + 0.05;
        let x: Vec<f64> = raw.iter().map(|v| 2.0 * v / top - 1.0).collect();
        let mirrored: Vec<f64> = x.iter().rev().map(|v| -v).collect();
        let f = drift(&Model::jacobi(3, p, q), &State::at_zero(x)).unwrap();
        let g = drift(&Model::jacobi(3, q, p), &State::at_zero(mirrored)).unwrap();
        for (a, b) in f.iter().zip(g.iter().rev()) {
            assert_relative_eq!(*a, -*b, epsilon = 1e-9, max_relative = 1e-10);
        }
    }

    #[test]
    fn torus_drift_sums_to_zero(raw in ordered(4, 0.0, 0.05)) {
        let top = raw[3] + 0.05;
        let x: Vec<f64> = raw.iter().map(|v| 6.0 * v / top).collect();
        let f = drift(&Model::torus(4), &State::at_zero(x)).unwrap();
        prop_assert!(f.iter().sum::<f64>().abs() < 1e-8 * (1.0 + f.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn roots_round_trip(x in ordered(5, -2.0, 0.1)) {
        let p = poly_from_roots(Family::HermiteA, &x).unwrap();
        let r = roots_from_poly(&p).unwrap();
        for (a, b) in r.iter().zip(&x) {
            assert_relative_eq!(*a, *b, epsilon = 1e-8);
        }
    }

    #[test]
    fn laguerre_roots_round_trip(x in ordered(4, 0.0, 0.1)) {
        let p = poly_from_roots(Family::LaguerreB, &x).unwrap();
        let r = roots_from_poly(&p).unwrap();
        for (a, b) in r.iter().zip(&x) {
            assert_relative_eq!(*a, *b, epsilon = 1e-8);
        }
    }

    #[test]
    fn esym_are_char_poly_coefficients(x in ordered(4, -2.0, 0.1)) {
        let p = poly_from_roots(Family::HermiteA, &x).unwrap();
        for l in 0..=4 {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            assert_relative_eq!(p.coeffs[4 - l], sign * esym(&x, l), epsilon = 1e-10, max_relative = 1e-12);
        }
    }
}
