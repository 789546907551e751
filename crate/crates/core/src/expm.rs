//! Matrix exponential for the small operator matrices of the heat flows.

use nalgebra::DMatrix;

/// `exp(A)`: exact for diagonal and nilpotent upper-triangular input,
/// Padé(13) scaling and squaring otherwise.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let off_diag_zero = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0));
    if off_diag_zero {
        return DMatrix::from_fn(n, n, |i, j| if i == j { a[(i, i)].exp() } else { 0.0 });
    }
    let strictly_upper = (0..n).all(|i| (0..=i).all(|j| a[(i, j)] == 0.0));
    if strictly_upper {
        // A^n = 0: the Taylor series terminates
        let mut out = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..n {
            term = &term * a / k as f64;
            out += &term;
        }
        return out;
    }
    pade13(a)
}

fn pade13(a: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Pade denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_nilpotent_are_exact() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, -1.0, 2.0]));
        let e = expm(&d);
        assert_eq!(e[(1, 1)], (-1.0f64).exp());
        let mut n = DMatrix::zeros(3, 3);
        n[(0, 2)] = -1.0;
        let e = expm(&n);
        assert_eq!(e[(0, 2)], -1.0);
        assert_eq!(e[(0, 0)], 1.0);
    }

    #[test]
    fn rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 3.0, 0.0]);
        let e = expm(&a);
        assert!((e[(0, 0)] - 3f64.cos()).abs() < 1e-13);
        assert!((e[(1, 0)] - 3f64.sin()).abs() < 1e-13);
    }

    #[test]
    fn upper_triangular_against_closed_form() {
        // [[a, b], [0, c]] -> off-diagonal b (e^a - e^c) / (a - c)
        let (x, b, c) = (-7.5, 2.0, 0.3);
        let m = DMatrix::from_row_slice(2, 2, &[x, b, 0.0, c]);
        let e = expm(&m);
        let want = b * (x.exp() - c.exp()) / (x - c);
        assert!((e[(0, 1)] - want).abs() < 1e-13 * want.abs());
        assert!((e[(0, 0)] - x.exp()).abs() < 1e-16);
    }
}
