//! Classical orthogonal polynomials (Szegő normalisation) and their zeros.
//!
//! Zeros come from the symmetric tridiagonal recurrence matrix, are polished
//! by two Newton steps and certified by the electrostatic (Stieltjes)
//! equations they satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{Family, ModelSpec};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Classical<T> {
    /// Physicists' Hermite, weight `exp(-x^2)`, leading coefficient `2^n`.
    Hermite,
    /// Weight `x^alpha exp(-x)`.
    Laguerre { alpha: T },
    /// Weight `(1-x)^alpha (1+x)^beta` on `[-1, 1]`.
    Jacobi { alpha: T, beta: T },
}

impl<T: Real> Classical<T> {
    /// The polynomial whose zeros are the equilibrium of the model's flow:
    /// Hermite for type A, `L^(nu-1)` for type B, `P^(q-N, p-N)` for Jacobi.
    pub fn for_model(model: &ModelSpec<T>) -> Result<Self> {
        let n = model.n_t();
        match model.family {
            Family::HermiteA => Ok(Classical::Hermite),
            Family::LaguerreB => Ok(Classical::Laguerre { alpha: model.nu - T::one() }),
            Family::JacobiCompact | Family::JacobiNoncompact => {
                Ok(Classical::Jacobi { alpha: model.q - n, beta: model.p - n })
            }
            Family::Torus => Err(LabError::Unsupported("no classical polynomial for the torus".into())),
        }
    }

    fn validate(&self) -> Result<()> {
        let m1 = -T::one();
        match *self {
            Classical::Hermite => Ok(()),
            Classical::Laguerre { alpha } if alpha > m1 => Ok(()),
            Classical::Jacobi { alpha, beta } if alpha > m1 && beta > m1 => Ok(()),
            _ => Err(LabError::InvalidParams(format!("parameters must exceed -1: {self:?}"))),
        }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence; parameters unchecked.
fn eval_pair<T: Real>(fam: &Classical<T>, n: usize, x: T) -> (T, T) {
    match *fam {
        Classical::Hermite => {
            if n == 0 {
                return (T::one(), T::zero());
            }
            let two = T::lit(2.0);
            let (mut h0, mut h1) = (T::one(), two * x);
            for k in 1..n {
                let h2 = two * x * h1 - two * T::from_usize_lossy(k) * h0;
                h0 = h1;
                h1 = h2;
            }
            // H_n' = 2n H_{n-1}
            (h1, two * T::from_usize_lossy(n) * h0)
        }
        Classical::Laguerre { alpha } => {
            let v = laguerre(alpha, n, x);
            let d = if n == 0 { T::zero() } else { -laguerre(alpha + T::one(), n - 1, x) };
            (v, d)
        }
        Classical::Jacobi { alpha, beta } => {
            let v = jacobi(alpha, beta, n, x);
            let d = if n == 0 {
                T::zero()
            } else {
                let s = T::from_usize_lossy(n) + alpha + beta + T::one();
                s / T::lit(2.0) * jacobi(alpha + T::one(), beta + T::one(), n - 1, x)
            };
            (v, d)
        }
    }
}

fn laguerre<T: Real>(alpha: T, n: usize, x: T) -> T {
    if n == 0 {
        return T::one();
    }
    let (mut l0, mut l1) = (T::one(), T::one() + alpha - x);
    for k in 1..n {
        let kf = T::from_usize_lossy(k);
        let l2 = ((T::lit(2.0) * kf + T::one() + alpha - x) * l1 - (kf + alpha) * l0) / (kf + T::one());
        l0 = l1;
        l1 = l2;
    }
    l1
}

fn jacobi<T: Real>(a: T, b: T, n: usize, x: T) -> T {
    let two = T::lit(2.0);
    if n == 0 {
        return T::one();
    }
    let (mut p0, mut p1) = (T::one(), ((a - b) + (a + b + two) * x) / two);
    for k in 2..=n {
        let k = T::from_usize_lossy(k);
        let s = two * k + a + b;
        let c1 = two * k * (k + a + b) * (s - two);
        let c2 = (s - T::one()) * (s * (s - two) * x + a * a - b * b);
        let c3 = two * (k + a - T::one()) * (k + b - T::one()) * s;
        let p2 = (c2 * p1 - c3 * p0) / c1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

pub fn eval_classical<T: Real>(fam: &Classical<T>, degree: usize, x: T) -> Result<T> {
    fam.validate()?;
    Ok(eval_pair(fam, degree, x).0)
}

/// Derivative of the degree-`n` polynomial.
pub fn eval_derivative<T: Real>(fam: &Classical<T>, degree: usize, x: T) -> Result<T> {
    fam.validate()?;
    Ok(eval_pair(fam, degree, x).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet<T> {
    pub family: Classical<T>,
    pub degree: usize,
    /// Strictly increasing.
    pub zeros: Vec<T>,
    /// Max electrostatic residual, see [`verify_stieltjes`].
    pub residual: T,
}

/// Certification threshold for the Stieltjes residual.
pub fn residual_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(1e5))
}

/// Largest supported degree.
pub const MAX_DEGREE: usize = 64;

fn recurrence_matrix<T: Real>(fam: &Classical<T>, n: usize) -> (Vec<T>, Vec<T>) {
    let two = T::lit(2.0);
    let mut d = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n.saturating_sub(1));
    match *fam {
        Classical::Hermite => {
            d.resize(n, T::zero());
            for k in 1..n {
                e.push((T::from_usize_lossy(k) / two).sqrt());
            }
        }
        Classical::Laguerre { alpha } => {
            for k in 0..n {
                d.push(two * T::from_usize_lossy(k) + alpha + T::one());
            }
            for k in 1..n {
                let k = T::from_usize_lossy(k);
                e.push((k * (k + alpha)).sqrt());
            }
        }
        Classical::Jacobi { alpha: a, beta: b } => {
            for k in 0..n {
                if k == 0 {
                    d.push((b - a) / (a + b + two));
                } else {
                    let s = two * T::from_usize_lossy(k) + a + b;
                    d.push((b * b - a * a) / (s * (s + two)));
                }
            }
            for k in 1..n {
                let v = if k == 1 {
                    let s = a + b + two;
                    T::lit(4.0) * (T::one() + a) * (T::one() + b) / (s * s * (s + T::one()))
                } else {
                    let kf = T::from_usize_lossy(k);
                    let s = two * kf + a + b;
                    T::lit(4.0) * kf * (kf + a) * (kf + b) * (kf + a + b)
                        / (s * s * (s + T::one()) * (s - T::one()))
                };
                e.push(v.sqrt());
            }
        }
    }
    (d, e)
}

pub fn zeros<T: Real>(fam: &Classical<T>, degree: usize) -> Result<ZeroSet<T>> {
    fam.validate()?;
    if degree == 0 || degree > MAX_DEGREE {
        return Err(LabError::InvalidParams(format!("degree must be in 1..={MAX_DEGREE}, got {degree}")));
    }
    let (d, e) = recurrence_matrix(fam, degree);
    let mut z = T::sym_tridiag_eigenvalues(&d, &e);
    for x in z.iter_mut() {
        for _ in 0..2 {
            let (p, dp) = eval_pair(fam, degree, *x);
            if dp != T::zero() {
                let step = p / dp;
                let cand = *x - step;
                if cand.is_finite() && eval_pair(fam, degree, cand).0.abs() <= p.abs() {
                    *x = cand;
                }
            }
        }
    }
    let residual = verify_stieltjes(fam, &z).map_err(|e| {
        LabError::ConvergenceFailure(format!("zeros failed the Stieltjes check: {e}"))
    })?;
    if !(residual < residual_tolerance()) {
        return Err(LabError::ConvergenceFailure(format!(
            "Stieltjes residual {residual} exceeds {}",
            residual_tolerance::<T>()
        )));
    }
    Ok(ZeroSet { family: *fam, degree, zeros: z, residual })
}

/// Max residual of the electrostatic equations characterising the zeros.
///
/// Hermite: `z_i - sum_j 1/(z_i - z_j)`. Laguerre, in `y = sqrt(z)`:
/// `y_i - sum_j (1/(y_i-y_j) + 1/(y_i+y_j)) - (alpha+1)/y_i`. Jacobi:
/// `sum_j 1/(z_i-z_j) + (alpha+1)/(2(z_i-1)) + (beta+1)/(2(z_i+1))`.
pub fn verify_stieltjes<T: Real>(fam: &Classical<T>, candidate: &[T]) -> Result<T> {
    fam.validate()?;
    let n = candidate.len();
    for w in candidate.windows(2) {
        if !(w[1] - w[0] > T::lit(1e-12) * (T::one() + w[0].abs() + w[1].abs())) {
            return Err(LabError::DegenerateState(format!("candidate not strictly increasing near {}", w[0])));
        }
    }
    let one = T::one();
    let two = T::lit(2.0);
    let mut worst = T::zero();
    match *fam {
        Classical::Hermite => {
            for i in 0..n {
                let mut s = candidate[i];
                for j in 0..n {
                    if j != i {
                        s -= (candidate[i] - candidate[j]).recip();
                    }
                }
                worst = worst.max(s.abs());
            }
        }
        Classical::Laguerre { alpha } => {
            if candidate.iter().any(|&z| !(z > T::zero())) {
                return Err(LabError::DegenerateState("Laguerre candidate must be positive".into()));
            }
            let y: Vec<T> = candidate.iter().map(|z| z.sqrt()).collect();
            for i in 0..n {
                let mut s = y[i] - (alpha + one) / y[i];
                for j in 0..n {
                    if j != i {
                        s -= (y[i] - y[j]).recip() + (y[i] + y[j]).recip();
                    }
                }
                worst = worst.max(s.abs());
            }
        }
        Classical::Jacobi { alpha, beta } => {
            if candidate.iter().any(|&z| !(z > -one && z < one)) {
                return Err(LabError::DegenerateState("Jacobi candidate must lie in (-1, 1)".into()));
            }
            for i in 0..n {
                let zi = candidate[i];
                let mut s = (alpha + one) / (two * (zi - one)) + (beta + one) / (two * (zi + one));
                for j in 0..n {
                    if j != i {
                        s += (zi - candidate[j]).recip();
                    }
                }
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(eval_classical(&Classical::<f64>::Hermite, 2, 1.0).unwrap(), 2.0);
        assert_eq!(eval_classical(&Classical::<f64>::Laguerre { alpha: 0.0 }, 1, 0.0).unwrap(), 1.0);
        assert_eq!(eval_classical(&Classical::<f64>::Hermite, 0, 3.7).unwrap(), 1.0);
        assert!(eval_classical(&Classical::<f64>::Laguerre { alpha: -1.5 }, 1, 0.0).is_err());
    }

    #[test]
    fn closed_forms_low_degree() {
        // H_3 = 8x^3 - 12x, L_2^a = ((x^2 - 2(a+2)x + (a+1)(a+2))/2
        let x = 0.37;
        let h3 = eval_classical(&Classical::<f64>::Hermite, 3, x).unwrap();
        assert!((h3 - (8.0 * x * x * x - 12.0 * x)).abs() < 1e-14);
        let a = 0.7;
        let l2 = eval_classical(&Classical::Laguerre { alpha: a }, 2, x).unwrap();
        let want = (x * x - 2.0 * (a + 2.0) * x + (a + 1.0) * (a + 2.0)) / 2.0;
        assert!((l2 - want).abs() < 1e-14);
        // P_2^{(0,0)} = Legendre (3x^2 - 1)/2
        let p2 = eval_classical(&Classical::<f64>::Jacobi { alpha: 0.0, beta: 0.0 }, 2, x).unwrap();
        assert!((p2 - (3.0 * x * x - 1.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let fams = [
            Classical::<f64>::Hermite,
            Classical::Laguerre { alpha: 1.3 },
            Classical::Jacobi { alpha: 0.4, beta: 2.5 },
        ];
        for f in fams {
            let (x, h) = (0.31, 1e-6);
            let fd = (eval_classical(&f, 5, x + h).unwrap() - eval_classical(&f, 5, x - h).unwrap()) / (2.0 * h);
            let d = eval_derivative(&f, 5, x).unwrap();
            assert!((fd - d).abs() < 1e-6 * (1.0 + d.abs()), "{f:?}: {fd} vs {d}");
        }
    }

    #[test]
    fn zero_examples() {
        let z = zeros(&Classical::<f64>::Hermite, 2).unwrap().zeros;
        let s = 0.5f64.sqrt();
        assert!((z[0] + s).abs() < 1e-15 && (z[1] - s).abs() < 1e-15);
        let z = zeros(&Classical::<f64>::Hermite, 5).unwrap().zeros;
        assert!((z.iter().map(|v| v * v).sum::<f64>() - 10.0).abs() < 1e-12);
        let z = zeros(&Classical::<f64>::Laguerre { alpha: 0.0 }, 2).unwrap().zeros;
        let r = 2f64.sqrt();
        assert!((z[0] - (2.0 - r)).abs() < 1e-14 && (z[1] - (2.0 + r)).abs() < 1e-14);
        let z = zeros(&Classical::<f64>::Jacobi { alpha: 1.0, beta: 2.0 }, 1).unwrap().zeros;
        assert!((z[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn stieltjes_examples() {
        let s = 0.5f64.sqrt();
        assert!(verify_stieltjes(&Classical::<f64>::Hermite, &[-s, s]).unwrap() < 1e-14);
        assert!((verify_stieltjes(&Classical::<f64>::Hermite, &[-1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        let j = Classical::<f64>::Jacobi { alpha: 1.0, beta: 2.0 };
        assert!(verify_stieltjes(&j, &[0.2]).unwrap() < 1e-14);
        assert!(matches!(
            verify_stieltjes(&Classical::<f64>::Hermite, &[1.0, 1.0]),
            Err(LabError::DegenerateState(_))
        ));
    }

    #[test]
    fn f32_zeros() {
        let z = zeros(&Classical::<f32>::Hermite, 4).unwrap();
        let sq: f32 = z.zeros.iter().map(|v| v * v).sum();
        assert!((sq - 6.0).abs() < 1e-4);
    }

    #[test]
    fn model_mapping() {
        let m = ModelSpec::<f64>::jacobi(1, 3.0, 2.0);
        let z = zeros(&Classical::for_model(&m).unwrap(), 1).unwrap().zeros;
        assert!((z[0] - 0.2).abs() < 1e-15);
    }
}
