//! Characteristic polynomials of particle configurations and the linear
//! inverse heat equations they satisfy.
//!
//! Coefficients are stored in ascending order, `H(z) = sum_m c_m z^m`, monic
//! (`c_N = 1`). Laguerre polynomials use the variable `s = z^2`, torus
//! polynomials have complex coefficients and roots on the unit circle.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::expm::expm;
use crate::model::{torus_canonical, Family, ModelSpec, ParticleState};
use crate::ode::Trajectory;
use crate::scalar::Real;

type Model = ModelSpec<f64>;
type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    Z,
    /// Polynomial in `s = z^2`.
    ZSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyRep<C> {
    pub coeffs: Vec<C>,
    pub family: Family,
    pub variable: Variable,
}

/// Coefficient types the heat flows act on (`f64`, `Complex<f64>`).
pub trait HeatCoeff:
    Copy + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
}

impl<C> HeatCoeff for C where
    C: Copy + Zero + Add<Output = C> + Sub<Output = C> + Mul<f64, Output = C> + Send + Sync
{
}

impl<C> PolyRep<C> {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

impl<T: Real> PolyRep<T> {
    /// Value at `z` (for the squared variable this evaluates at `s = z^2`).
    pub fn eval(&self, z: T) -> T {
        let s = match self.variable {
            Variable::Z => z,
            Variable::ZSquared => z * z,
        };
        horner(&self.coeffs, s)
    }
}

impl<T: Real> PolyRep<Complex<T>> {
    pub fn eval_complex(&self, z: Complex<T>) -> Complex<T> {
        let s = match self.variable {
            Variable::Z => z,
            Variable::ZSquared => z * z,
        };
        self.coeffs.iter().rev().fold(Complex::zero(), |acc, &c| acc * s + c)
    }
}

fn horner<T: Real>(c: &[T], x: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, &v| acc * x + v)
}

fn expand<C>(roots: &[C]) -> Vec<C>
where
    C: Copy + num_traits::Num,
{
    let mut c = vec![C::one()];
    for &r in roots {
        let mut next = vec![C::zero(); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] = next[k + 1] + ck;
            next[k] = next[k] - r * ck;
        }
        c = next;
    }
    c
}

/// `prod (z - x_i)`, or `prod (s - x_i^2)` for the Laguerre family.
pub fn poly_from_roots<T: Real>(family: Family, roots: &[T]) -> Result<PolyRep<T>> {
    let (vals, variable): (Vec<T>, _) = match family {
        Family::Torus => {
            return Err(LabError::InvalidParams("torus polynomials are built from unit roots".into()))
        }
        Family::LaguerreB => (roots.iter().map(|&x| x * x).collect(), Variable::ZSquared),
        _ => (roots.to_vec(), Variable::Z),
    };
    Ok(PolyRep { coeffs: expand(&vals), family, variable })
}

/// `prod (z - w_j)` for points on the unit circle.
pub fn poly_from_unit_roots<T: Real>(w: &[Complex<T>]) -> PolyRep<Complex<T>> {
    PolyRep { coeffs: expand(w), family: Family::Torus, variable: Variable::Z }
}

/// `prod (z - e^{i x_j})`.
pub fn poly_from_angles<T: Real>(x: &[T]) -> PolyRep<Complex<T>> {
    let w: Vec<Complex<T>> = x.iter().map(|&a| Complex::from_polar(T::one(), a)).collect();
    poly_from_unit_roots(&w)
}

fn newton_polish(c: &[C64], z: C64) -> C64 {
    let mut z = z;
    for _ in 0..3 {
        let mut p = C64::zero();
        let mut dp = C64::zero();
        for &ck in c.iter().rev() {
            dp = dp * z + p;
            p = p * z + ck;
        }
        if dp.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        if !next.re.is_finite() || !next.im.is_finite() {
            break;
        }
        z = next;
    }
    z
}

fn complex_roots(c: &[C64]) -> Result<Vec<C64>> {
    let n = c.len() - 1;
    let lead = c[n];
    if lead.norm() == 0.0 {
        return Err(LabError::InvalidParams("leading coefficient vanishes".into()));
    }
    let monic: Vec<C64> = c.iter().map(|v| v / lead).collect();
    if n == 1 {
        return Ok(vec![-monic[0]]);
    }
    let comp = DMatrix::<C64>::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -monic[i]
        } else if i == j + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::zero()
        }
    });
    let ev = comp
        .eigenvalues()
        .ok_or_else(|| LabError::ConvergenceFailure("companion eigenvalues did not converge".into()))?;
    Ok(ev.iter().map(|&z| newton_polish(&monic, z)).collect())
}

fn real_companion_roots(c: &[f64]) -> Result<Vec<C64>> {
    let n = c.len() - 1;
    let lead = c[n];
    if lead == 0.0 {
        return Err(LabError::InvalidParams("leading coefficient vanishes".into()));
    }
    let monic: Vec<f64> = c.iter().map(|v| v / lead).collect();
    if n == 1 {
        return Ok(vec![C64::new(-monic[0], 0.0)]);
    }
    let comp = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -monic[i]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let cm: Vec<C64> = monic.iter().map(|&v| C64::new(v, 0.0)).collect();
    Ok(comp.complex_eigenvalues().iter().map(|&z| newton_polish(&cm, z)).collect())
}

/// Ordered real roots (Laguerre: the nonnegative square roots of the roots
/// in `s`). `NonRealRoots` when an imaginary part exceeds `1e-8 (1 + |Re|)`.
pub fn roots_from_poly(p: &PolyRep<f64>) -> Result<Vec<f64>> {
    if p.coeffs.len() < 2 {
        return Ok(Vec::new());
    }
    let zs = real_companion_roots(&p.coeffs)?;
    let mut worst = 0.0f64;
    let mut bad = false;
    for z in &zs {
        worst = worst.max(z.im.abs());
        if z.im.abs() >= 1e-8 * (1.0 + z.re.abs()) {
            bad = true;
        }
    }
    if bad {
        return Err(LabError::NonRealRoots(worst));
    }
    let mut r: Vec<f64> = zs.iter().map(|z| z.re).collect();
    if p.variable == Variable::ZSquared {
        let neg = r.iter().fold(0.0f64, |m, &s| m.max(-s));
        if neg > 1e-12 {
            return Err(LabError::NonRealRoots(neg.sqrt()));
        }
        r = r.iter().map(|s| s.max(0.0).sqrt()).collect();
    }
    r.sort_by(f64::total_cmp);
    Ok(r)
}

/// Angles of unimodular roots, in the torus chamber with the given sum.
pub fn unit_roots_from_poly(p: &PolyRep<C64>, target_sum: Option<f64>) -> Result<Vec<f64>> {
    if p.coeffs.len() < 2 {
        return Ok(Vec::new());
    }
    let zs = complex_roots(&p.coeffs)?;
    let worst = zs.iter().fold(0.0f64, |m, z| m.max((z.norm() - 1.0).abs()));
    if worst >= 1e-8 {
        return Err(LabError::NonRealRoots(worst));
    }
    let angles: Vec<f64> = zs.iter().map(|z| z.arg()).collect();
    Ok(torus_canonical(&angles, target_sum))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatOperatorMatrix {
    /// `dc/dt = a c` on ascending coefficients.
    pub a: DMatrix<f64>,
    pub family: Family,
    pub variable: Variable,
}

/// Zeroth-order potential of the Jacobi heat equations, `N (p + q - N + 1)`.
pub fn jacobi_potential(model: &Model) -> f64 {
    let n = model.n as f64;
    n * (model.p + model.q - n + 1.0)
}

pub fn operator_matrix(model: &Model) -> Result<HeatOperatorMatrix> {
    model.validate()?;
    let n = model.n;
    let nf = n as f64;
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let variable = if model.family == Family::LaguerreB { Variable::ZSquared } else { Variable::Z };
    match model.family {
        Family::HermiteA => {
            for m in 0..=n {
                if m + 2 <= n {
                    a[(m, m + 2)] = -0.5 * ((m + 2) * (m + 1)) as f64;
                }
                if let Some(l) = model.lambda {
                    a[(m, m)] = l * (m as f64 - nf);
                }
            }
        }
        Family::LaguerreB => {
            for m in 0..=n {
                let mf = m as f64;
                if m < n {
                    a[(m, m + 1)] = -2.0 * (mf + 1.0) * (mf + model.nu);
                }
                if let Some(l) = model.lambda {
                    a[(m, m)] = 2.0 * l * (mf - nf);
                }
            }
        }
        Family::JacobiCompact | Family::JacobiNoncompact => {
            let sign = if model.family == Family::JacobiCompact { 1.0 } else { -1.0 };
            let (p, q) = (model.p, model.q);
            let pot = jacobi_potential(model);
            for m in 0..=n {
                let mf = m as f64;
                if m + 2 <= n {
                    a[(m, m + 2)] = -sign * (mf + 2.0) * (mf + 1.0);
                }
                if m < n {
                    a[(m, m + 1)] = -sign * (p - q) * (mf + 1.0);
                }
                a[(m, m)] = -sign * (-mf * (mf - 1.0) + (2.0 * (nf - 1.0) - (p + q)) * mf + pot);
            }
        }
        Family::Torus => {
            for m in 0..=n {
                let mf = m as f64;
                a[(m, m)] = mf * (mf - nf);
            }
        }
    }
    Ok(HeatOperatorMatrix { a, family: model.family, variable })
}

fn deriv<C: HeatCoeff>(c: &[C]) -> Vec<C> {
    (1..c.len()).map(|m| c[m] * m as f64).collect()
}

/// `sum_k coef_k * z^shift_k * poly_k`, truncated to `len` coefficients.
fn combine<C: HeatCoeff>(len: usize, terms: &[(f64, usize, &[C])]) -> Vec<C> {
    let mut out = vec![C::zero(); len];
    for &(coef, shift, poly) in terms {
        for (m, &v) in poly.iter().enumerate() {
            if m + shift < len {
                out[m + shift] = out[m + shift] + v * coef;
            }
        }
    }
    out
}

/// Right-hand side of the heat equation applied by differentiating the
/// polynomial directly (independent of [`operator_matrix`]).
pub fn apply_operator<C: HeatCoeff>(model: &Model, c: &[C]) -> Result<Vec<C>> {
    model.validate()?;
    let len = c.len();
    let nf = model.n as f64;
    let d1 = deriv(c);
    let d2 = deriv(&d1);
    let out = match model.family {
        Family::HermiteA => {
            let mut terms: Vec<(f64, usize, &[C])> = vec![(-0.5, 0, &d2[..])];
            if let Some(l) = model.lambda {
                terms.push((l, 1, &d1[..]));
                terms.push((-l * nf, 0, c));
            }
            combine(len, &terms)
        }
        Family::LaguerreB => {
            // -2 (s H'' + nu H') + 2 lambda (s H' - N H)
            let mut terms: Vec<(f64, usize, &[C])> = vec![(-2.0, 1, &d2[..]), (-2.0 * model.nu, 0, &d1[..])];
            if let Some(l) = model.lambda {
                terms.push((2.0 * l, 1, &d1[..]));
                terms.push((-2.0 * l * nf, 0, c));
            }
            combine(len, &terms)
        }
        Family::JacobiCompact | Family::JacobiNoncompact => {
            // -[(1 - z^2) H'' + ((p - q) + (2N - 2 - p - q) z) H'] - N (p + q - N + 1) H
            let sign = if model.family == Family::JacobiCompact { 1.0 } else { -1.0 };
            let (p, q) = (model.p, model.q);
            combine(
                len,
                &[
                    (-sign, 0, &d2[..]),
                    (sign, 2, &d2[..]),
                    (-sign * (p - q), 0, &d1[..]),
                    (-sign * (2.0 * nf - 2.0 - p - q), 1, &d1[..]),
                    (-sign * jacobi_potential(model), 0, c),
                ],
            )
        }
        // z^2 H'' - (N - 1) z H'
        Family::Torus => combine(len, &[(1.0, 2, &d2[..]), (-(nf - 1.0), 1, &d1[..])]),
    };
    Ok(out)
}

/// `exp(t A) c_0`: the polynomial at time `t` of the linear heat flow.
pub fn coefficient_flow<C: HeatCoeff>(model: &Model, p0: &PolyRep<C>, t: f64) -> Result<PolyRep<C>> {
    if p0.coeffs.len() != model.n + 1 {
        return Err(LabError::InvalidParams(format!(
            "polynomial has degree {}, model has N = {}",
            p0.degree(),
            model.n
        )));
    }
    if p0.family != model.family {
        return Err(LabError::InvalidParams("polynomial and model families differ".into()));
    }
    let op = operator_matrix(model)?;
    let e = expm(&(op.a * t));
    let n = model.n + 1;
    let coeffs = (0..n)
        .map(|i| (0..n).fold(C::zero(), |acc, j| acc + p0.coeffs[j] * e[(i, j)]))
        .collect();
    Ok(PolyRep { coeffs, family: p0.family, variable: p0.variable })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeatPolyKind {
    /// `(2t)^{n/2} H_n(z / sqrt(2t))`, solves `H_t + H_zz / 2 = 0`.
    Hermite,
    /// `prod (z^2 - 2 t zeta_i)` over the zeros of `L_n^(nu-1)`, monic in `z^2`.
    Bessel { nu: f64 },
}

pub fn heat_polynomial(kind: HeatPolyKind, n: usize, t: f64, z: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(LabError::InvalidParams(format!("heat polynomials need t >= 0, got {t}")));
    }
    match kind {
        HeatPolyKind::Hermite => {
            // polynomial in t, so t = 0 needs no special case
            let (mut prev, mut cur) = (1.0, 2.0 * z);
            if n == 0 {
                return Ok(1.0);
            }
            for l in 1..n {
                let next = 2.0 * z * cur - 4.0 * l as f64 * t * prev;
                prev = cur;
                cur = next;
            }
            Ok(cur)
        }
        HeatPolyKind::Bessel { nu } => {
            if !(nu > 0.0) {
                return Err(LabError::InvalidParams(format!("nu must be > 0, got {nu}")));
            }
            // sum_k (-1)^(n-k) n!/k! C(n+nu-1, n-k) (2t)^(n-k) s^k, s = z^2
            let a = nu - 1.0;
            let s = z * z;
            let mut total = 0.0;
            for k in 0..=n {
                let m = n - k;
                let binom: f64 = (0..m).map(|i| (n as f64 + a - i as f64) / (i + 1) as f64).product();
                let ratio: f64 = (k + 1..=n).map(|i| i as f64).product();
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * ratio * binom * (2.0 * t).powi(m as i32) * s.powi(k as i32);
            }
            Ok(total)
        }
    }
}

/// Ascending coefficients of `H_l(t, z) = (2t)^{l/2} H_l(z / sqrt(2t))`,
/// `l = 0..=n`, via `H_{l+1} = 2 z H_l - 4 l t H_{l-1}` (valid for all t).
fn hermite_heat_basis(n: usize, t: f64) -> Vec<Vec<f64>> {
    let mut basis = vec![vec![1.0]];
    if n >= 1 {
        basis.push(vec![0.0, 2.0]);
    }
    for l in 1..n {
        let mut next = vec![0.0; l + 2];
        for (m, &v) in basis[l].iter().enumerate() {
            next[m + 1] += 2.0 * v;
        }
        for (m, &v) in basis[l - 1].iter().enumerate() {
            next[m] -= 4.0 * l as f64 * t * v;
        }
        basis.push(next);
    }
    basis
}

/// Coordinates `c_l` of `p = sum_l c_l H_l(t, .)`.
pub fn hermite_heat_coordinates(p: &PolyRep<f64>, t: f64) -> Result<Vec<f64>> {
    if p.variable != Variable::Z {
        return Err(LabError::InvalidParams("expected a polynomial in z".into()));
    }
    let n = p.degree();
    let basis = hermite_heat_basis(n, t);
    let mut rest = p.coeffs.clone();
    let mut out = vec![0.0; n + 1];
    for l in (0..=n).rev() {
        let c = rest[l] / basis[l][l];
        out[l] = c;
        for (m, &v) in basis[l].iter().enumerate() {
            rest[m] -= c * v;
        }
    }
    Ok(out)
}

fn chebyshev_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let th = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * count) as f64;
            0.5 * (lo + hi) + 0.5 * (hi - lo) * th.cos()
        })
        .collect()
}

/// Time-derivative weights at sample `i`: five-point stencil on uniform
/// grids (the two outermost samples on each side are skipped), three-point
/// nonuniform otherwise.
fn fd_weights(times: &[f64], i: usize) -> Option<Vec<(usize, f64)>> {
    let n = times.len();
    if i == 0 || i + 1 >= n {
        return None;
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let uniform = n >= 5 && times.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-6 * h);
    if uniform {
        if i < 2 || i + 2 >= n {
            return None;
        }
        let w = 1.0 / (12.0 * h);
        return Some(vec![(i - 2, w), (i - 1, -8.0 * w), (i + 1, 8.0 * w), (i + 2, -w)]);
    }
    let (h0, h1) = (times[i] - times[i - 1], times[i + 1] - times[i]);
    Some(vec![
        (i - 1, -h1 / (h0 * (h0 + h1))),
        (i, (h1 - h0) / (h0 * h1)),
        (i + 1, h0 / (h1 * (h0 + h1))),
    ])
}

/// Max over interior samples and a z-grid of `|d/dt H - L H|` for the
/// characteristic polynomials of a trajectory, relative to
/// `1 + max |L H|` on the same grid. Time derivatives are finite differences
/// across neighbouring samples.
pub fn pde_residual(trajectory: &Trajectory) -> Result<f64> {
    let model = &trajectory.model;
    let samples: &[ParticleState<f64>] = &trajectory.samples;
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    if model.family == Family::Torus {
        let polys: Vec<Vec<C64>> = samples.iter().map(|s| poly_from_angles(&s.coords).coeffs).collect();
        let count = 4 * model.n + 1;
        let grid: Vec<C64> = (0..count)
            .map(|k| C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / count as f64))
            .collect();
        let mut worst = 0.0f64;
        for i in 0..samples.len() {
            let Some(w) = fd_weights(&times, i) else { continue };
            let lhs = w
                .iter()
                .fold(vec![C64::zero(); model.n + 1], |acc, &(j, wj)| {
                    acc.iter().zip(&polys[j]).map(|(a, b)| a + b * wj).collect()
                });
            let rhs = apply_operator(model, &polys[i])?;
            let r: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            let rp = PolyRep { coeffs: r, family: Family::Torus, variable: Variable::Z };
            let lp = PolyRep { coeffs: rhs, family: Family::Torus, variable: Variable::Z };
            let scale = 1.0 + grid.iter().fold(0.0f64, |m, &z| m.max(lp.eval_complex(z).norm()));
            for &z in &grid {
                worst = worst.max(rp.eval_complex(z).norm() / scale);
            }
        }
        return Ok(worst);
    }
    let polys: Vec<PolyRep<f64>> =
        samples.iter().map(|s| poly_from_roots(model.family, &s.coords)).collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for i in 0..samples.len() {
        let Some(w) = fd_weights(&times, i) else { continue };
        let mut r = vec![0.0; model.n + 1];
        for &(j, wj) in &w {
            for (m, v) in polys[j].coeffs.iter().enumerate() {
                r[m] += wj * v;
            }
        }
        let rhs = apply_operator(model, &polys[i].coeffs)?;
        for (a, b) in r.iter_mut().zip(&rhs) {
            *a -= b;
        }
        let x = &samples[i].coords;
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let grid = chebyshev_grid(lo, hi, 4 * model.n + 1);
        let rp = PolyRep { coeffs: r, family: model.family, variable: polys[i].variable };
        let lp = PolyRep { coeffs: rhs, family: model.family, variable: polys[i].variable };
        let scale = 1.0 + grid.iter().fold(0.0f64, |m, &z| m.max(lp.eval(z).abs()));
        for &z in &grid {
            worst = worst.max(rp.eval(z).abs() / scale);
        }
    }
    Ok(worst)
}

/// Operator matrix applied to a coefficient vector.
pub fn matrix_apply<C: HeatCoeff>(op: &HeatOperatorMatrix, c: &[C]) -> Vec<C> {
    let n = c.len();
    (0..n).map(|i| (0..n).fold(C::zero(), |acc, j| acc + c[j] * op.a[(i, j)])).collect()
}

/// Real coefficient vector as an nalgebra vector.
pub fn to_dvector(c: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_round_trip_examples() {
        let p = poly_from_roots(Family::HermiteA, &[-1.0, 1.0]).unwrap();
        assert_eq!(p.coeffs, vec![-1.0, 0.0, 1.0]);
        let w = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];
        let p = poly_from_unit_roots(&w);
        assert_eq!(p.coeffs, vec![C64::new(-1.0, 0.0), C64::zero(), C64::new(1.0, 0.0)]);
        let r = roots_from_poly(&poly_from_roots(Family::HermiteA, &[-0.3, 0.1, 2.0]).unwrap()).unwrap();
        assert!((r[0] + 0.3).abs() < 1e-13 && (r[2] - 2.0).abs() < 1e-13);
        let r = roots_from_poly(&poly_from_roots(Family::LaguerreB, &[0.5, 1.5]).unwrap()).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-13 && (r[1] - 1.5).abs() < 1e-13);
    }

    #[test]
    fn non_real_roots_are_rejected() {
        let p = PolyRep { coeffs: vec![1.0, 0.0, 1.0], family: Family::HermiteA, variable: Variable::Z };
        assert!(matches!(roots_from_poly(&p), Err(LabError::NonRealRoots(_))));
    }

    #[test]
    fn operator_examples() {
        let a = operator_matrix(&Model::hermite(2)).unwrap().a;
        assert_eq!(a[(0, 2)], -1.0);
        assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 1);
        let a = operator_matrix(&Model::torus(2)).unwrap().a;
        assert_eq!((a[(0, 0)], a[(1, 1)], a[(2, 2)]), (0.0, -1.0, 0.0));
        let (p, q) = (3.0, 2.0);
        let a = operator_matrix(&Model::jacobi(1, p, q)).unwrap().a;
        assert_eq!(a[(0, 1)], -(p - q));
        assert_eq!(a[(0, 0)], -(p + q));
        assert_eq!(a[(1, 1)], 0.0);
    }

    #[test]
    fn flow_examples() {
        let m = Model::hermite(2);
        let p0 = poly_from_roots(Family::HermiteA, &[-1.0, 1.0]).unwrap();
        let p1 = coefficient_flow(&m, &p0, 1.0).unwrap();
        assert_eq!(p1.coeffs, vec![-2.0, 0.0, 1.0]);
        let p = coefficient_flow(&m, &p0, 0.0).unwrap();
        assert_eq!(p, p0);
        let mt = Model::torus(2);
        let w0 = poly_from_unit_roots(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        let pt = coefficient_flow(&mt, &w0, 3.7).unwrap();
        assert!((pt.coeffs[0] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(pt.coeffs[1].norm() < 1e-15);
    }

    #[test]
    fn heat_polynomial_examples() {
        for t in [0.1, 1.0, 3.0] {
            assert!((heat_polynomial(HeatPolyKind::Hermite, 1, t, 0.7).unwrap() - 1.4).abs() < 1e-14);
        }
        assert!((heat_polynomial(HeatPolyKind::Hermite, 2, 1.0, 0.0).unwrap() + 4.0).abs() < 1e-14);
        let t = 0.8;
        let v = heat_polynomial(HeatPolyKind::Bessel { nu: 1.0 }, 1, t, (2.0 * t).sqrt()).unwrap();
        assert!(v.abs() < 1e-14);
        assert_eq!(heat_polynomial(HeatPolyKind::Hermite, 2, 0.0, 1.0).unwrap(), 4.0);
        assert!(heat_polynomial(HeatPolyKind::Hermite, 2, -1.0, 1.0).is_err());
        // against (-1)^n n! (2t)^n L_n^(nu-1)(z^2 / 2t)
        let (nu, t, z) = (1.7f64, 0.4f64, 1.3f64);
        use crate::orthopoly::{eval_classical, Classical};
        let l = eval_classical(&Classical::Laguerre { alpha: nu - 1.0 }, 3, z * z / (2.0 * t)).unwrap();
        let want = -6.0 * (2.0 * t).powi(3) * l;
        let got = heat_polynomial(HeatPolyKind::Bessel { nu }, 3, t, z).unwrap();
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn two_operator_routes_agree() {
        let models = [
            Model::hermite(4),
            Model::hermite(4).with_lambda(0.7),
            Model::laguerre(4, 1.3),
            Model::laguerre(4, 1.3).with_lambda(2.0),
            Model::jacobi(4, 4.5, 6.0),
            Model::jacobi_noncompact(4, 4.5, 6.0),
            Model::torus(4),
        ];
        let c = [0.3, -1.2, 0.5, 2.0, 1.0];
        for m in models {
            let op = operator_matrix(&m).unwrap();
            let a = matrix_apply(&op, &c);
            let b = apply_operator(&m, &c).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "{:?}", m.family);
            }
        }
    }
}
