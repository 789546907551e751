//! Model families, their chambers and the right-hand sides of the frozen flows.
//!
//! Coordinates are stored in increasing order for every family. Torus angles
//! live in the fundamental chamber `x_1 <= ... <= x_N <= x_1 + 2 pi`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    HermiteA,
    LaguerreB,
    JacobiCompact,
    JacobiNoncompact,
    Torus,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::HermiteA,
        Family::LaguerreB,
        Family::JacobiCompact,
        Family::JacobiNoncompact,
        Family::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::HermiteA => "hermite",
            Family::LaguerreB => "laguerre",
            Family::JacobiCompact => "jacobi",
            Family::JacobiNoncompact => "jacobi-noncompact",
            Family::Torus => "torus",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s.to_ascii_lowercase().as_str() {
            "hermite" | "hermite-a" | "a" => Some(Family::HermiteA),
            "laguerre" | "laguerre-b" | "b" => Some(Family::LaguerreB),
            "jacobi" | "jacobi-compact" => Some(Family::JacobiCompact),
            "jacobi-noncompact" | "noncompact" => Some(Family::JacobiNoncompact),
            "torus" => Some(Family::Torus),
            _ => None,
        }
    }
}

/// Inverse temperature (`k`, `beta` or `kappa` depending on the family).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InvTemp<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> InvTemp<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, InvTemp::Infinite)
    }

    /// `1/k`, zero at infinity.
    pub fn recip(&self) -> T {
        match *self {
            InvTemp::Finite(k) => k.recip(),
            InvTemp::Infinite => T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub family: Family,
    pub n: usize,
    pub nu: T,
    pub p: T,
    pub q: T,
    /// Confinement for the stationary Hermite/Laguerre flows. `Some` switches
    /// `flow_rhs` to the confined ODE.
    pub lambda: Option<T>,
    pub inv_temp: InvTemp<T>,
}

impl<T: Real> ModelSpec<T> {
    fn base(family: Family, n: usize) -> Self {
        ModelSpec {
            family,
            n,
            nu: T::zero(),
            p: T::zero(),
            q: T::zero(),
            lambda: None,
            inv_temp: InvTemp::Infinite,
        }
    }

    pub fn hermite(n: usize) -> Self {
        Self::base(Family::HermiteA, n)
    }

    pub fn laguerre(n: usize, nu: T) -> Self {
        ModelSpec { nu, ..Self::base(Family::LaguerreB, n) }
    }

    pub fn jacobi(n: usize, p: T, q: T) -> Self {
        ModelSpec { p, q, ..Self::base(Family::JacobiCompact, n) }
    }

    pub fn jacobi_noncompact(n: usize, p: T, q: T) -> Self {
        ModelSpec { p, q, ..Self::base(Family::JacobiNoncompact, n) }
    }

    pub fn torus(n: usize) -> Self {
        Self::base(Family::Torus, n)
    }

    pub fn with_inv_temp(mut self, k: T) -> Self {
        self.inv_temp = if k.is_infinite() { InvTemp::Infinite } else { InvTemp::Finite(k) };
        self
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn n_t(&self) -> T {
        T::from_usize_lossy(self.n)
    }

    /// Confinement used by `stationary_drift`: the explicit `lambda` or the
    /// family default `N(N-1)/2` (Hermite), `N(N+nu-1)` (Laguerre).
    pub fn stationary_lambda(&self) -> Result<T> {
        let n = self.n_t();
        match self.family {
            Family::HermiteA => Ok(self.lambda.unwrap_or(n * (n - T::one()) / T::lit(2.0))),
            Family::LaguerreB => Ok(self.lambda.unwrap_or(n * (n + self.nu - T::one()))),
            f => Err(LabError::Unsupported(format!(
                "stationary flow is not defined for the {} family",
                f.name()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LabError::InvalidParams("N must be positive".into()));
        }
        let bound = self.n_t() - T::one();
        match self.family {
            Family::LaguerreB => {
                if !(self.nu > T::zero()) || !self.nu.is_finite() {
                    return Err(LabError::InvalidParams(format!("nu must be > 0, got {}", self.nu)));
                }
            }
            Family::JacobiCompact | Family::JacobiNoncompact => {
                if !(self.p > bound && self.q > bound) || !self.p.is_finite() || !self.q.is_finite() {
                    return Err(LabError::InvalidParams(format!(
                        "p and q must exceed N-1 = {bound}, got p = {}, q = {}",
                        self.p, self.q
                    )));
                }
            }
            Family::HermiteA | Family::Torus => {}
        }
        if let Some(l) = self.lambda {
            if !matches!(self.family, Family::HermiteA | Family::LaguerreB) {
                return Err(LabError::InvalidParams("lambda applies to Hermite and Laguerre only".into()));
            }
            if !(l >= T::zero()) || !l.is_finite() {
                return Err(LabError::InvalidParams(format!("lambda must be >= 0, got {l}")));
            }
        }
        if let InvTemp::Finite(k) = self.inv_temp {
            if !(k > T::zero()) {
                return Err(LabError::InvalidParams(format!("inverse temperature must be > 0, got {k}")));
            }
        }
        Ok(())
    }

    /// Extra condition `p, q > N - 1 + 1/kappa` of the Jacobi expectation identities.
    pub fn validate_jacobi_expectation(&self) -> Result<()> {
        self.validate()?;
        let bound = self.n_t() - T::one() + self.inv_temp.recip();
        if !(self.p > bound && self.q > bound) {
            return Err(LabError::InvalidParams(format!(
                "p and q must exceed N-1+1/kappa = {bound}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState<T> {
    pub time: T,
    pub coords: Vec<T>,
}

impl<T: Real> ParticleState<T> {
    pub fn new(time: T, coords: Vec<T>) -> Self {
        ParticleState { time, coords }
    }

    pub fn at_zero(coords: Vec<T>) -> Self {
        Self::new(T::zero(), coords)
    }

    /// `w_j = exp(i x_j)`.
    pub fn complex_view(&self) -> Vec<Complex<T>> {
        self.coords.iter().map(|&x| Complex::from_polar(T::one(), x)).collect()
    }

    pub fn norm_sq(&self) -> T {
        self.coords.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    pub fn sum(&self) -> T {
        self.coords.iter().fold(T::zero(), |acc, &x| acc + x)
    }
}

/// A group of coordinates that coincide with each other or with a hard wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster<T> {
    /// Indices in chamber order; for the torus a cluster may wrap from `N-1` to `0`.
    pub indices: Vec<usize>,
    /// Location of the wall the cluster touches, if any.
    pub wall: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFlag<T> {
    pub on_boundary: bool,
    pub degenerate_clusters: Vec<Cluster<T>>,
}

fn close<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() < T::lit(1e-12) * (T::one() + a.abs() + b.abs())
}

/// Checks ordering and wall constraints (closed chamber).
pub fn check_chamber<T: Real>(model: &ModelSpec<T>, x: &[T]) -> Result<()> {
    if x.len() != model.n {
        return Err(LabError::InvalidParams(format!(
            "expected {} coordinates, got {}",
            model.n,
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LabError::OutsideChamber("non-finite coordinate".into()));
    }
    for w in x.windows(2) {
        if w[1] < w[0] && !close(w[0], w[1]) {
            return Err(LabError::OutsideChamber(format!("coordinates not ordered: {} > {}", w[0], w[1])));
        }
    }
    let (first, last) = (x[0], x[x.len() - 1]);
    let one = T::one();
    let below = |v: T, wall: T| v < wall && !close(v, wall);
    let bad = match model.family {
        Family::HermiteA => false,
        Family::LaguerreB => below(first, T::zero()),
        Family::JacobiCompact => below(first, -one) || below(one, last),
        Family::JacobiNoncompact => below(first, one),
        Family::Torus => {
            let top = first + T::TAU();
            below(top, last)
        }
    };
    if bad {
        return Err(LabError::OutsideChamber(format!("{:?} violates the {} chamber", x, model.family.name())));
    }
    Ok(())
}

/// Finds coinciding coordinates and wall contacts.
pub fn classify<T: Real>(model: &ModelSpec<T>, x: &[T]) -> BoundaryFlag<T> {
    let n = x.len();
    let mut clusters: Vec<Cluster<T>> = Vec::new();
    if n == 0 {
        return BoundaryFlag { on_boundary: false, degenerate_clusters: clusters };
    }
    // chains of neighbours
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..n {
        if close(x[i - 1], x[i]) {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    let one = T::one();
    let lower_wall = match model.family {
        Family::LaguerreB => Some(T::zero()),
        Family::JacobiCompact => Some(-one),
        Family::JacobiNoncompact => Some(one),
        _ => None,
    };
    let upper_wall = match model.family {
        Family::JacobiCompact => Some(one),
        _ => None,
    };
    if model.family == Family::Torus && groups.len() > 1 && close(x[n - 1], x[0] + T::TAU()) {
        let head = groups.remove(0);
        groups.last_mut().unwrap().extend(head);
    }
    let last_group = groups.len() - 1;
    for (gi, g) in groups.into_iter().enumerate() {
        let mut wall = None;
        if gi == 0 {
            if let Some(w) = lower_wall {
                if close(x[g[0]], w) {
                    wall = Some(w);
                }
            }
        }
        if gi == last_group {
            if let Some(w) = upper_wall {
                if close(x[*g.last().unwrap()], w) {
                    wall = Some(w);
                }
            }
        }
        if g.len() > 1 || wall.is_some() {
            clusters.push(Cluster { indices: g, wall });
        }
    }
    BoundaryFlag { on_boundary: !clusters.is_empty(), degenerate_clusters: clusters }
}

fn require_interior<T: Real>(model: &ModelSpec<T>, x: &[T]) -> Result<()> {
    check_chamber(model, x)?;
    let flag = classify(model, x);
    if flag.on_boundary {
        return Err(LabError::DegenerateState(format!(
            "{} boundary cluster(s), first at indices {:?}",
            flag.degenerate_clusters.len(),
            flag.degenerate_clusters[0].indices
        )));
    }
    Ok(())
}

/// Free-flow right-hand side without any checks.
pub fn drift_into<T: Real>(model: &ModelSpec<T>, x: &[T], out: &mut [T]) {
    let n = x.len();
    let one = T::one();
    let two = T::lit(2.0);
    match model.family {
        Family::HermiteA => {
            for i in 0..n {
                let mut s = T::zero();
                for j in 0..n {
                    if j != i {
                        s += (x[i] - x[j]).recip();
                    }
                }
                out[i] = s;
            }
        }
        Family::LaguerreB => {
            for i in 0..n {
                let mut s = model.nu / x[i];
                for j in 0..n {
                    if j != i {
                        s += (x[i] - x[j]).recip() + (x[i] + x[j]).recip();
                    }
                }
                out[i] = s;
            }
        }
        Family::JacobiCompact | Family::JacobiNoncompact => {
            let sign = if model.family == Family::JacobiCompact { one } else { -one };
            for i in 0..n {
                let mut s = (model.p - model.q) - (model.p + model.q) * x[i];
                for j in 0..n {
                    if j != i {
                        s += two * (one - x[i] * x[j]) / (x[i] - x[j]);
                    }
                }
                out[i] = sign * s;
            }
        }
        Family::Torus => {
            for i in 0..n {
                let mut s = T::zero();
                for j in 0..n {
                    if j != i {
                        s += ((x[i] - x[j]) / two).tan().recip();
                    }
                }
                out[i] = s;
            }
        }
    }
}

/// Right-hand side of the flow selected by `model`: the free flow, or the
/// confined one when `model.lambda` is set.
pub fn flow_rhs<T: Real>(model: &ModelSpec<T>, x: &[T], out: &mut [T]) {
    drift_into(model, x, out);
    if let Some(l) = model.lambda {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o -= l * xi;
        }
    }
}

pub fn drift<T: Real>(model: &ModelSpec<T>, state: &ParticleState<T>) -> Result<Vec<T>> {
    model.validate()?;
    require_interior(model, &state.coords)?;
    let mut out = vec![T::zero(); state.coords.len()];
    drift_into(model, &state.coords, &mut out);
    Ok(out)
}

/// Drift minus `lambda * psi`.
pub fn stationary_drift<T: Real>(model: &ModelSpec<T>, state: &ParticleState<T>) -> Result<Vec<T>> {
    let lambda = model.stationary_lambda()?;
    let mut out = drift(model, state)?;
    for (o, &x) in out.iter_mut().zip(&state.coords) {
        *o -= lambda * x;
    }
    Ok(out)
}

/// Compact Jacobi flow in angles `x_i = cos tau_i`, `pi > tau_1 > ... > tau_N > 0`.
pub fn trig_jacobi_drift<T: Real>(model: &ModelSpec<T>, tau: &[T]) -> Result<Vec<T>> {
    if model.family != Family::JacobiCompact {
        return Err(LabError::Unsupported("trigonometric form exists for compact Jacobi only".into()));
    }
    model.validate()?;
    let n = tau.len();
    if n != model.n {
        return Err(LabError::InvalidParams(format!("expected {} angles", model.n)));
    }
    for i in 0..n {
        let t = tau[i];
        if !(t > T::zero() && t < T::PI()) || close(t, T::zero()) || close(t, T::PI()) {
            return Err(LabError::DegenerateState(format!("angle {t} at or beyond an endpoint")));
        }
        if i > 0 && !(tau[i - 1] > t && !close(tau[i - 1], t)) {
            return Err(LabError::DegenerateState(format!("angles not strictly decreasing at {i}")));
        }
    }
    let two = T::lit(2.0);
    let c = two * (model.p + T::one() - model.n_t());
    let out = (0..n)
        .map(|i| {
            let ti = tau[i];
            let mut s = (model.q - model.p) / (ti / two).tan() + c / ti.tan();
            for j in 0..n {
                if j != i {
                    s += ((ti - tau[j]) / two).tan().recip() + ((ti + tau[j]) / two).tan().recip();
                }
            }
            s
        })
        .collect();
    Ok(out)
}

/// Torus flow in `w = exp(i x)`: `w_j' = -(N-1) w_j - 2 sum_l w_j w_l / (w_j - w_l)`.
pub fn torus_w_drift<T: Real>(model: &ModelSpec<T>, w: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if model.family != Family::Torus {
        return Err(LabError::Unsupported("w-coordinates exist for the torus only".into()));
    }
    let n = w.len();
    if n != model.n {
        return Err(LabError::InvalidParams(format!("expected {} points", model.n)));
    }
    let tol = T::lit(1e-12);
    for (j, wj) in w.iter().enumerate() {
        if (wj.norm() - T::one()).abs() > T::lit(1e-10) {
            return Err(LabError::OutsideChamber(format!("|w_{j}| = {} is not 1", wj.norm())));
        }
        for wl in &w[..j] {
            if (wj - wl).norm() < tol {
                return Err(LabError::DegenerateState("coinciding points on the circle".into()));
            }
        }
    }
    let two = T::lit(2.0);
    let m = model.n_t() - T::one();
    Ok((0..n)
        .map(|j| {
            let mut s = -w[j] * m;
            for l in 0..n {
                if l != j {
                    s = s - (w[j] * w[l] / (w[j] - w[l])) * two;
                }
            }
            s
        })
        .collect())
}

/// Angles on the circle mapped into the fundamental chamber, keeping the
/// total `target_sum` when given (the representative is otherwise the one
/// with `x_1` in `[0, 2 pi)`).
pub fn torus_canonical<T: Real>(angles: &[T], target_sum: Option<T>) -> Vec<T> {
    let tau = T::TAU();
    let mut a: Vec<T> = angles
        .iter()
        .map(|&x| {
            let r = x % tau;
            if r < T::zero() {
                r + tau
            } else {
                r
            }
        })
        .collect();
    a.sort_by(|u, v| u.partial_cmp(v).unwrap_or(std::cmp::Ordering::Equal));
    if let Some(s) = target_sum {
        let n = a.len();
        if n == 0 {
            return a;
        }
        // rotating the lowest particle up by 2 pi changes the sum by 2 pi
        let cur = a.iter().fold(T::zero(), |acc, &x| acc + x);
        let shift = ((s - cur) / tau).round();
        let k = shift.to_i64().unwrap_or(0);
        let steps = k.rem_euclid(n as i64) as usize;
        let whole = (k - steps as i64) / n as i64;
        for _ in 0..steps {
            let first = a.remove(0);
            a.push(first + tau);
        }
        let w = T::from_i64(whole).unwrap_or_else(T::zero) * tau;
        for x in a.iter_mut() {
            *x += w;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(x: &[f64]) -> ParticleState<f64> {
        ParticleState::at_zero(x.to_vec())
    }

    #[test]
    fn drift_examples() {
        let d = drift(&ModelSpec::hermite(2), &st(&[-1.0, 1.0])).unwrap();
        assert_eq!(d, vec![-0.5, 0.5]);
        let d = drift(&ModelSpec::laguerre(1, 1.0), &st(&[2.0])).unwrap();
        assert_eq!(d, vec![0.5]);
        let d = drift(&ModelSpec::jacobi(1, 3.0, 2.0), &st(&[0.2])).unwrap();
        assert!(d[0].abs() < 1e-15);
        let d = drift(&ModelSpec::torus(2), &st(&[0.0, std::f64::consts::PI])).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn drift_rejects_ties_and_walls() {
        let e = drift(&ModelSpec::hermite(2), &st(&[1.0, 1.0])).unwrap_err();
        assert!(matches!(e, LabError::DegenerateState(_)));
        let e = drift(&ModelSpec::laguerre(2, 1.0), &st(&[0.0, 1.0])).unwrap_err();
        assert!(matches!(e, LabError::DegenerateState(_)));
        let e = drift(&ModelSpec::jacobi(2, 3.0, 3.0), &st(&[0.0, 1.0])).unwrap_err();
        assert!(matches!(e, LabError::DegenerateState(_)));
        let e = drift(&ModelSpec::hermite(2), &st(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(e, LabError::OutsideChamber(_)));
    }

    #[test]
    fn stationary_examples() {
        let h = ModelSpec::hermite(2).with_lambda(1.0);
        let s = 0.5f64.sqrt();
        let d = stationary_drift(&h, &st(&[-s, s])).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
        let d = stationary_drift(&h, &st(&[-1.0, 1.0])).unwrap();
        assert_eq!(d, vec![0.5, -0.5]);
        let l = ModelSpec::laguerre(1, 2.0).with_lambda(1.0);
        let d = stationary_drift(&l, &st(&[2f64.sqrt()])).unwrap();
        assert!(d[0].abs() < 1e-15);
        assert!(matches!(
            stationary_drift(&ModelSpec::torus(2), &st(&[0.0, 1.0])),
            Err(LabError::Unsupported(_))
        ));
        // default lambda N(N-1)/2
        let d = stationary_drift(&ModelSpec::hermite(2), &st(&[-s, s])).unwrap();
        assert!(d[0].abs() < 1e-15);
    }

    #[test]
    fn trig_examples() {
        let m = ModelSpec::jacobi(1, 3.0, 3.0);
        let d = trig_jacobi_drift(&m, &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!(d[0].abs() < 1e-15);
        let m = ModelSpec::jacobi(1, 3.0, 2.0);
        let d = trig_jacobi_drift(&m, &[0.2f64.acos()]).unwrap();
        assert!(d[0].abs() < 1e-13);
        let m = ModelSpec::jacobi(2, 3.0, 3.0);
        let pi = std::f64::consts::PI;
        let d = trig_jacobi_drift(&m, &[2.0 * pi / 3.0, pi / 3.0]).unwrap();
        assert!((d[0] + d[1]).abs() < 1e-13 && d[0].abs() > 1e-3);
    }

    #[test]
    fn w_drift_examples() {
        let m = ModelSpec::torus(2);
        let one = Complex::new(1.0, 0.0);
        let d = torus_w_drift(&m, &[one, -one]).unwrap();
        assert!(d.iter().all(|v| v.norm() < 1e-15));
        let d = torus_w_drift(&ModelSpec::torus(1), &[Complex::new(0.0, 1.0)]).unwrap();
        assert_eq!(d[0], Complex::new(0.0, 0.0));
        let w: Vec<_> = (0..3).map(|j| Complex::from_polar(1.0, j as f64 * std::f64::consts::TAU / 3.0)).collect();
        let d = torus_w_drift(&ModelSpec::torus(3), &w).unwrap();
        assert!(d.iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn classify_clusters() {
        let f = classify(&ModelSpec::hermite(4), &[0.0, 1.0, 1.0, 2.0]);
        assert_eq!(f.degenerate_clusters, vec![Cluster { indices: vec![1, 2], wall: None }]);
        let f = classify(&ModelSpec::laguerre(3, 1.0), &[0.0, 0.0, 2.0]);
        assert_eq!(f.degenerate_clusters, vec![Cluster { indices: vec![0, 1], wall: Some(0.0) }]);
        let f = classify(&ModelSpec::jacobi(3, 3.0, 3.0), &[-1.0, 0.0, 1.0]);
        assert_eq!(f.degenerate_clusters.len(), 2);
        let tau = std::f64::consts::TAU;
        let f = classify(&ModelSpec::torus(3), &[0.0, 1.0, tau]);
        assert_eq!(f.degenerate_clusters, vec![Cluster { indices: vec![2, 0], wall: None }]);
        assert!(!classify(&ModelSpec::hermite(2), &[0.0, 1.0]).on_boundary);
    }

    #[test]
    fn canonical_torus_keeps_sum() {
        let tau = std::f64::consts::TAU;
        let a = torus_canonical(&[-0.5, 1.0, 3.0], Some(3.5));
        assert!((a.iter().sum::<f64>() - 3.5).abs() < 1e-12);
        assert!(a[2] <= a[0] + tau);
        let a = torus_canonical(&[0.1, 0.2], Some(0.3 + 2.0 * tau));
        assert!((a.iter().sum::<f64>() - (0.3 + 2.0 * tau)).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let d = drift(&ModelSpec::<f32>::hermite(2), &ParticleState::at_zero(vec![-1.0f32, 1.0])).unwrap();
        assert_eq!(d, vec![-0.5f32, 0.5]);
    }
}
