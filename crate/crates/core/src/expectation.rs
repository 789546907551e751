//! Monte Carlo checks of the expectation identities and martingales, and
//! paired-trajectory decay checks for the deterministic flows.

use std::sync::OnceLock;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::heat::{heat_polynomial, HeatPolyKind};
use crate::model::{Family, InvTemp, ModelSpec, ParticleState};
use crate::ode::{self, SolveConfig};
use crate::orthopoly::{eval_classical, Classical};
use crate::sde::{simulate, simulate_companion, CompanionKind, RngStream, SdeConfig};

type Model = ModelSpec<f64>;
type State = ParticleState<f64>;
type C64 = Complex<f64>;

pub const Z_THRESHOLD: f64 = 3.0;
pub const MIN_PATHS: usize = 100;
/// Distances may exceed the bound by this relative margin.
pub const BOUND_SLACK: f64 = 1e-8;

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("CMS_LAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
    })
}

/// Evaluates `f` on streams `0..n` of `root_seed` in parallel; the result is
/// in stream order and the first error (by stream) wins.
pub fn run_paths<V, F>(n: usize, root_seed: u64, f: F) -> Result<Vec<V>>
where
    V: Send,
    F: Fn(RngStream) -> Result<V> + Sync,
{
    let out: Vec<Result<V>> =
        pool().install(|| (0..n as u64).into_par_iter().map(|i| f(RngStream::new(root_seed, i))).collect());
    out.into_iter().collect()
}

/// Compensated (Neumaier) sum.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.c
    }
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mut s = Neumaier::default();
    v.clone().for_each(|x| s.add(x));
    let m = s.total() / n as f64;
    let mut q = Neumaier::default();
    v.for_each(|x| q.add((x - m) * (x - m)));
    (m, (q.total() / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: C64,
    /// Standard error of the real and imaginary parts.
    pub stderr: C64,
    pub n_paths: usize,
    pub root_seed: u64,
}

impl McEstimate {
    pub fn from_samples(values: &[C64], root_seed: u64) -> Result<McEstimate> {
        let n = values.len();
        if n < MIN_PATHS {
            return Err(LabError::InsufficientPaths(n));
        }
        let (mr, sr) = mean_sd(values.iter().map(|v| v.re), n);
        let (mi, si) = mean_sd(values.iter().map(|v| v.im), n);
        let rt = (n as f64).sqrt();
        Ok(McEstimate { mean: C64::new(mr, mi), stderr: C64::new(sr / rt, si / rt), n_paths: n, root_seed })
    }

    /// Componentwise z-score against `target`. A zero standard error (a
    /// deterministic ensemble) is floored at `1e-9 (1 + |target|)`.
    pub fn z_against(&self, target: C64, extra_stderr: C64) -> f64 {
        let floor = 1e-9 * (1.0 + target.norm());
        let se_re = (self.stderr.re.powi(2) + extra_stderr.re.powi(2)).sqrt().max(floor);
        let se_im = (self.stderr.im.powi(2) + extra_stderr.im.powi(2)).sqrt().max(floor);
        let d = self.mean - target;
        (d.re.abs() / se_re).max(d.im.abs() / se_im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub tag: String,
    pub predicted: C64,
    pub estimate: McEstimate,
    /// Second ensemble for two-sample comparisons; `predicted` is its mean.
    pub reference: Option<McEstimate>,
    pub z_score: f64,
    pub pass: bool,
    pub threshold: f64,
    pub t: f64,
    pub dt: f64,
    pub inv_temp: Option<f64>,
    pub reruns: u32,
}

impl IdentityReport {
    fn new(tag: &str, predicted: C64, estimate: McEstimate, t: f64, dt: f64, inv_temp: InvTemp<f64>) -> Self {
        let z = estimate.z_against(predicted, C64::new(0.0, 0.0));
        IdentityReport {
            tag: tag.to_string(),
            predicted,
            estimate,
            reference: None,
            z_score: z,
            pass: z <= Z_THRESHOLD,
            threshold: Z_THRESHOLD,
            t,
            dt,
            inv_temp: match inv_temp {
                InvTemp::Finite(k) => Some(k),
                InvTemp::Infinite => None,
            },
            reruns: 0,
        }
    }
}

/// Runs `f(n_paths)`; if any report fails, reruns once with four times the
/// paths.
pub fn with_rerun<F>(n_paths: usize, f: F) -> Result<Vec<IdentityReport>>
where
    F: Fn(usize) -> Result<Vec<IdentityReport>>,
{
    let first = f(n_paths)?;
    if first.iter().all(|r| r.pass) {
        return Ok(first);
    }
    let mut again = f(4 * n_paths)?;
    again.iter_mut().for_each(|r| r.reruns = 1);
    Ok(again)
}

/// `2 g(dt/2) - g(dt)` on noise-coupled discretisations.
fn extrapolated<V, G>(dt: f64, t_end: f64, g: G) -> Result<V>
where
    V: std::ops::Mul<f64, Output = V> + std::ops::Sub<Output = V>,
    G: Fn(&SdeConfig) -> Result<V>,
{
    let (coarse, fine) = SdeConfig::coupled_pair(dt, t_end);
    Ok(g(&fine)? * 2.0 - g(&coarse)?)
}

fn extrapolated_vec<G>(dt: f64, t_end: f64, g: G) -> Result<Vec<C64>>
where
    G: Fn(&SdeConfig) -> Result<Vec<C64>>,
{
    let (coarse, fine) = SdeConfig::coupled_pair(dt, t_end);
    let f = g(&fine)?;
    let c = g(&coarse)?;
    Ok(f.iter().zip(&c).map(|(a, b)| a * 2.0 - b).collect())
}

/// Elementary symmetric polynomial `e_l`.
pub fn esym<C>(v: &[C], l: usize) -> C
where
    C: Copy + num_traits::Zero + num_traits::One + std::ops::Mul<Output = C>,
{
    let mut e = vec![C::zero(); l + 1];
    e[0] = C::one();
    for &x in v {
        for j in (1..=l.min(v.len())).rev() {
            e[j] = e[j] + e[j - 1] * x;
        }
    }
    e[l]
}

fn final_coords(model: &Model, x0: &State, cfg: &SdeConfig, rng: RngStream, t: f64) -> Result<Vec<f64>> {
    let mut s = simulate(model, x0, cfg, rng, &[t])?;
    Ok(s.pop().expect("one sample").coords)
}

fn ode_states(model: &Model, x0: &[f64], times: &[f64]) -> Result<Vec<State>> {
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let cfg = SolveConfig { rel_tol: 1e-12, abs_tol: 1e-14, ..SolveConfig::until(t_end) }.with_output_times(times.to_vec());
    Ok(ode::solve(model, &State::at_zero(x0.to_vec()), &cfg)?.samples)
}

fn deterministic(model: &Model) -> Model {
    Model { inv_temp: InvTemp::Infinite, ..model.clone() }
}

fn jacobi_companion_params(model: &Model) -> (f64, f64) {
    let shift = model.n as f64 - 1.0;
    (model.p - shift, model.q - shift)
}

/// The companion process that pairs with `model` in its expectation identity.
pub fn companion_for(model: &Model) -> CompanionKind {
    match model.family {
        Family::HermiteA => CompanionKind::Brownian,
        Family::LaguerreB => CompanionKind::Bessel1D(model.nu + 0.5 * model.inv_temp.recip() - 1.0),
        Family::JacobiCompact => {
            let (p, q) = jacobi_companion_params(model);
            CompanionKind::JacobiCompact1D(p, q)
        }
        Family::JacobiNoncompact => {
            let (p, q) = jacobi_companion_params(model);
            CompanionKind::JacobiNoncompact1D(p, q)
        }
        Family::Torus => CompanionKind::TorusExp(model.n),
    }
}

fn jacobi_rate(model: &Model) -> f64 {
    let n = model.n as f64;
    n * (model.p + model.q - n + 1.0)
}

/// Predicted value of the characteristic-polynomial expectation at time `t`.
pub fn char_poly_prediction(model: &Model, x0: &[f64], y0: f64, t: f64) -> C64 {
    let prod = |f: &dyn Fn(f64) -> f64| C64::new(x0.iter().map(|&x| f(x)).product(), 0.0);
    match model.family {
        Family::HermiteA => prod(&|x| y0 - x),
        Family::LaguerreB => prod(&|x| y0 * y0 - x * x),
        Family::JacobiCompact => prod(&|x| y0 - x) * (-jacobi_rate(model) * t).exp(),
        Family::JacobiNoncompact => prod(&|x| y0 - x) * (jacobi_rate(model) * t).exp(),
        Family::Torus => {
            let y = C64::from_polar(1.0, std::f64::consts::SQRT_2 * y0);
            x0.iter().map(|&x| y - C64::from_polar(1.0, x)).product()
        }
    }
}

fn char_poly_value(model: &Model, x: &[f64], y: C64, t: f64) -> C64 {
    match model.family {
        Family::LaguerreB => x.iter().map(|&v| y * y - v * v).product(),
        Family::Torus => {
            let a = (t * model.inv_temp.recip()).exp();
            x.iter().map(|&v| y - C64::from_polar(a, v)).product()
        }
        _ => x.iter().map(|&v| y - v).product(),
    }
}

/// Monte Carlo estimate of `E prod (Y_t - X_t^i)` (family-specific form)
/// against its exact value. Particles and companion use separate domains of
/// the same stream; each path value is extrapolated from `dt` and `dt/2`.
#[allow(clippy::too_many_arguments)]
pub fn char_poly_expectation(
    model: &Model,
    x0: &State,
    companion: CompanionKind,
    y0: f64,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<IdentityReport> {
    model.validate()?;
    if matches!(model.family, Family::JacobiCompact | Family::JacobiNoncompact) {
        model.validate_jacobi_expectation()?;
    }
    let tag = match model.family {
        Family::HermiteA => "hermite-brownian",
        Family::LaguerreB => "laguerre-bessel",
        Family::JacobiCompact => "jacobi-compact",
        Family::JacobiNoncompact => "jacobi-noncompact",
        Family::Torus => "torus-exp",
    };
    let values = run_paths(n_paths, seed, |rng| {
        extrapolated(dt, t, |cfg| {
            let x = final_coords(model, x0, cfg, rng, t)?;
            let y = simulate_companion(companion, y0, cfg, rng, &[t])?[0].value;
            Ok(char_poly_value(model, &x, y, t))
        })
    })?;
    let est = McEstimate::from_samples(&values, seed)?;
    Ok(IdentityReport::new(tag, char_poly_prediction(model, &x0.coords, y0, t), est, t, dt, model.inv_temp))
}

/// `(tk/2)^{N/2} H_N(z / sqrt(2kt))`: `E prod (z - X^i)` at time `t` for the
/// unscaled process (noise `dB`, drift `k sum 1/(x_i - x_j)`) started at 0.
pub fn hermite_char_poly_closed_form(n: usize, k: f64, t: f64, z: f64) -> f64 {
    let h = eval_classical(&Classical::<f64>::Hermite, n, z / (2.0 * k * t).sqrt()).expect("degree in range");
    (t * k / 2.0).powf(n as f64 / 2.0) * h
}

/// `(-1)^N (2 t beta)^N N! L_N^{(nu + 1/(2 beta) - 1)}(y / (2 t beta))`:
/// `E prod (y - (X^i)^2)` at time `t` for the unscaled process started at 0.
pub fn laguerre_char_poly_closed_form(n: usize, nu: f64, beta: f64, t: f64, y: f64) -> f64 {
    let alpha = nu + 0.5 / beta - 1.0;
    let s = 2.0 * t * beta;
    let l = eval_classical(&Classical::Laguerre { alpha }, n, y / s).expect("alpha > -1");
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign * s.powi(n as i32) * fact * l
}

/// MC check of the Hermite closed form. The unscaled process at time `t` is
/// the simulated (noise `1/sqrt(k)`) one at time `k t`.
pub fn hermite_closed_form_check(n: usize, k: f64, t: f64, z: f64, dt: f64, n_paths: usize, seed: u64) -> Result<IdentityReport> {
    let model = Model::hermite(n).with_inv_temp(k);
    model.validate()?;
    let x0 = State::at_zero(vec![0.0; n]);
    let horizon = k * t;
    let values = run_paths(n_paths, seed, |rng| {
        extrapolated(dt, horizon, |cfg| {
            let x = final_coords(&model, &x0, cfg, rng, horizon)?;
            Ok(C64::new(x.iter().map(|&v| z - v).product(), 0.0))
        })
    })?;
    let est = McEstimate::from_samples(&values, seed)?;
    let pred = C64::new(hermite_char_poly_closed_form(n, k, t, z), 0.0);
    Ok(IdentityReport::new("hermite-closed-form", pred, est, t, dt, model.inv_temp))
}

/// MC check of the Laguerre closed form (simulated at time `beta t`).
#[allow(clippy::too_many_arguments)]
pub fn laguerre_closed_form_check(
    n: usize,
    nu: f64,
    beta: f64,
    t: f64,
    y: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let model = Model::laguerre(n, nu).with_inv_temp(beta);
    model.validate()?;
    let x0 = State::at_zero(vec![0.0; n]);
    let horizon = beta * t;
    let values = run_paths(n_paths, seed, |rng| {
        extrapolated(dt, horizon, |cfg| {
            let x = final_coords(&model, &x0, cfg, rng, horizon)?;
            Ok(C64::new(x.iter().map(|&v| y - v * v).product(), 0.0))
        })
    })?;
    let est = McEstimate::from_samples(&values, seed)?;
    let pred = C64::new(laguerre_char_poly_closed_form(n, nu, beta, t, y), 0.0);
    Ok(IdentityReport::new("laguerre-closed-form", pred, est, t, dt, model.inv_temp))
}

/// Deterministic prediction of `E e_l` at time `t` (of the squares for
/// Laguerre, of `exp(i x)` for the torus).
pub fn esym_prediction(model: &Model, x0: &[f64], t: f64, l: usize) -> Result<C64> {
    match model.family {
        Family::Torus => {
            let n = model.n as f64;
            let rate = l as f64 * (n - l as f64 + model.inv_temp.recip());
            let w: Vec<C64> = x0.iter().map(|&x| C64::from_polar(1.0, x)).collect();
            Ok(esym(&w, l) * (-rate * t).exp())
        }
        Family::LaguerreB => {
            // the noise acts as a shift of nu by 1/(2 beta)
            let shifted = Model::laguerre(model.n, model.nu + 0.5 * model.inv_temp.recip());
            let x = ode_states(&shifted, x0, &[t])?.pop().expect("one sample").coords;
            let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
            Ok(C64::new(esym(&sq, l), 0.0))
        }
        _ => {
            let x = ode_states(&deterministic(model), x0, &[t])?.pop().expect("one sample").coords;
            Ok(C64::new(esym(&x, l), 0.0))
        }
    }
}

fn esym_value(family: Family, x: &[f64], l: usize) -> C64 {
    match family {
        Family::Torus => {
            let w: Vec<C64> = x.iter().map(|&v| C64::from_polar(1.0, v)).collect();
            esym(&w, l)
        }
        Family::LaguerreB => {
            let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
            C64::new(esym(&sq, l), 0.0)
        }
        _ => C64::new(esym(x, l), 0.0),
    }
}

fn esym_ensemble(model: &Model, x0: &State, t: f64, l: usize, dt: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    let values = run_paths(n_paths, seed, |rng| {
        extrapolated(dt, t, |cfg| Ok(esym_value(model.family, &final_coords(model, x0, cfg, rng, t)?, l)))
    })?;
    McEstimate::from_samples(&values, seed)
}

/// MC estimates of `E e_l` over a grid of inverse temperatures, each
/// compared with its deterministic prediction.
#[allow(clippy::too_many_arguments)]
pub fn symmetric_fn_invariance(
    model: &Model,
    x0: &State,
    t: f64,
    l: usize,
    inv_temps: &[InvTemp<f64>],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<IdentityReport>> {
    if l > model.n {
        return Err(LabError::InvalidParams(format!("l = {l} exceeds N = {}", model.n)));
    }
    let tag = match model.family {
        Family::HermiteA => "hermite-k-independence",
        Family::LaguerreB => "laguerre-esym",
        Family::Torus => "torus-esym-decay",
        Family::JacobiCompact | Family::JacobiNoncompact => "jacobi-k-independence",
    };
    inv_temps
        .iter()
        .map(|&k| {
            let m = Model { inv_temp: k, ..model.clone() };
            m.validate()?;
            let est = esym_ensemble(&m, x0, t, l, dt, n_paths, seed)?;
            Ok(IdentityReport::new(tag, esym_prediction(&m, &x0.coords, t, l)?, est, t, dt, k))
        })
        .collect()
}

/// Two-sample check that Laguerre `E e_l` of the squares depends on
/// `(nu, beta)` only through `nu + 1/(2 beta)`: compares `(nu, beta)` with
/// `(nu + 1/(2 beta) - 1/(2 beta2), beta2)`.
#[allow(clippy::too_many_arguments)]
pub fn laguerre_nu_shift(
    model: &Model,
    beta2: f64,
    x0: &State,
    t: f64,
    l: usize,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<IdentityReport> {
    if model.family != Family::LaguerreB {
        return Err(LabError::InvalidParams("the nu shift applies to the Laguerre family".into()));
    }
    let beta = match model.inv_temp {
        InvTemp::Finite(b) => b,
        InvTemp::Infinite => return Err(LabError::InvalidParams("nu shift needs a finite beta".into())),
    };
    let other = Model::laguerre(model.n, model.nu + 0.5 / beta - 0.5 / beta2).with_inv_temp(beta2);
    model.validate()?;
    other.validate()?;
    let a = esym_ensemble(model, x0, t, l, dt, n_paths, seed)?;
    let b = esym_ensemble(&other, x0, t, l, dt, n_paths, seed.wrapping_add(1))?;
    let z = b.z_against(a.mean, a.stderr);
    Ok(IdentityReport {
        tag: "laguerre-nu-shift".into(),
        predicted: a.mean,
        estimate: b,
        reference: Some(a),
        z_score: z,
        pass: z <= Z_THRESHOLD,
        threshold: Z_THRESHOLD,
        t,
        dt,
        inv_temp: Some(beta2),
        reruns: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Identity {
    HermiteBrownian,
    HermiteClosedForm,
    LaguerreBessel,
    LaguerreClosedForm,
    JacobiCompact,
    JacobiNoncompact,
    TorusExp,
    HermiteKIndependence,
    LaguerreNuShift,
    TorusEsymDecay,
}

impl Identity {
    pub const ALL: [Identity; 10] = [
        Identity::HermiteBrownian,
        Identity::HermiteClosedForm,
        Identity::LaguerreBessel,
        Identity::LaguerreClosedForm,
        Identity::JacobiCompact,
        Identity::JacobiNoncompact,
        Identity::TorusExp,
        Identity::HermiteKIndependence,
        Identity::LaguerreNuShift,
        Identity::TorusEsymDecay,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Identity::HermiteBrownian => "hermite-brownian",
            Identity::HermiteClosedForm => "hermite-closed-form",
            Identity::LaguerreBessel => "laguerre-bessel",
            Identity::LaguerreClosedForm => "laguerre-closed-form",
            Identity::JacobiCompact => "jacobi-compact",
            Identity::JacobiNoncompact => "jacobi-noncompact",
            Identity::TorusExp => "torus-exp",
            Identity::HermiteKIndependence => "hermite-k-independence",
            Identity::LaguerreNuShift => "laguerre-nu-shift",
            Identity::TorusEsymDecay => "torus-esym-decay",
        }
    }

    pub fn parse(s: &str) -> Option<Identity> {
        Identity::ALL.into_iter().find(|i| i.tag() == s)
    }

    pub fn family(self) -> Family {
        match self {
            Identity::HermiteBrownian | Identity::HermiteClosedForm | Identity::HermiteKIndependence => Family::HermiteA,
            Identity::LaguerreBessel | Identity::LaguerreClosedForm | Identity::LaguerreNuShift => Family::LaguerreB,
            Identity::JacobiCompact => Family::JacobiCompact,
            Identity::JacobiNoncompact => Family::JacobiNoncompact,
            Identity::TorusExp | Identity::TorusEsymDecay => Family::Torus,
        }
    }

    /// Parameter set used by default (and by the acceptance suite).
    pub fn default_params(self) -> IdentityParams {
        let base = IdentityParams {
            n: 2,
            nu: 1.0,
            p: 3.0,
            q: 2.5,
            k: 2.0,
            k2: 4.0,
            x0: None,
            y0: 0.0,
            t: 0.5,
            dt: 1e-3,
            l: 2,
        };
        match self {
            Identity::HermiteBrownian => IdentityParams { k: 4.0, x0: Some(vec![-1.0, 1.0]), t: 0.25, ..base },
            Identity::HermiteClosedForm => base,
            Identity::LaguerreBessel => IdentityParams { nu: 1.5, x0: Some(vec![0.5, 1.2]), y0: 0.8, ..base },
            Identity::LaguerreClosedForm => IdentityParams { y0: 1.0, t: 0.2, ..base },
            Identity::JacobiCompact => {
                IdentityParams { x0: Some(vec![-0.3, 0.4]), y0: 0.1, t: 0.2, dt: 1e-4, ..base }
            }
            Identity::JacobiNoncompact => {
                IdentityParams { x0: Some(vec![1.3, 1.8]), y0: 1.5, t: 0.1, dt: 1e-4, ..base }
            }
            Identity::TorusExp => IdentityParams { x0: Some(vec![0.3, 2.0]), y0: 0.2, ..base },
            Identity::HermiteKIndependence => IdentityParams { x0: Some(vec![-1.0, 1.0]), ..base },
            Identity::LaguerreNuShift => IdentityParams { k: 1.0, x0: Some(vec![0.5, 1.2]), ..base },
            Identity::TorusEsymDecay => {
                IdentityParams { k: 1.0, x0: Some(vec![0.0, std::f64::consts::FRAC_PI_2]), l: 1, ..base }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub n: usize,
    pub nu: f64,
    pub p: f64,
    pub q: f64,
    /// Inverse temperature (`beta` for Laguerre, `kappa` for Jacobi).
    pub k: f64,
    /// Second inverse temperature of the nu-shift comparison.
    pub k2: f64,
    /// Start; `None` is the origin for the closed forms and an error otherwise.
    pub x0: Option<Vec<f64>>,
    /// Companion start (`z` or `y` for the closed forms).
    pub y0: f64,
    pub t: f64,
    pub dt: f64,
    pub l: usize,
}

impl IdentityParams {
    fn model(&self, family: Family) -> Model {
        let m = match family {
            Family::HermiteA => Model::hermite(self.n),
            Family::LaguerreB => Model::laguerre(self.n, self.nu),
            Family::JacobiCompact => Model::jacobi(self.n, self.p, self.q),
            Family::JacobiNoncompact => Model::jacobi_noncompact(self.n, self.p, self.q),
            Family::Torus => Model::torus(self.n),
        };
        m.with_inv_temp(self.k)
    }

    fn start(&self) -> Result<State> {
        let x0 = self.x0.clone().ok_or_else(|| LabError::InvalidParams("this identity needs x0".into()))?;
        if x0.len() != self.n {
            return Err(LabError::InvalidParams(format!("x0 has {} entries, N = {}", x0.len(), self.n)));
        }
        Ok(State::at_zero(x0))
    }
}

/// Runs one identity with the rerun policy.
pub fn run_identity(id: Identity, params: &IdentityParams, n_paths: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    let pr = params;
    let model = pr.model(id.family());
    with_rerun(n_paths, |paths| match id {
        Identity::HermiteClosedForm => {
            Ok(vec![hermite_closed_form_check(pr.n, pr.k, pr.t, pr.y0, pr.dt, paths, seed)?])
        }
        Identity::LaguerreClosedForm => {
            Ok(vec![laguerre_closed_form_check(pr.n, pr.nu, pr.k, pr.t, pr.y0, pr.dt, paths, seed)?])
        }
        Identity::HermiteKIndependence => {
            let grid = [InvTemp::Finite(1.0), InvTemp::Finite(4.0), InvTemp::Finite(16.0), InvTemp::Infinite];
            symmetric_fn_invariance(&model, &pr.start()?, pr.t, pr.l, &grid, pr.dt, paths, seed)
        }
        Identity::TorusEsymDecay => {
            symmetric_fn_invariance(&model, &pr.start()?, pr.t, pr.l, &[model.inv_temp], pr.dt, paths, seed)
        }
        Identity::LaguerreNuShift => Ok(vec![laguerre_nu_shift(&model, pr.k2, &pr.start()?, pr.t, pr.l, pr.dt, paths, seed)?]),
        _ => {
            let comp = companion_for(&model);
            Ok(vec![char_poly_expectation(&model, &pr.start()?, comp, pr.y0, pr.t, pr.dt, paths, seed)?])
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleStats {
    pub increment_means: Vec<C64>,
    pub z_scores: Vec<f64>,
    pub max_z: f64,
}

/// `paths[i][j]` is the value of path `i` at `times[j]`. For each adjacent
/// pair of times, the z-score of the mean increment (componentwise).
pub fn martingale_check(times: &[f64], paths: &[Vec<C64>]) -> Result<MartingaleStats> {
    if times.len() < 3 {
        return Err(LabError::InvalidParams("need at least 3 sample times".into()));
    }
    if paths.iter().any(|p| p.len() != times.len()) {
        return Err(LabError::InvalidParams("every path needs one value per time".into()));
    }
    let mut means = Vec::new();
    let mut zs = Vec::new();
    for j in 1..times.len() {
        let inc: Vec<C64> = paths.iter().map(|p| p[j] - p[j - 1]).collect();
        let est = McEstimate::from_samples(&inc, 0)?;
        zs.push(est.z_against(C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        means.push(est.mean);
    }
    let max_z = zs.iter().copied().fold(0.0, f64::max);
    Ok(MartingaleStats { increment_means: means, z_scores: zs, max_z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MartingaleKind {
    /// Heat polynomial `H_n(t, B_t)` of a Brownian motion from `y0`.
    HermiteHeat { n: usize, y0: f64 },
    /// `prod (Y^2 - 2 t zeta_i)` of a Bessel process of index `nu - 1`.
    BesselHeat { n: usize, nu: f64, y0: f64 },
    /// `exp(N (p+q-N+1) t) prod (Y_t - x_l(t))` along the compact Jacobi flow.
    JacobiFeynmanKac { n: usize, p: f64, q: f64, x0: Vec<f64>, y0: f64 },
    /// `prod (exp(N t) exp(i sqrt2 B_t) - w_j(t))` along the torus flow.
    Torus { n: usize, x0: Vec<f64>, y0: f64 },
}

impl MartingaleKind {
    pub const TAGS: [&'static str; 4] = ["hermite-heat", "bessel-heat", "jacobi-feynman-kac", "torus"];

    /// Default experiment for a tag: the kind, the sample times and `dt`.
    pub fn default_setup(tag: &str) -> Option<(MartingaleKind, Vec<f64>, f64)> {
        let quarter = vec![0.0, 0.25, 0.5];
        match tag {
            "hermite-heat" => Some((MartingaleKind::HermiteHeat { n: 3, y0: 0.3 }, vec![0.0, 0.25, 0.5, 0.75, 1.0], 1e-2)),
            "bessel-heat" => Some((MartingaleKind::BesselHeat { n: 2, nu: 1.5, y0: 0.8 }, quarter, 1e-3)),
            "jacobi-feynman-kac" => Some((
                MartingaleKind::JacobiFeynmanKac { n: 2, p: 3.0, q: 2.5, x0: vec![-0.3, 0.4], y0: 0.1 },
                vec![0.0, 0.1, 0.2],
                1e-4,
            )),
            "torus" => Some((MartingaleKind::Torus { n: 3, x0: vec![0.3, 2.0, 4.0], y0: 0.2 }, quarter, 1e-2)),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            MartingaleKind::HermiteHeat { .. } => "hermite-heat",
            MartingaleKind::BesselHeat { .. } => "bessel-heat",
            MartingaleKind::JacobiFeynmanKac { .. } => "jacobi-feynman-kac",
            MartingaleKind::Torus { .. } => "torus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub tag: String,
    pub times: Vec<f64>,
    pub stats: MartingaleStats,
    pub n_paths: usize,
    pub root_seed: u64,
    pub dt: f64,
    pub pass: bool,
}

/// Simulates the ensemble for `kind` at `times` (multiples of `dt`) and
/// tests the martingale property. Discretised companions are extrapolated
/// from `dt` and `dt/2`.
pub fn martingale_experiment(kind: &MartingaleKind, times: &[f64], dt: f64, n_paths: usize, seed: u64) -> Result<MartingaleReport> {
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let paths: Vec<Vec<C64>> = match kind {
        MartingaleKind::HermiteHeat { n, y0 } => run_paths(n_paths, seed, |rng| {
            let ys = simulate_companion(CompanionKind::Brownian, *y0, &SdeConfig::new(dt, t_end), rng, times)?;
            ys.iter()
                .map(|s| Ok(C64::new(heat_polynomial(HeatPolyKind::Hermite, *n, s.time, s.value.re)?, 0.0)))
                .collect()
        })?,
        MartingaleKind::BesselHeat { n, nu, y0 } => run_paths(n_paths, seed, |rng| {
            extrapolated_vec(dt, t_end, |cfg| {
                let ys = simulate_companion(CompanionKind::Bessel1D(nu - 1.0), *y0, cfg, rng, times)?;
                ys.iter()
                    .map(|s| Ok(C64::new(heat_polynomial(HeatPolyKind::Bessel { nu: *nu }, *n, s.time, s.value.re)?, 0.0)))
                    .collect()
            })
        })?,
        MartingaleKind::JacobiFeynmanKac { n, p, q, x0, y0 } => {
            let model = Model::jacobi(*n, *p, *q);
            let flow = ode_states(&model, x0, times)?;
            let rate = jacobi_rate(&model);
            let (pc, qc) = jacobi_companion_params(&model);
            run_paths(n_paths, seed, |rng| {
                extrapolated_vec(dt, t_end, |cfg| {
                    let ys = simulate_companion(CompanionKind::JacobiCompact1D(pc, qc), *y0, cfg, rng, times)?;
                    Ok(ys
                        .iter()
                        .zip(&flow)
                        .map(|(s, x)| {
                            let v: f64 = x.coords.iter().map(|&xl| s.value.re - xl).product();
                            C64::new((rate * s.time).exp() * v, 0.0)
                        })
                        .collect())
                })
            })?
        }
        MartingaleKind::Torus { n, x0, y0 } => {
            let flow = ode_states(&Model::torus(*n), x0, times)?;
            run_paths(n_paths, seed, |rng| {
                let ys = simulate_companion(CompanionKind::TorusExp(*n), *y0, &SdeConfig::new(dt, t_end), rng, times)?;
                Ok(ys
                    .iter()
                    .zip(&flow)
                    .map(|(s, x)| x.coords.iter().map(|&a| s.value - C64::from_polar(1.0, a)).product())
                    .collect())
            })?
        }
    };
    let stats = martingale_check(times, &paths)?;
    Ok(MartingaleReport {
        tag: kind.tag().into(),
        times: times.to_vec(),
        pass: stats.max_z <= Z_THRESHOLD,
        stats,
        n_paths,
        root_seed: seed,
        dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayLaw {
    /// `e^{-lambda t}` for the confined Hermite/Laguerre flow (`model.lambda`
    /// must be the stationary value).
    Stationary,
    /// Free Hermite flow, equal sums and norms: the bound with the
    /// `sqrt(N(N-1) t / R^2 + 1)` prefactor.
    HermitePrefactor,
    /// Distance nonincreasing along the sample grid.
    Contraction,
    /// Compact Jacobi in angles `tau = arccos x`, rate
    /// `(p + q + 2 min(p, q) + 2 - 2N) / 4`.
    JacobiAngles,
    /// Torus with equal sums, rate `N/2`.
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub law: DecayLaw,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub bounds: Vec<f64>,
    pub predicted_rate: Option<f64>,
    /// Least-squares slope of `-ln distance` over the final third.
    pub fitted_rate: Option<f64>,
    /// `max distance / bound` (0 where both vanish).
    pub max_ratio: f64,
    pub holds: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn fit_rate(times: &[f64], d: &[f64]) -> Option<f64> {
    let start = times.len() - times.len() / 3;
    let pts: Vec<(f64, f64)> = (start..times.len()).filter(|&i| d[i] > 0.0).map(|i| (times[i], d[i].ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Solves the flow from both starts on `t_grid` and compares their distance
/// with the bound of `law`.
pub fn decay_rate_check(model: &Model, x0: &[f64], x0b: &[f64], t_grid: &[f64], law: DecayLaw) -> Result<DecayReport> {
    let n = model.n as f64;
    let mut times = t_grid.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.first() != Some(&0.0) {
        times.insert(0, 0.0);
    }
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()));
    let predicted_rate = match law {
        DecayLaw::Stationary => {
            let default = Model { lambda: None, ..model.clone() }.stationary_lambda()?;
            match model.lambda {
                Some(l) if same(l, default) => Some(l),
                _ => return Err(LabError::InvalidParams("stationary law needs the stationary lambda".into())),
            }
        }
        DecayLaw::HermitePrefactor => {
            if model.family != Family::HermiteA || model.lambda.is_some() {
                return Err(LabError::InvalidParams("prefactor bound is for the free Hermite flow".into()));
            }
            if !same(sum(x0), sum(x0b)) || !same(norm_sq(x0), norm_sq(x0b)) || norm_sq(x0) == 0.0 {
                return Err(LabError::InvalidParams("starts need equal sums and equal nonzero norms".into()));
            }
            None
        }
        DecayLaw::Contraction => None,
        DecayLaw::JacobiAngles => {
            if model.family != Family::JacobiCompact {
                return Err(LabError::InvalidParams("angle law is for compact Jacobi".into()));
            }
            Some((model.p + model.q + 2.0 * model.p.min(model.q) + 2.0 - 2.0 * n) / 4.0)
        }
        DecayLaw::Torus => {
            if model.family != Family::Torus || !same(sum(x0), sum(x0b)) {
                return Err(LabError::InvalidParams("torus law needs torus starts with equal sums".into()));
            }
            Some(n / 2.0)
        }
    };
    let m = deterministic(model);
    let a = ode_states(&m, x0, &times)?;
    let b = ode_states(&m, x0b, &times)?;
    let coords = |s: &State| -> Vec<f64> {
        if law == DecayLaw::JacobiAngles {
            s.coords.iter().map(|x| x.clamp(-1.0, 1.0).acos()).collect()
        } else {
            s.coords.clone()
        }
    };
    let distances: Vec<f64> = a.iter().zip(&b).map(|(u, v)| dist(&coords(u), &coords(v))).collect();
    let d0 = distances[0];
    let r2 = norm_sq(x0);
    let bounds: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| match law {
            DecayLaw::HermitePrefactor => {
                let a = n * (n - 1.0);
                d0 * (a * t / r2 + 1.0).sqrt() * (-0.5 * ((2.0 * a * t + r2 * r2).sqrt() - r2)).exp()
            }
            DecayLaw::Contraction => distances[i.saturating_sub(1)],
            _ => d0 * (-predicted_rate.expect("rate") * t).exp(),
        })
        .collect();
    let mut max_ratio: f64 = 0.0;
    let mut holds = true;
    for (d, b) in distances.iter().zip(&bounds) {
        if *d > b * (1.0 + BOUND_SLACK) {
            holds = false;
        }
        if *d > 0.0 {
            max_ratio = max_ratio.max(if *b > 0.0 { d / b } else { f64::INFINITY });
        }
    }
    Ok(DecayReport { law, fitted_rate: fit_rate(&times, &distances), times, distances, bounds, predicted_rate, max_ratio, holds })
}

/// Sorted uniform interior point of the family's domain.
pub fn random_interior(model: &Model, rng: &mut impl Rng) -> Vec<f64> {
    let (lo, hi) = match model.family {
        Family::HermiteA => (-3.0, 3.0),
        Family::LaguerreB => (0.05, 3.0),
        Family::JacobiCompact => (-0.95, 0.95),
        Family::JacobiNoncompact => (1.05, 3.0),
        Family::Torus => (0.0, std::f64::consts::TAU - 0.05),
    };
    loop {
        let mut x: Vec<f64> = (0..model.n).map(|_| rng.random_range(lo..hi)).collect();
        x.sort_by(f64::total_cmp);
        if x.windows(2).all(|w| w[1] - w[0] > 1e-3) {
            return x;
        }
    }
}

/// A second start for `law`: random, then adjusted to share the sum (and for
/// the prefactor law the norm) of `x0`.
pub fn paired_start(model: &Model, x0: &[f64], law: DecayLaw, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = random_interior(model, &mut rng);
    let n = x0.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    match law {
        DecayLaw::Torus | DecayLaw::HermitePrefactor => {
            let shift = mean(x0) - mean(&y);
            y.iter_mut().for_each(|v| *v += shift);
        }
        _ => {}
    }
    if law == DecayLaw::HermitePrefactor {
        let c = mean(x0);
        let spread = |v: &[f64]| v.iter().map(|x| (x - c) * (x - c)).sum::<f64>().sqrt();
        let s = spread(x0) / spread(&y);
        y.iter_mut().for_each(|v| *v = c + (*v - c) * s);
    }
    y
}
