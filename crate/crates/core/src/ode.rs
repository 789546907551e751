//! Deterministic flows: adaptive Dormand-Prince 5(4) integration inside the
//! chamber, analytic start-up from boundary points and the exact transforms
//! (self-similar solutions, angular reparametrisation, OU correspondence).

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{self, check_chamber, classify, flow_rhs, Family, ModelSpec, ParticleState};
use crate::orthopoly::{self, Classical};

type Model = ModelSpec<f64>;
type State = ParticleState<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Size of the analytic first step for boundary starts.
    pub desing_step: f64,
    /// Final time (absolute, the start time is `x0.time`).
    pub t_end: f64,
    /// Times at which samples are emitted. `None` records every accepted step.
    pub output_times: Option<Vec<f64>>,
    pub max_steps: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_step: 0.1,
            desing_step: 1e-8,
            t_end: 1.0,
            output_times: None,
            max_steps: 5_000_000,
        }
    }
}

impl SolveConfig {
    pub fn until(t_end: f64) -> Self {
        SolveConfig { t_end, ..Default::default() }
    }

    pub fn with_output_times(mut self, times: Vec<f64>) -> Self {
        self.output_times = Some(times);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.rel_tol, self.abs_tol, self.max_step, self.desing_step];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(LabError::InvalidParams("tolerances and step sizes must be positive".into()));
        }
        if self.rel_tol < 1e-13 {
            return Err(LabError::InvalidParams(format!("rel_tol must be >= 1e-13, got {}", self.rel_tol)));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(LabError::InvalidParams(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Rejections caused by a stage leaving the chamber.
    pub chamber_rejections: usize,
    pub desingularized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: Model,
    pub samples: Vec<State>,
    pub config: SolveConfig,
    pub stats: SolveStats,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }
}

/// Smallest distance to a neighbour or to a wall; `<= 0` means outside.
fn min_gap(model: &Model, x: &[f64]) -> f64 {
    let n = x.len();
    let mut g = f64::INFINITY;
    for w in x.windows(2) {
        g = g.min(w[1] - w[0]);
    }
    match model.family {
        Family::HermiteA => {}
        Family::LaguerreB => g = g.min(x[0]),
        Family::JacobiCompact => g = g.min(x[0] + 1.0).min(1.0 - x[n - 1]),
        Family::JacobiNoncompact => g = g.min(x[0] - 1.0),
        Family::Torus => {
            if n > 1 {
                g = g.min(x[0] + std::f64::consts::TAU - x[n - 1]);
            }
        }
    }
    g
}

fn strictly_inside(model: &Model, x: &[f64]) -> bool {
    if x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if x.len() == 1 && matches!(model.family, Family::HermiteA | Family::Torus) {
        return true;
    }
    let g = min_gap(model, x);
    let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    g > 1e-14 * scale
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Dense {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Dense {
    fn eval(&self, t: f64) -> Vec<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.r;
        (0..r1.len())
            .map(|i| r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i]))))
            .collect()
    }
}

/// Integrates the model's flow (free, or confined when `model.lambda` is set)
/// from `x0` to `config.t_end`.
pub fn solve(model: &Model, x0: &State, config: &SolveConfig) -> Result<Trajectory> {
    model.validate()?;
    config.validate()?;
    check_chamber(model, &x0.coords)?;
    let t0 = x0.time;
    if config.t_end < t0 {
        return Err(LabError::InvalidParams(format!("t_end {} precedes the start time {t0}", config.t_end)));
    }
    let mut outputs: Vec<f64> = match &config.output_times {
        Some(ts) => {
            let slack = 1e-12 * (1.0 + config.t_end.abs());
            if ts.iter().any(|t| !t.is_finite() || *t < t0 - slack || *t > config.t_end + slack) {
                return Err(LabError::InvalidParams("output times must lie in [t0, t_end]".into()));
            }
            let mut v: Vec<f64> = ts.iter().map(|t| t.clamp(t0, config.t_end)).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
        None => Vec::new(),
    };
    let every_step = config.output_times.is_none();
    let mut stats = SolveStats::default();
    let mut samples = Vec::new();
    let mut next_out = 0usize;

    let flag = classify(model, &x0.coords);
    let (mut t, mut y) = if flag.on_boundary && config.t_end > t0 {
        stats.desingularized = true;
        let delta = config.desing_step.min(config.t_end - t0);
        // samples inside the start-up window come from the analytic profile
        while next_out < outputs.len() && outputs[next_out] < t0 + delta {
            let dt = outputs[next_out] - t0;
            let s = if dt > 0.0 { desingularize_start(model, x0, dt)? } else { x0.clone() };
            samples.push(State::new(outputs[next_out], s.coords));
            next_out += 1;
        }
        if every_step {
            samples.push(x0.clone());
        }
        let s = desingularize_start(model, x0, delta)?;
        (s.time, s.coords)
    } else {
        (t0, x0.coords.clone())
    };
    if every_step && samples.is_empty() {
        samples.push(State::new(t, y.clone()));
    }
    while next_out < outputs.len() && outputs[next_out] <= t {
        samples.push(State::new(outputs[next_out], y.clone()));
        next_out += 1;
    }

    let n = y.len();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    flow_rhs(model, &y, &mut k[0]);
    let mut h = initial_step(model, &y, &k[0], config);
    let mut stage = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let t_end = config.t_end;
    let interior_rhs = |x: &[f64]| strictly_inside(model, x);

    while t < t_end {
        if stats.accepted + stats.rejected >= config.max_steps {
            return Err(LabError::StepSizeUnderflow { time: t, state: y });
        }
        let cap = step_cap(model, &y, &k[0]).min(config.max_step);
        h = h.min(cap);
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h < 1e-14 * (1.0 + t.abs()) && !last {
            return Err(LabError::StepSizeUnderflow { time: t, state: y });
        }
        let mut ok = true;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            if !interior_rhs(&stage) {
                ok = false;
                break;
            }
            flow_rhs(model, &stage, &mut k[s]);
            if s == 6 {
                ynew.copy_from_slice(&stage);
            }
        }
        if !ok || k[6].iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            stats.chamber_rejections += 1;
            h *= 0.25;
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(LabError::StepSizeUnderflow { time: t, state: y });
            }
            continue;
        }
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = config.abs_tol + config.rel_tol * y[i].abs().max(ynew[i].abs());
            err += (h * e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if err <= 1.0 {
            stats.accepted += 1;
            let tn = if last { t_end } else { t + h };
            if next_out < outputs.len() && outputs[next_out] <= tn {
                let mut r5 = vec![0.0; n];
                for (i, r) in r5.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        acc += D[j] * kj[i];
                    }
                    *r = h * acc;
                }
                let ydiff: Vec<f64> = (0..n).map(|i| ynew[i] - y[i]).collect();
                let bspl: Vec<f64> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
                let r4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
                let dense = Dense { t0: t, h, r: [y.clone(), ydiff, bspl, r4, r5] };
                while next_out < outputs.len() && outputs[next_out] <= tn {
                    let to = outputs[next_out];
                    let v = if to >= tn { ynew.clone() } else { dense.eval(to) };
                    samples.push(State::new(to, v));
                    next_out += 1;
                }
            }
            t = tn;
            y.copy_from_slice(&ynew);
            let k6 = k[6].clone();
            k[0] = k6;
            if every_step {
                samples.push(State::new(t, y.clone()));
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    if !every_step {
        while next_out < outputs.len() {
            samples.push(State::new(outputs[next_out], y.clone()));
            next_out += 1;
        }
        outputs.clear();
    }
    Ok(Trajectory { model: model.clone(), samples, config: config.clone(), stats })
}

fn step_cap(model: &Model, y: &[f64], f: &[f64]) -> f64 {
    let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if fmax == 0.0 || y.len() == 1 && matches!(model.family, Family::HermiteA | Family::Torus) {
        return f64::INFINITY;
    }
    0.25 * min_gap(model, y) / fmax
}

fn initial_step(model: &Model, y: &[f64], f: &[f64], config: &SolveConfig) -> f64 {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = if fmax > 0.0 { 1e-3 * scale / fmax } else { 1e-2 };
    h.min(config.max_step).min(step_cap(model, y, f)).max(1e-12)
}

/// Local diffusion-free coefficient of the pair interaction near `c`, i.e.
/// the pair term behaves like `D / (x_i - x_j)`.
fn local_pair_strength(model: &Model, c: f64) -> f64 {
    match model.family {
        Family::HermiteA | Family::LaguerreB => 1.0,
        Family::JacobiCompact => 2.0 * (1.0 - c * c),
        Family::JacobiNoncompact => 2.0 * (c * c - 1.0),
        Family::Torus => 2.0,
    }
}

/// Drift with the pair terms inside each cluster removed; zero for members
/// of wall clusters (their profile carries the constant part).
fn regular_drift(model: &Model, x: &[f64], cluster_of: &[Option<usize>], walls: &[bool]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if let Some(ci) = cluster_of[i] {
            if walls[ci] {
                continue;
            }
        }
        let mut s = match model.family {
            Family::HermiteA | Family::Torus => 0.0,
            Family::LaguerreB => model.nu / x[i],
            Family::JacobiCompact => (model.p - model.q) - (model.p + model.q) * x[i],
            Family::JacobiNoncompact => (model.q - model.p) + (model.q + model.p) * x[i],
        };
        for j in 0..n {
            if j == i {
                continue;
            }
            let same = cluster_of[i].is_some() && cluster_of[i] == cluster_of[j];
            s += match model.family {
                Family::HermiteA if !same => 1.0 / (x[i] - x[j]),
                Family::LaguerreB if same => 1.0 / (x[i] + x[j]),
                Family::LaguerreB => 1.0 / (x[i] - x[j]) + 1.0 / (x[i] + x[j]),
                Family::JacobiCompact if !same => 2.0 * (1.0 - x[i] * x[j]) / (x[i] - x[j]),
                Family::JacobiNoncompact if !same => 2.0 * (x[i] * x[j] - 1.0) / (x[i] - x[j]),
                Family::Torus if !same => 1.0 / ((x[i] - x[j]) / 2.0).tan(),
                _ => 0.0,
            };
        }
        out[i] = s;
    }
    out
}

/// State at time `x0.time + delta` built from the local self-similar profile
/// of every boundary cluster. Interior starts are returned unchanged.
pub fn desingularize_start(model: &Model, x0: &State, delta: f64) -> Result<State> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(LabError::InvalidParams(format!("delta must be > 0, got {delta}")));
    }
    model.validate()?;
    check_chamber(model, &x0.coords)?;
    let flag = classify(model, &x0.coords);
    if !flag.on_boundary {
        return Ok(x0.clone());
    }
    let n = x0.coords.len();
    let tau = std::f64::consts::TAU;
    let mut cluster_of = vec![None; n];
    let mut walls = Vec::new();
    for (ci, cl) in flag.degenerate_clusters.iter().enumerate() {
        for &i in &cl.indices {
            cluster_of[i] = Some(ci);
        }
        walls.push(cl.wall.is_some());
    }
    // cluster members sit exactly at the cluster location for the frozen drift
    let mut base = x0.coords.clone();
    let mut offsets = vec![0.0; n];
    let nf = model.n as f64;
    for cl in &flag.degenerate_clusters {
        let m = cl.indices.len();
        // unwrap torus clusters that straddle x_N ~ x_1 + 2 pi
        let unwrapped: Vec<f64> = cl
            .indices
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let after_wrap = cl.indices[..pos].iter().any(|&j| j > i);
                if model.family == Family::Torus && after_wrap {
                    x0.coords[i] + tau
                } else {
                    x0.coords[i]
                }
            })
            .collect();
        let c = match cl.wall {
            Some(w) => w,
            None => unwrapped.iter().sum::<f64>() / m as f64,
        };
        let prof: Vec<f64> = match (model.family, cl.wall) {
            (Family::LaguerreB, Some(_)) => {
                let z = orthopoly::zeros(&Classical::Laguerre { alpha: model.nu - 1.0 }, m)?.zeros;
                z.iter().map(|v| (2.0 * delta * v).sqrt()).collect()
            }
            (Family::JacobiCompact, Some(w)) if w > 0.0 => {
                let z = orthopoly::zeros(&Classical::Laguerre { alpha: model.q - nf }, m)?.zeros;
                let mut v: Vec<f64> = z.iter().map(|u| -2.0 * delta * u).collect();
                v.reverse();
                v
            }
            (Family::JacobiCompact, Some(_)) => {
                let z = orthopoly::zeros(&Classical::Laguerre { alpha: model.p - nf }, m)?.zeros;
                z.iter().map(|u| 2.0 * delta * u).collect()
            }
            (Family::JacobiNoncompact, Some(_)) => {
                let z = orthopoly::zeros(&Classical::Laguerre { alpha: model.q - nf }, m)?.zeros;
                z.iter().map(|u| 2.0 * delta * u).collect()
            }
            _ => {
                let d = local_pair_strength(model, c);
                let z = orthopoly::zeros(&Classical::<f64>::Hermite, m)?.zeros;
                z.iter().map(|v| (2.0 * d * delta).sqrt() * v).collect()
            }
        };
        for (pos, &i) in cl.indices.iter().enumerate() {
            let shift = unwrapped[pos] - x0.coords[i];
            base[i] = c - shift;
            offsets[i] = prof[pos];
        }
    }
    let reg = regular_drift(model, &base, &cluster_of, &walls);
    let coords: Vec<f64> = (0..n).map(|i| base[i] + offsets[i] + delta * reg[i]).collect();
    if !strictly_inside(model, &coords) {
        return Err(LabError::DegenerateState(format!(
            "start-up step {delta} too large for the boundary configuration"
        )));
    }
    Ok(State::new(x0.time + delta, coords))
}

/// Exact special solution: `sqrt(2t) z` (Hermite), `sqrt(2t) sqrt(zeta)`
/// (Laguerre), the Jacobi zero vector, or the equally spaced torus
/// configuration with the given mean (default 0).
pub fn self_similar(model: &Model, t: f64, torus_mean: Option<f64>) -> Result<State> {
    model.validate()?;
    let n = model.n;
    let coords = match model.family {
        Family::HermiteA => {
            let z = orthopoly::zeros(&Classical::<f64>::Hermite, n)?.zeros;
            z.iter().map(|v| (2.0 * t).sqrt() * v).collect()
        }
        Family::LaguerreB => {
            let z = orthopoly::zeros(&Classical::Laguerre { alpha: model.nu - 1.0 }, n)?.zeros;
            z.iter().map(|v| (2.0 * t * v).sqrt()).collect()
        }
        Family::JacobiCompact => orthopoly::zeros(&Classical::for_model(model)?, n)?.zeros,
        Family::JacobiNoncompact => {
            return Err(LabError::Unsupported("the noncompact Jacobi flow has no stationary point".into()))
        }
        Family::Torus => {
            let mean = torus_mean.unwrap_or(0.0);
            let step = std::f64::consts::TAU / n as f64;
            (0..n).map(|j| mean + (j as f64 - (n as f64 - 1.0) / 2.0) * step).collect()
        }
    };
    Ok(State::new(t, coords))
}

/// Confined Hermite flow at `t` from `x0`, and the same state obtained from
/// the free flow via `x((1 - e^{-2 lambda t}) / (2 lambda), e^{-lambda t} x0)`.
pub fn ou_transform_check(model: &Model, lambda: f64, x0: &State, t: f64) -> Result<(State, State)> {
    if model.family != Family::HermiteA {
        return Err(LabError::InvalidParams("the OU correspondence is for the Hermite family".into()));
    }
    if !(lambda > 0.0) {
        return Err(LabError::InvalidParams(format!("lambda must be > 0, got {lambda}")));
    }
    let confined = model.clone().with_lambda(lambda);
    let start = State::at_zero(x0.coords.clone());
    let a = solve(&confined, &start, &SolveConfig::until(t))?.last().clone();
    let s = (1.0 - (-2.0 * lambda * t).exp()) / (2.0 * lambda);
    let shrink = (-lambda * t).exp();
    let free = ModelSpec { lambda: None, ..model.clone() };
    let y0 = State::at_zero(x0.coords.iter().map(|v| v * shrink).collect());
    let b = solve(&free, &y0, &SolveConfig::until(s))?.last().clone();
    Ok((a, State::new(t, b.coords)))
}

/// Growth rate `a` of the squared norm, `|x(T)|^2 = |x(0)|^2 + a T`.
pub fn norm_growth_rate(model: &Model) -> Result<f64> {
    let n = model.n as f64;
    match model.family {
        Family::HermiteA => Ok(n * (n - 1.0)),
        Family::LaguerreB => Ok(2.0 * n * (n + model.nu - 1.0)),
        f => Err(LabError::InvalidParams(format!("no norm law for the {} family", f.name()))),
    }
}

/// Flow time `T(t) = R^2 (e^{a t} - 1) / a` at which the angular path is read.
pub fn angular_clock(model: &Model, r_sq: f64, t: f64) -> Result<f64> {
    let a = norm_growth_rate(model)?;
    Ok(if a == 0.0 { r_sq * t } else { r_sq * (a * t).exp_m1() / a })
}

/// Angular path `psi(t) = x(T(t)) / |x(T(t))|` of a free Hermite/Laguerre
/// trajectory; `psi` solves the stationary flow with the default lambda.
/// Sample times are mapped back through the inverse clock.
pub fn angular_transform(model: &Model, trajectory: &Trajectory) -> Result<Vec<State>> {
    let a = norm_growth_rate(model)?;
    let first = trajectory
        .samples
        .first()
        .ok_or_else(|| LabError::InvalidParams("empty trajectory".into()))?;
    let r_sq = first.norm_sq();
    if !(r_sq > 0.0) {
        return Err(LabError::InvalidParams("angular transform needs |x(0)| > 0".into()));
    }
    let t0 = first.time;
    Ok(trajectory
        .samples
        .iter()
        .map(|s| {
            let big_t = s.time - t0;
            let t = if a == 0.0 { big_t / r_sq } else { (a * big_t / r_sq).ln_1p() / a };
            let norm = s.norm_sq().sqrt();
            State::new(t, s.coords.iter().map(|v| v / norm).collect())
        })
        .collect())
}

/// Drift of the flow as used by the solver (free or confined).
pub fn flow_vector(model: &Model, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    model::flow_rhs(model, x, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(t: f64) -> SolveConfig {
        SolveConfig::until(t)
    }

    #[test]
    fn hermite_gap_law() {
        let tr = solve(&Model::hermite(2), &State::at_zero(vec![-1.0, 1.0]), &cfg(1.0)).unwrap();
        let x = &tr.last().coords;
        let r = 2f64.sqrt();
        assert!((x[0] + r).abs() < 1e-8 && (x[1] - r).abs() < 1e-8, "{x:?}");
    }

    #[test]
    fn hermite_from_origin() {
        let tr = solve(&Model::hermite(2), &State::at_zero(vec![0.0, 0.0]), &cfg(1.0)).unwrap();
        let x = &tr.last().coords;
        assert!((x[0] + 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
        assert!(tr.stats.desingularized);
    }

    #[test]
    fn laguerre_from_wall() {
        let tr = solve(&Model::laguerre(1, 1.0), &State::at_zero(vec![0.0]), &cfg(2.0)).unwrap();
        assert!((tr.last().coords[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn jacobi_relaxes_to_zero_of_p1() {
        let tr = solve(&Model::jacobi(1, 3.0, 2.0), &State::at_zero(vec![1.0]), &cfg(10.0)).unwrap();
        assert!((tr.last().coords[0] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn desingularize_examples() {
        let d = 1e-8;
        let s = desingularize_start(&Model::hermite(2), &State::at_zero(vec![3.0, 3.0]), d).unwrap();
        assert!((s.coords[0] - (3.0 - d.sqrt())).abs() < 1e-15 && (s.coords[1] - (3.0 + d.sqrt())).abs() < 1e-15);
        let s = desingularize_start(&Model::laguerre(1, 1.0), &State::at_zero(vec![0.0]), d).unwrap();
        assert!((s.coords[0] - (2.0 * d).sqrt()).abs() < 1e-18);
        let x0 = State::at_zero(vec![-0.5, 0.7]);
        assert_eq!(desingularize_start(&Model::hermite(2), &x0, d).unwrap(), x0);
        let s = desingularize_start(&Model::jacobi(1, 3.0, 2.0), &State::at_zero(vec![1.0]), d).unwrap();
        assert!((s.coords[0] - (1.0 - 4.0 * d)).abs() < 1e-20);
        assert!(desingularize_start(&Model::hermite(2), &x0, 0.0).is_err());
    }

    #[test]
    fn self_similar_examples() {
        let s = self_similar(&Model::hermite(2), 1.0, None).unwrap();
        assert!((s.coords[0] + 1.0).abs() < 1e-15 && (s.coords[1] - 1.0).abs() < 1e-15);
        let s = self_similar(&Model::laguerre(1, 1.0), 0.5, None).unwrap();
        assert!((s.coords[0] - 1.0).abs() < 1e-15);
        let pi = std::f64::consts::PI;
        let s = self_similar(&Model::torus(2), 0.0, Some(pi / 4.0)).unwrap();
        assert!((s.coords[0] + pi / 4.0).abs() < 1e-15 && (s.coords[1] - 3.0 * pi / 4.0).abs() < 1e-15);
    }

    #[test]
    fn ou_examples() {
        let (a, b) = ou_transform_check(&Model::hermite(1), 0.7, &State::at_zero(vec![2.0]), 1.3).unwrap();
        let want = 2.0 * (-0.7f64 * 1.3).exp();
        assert!((a.coords[0] - want).abs() < 1e-10 && (b.coords[0] - want).abs() < 1e-12);
        let (a, b) = ou_transform_check(&Model::hermite(2), 1.0, &State::at_zero(vec![-1.0, 1.0]), 1.0).unwrap();
        for i in 0..2 {
            assert!((a.coords[i] - b.coords[i]).abs() < 1e-8);
        }
        let (a, b) = ou_transform_check(&Model::hermite(2), 1.0, &State::at_zero(vec![-1.0, 1.0]), 0.0).unwrap();
        assert_eq!(a.coords, vec![-1.0, 1.0]);
        assert_eq!(b.coords, vec![-1.0, 1.0]);
    }

    #[test]
    fn output_grid_is_honoured() {
        let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let c = cfg(1.0).with_output_times(times.clone());
        let tr = solve(&Model::hermite(3), &State::at_zero(vec![-1.0, 0.2, 1.0]), &c).unwrap();
        assert_eq!(tr.times(), times);
    }

    #[test]
    fn dense_output_matches_exact_gap() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let c = cfg(1.0).with_output_times(times);
        let tr = solve(&Model::hermite(2), &State::at_zero(vec![-1.0, 1.0]), &c).unwrap();
        for s in &tr.samples {
            let gap = (4.0 + 4.0 * s.time).sqrt();
            assert!((s.coords[1] - s.coords[0] - gap).abs() < 1e-9);
        }
    }
}
