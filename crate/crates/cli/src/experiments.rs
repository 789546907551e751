use cms_lab::expectation::{
    self, decay_rate_check, martingale_experiment, paired_start, DecayLaw, Identity, MartingaleKind, BOUND_SLACK,
};
use cms_lab::heat::{coefficient_flow, pde_residual, poly_from_angles, poly_from_roots, roots_from_poly, unit_roots_from_poly};
use cms_lab::model::check_chamber;
use cms_lab::ode::{self, SolveConfig};
use cms_lab::orthopoly::{self, residual_tolerance, Classical};
use cms_lab::sde::{self, SdeConfig};
use cms_lab::{Family, InvTemp, LabError, Model, State};
use serde_json::{json, Value};

use crate::config::{default_start, ConfigError, ExperimentConfig};
use crate::output::Check;

pub enum RunError {
    Config(String),
    Solver(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InvalidParams(_)
            | LabError::OutsideChamber(_)
            | LabError::Unsupported(_)
            | LabError::InsufficientPaths(_) => RunError::Config(e.to_string()),
            _ => RunError::Solver(e.to_string()),
        }
    }
}

pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: Value,
    pub series: Option<Series>,
}

fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect()
}

fn positive(name: &str, v: f64) -> Result<f64, RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(RunError::Config(format!("{name} must be positive, got {v}")))
    }
}

/// Output grid on `[0, t_end]`: every `dt` if given, else 101 points.
fn output_grid(t_end: f64, dt: Option<f64>) -> Result<Vec<f64>, RunError> {
    match dt {
        Some(dt) => {
            let steps = (positive("dt", dt)?.recip() * t_end).round() as usize;
            Ok((0..=steps).map(|i| (i as f64 * dt).min(t_end)).collect())
        }
        None => Ok(linspace(0.0, t_end, 101)),
    }
}

fn coord_series(samples: impl Iterator<Item = (f64, Vec<f64>)>, n: usize) -> Series {
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    let rows = samples
        .map(|(t, x)| {
            let mut r = vec![t];
            r.extend(x);
            r
        })
        .collect();
    Series { header, rows }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn zeros(cfg: &mut ExperimentConfig) -> Result<Outcome, RunError> {
    let model = cfg.resolve_model()?;
    let fam = Classical::for_model(&model)?;
    let z = orthopoly::zeros(&fam, model.n)?;
    let n = model.n as f64;
    let mut checks = vec![Check::at_most("stieltjes_residual", z.residual, residual_tolerance::<f64>())];
    let law = match model.family {
        Family::HermiteA => Some(("sum_of_squares", norm_sq(&z.zeros), n * (n - 1.0) / 2.0)),
        Family::LaguerreB => Some(("sum", z.zeros.iter().sum(), n * (n + model.nu - 1.0))),
        _ => None,
    };
    let mut results = json!({ "zeros": z.zeros, "residual": z.residual });
    if let Some((name, value, target)) = law {
        checks.push(Check::at_most(format!("{name}_relative_error"), (value - target).abs() / target.abs().max(1.0), 1e-9));
        results[name] = json!(value);
        results[format!("{name}_expected")] = json!(target);
    }
    let series = Series { header: vec!["z".into()], rows: z.zeros.iter().map(|v| vec![*v]).collect() };
    Ok(Outcome { checks, results, series: Some(series) })
}

pub fn flow(cfg: &mut ExperimentConfig) -> Result<Outcome, RunError> {
    let model = cfg.resolve_model()?;
    let x0 = cfg.resolve_x0(&model)?;
    let t_end = *cfg.t_end.get_or_insert(1.0);
    let times = output_grid(t_end, cfg.dt)?;
    let model = Model { inv_temp: InvTemp::Infinite, ..model };
    let tr = ode::solve(&model, &State::at_zero(x0.clone()), &SolveConfig::until(t_end).with_output_times(times))?;
    let mut checks = Vec::new();
    if model.lambda.is_none() && matches!(model.family, Family::HermiteA | Family::LaguerreB) {
        let rate = ode::norm_growth_rate(&model)?;
        let r0 = norm_sq(&x0);
        let worst = tr.samples.iter().map(|s| (s.norm_sq() - rate * s.time - r0).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("norm_law_error", worst / (1.0 + r0), 1e-9));
    }
    let last = tr.last();
    let finite = tr.samples.iter().all(|s| s.coords.iter().all(|v| v.is_finite()));
    checks.push(Check::flag("finite", finite));
    let results = json!({ "final_time": last.time, "final_state": last.coords, "stats": tr.stats });
    let series = coord_series(tr.samples.iter().map(|s| (s.time, s.coords.clone())), model.n);
    Ok(Outcome { checks, results, series: Some(series) })
}

pub fn parse_law(s: &str) -> Option<DecayLaw> {
    Some(match s {
        "stationary" => DecayLaw::Stationary,
        "prefactor" => DecayLaw::HermitePrefactor,
        "contraction" => DecayLaw::Contraction,
        "angles" => DecayLaw::JacobiAngles,
        "torus" => DecayLaw::Torus,
        _ => return None,
    })
}

fn default_law(family: Family) -> Result<&'static str, RunError> {
    match family {
        Family::HermiteA | Family::LaguerreB => Ok("stationary"),
        Family::JacobiCompact => Ok("angles"),
        Family::Torus => Ok("torus"),
        // the flow spreads out, there is nothing to decay
        Family::JacobiNoncompact => Err(RunError::Config("no default decay law for jacobi-noncompact; pass --law".into())),
    }
}

/// Long enough for twelve e-folds of the predicted bound, after which the
/// bound drops towards the solver's own error.
fn default_decay_window(model: &Model, law: DecayLaw) -> f64 {
    let n = model.n as f64;
    let rate = match law {
        DecayLaw::Stationary => model.lambda,
        DecayLaw::JacobiAngles => Some((model.p + model.q + 2.0 * model.p.min(model.q) + 2.0 - 2.0 * n) / 4.0),
        DecayLaw::Torus => Some(n / 2.0),
        _ => None,
    };
    match rate {
        Some(r) if r > 0.0 => (12.0 / r).min(5.0),
        _ => 5.0,
    }
}

pub fn stability(cfg: &mut ExperimentConfig) -> Result<Outcome, RunError> {
    let family = cfg.family()?;
    if cfg.law.is_none() {
        cfg.law = Some(default_law(family)?.into());
    }
    let law_name = cfg.law.clone().expect("law set");
    let law = parse_law(&law_name).ok_or_else(|| RunError::Config(format!("unknown law {law_name:?}")))?;
    if law == DecayLaw::Stationary && cfg.lambda.is_none() {
        let probe = Model { lambda: None, ..cfg.clone().resolve_model()? };
        cfg.lambda = Some(probe.stationary_lambda()?);
    }
    let model = cfg.resolve_model()?;
    let x0 = cfg.resolve_x0(&model)?;
    let seed = cfg.seed();
    let t_end = positive("t_end", *cfg.t_end.get_or_insert_with(|| default_decay_window(&model, law)))?;
    let x0b = paired_start(&model, &x0, law, seed);
    let grid = output_grid(t_end, cfg.dt)?;
    let r = decay_rate_check(&model, &x0, &x0b, &grid, law)?;
    let checks = vec![Check::at_most("distance_over_bound", r.max_ratio, 1.0 + BOUND_SLACK)];
    let rows = r.times.iter().zip(&r.distances).zip(&r.bounds).map(|((t, d), b)| vec![*t, *d, *b]).collect();
    let series = Series { header: vec!["t".into(), "distance".into(), "bound".into()], rows };
    let results = json!({
        "law": law_name,
        "x0": x0,
        "x0_paired": x0b,
        "predicted_rate": r.predicted_rate,
        "fitted_rate": r.fitted_rate,
        "max_ratio": r.max_ratio,
    });
    Ok(Outcome { checks, results, series: Some(series) })
}

pub fn heat_check(cfg: &mut ExperimentConfig) -> Result<Outcome, RunError> {
    let model = Model { inv_temp: InvTemp::Infinite, ..cfg.resolve_model()? };
    let x0 = cfg.resolve_x0(&model)?;
    check_chamber(&model, &x0)?;
    let t_end = positive("t_end", *cfg.t_end.get_or_insert(1.0))?;
    let times = output_grid(t_end, cfg.dt)?;
    let tr = ode::solve(&model, &State::at_zero(x0.clone()), &SolveConfig::until(t_end).with_output_times(times))?;
    let solved = &tr.last().coords;
    let oracle = if model.family == Family::Torus {
        let p = coefficient_flow(&model, &poly_from_angles(&x0), t_end)?;
        unit_roots_from_poly(&p, Some(solved.iter().sum()))?
    } else {
        let p = coefficient_flow(&model, &poly_from_roots(model.family, &x0)?, t_end)?;
        roots_from_poly(&p)?
    };
    let diff = oracle.iter().zip(solved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // residual on a short window of closely spaced samples ending at t_end
    let h = 1e-4;
    let t0 = (t_end - 50.0 * h).max(t_end / 2.0);
    let window: Vec<f64> = (0..=50).map(|i| t0 + i as f64 * (t_end - t0) / 50.0).collect();
    let fine = SolveConfig { rel_tol: 1e-13, abs_tol: 1e-15, max_step: 0.01, ..SolveConfig::until(t_end) }
        .with_output_times(window);
    let residual = pde_residual(&ode::solve(&model, &State::at_zero(x0), &fine)?)?;
    let checks = vec![Check::at_most("oracle_max_diff", diff, 1e-7), Check::at_most("pde_residual", residual, 1e-6)];
    let results = json!({ "solver_roots": solved, "oracle_roots": oracle });
    let series = coord_series(tr.samples.iter().map(|s| (s.time, s.coords.clone())), model.n);
    Ok(Outcome { checks, results, series: Some(series) })
}

pub fn sde(cfg: &mut ExperimentConfig) -> Result<Outcome, RunError> {
    let model = cfg.resolve_model()?;
    let x0 = cfg.resolve_x0(&model)?;
    let seed = cfg.seed();
    let t_end = positive("t_end", *cfg.t_end.get_or_insert(1.0))?;
    let dt = positive("dt", *cfg.dt.get_or_insert(1e-3))?;
    let paths = *cfg.paths.get_or_insert(1);
    if paths == 0 {
        return Err(RunError::Config("paths must be at least 1".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let stride = steps.div_ceil(1000).max(1);
    let mut times: Vec<f64> = (0..=steps).step_by(stride).map(|i| i as f64 * dt).collect();
    if times.last() != Some(&(steps as f64 * dt)) {
        times.push(steps as f64 * dt);
    }
    let config = SdeConfig::new(dt, t_end);
    let start = State::at_zero(x0);
    let all = expectation::run_paths(paths, seed, |rng| sde::simulate(&model, &start, &config, rng, &times))?;
    let finals: Vec<&Vec<f64>> = all.iter().map(|p| &p.last().expect("at least one sample").coords).collect();
    let n = model.n;
    let mean: Vec<f64> = (0..n).map(|i| finals.iter().map(|x| x[i]).sum::<f64>() / paths as f64).collect();
    let inside = finals.iter().all(|x| check_chamber(&model, x).is_ok());
    let checks = vec![Check::flag("final_states_in_chamber", inside)];
    let results = json!({ "paths": paths, "final_mean": mean, "path0_final": finals[0] });
    let series = coord_series(all[0].iter().map(|s| (s.time, s.coords.clone())), n);
    Ok(Outcome { checks, results, series: Some(series) })
}

pub fn expect(cfg: &mut ExperimentConfig) -> Result<Outcome, RunError> {
    let tag = cfg.identity.clone().ok_or_else(|| RunError::Config("expect needs --identity".into()))?;
    let seed = cfg.seed();
    let paths = *cfg.paths.get_or_insert(100_000);
    if let Some(m) = tag.strip_prefix("martingale-") {
        return martingale(cfg, m, paths, seed);
    }
    let id = Identity::parse(&tag).ok_or_else(|| {
        let known: Vec<&str> = Identity::ALL.iter().map(|i| i.tag()).collect();
        RunError::Config(format!("unknown identity {tag:?}; known: {}", known.join(", ")))
    })?;
    let mut pr = id.default_params();
    let family = id.family();
    if let Some(f) = &cfg.family {
        if cms_lab::Family::parse(f) != Some(family) {
            return Err(RunError::Config(format!("identity {tag} is for the {} family", family.name())));
        }
    }
    pr.n = cfg.n.unwrap_or(pr.n);
    pr.nu = cfg.nu.unwrap_or(pr.nu);
    pr.p = cfg.p.unwrap_or(pr.p);
    pr.q = cfg.q.unwrap_or(pr.q);
    pr.k = cfg.k.unwrap_or(pr.k);
    pr.y0 = cfg.y0.unwrap_or(pr.y0);
    pr.t = cfg.t_end.unwrap_or(pr.t);
    pr.dt = cfg.dt.unwrap_or(pr.dt);
    pr.l = cfg.l.unwrap_or(pr.l);
    if let Some(x0) = &cfg.x0 {
        pr.x0 = Some(x0.clone());
    } else if pr.x0.as_ref().is_some_and(|x| x.len() != pr.n) {
        let m = match family {
            Family::HermiteA => Model::hermite(pr.n),
            Family::LaguerreB => Model::laguerre(pr.n, pr.nu),
            Family::JacobiCompact => Model::jacobi(pr.n, pr.p, pr.q),
            Family::JacobiNoncompact => Model::jacobi_noncompact(pr.n, pr.p, pr.q),
            Family::Torus => Model::torus(pr.n),
        };
        pr.x0 = Some(default_start(&m));
    }
    let reports = expectation::run_identity(id, &pr, paths, seed)?;
    let checks = reports.iter().map(|r| Check::at_most(format!("{}_z", r.tag), r.z_score, r.threshold)).collect();
    let results = json!({ "identity": tag, "params": pr, "reports": reports });
    Ok(Outcome { checks, results, series: None })
}

fn martingale(cfg: &mut ExperimentConfig, tag: &str, paths: usize, seed: u64) -> Result<Outcome, RunError> {
    let (mut kind, mut times, mut dt) = MartingaleKind::default_setup(tag).ok_or_else(|| {
        RunError::Config(format!("unknown martingale {tag:?}; known: {}", MartingaleKind::TAGS.join(", ")))
    })?;
    match &mut kind {
        MartingaleKind::HermiteHeat { n, y0 } => {
            *n = cfg.n.unwrap_or(*n);
            *y0 = cfg.y0.unwrap_or(*y0);
        }
        MartingaleKind::BesselHeat { n, nu, y0 } => {
            *n = cfg.n.unwrap_or(*n);
            *nu = cfg.nu.unwrap_or(*nu);
            *y0 = cfg.y0.unwrap_or(*y0);
        }
        MartingaleKind::JacobiFeynmanKac { n, p, q, x0, y0 } => {
            *n = cfg.n.unwrap_or(*n);
            *p = cfg.p.unwrap_or(*p);
            *q = cfg.q.unwrap_or(*q);
            *y0 = cfg.y0.unwrap_or(*y0);
            *x0 = match &cfg.x0 {
                Some(x) => x.clone(),
                None if x0.len() == *n => x0.clone(),
                None => default_start(&Model::jacobi(*n, *p, *q)),
            };
        }
        MartingaleKind::Torus { n, x0, y0 } => {
            *n = cfg.n.unwrap_or(*n);
            *y0 = cfg.y0.unwrap_or(*y0);
            *x0 = match &cfg.x0 {
                Some(x) => x.clone(),
                None if x0.len() == *n => x0.clone(),
                None => default_start(&Model::torus(*n)),
            };
        }
    }
    if let Some(d) = cfg.dt {
        dt = positive("dt", d)?;
    }
    if let Some(t) = cfg.t_end {
        let t = positive("t_end", t)?;
        let steps = (t / dt).round() as usize;
        times = [0, steps / 2, steps].iter().map(|&i| i as f64 * dt).collect();
    }
    let r = martingale_experiment(&kind, &times, dt, paths, seed)?;
    let checks = vec![Check::at_most(format!("{}_max_z", r.tag), r.stats.max_z, expectation::Z_THRESHOLD)];
    let results = json!({ "martingale": kind, "report": r });
    Ok(Outcome { checks, results, series: None })
}
