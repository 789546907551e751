//! Experiment configuration: a JSON document merged with command-line flags
//! (flags win), then completed with defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use cms_lab::{Family, Model};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub family: Option<String>,
    pub n: Option<usize>,
    pub nu: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub reproducible: Option<bool>,
    pub identity: Option<String>,
    pub law: Option<String>,
    pub l: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// hermite, laguerre, jacobi, jacobi-noncompact or torus.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Inverse temperature; omitted means the deterministic flow.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated start.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub y0: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Omit the timestamp so identical runs give identical files.
    #[arg(long)]
    pub reproducible: bool,
    /// Identity tag for `expect`.
    #[arg(long)]
    pub identity: Option<String>,
    /// Decay law for `stability`: stationary, prefactor, contraction, angles, torus.
    #[arg(long)]
    pub law: Option<String>,
    /// Degree of the elementary symmetric polynomial.
    #[arg(long)]
    pub l: Option<usize>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

/// File values overridden by flags.
pub fn merge(experiment: &str, flags: &Flags) -> Result<ExperimentConfig, ConfigError> {
    let file = match &flags.config {
        Some(p) => load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = &file.experiment {
        if e != experiment {
            return Err(ConfigError(format!("config is for experiment {e:?}, not {experiment:?}")));
        }
    }
    let f = flags.clone();
    Ok(ExperimentConfig {
        experiment: Some(experiment.to_string()),
        family: f.family.or(file.family),
        n: f.n.or(file.n),
        nu: f.nu.or(file.nu),
        p: f.p.or(file.p),
        q: f.q.or(file.q),
        k: f.k.or(file.k),
        lambda: f.lambda.or(file.lambda),
        x0: f.x0.or(file.x0),
        y0: f.y0.or(file.y0),
        t_end: f.t_end.or(file.t_end),
        dt: f.dt.or(file.dt),
        paths: f.paths.or(file.paths),
        seed: f.seed.or(file.seed),
        out_dir: f.out_dir.or(file.out_dir),
        reproducible: Some(f.reproducible || file.reproducible.unwrap_or(false)),
        identity: f.identity.or(file.identity),
        law: f.law.or(file.law),
        l: f.l.or(file.l),
    })
}

impl ExperimentConfig {
    pub fn family(&self) -> Result<Family, ConfigError> {
        let name = self.family.as_deref().unwrap_or("hermite");
        Family::parse(name).ok_or_else(|| ConfigError(format!("unknown family {name:?}")))
    }

    /// Fills the model fields with defaults and returns the model.
    pub fn resolve_model(&mut self) -> Result<Model, ConfigError> {
        let family = self.family()?;
        self.family = Some(family.name().to_string());
        let n = *self.n.get_or_insert(3);
        if n == 0 {
            return Err(ConfigError("n must be at least 1".into()));
        }
        let mut model = match family {
            Family::HermiteA => Model::hermite(n),
            Family::LaguerreB => Model::laguerre(n, *self.nu.get_or_insert(1.0)),
            Family::JacobiCompact | Family::JacobiNoncompact => {
                let p = *self.p.get_or_insert(n as f64 + 1.0);
                let q = *self.q.get_or_insert(n as f64 + 1.5);
                if family == Family::JacobiCompact {
                    Model::jacobi(n, p, q)
                } else {
                    Model::jacobi_noncompact(n, p, q)
                }
            }
            Family::Torus => Model::torus(n),
        };
        if let Some(k) = self.k {
            model = model.with_inv_temp(k);
        }
        if let Some(l) = self.lambda {
            model = model.with_lambda(l);
        }
        model.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(model)
    }

    /// The start, defaulting to evenly spaced interior points.
    pub fn resolve_x0(&mut self, model: &Model) -> Result<Vec<f64>, ConfigError> {
        let x0 = self.x0.get_or_insert_with(|| default_start(model)).clone();
        if x0.len() != model.n {
            return Err(ConfigError(format!("x0 has {} entries, n = {}", x0.len(), model.n)));
        }
        Ok(x0)
    }

    pub fn seed(&mut self) -> u64 {
        *self.seed.get_or_insert(0)
    }

    pub fn out_dir(&mut self) -> PathBuf {
        self.out_dir.get_or_insert_with(|| PathBuf::from("out")).clone()
    }
}

pub fn default_start(model: &Model) -> Vec<f64> {
    let (lo, hi) = match model.family {
        Family::HermiteA => (-1.0, 1.0),
        Family::LaguerreB => (0.5, 1.5),
        Family::JacobiCompact => (-0.5, 0.5),
        Family::JacobiNoncompact => (1.5, 2.5),
        Family::Torus => (0.3, 0.3 + 0.9 * std::f64::consts::TAU * (model.n as f64 - 1.0) / model.n.max(1) as f64),
    };
    let n = model.n;
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
