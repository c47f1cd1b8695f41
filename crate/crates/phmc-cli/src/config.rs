//! Experiment configuration: one document drives model construction, kernel
//! setup and the per-command experiment parameters. TOML and JSON are both
//! accepted, chosen by file extension.

use crate::CliError;
use phmc::coupling::GammaRule;
use phmc::models::{
    GaussianModel, PimdModel, PimdParams, PotentialSpec, TargetModel, TpsModel, TpsParams,
};
use phmc::rng::RngStream;
use phmc::spectral::{sample_gaussian, SpectralOperator, SpectralVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional command echo; must match the invoked subcommand when set.
    #[serde(default)]
    pub command: Option<String>,
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Thinning stride for state output.
    #[serde(default = "default_thin")]
    pub thin: u64,
    /// Dump one Hamiltonian trajectory (per-step, per-mode) alongside the
    /// chain output.
    #[serde(default)]
    pub trajectory: bool,
    /// Accuracy target for the mixing-time bound.
    #[serde(default)]
    pub delta: Option<f64>,
    pub model: ModelConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub coupling: Option<CouplingConfig>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
}

fn default_replicas() -> usize {
    100
}

fn default_steps() -> u64 {
    1_000
}

fn default_thin() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "tps", "pimd" or "gaussian"
    pub kind: String,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    /// shift of the loop Laplacian
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub endpoint_a: Option<Vec<f64>>,
    #[serde(default)]
    pub endpoint_b: Option<Vec<f64>>,
    /// eigenvalues for the plain gaussian kind
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub duration: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub metropolis: bool,
    #[serde(default = "default_target_acceptance")]
    pub target_acceptance: f64,
}

fn default_target_acceptance() -> f64 {
    0.99
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub rules: Option<Vec<String>>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
    #[serde(default)]
    pub low_modes: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_true")]
    pub shared_acceptance: bool,
}

fn default_threshold() -> f64 {
    1e-8
}

fn default_step_cap() -> u64 {
    1_000
}

fn default_alpha() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x: StateSpec,
    #[serde(default)]
    pub y: Option<StateSpec>,
}

/// How to produce an initial state, in the model's original coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    Zero,
    /// Seeded draw from the reference Gaussian.
    Gaussian {
        stream: u64,
    },
    /// Explicit grid values (deviations, eigen-ready after transform).
    Grid {
        values: Vec<f64>,
    },
    /// A circle traversed once along the loop (d = 1 uses the first
    /// coordinate only).
    LoopCircle {
        center: Vec<f64>,
        radius: f64,
    },
    /// Piecewise-linear bridge path through a waypoint at mid-horizon.
    PathVia {
        via: Vec<f64>,
    },
}

/// A constructed model with typed access preserved for initial-state
/// conversion.
#[derive(Clone)]
pub enum BuiltModel {
    Tps(Arc<TpsModel>),
    Pimd(Arc<PimdModel>),
    Gaussian(Arc<GaussianModel>),
}

impl BuiltModel {
    pub fn as_target(&self) -> Arc<dyn TargetModel> {
        match self {
            BuiltModel::Tps(m) => m.clone(),
            BuiltModel::Pimd(m) => m.clone(),
            BuiltModel::Gaussian(m) => m.clone(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            other => {
                return Err(CliError::Config(format!(
                    "{}: unsupported config extension {other:?} (use .toml or .json)",
                    path.display()
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.kernel.duration > 0.0) {
            return Err(CliError::Config("kernel.duration: must be positive".into()));
        }
        if let Some(dt) = self.kernel.dt {
            if !(dt > 0.0) {
                return Err(CliError::Config("kernel.dt: must be positive".into()));
            }
        }
        if self.thin == 0 {
            return Err(CliError::Config("thin: must be at least 1".into()));
        }
        match self.model.kind.as_str() {
            "tps" => {
                require(self.model.tau.is_some(), "model.tau: required for tps")?;
                require(self.model.m.is_some(), "model.m: required for tps")?;
            }
            "pimd" => {
                require(self.model.beta.is_some(), "model.beta: required for pimd")?;
                require(self.model.a.is_some(), "model.a: required for pimd")?;
                require(self.model.m.is_some(), "model.m: required for pimd")?;
            }
            "gaussian" => {
                require(
                    self.model.eigenvalues.is_some(),
                    "model.eigenvalues: required for gaussian",
                )?;
            }
            other => {
                return Err(CliError::Config(format!(
                    "model.kind: unknown kind `{other}`"
                )))
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<BuiltModel, CliError> {
        let d = self.model.d.unwrap_or(1);
        let potential = || -> Result<_, CliError> {
            self.model
                .potential
                .clone()
                .unwrap_or_else(|| PotentialSpec::named("zero", d))
                .build()
                .map_err(CliError::Lib)
        };
        let built = match self.model.kind.as_str() {
            "tps" => BuiltModel::Tps(Arc::new(
                TpsModel::build(TpsParams {
                    tau: self.model.tau.unwrap(),
                    d,
                    m: self.model.m.unwrap(),
                    endpoint_a: self.model.endpoint_a.clone().unwrap_or(vec![0.0; d]),
                    endpoint_b: self.model.endpoint_b.clone().unwrap_or(vec![0.0; d]),
                    potential: potential()?,
                })
                .map_err(CliError::Lib)?,
            )),
            "pimd" => BuiltModel::Pimd(Arc::new(
                PimdModel::build(PimdParams {
                    beta: self.model.beta.unwrap(),
                    a: self.model.a.unwrap(),
                    d,
                    m: self.model.m.unwrap(),
                    potential: potential()?,
                })
                .map_err(CliError::Lib)?,
            )),
            "gaussian" => {
                let op =
                    SpectralOperator::new("configured", self.model.eigenvalues.clone().unwrap())
                        .map_err(CliError::Lib)?;
                BuiltModel::Gaussian(Arc::new(GaussianModel::new(op)))
            }
            _ => unreachable!("validated"),
        };
        Ok(built)
    }

    /// Resolve an initial state spec against a built model. Grid-value
    /// specs are given in the model's original coordinates.
    pub fn build_state(
        &self,
        spec: &StateSpec,
        built: &BuiltModel,
    ) -> Result<SpectralVector, CliError> {
        let model = built.as_target();
        let dim = model.dim();
        let state = match spec {
            StateSpec::Zero => SpectralVector::eigen_with_weight(vec![0.0; dim], model.weight()),
            StateSpec::Gaussian { stream } => {
                let mut rng = RngStream::with_stream(self.seed, 0xD5EE0 + stream);
                let draw = sample_gaussian(model.covariance(), &mut rng);
                SpectralVector::eigen_with_weight(draw.into_coefficients(), model.weight())
            }
            StateSpec::Grid { values } => {
                if values.len() != dim {
                    return Err(CliError::Config(format!(
                        "initial grid values: expected {dim} entries, got {}",
                        values.len()
                    )));
                }
                let mut eigen = vec![0.0; dim];
                model.to_eigen(values, &mut eigen);
                SpectralVector::eigen_with_weight(eigen, model.weight())
            }
            StateSpec::LoopCircle { center, radius } => {
                let (m, d) = self.grid_shape(dim)?;
                if center.len() != d {
                    return Err(CliError::Config(
                        "initial loop-circle center: dimension mismatch".into(),
                    ));
                }
                let mut points = vec![0.0; dim];
                for j in 0..m {
                    let angle = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                    points[j * d] = center[0] + radius * angle.cos();
                    if d > 1 {
                        points[j * d + 1] = center[1] + radius * angle.sin();
                        for i in 2..d {
                            points[j * d + i] = center[i];
                        }
                    }
                }
                match built {
                    BuiltModel::Pimd(pimd) => {
                        pimd.state_from_loop(&points).map_err(CliError::Lib)?
                    }
                    _ => {
                        let mut eigen = vec![0.0; dim];
                        model.to_eigen(&points, &mut eigen);
                        SpectralVector::eigen_with_weight(eigen, model.weight())
                    }
                }
            }
            StateSpec::PathVia { via } => {
                let (m, d) = self.grid_shape(dim)?;
                if via.len() != d {
                    return Err(CliError::Config(
                        "initial path-via waypoint: dimension mismatch".into(),
                    ));
                }
                let a = self.model.endpoint_a.clone().unwrap_or(vec![0.0; d]);
                let b = self.model.endpoint_b.clone().unwrap_or(vec![0.0; d]);
                let mut points = vec![0.0; dim];
                for j in 1..=m {
                    let t = j as f64 / (m + 1) as f64;
                    for i in 0..d {
                        let p = if t <= 0.5 {
                            a[i] + 2.0 * t * (via[i] - a[i])
                        } else {
                            via[i] + (2.0 * t - 1.0) * (b[i] - via[i])
                        };
                        points[(j - 1) * d + i] = p;
                    }
                }
                match built {
                    BuiltModel::Tps(tps) => tps.state_from_path(&points).map_err(CliError::Lib)?,
                    _ => {
                        let mut eigen = vec![0.0; dim];
                        model.to_eigen(&points, &mut eigen);
                        SpectralVector::eigen_with_weight(eigen, model.weight())
                    }
                }
            }
        };
        Ok(state)
    }

    fn grid_shape(&self, dim: usize) -> Result<(usize, usize), CliError> {
        let d = self.model.d.unwrap_or(1);
        let m = self
            .model
            .m
            .ok_or_else(|| CliError::Config("model.m: required for grid initial states".into()))?;
        if m * d != dim {
            return Err(CliError::Config("model grid shape mismatch".into()));
        }
        Ok((m, d))
    }

    pub fn parse_rules(&self) -> Result<Vec<GammaRule>, CliError> {
        let names = self
            .coupling
            .as_ref()
            .and_then(|c| c.rules.clone())
            .unwrap_or_else(|| vec!["zero".into(), "inv-t".into(), "cot-t".into()]);
        names.iter().map(|n| parse_rule(n)).collect()
    }
}

pub fn parse_rule(name: &str) -> Result<GammaRule, CliError> {
    if let Some(value) = name.strip_prefix("fixed:") {
        let g: f64 = value
            .parse()
            .map_err(|_| CliError::Config(format!("coupling.rules: bad fixed rule `{name}`")))?;
        return Ok(GammaRule::Fixed(g));
    }
    if let Some(value) = name.strip_prefix("theory:") {
        let r: f64 = value
            .parse()
            .map_err(|_| CliError::Config(format!("coupling.rules: bad theory rule `{name}`")))?;
        return Ok(GammaRule::Theory { r_cap: r });
    }
    match name {
        "zero" => Ok(GammaRule::Zero),
        "inv-t" | "one-over-t" => Ok(GammaRule::InverseT),
        "cot-t" => Ok(GammaRule::CotT),
        other => Err(CliError::Config(format!(
            "coupling.rules: unknown rule `{other}`"
        ))),
    }
}

fn require(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}
