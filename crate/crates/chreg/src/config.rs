//! Line-oriented experiment configuration: `section.key = value` pairs with
//! `#` comments. Every key is validated with an error naming the key and, for
//! malformed input, the line it came from.

use crate::domain::{Field, Grid, GridConfig, GridKind};
use crate::evolution::{EvolutionError, SolveMode, SolverConfig};
use crate::nonlinearity::{MonotoneGraph, NonlinearityError, Perturbation};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config error at line {line}, key {key}: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("config error: missing required key {key}")]
    Missing { key: String },
    #[error("config error at line {line}: unknown key {key}")]
    Unknown { line: usize, key: String },
}

impl ConfigError {
    fn value(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self::Value {
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Initial profile u_0(x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    Constant {
        value: f64,
    },
    Gaussian {
        center: f64,
        width: f64,
        amplitude: f64,
        baseline: f64,
    },
    Step {
        interface: f64,
        left: f64,
        right: f64,
    },
}

impl InitialProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Gaussian {
                center,
                width,
                amplitude,
                baseline,
            } => baseline + amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp(),
            Self::Step {
                interface,
                left,
                right,
            } => {
                if x < interface {
                    left
                } else {
                    right
                }
            }
        }
    }
}

/// Source term g(x, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingModel {
    Zero,
    Constant {
        value: f64,
    },
    GaussianPulse {
        center: f64,
        width: f64,
        amplitude: f64,
        t_center: f64,
        t_width: f64,
    },
}

impl ForcingModel {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Constant { value } => value,
            Self::GaussianPulse {
                center,
                width,
                amplitude,
                t_center,
                t_width,
            } => {
                amplitude
                    * (-(x - center).powi(2) / (2.0 * width * width)).exp()
                    * (-(t - t_center).powi(2) / (2.0 * t_width * t_width)).exp()
            }
        }
    }
}

/// Numerical solver settings shared by every study.
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub yosida_lambda: f64,
    pub derivative_cap: f64,
    pub mode: SolveMode,
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub domain_kind: GridKind,
    pub domain_a: f64,
    pub domain_b: f64,
    pub dimension: usize,
    pub nodes: usize,
    pub horizon: f64,
    pub dt: f64,
    pub graph: MonotoneGraph,
    /// Strictly decreasing regularization ladder, entries in (0, 1].
    pub ladder: Vec<f64>,
    pub c1: f64,
    pub initial: InitialProfile,
    pub forcing: ForcingModel,
    pub solver: SolverSettings,
    /// Outer radii for the truncation study.
    pub radii: Vec<f64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            kind: self.domain_kind,
            a: self.domain_a,
            b: self.domain_b,
            nodes: self.nodes,
            dimension: self.dimension,
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, EvolutionError> {
        let mut cfg = SolverConfig::new(self.dt, self.horizon)?;
        cfg.newton_tol = self.solver.newton_tol;
        cfg.newton_max_iters = self.solver.newton_max_iters;
        cfg.yosida_lambda = self.solver.yosida_lambda;
        cfg.derivative_cap = self.solver.derivative_cap;
        Ok(cfg)
    }

    pub fn perturbation(&self, eps: f64) -> Result<Perturbation, NonlinearityError> {
        Perturbation::new(eps)
    }

    pub fn initial_field(&self, grid: &Grid) -> Field {
        Field::from_fn(grid, |x| self.initial.eval(x))
    }

    pub fn forcing_field(&self, grid: &Grid, t: f64) -> Field {
        Field::from_fn(grid, |x| self.forcing.eval(x, t))
    }
}

struct RawEntry {
    value: String,
    line: usize,
    used: bool,
}

struct RawConfig {
    entries: BTreeMap<String, RawEntry>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected `section.key = value`, got `{content}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: "empty key or value".to_string(),
                });
            }
            if entries.contains_key(&key) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("duplicate key {key}"),
                });
            }
            entries.insert(
                key,
                RawEntry {
                    value,
                    line,
                    used: false,
                },
            );
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn require(&mut self, key: &str) -> Result<(String, usize), ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::Missing {
            key: key.to_string(),
        })
    }

    fn f64(&mut self, key: &str) -> Result<Option<(f64, usize)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| ConfigError::value(line, key, format!("not a number: `{v}`")))?;
                if !x.is_finite() {
                    return Err(ConfigError::value(line, key, "must be finite"));
                }
                Ok(Some((x, line)))
            }
        }
    }

    fn f64_required(&mut self, key: &str) -> Result<(f64, usize), ConfigError> {
        self.f64(key)?.ok_or_else(|| ConfigError::Missing {
            key: key.to_string(),
        })
    }

    fn f64_default(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(key)?.map(|(x, _)| x).unwrap_or(default))
    }

    fn f64_default_positive(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.f64(key)? {
            None => Ok(default),
            Some((x, _)) if x > 0.0 => Ok(x),
            Some((_, line)) => Err(ConfigError::value(line, key, "must be positive")),
        }
    }

    fn f64_default_nonnegative(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.f64(key)? {
            None => Ok(default),
            Some((x, _)) if x >= 0.0 => Ok(x),
            Some((_, line)) => Err(ConfigError::value(line, key, "must be nonnegative")),
        }
    }

    fn usize_required(&mut self, key: &str) -> Result<(usize, usize), ConfigError> {
        let (v, line) = self.require(key)?;
        let x: usize = v.parse().map_err(|_| {
            ConfigError::value(line, key, format!("not a nonnegative integer: `{v}`"))
        })?;
        Ok((x, line))
    }

    fn unknown(&self) -> Option<(&String, usize)> {
        self.entries
            .iter()
            .find(|(_, e)| !e.used)
            .map(|(k, e)| (k, e.line))
    }
}

/// Parse and validate an experiment configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = RawConfig::parse(text)?;

    let (kind_str, kind_line) = raw.require("domain.kind")?;
    let domain_kind = match kind_str.as_str() {
        "interval" => GridKind::Interval,
        "radial_exterior" => GridKind::RadialExterior,
        other => {
            return Err(ConfigError::value(
                kind_line,
                "domain.kind",
                format!("expected interval or radial_exterior, got `{other}`"),
            ))
        }
    };
    let (domain_a, a_line) = raw.f64_required("domain.a")?;
    let (domain_b, b_line) = raw.f64_required("domain.b")?;
    if domain_b <= domain_a {
        return Err(ConfigError::value(
            b_line,
            "domain.b",
            "must exceed domain.a",
        ));
    }
    let (dimension, dim_line) = match raw.take("domain.dimension") {
        None => (1, kind_line),
        Some((v, line)) => {
            let d = v.parse::<usize>().map_err(|_| {
                ConfigError::value(line, "domain.dimension", format!("not an integer: `{v}`"))
            })?;
            (d, line)
        }
    };
    if domain_kind == GridKind::RadialExterior {
        if domain_a <= 0.0 {
            return Err(ConfigError::value(
                a_line,
                "domain.a",
                "radial mode needs inner radius a > 0",
            ));
        }
        if dimension < 1 {
            return Err(ConfigError::value(
                dim_line,
                "domain.dimension",
                "must be at least 1",
            ));
        }
    }

    let (nodes, nodes_line) = raw.usize_required("grid.nodes")?;
    if nodes < 2 {
        return Err(ConfigError::value(
            nodes_line,
            "grid.nodes",
            "need at least 2 nodes",
        ));
    }

    let (horizon, h_line) = raw.f64_required("time.horizon")?;
    if horizon <= 0.0 {
        return Err(ConfigError::value(
            h_line,
            "time.horizon",
            "must be positive",
        ));
    }
    let (dt, dt_line) = raw.f64_required("time.dt")?;
    if dt <= 0.0 {
        return Err(ConfigError::value(dt_line, "time.dt", "must be positive"));
    }

    let (beta_kind, beta_line) = raw.require("model.beta.kind")?;
    let graph = match beta_kind.as_str() {
        "linear" => MonotoneGraph::linear(),
        "power" => {
            let (q, line) = raw.f64_required("model.beta.q")?;
            MonotoneGraph::power(q)
                .map_err(|e| ConfigError::value(line, "model.beta.q", e.to_string()))?
        }
        "stefan" => {
            let (ks, ks_line) = raw.f64_required("model.beta.ks")?;
            let (kl, _) = raw.f64_required("model.beta.kl")?;
            let (latent, _) = raw.f64_required("model.beta.latent")?;
            MonotoneGraph::stefan(ks, kl, latent)
                .map_err(|e| ConfigError::value(ks_line, "model.beta", e.to_string()))?
        }
        other => {
            return Err(ConfigError::value(
                beta_line,
                "model.beta.kind",
                format!("expected linear, power or stefan, got `{other}`"),
            ))
        }
    };

    let (ladder_str, ladder_line) = raw.require("model.epsilon")?;
    let mut ladder = Vec::new();
    for piece in ladder_str.split(',') {
        let piece = piece.trim();
        let eps: f64 = piece.parse().map_err(|_| {
            ConfigError::value(
                ladder_line,
                "model.epsilon",
                format!("not a number: `{piece}`"),
            )
        })?;
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(ConfigError::value(
                ladder_line,
                "model.epsilon",
                format!("ladder entries must lie in (0, 1], got {eps}"),
            ));
        }
        ladder.push(eps);
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ConfigError::value(
            ladder_line,
            "model.epsilon",
            "ladder must be strictly decreasing",
        ));
    }

    let c1 = raw.f64_default_positive("model.c1", 0.5)?;

    let (init_kind, init_line) = raw.require("initial.kind")?;
    let initial = match init_kind.as_str() {
        "constant" => InitialProfile::Constant {
            value: raw.f64_required("initial.value")?.0,
        },
        "gaussian" => {
            let center = raw.f64_required("initial.center")?.0;
            let (width, w_line) = raw.f64_required("initial.width")?;
            if width <= 0.0 {
                return Err(ConfigError::value(
                    w_line,
                    "initial.width",
                    "must be positive",
                ));
            }
            InitialProfile::Gaussian {
                center,
                width,
                amplitude: raw.f64_required("initial.amplitude")?.0,
                baseline: raw.f64_default("initial.baseline", 0.0)?,
            }
        }
        "step" => InitialProfile::Step {
            interface: raw.f64_required("initial.interface")?.0,
            left: raw.f64_required("initial.left")?.0,
            right: raw.f64_required("initial.right")?.0,
        },
        other => {
            return Err(ConfigError::value(
                init_line,
                "initial.kind",
                format!("expected constant, gaussian or step, got `{other}`"),
            ))
        }
    };

    let forcing = match raw.take("forcing.kind") {
        None => ForcingModel::Zero,
        Some((v, line)) => match v.as_str() {
            "zero" => ForcingModel::Zero,
            "constant" => ForcingModel::Constant {
                value: raw.f64_required("forcing.value")?.0,
            },
            "gaussian_pulse" => {
                let (width, w_line) = raw.f64_required("forcing.width")?;
                let (t_width, tw_line) = raw.f64_required("forcing.t_width")?;
                if width <= 0.0 {
                    return Err(ConfigError::value(
                        w_line,
                        "forcing.width",
                        "must be positive",
                    ));
                }
                if t_width <= 0.0 {
                    return Err(ConfigError::value(
                        tw_line,
                        "forcing.t_width",
                        "must be positive",
                    ));
                }
                ForcingModel::GaussianPulse {
                    center: raw.f64_required("forcing.center")?.0,
                    width,
                    amplitude: raw.f64_required("forcing.amplitude")?.0,
                    t_center: raw.f64_required("forcing.t_center")?.0,
                    t_width,
                }
            }
            other => {
                return Err(ConfigError::value(
                    line,
                    "forcing.kind",
                    format!("expected zero, constant or gaussian_pulse, got `{other}`"),
                ))
            }
        },
    };

    let newton_tol = raw.f64_default_positive("solver.newton_tol", 1e-10)?;
    let newton_max_iters = match raw.take("solver.newton_max_iters") {
        None => 50,
        Some((v, line)) => {
            let n: usize = v.parse().map_err(|_| {
                ConfigError::value(
                    line,
                    "solver.newton_max_iters",
                    format!("not an integer: `{v}`"),
                )
            })?;
            if n == 0 {
                return Err(ConfigError::value(
                    line,
                    "solver.newton_max_iters",
                    "must be positive",
                ));
            }
            n
        }
    };
    let yosida_lambda = raw.f64_default_nonnegative("solver.yosida_lambda", 0.0)?;
    let derivative_cap = raw.f64_default_positive("solver.derivative_cap", 1e8)?;
    let mode = match raw.take("solver.mode") {
        None => SolveMode::CahnHilliard,
        Some((v, line)) => match v.as_str() {
            "cahn_hilliard" => SolveMode::CahnHilliard,
            "direct" => SolveMode::Direct,
            other => {
                return Err(ConfigError::value(
                    line,
                    "solver.mode",
                    format!("expected cahn_hilliard or direct, got `{other}`"),
                ))
            }
        },
    };

    let radii = match raw.take("study.radii") {
        None => Vec::new(),
        Some((v, line)) => {
            let mut radii = Vec::new();
            for piece in v.split(',') {
                let r: f64 = piece.trim().parse().map_err(|_| {
                    ConfigError::value(line, "study.radii", format!("not a number: `{piece}`"))
                })?;
                radii.push(r);
            }
            if radii.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::value(
                    line,
                    "study.radii",
                    "radii must be strictly increasing",
                ));
            }
            radii
        }
    };

    let output_dir = PathBuf::from(raw.require("output.dir")?.0);

    if let Some((key, line)) = raw.unknown() {
        return Err(ConfigError::Unknown {
            line,
            key: key.clone(),
        });
    }

    Ok(ExperimentConfig {
        domain_kind,
        domain_a,
        domain_b,
        dimension,
        nodes,
        horizon,
        dt,
        graph,
        ladder,
        c1,
        initial,
        forcing,
        solver: SolverSettings {
            newton_tol,
            newton_max_iters,
            yosida_lambda,
            derivative_cap,
            mode,
        },
        radii,
        output_dir,
    })
}
