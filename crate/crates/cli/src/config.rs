//! Run configuration: TOML schema, `--set key=value` overrides, and the
//! `SDI_SEED` environment override.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sdi_core::approximators::{Method, Schedule, ScheduleKind};
use sdi_core::engine::{EngineConfig, EngineMode};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for stochastic engine modes; `SDI_SEED` overrides it.
    pub seed: Option<u64>,
    pub target: TargetSpec,
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub sweep_alpha: SweepAlphaSpec,
    #[serde(default)]
    pub folk_theorem: FolkTheoremSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// "gaussian" | "logistic" | "custom-grid"
    pub kind: String,
    // gaussian
    pub mu: Option<Vec<f64>>,
    pub sigma: Option<Vec<Vec<f64>>>,
    /// Split a Gaussian target into this many equal sites (enables EP).
    pub sites: Option<usize>,
    // logistic
    #[serde(alias = "X")]
    pub x: Option<Vec<Vec<f64>>>,
    /// CSV file with one design row per site.
    #[serde(alias = "X_csv")]
    pub x_csv: Option<String>,
    pub y: Option<Vec<f64>>,
    pub prior_precision: Option<f64>,
    /// Hold the Gaussian prior as one exact site of its own instead of
    /// spreading it across the likelihood sites.
    pub prior_site: Option<bool>,
    /// Replace every site by k copies at 1/k strength.
    pub k_temper: Option<usize>,
    // custom-grid
    pub grid: Option<Vec<f64>>,
    pub psi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    /// "laplace" | "gvb" | "alpha" | "ep_classical" | "ep_smoothed"
    pub name: String,
    pub alpha: Option<f64>,
    /// "sequential" | "parallel"
    pub schedule: Option<String>,
    pub damping: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub tolerance: Option<f64>,
    pub record_kl: Option<bool>,
    /// Record wall-clock per update; leaves outputs non-reproducible, so
    /// off by default.
    pub timings: Option<bool>,
    /// Initial mean/covariance (defaults: N(0, I); EP distributes
    /// N(0, 100·I) across sites).
    pub init_mu: Option<Vec<f64>>,
    pub init_sigma: Option<Vec<Vec<f64>>>,
}

impl Default for MethodSpec {
    fn default() -> Self {
        MethodSpec {
            name: "gvb".to_string(),
            alpha: None,
            schedule: None,
            damping: None,
            max_sweeps: None,
            tolerance: None,
            record_kl: None,
            timings: None,
            init_mu: None,
            init_sigma: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    /// "auto" | "grid1d" | "gh" | "mc"
    pub mode: Option<String>,
    pub grid_nodes: Option<usize>,
    pub gh_order: Option<usize>,
    pub mc_draws: Option<usize>,
    /// Explicit Monte-Carlo seed; defaults to the top-level `seed`.
    pub mc_seed: Option<u64>,
    pub inflation: Option<f64>,
    pub node_budget: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub methods: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepAlphaSpec {
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FolkTheoremSpec {
    pub k: Option<Vec<usize>>,
}

impl RunConfig {
    /// Load from a TOML file, apply dotted `--set key=value` overrides,
    /// then the `SDI_SEED` environment override.
    pub fn load(path: &Path, overrides: &[String]) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> CliResult<RunConfig> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let mut value = toml::Value::Table(table);
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let mut config: RunConfig = value
            .try_into()
            .map_err(|e| CliError::Config(format!("{e}")))?;
        if let Ok(seed) = std::env::var("SDI_SEED") {
            let seed: u64 = seed
                .parse()
                .map_err(|_| CliError::Config("SDI_SEED must be an unsigned integer".into()))?;
            config.seed = Some(seed);
            config.engine.mc_seed = None; // the environment wins outright
        }
        Ok(config)
    }

    pub fn method(&self) -> CliResult<Method> {
        match self.method.name.as_str() {
            "laplace" => Ok(Method::Laplace),
            "gvb" => Ok(Method::Gvb),
            "alpha" => {
                let alpha = self.method.alpha.ok_or_else(|| {
                    CliError::Config("method.alpha is required when method.name = \"alpha\"".into())
                })?;
                Ok(Method::Alpha(alpha))
            }
            "ep_classical" => Ok(Method::EpClassical),
            "ep_smoothed" => Ok(Method::EpSmoothed),
            other => Err(CliError::Config(format!(
                "unknown method.name {other:?} (expected laplace|gvb|alpha|ep_classical|ep_smoothed)"
            ))),
        }
    }

    pub fn method_by_name(&self, name: &str) -> CliResult<Method> {
        let mut clone = self.clone();
        clone.method.name = name.to_string();
        clone.method()
    }

    pub fn schedule(&self) -> CliResult<Schedule> {
        let mut schedule = match self.method.schedule.as_deref() {
            None | Some("sequential") => Schedule::sequential(),
            Some("parallel") => Schedule::parallel(),
            Some(other) => {
                return Err(CliError::Config(format!(
                    "unknown method.schedule {other:?} (expected sequential|parallel)"
                )))
            }
        };
        if let Some(d) = self.method.damping {
            schedule.damping = d;
        }
        if let Some(m) = self.method.max_sweeps {
            schedule.max_sweeps = m;
        }
        if let Some(t) = self.method.tolerance {
            schedule.tolerance = t;
        }
        schedule.record_kl = self.method.record_kl.unwrap_or(true);
        schedule.record_timings = self.method.timings.unwrap_or(false);
        Ok(schedule)
    }

    pub fn engine_config(&self) -> CliResult<EngineConfig> {
        let mut cfg = EngineConfig::default();
        match self.engine.mode.as_deref() {
            None | Some("auto") => cfg.mode = EngineMode::Auto,
            Some("grid1d") => cfg.mode = EngineMode::Grid1d,
            Some("gh") => cfg.mode = EngineMode::GhImportance,
            Some("mc") => cfg.mode = EngineMode::MonteCarlo,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "unknown engine.mode {other:?} (expected auto|grid1d|gh|mc)"
                )))
            }
        }
        if let Some(v) = self.engine.grid_nodes {
            cfg.grid_nodes = v;
        }
        if let Some(v) = self.engine.gh_order {
            cfg.gh_order = v;
        }
        if let Some(v) = self.engine.mc_draws {
            cfg.mc_draws = v;
        }
        if let Some(v) = self.engine.inflation {
            cfg.inflation = v;
        }
        if let Some(v) = self.engine.node_budget {
            cfg.node_budget = v;
        }
        cfg.mc_seed = self.engine.mc_seed.or(self.seed).unwrap_or(0);
        Ok(cfg)
    }

    pub fn initial_gaussian(&self) -> CliResult<Option<sdi_core::GaussianMoment>> {
        match (&self.method.init_mu, &self.method.init_sigma) {
            (None, None) => Ok(None),
            (Some(mu), Some(sigma)) => {
                let m = sdi_core::Matrix::from_rows(sigma).map_err(CliError::Run)?;
                Ok(Some(
                    sdi_core::GaussianMoment::new(mu.clone(), m).map_err(CliError::Run)?,
                ))
            }
            _ => Err(CliError::Config(
                "method.init_mu and method.init_sigma must be given together".into(),
            )),
        }
    }
}

/// Used by `Schedule`-independent paths that only need the kind.
pub fn schedule_kind_name(kind: &ScheduleKind) -> &'static str {
    match kind {
        ScheduleKind::Sequential => "sequential",
        ScheduleKind::Parallel => "parallel",
        ScheduleKind::Custom(_) => "custom",
    }
}

fn apply_override(value: &mut toml::Value, entry: &str) -> CliResult<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key.path=value, got {entry:?}")))?;
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("--set path {path:?} does not address a table"))
        })?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!("loop returns on the last path segment")
}
