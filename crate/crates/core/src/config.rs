//! Line-oriented `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelParams, VolSchedule};

pub const DEFAULT_GRID_STEPS: usize = 10_000;
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;

const KEYS: [&str; 15] = [
    "gamma1", "gamma2", "rho", "alpha", "beta", "lambda", "T", "sigma", "x0_mean", "x0_var", "y0", "c0",
    "grid_steps", "n_paths", "seed",
];

/// Model parameters plus grid, ensemble size and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub grid_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(params: ModelParams) -> Self {
        RunConfig { params, grid_steps: DEFAULT_GRID_STEPS, n_paths: DEFAULT_PATHS, seed: DEFAULT_SEED }
    }

    /// Parses a configuration. `#` starts a comment. The model keys
    /// `gamma1 gamma2 rho alpha beta lambda T sigma x0_mean` are required;
    /// `x0_var y0 c0` default to 0 and the run keys to their defaults.
    /// The result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: Vec<Option<(usize, String)>> = vec![None; KEYS.len()];
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let slot = KEYS.iter().position(|k| *k == key).ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("unknown key `{key}`"),
            })?;
            if values[slot].is_some() {
                return Err(Error::Config { line: line_no, message: format!("duplicate key `{key}`") });
            }
            values[slot] = Some((line_no, value.trim().to_string()));
        }

        let get = |key: &str| -> Option<&(usize, String)> {
            values[KEYS.iter().position(|k| *k == key).unwrap()].as_ref()
        };
        let float = |key: &str, default: Option<f64>| -> Result<f64> {
            match get(key) {
                Some((line, v)) => v.parse::<f64>().map_err(|_| Error::Config {
                    line: *line,
                    message: format!("`{key}`: cannot parse `{v}` as a number"),
                }),
                None => default.ok_or_else(|| Error::Config { line: 0, message: format!("missing key `{key}`") }),
            }
        };
        let integer = |key: &str, default: u64| -> Result<u64> {
            match get(key) {
                Some((line, v)) => v.parse::<u64>().map_err(|_| Error::Config {
                    line: *line,
                    message: format!("`{key}`: cannot parse `{v}` as a nonnegative integer"),
                }),
                None => Ok(default),
            }
        };
        let sigma = match get("sigma") {
            Some((line, v)) => v.parse::<VolSchedule>().map_err(|e| Error::Config { line: *line, message: e.to_string() })?,
            None => return Err(Error::Config { line: 0, message: "missing key `sigma`".into() }),
        };

        let params = ModelParams {
            gamma1: float("gamma1", None)?,
            gamma2: float("gamma2", None)?,
            rho: float("rho", None)?,
            alpha: float("alpha", None)?,
            beta: float("beta", None)?,
            lambda: float("lambda", None)?,
            horizon: float("T", None)?,
            sigma,
            x0_mean: float("x0_mean", None)?,
            x0_var: float("x0_var", Some(0.0))?,
            y0: float("y0", Some(0.0))?,
            c0: float("c0", Some(0.0))?,
        }
        .validate()?;

        let grid_steps = integer("grid_steps", DEFAULT_GRID_STEPS as u64)? as usize;
        if grid_steps < 2 {
            return Err(Error::Config { line: get("grid_steps").map_or(0, |v| v.0), message: "grid_steps must be at least 2".into() });
        }
        let n_paths = integer("n_paths", DEFAULT_PATHS as u64)? as usize;
        if n_paths == 0 {
            return Err(Error::Config { line: get("n_paths").map_or(0, |v| v.0), message: "n_paths must be positive".into() });
        }
        let seed = integer("seed", DEFAULT_SEED)?;
        Ok(RunConfig { params, grid_steps, n_paths, seed })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Renders the configuration in the format accepted by [`RunConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let pairs: [(&str, String); 15] = [
            ("gamma1", p.gamma1.to_string()),
            ("gamma2", p.gamma2.to_string()),
            ("rho", p.rho.to_string()),
            ("alpha", p.alpha.to_string()),
            ("beta", p.beta.to_string()),
            ("lambda", p.lambda.to_string()),
            ("T", p.horizon.to_string()),
            ("sigma", p.sigma.to_string()),
            ("x0_mean", p.x0_mean.to_string()),
            ("x0_var", p.x0_var.to_string()),
            ("y0", p.y0.to_string()),
            ("c0", p.c0.to_string()),
            ("grid_steps", self.grid_steps.to_string()),
            ("n_paths", self.n_paths.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
