//! Run configuration: a flat JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sds_metric::SdsParams;

pub const DEFAULT_T_FINAL: f64 = 50.0;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_SEEDS: usize = 16;
pub const DEFAULT_OUT_DIR: &str = "trapcheck-out";
pub const MAX_TENSOR_RANK: usize = 4;
/// Upper bound on `T/dt`, to keep trajectory buffers bounded.
pub const MAX_STEPS: f64 = 1e7;
pub const MAX_SEEDS: usize = 10_000;
pub const MAX_DIMENSION: usize = 16;

fn default_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}

fn default_k() -> Vec<usize> {
    vec![1, 2]
}

fn default_t() -> f64 {
    DEFAULT_T_FINAL
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_seeds() -> usize {
    DEFAULT_SEEDS
}

fn default_out() -> String {
    DEFAULT_OUT_DIR.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub mass: f64,
    #[serde(alias = "Lambda", alias = "cosmological_constant")]
    pub lambda_cosmo: f64,
    #[serde(default = "default_eps")]
    pub eps_sweep: Vec<f64>,
    #[serde(default = "default_k")]
    pub k_sweep: Vec<usize>,
    #[serde(default = "default_t")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_out")]
    pub out_dir: String,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Defaults for everything but the physical parameters.
    pub fn with_params(n: usize, mass: f64, lambda_cosmo: f64) -> Self {
        Self {
            n,
            mass,
            lambda_cosmo,
            eps_sweep: default_eps(),
            k_sweep: default_k(),
            t_final: DEFAULT_T_FINAL,
            dt: DEFAULT_DT,
            seeds: DEFAULT_SEEDS,
            out_dir: default_out(),
            seed: 0,
        }
    }

    pub fn params(&self) -> Result<SdsParams> {
        SdsParams::new(self.n, self.mass, self.lambda_cosmo)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.n < 4 || self.n > MAX_DIMENSION {
            return bad(format!("n must be in 4..={MAX_DIMENSION}, got {}", self.n));
        }
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return bad(format!("mass must be positive and finite, got {}", self.mass));
        }
        if !(self.lambda_cosmo > 0.0) || !self.lambda_cosmo.is_finite() {
            return bad(format!("cosmological constant must be positive and finite, got {}", self.lambda_cosmo));
        }
        let p = self.params().map_err(|e| Error::Validation(e.to_string()))?;
        let v = p.validate();
        if !v.valid {
            return bad(format!(
                "nondegeneracy fails: M²λ^(n−3) = {:e} is not below {:e}",
                v.lhs, v.rhs
            ));
        }
        if self.eps_sweep.is_empty() {
            return bad("eps_sweep must not be empty".into());
        }
        if let Some(e) = self.eps_sweep.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return bad(format!("eps values must be positive and finite, got {e}"));
        }
        if self.k_sweep.is_empty() {
            return bad("k_sweep must not be empty".into());
        }
        if let Some(k) = self.k_sweep.iter().find(|k| **k == 0 || **k > MAX_TENSOR_RANK) {
            return bad(format!("tensor ranks must be in 1..={MAX_TENSOR_RANK}, got {k}"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if self.t_final / self.dt > MAX_STEPS {
            return bad(format!("t_final/dt exceeds {MAX_STEPS:e} steps"));
        }
        if self.seeds > MAX_SEEDS {
            return bad(format!("seeds must be at most {MAX_SEEDS}"));
        }
        if self.out_dir.is_empty() {
            return bad("out_dir must not be empty".into());
        }
        Ok(())
    }

    /// Canonical pretty-printed JSON; parses back to an equal value.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Parses and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}
