//! TOML run configuration: a run config plus a seed fully determines every
//! output byte (the reproducibility contract). CLI flags override the
//! corresponding keys; the environment variable `DECOUPLER_SEED` supplies a
//! seed default.

use crate::nonlinearity::Nonlinearity;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Read(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub decouple: DecoupleSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub spde: SpdeSection,
    #[serde(default)]
    pub multipoint: MultipointSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub family: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub k: Option<f64>,
    /// Tabulated nodes/values for family = "tabulated".
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<Nonlinearity, ConfigError> {
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| {
                ConfigError::Invalid(format!("family {} requires `{what}`", self.family))
            })
        };
        Ok(match self.family.as_str() {
            "constant" => Nonlinearity::constant_scalar(need(self.c, "c")?),
            "linear" => Nonlinearity::linear(need(self.beta, "beta")?),
            "add_mult" => {
                Nonlinearity::add_mult(need(self.alpha, "alpha")?, need(self.beta, "beta")?)
            }
            "fisher_wright" => Nonlinearity::fisher_wright(need(self.alpha, "alpha")?),
            "feller" => Nonlinearity::feller(),
            "relu" => Nonlinearity::relu(need(self.k, "k")?),
            "tabulated" => {
                let b = self
                    .b
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("tabulated requires `b`".into()))?;
                let v = self
                    .values
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("tabulated requires `values`".into()))?;
                if b.len() != v.len() || b.len() < 2 {
                    return Err(ConfigError::Invalid(
                        "tabulated `b` and `values` must match and have >= 2 nodes".into(),
                    ));
                }
                Nonlinearity::tabulated(b, v, "tabulated")
            }
            other => {
                return Err(ConfigError::Invalid(format!("unknown family `{other}`")))
            }
        })
    }

    /// Closed-form catalog entry for this family, when one exists.
    pub fn oracle(&self) -> Option<crate::decoupling::oracle::OracleJ> {
        use crate::decoupling::oracle::OracleJ;
        match self.family.as_str() {
            "linear" => Some(OracleJ::Linear { beta: self.beta? }),
            "add_mult" => Some(OracleJ::AddMult {
                alpha: self.alpha?,
                beta: self.beta?,
            }),
            "fisher_wright" => Some(OracleJ::FisherWright { alpha: self.alpha? }),
            "feller" => Some(OracleJ::Feller),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub blowup_factor: f64,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            paths: 100_000,
            steps: 200,
            seed: 0,
            blowup_factor: 1e6,
        }
    }
}

impl McSection {
    pub fn to_mc(&self) -> crate::sde::McConfig {
        crate::sde::McConfig {
            n_paths: self.paths,
            steps: self.steps,
            seed: self.seed,
            blowup_factor: self.blowup_factor,
            store_paths: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoupleSection {
    pub q0: f64,
    pub n_q: usize,
    pub b_max: f64,
    pub n_b: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Optional horizon extension after the base solve.
    pub extend_by: f64,
}

impl Default for DecoupleSection {
    fn default() -> Self {
        DecoupleSection {
            q0: 1.0,
            n_q: 11,
            b_max: 8.0,
            n_b: 65,
            tol: 2e-2,
            max_iters: 24,
            extend_by: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub b_min: f64,
    pub b_max: f64,
    pub h_b: f64,
    pub q0: f64,
    pub cfl: f64,
    /// 0 ties the snapshot spacing to h_b.
    pub n_snapshots: usize,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            b_min: -6.0,
            b_max: 6.0,
            h_b: 1.0 / 64.0,
            q0: 1.0,
            cfl: 0.4,
            n_snapshots: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpdeSection {
    pub rho_list: Vec<f64>,
    pub grid_n: usize,
    pub t: f64,
    pub v0: f64,
    pub n_samples: usize,
    pub separation_factor: f64,
    pub max_probes_per_axis: usize,
    /// J_{sigma,rho} sweep settings (`oracle` target required).
    pub j_rho_q: f64,
    pub j_rho_a: f64,
    pub j_rho_replicas: usize,
}

impl Default for SpdeSection {
    fn default() -> Self {
        SpdeSection {
            rho_list: vec![1e-2, 3e-3, 1e-3],
            grid_n: 512,
            t: 1.0,
            v0: 1.0,
            n_samples: 1000,
            separation_factor: 4.0,
            max_probes_per_axis: 3,
            j_rho_q: 0.5,
            j_rho_a: 1.0,
            j_rho_replicas: 384,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultipointSection {
    pub rho: f64,
    pub grid_n: usize,
    pub replicas: usize,
    pub t: f64,
    pub r_smooth: f64,
    /// Probe pair separation d = rho^exponent.
    pub distance_exponent: f64,
    pub psi_samples: usize,
}

impl Default for MultipointSection {
    fn default() -> Self {
        MultipointSection {
            rho: 3e-3,
            grid_n: 256,
            replicas: 256,
            t: 0.5,
            r_smooth: 0.0,
            distance_exponent: 0.25,
            psi_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}
