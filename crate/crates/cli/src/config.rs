//! Run configuration: one JSON document, with command-line flags layered on
//! top.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use gpp_core::gp::GpParams;
use gpp_core::lifting::{ScenarioConfig, SelectionPolicy};
use gpp_core::{Grid, SpectralProfileSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Invalid or unreadable configuration. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lower: f64,
    pub upper: f64,
    /// Sites per axis.
    pub sites: usize,
    pub dim: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
            sites: 32,
            dim: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub kind: String,
    pub omega0: f64,
    pub bandwidth: f64,
    pub corr_length: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            kind: "gaussian_moving_max".into(),
            omega0: 1.0,
            bandwidth: gpp_core::spectral::DEFAULT_BANDWIDTH,
            corr_length: gpp_core::spectral::DEFAULT_CORR_LENGTH,
        }
    }
}

/// Constant location, scale and index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    /// Condition on `sup W > r omega0` when set.
    pub r: Option<f64>,
    /// `stability` or `rejection`.
    pub method: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            r: None,
            method: "stability".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    /// JSON list of queries; the built-in five-query battery when absent.
    pub input: Option<PathBuf>,
    pub n_mc: usize,
    pub n_oracle: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            input: None,
            n_mc: 20_000,
            n_oracle: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxStableConfig {
    pub n: usize,
    pub truncation: f64,
    /// Level of the domain-of-attraction check.
    pub t: f64,
    pub n_rep: usize,
    pub m: usize,
}

impl Default for MaxStableConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            truncation: 1e-4,
            t: 1000.0,
            n_rep: 20_000,
            m: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    /// Long-format CSV `sample_id,site_index,value`.
    pub input: Option<PathBuf>,
    /// Defaults to `n / 20`, at least 2.
    pub k: Option<usize>,
    pub t0: f64,
    pub policy: SelectionPolicy,
    /// Moving-average window applied to the estimated norming.
    pub smooth: Option<usize>,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            input: None,
            k: None,
            t0: 10.0,
            policy: SelectionPolicy::SupAnywhere,
            smooth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub quick: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    pub spectral: SpectralConfig,
    pub gp: Option<GpConfig>,
    pub simulate: SimulateConfig,
    pub df_battery: BatteryConfig,
    pub maxstable: MaxStableConfig,
    pub lift: LiftConfig,
    pub scenario43: ScenarioConfig,
    pub verify: VerifyConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        self.seed
            .ok_or_else(|| config_err("a seed is required (--seed or \"seed\" in the config file)"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("gpp-out"))
    }

    pub fn grid(&self) -> anyhow::Result<Arc<Grid>> {
        let g = &self.grid;
        if g.sites < 2 {
            return Err(config_err(format!(
                "need at least 2 sites, got {}",
                g.sites
            )));
        }
        let grid = if g.dim <= 1 {
            Grid::uniform_1d(g.lower, g.upper, g.sites)
        } else {
            Grid::regular(&vec![g.lower; g.dim], &vec![g.upper; g.dim], g.sites)
        };
        Ok(Arc::new(grid.map_err(config_err)?))
    }

    pub fn spec(&self) -> anyhow::Result<SpectralProfileSpec> {
        let s = &self.spectral;
        SpectralProfileSpec::from_name(&s.kind, s.omega0, s.bandwidth, s.corr_length)
            .map_err(config_err)
    }

    pub fn gp_params(&self, grid: &Arc<Grid>) -> anyhow::Result<Option<GpParams>> {
        self.gp
            .as_ref()
            .map(|g| {
                GpParams::uniform(grid, g.mu, g.sigma, g.gamma, self.spectral.omega0)
                    .map_err(config_err)
            })
            .transpose()
    }

    /// SHA-256 of the resolved configuration in its canonical JSON form,
    /// output directory excluded.
    pub fn hash(&self) -> String {
        let keyed = RunConfig {
            out: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&keyed).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `sup_anywhere`, or `sites:0,4,9`.
pub fn parse_policy(s: &str) -> Result<SelectionPolicy, String> {
    match s {
        "sup_anywhere" | "sup-anywhere" => Ok(SelectionPolicy::SupAnywhere),
        _ => {
            let list = s
                .strip_prefix("sites:")
                .ok_or(format!("unknown policy {s:?}"))?;
            list.split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(SelectionPolicy::Sites)
        }
    }
}
