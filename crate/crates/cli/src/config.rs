//! Run configuration: TOML file merged with command-line overrides.
//!
//! Flags always win over file values. The fully resolved configuration is
//! echoed verbatim into every output sidecar together with its hash, so any
//! artifact can be traced back to the exact run that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sticky_walk_core::{
    wetting_density, DensityModel, GridSchemeSpec, LatticeSpec, PotentialModel, SamplerConfig,
    StickyMeasureSpec,
};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `exponential`, `gaussian`, or `wetting`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: "exponential".to_string(),
            rates: Some(vec![1.0]),
            scales: None,
            d: None,
            side: None,
            potential: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub trunc: f64,
    pub nodes_per_axis: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection {
            trunc: 25.0,
            nodes_per_axis: 48,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h: f64,
    pub wall: f64,
    pub horizon: f64,
    pub max_events: u64,
    /// Start state as grid indices; all zeros when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<u32>>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            h: 0.05,
            wall: 25.0,
            horizon: 1e4,
            max_events: 2_000_000_000,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub grid_nodes: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            n_samples: 10_000,
            burn_in: 128,
            thin: 1,
            grid_nodes: 512,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub betas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            betas: vec![0.1, 0.5, 1.0, 2.0, 10.0],
        }
    }
}

/// On-disk shape: everything optional so flags can fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    beta: Option<f64>,
    seed: Option<u64>,
    model: Option<ModelConfig>,
    quadrature: Option<QuadratureSection>,
    grid: Option<GridSection>,
    sampler: Option<SamplerSection>,
    sweep: Option<SweepSection>,
}

/// Command-line overrides (all optional; they beat file values).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub paths: Option<usize>,
    pub horizon: Option<f64>,
    pub grid_h: Option<f64>,
    pub grid_wall: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub model: ModelConfig,
    pub beta: f64,
    pub seed: u64,
    pub paths: usize,
    pub quadrature: QuadratureSection,
    pub grid: GridSection,
    pub sampler: SamplerSection,
    pub sweep: SweepSection,
}

impl ResolvedConfig {
    pub fn load(path: Option<&Path>, over: &Overrides) -> Result<Self, CliError> {
        let raw: RawConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {p:?}: {e}")))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("config {p:?}: {e}")))?
            }
            None => RawConfig::default(),
        };
        let beta = over.beta.or(raw.beta).ok_or_else(|| {
            CliError::Validation(
                "missing required key `beta` (set it in the config file or pass --beta)"
                    .to_string(),
            )
        })?;
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(CliError::Validation(format!(
                "key `beta` must be a positive real, got {beta}"
            )));
        }
        let mut grid = raw.grid.unwrap_or_default();
        if let Some(h) = over.grid_h {
            grid.h = h;
        }
        if let Some(w) = over.grid_wall {
            grid.wall = w;
        }
        if let Some(t) = over.horizon {
            grid.horizon = t;
        }
        Ok(ResolvedConfig {
            model: raw.model.unwrap_or_default(),
            beta,
            seed: over.seed.or(raw.seed).unwrap_or(0),
            paths: over.paths.unwrap_or(1).max(1),
            quadrature: raw.quadrature.unwrap_or_default(),
            grid,
            sampler: raw.sampler.unwrap_or_default(),
            sweep: raw.sweep.unwrap_or_default(),
        })
    }

    pub fn density(&self) -> Result<DensityModel, CliError> {
        let m = &self.model;
        match m.kind.as_str() {
            "exponential" => {
                let rates = m.rates.as_deref().ok_or_else(|| {
                    CliError::Validation("model.kind = exponential needs `model.rates`".into())
                })?;
                Ok(DensityModel::exponential(rates)?)
            }
            "gaussian" => {
                let scales = m.scales.as_deref().ok_or_else(|| {
                    CliError::Validation("model.kind = gaussian needs `model.scales`".into())
                })?;
                Ok(DensityModel::gaussian(scales)?)
            }
            "wetting" => {
                let d = m.d.ok_or_else(|| {
                    CliError::Validation("model.kind = wetting needs `model.d`".into())
                })?;
                let side = m.side.ok_or_else(|| {
                    CliError::Validation("model.kind = wetting needs `model.side`".into())
                })?;
                let pot = PotentialModel::by_name(
                    m.potential.as_deref().unwrap_or("gaussian"),
                )?;
                Ok(wetting_density(LatticeSpec::new(d, side)?, pot))
            }
            other => Err(CliError::Validation(format!(
                "unknown model.kind `{other}` (exponential, gaussian, wetting)"
            ))),
        }
    }

    pub fn measure_spec(&self, n: usize) -> Result<StickyMeasureSpec, CliError> {
        Ok(StickyMeasureSpec::new(
            n,
            self.beta,
            self.quadrature.trunc,
            self.quadrature.nodes_per_axis,
        )?)
    }

    pub fn grid_scheme(&self) -> Result<GridSchemeSpec, CliError> {
        Ok(GridSchemeSpec::new(
            self.grid.h,
            self.grid.wall,
            self.grid.horizon,
            self.seed,
            self.grid.max_events,
        )?)
    }

    pub fn start_state(&self, n: usize) -> Result<Vec<u32>, CliError> {
        match &self.grid.x0 {
            Some(x0) if x0.len() == n => Ok(x0.clone()),
            Some(x0) => Err(CliError::Validation(format!(
                "grid.x0 has {} entries, model dimension is {n}",
                x0.len()
            ))),
            None => Ok(vec![0; n]),
        }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig, CliError> {
        Ok(SamplerConfig::new(
            self.sampler.n_samples,
            self.sampler.burn_in,
            self.sampler.thin,
            self.sampler.grid_nodes,
            self.seed,
        )?)
    }

    /// Hash of the resolved configuration (serialized form).
    pub fn hash(&self) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(body.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
