//! Run configuration: one TOML document per run, with every command-line
//! flag overriding its config counterpart. Validation errors name the
//! offending field so a bad run dies before any output file is created.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fdlm::kernel::{Grid, OuParams};
use fdlm::mcmc::{PriorSpec, SamplerConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub prior: PriorBlock,
    #[serde(default)]
    pub sampler: SamplerBlock,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Evaluation grid: either a size (uniform points on [0, 1]) or explicit
/// points. Exactly one must be given.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub size: Option<usize>,
    pub points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    /// Input CSV: `timestamp,value` readings for fit/filter/smooth, posterior
    /// draws for summarize.
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub log_transform: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Initial level, replicated across the grid.
    #[serde(default)]
    pub m0: f64,
    #[serde(default = "default_c0")]
    pub c0: FixedKernel,
    #[serde(default)]
    pub v: KernelBlock,
    #[serde(default)]
    pub w: KernelBlock,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            m0: 0.0,
            c0: default_c0(),
            v: KernelBlock::default(),
            w: KernelBlock::default(),
        }
    }
}

fn default_c0() -> FixedKernel {
    FixedKernel {
        sigma2: 2.0,
        beta: 1.0,
    }
}

/// A kernel that must be pinned down numerically (the initial-state prior).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedKernel {
    pub sigma2: f64,
    pub beta: f64,
}

impl FixedKernel {
    pub fn to_params(&self, field: &str) -> Result<OuParams> {
        OuParams::new(self.sigma2, self.beta)
            .with_context(|| format!("{field}: invalid kernel parameters"))
    }
}

/// A kernel parameter block: either fixed numbers or `estimate = true`,
/// never both, never neither.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub estimate: Option<bool>,
    pub sigma2: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSetting {
    Fixed(OuParams),
    Estimated,
}

impl KernelBlock {
    /// `field` is the config path (e.g. "model.v") used in error messages.
    pub fn resolve(&self, field: &str) -> Result<KernelSetting> {
        let fixed = self.sigma2.is_some() || self.beta.is_some();
        match (self.estimate.unwrap_or(false), fixed) {
            (true, true) => {
                bail!("{field}: give either estimate = true or fixed sigma2/beta, not both")
            }
            (true, false) => Ok(KernelSetting::Estimated),
            (false, true) => {
                let (Some(sigma2), Some(beta)) = (self.sigma2, self.beta) else {
                    bail!("{field}: a fixed kernel needs both sigma2 and beta");
                };
                let params = OuParams::new(sigma2, beta)
                    .with_context(|| format!("{field}: invalid kernel parameters"))?;
                Ok(KernelSetting::Fixed(params))
            }
            (false, false) => Ok(KernelSetting::Estimated),
        }
    }

    /// Resolve and insist on a fixed kernel (simulate/filter/smooth).
    pub fn require_fixed(&self, field: &str) -> Result<OuParams> {
        match self.resolve(field)? {
            KernelSetting::Fixed(p) => Ok(p),
            KernelSetting::Estimated => bail!(
                "{field}: this subcommand needs fixed sigma2 and beta (estimation happens in `fit`)"
            ),
        }
    }

    /// Resolve and insist on estimation (`fit` samples all four kernel
    /// hyperparameters; fixing a subset is not supported).
    pub fn require_estimated(&self, field: &str) -> Result<()> {
        match self.resolve(field)? {
            KernelSetting::Estimated => Ok(()),
            KernelSetting::Fixed(_) => bail!(
                "{field}: `fit` estimates this kernel; drop the fixed sigma2/beta (or set estimate = true)"
            ),
        }
    }
}

/// Mirrors the sampler settings, plus the number of independent chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerBlock {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub mh_step_v: f64,
    pub mh_step_w: f64,
    pub seed: u64,
    pub save_states: bool,
    pub chains: usize,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        let base = SamplerConfig::default();
        Self {
            iterations: base.iterations,
            burn_in: base.burn_in,
            thin: base.thin,
            mh_step_v: base.mh_step_v,
            mh_step_w: base.mh_step_w,
            seed: base.seed,
            save_states: base.save_states,
            chains: 1,
        }
    }
}

impl SamplerBlock {
    pub fn to_sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            mh_step_v: self.mh_step_v,
            mh_step_w: self.mh_step_w,
            seed: self.seed,
            save_states: self.save_states,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorBlock {
    pub ig_shape_v: f64,
    pub ig_rate_v: f64,
    pub ig_shape_w: f64,
    pub ig_rate_w: f64,
    pub logbeta_mean_v: f64,
    pub logbeta_sd_v: f64,
    pub logbeta_mean_w: f64,
    pub logbeta_sd_w: f64,
}

impl Default for PriorBlock {
    fn default() -> Self {
        let base = PriorSpec::default();
        Self {
            ig_shape_v: base.ig_shape_v,
            ig_rate_v: base.ig_rate_v,
            ig_shape_w: base.ig_shape_w,
            ig_rate_w: base.ig_rate_w,
            logbeta_mean_v: base.logbeta_mean_v,
            logbeta_sd_v: base.logbeta_sd_v,
            logbeta_mean_w: base.logbeta_mean_w,
            logbeta_sd_w: base.logbeta_sd_w,
        }
    }
}

impl PriorBlock {
    pub fn to_prior_spec(&self) -> PriorSpec {
        PriorSpec {
            ig_shape_v: self.ig_shape_v,
            ig_rate_v: self.ig_rate_v,
            ig_shape_w: self.ig_shape_w,
            ig_rate_w: self.ig_rate_w,
            logbeta_mean_v: self.logbeta_mean_v,
            logbeta_sd_v: self.logbeta_sd_v,
            logbeta_mean_w: self.logbeta_mean_w,
            logbeta_sd_w: self.logbeta_sd_w,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// Number of observed days (curves) to generate.
    pub days: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Write a posterior band file during `fit`.
    pub bands: bool,
    pub band_level: f64,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            bands: false,
            band_level: 0.9,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(cfg)
    }

    /// Apply command-line overrides; each flag shadows one config field.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        output: Option<PathBuf>,
        chains: Option<usize>,
        log_transform: bool,
    ) {
        if let Some(seed) = seed {
            self.sampler.seed = seed;
        }
        if let Some(dir) = output {
            self.output.dir = dir;
        }
        if let Some(chains) = chains {
            self.sampler.chains = chains;
        }
        if log_transform {
            self.data.log_transform = true;
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let Some(block) = &self.grid else {
            bail!("grid: section is required for this subcommand");
        };
        match (block.size, &block.points) {
            (Some(_), Some(_)) => bail!("grid: give either size or points, not both"),
            (Some(d), None) => Grid::uniform(d).context("grid.size"),
            (None, Some(points)) => Grid::new(points.clone()).context("grid.points"),
            (None, None) => bail!("grid: give either size or points"),
        }
    }

    pub fn input(&self) -> Result<&Path> {
        self.data
            .input
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("data.input: path is required for this subcommand"))
    }

    pub fn validate_common(&self) -> Result<()> {
        if self.sampler.chains == 0 {
            bail!("sampler.chains: must be at least 1");
        }
        if self.sampler.iterations <= self.sampler.burn_in {
            bail!(
                "sampler.iterations ({}) must exceed sampler.burn_in ({})",
                self.sampler.iterations,
                self.sampler.burn_in
            );
        }
        if self.sampler.thin == 0 {
            bail!("sampler.thin: must be at least 1");
        }
        if !(self.output.band_level > 0.0 && self.output.band_level < 1.0) {
            bail!(
                "output.band_level ({}) must lie strictly between 0 and 1",
                self.output.band_level
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fit_config_parses_with_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [grid]
            size = 24
            [data]
            input = "data.csv"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.grid().unwrap().len(), 24);
        assert_eq!(cfg.sampler.iterations, 10_000);
        assert_eq!(cfg.sampler.chains, 1);
        assert!(matches!(
            cfg.model.v.resolve("model.v").unwrap(),
            KernelSetting::Estimated
        ));
        assert!((cfg.prior.logbeta_sd_v - 10.0).abs() < 1e-12);
        assert!((cfg.model.c0.sigma2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_block_requires_exactly_one_mode() {
        let both = KernelBlock {
            estimate: Some(true),
            sigma2: Some(1.0),
            beta: Some(1.0),
        };
        assert!(both
            .resolve("model.v")
            .unwrap_err()
            .to_string()
            .contains("model.v"));

        let partial = KernelBlock {
            estimate: None,
            sigma2: Some(1.0),
            beta: None,
        };
        assert!(partial.resolve("model.v").is_err());

        let fixed = KernelBlock {
            estimate: None,
            sigma2: Some(0.5),
            beta: Some(2.0),
        };
        match fixed.resolve("model.v").unwrap() {
            KernelSetting::Fixed(p) => {
                assert!((p.sigma2 - 0.5).abs() < 1e-12);
                assert!((p.beta - 2.0).abs() < 1e-12);
            }
            KernelSetting::Estimated => panic!("expected fixed"),
        }
    }

    #[test]
    fn validation_names_the_offending_field() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [sampler]
            iterations = 100
            burn_in = 100
            thin = 1
            mh_step_v = 0.1
            mh_step_w = 0.1
            seed = 0
            save_states = false
            chains = 1
            "#,
        )
        .unwrap();
        let err = cfg.validate_common().unwrap_err().to_string();
        assert!(err.contains("sampler.iterations"), "{err}");
        assert!(err.contains("sampler.burn_in"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let res: std::result::Result<RunConfig, _> = toml::from_str(
            r#"
            [grid]
            size = 4
            typo_key = 1
            "#,
        );
        assert!(res.is_err());
    }

    #[test]
    fn overrides_shadow_config_fields() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(Some(9), Some(PathBuf::from("elsewhere")), Some(3), true);
        assert_eq!(cfg.sampler.seed, 9);
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.sampler.chains, 3);
        assert!(cfg.data.log_transform);
    }
}
