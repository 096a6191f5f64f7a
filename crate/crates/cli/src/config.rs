//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jkext::families::Family;
use jkext::kernels::Kernel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    EfficiencyCurve,
    VarianceDrop,
    Clt,
    MedianStudy,
    Conjecture16,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::EfficiencyCurve => "efficiency-curve",
            ExperimentKind::VarianceDrop => "variance-drop",
            ExperimentKind::Clt => "clt",
            ExperimentKind::MedianStudy => "median-study",
            ExperimentKind::Conjecture16 => "conjecture16",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// A flat TOML document. Unknown keys are rejected.
///
/// ```toml
/// kind = "clt"
/// family = "normal-mean"
/// thetas = [0.0]
/// kernel = "mean"
/// n = [200]
/// replications = 5000
/// seed = 7
/// output = "clt.csv"
/// format = "csv"
/// ```
///
/// For `conjecture16` the `n` grid lists the half-sizes `m` to check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn family(&self) -> Result<Family> {
        let name = self.family.as_deref().context("config needs a family")?;
        Ok(Family::by_name(name)?)
    }

    /// Resolves the kernel label; `median` (the plain sample median) is
    /// accepted where an estimator rather than a kernel is needed.
    pub fn kernel(&self) -> Result<Kernel> {
        let label = self.kernel.as_deref().context("config needs a kernel")?;
        Ok(Kernel::from_label(label)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if self.kind == ExperimentKind::Conjecture16 {
            if self.n.contains(&0) {
                bail!("conjecture16 half-sizes must be positive");
            }
            return Ok(());
        }
        let family = self.family()?;
        if self.thetas.is_empty() {
            bail!("thetas must not be empty");
        }
        for &t in &self.thetas {
            family.check_theta(t)?;
        }
        let estimator_median = self.kind == ExperimentKind::MedianStudy
            || (self.kind == ExperimentKind::VarianceDrop && self.kernel.as_deref() == Some("median"));
        if !estimator_median {
            self.kernel()?;
        }
        match self.kind {
            ExperimentKind::Clt => {
                if self.replications < 100 {
                    bail!("clt needs at least 100 replications");
                }
                if self.n.is_empty() {
                    bail!("clt needs an n grid");
                }
            }
            ExperimentKind::MedianStudy => {
                if self.n.is_empty() || self.n.iter().any(|&n| n == 0 || n % 2 == 1) {
                    bail!("median-study needs a grid of positive even sample sizes");
                }
            }
            ExperimentKind::VarianceDrop
                if self.n.is_empty() => {
                    bail!("variance-drop needs an n grid");
                }
            _ => {}
        }
        Ok(())
    }
}
