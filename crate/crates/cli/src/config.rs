use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use scopefe::pipeline::PipelineConfig;
use scopefe::tabular::{ColumnKind, LoadOptions, Task};

/// How the CSV is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub target: String,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default = "default_threshold")]
    pub categorical_threshold: usize,
    /// Per-column kind overrides.
    #[serde(default)]
    pub kinds: BTreeMap<String, ColumnKind>,
}

fn default_threshold() -> usize {
    20
}

/// The TOML file: a `[data]` table plus pipeline settings at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.data.target.is_empty() {
            bail!("data.target must name a column");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_options(&self) -> LoadOptions {
        let mut opts = LoadOptions::new(self.data.target.clone());
        opts.task = self.data.task;
        opts.categorical_threshold = self.data.categorical_threshold;
        opts.kinds = self.data.kinds.iter().map(|(k, v)| (k.clone(), *v)).collect();
        opts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scopefe::pipeline::ClusterMode;

    #[test]
    fn parses_nested_sections() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            top_k = 3
            [data]
            target = "y"
            kinds = { zip = "categorical" }
            [clustering]
            mode = "hard"
            tau = 4
            [reliability]
            n_sub = 5
            [booster]
            rounds = 50
            "#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline.seed, 7);
        assert_eq!(cfg.pipeline.top_k, 3);
        assert_eq!(cfg.pipeline.clustering.mode, ClusterMode::Hard);
        assert_eq!(cfg.pipeline.clustering.tau, 4);
        assert_eq!(cfg.pipeline.reliability.n_sub, 5);
        assert_eq!(cfg.pipeline.booster.rounds, 50);
        assert_eq!(cfg.pipeline.booster.min_leaf, 20);
        assert_eq!(cfg.data.kinds["zip"], ColumnKind::Categorical);
    }

    #[test]
    fn rejects_unknown_section_keys() {
        assert!(RunConfig::from_toml("[data]\ntarget = \"y\"\n[clustering]\ntua = 3\n").is_err());
        assert!(RunConfig::from_toml("seed = 1\n").is_err());
    }
}
