use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use gcpinn_core::method::{MappingOptions, Method};
use gcpinn_core::pde::{BenchmarkName, PdeBenchmark};
use gcpinn_core::training::{TrainingSchedule, DEFAULT_SEED};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Scaled budget, one seed.
    #[default]
    Desk,
    /// Full budget, three seeds.
    Full,
}

impl Preset {
    pub fn schedule(self, method: Method) -> TrainingSchedule {
        match self {
            Preset::Desk => TrainingSchedule::desk(method.strategy()),
            Preset::Full => TrainingSchedule::full(method.strategy()),
        }
    }

    pub fn seeds(self) -> Vec<u64> {
        match self {
            Preset::Desk => vec![DEFAULT_SEED],
            Preset::Full => vec![DEFAULT_SEED, DEFAULT_SEED + 1, DEFAULT_SEED + 2],
        }
    }
}

/// Where unset `alpha` / `beta` values come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MappingDefaults {
    /// alpha 20, beta 10 on every benchmark.
    #[default]
    Baseline,
    /// Per-benchmark sensitivity-sweep optima.
    Tuned,
}

impl MappingDefaults {
    pub fn options(self, benchmark: BenchmarkName) -> MappingOptions {
        match self {
            MappingDefaults::Baseline => MappingOptions::default(),
            MappingDefaults::Tuned => MappingOptions::tuned(benchmark),
        }
    }
}

/// Mapping fields as written; unset ones are filled from the defaults set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub train_mapping: bool,
}

/// Run configuration as read from JSON. Every field may be overridden on
/// the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: Option<BenchmarkName>,
    pub method: Option<Method>,
    pub mapping: MappingConfig,
    pub mapping_defaults: MappingDefaults,
    pub preset: Preset,
    pub adam_steps: Option<usize>,
    pub lbfgs_steps: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn resolve(&self) -> anyhow::Result<ResolvedConfig> {
        let Some(benchmark) = self.benchmark else {
            bail!("no benchmark given (use --benchmark or the config file)");
        };
        let Some(method) = self.method else {
            bail!("no method given (use --method or the config file)");
        };
        let base = self.mapping_defaults.options(benchmark);
        let mapping = MappingOptions {
            alpha: self.mapping.alpha.unwrap_or(base.alpha),
            beta: self.mapping.beta.unwrap_or(base.beta),
            train_mapping: self.mapping.train_mapping,
        };
        if !(mapping.alpha > 0.0) || !(mapping.beta > 0.0) {
            bail!("alpha and beta must be positive");
        }
        let mut schedule = self.preset.schedule(method);
        if let Some(n) = self.adam_steps {
            schedule.adam.steps = n;
        }
        if let Some(n) = self.lbfgs_steps {
            schedule.lbfgs.steps = n;
        }
        let seeds = self.seeds.clone().unwrap_or_else(|| self.preset.seeds());
        if seeds.is_empty() {
            bail!("seed list is empty");
        }
        let bench = PdeBenchmark::new(benchmark);
        let parameter_count = method.parameter_count(&bench, &mapping)?;
        Ok(ResolvedConfig {
            benchmark,
            method,
            mapping,
            mapping_defaults: self.mapping_defaults,
            preset: self.preset,
            schedule,
            seeds,
            parameter_count,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

/// Everything a run depends on, written into every artifact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub benchmark: BenchmarkName,
    pub method: Method,
    pub mapping: MappingOptions,
    pub mapping_defaults: MappingDefaults,
    pub preset: Preset,
    pub schedule: TrainingSchedule,
    pub seeds: Vec<u64>,
    pub parameter_count: usize,
    pub out: PathBuf,
}

impl ResolvedConfig {
    pub fn bench(&self) -> PdeBenchmark {
        PdeBenchmark::new(self.benchmark)
    }

    /// Schedule for one seed.
    pub fn schedule_for(&self, seed: u64) -> TrainingSchedule {
        TrainingSchedule {
            seed,
            ..self.schedule.clone()
        }
    }
}

/// Flags shared by the training commands.
#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub benchmark: Option<BenchmarkName>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Radial compression strength.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Local stretch strength.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Source of alpha / beta when not given explicitly.
    #[arg(long, value_enum)]
    pub mapping_defaults: Option<MappingDefaults>,
    /// Train the mapping parameters along with the network.
    #[arg(long)]
    pub train_mapping: bool,
    /// Single seed; replaces the preset's seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub adam_epochs: Option<usize>,
    #[arg(long)]
    pub lbfgs_steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.benchmark.is_some() {
            cfg.benchmark = self.benchmark;
        }
        if self.method.is_some() {
            cfg.method = self.method;
        }
        if self.alpha.is_some() {
            cfg.mapping.alpha = self.alpha;
        }
        if self.beta.is_some() {
            cfg.mapping.beta = self.beta;
        }
        if let Some(d) = self.mapping_defaults {
            cfg.mapping_defaults = d;
        }
        if self.train_mapping {
            cfg.mapping.train_mapping = true;
        }
        if let Some(p) = self.preset {
            cfg.preset = p;
        }
        if let Some(s) = self.seed {
            cfg.seeds = Some(vec![s]);
        }
        if self.adam_epochs.is_some() {
            cfg.adam_steps = self.adam_epochs;
        }
        if self.lbfgs_steps.is_some() {
            cfg.lbfgs_steps = self.lbfgs_steps;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig {
            benchmark: Some(BenchmarkName::Helmholtz1d),
            method: Some(Method::GcTorus),
            mapping: MappingConfig {
                beta: Some(12.0),
                ..MappingConfig::default()
            },
            mapping_defaults: MappingDefaults::Tuned,
            preset: Preset::Full,
            adam_steps: Some(10),
            lbfgs_steps: None,
            seeds: Some(vec![1, 2]),
            out: Some(PathBuf::from("x")),
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"benchmark":"burgers1d","epochs":3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"mapping":{"gamma":1}}"#).is_err());
    }

    #[test]
    fn presets_resolve() {
        let cfg = RunConfig {
            benchmark: Some(BenchmarkName::Burgers1d),
            method: Some(Method::Pinn),
            ..RunConfig::default()
        };
        let r = cfg.resolve().unwrap();
        assert_eq!(r.seeds, vec![DEFAULT_SEED]);
        assert_eq!(r.schedule.adam.steps, 2000);
        let full = RunConfig {
            preset: Preset::Full,
            ..cfg
        }
        .resolve()
        .unwrap();
        assert_eq!(full.seeds.len(), 3);
        assert_eq!(full.schedule.lbfgs.points, 15_000);
    }

    #[test]
    fn missing_method_is_an_error() {
        let cfg = RunConfig {
            benchmark: Some(BenchmarkName::Burgers1d),
            ..RunConfig::default()
        };
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn tuned_defaults_fill_only_unset_values() {
        let cfg = RunConfig {
            benchmark: Some(BenchmarkName::Convdiff1d),
            method: Some(Method::GcLocal),
            mapping_defaults: MappingDefaults::Tuned,
            ..RunConfig::default()
        };
        assert_eq!(cfg.resolve().unwrap().mapping.beta, 50.0);
        let explicit = RunConfig {
            mapping: MappingConfig {
                beta: Some(7.0),
                ..MappingConfig::default()
            },
            ..cfg.clone()
        };
        assert_eq!(explicit.resolve().unwrap().mapping.beta, 7.0);
        let baseline = RunConfig {
            mapping_defaults: MappingDefaults::Baseline,
            ..cfg
        };
        assert_eq!(baseline.resolve().unwrap().mapping.beta, 10.0);
    }
}
