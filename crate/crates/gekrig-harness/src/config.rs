//! Experiment configuration and the three shipped study presets.

use gekrig::benchmarks::BenchmarkFunction;
use gekrig::error::{Error, Result};
use gekrig::models::{
    ModelKind, DEFAULT_FOTA_STEP, DEFAULT_GEKPLS_COMPONENTS, DEFAULT_KPLS_COMPONENTS,
};
use serde::{Deserialize, Serialize};

/// One benchmark cell: a function, a model, and the sampling budget.
///
/// `n` is the budget for value-only models; gradient-using models get `n/2`
/// samples to account for the cost of computing the gradient.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub function: String,
    pub model: String,
    pub n: usize,
    #[serde(default)]
    pub h: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_step")]
    pub fota_step: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_n_v")]
    pub n_v: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_step() -> f64 {
    DEFAULT_FOTA_STEP
}

fn default_trials() -> usize {
    10
}

fn default_n_v() -> usize {
    5000
}

impl ExperimentConfig {
    pub fn new(function: &str, model: &str, n: usize) -> Self {
        ExperimentConfig {
            function: function.into(),
            model: model.into(),
            n,
            h: None,
            m: None,
            fota_step: default_step(),
            trials: default_trials(),
            n_v: default_n_v(),
            base_seed: 0,
        }
    }

    pub fn with_h(mut self, h: usize) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_n_v(mut self, n_v: usize) -> Self {
        self.n_v = n_v;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.fota_step = step;
        self
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.model)
    }

    /// Samples actually drawn for this model (`n/2` for gradient models).
    pub fn model_samples(&self) -> Result<usize> {
        let kind = self.model_kind()?;
        if kind.uses_gradients() {
            if self.n % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "gradient model '{}' needs an even sample budget, got n={}",
                    self.model, self.n
                )));
            }
            Ok(self.n / 2)
        } else {
            Ok(self.n)
        }
    }

    /// Effective component count: explicit, or the per-model default.
    pub fn components(&self) -> Result<usize> {
        Ok(match (self.h, self.model_kind()?) {
            (Some(h), _) => h,
            (None, ModelKind::Kpls | ModelKind::Kplsk) => DEFAULT_KPLS_COMPONENTS,
            (None, ModelKind::GeKpls) => DEFAULT_GEKPLS_COMPONENTS,
            (None, _) => 0,
        })
    }

    pub fn extra_points(&self) -> usize {
        self.m.unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.n_v == 0 {
            return Err(Error::InvalidArgument(
                "validation sample count must be at least 1".into(),
            ));
        }
        BenchmarkFunction::<f64>::from_registry_id(&self.function)?;
        self.model_samples()?;
        Ok(())
    }
}

/// A named list of experiment cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub configs: Vec<ExperimentConfig>,
}

const STUDY1: &str = include_str!("../presets/study1.json");
const STUDY2: &str = include_str!("../presets/study2.json");
const STUDY3: &str = include_str!("../presets/study3.json");

/// Load a shipped preset by name. With `desk_scale`, cells with d > 20 or
/// n > 200 are dropped so the preset finishes in minutes.
pub fn preset_configs(name: &str, desk_scale: bool) -> Result<Vec<ExperimentConfig>> {
    let raw = match name {
        "study1" => STUDY1,
        "study2" => STUDY2,
        "study3" => STUDY3,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected study1, study2 or study3)"
            )))
        }
    };
    let preset: Preset =
        serde_json::from_str(raw).map_err(|e| Error::Io(format!("bad preset file: {e}")))?;
    let mut configs = preset.configs;
    if desk_scale {
        configs.retain(|c| {
            let d = BenchmarkFunction::<f64>::from_registry_id(&c.function)
                .map(|f| f.d)
                .unwrap_or(usize::MAX);
            d <= 20 && c.n <= 200
        });
    }
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}
