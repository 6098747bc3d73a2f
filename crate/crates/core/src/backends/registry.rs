//! Named backend stacks, loaded from a JSON config file:
//!
//! ```json
//! [{"stack_id": "reference",
//!   "segmenter": {"kind": "reference", "quant_levels": 4, "min_area_fraction": 0.001},
//!   "scorer":    {"kind": "reference"},
//!   "inpainter": {"kind": "remote", "endpoint": "http://127.0.0.1:9003", "timeout_secs": 120}}]
//! ```

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    BackendError, BackendStack, Inpainter, ReferenceInpainter, ReferenceScorer, ReferenceSegmenter,
    RemoteInpainter, RemoteScorer, RemoteSegmenter, Scorer, Segmenter, SegmenterParams,
    StackDescription,
};

fn default_timeout_secs() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegmenterConfig {
    Reference {
        #[serde(flatten, default)]
        params: Option<SegmenterParams>,
    },
    Remote {
        #[serde(flatten)]
        remote: RemoteConfig,
        #[serde(default)]
        params: serde_json::Value,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RoleConfig {
    Reference,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub stack_id: String,
    pub segmenter: SegmenterConfig,
    pub scorer: RoleConfig,
    pub inpainter: RoleConfig,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate stack_id {0:?}")]
    DuplicateStack(String),
    #[error("stack {stack_id:?}: {source}")]
    Backend {
        stack_id: String,
        #[source]
        source: BackendError,
    },
    #[error("stack {stack_id:?}: invalid timeout {timeout}")]
    BadTimeout { stack_id: String, timeout: f64 },
    #[error("registry config: {0}")]
    Config(String),
}

/// Stacks keyed by `stack_id`, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct BackendRegistry {
    stacks: Vec<BackendStack>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding only the `reference` stack.
    pub fn with_reference() -> Self {
        let mut r = Self::new();
        r.insert(BackendStack::reference())
            .expect("empty registry has no duplicates");
        r
    }

    pub fn insert(&mut self, stack: BackendStack) -> Result<(), RegistryError> {
        if self.get(&stack.stack_id).is_some() {
            return Err(RegistryError::DuplicateStack(stack.stack_id));
        }
        self.stacks.push(stack);
        Ok(())
    }

    pub fn get(&self, stack_id: &str) -> Option<&BackendStack> {
        self.stacks.iter().find(|s| s.stack_id == stack_id)
    }

    pub fn stack_ids(&self) -> impl Iterator<Item = &str> {
        self.stacks.iter().map(|s| s.stack_id.as_str())
    }

    pub fn describe(&self) -> Vec<StackDescription> {
        self.stacks.iter().map(BackendStack::describe).collect()
    }

    /// Builds every stack, probing remote endpoints as it goes.
    pub fn from_configs(configs: &[StackConfig]) -> Result<Self, RegistryError> {
        let mut reg = Self::new();
        for cfg in configs {
            reg.insert(build_stack(cfg)?)?;
        }
        Ok(reg)
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let configs: Vec<StackConfig> =
            serde_json::from_str(text).map_err(|e| RegistryError::Config(e.to_string()))?;
        Self::from_configs(&configs)
    }

    pub fn from_file(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegistryError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn timeout(stack_id: &str, remote: &RemoteConfig) -> Result<Duration, RegistryError> {
    Duration::try_from_secs_f64(remote.timeout_secs)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| RegistryError::BadTimeout {
            stack_id: stack_id.to_string(),
            timeout: remote.timeout_secs,
        })
}

fn build_stack(cfg: &StackConfig) -> Result<BackendStack, RegistryError> {
    let id = cfg.stack_id.as_str();
    let wrap = |source| RegistryError::Backend {
        stack_id: id.to_string(),
        source,
    };
    let segmenter: Arc<dyn Segmenter> = match &cfg.segmenter {
        SegmenterConfig::Reference { params } => {
            Arc::new(ReferenceSegmenter::try_new(params.unwrap_or_default()).map_err(wrap)?)
        }
        SegmenterConfig::Remote { remote, params } => Arc::new(
            RemoteSegmenter::connect(&remote.endpoint, timeout(id, remote)?, params.clone())
                .map_err(wrap)?,
        ),
    };
    let scorer: Arc<dyn Scorer> = match &cfg.scorer {
        RoleConfig::Reference => Arc::new(ReferenceScorer::new()),
        RoleConfig::Remote(remote) => {
            Arc::new(RemoteScorer::connect(&remote.endpoint, timeout(id, remote)?).map_err(wrap)?)
        }
    };
    let inpainter: Arc<dyn Inpainter> = match &cfg.inpainter {
        RoleConfig::Reference => Arc::new(ReferenceInpainter::new()),
        RoleConfig::Remote(remote) => {
            Arc::new(RemoteInpainter::connect(&remote.endpoint, timeout(id, remote)?).map_err(wrap)?)
        }
    };
    Ok(BackendStack::new(id, segmenter, scorer, inpainter))
}
