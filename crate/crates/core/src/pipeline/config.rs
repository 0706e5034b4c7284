//! Compression configuration, read from JSON.
//!
//! ```json
//! {
//!   "prune": {"fraction": 0.3, "scope": "per-tensor"},
//!   "svd": {"policy": {"type": "fixed", "k": 8}, "mode": "table1"},
//!   "store_factored": true,
//!   "selector": {"roles": ["conv-weight"]},
//!   "min_elements": 512
//! }
//! ```
//!
//! At least one of `prune`/`svd` must be present. `store_factored` defaults
//! to true whenever `svd` is configured; storing U/S/V is what realizes the
//! parameter savings, while the dense reconstruction keeps the size
//! unchanged for accuracy-only experiments. Layers smaller than
//! `min_elements` (default 512) are excluded from factorization, which can
//! grow tiny layers.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::lowrank::{RankPolicy, ReshapeMode};
use crate::prune::PruneScope;
use crate::weightstore::Selector;

pub const DEFAULT_MIN_ELEMENTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSettings {
    pub fraction: f64,
    #[serde(default = "default_scope")]
    pub scope: PruneScope,
}

fn default_scope() -> PruneScope {
    PruneScope::PerTensor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdSettings {
    pub policy: RankPolicy,
    #[serde(default)]
    pub mode: ReshapeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune: Option<PruneSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svd: Option<SvdSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store_factored: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_elements: Option<usize>,
}

/// Config with every default applied and every constraint checked.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedConfig {
    pub prune: Option<PruneSettings>,
    pub svd: Option<SvdSettings>,
    pub store_factored: bool,
    pub selector: Selector,
    pub min_elements: usize,
}

impl CompressionConfig {
    /// A prune-only config at the given fraction, per-tensor scope.
    pub fn prune_only(fraction: f64) -> Self {
        CompressionConfig {
            prune: Some(PruneSettings {
                fraction,
                scope: PruneScope::PerTensor,
            }),
            svd: None,
            store_factored: None,
            selector: None,
            min_elements: None,
        }
    }

    /// An SVD-only config with the given policy, table1 reshape.
    pub fn svd_only(policy: RankPolicy) -> Self {
        CompressionConfig {
            prune: None,
            svd: Some(SvdSettings {
                policy,
                mode: ReshapeMode::Table1,
            }),
            store_factored: None,
            selector: None,
            min_elements: None,
        }
    }

    /// Label in the style of the evaluation tables: which stages ran.
    pub fn label(&self) -> String {
        match (&self.prune, &self.svd) {
            (Some(_), Some(_)) => "weight pruning + svd".to_string(),
            (Some(_), None) => "weight pruning only".to_string(),
            (None, Some(_)) => "svd only".to_string(),
            (None, None) => "no-op".to_string(),
        }
    }

    pub(crate) fn validate(&self) -> Result<ResolvedConfig, PipelineError> {
        if self.prune.is_none() && self.svd.is_none() {
            return Err(PipelineError::InvalidConfig(
                "at least one of prune/svd must be configured".into(),
            ));
        }
        if let Some(p) = &self.prune {
            if !(p.fraction.is_finite() && (0.0..=1.0).contains(&p.fraction)) {
                return Err(PipelineError::InvalidConfig(format!(
                    "prune fraction {} outside [0, 1]",
                    p.fraction
                )));
            }
        }
        if let Some(s) = &self.svd {
            match s.policy {
                RankPolicy::Fixed { k: 0 } => {
                    return Err(PipelineError::InvalidConfig("svd rank must be >= 1".into()));
                }
                RankPolicy::Energy { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                    return Err(PipelineError::InvalidConfig(format!(
                        "svd energy fraction {fraction} outside (0, 1]"
                    )));
                }
                _ => {}
            }
        }
        let store_factored = match self.store_factored {
            Some(v) => {
                if v && self.svd.is_none() {
                    return Err(PipelineError::InvalidConfig(
                        "store_factored requires an svd stage".into(),
                    ));
                }
                v
            }
            None => self.svd.is_some(),
        };
        if store_factored {
            if let Some(s) = &self.svd {
                if s.mode == ReshapeMode::NearSquare {
                    return Err(PipelineError::InvalidConfig(
                        "near-square reshape cannot be stored factored; set store_factored=false"
                            .into(),
                    ));
                }
            }
        }
        Ok(ResolvedConfig {
            prune: self.prune.clone(),
            svd: self.svd.clone(),
            store_factored,
            selector: self.selector.clone().unwrap_or_default(),
            min_elements: self.min_elements.unwrap_or(DEFAULT_MIN_ELEMENTS),
        })
    }
}
