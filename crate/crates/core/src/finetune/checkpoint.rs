use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::adapter::{
    AdapterConfig, AdapterParameters, BackboneSpec, NamedArray, SceneModel, ToyCausalLm,
};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "musiscene-adapter-checkpoint/v1";

/// How to rebuild and verify the frozen backbone. Weights are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneRef {
    pub identity: String,
    pub weight_digest: String,
    pub spec: BackboneSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub train_config: TrainConfig,
    pub num_samples: usize,
    /// Mean answer loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Adapter parameters, config and training metadata in one JSON document.
/// Contains nothing time-dependent, so identical runs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub adapter_config: AdapterConfig,
    pub parameters: Vec<NamedArray>,
    pub backbone: BackboneRef,
    pub training: Option<TrainingMetadata>,
}

impl Checkpoint {
    pub fn from_model(model: &SceneModel, training: Option<TrainingMetadata>) -> Result<Self> {
        let lm = model.lm();
        Ok(Self {
            format: CHECKPOINT_FORMAT.to_string(),
            adapter_config: model.config.clone(),
            parameters: model.params.to_arrays()?,
            backbone: BackboneRef {
                identity: lm.identity(),
                weight_digest: lm.weight_digest().to_string(),
                spec: lm.spec().clone(),
            },
            training,
        })
    }

    /// Rebuilds the backbone from its spec, checks its digest, and loads the
    /// adapter parameters.
    pub fn to_model(&self) -> Result<SceneModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format {:?}",
                self.format
            )));
        }
        let lm = ToyCausalLm::from_spec(&self.backbone.spec)?;
        if lm.weight_digest() != self.backbone.weight_digest {
            return Err(Error::Checkpoint(format!(
                "backbone {} rebuilt with digest {}, checkpoint expects {}",
                self.backbone.identity,
                lm.weight_digest(),
                self.backbone.weight_digest
            )));
        }
        let params = AdapterParameters::from_arrays(&self.adapter_config, &self.parameters)?;
        SceneModel::from_parts(self.adapter_config.clone(), params, lm)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}
