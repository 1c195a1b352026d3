use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ArrayFile;

/// Encoder output for one clip, `[num_layers, num_frames, feature_dim]`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureStack {
    pub clip_id: String,
    shape: [usize; 3],
    values: Vec<f32>,
}

/// Sidecar stored next to a feature `.npy` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub encoder: String,
    pub clip_id: String,
}

impl AudioFeatureStack {
    pub fn new(clip_id: impl Into<String>, shape: [usize; 3], values: Vec<f32>) -> Result<Self> {
        let clip_id = clip_id.into();
        if shape.contains(&0) {
            return Err(Error::Shape(format!(
                "feature stack for {clip_id:?} has empty axis: {shape:?}"
            )));
        }
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "feature stack for {clip_id:?}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "feature stack for {clip_id:?} has non-finite values"
            )));
        }
        Ok(Self {
            clip_id,
            shape,
            values,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn num_layers(&self) -> usize {
        self.shape[0]
    }

    pub fn num_frames(&self) -> usize {
        self.shape[1]
    }

    pub fn feature_dim(&self) -> usize {
        self.shape[2]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, layer: usize, frame: usize, dim: usize) -> f32 {
        self.values[(layer * self.shape[1] + frame) * self.shape[2] + dim]
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.values.iter().map(|&v| v as f64).collect();
        Ok(Tensor::from_vec(data, self.shape.to_vec(), &Device::Cpu)?)
    }

    pub fn write(&self, path: &Path, encoder: &str) -> Result<()> {
        let descriptor = FeatureDescriptor {
            encoder: encoder.to_string(),
            clip_id: self.clip_id.clone(),
        };
        ArrayFile::new(self.shape.to_vec(), self.values.clone())?.write(path, &descriptor)
    }

    pub fn read(path: &Path) -> Result<(Self, FeatureDescriptor)> {
        let (array, descriptor): (ArrayFile, FeatureDescriptor) =
            ArrayFile::read_with_sidecar(path)?;
        let [l, t, d] = array.shape[..] else {
            return Err(Error::Shape(format!(
                "{}: feature file must be 3-D, got shape {:?}",
                path.display(),
                array.shape
            )));
        };
        let stack = Self::new(descriptor.clip_id.clone(), [l, t, d], array.data)?;
        Ok((stack, descriptor))
    }
}
