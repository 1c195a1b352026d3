use candle_core::{Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AdapterConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// `[in, out]`
    pub weight: Var,
    /// `[out]`
    pub bias: Var,
}

/// The trainable half of the model. Cloning shares storage; use
/// [`AdapterParameters::deep_copy`] for a snapshot.
#[derive(Debug, Clone)]
pub struct AdapterParameters {
    /// `[num_layers_in]`: one mixture weight per encoder layer.
    pub conv_kernel: Var,
    pub dense: Vec<DenseLayer>,
    /// `[injected_layers]`
    pub gates: Var,
    /// `[prefix_len, model_dim]`, present when the config asks for it.
    pub prompt: Option<Var>,
}

/// A parameter tensor flattened for storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

fn var(data: Vec<f64>, shape: &[usize]) -> Result<Var> {
    Ok(Var::from_tensor(&Tensor::from_vec(
        data,
        shape,
        &Device::Cpu,
    )?)?)
}

impl AdapterParameters {
    /// Uniform kernel `1/num_layers_in`, Gaussian dense weights with
    /// variance `1/in`, zero biases, gates at `gate_init`, Gaussian prompt
    /// with variance `1/model_dim`.
    pub fn init(config: &AdapterConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let l = config.num_layers_in;
        let conv_kernel = var(vec![1.0 / l as f64; l], &[l])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = config.dense_dims();
        let dense = dims
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let scale = 1.0 / (i as f64).sqrt();
                let weights = (0..i * o)
                    .map(|_| {
                        scale
                            * <StandardNormal as Distribution<f64>>::sample(
                                &StandardNormal,
                                &mut rng,
                            )
                    })
                    .collect();
                Ok(DenseLayer {
                    weight: var(weights, &[i, o])?,
                    bias: var(vec![0.0; o], &[o])?,
                })
            })
            .collect::<Result<_>>()?;
        let gates = var(
            vec![config.gate_init; config.injected_layers],
            &[config.injected_layers],
        )?;
        let prompt = if config.learned_prompt {
            let (p, d) = (config.prefix_len, config.model_dim);
            let scale = 1.0 / (d as f64).sqrt();
            let values = (0..p * d)
                .map(|_| {
                    scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect();
            Some(var(values, &[p, d])?)
        } else {
            None
        };
        Ok(Self {
            conv_kernel,
            dense,
            gates,
            prompt,
        })
    }

    pub fn named(&self) -> Vec<(String, &Var)> {
        let mut out = vec![("adapter.conv_kernel".to_string(), &self.conv_kernel)];
        for (i, layer) in self.dense.iter().enumerate() {
            out.push((format!("adapter.dense.{i}.weight"), &layer.weight));
            out.push((format!("adapter.dense.{i}.bias"), &layer.bias));
        }
        out.push(("adapter.gates".to_string(), &self.gates));
        if let Some(p) = &self.prompt {
            out.push(("adapter.prompt".to_string(), p));
        }
        out
    }

    pub fn vars(&self) -> Vec<&Var> {
        self.named().into_iter().map(|(_, v)| v).collect()
    }

    pub fn count(&self) -> usize {
        self.vars().iter().map(|v| v.elem_count()).sum()
    }

    pub fn to_arrays(&self) -> Result<Vec<NamedArray>> {
        self.named()
            .into_iter()
            .map(|(name, v)| {
                Ok(NamedArray {
                    name,
                    shape: v.dims().to_vec(),
                    values: v.flatten_all()?.to_vec1::<f64>()?,
                })
            })
            .collect()
    }

    /// Rebuilds parameters from stored arrays, checking names and shapes
    /// against what `config` implies.
    pub fn from_arrays(config: &AdapterConfig, arrays: &[NamedArray]) -> Result<Self> {
        let template = Self::init(config, 0)?;
        let expected = template.named();
        if expected.len() != arrays.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                expected.len(),
                arrays.len()
            )));
        }
        for ((name, v), a) in expected.iter().zip(arrays) {
            if *name != a.name || v.dims() != a.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match config ({name} {:?})",
                    a.name,
                    a.shape,
                    v.dims()
                )));
            }
            if a.values.len() != v.elem_count() || a.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has bad values",
                    a.name
                )));
            }
            v.set(&Tensor::from_vec(
                a.values.clone(),
                a.shape.as_slice(),
                &Device::Cpu,
            )?)?;
        }
        Ok(template)
    }

    /// Copy with independent storage.
    pub fn deep_copy(&self, config: &AdapterConfig) -> Result<Self> {
        Self::from_arrays(config, &self.to_arrays()?)
    }
}
