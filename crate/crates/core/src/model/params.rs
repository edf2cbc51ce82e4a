use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Array;
use crate::error::{Error, Result};

/// Architecture and unrolling hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of regularizer + data-consistency iterations.
    pub unrolls: usize,
    /// CG iterations per data-consistency unit.
    pub cg_iters: usize,
    /// Residual blocks in the regularizer.
    pub blocks: usize,
    /// Feature channels in the regularizer.
    pub features: usize,
    pub kernel: usize,
    /// One weight set for all unrolls, or one per unroll.
    pub shared_weights: bool,
    pub mu_init: f64,
    /// Scale applied to each residual block's output.
    pub residual_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            unrolls: 10,
            cg_iters: 10,
            blocks: 4,
            features: 16,
            kernel: 3,
            shared_weights: true,
            mu_init: 0.05,
            residual_scale: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cg_iters == 0 {
            return Err(Error::InvalidArgument("cg_iters must be at least 1".into()));
        }
        if self.features == 0 || self.kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "need features ≥ 1 and an odd kernel, got {} and {}",
                self.features, self.kernel
            )));
        }
        if !(self.mu_init > 0.0 && self.mu_init.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu_init {} must be positive", self.mu_init)));
        }
        Ok(())
    }

    pub fn weight_sets(&self) -> usize {
        if self.shared_weights {
            1
        } else {
            self.unrolls.max(1)
        }
    }

    /// Tensor names and shapes in storage order. The final entry is `log_mu`.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (f, k) = (self.features, self.kernel);
        let mut out = Vec::new();
        for s in 0..self.weight_sets() {
            out.push((format!("set{s}.in.weight"), vec![f, 2, k, k]));
            out.push((format!("set{s}.in.bias"), vec![f]));
            for b in 0..self.blocks {
                out.push((format!("set{s}.block{b}.conv1.weight"), vec![f, f, k, k]));
                out.push((format!("set{s}.block{b}.conv1.bias"), vec![f]));
                out.push((format!("set{s}.block{b}.conv2.weight"), vec![f, f, k, k]));
                out.push((format!("set{s}.block{b}.conv2.bias"), vec![f]));
            }
            out.push((format!("set{s}.out.weight"), vec![2, f, k, k]));
            out.push((format!("set{s}.out.bias"), vec![2]));
        }
        out.push(("log_mu".into(), vec![1]));
        out
    }

    /// Tensors per weight set (excluding `log_mu`).
    pub(crate) fn tensors_per_set(&self) -> usize {
        4 + 4 * self.blocks
    }
}

/// Std multiplier for the regularizer's output conv at initialization.
pub const OUTPUT_INIT_GAIN: f64 = 0.01;

/// All trainable values: regularizer kernels and biases plus `log μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: Vec<Array>,
}

impl ModelParams {
    /// He-normal kernels (`std = √(2 / fan_in)`), zero biases, `μ = mu_init`.
    ///
    /// The output conv of each weight set is drawn with its std scaled by
    /// [`OUTPUT_INIT_GAIN`], so the untrained regularizer is close to the
    /// identity. Data consistency leaves the regularizer's null-space output
    /// untouched, so a unit-gain correction would compound over the unrolls.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = config.layout();
        let last = layout.len() - 1;
        let per = config.tensors_per_set();
        let tensors = layout
            .into_iter()
            .enumerate()
            .map(|(i, (_, shape))| {
                if i == last {
                    Array::full(&shape, config.mu_init.ln())
                } else if shape.len() == 4 {
                    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                    let gain = if i % per == per - 2 { OUTPUT_INIT_GAIN } else { 1.0 };
                    let normal = Normal::new(0.0, gain * (2.0 / fan_in).sqrt()).expect("positive std");
                    let n = shape.iter().product();
                    Array::new(shape, (0..n).map(|_| normal.sample(&mut rng)).collect()).expect("finite")
                } else {
                    Array::zeros(&shape)
                }
            })
            .collect();
        Ok(Self { config, tensors })
    }

    /// Every kernel and bias zero; the regularizer is then the identity.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let last = layout.len() - 1;
        let tensors = layout
            .into_iter()
            .enumerate()
            .map(|(i, (_, s))| if i == last { Array::full(&s, config.mu_init.ln()) } else { Array::zeros(&s) })
            .collect();
        Ok(Self { config, tensors })
    }

    /// Rebuilds parameters from a flat vector in layout order.
    pub fn from_flat(config: ModelConfig, values: &[f64]) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let total: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if values.len() != total {
            return Err(Error::Shape(format!("model needs {total} values, got {}", values.len())));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(layout.len());
        for (_, shape) in layout {
            let n: usize = shape.iter().product();
            tensors.push(Array::new(shape, values[offset..offset + n].to_vec())?);
            offset += n;
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Array] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array] {
        &mut self.tensors
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn value_count(&self) -> usize {
        self.tensors.iter().map(Array::len).sum()
    }

    pub fn log_mu(&self) -> f64 {
        self.tensors.last().expect("log_mu present").item()
    }

    pub fn mu(&self) -> f64 {
        self.log_mu().exp()
    }

    pub fn set_mu(&mut self, mu: f64) -> Result<()> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu {mu} must be positive")));
        }
        *self.tensors.last_mut().expect("log_mu present") = Array::full(&[1], mu.ln());
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Array::all_finite)
    }
}
