use rand::Rng;
use serde::{Deserialize, Serialize};

use super::double::{DoubleUNet, DoubleUNetConfig};
use super::name::ModelName;
use super::unet::{PocketUNet, PocketUNetConfig};
use crate::error::{Error, Result};
use crate::nn::{Buffer, HasParams, Param, Scalar, Tensor};
use crate::preprocess::PatchPredictor;

/// Serializable description of a trainable network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchitectureSpec {
    Pocket(PocketUNetConfig),
    Double(DoubleUNetConfig),
}

impl ArchitectureSpec {
    /// The architecture implied by a BM or DM name at the given width/depth.
    pub fn for_model(name: &ModelName, channels: usize, depth: usize) -> Result<Self> {
        match name {
            ModelName::Baseline(s) => Ok(ArchitectureSpec::Pocket(PocketUNetConfig::new(s.len(), channels, depth))),
            ModelName::Double(a, b) => Ok(ArchitectureSpec::Double(DoubleUNetConfig::symmetric(
                a.len(),
                b.len(),
                channels,
                depth,
            ))),
            ModelName::Ensemble(..) => Err(Error::InvalidConfig(format!(
                "{name} is an ensemble of trained baselines, not a trainable network"
            ))),
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            ArchitectureSpec::Pocket(c) => c.in_channels,
            ArchitectureSpec::Double(c) => c.in_channels(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ArchitectureSpec::Pocket(c) => c.depth,
            ArchitectureSpec::Double(c) => c.branch_a.depth.max(c.branch_b.depth),
        }
    }
}

/// A Pocket U-Net or a Double U-Net.
#[derive(Debug, Clone)]
pub enum Network<T> {
    Pocket(PocketUNet<T>),
    Double(DoubleUNet<T>),
}

impl<T: Scalar> Network<T> {
    pub fn build<R: Rng + ?Sized>(spec: &ArchitectureSpec, rng: &mut R) -> Result<Self> {
        Ok(match spec {
            ArchitectureSpec::Pocket(c) => Network::Pocket(PocketUNet::new(c, "", rng)?),
            ArchitectureSpec::Double(c) => Network::Double(DoubleUNet::new(c, rng)?),
        })
    }

    pub fn spec(&self) -> ArchitectureSpec {
        match self {
            Network::Pocket(n) => ArchitectureSpec::Pocket(n.config.clone()),
            Network::Double(n) => ArchitectureSpec::Double(n.config.clone()),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.spec().in_channels()
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Network::Pocket(n) => n.infer(x),
            Network::Double(n) => n.infer(x),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        match self {
            Network::Pocket(n) => n.forward(x, train),
            Network::Double(n) => n.forward(x, train),
        }
    }

    pub fn backward(&mut self, grad_probs: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Network::Pocket(n) => n.backward(grad_probs),
            Network::Double(n) => n.backward(grad_probs),
        }
    }
}

impl<T: Scalar> HasParams<T> for Network<T> {
    fn params(&self) -> Vec<&Param<T>> {
        match self {
            Network::Pocket(n) => n.params(),
            Network::Double(n) => n.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Network::Pocket(n) => n.params_mut(),
            Network::Double(n) => n.params_mut(),
        }
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        match self {
            Network::Pocket(n) => n.buffers(),
            Network::Double(n) => n.buffers(),
        }
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        match self {
            Network::Pocket(n) => n.buffers_mut(),
            Network::Double(n) => n.buffers_mut(),
        }
    }
}

impl PatchPredictor for Network<f32> {
    fn in_channels(&self) -> usize {
        Network::in_channels(self)
    }

    fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.infer(x)
    }
}
