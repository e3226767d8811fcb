use rand::Rng;

use super::batchnorm::BatchNorm3d;
use super::conv::Conv3d;
use super::ops::{relu, relu_backward};
use super::param::{Buffer, HasParams, Param};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// `k^3` convolution (same padding, no bias) followed by batch norm and ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu<T> {
    pub conv: Conv3d<T>,
    pub bn: BatchNorm3d<T>,
    output: Option<Tensor<T>>,
}

impl<T: Scalar> ConvBnRelu<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, kernel: usize, rng: &mut R) -> Self {
        ConvBnRelu {
            conv: Conv3d::new(&format!("{name}.conv"), cin, cout, kernel, 1, kernel / 2, false, rng),
            bn: BatchNorm3d::new(&format!("{name}.bn"), cout),
            output: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(relu(&self.bn.infer(&self.conv.infer(x)?)?))
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let y = relu(&self.bn.forward(&self.conv.forward(x)?, train)?);
        self.output = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .output
            .take()
            .ok_or_else(|| Error::ShapeMismatch("block backward before forward".into()))?;
        let g = relu_backward(&y, grad_out);
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

impl<T: Scalar> HasParams<T> for ConvBnRelu<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv.params();
        v.extend(self.bn.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv.params_mut();
        v.extend(self.bn.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        self.bn.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        self.bn.buffers_mut()
    }
}

/// Two stacked [`ConvBnRelu`] layers.
#[derive(Debug, Clone)]
pub struct ConvBlock<T> {
    pub first: ConvBnRelu<T>,
    pub second: ConvBnRelu<T>,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, kernel: usize, rng: &mut R) -> Self {
        ConvBlock {
            first: ConvBnRelu::new(&format!("{name}.0"), cin, cout, kernel, rng),
            second: ConvBnRelu::new(&format!("{name}.1"), cout, cout, kernel, rng),
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.second.infer(&self.first.infer(x)?)
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let h = self.first.forward(x, train)?;
        self.second.forward(&h, train)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.second.backward(grad_out)?;
        self.first.backward(&g)
    }

    pub fn layers(&self) -> [&ConvBnRelu<T>; 2] {
        [&self.first, &self.second]
    }
}

impl<T: Scalar> HasParams<T> for ConvBlock<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.first.params();
        v.extend(self.second.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.first.params_mut();
        v.extend(self.second.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v = self.first.buffers();
        v.extend(self.second.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v = self.first.buffers_mut();
        v.extend(self.second.buffers_mut());
        v
    }
}
