use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{DiffTensor, Scalar, Shape, Tensor};

/// A trainable tensor with its gradient and momentum buffer.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub tensor: DiffTensor<T>,
    pub velocity: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let velocity = vec![T::zero(); value.numel()];
        Param {
            name: name.into(),
            tensor: DiffTensor::new(value),
            velocity,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Shape) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.tensor.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.tensor.value
    }

    pub fn grad(&self) -> &Tensor<T> {
        &self.tensor.grad
    }

    pub fn grad_mut(&mut self) -> &mut Tensor<T> {
        &mut self.tensor.grad
    }

    pub fn numel(&self) -> usize {
        self.tensor.value.numel()
    }
}

/// Non-trainable persistent state (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Buffer<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Fan-in scaled normal initialisation, `N(0, 2 / fan_in)`.
pub fn kaiming_normal<T: Scalar, R: Rng + ?Sized>(shape: Shape, fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z * std)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// Uniform access to the state of a layer or network.
pub trait HasParams<T> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
    fn buffers(&self) -> Vec<&Buffer<T>> {
        Vec::new()
    }
    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        Vec::new()
    }
}

/// Total number of trainable scalars.
pub fn count_parameters<T: Scalar>(m: &dyn HasParams<T>) -> usize {
    m.params().iter().map(|p| p.numel()).sum()
}

pub fn zero_grads<T: Scalar>(m: &mut dyn HasParams<T>) {
    for p in m.params_mut() {
        p.tensor.zero_grad();
    }
}
