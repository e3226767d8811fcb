use super::param::{Buffer, HasParams, Param};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalisation over the batch and spatial axes.
///
/// Train mode normalises with the biased batch variance and folds the
/// unbiased variance into the running estimate; eval mode uses the running
/// statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm3d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNorm3d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        let shape = [channels, 1, 1, 1, 1];
        BatchNorm3d {
            gamma: Param::new(format!("{name}.gamma"), Tensor::filled(shape, T::one())),
            beta: Param::zeros(format!("{name}.beta"), shape),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: Tensor::zeros(shape),
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: Tensor::filled(shape, T::one()),
            },
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "batch norm over {} channels got {}",
                self.channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    /// Eval-mode normalisation with the running statistics.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let mut y = x.clone();
        for c in 0..self.channels() {
            let rm = self.running_mean.value.data()[c].f64();
            let rv = self.running_var.value.data()[c].f64();
            let scale = self.gamma.value().data()[c].f64() / (rv + self.eps).sqrt();
            let shift = self.beta.value().data()[c].f64() - rm * scale;
            let (scale, shift) = (T::of(scale), T::of(shift));
            for b in 0..x.batch() {
                y.plane_mut(b, c).iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        if !train {
            self.cache = None;
            return self.infer(x);
        }
        self.check(x)?;
        let n = x.batch() * x.spatial_len();
        if n < 2 {
            return Err(Error::DegenerateBatch(format!(
                "{n} value(s) per channel in train mode"
            )));
        }
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(self.channels());
        for c in 0..self.channels() {
            let mut sum = 0.0;
            for b in 0..x.batch() {
                sum += x.plane(b, c).iter().map(|v| v.f64()).sum::<f64>();
            }
            let mean = sum / n as f64;
            let mut ss = 0.0;
            for b in 0..x.batch() {
                ss += x
                    .plane(b, c)
                    .iter()
                    .map(|v| {
                        let d = v.f64() - mean;
                        d * d
                    })
                    .sum::<f64>();
            }
            let var = ss / n as f64;
            if var + self.eps <= 0.0 {
                return Err(Error::DegenerateBatch(format!(
                    "zero variance on channel {c} with eps 0"
                )));
            }
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std.push(istd);
            let gamma = self.gamma.value().data()[c];
            let beta = self.beta.value().data()[c];
            for b in 0..x.batch() {
                let src = x.plane(b, c);
                let xh: Vec<T> = src.iter().map(|v| T::of((v.f64() - mean) * istd)).collect();
                y.plane_mut(b, c)
                    .iter_mut()
                    .zip(&xh)
                    .for_each(|(o, &h)| *o = h * gamma + beta);
                xhat.plane_mut(b, c).copy_from_slice(&xh);
            }
            let m = self.momentum;
            let unbiased = ss / (n as f64 - 1.0);
            let rm = &mut self.running_mean.value.data_mut()[c];
            *rm = T::of((1.0 - m) * rm.f64() + m * mean);
            let rv = &mut self.running_var.value.data_mut()[c];
            *rv = T::of((1.0 - m) * rv.f64() + m * unbiased);
        }
        self.cache = Some(BnCache { xhat, inv_std });
        Ok(y)
    }

    /// Backward through train-mode normalisation.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::ShapeMismatch("batch norm backward without train forward".into()))?;
        if grad_out.shape() != cache.xhat.shape() {
            return Err(Error::ShapeMismatch("batch norm grad shape".into()));
        }
        let n = (grad_out.batch() * grad_out.spatial_len()) as f64;
        let mut gx = Tensor::zeros(grad_out.shape());
        for c in 0..self.channels() {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for b in 0..grad_out.batch() {
                for (&dy, &xh) in grad_out.plane(b, c).iter().zip(cache.xhat.plane(b, c)) {
                    sum_dy += dy.f64();
                    sum_dy_xhat += dy.f64() * xh.f64();
                }
            }
            self.gamma.grad_mut().data_mut()[c] += T::of(sum_dy_xhat);
            self.beta.grad_mut().data_mut()[c] += T::of(sum_dy);
            let k = self.gamma.value().data()[c].f64() * cache.inv_std[c];
            let (mean_dy, mean_dy_xhat) = (sum_dy / n, sum_dy_xhat / n);
            for b in 0..grad_out.batch() {
                let dys = grad_out.plane(b, c);
                let xhs = cache.xhat.plane(b, c);
                for ((o, &dy), &xh) in gx.plane_mut(b, c).iter_mut().zip(dys).zip(xhs) {
                    *o = T::of(k * (dy.f64() - mean_dy - xh.f64() * mean_dy_xhat));
                }
            }
        }
        Ok(gx)
    }
}

impl<T: Scalar> HasParams<T> for BatchNorm3d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(shape: [usize; 5], seed: u64) -> Tensor<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-3.0..5.0)).collect()).unwrap()
    }

    #[test]
    fn train_output_is_standardised_per_channel() {
        let mut bn = BatchNorm3d::<f64>::new("bn", 3);
        let y = bn.forward(&random([2, 3, 4, 4, 4], 1), true).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..2).flat_map(|b| y.plane(b, c).to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn eval_with_unit_running_stats_is_identity() {
        let bn = BatchNorm3d::<f64>::new("bn", 2);
        let x = random([1, 2, 3, 3, 3], 2);
        let y = bn.infer(&x).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
        }
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let mut bn = BatchNorm3d::<f64>::new("bn", 1);
        let x = Tensor::from_vec([1, 1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.forward(&x, true).unwrap();
        assert!((bn.running_mean.value.data()[0] - 0.25).abs() < 1e-12);
        // unbiased variance of 1..4 is 5/3
        assert!((bn.running_var.value.data()[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn single_value_batch_is_degenerate() {
        let mut bn = BatchNorm3d::<f64>::new("bn", 1);
        let x = Tensor::zeros([1, 1, 1, 1, 1]);
        assert!(matches!(bn.forward(&x, true), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn zero_variance_with_zero_eps_is_degenerate() {
        let mut bn = BatchNorm3d::<f64>::new("bn", 1);
        bn.eps = 0.0;
        let x = Tensor::filled([1, 1, 2, 2, 2], 3.0);
        assert!(matches!(bn.forward(&x, true), Err(Error::DegenerateBatch(_))));
    }
}
