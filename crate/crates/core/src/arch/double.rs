use rand::Rng;
use serde::{Deserialize, Serialize};

use super::unet::{PocketUNet, PocketUNetConfig};
use crate::error::{Error, Result};
use crate::nn::ops::{concat_channels, softmax_channels, softmax_channels_backward, split_channels};
use crate::nn::{Buffer, Conv3d, ConvBlock, HasParams, Param, Scalar, Tensor};

/// Two branch topologies fused by a convolution block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleUNetConfig {
    pub branch_a: PocketUNetConfig,
    pub branch_b: PocketUNetConfig,
    pub fusion_channels: usize,
}

impl DoubleUNetConfig {
    /// Two branches with the same width and depth.
    pub fn symmetric(in_a: usize, in_b: usize, channels: usize, depth: usize) -> Self {
        DoubleUNetConfig {
            branch_a: PocketUNetConfig::new(in_a, channels, depth),
            branch_b: PocketUNetConfig::new(in_b, channels, depth),
            fusion_channels: channels,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.branch_a.in_channels + self.branch_b.in_channels
    }
}

/// Two headless Pocket U-Nets whose last-decoder features are concatenated,
/// fused by two conv+BN+ReLU layers, and classified by a 1x1x1 head.
///
/// The input holds branch A's channels followed by branch B's.
#[derive(Debug, Clone)]
pub struct DoubleUNet<T> {
    pub config: DoubleUNetConfig,
    pub branch_a: PocketUNet<T>,
    pub branch_b: PocketUNet<T>,
    pub fusion: ConvBlock<T>,
    pub head: Conv3d<T>,
    probs: Option<Tensor<T>>,
}

impl<T: Scalar> DoubleUNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &DoubleUNetConfig, rng: &mut R) -> Result<Self> {
        if cfg.fusion_channels == 0 || cfg.branch_a.kernel != cfg.branch_b.kernel {
            return Err(Error::InvalidConfig(format!("bad double network config {cfg:?}")));
        }
        let branch_a = PocketUNet::headless(&cfg.branch_a, "a.", rng)?;
        let branch_b = PocketUNet::headless(&cfg.branch_b, "b.", rng)?;
        let fused_in = branch_a.feature_channels() + branch_b.feature_channels();
        let fusion = ConvBlock::new("fusion", fused_in, cfg.fusion_channels, cfg.branch_a.kernel, rng);
        let head = Conv3d::new("head", cfg.fusion_channels, cfg.branch_a.num_classes, 1, 1, 0, true, rng);
        Ok(DoubleUNet {
            config: cfg.clone(),
            branch_a,
            branch_b,
            fusion,
            head,
            probs: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.config.in_channels()
    }

    fn split(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        if x.channels() != self.in_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels(),
                found: x.channels(),
            });
        }
        split_channels(x, self.config.branch_a.in_channels)
    }

    /// Eval-mode concatenated branch features (`2C` channels).
    pub fn infer_fused_input(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (xa, xb) = self.split(x)?;
        concat_channels(&self.branch_a.infer_features(&xa)?, &self.branch_b.infer_features(&xb)?)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let cat = self.infer_fused_input(x)?;
        Ok(softmax_channels(&self.head.infer(&self.fusion.infer(&cat)?)?))
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let (xa, xb) = self.split(x)?;
        let fa = self.branch_a.features_forward(&xa, train)?;
        let fb = self.branch_b.features_forward(&xb, train)?;
        let h = self.fusion.forward(&concat_channels(&fa, &fb)?, train)?;
        let p = softmax_channels(&self.head.forward(&h)?);
        self.probs = Some(p.clone());
        Ok(p)
    }

    /// Single fused-loss backward through both branches; returns the input gradient.
    pub fn backward(&mut self, grad_probs: &Tensor<T>) -> Result<Tensor<T>> {
        let p = self
            .probs
            .take()
            .ok_or_else(|| Error::ShapeMismatch("backward without a matching forward".into()))?;
        let g = softmax_channels_backward(&p, grad_probs);
        let g = self.head.backward(&g)?;
        let g = self.fusion.backward(&g)?;
        let (ga, gb) = split_channels(&g, self.branch_a.feature_channels())?;
        let gxa = self.branch_a.features_backward(&ga)?;
        let gxb = self.branch_b.features_backward(&gb)?;
        concat_channels(&gxa, &gxb)
    }
}

impl<T: Scalar> HasParams<T> for DoubleUNet<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.branch_a.params();
        v.extend(self.branch_b.params());
        v.extend(self.fusion.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.branch_a.params_mut();
        v.extend(self.branch_b.params_mut());
        v.extend(self.fusion.params_mut());
        v.extend(self.head.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v = self.branch_a.buffers();
        v.extend(self.branch_b.buffers());
        v.extend(self.fusion.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v = self.branch_a.buffers_mut();
        v.extend(self.branch_b.buffers_mut());
        v.extend(self.fusion.buffers_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{network_gradcheck, ArchitectureSpec};
    use crate::nn::{count_parameters, dice_ce_loss, one_hot2, sgd_momentum_step, zero_grads, OptimizerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(shape: [usize; 5], seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    fn labels(n: usize, seed: u64) -> Vec<u8> {
        random([1, 1, 1, 1, n], seed).data().iter().map(|&v| (v > 0.3) as u8).collect()
    }

    #[test]
    fn branch_widths_and_fused_channels() {
        let cfg = DoubleUNetConfig::symmetric(3, 2, 8, 2);
        let net = DoubleUNet::<f32>::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.branch_a.in_channels(), 3);
        assert_eq!(net.branch_b.in_channels(), 2);
        let fused = net.infer_fused_input(&random([1, 5, 8, 8, 8], 1)).unwrap();
        assert_eq!(fused.shape(), [1, 16, 8, 8, 8]);
    }

    #[test]
    fn output_shape_contract() {
        let net = DoubleUNet::<f32>::new(&DoubleUNetConfig::symmetric(3, 2, 8, 2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let p = net.infer(&random([1, 5, 32, 32, 32], 2)).unwrap();
        assert_eq!(p.shape(), [1, 2, 32, 32, 32]);
        assert!(matches!(
            net.infer(&random([1, 4, 8, 8, 8], 2)),
            Err(Error::ChannelMismatch { expected: 5, found: 4 })
        ));
    }

    #[test]
    fn one_step_moves_both_branches() {
        let cfg = DoubleUNetConfig::symmetric(2, 1, 4, 1);
        let mut net = DoubleUNet::<f32>::new(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let before = net.clone();
        let x = random([2, 3, 8, 8, 8], 4);
        let t = one_hot2(&labels(2 * 512, 5), [2, 2, 8, 8, 8]).unwrap();
        zero_grads(&mut net);
        let p = net.forward(&x, true).unwrap();
        let out = dice_ce_loss(&p, &t).unwrap();
        net.backward(&out.grad).unwrap();
        sgd_momentum_step(&mut net.params_mut(), &OptimizerConfig::default());
        let moved = |a: &PocketUNet<f32>, b: &PocketUNet<f32>| {
            a.params().iter().zip(b.params()).filter(|(u, v)| u.value().data() != v.value().data()).count()
        };
        let (ma, mb) = (moved(&net.branch_a, &before.branch_a), moved(&net.branch_b, &before.branch_b));
        assert_eq!(ma, net.branch_a.params().len());
        assert_eq!(mb, net.branch_b.params().len());
    }

    #[test]
    fn fused_loss_gradient_reaches_each_branch() {
        let spec = ArchitectureSpec::Double(DoubleUNetConfig::symmetric(1, 1, 2, 1));
        let x = random([2, 2, 8, 8, 8], 7);
        let t = one_hot2(&labels(2 * 512, 8), [2, 2, 8, 8, 8]).unwrap();
        let report = network_gradcheck(&spec, 9, &x, &t, 4, 1e-6).unwrap();
        for prefix in ["a.", "b."] {
            let worst = report
                .iter()
                .filter(|(n, _)| n.starts_with(prefix))
                .map(|(_, c)| c.max_rel_error)
                .fold(0.0, f64::max);
            assert!(worst < 1e-3, "{prefix}: {worst}");
        }
    }

    #[test]
    fn swapping_branches_keeps_the_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ab = DoubleUNet::<f32>::new(&DoubleUNetConfig::symmetric(3, 2, 4, 2), &mut rng).unwrap();
        let ba = DoubleUNet::<f32>::new(&DoubleUNetConfig::symmetric(2, 3, 4, 2), &mut rng).unwrap();
        assert_eq!(count_parameters(&ab), count_parameters(&ba));
        let pa = ab.infer(&random([1, 5, 8, 8, 8], 1)).unwrap();
        let pb = ba.infer(&random([1, 5, 8, 8, 8], 1)).unwrap();
        assert_eq!(pa.shape(), pb.shape());
    }
}
