use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{concat_channels, max_pool2, max_pool2_backward, softmax_channels, softmax_channels_backward, split_channels};
use crate::nn::{Buffer, Conv3d, ConvBlock, ConvTranspose3d, HasParams, Param, Scalar, Shape, Tensor};

/// How feature widths evolve with depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelScheme {
    /// Same width at every resolution level.
    #[default]
    Constant,
    /// Width doubles after every downsampling (classic U-Net).
    Doubling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PocketUNetConfig {
    pub in_channels: usize,
    pub channels: usize,
    pub depth: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default)]
    pub scheme: ChannelScheme,
}

fn default_kernel() -> usize {
    3
}

fn default_classes() -> usize {
    2
}

impl PocketUNetConfig {
    pub fn new(in_channels: usize, channels: usize, depth: usize) -> Self {
        PocketUNetConfig {
            in_channels,
            channels,
            depth,
            kernel: 3,
            num_classes: 2,
            scheme: ChannelScheme::Constant,
        }
    }

    pub fn doubling(mut self) -> Self {
        self.scheme = ChannelScheme::Doubling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.channels == 0 || self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "in_channels, channels must be positive and num_classes >= 2: {self:?}"
            )));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("kernel must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    /// Feature width at resolution `level` (0 = full resolution, `depth` = bottleneck).
    pub fn width(&self, level: usize) -> usize {
        match self.scheme {
            ChannelScheme::Constant => self.channels,
            ChannelScheme::Doubling => self.channels << level,
        }
    }

    /// Checks that spatial dims survive `depth` halvings.
    pub fn check_dims(&self, dims: [usize; 3]) -> Result<()> {
        let f = 1usize << self.depth;
        if dims.iter().any(|&d| d == 0 || d % f != 0) {
            return Err(Error::IndivisibleDims { dims, depth: self.depth });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct PoolCache {
    input_shape: Shape,
    argmax: Vec<u32>,
}

/// Pocket U-Net: encoder/decoder with skip concatenations and, optionally,
/// a 1x1x1 classification head followed by channel softmax.
#[derive(Debug, Clone)]
pub struct PocketUNet<T> {
    pub config: PocketUNetConfig,
    pub encoders: Vec<ConvBlock<T>>,
    pub bottleneck: ConvBlock<T>,
    pub upsamplers: Vec<ConvTranspose3d<T>>,
    pub decoders: Vec<ConvBlock<T>>,
    pub head: Option<Conv3d<T>>,
    pools: Vec<PoolCache>,
    probs: Option<Tensor<T>>,
}

impl<T: Scalar> PocketUNet<T> {
    /// Full network with classification head.
    pub fn new<R: Rng + ?Sized>(cfg: &PocketUNetConfig, prefix: &str, rng: &mut R) -> Result<Self> {
        Self::build(cfg, prefix, true, rng)
    }

    /// Feature extractor without a head (a Double U-Net branch).
    pub fn headless<R: Rng + ?Sized>(cfg: &PocketUNetConfig, prefix: &str, rng: &mut R) -> Result<Self> {
        Self::build(cfg, prefix, false, rng)
    }

    fn build<R: Rng + ?Sized>(cfg: &PocketUNetConfig, prefix: &str, with_head: bool, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel;
        let mut encoders = Vec::with_capacity(cfg.depth);
        let mut cin = cfg.in_channels;
        for l in 0..cfg.depth {
            encoders.push(ConvBlock::new(&format!("{prefix}enc{l}"), cin, cfg.width(l), k, rng));
            cin = cfg.width(l);
        }
        let bottleneck = ConvBlock::new(&format!("{prefix}bottleneck"), cin, cfg.width(cfg.depth), k, rng);
        let mut upsamplers = Vec::with_capacity(cfg.depth);
        let mut decoders = Vec::with_capacity(cfg.depth);
        for l in 0..cfg.depth {
            let (below, here) = (cfg.width(l + 1), cfg.width(l));
            upsamplers.push(ConvTranspose3d::new(&format!("{prefix}up{l}"), below, here, 2, 2, rng));
            decoders.push(ConvBlock::new(&format!("{prefix}dec{l}"), 2 * here, here, k, rng));
        }
        let head = with_head.then(|| {
            Conv3d::new(&format!("{prefix}head"), cfg.width(0), cfg.num_classes, 1, 1, 0, true, rng)
        });
        Ok(PocketUNet {
            config: cfg.clone(),
            encoders,
            bottleneck,
            upsamplers,
            decoders,
            head,
            pools: Vec::new(),
            probs: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.config.in_channels
    }

    /// Channels of the last decoder feature map.
    pub fn feature_channels(&self) -> usize {
        self.config.width(0)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.config.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.config.in_channels,
                found: x.channels(),
            });
        }
        self.config.check_dims(x.spatial())
    }

    fn head_ref(&self) -> Result<&Conv3d<T>> {
        self.head
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch("network has no classification head".into()))
    }

    /// Eval-mode last-decoder features. When `trace` is given, every block's
    /// output shape is appended to it.
    pub fn infer_features_traced(
        &self,
        x: &Tensor<T>,
        mut trace: Option<&mut Vec<(String, Shape)>>,
    ) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut record = |name: String, t: &Tensor<T>| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push((name, t.shape()));
            }
        };
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut h = x.clone();
        for (l, enc) in self.encoders.iter().enumerate() {
            let s = enc.infer(&h)?;
            record(format!("enc{l}"), &s);
            h = max_pool2(&s)?.0;
            skips.push(s);
        }
        h = self.bottleneck.infer(&h)?;
        record("bottleneck".into(), &h);
        for l in (0..self.decoders.len()).rev() {
            let u = self.upsamplers[l].infer(&h)?;
            record(format!("up{l}"), &u);
            h = self.decoders[l].infer(&concat_channels(&skips[l], &u)?)?;
            record(format!("dec{l}"), &h);
        }
        Ok(h)
    }

    pub fn infer_features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.infer_features_traced(x, None)
    }

    /// Applies the classification head and softmax to decoder features.
    pub fn classify(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(softmax_channels(&self.head_ref()?.infer(features)?))
    }

    /// Eval-mode class probabilities.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.classify(&self.infer_features(x)?)
    }

    /// Eval-mode probabilities together with the features that produced them.
    pub fn forward_with_features(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let f = self.infer_features(x)?;
        Ok((self.classify(&f)?, f))
    }

    /// Training-capable feature pass; caches what [`Self::features_backward`] needs.
    pub fn features_forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.pools.clear();
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut h = x.clone();
        for enc in self.encoders.iter_mut() {
            let s = enc.forward(&h, train)?;
            let (p, argmax) = max_pool2(&s)?;
            self.pools.push(PoolCache {
                input_shape: s.shape(),
                argmax,
            });
            skips.push(s);
            h = p;
        }
        h = self.bottleneck.forward(&h, train)?;
        for l in (0..self.decoders.len()).rev() {
            let u = self.upsamplers[l].forward(&h)?;
            let cat = concat_channels(&skips[l], &u)?;
            h = self.decoders[l].forward(&cat, train)?;
        }
        Ok(h)
    }

    /// Back-propagates a gradient on the decoder features; returns the input gradient.
    pub fn features_backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        if self.pools.len() != self.encoders.len() {
            return Err(Error::ShapeMismatch("backward without a matching forward".into()));
        }
        let mut g = grad.clone();
        let mut skip_grads = Vec::with_capacity(self.decoders.len());
        for l in 0..self.decoders.len() {
            let gc = self.decoders[l].backward(&g)?;
            let (gs, gu) = split_channels(&gc, self.config.width(l))?;
            skip_grads.push(gs);
            g = self.upsamplers[l].backward(&gu)?;
        }
        g = self.bottleneck.backward(&g)?;
        let pools = std::mem::take(&mut self.pools);
        for l in (0..self.encoders.len()).rev() {
            let mut gs = max_pool2_backward(pools[l].input_shape, &pools[l].argmax, &g)?;
            gs.add_assign(&skip_grads[l])?;
            g = self.encoders[l].backward(&gs)?;
        }
        Ok(g)
    }

    /// Class probabilities with caches for [`Self::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let f = self.features_forward(x, train)?;
        let head = self
            .head
            .as_mut()
            .ok_or_else(|| Error::ShapeMismatch("network has no classification head".into()))?;
        let p = softmax_channels(&head.forward(&f)?);
        self.probs = Some(p.clone());
        Ok(p)
    }

    /// Back-propagates a gradient on the probabilities; returns the input gradient.
    pub fn backward(&mut self, grad_probs: &Tensor<T>) -> Result<Tensor<T>> {
        let p = self
            .probs
            .take()
            .ok_or_else(|| Error::ShapeMismatch("backward without a matching forward".into()))?;
        let g = softmax_channels_backward(&p, grad_probs);
        let head = self
            .head
            .as_mut()
            .ok_or_else(|| Error::ShapeMismatch("network has no classification head".into()))?;
        let g = head.backward(&g)?;
        self.features_backward(&g)
    }

    /// Every convolution as `(name, in_channels, out_channels)`, in build order.
    pub fn conv_layers(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let blocks = self
            .encoders
            .iter()
            .chain(std::iter::once(&self.bottleneck))
            .chain(self.decoders.iter());
        for b in blocks {
            for layer in b.layers() {
                let c = &layer.conv;
                out.push((c.weight.name.clone(), c.in_channels(), c.out_channels()));
            }
        }
        for u in &self.upsamplers {
            let s = u.weight.value().shape();
            out.push((u.weight.name.clone(), s[0], s[1]));
        }
        if let Some(h) = &self.head {
            out.push((h.weight.name.clone(), h.in_channels(), h.out_channels()));
        }
        out
    }
}

impl<T: Scalar> HasParams<T> for PocketUNet<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for e in &self.encoders {
            v.extend(e.params());
        }
        v.extend(self.bottleneck.params());
        for (u, d) in self.upsamplers.iter().zip(&self.decoders) {
            v.extend(u.params());
            v.extend(d.params());
        }
        if let Some(h) = &self.head {
            v.extend(h.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for e in &mut self.encoders {
            v.extend(e.params_mut());
        }
        v.extend(self.bottleneck.params_mut());
        for (u, d) in self.upsamplers.iter_mut().zip(&mut self.decoders) {
            v.extend(u.params_mut());
            v.extend(d.params_mut());
        }
        if let Some(h) = &mut self.head {
            v.extend(h.params_mut());
        }
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v = Vec::new();
        for e in &self.encoders {
            v.extend(e.buffers());
        }
        v.extend(self.bottleneck.buffers());
        for d in &self.decoders {
            v.extend(d.buffers());
        }
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v = Vec::new();
        for e in &mut self.encoders {
            v.extend(e.buffers_mut());
        }
        v.extend(self.bottleneck.buffers_mut());
        for d in &mut self.decoders {
            v.extend(d.buffers_mut());
        }
        v
    }
}
