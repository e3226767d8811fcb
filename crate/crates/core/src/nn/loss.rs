use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Smoothing constant of the soft Dice term.
pub const DICE_SMOOTH: f64 = 1e-5;
/// Lower clamp on probabilities inside the cross-entropy logarithm.
pub const CE_CLAMP: f64 = 1e-7;

/// Value and gradient of a scalar loss.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: f64,
    pub dice_term: f64,
    pub ce_term: f64,
    pub grad: Tensor<T>,
}

/// `(1 - softDice(foreground)) + crossEntropy` for two-class softmax output.
///
/// Soft Dice is accumulated over the whole batch on channel 1:
/// `(2 sum(p t) + e) / (sum p + sum t + e)`. Cross-entropy is averaged over
/// voxels. `grad` is with respect to `probs`.
pub fn dice_ce_loss<T: Scalar>(probs: &Tensor<T>, target: &Tensor<T>) -> Result<LossOutput<T>> {
    if probs.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "probs {:?} vs target {:?}",
            probs.shape(),
            target.shape()
        )));
    }
    if probs.channels() < 2 {
        return Err(Error::ShapeMismatch("loss needs a background and a foreground channel".into()));
    }
    let (c, s) = (probs.channels(), probs.spatial_len());
    let voxels = (probs.batch() * s) as f64;

    let (mut inter, mut psum, mut tsum) = (0.0, 0.0, 0.0);
    for b in 0..probs.batch() {
        for (&p, &t) in probs.plane(b, 1).iter().zip(target.plane(b, 1)) {
            inter += p.f64() * t.f64();
            psum += p.f64();
            tsum += t.f64();
        }
    }
    let num = 2.0 * inter + DICE_SMOOTH;
    let den = psum + tsum + DICE_SMOOTH;
    let dice = num / den;

    let mut ce = 0.0;
    let mut grad = Tensor::zeros(probs.shape());
    for b in 0..probs.batch() {
        let ps = probs.sample(b);
        let ts = target.sample(b);
        let gs = grad.sample_mut(b);
        for k in 0..c {
            for i in 0..s {
                let (p, t) = (ps[k * s + i].f64(), ts[k * s + i].f64());
                let mut g = 0.0;
                if t != 0.0 {
                    if p > CE_CLAMP {
                        ce -= t * p.ln();
                        g -= t / (p * voxels);
                    } else {
                        ce -= t * CE_CLAMP.ln();
                    }
                }
                if k == 1 {
                    // d(1 - num/den)/dp = -(2t*den - num) / den^2
                    g -= (2.0 * t * den - num) / (den * den);
                }
                gs[k * s + i] = T::of(g);
            }
        }
    }
    ce /= voxels;
    let loss = (1.0 - dice) + ce;
    Ok(LossOutput {
        loss,
        dice_term: 1.0 - dice,
        ce_term: ce,
        grad,
    })
}

/// One-hot encodes a {0,1} label block into a two-channel tensor.
pub fn one_hot2<T: Scalar>(labels: &[u8], shape: [usize; 5]) -> Result<Tensor<T>> {
    let [n, c, d, h, w] = shape;
    let s = d * h * w;
    if c != 2 || labels.len() != n * s {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for one-hot shape {shape:?}",
            labels.len()
        )));
    }
    let mut t = Tensor::zeros(shape);
    for b in 0..n {
        let src = &labels[b * s..(b + 1) * s];
        let dst = t.sample_mut(b);
        for (i, &l) in src.iter().enumerate() {
            let k = (l != 0) as usize;
            dst[k * s + i] = T::one();
        }
    }
    Ok(t)
}
