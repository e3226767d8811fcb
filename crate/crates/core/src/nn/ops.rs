//! Parameter-free operations: ReLU, channel softmax, 2x max-pooling and
//! channel concatenation.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
    y
}

/// Gradient of ReLU given its output; the subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}

/// Softmax across channels at every voxel, stabilised by max-subtraction.
pub fn softmax_channels<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (c, s) = (x.channels(), x.spatial_len());
    let mut y = Tensor::zeros(x.shape());
    let mut buf = vec![0.0f64; c];
    for b in 0..x.batch() {
        let xs = x.sample(b);
        let ys = y.sample_mut(b);
        for i in 0..s {
            let mut m = f64::NEG_INFINITY;
            for (k, v) in buf.iter_mut().enumerate() {
                *v = xs[k * s + i].f64();
                m = m.max(*v);
            }
            let mut z = 0.0;
            for v in buf.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for (k, v) in buf.iter().enumerate() {
                ys[k * s + i] = T::of(v / z);
            }
        }
    }
    y
}

/// Vector-Jacobian product of the channel softmax given its output.
pub fn softmax_channels_backward<T: Scalar>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, s) = (probs.channels(), probs.spatial_len());
    let mut g = Tensor::zeros(probs.shape());
    for b in 0..probs.batch() {
        let ps = probs.sample(b);
        let gs = grad_out.sample(b);
        let out = g.sample_mut(b);
        for i in 0..s {
            let dot: f64 = (0..c).map(|k| ps[k * s + i].f64() * gs[k * s + i].f64()).sum();
            for k in 0..c {
                out[k * s + i] = T::of(ps[k * s + i].f64() * (gs[k * s + i].f64() - dot));
            }
        }
    }
    g
}

/// 2x2x2 max-pooling. Returns the pooled tensor and, per output voxel, the
/// linear spatial index of the selected input voxel (first index on ties).
pub fn max_pool2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let [d, h, w] = x.spatial();
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimension([d, h, w]));
    }
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let mut y = Tensor::zeros([x.batch(), x.channels(), od, oh, ow]);
    let mut arg = Vec::with_capacity(y.numel());
    for b in 0..x.batch() {
        for c in 0..x.channels() {
            let src = x.plane(b, c);
            let dst = y.plane_mut(b, c);
            let mut o = 0;
            for z in 0..od {
                for yy in 0..oh {
                    for xx in 0..ow {
                        let mut best = (2 * z * h + 2 * yy) * w + 2 * xx;
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let i = ((2 * z + dz) * h + 2 * yy + dy) * w + 2 * xx + dx;
                                    if src[i] > src[best] {
                                        best = i;
                                    }
                                }
                            }
                        }
                        dst[o] = src[best];
                        arg.push(best as u32);
                        o += 1;
                    }
                }
            }
        }
    }
    Ok((y, arg))
}

/// Routes each pooled gradient to its arg-max input voxel.
pub fn max_pool2_backward<T: Scalar>(
    input_shape: [usize; 5],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.numel() {
        return Err(Error::ShapeMismatch("pool gradient / argmax length".into()));
    }
    let mut g = Tensor::zeros(input_shape);
    let per_plane = grad_out.spatial_len();
    for b in 0..grad_out.batch() {
        for c in 0..grad_out.channels() {
            let base = (b * grad_out.channels() + c) * per_plane;
            let go = grad_out.plane(b, c);
            let dst = g.plane_mut(b, c);
            for i in 0..per_plane {
                dst[argmax[base + i] as usize] += go[i];
            }
        }
    }
    Ok(g)
}

/// Stacks channels of `a` then `b`.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.batch() != b.batch() || a.spatial() != b.spatial() {
        return Err(Error::ShapeMismatch(format!(
            "concat {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let [n, ca, d, h, w] = a.shape();
    let cb = b.channels();
    let mut out = Tensor::zeros([n, ca + cb, d, h, w]);
    let (la, lb) = (a.sample(0).len(), b.sample(0).len());
    for i in 0..n {
        let dst = out.sample_mut(i);
        dst[..la].copy_from_slice(a.sample(i));
        dst[la..la + lb].copy_from_slice(b.sample(i));
    }
    Ok(out)
}

/// Splits channels into the first `first` and the rest; the inverse of
/// [`concat_channels`].
pub fn split_channels<T: Scalar>(x: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, d, h, w] = x.shape();
    if first > c {
        return Err(Error::ShapeMismatch(format!("split {first} of {c} channels")));
    }
    let s = d * h * w;
    let mut a = Tensor::zeros([n, first, d, h, w]);
    let mut b = Tensor::zeros([n, c - first, d, h, w]);
    for i in 0..n {
        let src = x.sample(i);
        a.sample_mut(i).copy_from_slice(&src[..first * s]);
        b.sample_mut(i).copy_from_slice(&src[first * s..]);
    }
    Ok((a, b))
}

/// Selects a subset of channels in the given order.
pub fn select_channels<T: Scalar>(x: &Tensor<T>, channels: &[usize]) -> Result<Tensor<T>> {
    let [n, c, d, h, w] = x.shape();
    if let Some(&bad) = channels.iter().find(|&&k| k >= c) {
        return Err(Error::ShapeMismatch(format!("channel {bad} of {c}")));
    }
    let mut out = Tensor::zeros([n, channels.len(), d, h, w]);
    for i in 0..n {
        for (j, &k) in channels.iter().enumerate() {
            out.plane_mut(i, j).copy_from_slice(x.plane(i, k));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: [usize; 5], v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn relu_values_and_gradient() {
        let x = t([1, 1, 1, 1, 3], vec![-1.0, 2.0, 0.0]);
        let y = relu(&x);
        assert_eq!(y.data(), &[0.0, 2.0, 0.0]);
        let g = relu_backward(&y, &Tensor::filled(x.shape(), 1.0));
        assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn all_negative_relu_blocks_gradient() {
        let x = t([1, 2, 1, 1, 2], vec![-1.0, -2.0, -0.5, -9.0]);
        let y = relu(&x);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let g = relu_backward(&y, &Tensor::filled(x.shape(), 3.0));
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_known_values() {
        let p = softmax_channels(&t([1, 2, 1, 1, 1], vec![0.0, 0.0]));
        assert_eq!(p.data(), &[0.5, 0.5]);
        let p = softmax_channels(&t([1, 2, 1, 1, 1], vec![1.0, 3.0]));
        let e2 = (2.0f64).exp();
        assert!((p.data()[0] - 1.0 / (1.0 + e2)).abs() < 1e-15);
        assert!((p.data()[0] - 0.1192).abs() < 1e-4);
        assert!((p.data()[1] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let a = softmax_channels(&t([1, 3, 1, 1, 1], vec![0.1, -2.0, 0.7]));
        let b = softmax_channels(&t([1, 3, 1, 1, 1], vec![100.1, 98.0, 100.7]));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let big = softmax_channels(&Tensor::<f32>::from_vec([1, 2, 1, 1, 2], vec![1e4, -1e4, -1e4, 1e4]).unwrap());
        assert!(big.all_finite());
        assert_eq!(big.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn pool_of_1_to_8_is_8() {
        let x = t([1, 1, 2, 2, 2], (1..=8).map(f64::from).collect());
        let (y, arg) = max_pool2(&x).unwrap();
        assert_eq!(y.data(), &[8.0]);
        assert_eq!(arg, vec![7]);
        let g = max_pool2_backward(x.shape(), &arg, &Tensor::filled(y.shape(), 2.0)).unwrap();
        assert_eq!(g.data()[7], 2.0);
        assert_eq!(g.sum(), 2.0);
    }

    #[test]
    fn pool_ties_route_to_first_index() {
        let x = Tensor::<f64>::filled([1, 1, 2, 2, 2], 5.0);
        let (y, arg) = max_pool2(&x).unwrap();
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn pool_constant_and_odd() {
        let x = Tensor::<f64>::filled([2, 3, 4, 6, 2], 1.5);
        let (y, _) = max_pool2(&x).unwrap();
        assert_eq!(y.shape(), [2, 3, 2, 3, 1]);
        assert!(y.data().iter().all(|&v| v == 1.5));
        assert!(matches!(
            max_pool2(&Tensor::<f64>::zeros([1, 1, 3, 2, 2])),
            Err(Error::OddDimension(_))
        ));
    }

    #[test]
    fn concat_split_recovers_inputs() {
        let a = t([2, 4, 1, 1, 2], (0..16).map(f64::from).collect());
        let b = t([2, 4, 1, 1, 2], (100..116).map(f64::from).collect());
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), [2, 8, 1, 1, 2]);
        let (a2, b2) = split_channels(&c, 4).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
        assert!(concat_channels(&a, &Tensor::zeros([2, 4, 1, 2, 1])).is_err());
    }
}
