//! 3D convolution (cross-correlation, no kernel flip) and transposed convolution.
//!
//! Stride-1 convolutions work on a zero-padded copy of each sample: in the
//! padded, flattened layout every kernel tap is a constant offset, so no
//! im2col buffer is needed. Strided convolutions and transposed
//! convolutions go through im2col/col2im.

use rand::Rng;

use super::kernel::{round_up, shifted_correlate, shifted_dot, LANES};
use super::param::{kaiming_normal, HasParams, Param};
use super::tensor::{gemm, Mat, MatMut, Scalar, Tensor};
use crate::error::{Error, Result};

fn out_dim(d: usize, k: usize, s: usize, p: usize) -> Result<usize> {
    if s == 0 || d + 2 * p < k || !(d + 2 * p - k).is_multiple_of(s) {
        return Err(Error::ShapeMismatch(format!(
            "conv of extent {d} with kernel {k}, stride {s}, padding {p} is not integral"
        )));
    }
    Ok((d + 2 * p - k) / s + 1)
}

/// Output spatial dims of a convolution.
pub fn conv_output_dims(dims: [usize; 3], k: usize, s: usize, p: usize) -> Result<[usize; 3]> {
    Ok([
        out_dim(dims[0], k, s, p)?,
        out_dim(dims[1], k, s, p)?,
        out_dim(dims[2], k, s, p)?,
    ])
}

/// Unfolds `src` (`c` channels over `dims`) into a `(c*k^3) x prod(grid)` matrix:
/// column `o` of row `(ci,kz,ky,kx)` reads `src[ci][o*s + kd - p]` or zero.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    src: &[T],
    c: usize,
    dims: [usize; 3],
    k: usize,
    s: usize,
    p: usize,
    grid: [usize; 3],
    cols: &mut [T],
) {
    let [d, h, w] = dims;
    let [gd, gh, gw] = grid;
    let no = gd * gh * gw;
    debug_assert_eq!(cols.len(), c * k * k * k * no);
    let mut row = 0;
    for ci in 0..c {
        let chan = &src[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let dst = &mut cols[row * no..(row + 1) * no];
                    let mut idx = 0;
                    for oz in 0..gd {
                        let iz = (oz * s + kz) as isize - p as isize;
                        for oy in 0..gh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            let line = &mut dst[idx..idx + gw];
                            idx += gw;
                            if iz < 0 || iz >= d as isize || iy < 0 || iy >= h as isize {
                                line.fill(T::zero());
                                continue;
                            }
                            let base = (iz as usize * h + iy as usize) * w;
                            for (ox, v) in line.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - p as isize;
                                *v = if ix >= 0 && ix < w as isize {
                                    chan[base + ix as usize]
                                } else {
                                    T::zero()
                                };
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds the matrix back onto `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    dims: [usize; 3],
    k: usize,
    s: usize,
    p: usize,
    grid: [usize; 3],
    dst: &mut [T],
) {
    let [d, h, w] = dims;
    let [gd, gh, gw] = grid;
    let no = gd * gh * gw;
    let mut row = 0;
    for ci in 0..c {
        let chan = &mut dst[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let src = &cols[row * no..(row + 1) * no];
                    let mut idx = 0;
                    for oz in 0..gd {
                        let iz = (oz * s + kz) as isize - p as isize;
                        for oy in 0..gh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            let line = &src[idx..idx + gw];
                            idx += gw;
                            if iz < 0 || iz >= d as isize || iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = (iz as usize * h + iy as usize) * w;
                            for (ox, &v) in line.iter().enumerate() {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    chan[base + ix as usize] += v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn check_conv_input<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [co, ci, k, k1, k2] = w.shape();
    if k != k1 || k != k2 {
        return Err(Error::ShapeMismatch(format!("non-cubic kernel {:?}", w.shape())));
    }
    if x.channels() != ci {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, kernel expects {ci}",
            x.channels()
        )));
    }
    Ok((co, ci, k))
}

/// Geometry of the shifted-GEMM layout for a stride-1 convolution.
struct Shifted {
    pdims: [usize; 3],
    np: usize,
    q: usize,
    odims: [usize; 3],
}

impl Shifted {
    fn new(dims: [usize; 3], k: usize, p: usize) -> Result<Self> {
        let odims = conv_output_dims(dims, k, 1, p)?;
        let pdims = [dims[0] + 2 * p, dims[1] + 2 * p, dims[2] + 2 * p];
        let np = pdims[0] * pdims[1] * pdims[2];
        let q = (odims[0] - 1) * pdims[1] * pdims[2] + (odims[1] - 1) * pdims[2] + odims[2];
        Ok(Shifted { pdims, np, q, odims })
    }

    fn tap_offset(&self, tap: usize, k: usize) -> usize {
        let (dz, dy, dx) = (tap / (k * k), (tap / k) % k, tap % k);
        (dz * self.pdims[1] + dy) * self.pdims[2] + dx
    }

    fn taps(&self, k: usize) -> Vec<usize> {
        (0..k * k * k).map(|t| self.tap_offset(t, k)).collect()
    }
}

fn pad_sample<T: Scalar>(src: &[T], c: usize, dims: [usize; 3], p: usize, g: &Shifted) -> Vec<T> {
    let [d, h, w] = dims;
    let [_, ph, pw] = g.pdims;
    let mut out = vec![T::zero(); c * g.np + LANES];
    for ci in 0..c {
        for z in 0..d {
            for y in 0..h {
                let s = ((ci * d + z) * h + y) * w;
                let t = ci * g.np + ((z + p) * ph + y + p) * pw + p;
                out[t..t + w].copy_from_slice(&src[s..s + w]);
            }
        }
    }
    out
}

fn crop_sample<T: Scalar>(src: &[T], c: usize, row: usize, g: &Shifted, dst: &mut [T]) {
    let [od, oh, ow] = g.odims;
    let [_, ph, pw] = g.pdims;
    for ci in 0..c {
        for z in 0..od {
            for y in 0..oh {
                let s = ci * row + (z * ph + y) * pw;
                let t = ((ci * od + z) * oh + y) * ow;
                dst[t..t + ow].copy_from_slice(&src[s..s + ow]);
            }
        }
    }
}

/// Forward convolution: `y[co] = sum_ci w[co,ci] * x[ci] (+ b[co])`.
pub fn conv3d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    if stride != 1 {
        return conv3d_forward_im2col(x, w, bias, stride, padding);
    }
    let (co, ci, k) = check_conv_input(x, w)?;
    let k3 = k * k * k;
    let g = Shifted::new(x.spatial(), k, padding)?;
    let [od, oh, ow] = g.odims;
    let qr = round_up(g.q);
    let taps = g.taps(k);
    let wd = w.data();
    let mut out = Tensor::zeros([x.batch(), co, od, oh, ow]);
    let mut tmp = vec![T::zero(); co * qr];
    for b in 0..x.batch() {
        let xs = pad_sample(x.sample(b), ci, x.spatial(), padding, &g);
        shifted_correlate(
            |r, s, t| wd[(r * ci + s) * k3 + t],
            co,
            ci,
            &taps,
            &xs,
            g.np,
            &mut tmp,
            qr,
            qr,
        );
        crop_sample(&tmp, co, qr, &g, out.sample_mut(b));
    }
    if let Some(bias) = bias {
        add_channel_bias(&mut out, bias.data());
    }
    Ok(out)
}

fn add_channel_bias<T: Scalar>(out: &mut Tensor<T>, bias: &[T]) {
    for b in 0..out.batch() {
        for (c, &bv) in bias.iter().enumerate() {
            out.plane_mut(b, c).iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn channel_sums<T: Scalar>(g: &Tensor<T>) -> Vec<T> {
    let mut sums = vec![T::zero(); g.channels()];
    for b in 0..g.batch() {
        for (c, s) in sums.iter_mut().enumerate() {
            *s += g.plane(b, c).iter().copied().sum();
        }
    }
    sums
}

/// Gradients of [`conv3d_forward`]: `(grad_input, grad_weight, grad_bias)`.
pub fn conv3d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    if stride != 1 {
        return conv3d_backward_im2col(x, w, grad_out, stride, padding);
    }
    let (co, ci, k) = check_conv_input(x, w)?;
    let k3 = k * k * k;
    let g = Shifted::new(x.spatial(), k, padding)?;
    if grad_out.shape() != [x.batch(), co, g.odims[0], g.odims[1], g.odims[2]] {
        return Err(Error::ShapeMismatch(format!(
            "conv grad {:?} vs expected output {:?}",
            grad_out.shape(),
            g.odims
        )));
    }
    let [od, oh, ow] = g.odims;
    let [_, ph, pw] = g.pdims;
    let taps = g.taps(k);
    let max_tap = taps[k3 - 1];
    // grad_out in the padded-stride layout, preceded by `max_tap` zeros per row so
    // the input gradient becomes a correlation with the flipped kernel
    let lg = g.np + max_tap + LANES;
    let npr = round_up(g.np);
    let qr = round_up(g.q);
    let offsets: Vec<usize> = (0..ci)
        .flat_map(|i| taps.iter().map(move |&t| i * g.np + t))
        .collect();
    let wd = w.data();
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gpad = vec![T::zero(); co * lg + LANES];
    let mut gxp = vec![T::zero(); ci * npr];
    for b in 0..x.batch() {
        let xs = pad_sample(x.sample(b), ci, x.spatial(), padding, &g);
        let gs = grad_out.sample(b);
        for c in 0..co {
            for z in 0..od {
                for y in 0..oh {
                    let s = ((c * od + z) * oh + y) * ow;
                    let t = c * lg + max_tap + (z * ph + y) * pw;
                    gpad[t..t + ow].copy_from_slice(&gs[s..s + ow]);
                }
            }
        }
        shifted_dot(
            &gpad[max_tap..],
            lg,
            co,
            &xs,
            &offsets,
            qr,
            gw.data_mut(),
            ci * k3,
        );
        shifted_correlate(
            |r, s, t| wd[(s * ci + r) * k3 + (k3 - 1 - t)],
            ci,
            co,
            &taps,
            &gpad,
            lg,
            &mut gxp,
            npr,
            npr,
        );
        // crop the padded input gradient back to the input grid
        let [d, h, wdim] = x.spatial();
        let dst = gx.sample_mut(b);
        for c in 0..ci {
            for z in 0..d {
                for y in 0..h {
                    let s = c * npr + ((z + padding) * ph + y + padding) * pw + padding;
                    let t = ((c * d + z) * h + y) * wdim;
                    dst[t..t + wdim].copy_from_slice(&gxp[s..s + wdim]);
                }
            }
        }
    }
    Ok((gx, gw, channel_sums(grad_out)))
}

/// im2col/GEMM convolution for any stride. Also the reference the shifted
/// path is tested against.
pub fn conv3d_forward_im2col<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (co, ci, k) = check_conv_input(x, w)?;
    let kk = ci * k * k * k;
    let od = conv_output_dims(x.spatial(), k, stride, padding)?;
    let no = od[0] * od[1] * od[2];
    let mut out = Tensor::zeros([x.batch(), co, od[0], od[1], od[2]]);
    let mut cols = vec![T::zero(); kk * no];
    for b in 0..x.batch() {
        im2col(x.sample(b), ci, x.spatial(), k, stride, padding, od, &mut cols);
        gemm(
            co,
            kk,
            no,
            T::one(),
            Mat {
                data: w.data(),
                offset: 0,
                rs: kk,
                cs: 1,
            },
            Mat {
                data: &cols,
                offset: 0,
                rs: no,
                cs: 1,
            },
            T::zero(),
            MatMut {
                data: out.sample_mut(b),
                offset: 0,
                rs: no,
                cs: 1,
            },
        );
    }
    if let Some(bias) = bias {
        add_channel_bias(&mut out, bias.data());
    }
    Ok(out)
}

fn conv3d_backward_im2col<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (co, ci, k) = check_conv_input(x, w)?;
    let kk = ci * k * k * k;
    let od = conv_output_dims(x.spatial(), k, stride, padding)?;
    if grad_out.shape() != [x.batch(), co, od[0], od[1], od[2]] {
        return Err(Error::ShapeMismatch(format!(
            "conv grad {:?} vs expected output {od:?}",
            grad_out.shape()
        )));
    }
    let no = od[0] * od[1] * od[2];
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut cols = vec![T::zero(); kk * no];
    let mut gcols = vec![T::zero(); kk * no];
    for b in 0..x.batch() {
        im2col(x.sample(b), ci, x.spatial(), k, stride, padding, od, &mut cols);
        let gs = grad_out.sample(b);
        gemm(
            co,
            no,
            kk,
            T::one(),
            Mat {
                data: gs,
                offset: 0,
                rs: no,
                cs: 1,
            },
            Mat {
                data: &cols,
                offset: 0,
                rs: 1,
                cs: no,
            },
            T::one(),
            MatMut {
                data: gw.data_mut(),
                offset: 0,
                rs: kk,
                cs: 1,
            },
        );
        gemm(
            kk,
            co,
            no,
            T::one(),
            Mat {
                data: w.data(),
                offset: 0,
                rs: 1,
                cs: kk,
            },
            Mat {
                data: gs,
                offset: 0,
                rs: no,
                cs: 1,
            },
            T::zero(),
            MatMut {
                data: &mut gcols,
                offset: 0,
                rs: no,
                cs: 1,
            },
        );
        col2im(&gcols, ci, x.spatial(), k, stride, padding, od, gx.sample_mut(b));
    }
    Ok((gx, gw, channel_sums(grad_out)))
}

/// Output spatial dims of a transposed convolution: `(in - 1) * s + k`.
pub fn conv_transpose_output_dims(dims: [usize; 3], k: usize, s: usize) -> [usize; 3] {
    [
        (dims[0] - 1) * s + k,
        (dims[1] - 1) * s + k,
        (dims[2] - 1) * s + k,
    ]
}

fn check_convt_input<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [ci, co, k, k1, k2] = w.shape();
    if k != k1 || k != k2 {
        return Err(Error::ShapeMismatch(format!("non-cubic kernel {:?}", w.shape())));
    }
    if x.channels() != ci {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, transposed kernel expects {ci}",
            x.channels()
        )));
    }
    if x.spatial().contains(&0) {
        return Err(Error::ShapeMismatch("empty input".into()));
    }
    Ok((ci, co, k))
}

/// Transposed convolution with weight layout `(Cin, Cout, k, k, k)`, no padding.
pub fn conv_transpose3d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (ci, co, k) = check_convt_input(x, w)?;
    let rows = co * k * k * k;
    let nin = x.spatial_len();
    let od = conv_transpose_output_dims(x.spatial(), k, stride);
    let mut out = Tensor::zeros([x.batch(), co, od[0], od[1], od[2]]);
    let mut cols = vec![T::zero(); rows * nin];
    for b in 0..x.batch() {
        gemm(
            rows,
            ci,
            nin,
            T::one(),
            Mat {
                data: w.data(),
                offset: 0,
                rs: 1,
                cs: rows,
            },
            Mat {
                data: x.sample(b),
                offset: 0,
                rs: nin,
                cs: 1,
            },
            T::zero(),
            MatMut {
                data: &mut cols,
                offset: 0,
                rs: nin,
                cs: 1,
            },
        );
        col2im(&cols, co, od, k, stride, 0, x.spatial(), out.sample_mut(b));
    }
    if let Some(bias) = bias {
        add_channel_bias(&mut out, bias.data());
    }
    Ok(out)
}

pub fn conv_transpose3d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (ci, co, k) = check_convt_input(x, w)?;
    let rows = co * k * k * k;
    let nin = x.spatial_len();
    let od = conv_transpose_output_dims(x.spatial(), k, stride);
    if grad_out.shape() != [x.batch(), co, od[0], od[1], od[2]] {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv grad {:?} vs expected {od:?}",
            grad_out.shape()
        )));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut cols = vec![T::zero(); rows * nin];
    for b in 0..x.batch() {
        im2col(grad_out.sample(b), co, od, k, stride, 0, x.spatial(), &mut cols);
        gemm(
            ci,
            rows,
            nin,
            T::one(),
            Mat {
                data: w.data(),
                offset: 0,
                rs: rows,
                cs: 1,
            },
            Mat {
                data: &cols,
                offset: 0,
                rs: nin,
                cs: 1,
            },
            T::zero(),
            MatMut {
                data: gx.sample_mut(b),
                offset: 0,
                rs: nin,
                cs: 1,
            },
        );
        gemm(
            ci,
            nin,
            rows,
            T::one(),
            Mat {
                data: x.sample(b),
                offset: 0,
                rs: nin,
                cs: 1,
            },
            Mat {
                data: &cols,
                offset: 0,
                rs: 1,
                cs: nin,
            },
            T::one(),
            MatMut {
                data: gw.data_mut(),
                offset: 0,
                rs: rows,
                cs: 1,
            },
        );
    }
    Ok((gx, gw, channel_sums(grad_out)))
}

fn accumulate<T: Scalar>(dst: &mut Tensor<T>, src: &[T]) {
    for (a, &b) in dst.data_mut().iter_mut().zip(src) {
        *a += b;
    }
}

/// Convolution layer with weight `(Cout, Cin, k, k, k)` and optional bias.
#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv3d<T> {
    /// Kaiming-initialised weights, zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel, kernel, kernel];
        let fan_in = in_channels * kernel * kernel * kernel;
        Conv3d {
            weight: Param::new(format!("{name}.weight"), kaiming_normal(shape, fan_in, rng)),
            bias: with_bias.then(|| Param::zeros(format!("{name}.bias"), [out_channels, 1, 1, 1, 1])),
            kernel,
            stride,
            padding,
            input: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value().shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value().shape()[0]
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv3d_forward(
            x,
            self.weight.value(),
            self.bias.as_ref().map(|b| b.value()),
            self.stride,
            self.padding,
        )
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::ShapeMismatch("conv backward before forward".into()))?;
        let (gx, gw, gb) = conv3d_backward(&x, self.weight.value(), grad_out, self.stride, self.padding)?;
        accumulate(self.weight.grad_mut(), gw.data());
        if let Some(b) = &mut self.bias {
            accumulate(b.grad_mut(), &gb);
        }
        Ok(gx)
    }
}

impl<T: Scalar> HasParams<T> for Conv3d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Transposed convolution layer, weight `(Cin, Cout, k, k, k)` plus bias.
#[derive(Debug, Clone)]
pub struct ConvTranspose3d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub kernel: usize,
    pub stride: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose3d<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let shape = [in_channels, out_channels, kernel, kernel, kernel];
        // each output voxel receives in_channels * (k/s)^3 contributions
        let taps = (kernel / stride.max(1)).max(1);
        let fan_in = in_channels * taps * taps * taps;
        ConvTranspose3d {
            weight: Param::new(format!("{name}.weight"), kaiming_normal(shape, fan_in, rng)),
            bias: Param::zeros(format!("{name}.bias"), [out_channels, 1, 1, 1, 1]),
            kernel,
            stride,
            input: None,
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv_transpose3d_forward(x, self.weight.value(), Some(self.bias.value()), self.stride)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::ShapeMismatch("transposed conv backward before forward".into()))?;
        let (gx, gw, gb) = conv_transpose3d_backward(&x, self.weight.value(), grad_out, self.stride)?;
        accumulate(self.weight.grad_mut(), gw.data());
        accumulate(self.bias.grad_mut(), &gb);
        Ok(gx)
    }
}

impl<T: Scalar> HasParams<T> for ConvTranspose3d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
