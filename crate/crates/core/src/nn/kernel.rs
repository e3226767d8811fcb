//! Register-blocked shifted correlation used by the stride-1 convolutions.

use std::any::TypeId;

use super::tensor::Scalar;

/// Columns computed per inner block; buffers read by [`shifted_correlate`]
/// need this much slack past their last addressed element.
pub(crate) const LANES: usize = 16;

pub(crate) fn round_up(n: usize) -> usize {
    n.div_ceil(LANES) * LANES
}

/// `out[r*out_stride + j] = sum_s sum_t weight(r, s, t) * src[s*src_stride + taps[t] + j]`
/// for `r < rows_out`, `j < len`. `len` must be a multiple of [`LANES`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn shifted_correlate<T: Scalar>(
    weight: impl Fn(usize, usize, usize) -> T,
    rows_out: usize,
    rows_in: usize,
    taps: &[usize],
    src: &[T],
    src_stride: usize,
    out: &mut [T],
    out_stride: usize,
    len: usize,
) {
    assert_eq!(len % LANES, 0);
    if len == 0 || rows_out == 0 {
        return;
    }
    let max_tap = taps.iter().copied().max().unwrap_or(0);
    assert!((rows_in.max(1) - 1) * src_stride + max_tap + len <= src.len());
    assert!((rows_out - 1) * out_stride + len <= out.len());
    let mut packed = Vec::new();
    let mut r0 = 0;
    while r0 < rows_out {
        let block = match rows_out - r0 {
            n if n >= 8 => 8,
            n if n >= 4 => 4,
            n if n >= 2 => 2,
            _ => 1,
        };
        packed.clear();
        for s in 0..rows_in {
            for t in 0..taps.len() {
                packed.extend((0..block).map(|c| weight(r0 + c, s, t)));
            }
        }
        let dst = &mut out[r0 * out_stride..];
        let args = Args {
            packed: &packed,
            rows_in,
            taps,
            src,
            src_stride,
            out_stride,
            len,
        };
        match block {
            8 => dispatch::<T, 8>(&args, dst),
            4 => dispatch::<T, 4>(&args, dst),
            2 => dispatch::<T, 2>(&args, dst),
            _ => dispatch::<T, 1>(&args, dst),
        }
        r0 += block;
    }
}

struct Args<'a, T> {
    packed: &'a [T],
    rows_in: usize,
    taps: &'a [usize],
    src: &'a [T],
    src_stride: usize,
    out_stride: usize,
    len: usize,
}

fn dispatch<T: Scalar, const B: usize>(a: &Args<'_, T>, out: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { block_avx2::<T, B>(a, out) };
            return;
        }
    }
    block_impl::<T, B, false>(a, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn block_avx2<T: Scalar, const B: usize>(a: &Args<'_, T>, out: &mut [T]) {
    block_impl::<T, B, true>(a, out)
}

#[inline(always)]
fn block_impl<T: Scalar, const B: usize, const FUSED: bool>(a: &Args<'_, T>, out: &mut [T]) {
    let nt = a.taps.len();
    let mut j = 0;
    while j < a.len {
        let mut acc = [[T::zero(); LANES]; B];
        for s in 0..a.rows_in {
            let base = s * a.src_stride + j;
            let wrow = &a.packed[s * nt * B..(s + 1) * nt * B];
            for (t, &off) in a.taps.iter().enumerate() {
                let xv: &[T; LANES] = a.src[base + off..base + off + LANES].try_into().unwrap();
                let wv: &[T; B] = wrow[t * B..(t + 1) * B].try_into().unwrap();
                for c in 0..B {
                    let wc = wv[c];
                    for l in 0..LANES {
                        acc[c][l] = if FUSED {
                            wc.mul_add(xv[l], acc[c][l])
                        } else {
                            acc[c][l] + wc * xv[l]
                        };
                    }
                }
            }
        }
        for (c, row) in acc.iter().enumerate() {
            out[c * a.out_stride + j..c * a.out_stride + j + LANES].copy_from_slice(row);
        }
        j += LANES;
    }
}

/// `out[r*out_stride + u] += sum_{j < len} a[r*a_stride + j] * src[offsets[u] + j]`
/// for `r < rows`. `len` must be a multiple of [`LANES`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn shifted_dot<T: Scalar>(
    a: &[T],
    a_stride: usize,
    rows: usize,
    src: &[T],
    offsets: &[usize],
    len: usize,
    out: &mut [T],
    out_stride: usize,
) {
    assert_eq!(len % LANES, 0);
    if len == 0 || rows == 0 || offsets.is_empty() {
        return;
    }
    assert!((rows - 1) * a_stride + len <= a.len());
    assert!(offsets.iter().all(|&o| o + len <= src.len()));
    assert!((rows - 1) * out_stride + offsets.len() <= out.len());
    let mut r0 = 0;
    while r0 < rows {
        let block = match rows - r0 {
            n if n >= 8 => 8,
            n if n >= 4 => 4,
            n if n >= 2 => 2,
            _ => 1,
        };
        let args = DotArgs {
            a: &a[r0 * a_stride..],
            a_stride,
            src,
            offsets,
            len,
            out_stride,
        };
        let dst = &mut out[r0 * out_stride..];
        match block {
            8 => dot_dispatch::<T, 8>(&args, dst),
            4 => dot_dispatch::<T, 4>(&args, dst),
            2 => dot_dispatch::<T, 2>(&args, dst),
            _ => dot_dispatch::<T, 1>(&args, dst),
        }
        r0 += block;
    }
}

struct DotArgs<'a, T> {
    a: &'a [T],
    a_stride: usize,
    src: &'a [T],
    offsets: &'a [usize],
    len: usize,
    out_stride: usize,
}

fn dot_dispatch<T: Scalar, const B: usize>(d: &DotArgs<'_, T>, out: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            if B == 8 && TypeId::of::<T>() == TypeId::of::<f32>() {
                // SAFETY: T is f32, so the slices reinterpret to themselves, and the
                // CPU features were detected at runtime.
                unsafe {
                    let a = std::slice::from_raw_parts(d.a.as_ptr() as *const f32, d.a.len());
                    let src = std::slice::from_raw_parts(d.src.as_ptr() as *const f32, d.src.len());
                    let o = std::slice::from_raw_parts_mut(out.as_mut_ptr() as *mut f32, out.len());
                    dot8_f32_avx2(a, d.a_stride, src, d.offsets, d.len, o, d.out_stride);
                }
                return;
            }
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { dot_avx2::<T, B>(d, out) };
            return;
        }
    }
    dot_impl::<T, B, false>(d, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_avx2<T: Scalar, const B: usize>(d: &DotArgs<'_, T>, out: &mut [T]) {
    dot_impl::<T, B, true>(d, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot8_f32_avx2(
    a: &[f32],
    a_stride: usize,
    src: &[f32],
    offsets: &[usize],
    len: usize,
    out: &mut [f32],
    out_stride: usize,
) {
    use std::arch::x86_64::*;
    assert!(7 * a_stride + len <= a.len());
    assert!(offsets.iter().all(|&o| o + len <= src.len()));
    assert!(7 * out_stride + offsets.len() <= out.len());
    let ap = a.as_ptr();
    let sp = src.as_ptr();
    let mut j0 = 0;
    while j0 < len {
        let j1 = (j0 + DOT_CHUNK).min(len);
        for (u, &off) in offsets.iter().enumerate() {
            let mut acc = [_mm256_setzero_ps(); 8];
            let mut j = j0;
            while j < j1 {
                let x = _mm256_loadu_ps(sp.add(off + j));
                for (c, v) in acc.iter_mut().enumerate() {
                    *v = _mm256_fmadd_ps(_mm256_loadu_ps(ap.add(c * a_stride + j)), x, *v);
                }
                j += 8;
            }
            for (c, v) in acc.iter().enumerate() {
                let mut lanes = [0.0f32; 8];
                _mm256_storeu_ps(lanes.as_mut_ptr(), *v);
                out[c * out_stride + u] += lanes.iter().sum::<f32>();
            }
        }
        j0 = j1;
    }
}

/// Column chunk of the dot kernel, sized so a row block stays cache-resident.
const DOT_CHUNK: usize = 256;

#[inline(always)]
fn dot_impl<T: Scalar, const B: usize, const FUSED: bool>(d: &DotArgs<'_, T>, out: &mut [T]) {
    let mut j0 = 0;
    while j0 < d.len {
        let j1 = (j0 + DOT_CHUNK).min(d.len);
        let rows: [&[T]; B] = std::array::from_fn(|c| &d.a[c * d.a_stride + j0..c * d.a_stride + j1]);
        for (u, &off) in d.offsets.iter().enumerate() {
            let xs = &d.src[off + j0..off + j1];
            let mut acc = [[T::zero(); LANES]; B];
            for (c, row) in acc.iter_mut().enumerate() {
                for (av, xv) in rows[c].chunks_exact(LANES).zip(xs.chunks_exact(LANES)) {
                    for l in 0..LANES {
                        row[l] = if FUSED {
                            av[l].mul_add(xv[l], row[l])
                        } else {
                            row[l] + av[l] * xv[l]
                        };
                    }
                }
            }
            for (c, row) in acc.iter().enumerate() {
                let mut total = T::zero();
                for &v in row {
                    total += v;
                }
                out[c * d.out_stride + u] += total;
            }
        }
        j0 = j1;
    }
}
