use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::volume::{linear_index, Sequence, Study, Volume3D};

/// A cubic sub-block cut from every requested sequence (and the mask).
/// Blocks are stored x-fastest, matching the source volume layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Corner voxel `(x, y, z)` in the source grid.
    pub origin: [usize; 3],
    pub size: usize,
    /// One block per sequence, in subset order.
    pub channels: Vec<Vec<f32>>,
    pub label: Option<Vec<u8>>,
}

/// How patch corners are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PatchSampling {
    /// Uniform over every valid corner.
    #[default]
    Uniform,
    /// With probability `fraction`, the patch is forced to contain a random
    /// foreground voxel; otherwise uniform.
    ForegroundBiased { fraction: f64 },
}

fn cut<T: Copy>(src: &[T], dims: [usize; 3], origin: [usize; 3], size: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(size * size * size);
    for k in 0..size {
        for j in 0..size {
            let start = linear_index(dims, origin[0], origin[1] + j, origin[2] + k);
            out.extend_from_slice(&src[start..start + size]);
        }
    }
    out
}

/// The subset volumes of a study, checked present and on a common grid.
pub fn subset_volumes<'a>(study: &'a Study, subsets: &[Sequence]) -> Result<Vec<&'a Volume3D>> {
    let vols = subsets
        .iter()
        .map(|&s| study.sequence(s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = vols.first() {
        if let Some(bad) = vols.iter().find(|v| !v.same_grid(first.dims(), first.spacing_mm())) {
            return Err(Error::GridMismatch(format!(
                "study {}: {:?} vs {:?}",
                study.study_id,
                bad.dims(),
                first.dims()
            )));
        }
    }
    Ok(vols)
}

/// Cuts one patch at `origin`.
pub fn extract_patch(study: &Study, subsets: &[Sequence], origin: [usize; 3], size: usize) -> Result<Patch> {
    let vols = subset_volumes(study, subsets)?;
    let dims = vols.first().map(|v| v.dims()).ok_or_else(|| {
        Error::InvalidConfig("empty sequence subset".into())
    })?;
    if (0..3).any(|a| origin[a] + size > dims[a]) || size == 0 {
        return Err(Error::PatchLargerThanVolume { size, dims });
    }
    let channels = vols.iter().map(|v| cut(v.values(), dims, origin, size)).collect();
    let label = match &study.gtv {
        Some(m) if m.dims() == dims => Some(cut(m.values(), dims, origin, size)),
        Some(m) => {
            return Err(Error::GridMismatch(format!(
                "mask dims {:?} vs image dims {dims:?}",
                m.dims()
            )))
        }
        None => None,
    };
    Ok(Patch { origin, size, channels, label })
}

/// Draws `n` patch corners uniformly over the valid lattice and cuts the patches.
pub fn sample_patches<R: Rng + ?Sized>(
    study: &Study,
    subsets: &[Sequence],
    n: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<Patch>> {
    sample_patches_with(study, subsets, n, size, PatchSampling::Uniform, rng)
}

pub fn sample_patches_with<R: Rng + ?Sized>(
    study: &Study,
    subsets: &[Sequence],
    n: usize,
    size: usize,
    mode: PatchSampling,
    rng: &mut R,
) -> Result<Vec<Patch>> {
    sample_origins(study, subsets, n, size, mode, rng)?
        .into_iter()
        .map(|origin| extract_patch(study, subsets, origin, size))
        .collect()
}

/// Draws `n` patch corners without cutting the patches.
pub fn sample_origins<R: Rng + ?Sized>(
    study: &Study,
    subsets: &[Sequence],
    n: usize,
    size: usize,
    mode: PatchSampling,
    rng: &mut R,
) -> Result<Vec<[usize; 3]>> {
    let vols = subset_volumes(study, subsets)?;
    let dims = vols
        .first()
        .map(|v| v.dims())
        .ok_or_else(|| Error::InvalidConfig("empty sequence subset".into()))?;
    if size == 0 || dims.iter().any(|&d| d < size) {
        return Err(Error::PatchLargerThanVolume { size, dims });
    }
    let foreground: Vec<usize> = match (mode, &study.gtv) {
        (PatchSampling::ForegroundBiased { .. }, Some(m)) => m
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect(),
        _ => Vec::new(),
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let biased = match mode {
            PatchSampling::ForegroundBiased { fraction } => !foreground.is_empty() && rng.random_bool(fraction.clamp(0.0, 1.0)),
            PatchSampling::Uniform => false,
        };
        let origin = if biased {
            let idx = foreground[rng.random_range(0..foreground.len())];
            let voxel = [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])];
            let mut o = [0; 3];
            for a in 0..3 {
                let lo = (voxel[a] + 1).saturating_sub(size);
                let hi = voxel[a].min(dims[a] - size);
                o[a] = rng.random_range(lo..=hi);
            }
            o
        } else {
            let mut o = [0; 3];
            for a in 0..3 {
                o[a] = rng.random_range(0..=dims[a] - size);
            }
            o
        };
        out.push(origin);
    }
    Ok(out)
}

/// Stacks patches into an `[n, c, s, s, s]` input tensor and, when every patch
/// is labelled, the matching two-class one-hot target.
pub fn patches_to_batch(patches: &[Patch]) -> Result<(Tensor<f32>, Option<Tensor<f32>>)> {
    let first = patches
        .first()
        .ok_or_else(|| Error::DegenerateBatch("no patches".into()))?;
    let (c, s) = (first.channels.len(), first.size);
    if patches.iter().any(|p| p.size != s || p.channels.len() != c) {
        return Err(Error::ShapeMismatch("patches differ in size or channel count".into()));
    }
    let shape = [patches.len(), c, s, s, s];
    let data: Vec<f32> = patches.iter().flat_map(|p| p.channels.iter().flatten().copied()).collect();
    let x = Tensor::from_vec(shape, data)?;
    if patches.iter().any(|p| p.label.is_none()) {
        return Ok((x, None));
    }
    let labels: Vec<u8> = patches.iter().flat_map(|p| p.label.iter().flatten().copied()).collect();
    let target = crate::nn::one_hot2(&labels, [patches.len(), 2, s, s, s])?;
    Ok((x, Some(target)))
}

/// The whole study as a `[1, c, nz, ny, nx]` tensor in subset order.
pub fn study_to_tensor(study: &Study, subsets: &[Sequence]) -> Result<Tensor<f32>> {
    let vols = subset_volumes(study, subsets)?;
    let dims = vols
        .first()
        .map(|v| v.dims())
        .ok_or_else(|| Error::InvalidConfig("empty sequence subset".into()))?;
    let data = vols.iter().flat_map(|v| v.values().iter().copied()).collect();
    Tensor::from_vec([1, vols.len(), dims[2], dims[1], dims[0]], data)
}
