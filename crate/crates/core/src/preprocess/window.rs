use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::volume::{linear_index, voxel_count, LabelMask, Sequence, Study};

use super::patch::subset_volumes;

/// Anything that maps an `[n, c, d, h, w]` input block to per-class
/// probabilities of the same spatial size.
pub trait PatchPredictor {
    fn in_channels(&self) -> usize;
    fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl<P: PatchPredictor + ?Sized> PatchPredictor for &P {
    fn in_channels(&self) -> usize {
        (**self).in_channels()
    }

    fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        (**self).predict(x)
    }
}

/// Per-class probabilities over a whole study grid, one x-fastest plane per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    planes: Vec<Vec<f32>>,
}

impl ProbabilityVolume {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], planes: Vec<Vec<f32>>) -> Result<Self> {
        let n = voxel_count(dims);
        if planes.len() < 2 || planes.iter().any(|p| p.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "{} class planes for {n} voxels",
                planes.len()
            )));
        }
        Ok(ProbabilityVolume { dims, spacing_mm, planes })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn classes(&self) -> usize {
        self.planes.len()
    }

    pub fn class_plane(&self, k: usize) -> &[f32] {
        &self.planes[k]
    }

    pub fn planes(&self) -> &[Vec<f32>] {
        &self.planes
    }

    pub fn get(&self, k: usize, x: usize, y: usize, z: usize) -> f32 {
        self.planes[k][linear_index(self.dims, x, y, z)]
    }

    /// Voxelwise argmax as a mask of non-background voxels; ties go to the lower class.
    pub fn argmax_mask(&self) -> LabelMask {
        let n = voxel_count(self.dims);
        let vals = (0..n)
            .map(|i| {
                let mut best = 0;
                for k in 1..self.planes.len() {
                    if self.planes[k][i] > self.planes[best][i] {
                        best = k;
                    }
                }
                (best != 0) as u8
            })
            .collect();
        LabelMask::new_unchecked_labels(self.dims, self.spacing_mm, vals)
            .expect("grid validated at construction")
    }
}

/// Window start positions along one axis: multiples of `stride`, with a final
/// window clamped so it ends at the boundary.
pub fn window_starts(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    if window >= dim {
        return vec![0];
    }
    let last = dim - window;
    let mut starts: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if *starts.last().unwrap_or(&0) != last {
        starts.push(last);
    }
    starts
}

/// Every window corner `(x, y, z)` for a grid.
pub fn window_lattice(dims: [usize; 3], window: [usize; 3], stride: usize) -> Vec<[usize; 3]> {
    let sx = window_starts(dims[0], window[0], stride);
    let sy = window_starts(dims[1], window[1], stride);
    let sz = window_starts(dims[2], window[2], stride);
    let mut out = Vec::with_capacity(sx.len() * sy.len() * sz.len());
    for &z in &sz {
        for &y in &sy {
            for &x in &sx {
                out.push([x, y, z]);
            }
        }
    }
    out
}

/// Number of windows covering each voxel.
pub fn coverage_counts(dims: [usize; 3], window: [usize; 3], stride: usize) -> Vec<u32> {
    let mut counts = vec![0u32; voxel_count(dims)];
    for o in window_lattice(dims, window, stride) {
        for z in o[2]..o[2] + window[2] {
            for y in o[1]..o[1] + window[1] {
                let row = linear_index(dims, o[0], y, z);
                for c in &mut counts[row..row + window[0]] {
                    *c += 1;
                }
            }
        }
    }
    counts
}

/// Tiles the study with overlapping cubic windows (clipped to the grid on
/// small axes), runs the predictor on each and averages the per-class
/// probabilities of every covering window.
pub fn sliding_window_predict<P: PatchPredictor + ?Sized>(
    model: &P,
    study: &Study,
    subsets: &[Sequence],
    patch_size: usize,
    stride: usize,
) -> Result<ProbabilityVolume> {
    if model.in_channels() != subsets.len() {
        return Err(Error::ChannelMismatch {
            expected: model.in_channels(),
            found: subsets.len(),
        });
    }
    if patch_size == 0 || stride == 0 || stride > patch_size {
        return Err(Error::InvalidConfig(format!(
            "stride {stride} must lie in [1, {patch_size}]"
        )));
    }
    let vols = subset_volumes(study, subsets)?;
    let dims = vols[0].dims();
    let window = dims.map(|d| d.min(patch_size));
    let [wx, wy, wz] = window;
    let wn = wx * wy * wz;
    let n = voxel_count(dims);

    let mut acc: Vec<Vec<f64>> = Vec::new();
    let mut counts = vec![0u32; n];
    let mut block = vec![0f32; vols.len() * wn];
    for o in window_lattice(dims, window, stride) {
        for (c, v) in vols.iter().enumerate() {
            let src = v.values();
            for k in 0..wz {
                for j in 0..wy {
                    let s = linear_index(dims, o[0], o[1] + j, o[2] + k);
                    let d = c * wn + (k * wy + j) * wx;
                    block[d..d + wx].copy_from_slice(&src[s..s + wx]);
                }
            }
        }
        let x = Tensor::from_vec([1, vols.len(), wz, wy, wx], block.clone())?;
        let probs = model.predict(&x)?;
        let classes = probs.channels();
        if probs.shape() != [1, classes, wz, wy, wx] || classes < 2 {
            return Err(Error::ShapeMismatch(format!(
                "predictor returned {:?} for a {:?} window",
                probs.shape(),
                window
            )));
        }
        if acc.is_empty() {
            acc = vec![vec![0f64; n]; classes];
        } else if acc.len() != classes {
            return Err(Error::ShapeMismatch("class count changed between windows".into()));
        }
        for k in 0..wz {
            for j in 0..wy {
                let g = linear_index(dims, o[0], o[1] + j, o[2] + k);
                let l = (k * wy + j) * wx;
                for (cls, plane) in acc.iter_mut().enumerate() {
                    let p = &probs.plane(0, cls)[l..l + wx];
                    for (a, &v) in plane[g..g + wx].iter_mut().zip(p) {
                        *a += v as f64;
                    }
                }
                for c in &mut counts[g..g + wx] {
                    *c += 1;
                }
            }
        }
    }
    let planes = acc
        .into_iter()
        .map(|plane| {
            plane
                .into_iter()
                .zip(&counts)
                .map(|(s, &c)| (s / c as f64) as f32)
                .collect()
        })
        .collect();
    ProbabilityVolume::new(dims, vols[0].spacing_mm(), planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume3D;
    use std::collections::BTreeMap;

    struct Constant(f32);

    impl PatchPredictor for Constant {
        fn in_channels(&self) -> usize {
            1
        }

        fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
            let [n, _, d, h, w] = x.shape();
            let mut t = Tensor::zeros([n, 2, d, h, w]);
            for b in 0..n {
                t.plane_mut(b, 0).fill(1.0 - self.0);
                t.plane_mut(b, 1).fill(self.0);
            }
            Ok(t)
        }
    }

    /// Softmax of (0, intensity): depends on each voxel's value only.
    struct Pointwise;

    impl PatchPredictor for Pointwise {
        fn in_channels(&self) -> usize {
            1
        }

        fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
            let [n, _, d, h, w] = x.shape();
            let mut t = Tensor::zeros([n, 2, d, h, w]);
            for b in 0..n {
                let fg: Vec<f32> = x.plane(b, 0).iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
                t.plane_mut(b, 1).copy_from_slice(&fg);
                for (o, f) in t.plane_mut(b, 0).iter_mut().zip(&fg) {
                    *o = 1.0 - f;
                }
            }
            Ok(t)
        }
    }

    fn study(dims: [usize; 3]) -> Study {
        let v = Volume3D::from_fn(dims, [1.0; 3], |x, y, z| ((x * 7 + y * 3 + z) % 11) as f32 / 5.0 - 1.0).unwrap();
        Study {
            study_id: "s".into(),
            patient_id: "p".into(),
            sequences: BTreeMap::from([(Sequence::T1C, v)]),
            gtv: None,
        }
    }

    #[test]
    fn starts_clamp_final_window() {
        assert_eq!(window_starts(96, 64, 32), vec![0, 32]);
        assert_eq!(window_starts(128, 64, 32), vec![0, 32, 64]);
        assert_eq!(window_starts(100, 64, 32), vec![0, 32, 36]);
        assert_eq!(window_starts(64, 64, 64), vec![0]);
        assert_eq!(window_starts(10, 16, 8), vec![0]);
    }

    #[test]
    fn lattice_and_coverage_counts() {
        // brute-force: a voxel is covered once per window whose span contains it on every axis
        let dims = [96; 3];
        let lat = window_lattice(dims, [64; 3], 32);
        assert_eq!(lat.len(), 8);
        let counts = coverage_counts(dims, [64; 3], 32);
        assert_eq!(counts[linear_index(dims, 48, 48, 48)], 8);
        assert_eq!(counts[linear_index(dims, 0, 0, 0)], 1);
        assert_eq!(counts[linear_index(dims, 95, 40, 10)], 2);
        assert!(counts.iter().all(|&c| c >= 1));

        assert_eq!(window_lattice([128; 3], [64; 3], 32).len(), 27);
        let c128 = coverage_counts([128; 3], [64; 3], 32);
        assert_eq!(c128[linear_index([128; 3], 64, 64, 64)], 8);
        assert_eq!(c128[linear_index([128; 3], 40, 40, 40)], 8);
    }

    #[test]
    fn constant_model_gives_constant_output() {
        let s = study([12, 10, 9]);
        let p = sliding_window_predict(&Constant(0.7), &s, &[Sequence::T1C], 8, 3).unwrap();
        assert!(p.class_plane(1).iter().all(|&v| (v - 0.7).abs() < 1e-6));
        assert!(p.class_plane(0).iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn single_window_equals_direct_forward() {
        let s = study([8, 8, 8]);
        let p = sliding_window_predict(&Pointwise, &s, &[Sequence::T1C], 8, 8).unwrap();
        let direct = Pointwise.predict(&super::super::study_to_tensor(&s, &[Sequence::T1C]).unwrap()).unwrap();
        assert_eq!(p.class_plane(1), direct.plane(0, 1));
    }

    #[test]
    fn pointwise_model_is_overlap_invariant_and_normalised() {
        let s = study([13, 9, 11]);
        let a = sliding_window_predict(&Pointwise, &s, &[Sequence::T1C], 4, 1).unwrap();
        let b = sliding_window_predict(&Pointwise, &s, &[Sequence::T1C], 4, 4).unwrap();
        for (x, y) in a.class_plane(1).iter().zip(b.class_plane(1)) {
            assert!((x - y).abs() < 1e-6);
        }
        for i in 0..a.class_plane(0).len() {
            assert!((a.class_plane(0)[i] + a.class_plane(1)[i] - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn channel_mismatch() {
        let s = study([8, 8, 8]);
        assert!(matches!(
            sliding_window_predict(&Constant(0.5), &s, &[Sequence::T1C, Sequence::T1C], 8, 4),
            Err(Error::ChannelMismatch { expected: 1, found: 2 })
        ));
    }
}
