use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, LabelMask, Study, Volume3D};

/// Standardises to zero mean and unit population standard deviation.
pub fn zscore_normalize(vol: &Volume3D) -> Result<Volume3D> {
    let v = vol.values();
    if v.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || std < 1e-12 * mean.abs().max(1.0) {
        return Err(Error::ZeroVariance);
    }
    let out = v.iter().map(|&x| ((x as f64 - mean) / std) as f32).collect();
    Volume3D::new(vol.dims(), vol.spacing_mm(), out)
}

/// Continuous source index of target voxel `j`, clamped to the source extent.
fn source_coord(j: usize, target_spacing: f64, source_spacing: f64, n: usize) -> f64 {
    (j as f64 * target_spacing / source_spacing).clamp(0.0, (n - 1) as f64)
}

fn axis_weights(c: f64, n: usize) -> (usize, usize, f64) {
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - i0 as f64)
}

/// Trilinear resampling onto an isotropic grid. Voxel `j` sits at physical
/// position `j * spacing` on both grids; positions beyond the source extent
/// take the nearest edge value.
pub fn resample_isotropic(vol: &Volume3D, target_spacing_mm: f64, target_dims: [usize; 3]) -> Result<Volume3D> {
    check_target(target_spacing_mm, target_dims)?;
    let ts = [target_spacing_mm; 3];
    if vol.dims() == target_dims && vol.spacing_mm() == ts {
        return Ok(vol.clone());
    }
    let (sd, ss) = (vol.dims(), vol.spacing_mm());
    let src = vol.values();
    let ax: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            (0..target_dims[a])
                .map(|j| axis_weights(source_coord(j, target_spacing_mm, ss[a], sd[a]), sd[a]))
                .collect()
        })
        .collect();
    Volume3D::from_fn(target_dims, ts, |x, y, z| {
        let (x0, x1, fx) = ax[0][x];
        let (y0, y1, fy) = ax[1][y];
        let (z0, z1, fz) = ax[2][z];
        let at = |i, j, k| src[linear_index(sd, i, j, k)] as f64;
        let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
        let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
        let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
        let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        (c0 * (1.0 - fz) + c1 * fz) as f32
    })
}

/// Nearest-neighbour resampling of a label mask onto the same target grid.
pub fn resample_mask(mask: &LabelMask, target_spacing_mm: f64, target_dims: [usize; 3]) -> Result<LabelMask> {
    check_target(target_spacing_mm, target_dims)?;
    let ts = [target_spacing_mm; 3];
    if mask.dims() == target_dims && mask.spacing_mm() == ts {
        return Ok(mask.clone());
    }
    let (sd, ss) = (mask.dims(), mask.spacing_mm());
    let near = |j: usize, a: usize| source_coord(j, target_spacing_mm, ss[a], sd[a]).round() as usize;
    LabelMask::from_fn(target_dims, ts, |x, y, z| mask.get(near(x, 0), near(y, 1), near(z, 2)))
}

fn check_target(spacing: f64, dims: [usize; 3]) -> Result<()> {
    if !(spacing > 0.0 && spacing.is_finite()) || dims.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "resampling target must be positive: spacing {spacing}, dims {dims:?}"
        )));
    }
    Ok(())
}

/// Resampling target and normalisation switch applied to every study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Isotropic spacing; `None` keeps the stored grid.
    pub target_spacing_mm: Option<f64>,
    /// Target dims; `None` keeps the physical extent of the source.
    pub target_dims: Option<[usize; 3]>,
    pub normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_spacing_mm: None,
            target_dims: None,
            normalize: true,
        }
    }
}

/// Resamples every sequence and the mask, then z-scores each sequence.
pub fn prepare_study(study: &Study, cfg: &PreprocessConfig) -> Result<Study> {
    let (dims, spacing) = study.grid()?;
    let target = match (cfg.target_spacing_mm, cfg.target_dims) {
        (None, None) => None,
        (s, d) => {
            let s = s.unwrap_or(spacing[0]);
            let d = d.unwrap_or_else(|| {
                std::array::from_fn(|a| ((dims[a] as f64 * spacing[a] / s).round() as usize).max(1))
            });
            Some((s, d))
        }
    };
    let mut out = study.clone();
    for vol in out.sequences.values_mut() {
        if let Some((s, d)) = target {
            *vol = resample_isotropic(vol, s, d)?;
        }
        if cfg.normalize {
            *vol = zscore_normalize(vol)?;
        }
    }
    if let (Some(m), Some((s, d))) = (out.gtv.as_mut(), target) {
        *m = resample_mask(m, s, d)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_of_one_to_eight() {
        let v = Volume3D::new([2, 2, 2], [1.0; 3], (1..=8).map(|i| i as f32).collect()).unwrap();
        let z = zscore_normalize(&v).unwrap();
        let std = (5.25f64).sqrt();
        assert!((z.values()[0] as f64 - (1.0 - 4.5) / std).abs() < 1e-6);
        assert!((z.values()[0] + 1.5275).abs() < 1e-4);
        let mean: f64 = z.values().iter().map(|&x| x as f64).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-6);
    }

    #[test]
    fn constant_volume_has_zero_variance() {
        let v = Volume3D::filled([3, 3, 3], [1.0; 3], 4.2).unwrap();
        assert!(matches!(zscore_normalize(&v), Err(Error::ZeroVariance)));
    }

    #[test]
    fn standardised_input_is_a_fixed_point() {
        let v = Volume3D::new([2, 2, 2], [1.0; 3], (1..=8).map(|i| i as f32).collect()).unwrap();
        let z = zscore_normalize(&v).unwrap();
        let zz = zscore_normalize(&z).unwrap();
        for (a, b) in z.values().iter().zip(zz.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_resample_is_exact() {
        let v = Volume3D::from_fn([4, 5, 6], [0.86; 3], |x, y, z| (x * 7 + y * 3 + z) as f32).unwrap();
        assert_eq!(resample_isotropic(&v, 0.86, [4, 5, 6]).unwrap(), v);
    }

    #[test]
    fn constant_survives_any_resample() {
        let v = Volume3D::filled([5, 4, 3], [1.3, 0.7, 2.0], 2.5).unwrap();
        let r = resample_isotropic(&v, 0.86, [9, 7, 11]).unwrap();
        assert!(r.values().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn ramp_at_spacing_two_resampled_to_one() {
        // f = physical x = 2 * index
        let v = Volume3D::from_fn([8, 2, 2], [2.0, 1.0, 1.0], |x, _, _| 2.0 * x as f32).unwrap();
        let r = resample_isotropic(&v, 1.0, [15, 2, 2]).unwrap();
        for x in 0..15 {
            assert!((r.get(x, 1, 1) as f64 - x as f64).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn mask_nearest_neighbour() {
        let m = LabelMask::from_fn([4, 1, 1], [2.0, 1.0, 1.0], |x, _, _| x == 1).unwrap();
        let r = resample_mask(&m, 1.0, [8, 1, 1]).unwrap();
        // target x maps to source x/2, rounded half away from zero
        let got: Vec<bool> = (0..8).map(|x| r.get(x, 0, 0)).collect();
        assert_eq!(got, [false, true, true, false, false, false, false, false]);
    }
}
