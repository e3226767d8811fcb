use crate::error::{Error, Result};
use crate::volume::{linear_index, LabelMask};

/// Foreground voxels with at least one of their six face neighbours in the
/// background or outside the grid, as `(x, y, z)` triples in storage order.
pub fn surface_voxels(mask: &LabelMask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = mask.dims();
    let v = mask.values();
    let on = |x: usize, y: usize, z: usize| v[linear_index([nx, ny, nz], x, y, z)] != 0;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !on(x, y, z) {
                    continue;
                }
                let border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                if border
                    || !on(x - 1, y, z)
                    || !on(x + 1, y, z)
                    || !on(x, y - 1, z)
                    || !on(x, y + 1, z)
                    || !on(x, y, z - 1)
                    || !on(x, y, z + 1)
                {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Lower envelope of parabolas `f[q] + w (p - q)^2` along one line, in place.
fn envelope_1d(f: &mut [f64], w: f64, hull: &mut Vec<usize>, bounds: &mut Vec<f64>, out: &mut Vec<f64>) {
    hull.clear();
    bounds.clear();
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        let key = |i: usize| f[i] + w * (i * i) as f64;
        loop {
            match hull.last() {
                None => {
                    hull.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&r) => {
                    let s = (key(q) - key(r)) / (2.0 * w * (q - r) as f64);
                    if s <= *bounds.last().unwrap() {
                        hull.pop();
                        bounds.pop();
                    } else {
                        hull.push(q);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    if hull.is_empty() {
        return;
    }
    out.clear();
    let mut k = 0;
    for p in 0..f.len() {
        while k + 1 < hull.len() && bounds[k + 1] < p as f64 {
            k += 1;
        }
        let q = hull[k];
        let d = p as f64 - q as f64;
        out.push(w * d * d + f[q]);
    }
    f.copy_from_slice(out);
}

/// Exact squared Euclidean distance (mm²) from every voxel centre to the
/// nearest listed seed voxel, with per-axis spacing. Infinite when there are no seeds.
pub fn squared_distance_map(dims: [usize; 3], spacing_mm: [f64; 3], seeds: &[[usize; 3]]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut d = vec![f64::INFINITY; nx * ny * nz];
    for s in seeds {
        d[linear_index(dims, s[0], s[1], s[2])] = 0.0;
    }
    if seeds.is_empty() {
        return d;
    }
    let (mut hull, mut bounds, mut out) = (Vec::new(), Vec::new(), Vec::new());
    let mut line = Vec::new();
    let w = spacing_mm.map(|s| s * s);
    // x lines are contiguous
    for row in d.chunks_mut(nx) {
        envelope_1d(row, w[0], &mut hull, &mut bounds, &mut out);
    }
    for z in 0..nz {
        for x in 0..nx {
            line.clear();
            line.extend((0..ny).map(|y| d[linear_index(dims, x, y, z)]));
            envelope_1d(&mut line, w[1], &mut hull, &mut bounds, &mut out);
            for (y, &v) in line.iter().enumerate() {
                d[linear_index(dims, x, y, z)] = v;
            }
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            line.clear();
            line.extend((0..nz).map(|z| d[linear_index(dims, x, y, z)]));
            envelope_1d(&mut line, w[2], &mut hull, &mut bounds, &mut out);
            for (z, &v) in line.iter().enumerate() {
                d[linear_index(dims, x, y, z)] = v;
            }
        }
    }
    d
}

/// Percentile by linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Distances (mm) from each surface voxel of `from` to the nearest surface voxel of `to`.
pub fn directed_surface_distances(from: &LabelMask, to: &LabelMask) -> Result<Vec<f64>> {
    if !from.same_grid_as(to) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", from.dims(), to.dims())));
    }
    let (sa, sb) = (surface_voxels(from), surface_voxels(to));
    if sa.is_empty() || sb.is_empty() {
        return Err(Error::EmptyMask);
    }
    let map = squared_distance_map(to.dims(), to.spacing_mm(), &sb);
    Ok(sa
        .iter()
        .map(|v| map[linear_index(to.dims(), v[0], v[1], v[2])].sqrt())
        .collect())
}

/// Symmetric 95th-percentile surface distance in mm: the larger of the two
/// directed 95th percentiles.
pub fn hd95(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    let ab = directed_surface_distances(pred, truth)?;
    let ba = directed_surface_distances(truth, pred)?;
    let p = |d: &[f64]| percentile(d, 0.95).unwrap_or(0.0);
    Ok(p(&ab).max(p(&ba)))
}
