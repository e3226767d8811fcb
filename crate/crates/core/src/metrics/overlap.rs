use crate::error::{Error, Result};
use crate::volume::LabelMask;

/// Voxel-set sizes `(|S|, |T|, |S ∩ T|)`.
pub fn overlap_counts(pred: &LabelMask, truth: &LabelMask) -> Result<(usize, usize, usize)> {
    if !pred.same_grid_as(truth) {
        return Err(Error::GridMismatch(format!(
            "prediction {:?} @ {:?} vs truth {:?} @ {:?}",
            pred.dims(),
            pred.spacing_mm(),
            truth.dims(),
            truth.spacing_mm()
        )));
    }
    let (mut s, mut t, mut both) = (0, 0, 0);
    for (&a, &b) in pred.values().iter().zip(truth.values()) {
        let (a, b) = (a != 0, b != 0);
        s += a as usize;
        t += b as usize;
        both += (a && b) as usize;
    }
    Ok((s, t, both))
}

/// `2|S ∩ T| / (|S| + |T|)`; 1.0 when both masks are empty.
pub fn dice(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    let (s, t, both) = overlap_counts(pred, truth)?;
    if s + t == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (s + t) as f64)
}

/// False-positive error `|S \ T| / |S|`.
pub fn fpe(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    let (s, _, both) = overlap_counts(pred, truth)?;
    if s == 0 {
        return Err(Error::EmptyDenominator("FPE"));
    }
    Ok((s - both) as f64 / s as f64)
}

/// False-negative error `|T \ S| / |T|`.
pub fn fne(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    let (_, t, both) = overlap_counts(pred, truth)?;
    if t == 0 {
        return Err(Error::EmptyDenominator("FNE"));
    }
    Ok((t - both) as f64 / t as f64)
}
