//! Volumes, label masks, studies and dataset manifests.
//!
//! All grids are stored x-fastest: the voxel `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`.

mod io;
mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_mask, load_volume, save_mask, save_volume};
pub use manifest::{load_manifest, load_study, save_manifest, DatasetManifest, ManifestEntry};

/// One MRI acquisition type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sequence {
    T1,
    T2,
    T1C,
    FL,
}

impl Sequence {
    pub const ALL: [Sequence; 4] = [Sequence::T1, Sequence::T2, Sequence::T1C, Sequence::FL];

    pub fn as_str(self) -> &'static str {
        match self {
            Sequence::T1 => "T1",
            Sequence::T2 => "T2",
            Sequence::T1C => "T1C",
            Sequence::FL => "FL",
        }
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" => Ok(Sequence::T1),
            "T2" => Ok(Sequence::T2),
            "T1C" => Ok(Sequence::T1C),
            "FL" | "FLAIR" => Ok(Sequence::FL),
            other => Err(Error::Parse(format!("unknown sequence {other:?}"))),
        }
    }
}

/// Number of voxels in a grid.
pub fn voxel_count(dims: [usize; 3]) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Linear index of `(x, y, z)` in an x-fastest grid.
#[inline]
pub fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

fn check_grid(dims: [usize; 3], spacing_mm: [f64; 3], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
    }
    if spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidVolume(format!(
            "spacing must be positive, got {spacing_mm:?}"
        )));
    }
    if len != voxel_count(dims) {
        return Err(Error::InvalidVolume(format!(
            "{} values for dims {:?} ({} voxels)",
            len,
            dims,
            voxel_count(dims)
        )));
    }
    Ok(())
}

/// A scalar 3D image grid with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    values: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], values: Vec<f32>) -> Result<Self> {
        check_grid(dims, spacing_mm, values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteVoxel { index });
        }
        Ok(Volume3D {
            dims,
            spacing_mm,
            values,
        })
    }

    pub fn filled(dims: [usize; 3], spacing_mm: [f64; 3], value: f32) -> Result<Self> {
        Self::new(dims, spacing_mm, vec![value; voxel_count(dims)])
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel index.
    pub fn from_fn(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    values.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing_mm, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[linear_index(self.dims, x, y, z)]
    }

    pub fn same_grid(&self, dims: [usize; 3], spacing_mm: [f64; 3]) -> bool {
        self.dims == dims && self.spacing_mm == spacing_mm
    }
}

/// Binary ground-truth or predicted mask (1 = GTV).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    values: Vec<u8>,
}

impl LabelMask {
    /// Builds a mask; values outside {0,1} are rejected.
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], values: Vec<u8>) -> Result<Self> {
        let mask = Self::new_unchecked_labels(dims, spacing_mm, values)?;
        if let Some(index) = mask.values.iter().position(|&v| v > 1) {
            return Err(Error::InvalidVolume(format!(
                "mask value {} at index {index} outside {{0,1}}",
                mask.values[index]
            )));
        }
        Ok(mask)
    }

    /// Builds a mask without checking the label range; [`validate_study`]
    /// reports out-of-range labels as violations.
    pub fn new_unchecked_labels(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        values: Vec<u8>,
    ) -> Result<Self> {
        check_grid(dims, spacing_mm, values.len())?;
        Ok(LabelMask {
            dims,
            spacing_mm,
            values,
        })
    }

    pub fn empty(dims: [usize; 3], spacing_mm: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing_mm, vec![0; voxel_count(dims)])
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    values.push(f(x, y, z) as u8);
                }
            }
        }
        Self::new(dims, spacing_mm, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.values[linear_index(self.dims, x, y, z)] != 0
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn same_grid_as(&self, other: &LabelMask) -> bool {
        self.dims == other.dims && self.spacing_mm == other.spacing_mm
    }
}

/// One imaging timepoint: co-registered sequences plus an optional GTV mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub study_id: String,
    pub patient_id: String,
    pub sequences: BTreeMap<Sequence, Volume3D>,
    pub gtv: Option<LabelMask>,
}

impl Study {
    pub fn sequence(&self, seq: Sequence) -> Result<&Volume3D> {
        self.sequences
            .get(&seq)
            .ok_or_else(|| Error::MissingSequence(seq.to_string()))
    }

    /// Grid of the study, taken from T1C (always present in a valid study).
    pub fn grid(&self) -> Result<([usize; 3], [f64; 3])> {
        let t1c = self.sequence(Sequence::T1C)?;
        Ok((t1c.dims(), t1c.spacing_mm()))
    }

    pub fn gtv(&self) -> Result<&LabelMask> {
        self.gtv.as_ref().ok_or_else(|| Error::MissingSequenceFile {
            study_id: self.study_id.clone(),
            what: "gtv".into(),
            path: None,
        })
    }
}

/// A failed [`Study`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingT1c,
    GridMismatch {
        sequence: String,
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        expected_dims: [usize; 3],
        expected_spacing_mm: [f64; 3],
    },
    LabelRange { bad_voxels: usize, max_value: u8 },
    EmptyIds,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingT1c => write!(f, "T1C sequence missing"),
            Violation::GridMismatch {
                sequence,
                dims,
                spacing_mm,
                expected_dims,
                expected_spacing_mm,
            } => write!(
                f,
                "grid mismatch on {sequence}: {dims:?}@{spacing_mm:?} vs T1C {expected_dims:?}@{expected_spacing_mm:?}"
            ),
            Violation::LabelRange {
                bad_voxels,
                max_value,
            } => write!(
                f,
                "label range on gtv: {bad_voxels} voxels outside {{0,1}} (max {max_value})"
            ),
            Violation::EmptyIds => write!(f, "empty study or patient id"),
        }
    }
}

/// Checks every [`Study`] invariant; an empty list means the study is valid.
pub fn validate_study(study: &Study) -> Vec<Violation> {
    let mut out = Vec::new();
    if study.study_id.is_empty() || study.patient_id.is_empty() {
        out.push(Violation::EmptyIds);
    }
    let Some(t1c) = study.sequences.get(&Sequence::T1C) else {
        out.push(Violation::MissingT1c);
        return out;
    };
    let (dims, spacing) = (t1c.dims(), t1c.spacing_mm());
    for (seq, vol) in &study.sequences {
        if !vol.same_grid(dims, spacing) {
            out.push(Violation::GridMismatch {
                sequence: seq.to_string(),
                dims: vol.dims(),
                spacing_mm: vol.spacing_mm(),
                expected_dims: dims,
                expected_spacing_mm: spacing,
            });
        }
    }
    if let Some(gtv) = &study.gtv {
        if gtv.dims() != dims || gtv.spacing_mm() != spacing {
            out.push(Violation::GridMismatch {
                sequence: "gtv".into(),
                dims: gtv.dims(),
                spacing_mm: gtv.spacing_mm(),
                expected_dims: dims,
                expected_spacing_mm: spacing,
            });
        }
        let bad: Vec<u8> = gtv.values().iter().copied().filter(|&v| v > 1).collect();
        if !bad.is_empty() {
            out.push(Violation::LabelRange {
                bad_voxels: bad.len(),
                max_value: bad.iter().copied().max().unwrap_or(0),
            });
        }
    }
    out
}
