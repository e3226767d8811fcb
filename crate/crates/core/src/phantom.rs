//! Synthetic post-operative studies with analytically known tissue regions.
//!
//! Every phantom holds a resection cavity wrapped in an enhancing rim (the
//! target region), optionally surrounded by edema that is bright on T2/FL
//! only, and optionally a ventricle-like decoy that is bright on T2/FL.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{derive_seed, SeededRng};
use crate::volume::{
    linear_index, save_manifest, save_mask, save_volume, voxel_count, DatasetManifest, LabelMask, ManifestEntry,
    Sequence, Study, Volume3D,
};

/// Mean intensity of one tissue in each sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueIntensity {
    pub t1: f32,
    pub t2: f32,
    pub t1c: f32,
    pub fl: f32,
}

impl TissueIntensity {
    pub const fn new(t1: f32, t2: f32, t1c: f32, fl: f32) -> Self {
        TissueIntensity { t1, t2, t1c, fl }
    }

    pub fn get(&self, seq: Sequence) -> f32 {
        match seq {
            Sequence::T1 => self.t1,
            Sequence::T2 => self.t2,
            Sequence::T1C => self.t1c,
            Sequence::FL => self.fl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityTable {
    pub background: TissueIntensity,
    pub cavity: TissueIntensity,
    pub rim: TissueIntensity,
    pub edema: TissueIntensity,
    pub ventricle: TissueIntensity,
}

impl Default for IntensityTable {
    fn default() -> Self {
        IntensityTable {
            background: TissueIntensity::new(1.0, 1.0, 1.0, 1.0),
            cavity: TissueIntensity::new(0.4, 1.8, 0.3, 1.6),
            rim: TissueIntensity::new(1.2, 1.2, 2.0, 1.2),
            edema: TissueIntensity::new(1.0, 1.7, 1.0, 1.7),
            ventricle: TissueIntensity::new(1.0, 1.9, 1.0, 1.4),
        }
    }
}

impl IntensityTable {
    pub fn tissue(&self, t: Tissue) -> &TissueIntensity {
        match t {
            Tissue::Background => &self.background,
            Tissue::Cavity => &self.cavity,
            Tissue::Rim => &self.rim,
            Tissue::Edema => &self.edema,
            Tissue::Ventricle => &self.ventricle,
        }
    }
}

/// Region label painted into every voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tissue {
    Background = 0,
    Cavity = 1,
    Rim = 2,
    Edema = 3,
    Ventricle = 4,
}

impl Tissue {
    pub fn is_target(self) -> bool {
        matches!(self, Tissue::Cavity | Tissue::Rim)
    }
}

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi <= self.lo {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo >= 0.0 && self.hi >= self.lo
    }
}

/// Generator parameters. Lengths are in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub cavity_radius_mm: Range,
    /// Per-axis multiplier of the cavity radius.
    pub cavity_elongation: Range,
    pub rim_thickness_mm: Range,
    pub edema_probability: f64,
    /// Edema reach beyond the rim.
    pub edema_extent_mm: Range,
    pub ventricle_probability: f64,
    pub ventricle_radius_mm: Range,
    pub noise_sigma: f64,
    pub intensities: IntensityTable,
    /// Accepted fraction of target voxels.
    pub gtv_fraction: Range,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [64, 64, 64],
            spacing_mm: 1.0,
            cavity_radius_mm: Range::new(6.0, 10.0),
            cavity_elongation: Range::new(0.8, 1.2),
            rim_thickness_mm: Range::new(2.0, 3.0),
            edema_probability: 0.5,
            edema_extent_mm: Range::new(4.0, 8.0),
            ventricle_probability: 0.5,
            ventricle_radius_mm: Range::new(4.0, 7.0),
            noise_sigma: 0.1,
            intensities: IntensityTable::default(),
            gtv_fraction: Range::new(0.001, 0.2),
            seed: 18,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            self.cavity_radius_mm,
            self.cavity_elongation,
            self.rim_thickness_mm,
            self.edema_extent_mm,
            self.ventricle_radius_mm,
            self.gtv_fraction,
        ];
        let probs = [self.edema_probability, self.ventricle_probability];
        if self.dims.contains(&0)
            || !(self.spacing_mm > 0.0)
            || ranges.iter().any(|r| !r.valid())
            || self.cavity_radius_mm.lo <= 0.0
            || self.cavity_elongation.lo <= 0.0
            || probs.iter().any(|p| !(0.0..=1.0).contains(p))
            || !(self.noise_sigma >= 0.0)
        {
            return Err(Error::InvalidConfig(format!("invalid phantom spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    center: [f64; 3],
    semi_axes: [f64; 3],
}

impl Ellipsoid {
    /// Normalised radius of a voxel centre given in mm.
    fn rho(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.semi_axes[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn inflate(&self, by: f64) -> Ellipsoid {
        Ellipsoid {
            center: self.center,
            semi_axes: self.semi_axes.map(|s| s + by),
        }
    }
}

/// A generated study with its tissue labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub study: Study,
    /// One [`Tissue`] code per voxel, x-fastest.
    pub tissues: Vec<u8>,
}

impl Phantom {
    pub fn tissue_count(&self, t: Tissue) -> usize {
        self.tissues.iter().filter(|&&v| v == t as u8).count()
    }
}

fn place_center<R: Rng + ?Sized>(rng: &mut R, reach: [f64; 3], extent: [f64; 3]) -> Option<[f64; 3]> {
    let mut c = [0.0; 3];
    for a in 0..3 {
        let (lo, hi) = (reach[a], extent[a] - reach[a]);
        if hi < lo {
            return None;
        }
        c[a] = rng.random_range(lo..=hi);
    }
    Some(c)
}

/// Paints one phantom. Identifiers are left empty for the caller to fill.
pub fn generate_phantom<R: Rng + ?Sized>(spec: &PhantomSpec, rng: &mut R) -> Result<Phantom> {
    spec.validate()?;
    let dims = spec.dims;
    let h = spec.spacing_mm;
    // voxel centres sit at index * h; one voxel of margin on each side
    let extent = dims.map(|d| (d - 1) as f64 * h);

    let radius = spec.cavity_radius_mm.sample(rng);
    let semi = [0; 3].map(|_| radius * spec.cavity_elongation.sample(rng));
    let rim = spec.rim_thickness_mm.sample(rng);
    let has_edema = rng.random_bool(spec.edema_probability);
    let edema_reach = if has_edema { spec.edema_extent_mm.sample(rng) } else { 0.0 };
    let outer = rim + edema_reach;
    let reach = semi.map(|s| s + outer + h);
    let center = place_center(rng, reach, extent).ok_or_else(|| {
        Error::GeometryOverflow(format!("lesion reach {reach:?} mm does not fit extent {extent:?} mm"))
    })?;
    let cavity = Ellipsoid { center, semi_axes: semi };
    let gtv_shell = cavity.inflate(rim);
    let edema_shell = cavity.inflate(outer);

    let ventricle = if rng.random_bool(spec.ventricle_probability) {
        let r = spec.ventricle_radius_mm.sample(rng);
        // elongated, horn-like shape
        let axes = [r * 0.6, r * 1.6, r];
        let vreach = axes.map(|s| s + h);
        let clearance = edema_shell.inflate(h);
        let mut placed = None;
        for _ in 0..200 {
            let Some(c) = place_center(rng, vreach, extent) else { break };
            let v = Ellipsoid { center: c, semi_axes: axes };
            // separated when the bounding boxes of the two regions do not touch
            let apart = (0..3).any(|a| (c[a] - center[a]).abs() > axes[a] + clearance.semi_axes[a]);
            if apart {
                placed = Some(v);
                break;
            }
        }
        Some(placed.ok_or_else(|| Error::GeometryOverflow("no room for the ventricle decoy".into()))?)
    } else {
        None
    };

    let n = voxel_count(dims);
    let mut tissues = vec![Tissue::Background as u8; n];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x as f64 * h, y as f64 * h, z as f64 * h];
                let t = if cavity.rho(p) <= 1.0 {
                    Tissue::Cavity
                } else if gtv_shell.rho(p) <= 1.0 {
                    Tissue::Rim
                } else if has_edema && edema_shell.rho(p) <= 1.0 {
                    Tissue::Edema
                } else if ventricle.is_some_and(|v| v.rho(p) <= 1.0) {
                    Tissue::Ventricle
                } else {
                    Tissue::Background
                };
                tissues[linear_index(dims, x, y, z)] = t as u8;
            }
        }
    }

    let gtv_count = tissues.iter().filter(|&&t| t == Tissue::Cavity as u8 || t == Tissue::Rim as u8).count();
    let frac = gtv_count as f64 / n as f64;
    if gtv_count == 0 || frac < spec.gtv_fraction.lo || frac > spec.gtv_fraction.hi {
        return Err(Error::GeometryOverflow(format!(
            "target fraction {frac:.4} outside [{}, {}]",
            spec.gtv_fraction.lo, spec.gtv_fraction.hi
        )));
    }

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let spacing = [h; 3];
    let table = &spec.intensities;
    let codes = [Tissue::Background, Tissue::Cavity, Tissue::Rim, Tissue::Edema, Tissue::Ventricle];
    let mut sequences = BTreeMap::new();
    for seq in Sequence::ALL {
        let means: Vec<f32> = codes.iter().map(|&t| table.tissue(t).get(seq)).collect();
        let values = tissues
            .iter()
            .map(|&t| {
                let m = means[t as usize];
                if spec.noise_sigma > 0.0 {
                    m + noise.sample(rng) as f32
                } else {
                    m
                }
            })
            .collect();
        sequences.insert(seq, Volume3D::new(dims, spacing, values)?);
    }
    let gtv = LabelMask::new(dims, spacing, tissues.iter().map(|&t| (t == 1 || t == 2) as u8).collect())?;
    Ok(Phantom {
        study: Study {
            study_id: String::new(),
            patient_id: String::new(),
            sequences,
            gtv: Some(gtv),
        },
        tissues,
    })
}

pub fn study_id(index: usize) -> String {
    format!("phantom_{index:03}")
}

pub fn patient_id(index: usize) -> String {
    format!("patient_{index:03}")
}

/// Patient of study `i`: studies are dealt round-robin so every patient gets
/// at least one and counts differ by at most one.
pub fn patient_of(i: usize, n_patients: usize) -> usize {
    i % n_patients
}

/// Phantom `index` of a cohort; its generator is seeded from `(spec.seed, index)`.
pub fn cohort_member(spec: &PhantomSpec, index: usize, n_patients: usize) -> Result<Phantom> {
    let mut rng = SeededRng::new(derive_seed(spec.seed, index as u64));
    let mut p = generate_phantom(spec, &mut rng)?;
    p.study.study_id = study_id(index);
    p.study.patient_id = patient_id(patient_of(index, n_patients));
    Ok(p)
}

/// Writes `n_studies` phantoms grouped under `n_patients` patients, plus a
/// `manifest.json`, into `out_dir`. Returns the manifest.
pub fn generate_cohort(spec: &PhantomSpec, n_studies: usize, n_patients: usize, out_dir: &Path) -> Result<DatasetManifest> {
    if n_patients == 0 || n_studies < n_patients {
        return Err(Error::InvalidConfig(format!(
            "need n_studies >= n_patients >= 1, got {n_studies} studies for {n_patients} patients"
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(n_studies);
    for i in 0..n_studies {
        let p = cohort_member(spec, i, n_patients)?;
        let id = p.study.study_id.clone();
        let dir = out_dir.join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let base = PathBuf::from(&id);
        let rel = |name: &str| base.join(name);
        for (seq, vol) in &p.study.sequences {
            save_volume(vol, out_dir.join(rel(seq.as_str())))?;
        }
        if let Some(m) = &p.study.gtv {
            save_mask(m, out_dir.join(rel("gtv")))?;
        }
        entries.push(ManifestEntry {
            study_id: id,
            patient_id: p.study.patient_id.clone(),
            t1: Some(rel("T1")),
            t2: Some(rel("T2")),
            t1c: Some(rel("T1C")),
            fl: Some(rel("FL")),
            gtv: Some(rel("gtv")),
        });
    }
    let manifest = DatasetManifest {
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    save_manifest(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}
