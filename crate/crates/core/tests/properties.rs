use std::collections::BTreeMap;

use proptest::prelude::*;

use pocketseg::arch::{average_probabilities, count_parameters, ArchitectureSpec, DoubleUNetConfig, Network, PocketUNetConfig};
use pocketseg::harness::{make_folds, SplitRatios};
use pocketseg::metrics::{dice, evaluate_masks, fne, fpe, hd95};
use pocketseg::nn::Tensor;
use pocketseg::preprocess::{
    extract_patch, sliding_window_predict, zscore_normalize, PatchPredictor, ProbabilityVolume, SeededRng,
};
use pocketseg::volume::{
    linear_index, load_volume, save_volume, voxel_count, DatasetManifest, LabelMask, ManifestEntry, Sequence, Study,
    Volume3D,
};

fn mask_pair(max_dim: usize) -> impl Strategy<Value = (LabelMask, LabelMask)> {
    (2..=max_dim, 2..=max_dim, 2..=max_dim, 0.25f64..3.0, 0.25f64..3.0, 0.25f64..3.0).prop_flat_map(|(x, y, z, a, b, c)| {
        let n = x * y * z;
        (
            prop::collection::vec(prop::bool::weighted(0.3), n),
            prop::collection::vec(prop::bool::weighted(0.3), n),
        )
            .prop_map(move |(p, t)| {
                let to = |v: Vec<bool>| v.into_iter().map(u8::from).collect();
                (
                    LabelMask::new([x, y, z], [a, b, c], to(p)).unwrap(),
                    LabelMask::new([x, y, z], [a, b, c], to(t)).unwrap(),
                )
            })
    })
}

fn volume(max_dim: usize) -> impl Strategy<Value = Volume3D> {
    (1..=max_dim, 1..=max_dim, 1..=max_dim, 0.1f64..4.0).prop_flat_map(|(x, y, z, s)| {
        prop::collection::vec(-1.0e3f32..1.0e3, x * y * z)
            .prop_map(move |v| Volume3D::new([x, y, z], [s, s * 1.5, s * 0.5], v).unwrap())
    })
}

fn single_study(vols: Vec<(Sequence, Volume3D)>) -> Study {
    Study {
        study_id: "s".into(),
        patient_id: "p".into(),
        sequences: vols.into_iter().collect::<BTreeMap<_, _>>(),
        gtv: None,
    }
}

struct Constant(Vec<f32>);

impl PatchPredictor for Constant {
    fn in_channels(&self) -> usize {
        1
    }

    fn predict(&self, x: &Tensor<f32>) -> pocketseg::Result<Tensor<f32>> {
        let [d, h, w] = x.spatial();
        let n = d * h * w;
        let data = self.0.iter().flat_map(|&p| std::iter::repeat_n(p, n)).collect();
        Tensor::from_vec([1, self.0.len(), d, h, w], data)
    }
}

/// Softmax over two channels whose logits depend on the window-local position.
struct PositionDependent;

impl PatchPredictor for PositionDependent {
    fn in_channels(&self) -> usize {
        1
    }

    fn predict(&self, x: &Tensor<f32>) -> pocketseg::Result<Tensor<f32>> {
        let [d, h, w] = x.spatial();
        let n = d * h * w;
        let fg: Vec<f32> = (0..n).map(|i| 1.0 / (1.0 + (-(x.data()[i] + i as f32 * 0.01)).exp())).collect();
        let data = fg.iter().map(|p| 1.0 - p).chain(fg.iter().copied()).collect();
        Tensor::from_vec([1, 2, d, h, w], data)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn volume_round_trip_is_bitwise(v in volume(6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v");
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path).unwrap();
        prop_assert_eq!(back.dims(), v.dims());
        prop_assert_eq!(back.spacing_mm().map(f64::to_bits), v.spacing_mm().map(f64::to_bits));
        let bits = |x: &Volume3D| x.values().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&v));
    }

    #[test]
    fn zscore_ignores_affine_rescaling(v in volume(6), a in 0.1f32..10.0, b in -100.0f32..100.0) {
        let spread = v.values().iter().fold(f32::NEG_INFINITY, |m, &x| m.max(x))
            - v.values().iter().fold(f32::INFINITY, |m, &x| m.min(x));
        prop_assume!(spread > 1.0);
        let scaled = Volume3D::new(v.dims(), v.spacing_mm(), v.values().iter().map(|x| a * x + b).collect()).unwrap();
        let (n1, n2) = (zscore_normalize(&v).unwrap(), zscore_normalize(&scaled).unwrap());
        for (p, q) in n1.values().iter().zip(n2.values()) {
            prop_assert!((p - q).abs() < 1e-5 * p.abs().max(1.0), "{} vs {}", p, q);
        }
    }

    #[test]
    fn dice_is_symmetric_and_consistent((p, t) in mask_pair(8)) {
        prop_assert_eq!(dice(&p, &t).unwrap(), dice(&t, &p).unwrap());
        if !p.is_empty() && !t.is_empty() {
            let row = evaluate_masks("s", "m", &p, &t).unwrap();
            let (s, tc) = (p.count() as f64, t.count() as f64);
            let via_fne = 2.0 * (1.0 - row.fne.unwrap()) * tc / (s + tc);
            prop_assert!((row.dice - via_fne).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&row.dice));
            prop_assert!((0.0..=1.0).contains(&fpe(&p, &t).unwrap()));
            prop_assert!((0.0..=1.0).contains(&fne(&p, &t).unwrap()));
        }
    }

    #[test]
    fn hd95_symmetric_and_scales_with_spacing((p, t) in mask_pair(7), k in 0i32..4) {
        prop_assume!(!p.is_empty() && !t.is_empty());
        let h = hd95(&p, &t).unwrap();
        prop_assert_eq!(h, hd95(&t, &p).unwrap());
        prop_assert!(h >= 0.0);
        let alpha = 2f64.powi(k - 1);
        let scale = |m: &LabelMask| LabelMask::new(m.dims(), m.spacing_mm().map(|s| s * alpha), m.values().to_vec()).unwrap();
        prop_assert_eq!(hd95(&scale(&p), &scale(&t)).unwrap(), alpha * h);
    }

    #[test]
    fn folds_partition_any_dataset(n in 5usize..60, k in 2usize..6, seed in any::<u64>(), grouped in any::<bool>()) {
        prop_assume!(n >= k);
        let patients = (n / 2).max(k);
        let manifest = DatasetManifest {
            entries: (0..n)
                .map(|i| ManifestEntry {
                    study_id: format!("s{i:03}"),
                    patient_id: format!("p{:03}", i % patients),
                    t1: None,
                    t2: None,
                    t1c: Some("t1c".into()),
                    fl: None,
                    gtv: None,
                })
                .collect(),
            base_dir: ".".into(),
        };
        let f = make_folds(&manifest, k, &SplitRatios::default(), seed, grouped).unwrap();
        prop_assert_eq!(f.len(), k);
        let mut tested: Vec<String> = f.folds.values().flat_map(|s| s.test.clone()).collect();
        tested.sort();
        prop_assert_eq!(tested, manifest.study_ids());
        let sizes: Vec<usize> = f.folds.values().map(|s| s.test.len()).collect();
        if !grouped {
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        for s in f.folds.values() {
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
            prop_assert!(!s.train.is_empty());
        }
        prop_assert_eq!(&f, &make_folds(&manifest, k, &SplitRatios::default(), seed, grouped).unwrap());
    }

    #[test]
    fn patches_align_with_source(v in volume(9), seed in any::<u64>(), size in 1usize..5) {
        let dims = v.dims();
        prop_assume!(dims.iter().all(|&d| d >= size));
        let mut rng = SeededRng::new(seed);
        use rand::Rng;
        let origin = dims.map(|d| rng.random_range(0..=d - size));
        let mask = LabelMask::from_fn(dims, v.spacing_mm(), |x, y, z| (x + y + z) % 2 == 0).unwrap();
        let mut study = single_study(vec![(Sequence::T1C, v.clone())]);
        study.gtv = Some(mask.clone());
        let p = extract_patch(&study, &[Sequence::T1C], origin, size).unwrap();
        let label = p.label.as_ref().unwrap();
        for k in 0..size {
            for j in 0..size {
                for i in 0..size {
                    let local = (k * size + j) * size + i;
                    let (x, y, z) = (origin[0] + i, origin[1] + j, origin[2] + k);
                    prop_assert_eq!(p.channels[0][local].to_bits(), v.get(x, y, z).to_bits());
                    prop_assert_eq!(label[local], u8::from(mask.get(x, y, z)));
                }
            }
        }
    }

    #[test]
    fn sliding_window_is_a_convex_combination(v in volume(12), patch in 2usize..7, stride_frac in 0.2f64..1.0) {
        let stride = ((patch as f64 * stride_frac).ceil() as usize).clamp(1, patch);
        let study = single_study(vec![(Sequence::T1C, v)]);
        let out = sliding_window_predict(&PositionDependent, &study, &[Sequence::T1C], patch, stride).unwrap();
        let (bg, fg) = (out.class_plane(0), out.class_plane(1));
        for i in 0..bg.len() {
            prop_assert!((bg[i] + fg[i] - 1.0).abs() < 1e-5);
            prop_assert!((0.0..=1.0).contains(&fg[i]));
        }
        let constant = sliding_window_predict(&Constant(vec![0.3, 0.7]), &study, &[Sequence::T1C], patch, stride).unwrap();
        prop_assert!(constant.class_plane(1).iter().all(|&p| (p - 0.7).abs() < 1e-6));
    }

    #[test]
    fn ensemble_of_distributions_is_a_distribution(
        a in prop::collection::vec(0.0f32..=1.0, 1..64),
        w in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        use rand::Rng;
        let b: Vec<f32> = a.iter().map(|_| rng.random_range(0.0f32..=1.0)).collect();
        let pv = |fg: &[f32]| ProbabilityVolume::new([fg.len(), 1, 1], [1.0; 3], vec![fg.iter().map(|p| 1.0 - p).collect(), fg.to_vec()]).unwrap();
        let (pa, pb) = (pv(&a), pv(&b));
        let avg = average_probabilities(&pa, &pb, [w, 1.0 - w]).unwrap();
        let mask = avg.argmax_mask();
        let (ma, mb) = (pa.argmax_mask(), pb.argmax_mask());
        for i in 0..a.len() {
            prop_assert!((avg.class_plane(0)[i] + avg.class_plane(1)[i] - 1.0).abs() < 1e-5);
            if w > 0.0 && w < 1.0 && ma.values()[i] == mb.values()[i] && a[i] != 0.5 && b[i] != 0.5 {
                prop_assert_eq!(mask.values()[i], ma.values()[i]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn networks_preserve_spatial_shape(
        channels in 1usize..4,
        depth in 1usize..3,
        inputs in 1usize..3,
        mult in prop::array::uniform3(1usize..3),
        seed in any::<u64>(),
        double in any::<bool>(),
    ) {
        let spec = if double {
            ArchitectureSpec::Double(DoubleUNetConfig::symmetric(inputs, 1, channels, depth))
        } else {
            ArchitectureSpec::Pocket(PocketUNetConfig::new(inputs, channels, depth))
        };
        let c_in = spec.in_channels();
        let net = Network::<f32>::build(&spec, &mut SeededRng::new(seed)).unwrap();
        let unit = 1 << depth;
        let [d, h, w] = mult.map(|m| m * unit);
        let mut rng = SeededRng::new(seed ^ 1);
        use rand::Rng;
        let x = Tensor::from_vec([1, c_in, d, h, w], (0..c_in * d * h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let y = net.infer(&x).unwrap();
        prop_assert_eq!(y.shape(), [1, 2, d, h, w]);
        for i in 0..d * h * w {
            prop_assert!((y.plane(0, 0)[i] + y.plane(0, 1)[i] - 1.0).abs() < 1e-5);
        }
        // parameter count does not depend on the input grid
        let rebuilt = Network::<f32>::build(&spec, &mut SeededRng::new(seed.wrapping_add(1))).unwrap();
        prop_assert_eq!(count_parameters(&net), count_parameters(&rebuilt));
    }

    #[test]
    fn swapping_branches_keeps_the_shape(a in 1usize..4, b in 1usize..4, channels in 1usize..4, depth in 1usize..3) {
        let build = |x, y| Network::<f32>::build(&ArchitectureSpec::Double(DoubleUNetConfig::symmetric(x, y, channels, depth)), &mut SeededRng::new(0)).unwrap();
        let (ab, ba) = (build(a, b), build(b, a));
        prop_assert_eq!(count_parameters(&ab), count_parameters(&ba));
        prop_assert_eq!(ab.in_channels(), ba.in_channels());
    }
}

#[test]
fn coverage_helpers_agree_on_window_count() {
    let n = voxel_count([96, 96, 96]);
    let dims = [96usize; 3];
    let counts = pocketseg::preprocess::coverage_counts(dims, [64; 3], 32);
    assert_eq!(counts.len(), n);
    assert_eq!(counts[linear_index(dims, 48, 48, 48)], 8);
    assert_eq!(counts[linear_index(dims, 0, 0, 0)], 1);
}
